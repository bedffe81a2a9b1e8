//! Task-specific correctness judges.
//!
//! Every judge is total: malformed responses are simply incorrect, so a
//! sample's reward vector always has one entry per sampled response.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{reward_of, BBox, GoldAnswer, Sample};
use crate::{Error, Result};

/// Default IoU threshold for a grounding response to count as correct.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Default pixel budget for model inputs (896 x 896).
pub const DEFAULT_MAX_PIXELS: u64 = 802_816;

/// Sample metadata keys carrying the original image size of grounding samples.
pub const META_IMAGE_WIDTH: &str = "image_width";
pub const META_IMAGE_HEIGHT: &str = "image_height";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn pixels(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    /// Reads `image_width` / `image_height` from sample metadata, if both are
    /// present and parse as positive integers.
    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Option<Self>> {
        match (meta.get(META_IMAGE_WIDTH), meta.get(META_IMAGE_HEIGHT)) {
            (Some(w), Some(h)) => {
                let w: u32 = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad {META_IMAGE_WIDTH} `{w}`")))?;
                let h: u32 = h
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad {META_IMAGE_HEIGHT} `{h}`")))?;
                Ok(Some(ImageSize::new(w, h)?))
            }
            (None, None) => Ok(None),
            _ => Err(Error::invalid(format!(
                "metadata must carry both {META_IMAGE_WIDTH} and {META_IMAGE_HEIGHT} or neither"
            ))),
        }
    }
}

/// Takes the text after the last case-insensitive `answer:`, or the whole
/// response when the marker is absent.
pub fn extract_answer(response: &str) -> &str {
    const MARKER: &str = "answer:";
    // ASCII lowercasing keeps byte offsets aligned with the original.
    let lowered = response.to_ascii_lowercase();
    match lowered.rfind(MARKER) {
        Some(pos) => &response[pos + MARKER.len()..],
        None => response,
    }
}

/// Trim, strip trailing `.,;:!?`, lowercase.
pub fn normalize_answer(text: &str) -> String {
    text.trim()
        .trim_end_matches(['.', ',', ';', ':', '!', '?'])
        .trim()
        .to_lowercase()
}

/// Case-insensitive exact match of the extracted answer against the label.
pub fn verify_classification(response: &str, gold_label: &str) -> bool {
    let gold = normalize_answer(gold_label);
    !gold.is_empty() && normalize_answer(extract_answer(response)) == gold
}

static BOX_PATTERN: LazyLock<Regex> = LazyLock::new(|| {
    let num = r"(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)";
    Regex::new(&format!(
        r"\[\s*{num}\s*,\s*{num}\s*,\s*{num}\s*,\s*{num}\s*\]"
    ))
    .expect("static regex")
});

/// Extracts the first `[x1, y1, x2, y2]` group from free text. JSON objects
/// such as `{"bbox_2d": [5, 5, 50, 60]}` are covered because their array is a
/// bracketed four-number list. Corners are swapped into order when reversed.
pub fn parse_bbox(response: &str) -> Result<BBox> {
    for caps in BOX_PATTERN.captures_iter(response) {
        let mut v = [0.0f64; 4];
        for (slot, i) in v.iter_mut().zip(1..=4) {
            *slot = caps[i].parse().map_err(|_| Error::BoxParse)?;
        }
        let (x1, x2) = if v[0] <= v[2] { (v[0], v[2]) } else { (v[2], v[0]) };
        let (y1, y2) = if v[1] <= v[3] { (v[1], v[3]) } else { (v[3], v[1]) };
        if let Ok(b) = BBox::new(x1, y1, x2, y2) {
            return Ok(b);
        }
    }
    Err(Error::BoxParse)
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn verify_grounding(response: &str, gold: &BBox, threshold: f64) -> bool {
    match parse_bbox(response) {
        Ok(pred) => iou(&pred, gold) >= threshold,
        Err(_) => false,
    }
}

/// Largest square side that fits the pixel budget.
fn side_cap(max_pixels: u64) -> u64 {
    let mut s = (max_pixels as f64).sqrt() as u64;
    while s * s > max_pixels {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= max_pixels {
        s += 1;
    }
    s
}

/// Scale factor applied to an image so it fits both the pixel budget and the
/// per-side cap derived from it. `1.0` means the image is left alone.
pub fn rescale_factor(original: ImageSize, max_pixels: u64) -> f64 {
    let cap = side_cap(max_pixels);
    let within = original.pixels() <= max_pixels
        && u64::from(original.width) <= cap
        && u64::from(original.height) <= cap;
    if within {
        return 1.0;
    }
    let cap = cap as f64;
    (cap / f64::from(original.width))
        .min(cap / f64::from(original.height))
        .min(1.0)
}

/// Image size after rescaling, rounded to whole pixels.
pub fn rescaled_size(original: ImageSize, max_pixels: u64) -> ImageSize {
    let s = rescale_factor(original, max_pixels);
    ImageSize {
        width: ((f64::from(original.width) * s).round() as u32).max(1),
        height: ((f64::from(original.height) * s).round() as u32).max(1),
    }
}

/// Maps a box from original image coordinates into the rescaled model-input
/// space. Coordinates are rounded to the nearest pixel and clamped to the
/// scaled image.
pub fn rescale_box(b: &BBox, original: ImageSize, max_pixels: u64) -> Result<BBox> {
    if b.x2() > f64::from(original.width) || b.y2() > f64::from(original.height) {
        return Err(Error::invalid(format!(
            "box {b} lies outside the {}x{} image",
            original.width, original.height
        )));
    }
    let s = rescale_factor(original, max_pixels);
    if s == 1.0 {
        return Ok(*b);
    }
    let scaled = rescaled_size(original, max_pixels);
    let (w, h) = (f64::from(scaled.width), f64::from(scaled.height));
    let map = |v: f64, bound: f64| (v * s).round().clamp(0.0, bound);
    let mut x1 = map(b.x1(), w);
    let mut y1 = map(b.y1(), h);
    let mut x2 = map(b.x2(), w);
    let mut y2 = map(b.y2(), h);
    // Keep at least one pixel of extent after rounding.
    if x2 <= x1 {
        if x1 + 1.0 <= w {
            x2 = x1 + 1.0;
        } else {
            x1 = x2 - 1.0;
        }
    }
    if y2 <= y1 {
        if y1 + 1.0 <= h {
            y2 = y1 + 1.0;
        } else {
            y1 = y2 - 1.0;
        }
    }
    BBox::new(x1, y1, x2, y2)
}

/// Settings for [`verify_response`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub iou_threshold: f64,
    pub max_pixels: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            max_pixels: DEFAULT_MAX_PIXELS,
        }
    }
}

impl VerifyOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "IoU threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.max_pixels == 0 {
            return Err(Error::invalid("max_pixels must be positive"));
        }
        Ok(())
    }
}

/// The gold box in the coordinate space the model sees: rescaled when the
/// sample records its original image size, unchanged otherwise.
pub fn gold_box_in_model_space(sample: &Sample, gold: &BBox, max_pixels: u64) -> Result<BBox> {
    match ImageSize::from_meta(&sample.meta)? {
        Some(size) => rescale_box(gold, size, max_pixels),
        None => Ok(*gold),
    }
}

/// Scores one response against a sample's gold answer.
///
/// Grounding responses are compared with the gold box in model-input space.
/// Generic answers use the same normalized exact match as labels.
pub fn verify_response(sample: &Sample, response: &str, opts: &VerifyOptions) -> Result<f64> {
    sample.validate()?;
    let correct = match &sample.gold {
        GoldAnswer::Label(label) => verify_classification(response, label),
        GoldAnswer::Answer(answer) => verify_classification(response, answer),
        GoldAnswer::Box(gold) => {
            let gold = gold_box_in_model_space(sample, gold, opts.max_pixels)?;
            verify_grounding(response, &gold, opts.iou_threshold)
        }
    };
    Ok(reward_of(correct))
}
