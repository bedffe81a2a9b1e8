//! Difficulty buckets and curated training sets.
//!
//! A curated set is selected from verified response sets in three steps:
//! bucket by difficulty, optionally balance every bucket down to the smallest
//! one, then pick buckets according to the plan variant. All draws are seeded
//! through [`SeededRng`] sub-streams, so identical inputs and plans produce
//! byte-identical manifests and datasets.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::sha256_hex;
use crate::model::{DifficultyLabel, GoldAnswer, Sample, VerifiedResponseSet};
use crate::rng::{derive_seed, SeededRng};
use crate::verifiers::{gold_box_in_model_space, DEFAULT_MAX_PIXELS};
use crate::{Error, Result, TOOL_VERSION};

/// Which buckets make up the emitted set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    BucketOnly { bucket: DifficultyLabel },
    /// Medium only.
    SftM,
    /// Easy and medium; hard dropped.
    SftEm,
    /// Easy and medium plus enough hard samples that they make up `rho` of
    /// the emitted set. With a target size the total is fixed instead:
    /// `round(rho * target)` hard samples, the rest drawn from easy+medium.
    HardRatio { rho: f64 },
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    #[default]
    None,
    /// Subsample every bucket to the size of the smallest.
    MinSubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationPlan {
    pub variant: Variant,
    #[serde(default)]
    pub balance: Balance,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_size: Option<usize>,
}

impl CurationPlan {
    pub fn new(variant: Variant, seed: u64) -> Self {
        Self {
            variant,
            balance: Balance::None,
            seed,
            target_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Variant::HardRatio { rho } = self.variant {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::invalid(format!("hard ratio must lie in [0, 1], got {rho}")));
            }
        }
        Ok(())
    }
}

/// Sample ids per difficulty, each in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buckets {
    pub easy: Vec<String>,
    pub medium: Vec<String>,
    pub hard: Vec<String>,
}

impl Buckets {
    pub fn get(&self, label: DifficultyLabel) -> &[String] {
        match label {
            DifficultyLabel::Easy => &self.easy,
            DifficultyLabel::Medium => &self.medium,
            DifficultyLabel::Hard => &self.hard,
        }
    }

    fn get_mut(&mut self, label: DifficultyLabel) -> &mut Vec<String> {
        match label {
            DifficultyLabel::Easy => &mut self.easy,
            DifficultyLabel::Medium => &mut self.medium,
            DifficultyLabel::Hard => &mut self.hard,
        }
    }

    pub fn counts(&self) -> BucketCounts {
        BucketCounts {
            easy: self.easy.len(),
            medium: self.medium.len(),
            hard: self.hard.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.easy.len() + self.medium.len() + self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

impl BucketCounts {
    pub fn total(&self) -> usize {
        self.easy + self.medium + self.hard
    }
}

/// Partitions verified sets by their difficulty label.
pub fn bucket(verified: &[VerifiedResponseSet]) -> Buckets {
    let mut b = Buckets::default();
    for v in verified {
        b.get_mut(v.difficulty()).push(v.sample_id().to_string());
    }
    b
}

/// Uniformly subsamples (without replacement) every bucket to the size of the
/// smallest one. Surviving ids keep their input order.
pub fn balance_to_smallest(buckets: &Buckets, seed: u64) -> Result<Buckets> {
    if buckets.is_empty() {
        return Err(Error::invalid("cannot balance: every bucket is empty"));
    }
    let min = [&buckets.easy, &buckets.medium, &buckets.hard]
        .iter()
        .map(|b| b.len())
        .min()
        .unwrap_or(0);
    let mut out = Buckets::default();
    for label in DifficultyLabel::ALL {
        let src = buckets.get(label);
        let mut rng = SeededRng::stream(seed, &format!("balance/{label}"));
        let mut picked = rng.sample_indices(src.len(), min);
        picked.sort_unstable();
        *out.get_mut(label) = picked.into_iter().map(|i| src[i].clone()).collect();
    }
    Ok(out)
}

/// Number of hard samples to add to `em` easy+medium samples so the hard
/// share of the result is as close to `rho` as rounding allows.
pub fn hard_count_for_ratio(em: usize, rho: f64) -> Option<usize> {
    if rho >= 1.0 {
        return if em == 0 { None } else { Some(usize::MAX) };
    }
    Some((rho * em as f64 / (1.0 - rho)).round() as usize)
}

/// What was drawn from each bucket; ids are sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draws {
    pub easy: Vec<String>,
    pub medium: Vec<String>,
    pub hard: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationManifest {
    pub input_digest: String,
    pub plan: CurationPlan,
    /// Bucket sizes before balancing.
    pub bucket_counts: BucketCounts,
    /// Bucket sizes after balancing (equal to `bucket_counts` without it).
    pub available_counts: BucketCounts,
    pub emitted_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_hard_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_mixing: Option<String>,
    pub draws: Draws,
    pub tool_version: String,
}

impl CurationManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Sidecar manifest path for an emitted dataset: `out.jsonl` -> `out.manifest.json`.
pub fn manifest_path_for(dataset: &Path) -> PathBuf {
    let stem = dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuratedSet {
    /// Selected sample ids in seeded shuffled order.
    pub ids: Vec<String>,
    pub manifest: CurationManifest,
}

/// Digest over the sample ids and rewards of the verified input, in order.
pub fn verified_digest(verified: &[VerifiedResponseSet]) -> String {
    let mut buf = String::new();
    for v in verified {
        buf.push_str(v.sample_id());
        buf.push('\t');
        for r in v.rewards() {
            buf.push(if *r == 1.0 { '1' } else { '0' });
        }
        buf.push('\n');
    }
    sha256_hex(buf.as_bytes())
}

/// One uniform subsample of `target` ids over the concatenated draws.
fn subsample(draws: Draws, target: usize, seed: u64) -> Draws {
    let mut pool: Vec<(DifficultyLabel, String)> = Vec::new();
    pool.extend(draws.easy.into_iter().map(|id| (DifficultyLabel::Easy, id)));
    pool.extend(draws.medium.into_iter().map(|id| (DifficultyLabel::Medium, id)));
    pool.extend(draws.hard.into_iter().map(|id| (DifficultyLabel::Hard, id)));
    let mut rng = SeededRng::stream(seed, "target-size");
    let mut out = Draws::default();
    for i in rng.sample_indices(pool.len(), target) {
        let (label, id) = &pool[i];
        match label {
            DifficultyLabel::Easy => out.easy.push(id.clone()),
            DifficultyLabel::Medium => out.medium.push(id.clone()),
            DifficultyLabel::Hard => out.hard.push(id.clone()),
        }
    }
    out
}

/// Selects the curated id list for `plan` and records how it was drawn.
pub fn build_curated_set(verified: &[VerifiedResponseSet], plan: &CurationPlan) -> Result<CuratedSet> {
    plan.validate()?;
    let full = bucket(verified);
    let available = match plan.balance {
        Balance::None => full.clone(),
        Balance::MinSubset => balance_to_smallest(&full, derive_seed(plan.seed, "balance"))?,
    };

    let mut draws = Draws::default();
    let mut achieved_hard_ratio = None;
    let mut hard_mixing = None;
    match plan.variant {
        Variant::BucketOnly { bucket } => match bucket {
            DifficultyLabel::Easy => draws.easy = available.easy.clone(),
            DifficultyLabel::Medium => draws.medium = available.medium.clone(),
            DifficultyLabel::Hard => draws.hard = available.hard.clone(),
        },
        Variant::SftM => draws.medium = available.medium.clone(),
        Variant::SftEm => {
            draws.easy = available.easy.clone();
            draws.medium = available.medium.clone();
        }
        Variant::Full => {
            draws.easy = available.easy.clone();
            draws.medium = available.medium.clone();
            draws.hard = available.hard.clone();
        }
        Variant::HardRatio { rho } => {
            let em = available.easy.len() + available.medium.len();
            let h = available.hard.len();
            let infeasible = || Error::InfeasibleHardRatio {
                requested: rho,
                hard_available: h,
                max_achievable: if em + h == 0 { 0.0 } else { h as f64 / (em + h) as f64 },
            };
            let (k, kept_em) = match plan.target_size {
                Some(target) => {
                    let k = (rho * target as f64).round() as usize;
                    if k > h {
                        return Err(infeasible());
                    }
                    if target - k > em {
                        return Err(Error::InfeasiblePlan(format!(
                            "target size {target} at hard ratio {rho} needs {} easy+medium samples, {em} available",
                            target - k
                        )));
                    }
                    (k, target - k)
                }
                None => match hard_count_for_ratio(em, rho) {
                    Some(k) if k <= h => (k, em),
                    Some(_) => return Err(infeasible()),
                    // rho = 1 with no easy/medium data: everything hard
                    None if h > 0 => (h, em),
                    None => return Err(infeasible()),
                },
            };
            draws.easy = available.easy.clone();
            draws.medium = available.medium.clone();
            if kept_em < em {
                draws = subsample(draws, kept_em, plan.seed);
            }
            let mut rng = SeededRng::stream(plan.seed, "hard-ratio/draw");
            draws.hard = rng
                .sample_indices(h, k)
                .into_iter()
                .map(|i| available.hard[i].clone())
                .collect();
            let total = kept_em + k;
            achieved_hard_ratio = Some(if total == 0 { 0.0 } else { k as f64 / total as f64 });
            hard_mixing = Some(if plan.target_size.is_some() {
                "total fixed; easy+medium subsampled, hard drawn".to_string()
            } else {
                "easy+medium kept whole; hard drawn and added".to_string()
            });
        }
    }

    if let (Some(target), false) = (plan.target_size, matches!(plan.variant, Variant::HardRatio { .. })) {
        let selected = draws.easy.len() + draws.medium.len() + draws.hard.len();
        if target > selected {
            return Err(Error::InfeasiblePlan(format!(
                "target size {target} exceeds the {selected} samples the plan selects"
            )));
        }
        draws = subsample(draws, target, plan.seed);
    }

    let mut ids: Vec<String> = draws
        .easy
        .iter()
        .chain(&draws.medium)
        .chain(&draws.hard)
        .cloned()
        .collect();
    SeededRng::stream(plan.seed, "shuffle").shuffle(&mut ids);

    draws.easy.sort();
    draws.medium.sort();
    draws.hard.sort();

    let manifest = CurationManifest {
        input_digest: verified_digest(verified),
        plan: plan.clone(),
        bucket_counts: full.counts(),
        available_counts: available.counts(),
        emitted_count: ids.len(),
        achieved_hard_ratio,
        hard_mixing,
        draws,
        tool_version: TOOL_VERSION.to_string(),
    };
    Ok(CuratedSet { ids, manifest })
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: String,
}

#[derive(Serialize)]
struct SftRecord<'a> {
    messages: [Message<'a>; 2],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    images: Vec<&'a str>,
}

/// Placeholder marking where the image goes in the user turn.
pub const IMAGE_PLACEHOLDER: &str = "<image>";

fn fmt_coord(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Assistant-turn text for a sample's gold answer. Boxes are mapped into
/// model-input space first.
pub fn render_gold(sample: &Sample, max_pixels: u64) -> Result<String> {
    Ok(match &sample.gold {
        GoldAnswer::Label(s) | GoldAnswer::Answer(s) => s.clone(),
        GoldAnswer::Box(b) => {
            let b = gold_box_in_model_space(sample, b, max_pixels)?;
            let c = b.coords();
            format!(
                "[{}, {}, {}, {}]",
                fmt_coord(c[0]),
                fmt_coord(c[1]),
                fmt_coord(c[2]),
                fmt_coord(c[3])
            )
        }
    })
}

/// One chat-format SFT record.
pub fn sft_record_json(sample: &Sample, max_pixels: u64) -> Result<String> {
    let user = match &sample.image_ref {
        Some(_) => format!("{IMAGE_PLACEHOLDER}{}", sample.prompt),
        None => sample.prompt.clone(),
    };
    let rec = SftRecord {
        messages: [
            Message {
                role: "user",
                content: user,
            },
            Message {
                role: "assistant",
                content: render_gold(sample, max_pixels)?,
            },
        ],
        images: sample.image_ref.iter().map(String::as_str).collect(),
    };
    Ok(serde_json::to_string(&rec)?)
}

/// Writes the curated ids as chat-format JSONL, in the given order.
pub fn emit_sft_dataset(ids: &[String], samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    emit_sft_dataset_with(ids, samples, path, DEFAULT_MAX_PIXELS)
}

pub fn emit_sft_dataset_with(
    ids: &[String],
    samples: &[Sample],
    path: impl AsRef<Path>,
    max_pixels: u64,
) -> Result<()> {
    let path = path.as_ref();
    let index: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut out = String::new();
    for id in ids {
        let sample = index.get(id.as_str()).ok_or_else(|| Error::UnknownId(id.clone()))?;
        out.push_str(&sft_record_json(sample, max_pixels)?);
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Histogram of difficulty labels, with every label present.
pub fn difficulty_histogram(verified: &[VerifiedResponseSet]) -> BTreeMap<DifficultyLabel, usize> {
    let mut h: BTreeMap<DifficultyLabel, usize> =
        DifficultyLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for v in verified {
        *h.entry(v.difficulty()).or_default() += 1;
    }
    h
}
