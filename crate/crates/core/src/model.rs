//! Domain types shared by the curation pipeline and the micro-lab.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// What kind of judge a sample needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Grounding,
    Generic,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Grounding => "grounding",
            TaskKind::Generic => "generic",
        })
    }
}

/// Axis-aligned box in pixel coordinates, origin top-left.
///
/// Always satisfies `0 <= x1 < x2` and `0 <= y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let all_finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid("box coordinates must be finite"));
        }
        if x1 < 0.0 || y1 < 0.0 {
            return Err(Error::invalid(format!(
                "box coordinates must be non-negative, got [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::invalid(format!(
                "box must satisfy x1 < x2 and y1 < y2, got [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Ground truth for one sample. Serialized as `{"label": ..}`, `{"box": [..]}`
/// or `{"answer": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldAnswer {
    Label(String),
    Box(BBox),
    Answer(String),
}

impl GoldAnswer {
    /// The task kind this variant belongs to.
    pub fn task_kind(&self) -> TaskKind {
        match self {
            GoldAnswer::Label(_) => TaskKind::Classification,
            GoldAnswer::Box(_) => TaskKind::Grounding,
            GoldAnswer::Answer(_) => TaskKind::Generic,
        }
    }
}

/// One training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub task_kind: TaskKind,
    pub prompt: String,
    pub image_ref: Option<String>,
    pub gold: GoldAnswer,
    pub meta: BTreeMap<String, String>,
}

impl Sample {
    /// Checks the per-sample invariants: non-empty id and a gold variant that
    /// matches the task kind.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("sample id must be non-empty"));
        }
        if self.gold.task_kind() != self.task_kind {
            return Err(Error::invalid(format!(
                "sample `{}`: gold answer is a {} answer but task is {}",
                self.id,
                self.gold.task_kind(),
                self.task_kind
            )));
        }
        if let GoldAnswer::Label(l) | GoldAnswer::Answer(l) = &self.gold {
            if l.trim().is_empty() {
                return Err(Error::invalid(format!(
                    "sample `{}`: gold answer must be non-empty",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// How responses are drawn from the model under assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub g: usize,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model_id: String,
}

impl SamplingParams {
    pub const DEFAULT_G: usize = 8;
    pub const DEFAULT_TEMPERATURE: f64 = 0.9;
    pub const DEFAULT_TOP_P: f64 = 1.0;

    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            g: Self::DEFAULT_G,
            temperature: Self::DEFAULT_TEMPERATURE,
            top_p: Self::DEFAULT_TOP_P,
            seed: None,
            model_id: model_id.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g < 2 {
            return Err(Error::invalid(format!(
                "g must be at least 2 (got {}); the taxonomy is degenerate for a single response",
                self.g
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::invalid(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

/// Model-perceived difficulty of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLabel {
    Easy,
    Medium,
    Hard,
}

impl DifficultyLabel {
    pub const ALL: [DifficultyLabel; 3] = [
        DifficultyLabel::Easy,
        DifficultyLabel::Medium,
        DifficultyLabel::Hard,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DifficultyLabel::Easy => "easy",
            DifficultyLabel::Medium => "medium",
            DifficultyLabel::Hard => "hard",
        }
    }
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DifficultyLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(DifficultyLabel::Easy),
            "medium" => Ok(DifficultyLabel::Medium),
            "hard" => Ok(DifficultyLabel::Hard),
            other => Err(Error::invalid(format!("unknown difficulty `{other}`"))),
        }
    }
}

/// Easy when every response is correct, Hard when none is, Medium otherwise.
///
/// Rewards must be binary; anything other than exactly `0.0` or `1.0` is
/// rejected.
pub fn classify_difficulty(rewards: &[f64]) -> Result<DifficultyLabel> {
    if rewards.is_empty() {
        return Err(Error::invalid("cannot classify an empty reward list"));
    }
    if let Some(bad) = rewards.iter().find(|r| **r != 0.0 && **r != 1.0) {
        return Err(Error::invalid(format!("rewards must be 0 or 1, got {bad}")));
    }
    let correct = rewards.iter().filter(|r| **r == 1.0).count();
    Ok(if correct == rewards.len() {
        DifficultyLabel::Easy
    } else if correct == 0 {
        DifficultyLabel::Hard
    } else {
        DifficultyLabel::Medium
    })
}

/// Binary rule-based reward.
pub fn reward_of(correct: bool) -> f64 {
    if correct {
        1.0
    } else {
        0.0
    }
}

/// A sample's `g` sampled responses, their rewards and the derived label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVerified")]
pub struct VerifiedResponseSet {
    sample_id: String,
    responses: Vec<String>,
    rewards: Vec<f64>,
    difficulty: DifficultyLabel,
    params: SamplingParams,
}

#[derive(Deserialize)]
struct RawVerified {
    sample_id: String,
    responses: Vec<String>,
    rewards: Vec<f64>,
    difficulty: DifficultyLabel,
    params: SamplingParams,
}

impl TryFrom<RawVerified> for VerifiedResponseSet {
    type Error = Error;

    fn try_from(raw: RawVerified) -> Result<Self> {
        let v = VerifiedResponseSet::new(raw.sample_id, raw.responses, raw.rewards, raw.params)?;
        if v.difficulty != raw.difficulty {
            return Err(Error::invalid(format!(
                "sample `{}`: stored difficulty {} disagrees with rewards ({})",
                v.sample_id, raw.difficulty, v.difficulty
            )));
        }
        Ok(v)
    }
}

impl VerifiedResponseSet {
    /// Builds a set and derives its difficulty. Fails unless
    /// `|responses| = |rewards| = params.g`.
    pub fn new(
        sample_id: impl Into<String>,
        responses: Vec<String>,
        rewards: Vec<f64>,
        params: SamplingParams,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        if responses.len() != params.g || rewards.len() != params.g {
            return Err(Error::invalid(format!(
                "sample `{sample_id}`: expected {} responses and rewards, got {} and {}",
                params.g,
                responses.len(),
                rewards.len()
            )));
        }
        let difficulty = classify_difficulty(&rewards)?;
        Ok(Self {
            sample_id,
            responses,
            rewards,
            difficulty,
            params,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }
    pub fn responses(&self) -> &[String] {
        &self.responses
    }
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }
    pub fn difficulty(&self) -> DifficultyLabel {
        self.difficulty
    }
    pub fn params(&self) -> &SamplingParams {
        &self.params
    }
    pub fn g(&self) -> usize {
        self.rewards.len()
    }
    pub fn correct_count(&self) -> usize {
        self.rewards.iter().filter(|r| **r == 1.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn taxonomy_examples() {
        assert_eq!(classify_difficulty(&[1.0; 8]).unwrap(), DifficultyLabel::Easy);
        assert_eq!(classify_difficulty(&[0.0; 8]).unwrap(), DifficultyLabel::Hard);
        let mixed = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(classify_difficulty(&mixed).unwrap(), DifficultyLabel::Medium);
    }

    #[test]
    fn empty_and_non_binary_rejected() {
        assert!(matches!(classify_difficulty(&[]), Err(Error::InvalidInput(_))));
        assert!(classify_difficulty(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn reward_rule() {
        assert_eq!(reward_of(true), 1.0);
        assert_eq!(reward_of(false), 0.0);
        let piped = reward_of(crate::verifiers::verify_classification("cat", "cat"));
        assert_eq!(piped, 1.0);
    }

    #[test]
    fn bbox_invariants() {
        assert!(BBox::new(0.0, 0.0, 1.0, 1.0).is_ok());
        assert!(BBox::new(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 2.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gold_serializes_as_single_key_object() {
        let g = GoldAnswer::Box(BBox::new(1.0, 2.0, 3.0, 4.0).unwrap());
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"{"box":[1.0,2.0,3.0,4.0]}"#);
        let l: GoldAnswer = serde_json::from_str(r#"{"label":"cat"}"#).unwrap();
        assert_eq!(l, GoldAnswer::Label("cat".into()));
        assert!(serde_json::from_str::<GoldAnswer>(r#"{"box":[3,2,1,0]}"#).is_err());
    }

    #[test]
    fn sampling_params_need_two_responses() {
        let mut p = SamplingParams::new("m");
        assert!(p.validate().is_ok());
        p.g = 1;
        assert!(p.validate().is_err());
        p.g = 8;
        p.top_p = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn verified_set_checks_lengths_and_stored_label() {
        let p = SamplingParams {
            g: 2,
            ..SamplingParams::new("m")
        };
        assert!(VerifiedResponseSet::new("a", vec!["x".into()], vec![1.0], p.clone()).is_err());
        let v = VerifiedResponseSet::new("a", vec!["x".into(), "y".into()], vec![1.0, 0.0], p)
            .unwrap();
        assert_eq!(v.difficulty(), DifficultyLabel::Medium);
        let mut json = serde_json::to_value(&v).unwrap();
        json["difficulty"] = "easy".into();
        assert!(serde_json::from_value::<VerifiedResponseSet>(json).is_err());
    }

    proptest! {
        #[test]
        fn label_is_permutation_invariant_and_consistent_with_sum(
            bits in proptest::collection::vec(any::<bool>(), 1..32),
            rot in 0usize..32,
        ) {
            let rewards: Vec<f64> = bits.iter().map(|b| reward_of(*b)).collect();
            let mut permuted = rewards.clone();
            permuted.rotate_left(rot % rewards.len());
            permuted.reverse();
            let label = classify_difficulty(&rewards).unwrap();
            prop_assert_eq!(label, classify_difficulty(&permuted).unwrap());
            let sum: f64 = rewards.iter().sum();
            let g = rewards.len() as f64;
            match label {
                DifficultyLabel::Easy => prop_assert_eq!(sum, g),
                DifficultyLabel::Hard => prop_assert_eq!(sum, 0.0),
                DifficultyLabel::Medium => prop_assert!(sum > 0.0 && sum < g),
            }
        }
    }
}
