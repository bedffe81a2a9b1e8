//! Synthetic classification tasks with an in-distribution and a rotated
//! out-of-distribution test split.

use dcsft_core::rng::SeededRng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub dim: usize,
    pub classes: usize,
    pub n_train: usize,
    pub n_id_test: usize,
    pub n_ood_test: usize,
    /// Radius of the sphere the class prototypes are drawn on.
    pub proto_scale: f64,
    pub noise_sigma: f64,
    /// Radians.
    pub ood_rotation_angle: f64,
    /// Fraction of training episodes whose label is moved to a wrong class.
    pub label_noise_rate: f64,
    /// Fraction of training episodes placed between their prototype and a
    /// random other one.
    pub ambiguity_rate: f64,
    /// Range of the pull toward the other prototype for ambiguous episodes;
    /// 0.5 is the midpoint.
    pub ambiguity_mix: [f64; 2],
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            classes: 10,
            n_train: 2000,
            n_id_test: 2000,
            n_ood_test: 2000,
            proto_scale: 1.0,
            noise_sigma: 0.15,
            ood_rotation_angle: 0.5,
            label_noise_rate: 0.15,
            ambiguity_rate: 0.0,
            ambiguity_mix: [0.3, 0.5],
            seed: 0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(LabError::invalid(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.dim < 2 {
            return Err(LabError::invalid("the rotation plane needs at least 2 feature dimensions"));
        }
        if !(0.0..0.5).contains(&self.label_noise_rate) {
            return Err(LabError::invalid(format!(
                "label noise rate must lie in [0, 0.5), got {}",
                self.label_noise_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.ambiguity_rate) {
            return Err(LabError::invalid(format!(
                "ambiguity rate must lie in [0, 1], got {}",
                self.ambiguity_rate
            )));
        }
        let [lo, hi] = self.ambiguity_mix;
        if !(0.0 <= lo && lo <= hi && hi <= 0.5) {
            return Err(LabError::invalid(format!(
                "ambiguity mix must satisfy 0 <= lo <= hi <= 0.5, got [{lo}, {hi}]"
            )));
        }
        if !(self.proto_scale > 0.0 && self.proto_scale.is_finite()) {
            return Err(LabError::invalid("prototype scale must be > 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(LabError::invalid("noise sigma must be >= 0"));
        }
        if !self.ood_rotation_angle.is_finite() {
            return Err(LabError::invalid("rotation angle must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEpisode {
    pub x: Vec<f64>,
    pub gold_class: usize,
    /// Label was moved to a wrong class at generation.
    pub is_noised: bool,
    /// Input was placed toward another class's prototype.
    pub is_ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabTask {
    pub prototypes: Vec<Vec<f64>>,
    /// Orthonormal basis of the OOD rotation plane.
    pub rotation_plane: [Vec<f64>; 2],
    pub train: Vec<LabEpisode>,
    pub id_test: Vec<LabEpisode>,
    pub ood_test: Vec<LabEpisode>,
}

fn normal_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Rotates `x` by `angle` inside the plane spanned by orthonormal `u`, `v`.
pub fn rotate_in_plane(x: &[f64], u: &[f64], v: &[f64], angle: f64) -> Vec<f64> {
    let (a, b) = (dot(x, u), dot(x, v));
    let (s, c) = angle.sin_cos();
    let (ra, rb) = (c * a - s * b, s * a + c * b);
    x.iter()
        .zip(u.iter().zip(v))
        .map(|(xi, (ui, vi))| xi + (ra - a) * ui + (rb - b) * vi)
        .collect()
}

fn other_class(rng: &mut SeededRng, class: usize, classes: usize) -> usize {
    (class + 1 + rng.below(classes as u64 - 1) as usize) % classes
}

fn test_split(rng: &mut SeededRng, spec: &SyntheticTaskSpec, centers: &[Vec<f64>], n: usize) -> Vec<LabEpisode> {
    (0..n)
        .map(|_| {
            let class = rng.below(spec.classes as u64) as usize;
            let x = centers[class]
                .iter()
                .map(|c| c + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            LabEpisode {
                x,
                gold_class: class,
                is_noised: false,
                is_ambiguous: false,
            }
        })
        .collect()
}

/// Draws prototypes, the rotation plane and all three splits from
/// `spec.seed`. Every split has its own stream, so changing one count does
/// not perturb the others.
pub fn gen_task(spec: &SyntheticTaskSpec) -> Result<LabTask> {
    spec.validate()?;
    let (d, c) = (spec.dim, spec.classes);

    let mut rng = SeededRng::stream(spec.seed, "task/prototypes");
    let prototypes: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            let mut p = normal_vec(&mut rng, d);
            normalize(&mut p);
            p.iter().map(|v| v * spec.proto_scale).collect()
        })
        .collect();

    let mut rng = SeededRng::stream(spec.seed, "task/rotation");
    let mut u = normal_vec(&mut rng, d);
    normalize(&mut u);
    let mut v = normal_vec(&mut rng, d);
    let proj = dot(&u, &v);
    for (vi, ui) in v.iter_mut().zip(&u) {
        *vi -= proj * ui;
    }
    normalize(&mut v);

    let mut rng = SeededRng::stream(spec.seed, "task/train");
    let [lo, hi] = spec.ambiguity_mix;
    let mut train: Vec<LabEpisode> = (0..spec.n_train)
        .map(|_| {
            let class = rng.below(c as u64) as usize;
            let ambiguous = spec.ambiguity_rate > 0.0 && rng.unit_f64() < spec.ambiguity_rate;
            let center: Vec<f64> = if ambiguous {
                let other = other_class(&mut rng, class, c);
                let lambda = lo + (hi - lo) * rng.unit_f64();
                prototypes[class]
                    .iter()
                    .zip(&prototypes[other])
                    .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                    .collect()
            } else {
                prototypes[class].clone()
            };
            let x = center
                .iter()
                .map(|m| m + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            LabEpisode {
                x,
                gold_class: class,
                is_noised: false,
                is_ambiguous: ambiguous,
            }
        })
        .collect();

    let mut rng = SeededRng::stream(spec.seed, "task/label-noise");
    let flips = (spec.label_noise_rate * spec.n_train as f64).round() as usize;
    for i in rng.sample_indices(spec.n_train, flips) {
        let ep = &mut train[i];
        ep.gold_class = other_class(&mut rng, ep.gold_class, c);
        ep.is_noised = true;
    }

    let mut rng = SeededRng::stream(spec.seed, "task/id-test");
    let id_test = test_split(&mut rng, spec, &prototypes, spec.n_id_test);

    let rotated: Vec<Vec<f64>> = prototypes
        .iter()
        .map(|p| rotate_in_plane(p, &u, &v, spec.ood_rotation_angle))
        .collect();
    let mut rng = SeededRng::stream(spec.seed, "task/ood-test");
    let ood_test = test_split(&mut rng, spec, &rotated, spec.n_ood_test);

    Ok(LabTask {
        prototypes,
        rotation_plane: [u, v],
        train,
        id_test,
        ood_test,
    })
}
