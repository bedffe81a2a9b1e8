//! Linear softmax policy over `C` classes.

use serde::{Deserialize, Serialize};

use crate::{LabError, Result};

/// `C x (d + 1)` weights, row-major, last column the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    temperature: f64,
}

impl SoftmaxPolicy {
    /// All-zero weights: the uniform policy.
    pub fn new(classes: usize, dim: usize, temperature: f64) -> Result<Self> {
        Self::from_weights(classes, dim, vec![0.0; classes * (dim + 1)], temperature)
    }

    pub fn from_weights(classes: usize, dim: usize, weights: Vec<f64>, temperature: f64) -> Result<Self> {
        if classes < 2 {
            return Err(LabError::invalid(format!("need at least 2 classes, got {classes}")));
        }
        if weights.len() != classes * (dim + 1) {
            return Err(LabError::invalid(format!(
                "expected {} weights for {classes} classes and {dim} features, got {}",
                classes * (dim + 1),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(LabError::invalid("weights must be finite"));
        }
        check_temperature(temperature)?;
        Ok(Self {
            classes,
            dim,
            weights,
            temperature,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        check_temperature(temperature)?;
        self.temperature = temperature;
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }


    /// Row stride: `d + 1`.
    pub fn cols(&self) -> usize {
        self.dim + 1
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(LabError::invalid(format!(
                "input has {} features, policy expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `W [x; 1]`, before temperature scaling.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.scores_unchecked(x))
    }

    pub(crate) fn scores_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.cols())
            .map(|row| row[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[self.dim])
            .collect()
    }

    /// Log-probabilities `log softmax(W [x; 1] / tau)`.
    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(log_softmax(&self.scores_unchecked(x), self.temperature))
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.probs_unchecked(x))
    }

    pub(crate) fn probs_unchecked(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores_unchecked(x), self.temperature)
    }

    /// Greedy class; ties go to the lowest index.
    pub fn greedy(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        Ok(argmax(&self.scores_unchecked(x)))
    }

    /// `W -= lr * grad`. Zero gradient entries leave their weight untouched,
    /// bit for bit.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.weights.len() {
            return Err(LabError::invalid(format!(
                "gradient has {} entries, policy has {}",
                grad.len(),
                self.weights.len()
            )));
        }
        for (w, g) in self.weights.iter_mut().zip(grad) {
            if *g != 0.0 {
                *w -= lr * g;
            }
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(LabError::invalid("update produced non-finite weights"));
        }
        Ok(())
    }
}

/// `softmax(W [x; 1] / tau)`.
pub fn policy_probs(policy: &SoftmaxPolicy, x: &[f64]) -> Result<Vec<f64>> {
    policy.probs(x)
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::invalid(format!("temperature must be > 0, got {t}")));
    }
    Ok(())
}

pub(crate) fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

pub(crate) fn log_softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = scores.iter().map(|s| (s - max) / temperature).collect();
    let lse = shifted.iter().map(|z| z.exp()).sum::<f64>().ln();
    shifted.into_iter().map(|z| z - lse).collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

pub fn frobenius_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}
