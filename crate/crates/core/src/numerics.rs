//! Stable softmax-family primitives and the logit-distance quantities.
//!
//! Everything here works in `f64`. The bound checks in [`check_logit_distance_bounds`]
//! rely on that headroom.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for accepting a vector as a point on the probability simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Raw pre-softmax activations for `K >= 2` classes. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain(format!(
                "logit vector needs at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!("logit {k} is not finite ({v})")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Number of classes `K`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        max_of(&self.0)
    }

    /// Lowest index attaining the maximum logit.
    pub fn argmax(&self) -> usize {
        argmax_of(&self.0)
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LogitVector> for Vec<f64> {
    fn from(l: LogitVector) -> Self {
        l.0
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates entries in `[0, 1]` summing to one within [`SIMPLEX_TOLERANCE`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("empty probability vector".into()));
        }
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::Contract(format!(
                "probability {k} outside [0, 1] ({v})"
            )));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Contract(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        max_of(&self.0)
    }
}

/// Gaps `max_j l_j - l_k` between the winning logit and every class.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector(Vec<f64>);

impl DistanceVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn max(&self) -> f64 {
        max_of(&self.0)
    }
}

/// Result of checking `KL(u||s) <= mean(d) <= KL(u||s) + log K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub mean_distance: f64,
    pub kl_uniform: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// `mean_distance - kl_uniform`
    pub slack_lower: f64,
    /// `kl_uniform + log K - mean_distance`
    pub slack_upper: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

pub(crate) fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn argmax_of(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Max logit `m` and `sum_{k != w} exp(l_k - m)` over all but the first argmax `w`,
/// so `log sum_k exp(l_k - m)` can use `ln_1p` and stay accurate when one class dominates.
fn shifted_rest(l: &[f64]) -> (f64, f64) {
    let w = argmax_of(l);
    let m = l[w];
    let rest = l
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != w)
        .map(|(_, &v)| (v - m).exp())
        .sum();
    (m, rest)
}

pub(crate) fn logsumexp_slice(l: &[f64]) -> f64 {
    let (m, rest) = shifted_rest(l);
    m + rest.ln_1p()
}

pub(crate) fn log_softmax_slice(l: &[f64]) -> Vec<f64> {
    let (m, rest) = shifted_rest(l);
    let log_sum = rest.ln_1p();
    l.iter().map(|&v| (v - m) - log_sum).collect()
}

pub(crate) fn softmax_slice(l: &[f64]) -> Vec<f64> {
    let (m, rest) = shifted_rest(l);
    let sum = 1.0 + rest;
    l.iter().map(|&v| (v - m).exp() / sum).collect()
}

/// `max_k softmax(l)_k`
pub(crate) fn max_softmax_slice(l: &[f64]) -> f64 {
    1.0 / (1.0 + shifted_rest(l).1)
}

pub(crate) fn entropy_slice(s: &[f64]) -> f64 {
    -s.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `log sum_k exp(l_k)` with the max-shift, so it never overflows.
pub fn logsumexp(l: &LogitVector) -> f64 {
    logsumexp_slice(l.as_slice())
}

pub fn softmax(l: &LogitVector) -> ProbVector {
    ProbVector(softmax_slice(l.as_slice()))
}

pub fn log_softmax(l: &LogitVector) -> Vec<f64> {
    log_softmax_slice(l.as_slice())
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(s: &ProbVector) -> f64 {
    entropy_slice(s.as_slice())
}

/// `KL(u || s)` for the uniform distribution `u`. Rejects exact zeros in `s`.
pub fn kl_uniform_to(s: &ProbVector) -> Result<f64> {
    let k = s.len() as f64;
    let mut sum_log = 0.0;
    for (i, &p) in s.as_slice().iter().enumerate() {
        if p <= 0.0 {
            return Err(Error::Domain(format!("KL(u||s) is infinite: s[{i}] = 0")));
        }
        sum_log += p.ln();
    }
    Ok(-k.ln() - sum_log / k)
}

/// `KL(s || u)`, which equals `log K - H(s)`.
pub fn kl_to_uniform(s: &ProbVector) -> f64 {
    let k = s.len() as f64;
    s.as_slice()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p * k).ln())
        .sum()
}

pub fn logit_distances(l: &LogitVector) -> DistanceVector {
    let m = l.max();
    DistanceVector(l.as_slice().iter().map(|&v| m - v).collect())
}

/// Evaluates both sides of the sandwich
/// `KL(u||s) <= (1/K) sum_k d_k(l) <= KL(u||s) + log K` for `s = softmax(l)`.
pub fn check_logit_distance_bounds(l: &LogitVector, tolerance: f64) -> BoundReport {
    let k = l.len() as f64;
    let lse = logsumexp(l);
    let mean_logit = l.as_slice().iter().sum::<f64>() / k;
    let mean_distance = logit_distances(l).mean();
    // When softmax underflows to an exact zero, fall back to the closed form
    // KL(u||s) = lse - mean(l) - log K.
    let kl_uniform = kl_uniform_to(&softmax(l)).unwrap_or_else(|_| lse - mean_logit - k.ln());
    let slack_lower = mean_distance - kl_uniform;
    let slack_upper = kl_uniform + k.ln() - mean_distance;
    BoundReport {
        mean_distance,
        kl_uniform,
        lower_ok: slack_lower >= -tolerance,
        upper_ok: slack_upper >= -tolerance,
        slack_lower,
        slack_upper,
    }
}
