//! Per-sample training objectives on logits, each returning the loss value and
//! its analytic gradient with respect to the logits.
//!
//! | kind   | value                                                   |
//! |--------|---------------------------------------------------------|
//! | `ce`   | `-log s_y`                                              |
//! | `ls`   | `-sum_k ((1-a) y_k + a/K) log s_k`                      |
//! | `fl`   | `-(1 - s_y)^g log s_y`                                  |
//! | `flsd` | focal loss, `g` switched on `s_y` against a threshold   |
//! | `ecp`  | `CE - w H(s)`                                           |
//! | `mbls` | `CE + lambda sum_k max(0, max_j l_j - l_k - m)`         |
//!
//! Labels are class indices; one-hot targets are never materialized.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{entropy_slice, log_softmax_slice, max_of, LogitVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Ls,
    Fl,
    Flsd,
    Ecp,
    Mbls,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Ce,
        LossKind::Ls,
        LossKind::Fl,
        LossKind::Flsd,
        LossKind::Ecp,
        LossKind::Mbls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Ls => "ls",
            LossKind::Fl => "fl",
            LossKind::Flsd => "flsd",
            LossKind::Ecp => "ecp",
            LossKind::Mbls => "mbls",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown loss kind `{s}`")))
    }
}

/// Loss selection plus every hyperparameter any loss may read.
///
/// Only the fields belonging to `kind` are consulted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Label smoothing factor.
    pub alpha: f64,
    /// Focal loss focusing parameter.
    pub gamma: f64,
    /// FLSD gamma used when `s_y >= threshold`.
    pub gamma_low: f64,
    /// FLSD gamma used when `s_y < threshold`.
    pub gamma_high: f64,
    pub threshold: f64,
    pub ecp_weight: f64,
    pub margin: f64,
    pub lambda: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::Ce,
            alpha: 0.05,
            gamma: 3.0,
            gamma_low: 3.0,
            gamma_high: 5.0,
            threshold: 0.2,
            ecp_weight: 0.1,
            margin: 6.0,
            lambda: 0.1,
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn ce() -> Self {
        Self::new(LossKind::Ce)
    }

    pub fn ls(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::new(LossKind::Ls)
        }
    }

    pub fn fl(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::new(LossKind::Fl)
        }
    }

    pub fn flsd() -> Self {
        Self::new(LossKind::Flsd)
    }

    pub fn ecp(weight: f64) -> Self {
        Self {
            ecp_weight: weight,
            ..Self::new(LossKind::Ecp)
        }
    }

    pub fn mbls(margin: f64, lambda: f64) -> Self {
        Self {
            margin,
            lambda,
            ..Self::new(LossKind::Mbls)
        }
    }

    /// Checks the hyperparameters read by `kind`.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LossKind::Ce => Ok(()),
            LossKind::Ls => check_alpha(self.alpha),
            LossKind::Fl => check_gamma("gamma", self.gamma),
            LossKind::Flsd => {
                check_gamma("gamma_low", self.gamma_low)?;
                check_gamma("gamma_high", self.gamma_high)?;
                if !(self.threshold > 0.0 && self.threshold < 1.0) {
                    return Err(Error::Config(format!(
                        "FLSD threshold must lie in (0, 1), got {}",
                        self.threshold
                    )));
                }
                Ok(())
            }
            LossKind::Ecp => check_non_negative("ecp_weight", self.ecp_weight),
            LossKind::Mbls => {
                check_non_negative("margin", self.margin)?;
                check_non_negative("lambda", self.lambda)
            }
        }
    }

    pub fn eval(&self, l: &LogitVector, y: usize) -> Result<LossOutput> {
        match self.kind {
            LossKind::Ce => ce(l, y),
            LossKind::Ls => ls(l, y, self.alpha),
            LossKind::Fl => fl(l, y, self.gamma),
            LossKind::Flsd => flsd(l, y, self),
            LossKind::Ecp => ecp(l, y, self.ecp_weight),
            LossKind::Mbls => mbls(l, y, self.margin, self.lambda),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "label smoothing alpha must lie in [0, 1), got {alpha}"
        )))
    }
}

fn check_gamma(name: &str, gamma: f64) -> Result<()> {
    check_non_negative(name, gamma)
}

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be finite and >= 0, got {v}"
        )))
    }
}

fn check_label(l: &LogitVector, y: usize) -> Result<()> {
    if y < l.len() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "label {y} out of range for {} classes",
            l.len()
        )))
    }
}

/// Loss value with its gradient `d value / d l_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Mean loss over a batch with per-sample gradients already scaled by `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossOutput {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

/// Log-probabilities and probabilities sharing one log-sum-exp.
struct Softmaxed {
    log_s: Vec<f64>,
    s: Vec<f64>,
}

impl Softmaxed {
    fn of(l: &LogitVector) -> Self {
        let log_s = log_softmax_slice(l.as_slice());
        let s = log_s.iter().map(|v| v.exp()).collect();
        Self { log_s, s }
    }

    /// `1 - s_y`, summed over the other classes to avoid cancellation.
    fn complement(&self, y: usize) -> f64 {
        self.s
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != y)
            .map(|(_, p)| p)
            .sum()
    }
}

fn ce_from(sm: &Softmaxed, y: usize) -> LossOutput {
    let mut grad = sm.s.clone();
    grad[y] -= 1.0;
    LossOutput {
        value: -sm.log_s[y],
        grad,
    }
}

pub fn ce(l: &LogitVector, y: usize) -> Result<LossOutput> {
    check_label(l, y)?;
    Ok(ce_from(&Softmaxed::of(l), y))
}

/// Cross-entropy against `(1 - alpha) onehot(y) + alpha / K`.
pub fn ls(l: &LogitVector, y: usize, alpha: f64) -> Result<LossOutput> {
    check_alpha(alpha)?;
    check_label(l, y)?;
    let sm = Softmaxed::of(l);
    let uniform = alpha / l.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(l.len());
    for (k, (&log_p, &p)) in sm.log_s.iter().zip(&sm.s).enumerate() {
        let target = if k == y {
            1.0 - alpha + uniform
        } else {
            uniform
        };
        value -= target * log_p;
        grad.push(p - target);
    }
    Ok(LossOutput { value, grad })
}

fn focal_from(sm: &Softmaxed, y: usize, gamma: f64) -> LossOutput {
    let log_p = sm.log_s[y];
    let p = sm.s[y];
    let q = sm.complement(y);
    let modulator = q.powf(gamma);
    let value = -modulator * log_p;
    // d value / d s_y = gamma q^(g-1) log p - q^g / p, and d s_y / d l_k = p (δ_ky - s_k).
    // coeff = p * d value / d s_y; the q^(g-1) factor is 0 at q = 0 for any g > 0.
    let slope = if gamma == 0.0 {
        0.0
    } else if q > 0.0 {
        gamma * q.powf(gamma - 1.0) * p * log_p
    } else {
        0.0
    };
    let coeff = slope - modulator;
    let grad =
        sm.s.iter()
            .enumerate()
            .map(|(k, &sk)| {
                let delta = if k == y { 1.0 } else { 0.0 };
                coeff * (delta - sk)
            })
            .collect();
    LossOutput { value, grad }
}

/// Focal loss `-(1 - s_y)^gamma log s_y`.
pub fn fl(l: &LogitVector, y: usize, gamma: f64) -> Result<LossOutput> {
    check_gamma("gamma", gamma)?;
    check_label(l, y)?;
    Ok(focal_from(&Softmaxed::of(l), y, gamma))
}

/// The gamma FLSD uses for ground-truth probability `s_y`.
pub fn flsd_gamma(spec: &LossSpec, s_y: f64) -> f64 {
    if s_y < spec.threshold {
        spec.gamma_high
    } else {
        spec.gamma_low
    }
}

/// Sample-dependent focal loss. The gamma switch is not differentiated through.
pub fn flsd(l: &LogitVector, y: usize, spec: &LossSpec) -> Result<LossOutput> {
    LossSpec {
        kind: LossKind::Flsd,
        ..*spec
    }
    .validate()?;
    check_label(l, y)?;
    let sm = Softmaxed::of(l);
    let gamma = flsd_gamma(spec, sm.s[y]);
    Ok(focal_from(&sm, y, gamma))
}

/// Explicit confidence penalty `CE - weight * H(s)`.
pub fn ecp(l: &LogitVector, y: usize, weight: f64) -> Result<LossOutput> {
    check_non_negative("ecp_weight", weight)?;
    check_label(l, y)?;
    let sm = Softmaxed::of(l);
    let mut out = ce_from(&sm, y);
    let h = entropy_slice(&sm.s);
    out.value -= weight * h;
    // dH/dl_k = -s_k (log s_k + H)
    for (g, (&p, &log_p)) in out.grad.iter_mut().zip(sm.s.iter().zip(&sm.log_s)) {
        *g += weight * p * (log_p + h);
    }
    Ok(out)
}

/// The hinge penalty `lambda * sum_k max(0, d_k - margin)` and its gradient.
///
/// The max is routed to the lowest argmax index. A hinge with `d_k == margin`
/// is inactive.
pub fn margin_penalty(l: &LogitVector, margin: f64, lambda: f64) -> (f64, Vec<f64>) {
    let values = l.as_slice();
    let winner = l.argmax();
    let top = max_of(values);
    let mut penalty = 0.0;
    let mut grad = vec![0.0; values.len()];
    for (k, &v) in values.iter().enumerate() {
        let excess = top - v - margin;
        if excess > 0.0 {
            penalty += excess;
            grad[k] -= lambda;
            grad[winner] += lambda;
        }
    }
    (lambda * penalty, grad)
}

/// Margin-based label smoothing: CE plus a hinge on logit distances beyond `margin`.
pub fn mbls(l: &LogitVector, y: usize, margin: f64, lambda: f64) -> Result<LossOutput> {
    check_non_negative("margin", margin)?;
    check_non_negative("lambda", lambda)?;
    let mut out = ce(l, y)?;
    let (penalty, pgrad) = margin_penalty(l, margin, lambda);
    out.value += penalty;
    for (g, p) in out.grad.iter_mut().zip(pgrad) {
        *g += p;
    }
    Ok(out)
}

/// Mean loss over a batch. Samples are reduced in order so the result does not
/// depend on how evaluation is scheduled.
pub fn batch_loss(
    spec: &LossSpec,
    logits: &[LogitVector],
    labels: &[usize],
) -> Result<BatchLossOutput> {
    if logits.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} logit vectors but {} labels",
            logits.len(),
            labels.len()
        )));
    }
    spec.validate()?;
    let scale = 1.0 / logits.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (l, &y) in logits.iter().zip(labels) {
        let out = spec.eval(l, y)?;
        total += out.value;
        grads.push(out.grad.into_iter().map(|g| g * scale).collect());
    }
    Ok(BatchLossOutput {
        value: total * scale,
        grads,
    })
}
