//! Randomized checks of the loss-level identities, bounds and gradients.
//!
//! Each property samples points from a seeded generator and records how many
//! it checked, how many failed, and the worst observed slack or error.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::Result;
use crate::losses::{ce, fl, flsd_gamma, ls, LossKind, LossSpec};
use crate::model::{init_mlp, MlpModel};
use crate::numerics::{
    check_logit_distance_bounds, entropy, kl_uniform_to, logit_distances, softmax, LogitVector,
};
use crate::rng::{seeded, stream, Rng};

/// Tolerance on the logit-distance sandwich, the LS decomposition and the focal bound.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Maximum relative error between analytic and numeric gradients.
pub const GRADIENT_TOLERANCE: f64 = 1e-5;
/// Points closer than this to a kink, tie or switch are resampled.
pub const KINK_EXCLUSION: f64 = 1e-3;
/// Floor on the gradient norm in the relative error denominator.
const GRADIENT_NORM_FLOOR: f64 = 1e-3;
/// Standard deviation of sampled logits.
pub const LOGIT_STD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub bound_samples: usize,
    pub identity_samples: usize,
    pub gradient_points: usize,
    pub model_gradient_points: usize,
    /// Added to the first analytic gradient entry before comparison; zero in
    /// normal runs. Lets tests prove the gradient checks can fail.
    pub gradient_fault: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            bound_samples: 100_000,
            identity_samples: 10_000,
            gradient_points: 100,
            model_gradient_points: 20,
            gradient_fault: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    /// Smallest slack for inequalities, largest error for identities and gradients.
    pub worst: f64,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub options: VerifyOptions,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }
}

fn random_logits(rng: &mut Rng, k: usize) -> LogitVector {
    let normal = Normal::new(0.0, LOGIT_STD).expect("valid normal");
    LogitVector::new((0..k).map(|_| normal.sample(rng)).collect()).expect("finite samples")
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b||_inf / max(||a||_inf, ||b||_inf, floor)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / inf(analytic).max(inf(numeric)).max(GRADIENT_NORM_FLOOR)
}

fn bound_property(opts: &VerifyOptions, rng: &mut Rng) -> PropertyResult {
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..opts.bound_samples {
        let k = rng.random_range(2..=100);
        let report = check_logit_distance_bounds(&random_logits(rng, k), IDENTITY_TOLERANCE);
        if !report.holds() {
            failures += 1;
        }
        worst = worst.min(report.slack_lower).min(report.slack_upper);
    }
    PropertyResult {
        name: "logit_distance_sandwich".into(),
        checked: opts.bound_samples,
        failures,
        worst,
    }
}

fn ls_decomposition_property(opts: &VerifyOptions, rng: &mut Rng) -> Result<PropertyResult> {
    let mut failures = 0;
    let mut worst = 0.0f64;
    for i in 0..opts.identity_samples {
        let alpha = [0.05, 0.1, 0.3][i % 3];
        let k = rng.random_range(2..=100);
        let l = random_logits(rng, k);
        let y = rng.random_range(0..k);
        let s = softmax(&l);
        let Ok(kl) = kl_uniform_to(&s) else {
            continue;
        };
        let rhs = (1.0 - alpha) * ce(&l, y)?.value + alpha * kl + alpha * (k as f64).ln();
        let err = (ls(&l, y, alpha)?.value - rhs).abs();
        if err > IDENTITY_TOLERANCE {
            failures += 1;
        }
        worst = worst.max(err);
    }
    Ok(PropertyResult {
        name: "ls_kl_decomposition".into(),
        checked: opts.identity_samples,
        failures,
        worst,
    })
}

fn focal_bound_property(opts: &VerifyOptions, rng: &mut Rng) -> Result<PropertyResult> {
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for i in 0..opts.identity_samples {
        let gamma = [1.0, 2.0, 3.0, 5.0][i % 4];
        let k = rng.random_range(2..=100);
        let l = random_logits(rng, k);
        let y = rng.random_range(0..k);
        let slack = fl(&l, y, gamma)?.value - (ce(&l, y)?.value - gamma * entropy(&softmax(&l)));
        if slack < -IDENTITY_TOLERANCE {
            failures += 1;
        }
        worst = worst.min(slack);
    }
    Ok(PropertyResult {
        name: "focal_entropy_bound".into(),
        checked: opts.identity_samples,
        failures,
        worst,
    })
}

/// Random hyperparameters for `kind`, spanning its valid range.
fn random_spec(kind: LossKind, rng: &mut Rng) -> LossSpec {
    let mut spec = LossSpec::new(kind);
    match kind {
        LossKind::Ce => {}
        LossKind::Ls => spec.alpha = rng.random_range(0.0..0.5),
        LossKind::Fl => spec.gamma = rng.random_range(0.0..5.0),
        LossKind::Flsd => {}
        LossKind::Ecp => spec.ecp_weight = rng.random_range(0.0..1.0),
        LossKind::Mbls => {
            spec.margin = rng.random_range(0.0..6.0);
            spec.lambda = rng.random_range(0.0..1.0);
        }
    }
    spec
}

/// True if `l` sits within [`KINK_EXCLUSION`] of a non-smooth point of `spec`.
pub fn near_kink(spec: &LossSpec, l: &LogitVector, y: usize) -> bool {
    match spec.kind {
        LossKind::Mbls => {
            let d = logit_distances(l);
            let mut sorted = d.as_slice().to_vec();
            sorted.sort_by(f64::total_cmp);
            let tie = sorted[1] < KINK_EXCLUSION;
            let hinge = d
                .as_slice()
                .iter()
                .any(|dk| (dk - spec.margin).abs() < KINK_EXCLUSION);
            tie || hinge
        }
        LossKind::Flsd => (softmax(l).as_slice()[y] - spec.threshold).abs() < KINK_EXCLUSION,
        _ => false,
    }
}

fn logit_gradient_property(
    kind: LossKind,
    opts: &VerifyOptions,
    rng: &mut Rng,
) -> Result<PropertyResult> {
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < opts.gradient_points {
        let k = rng.random_range(2..=50);
        let l = random_logits(rng, k);
        let y = rng.random_range(0..k);
        let spec = random_spec(kind, rng);
        if near_kink(&spec, &l, y) {
            continue;
        }
        let mut analytic = spec.eval(&l, y)?.grad;
        analytic[0] += opts.gradient_fault;
        // Keep FLSD's gamma fixed at the branch chosen at l.
        let frozen = if kind == LossKind::Flsd {
            LossSpec::fl(flsd_gamma(&spec, softmax(&l).as_slice()[y]))
        } else {
            spec
        };
        let numeric = central_difference(l.as_slice(), FD_STEP, |v| {
            let probe = LogitVector::new(v.to_vec()).expect("finite probe");
            frozen.eval(&probe, y).expect("valid loss").value
        });
        let err = relative_error(&analytic, &numeric);
        if err > GRADIENT_TOLERANCE {
            failures += 1;
        }
        worst = worst.max(err);
        checked += 1;
    }
    Ok(PropertyResult {
        name: format!("logit_gradient_{kind}"),
        checked,
        failures,
        worst,
    })
}

/// True if a hidden unit's pre-activation is within [`KINK_EXCLUSION`] of zero.
fn near_relu_kink(model: &MlpModel, x: &[f64]) -> bool {
    let mut act = x.to_vec();
    let last = model.layers().len() - 1;
    for (i, layer) in model.layers().iter().enumerate() {
        let mut z = layer.biases.clone();
        for (a, row) in act.iter().zip(layer.weights.chunks_exact(layer.outputs)) {
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += a * w;
            }
        }
        if i != last {
            if z.iter().any(|v| v.abs() < KINK_EXCLUSION) {
                return true;
            }
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        act = z;
    }
    false
}

/// Layer widths of the network used for end-to-end gradient checks.
pub const GRADCHECK_DIMS: [usize; 3] = [5, 8, 4];

fn model_gradient_property(
    kind: LossKind,
    opts: &VerifyOptions,
    rng: &mut Rng,
) -> Result<PropertyResult> {
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let input = Normal::new(0.0, 1.0).expect("valid normal");
    let mut attempts = 0;
    while checked < opts.model_gradient_points {
        attempts += 1;
        let mut model = init_mlp(&GRADCHECK_DIMS, rng.random())?;
        let scale: f64 = rng.random_range(1.0..4.0);
        for p in 0..model.num_params() {
            *model.param_mut(p) *= scale;
        }
        let x: Vec<f64> = (0..GRADCHECK_DIMS[0]).map(|_| input.sample(rng)).collect();
        let y = rng.random_range(0..GRADCHECK_DIMS[2]);
        let spec = random_spec(kind, rng);
        let logits = model.forward(&x)?;
        if near_relu_kink(&model, &x) || near_kink(&spec, &logits, y) {
            assert!(attempts < 100_000, "could not sample smooth points");
            continue;
        }
        let (_, grads) = crate::model::backward(&model, &x, y, &spec)?;
        let mut analytic = grads.flatten();
        analytic[0] += opts.gradient_fault;
        let frozen = if kind == LossKind::Flsd {
            LossSpec::fl(flsd_gamma(&spec, softmax(&logits).as_slice()[y]))
        } else {
            spec
        };
        let params = model.params();
        let mut probe = model.clone();
        let numeric = central_difference(&params, FD_STEP, |v| {
            for (i, p) in v.iter().enumerate() {
                *probe.param_mut(i) = *p;
            }
            let l = probe.forward(&x).expect("finite forward");
            frozen.eval(&l, y).expect("valid loss").value
        });
        let err = relative_error(&analytic, &numeric);
        if err > GRADIENT_TOLERANCE {
            failures += 1;
        }
        worst = worst.max(err);
        checked += 1;
    }
    Ok(PropertyResult {
        name: format!("model_gradient_{kind}"),
        checked,
        failures,
        worst,
    })
}

/// Runs every property with generators derived from `opts.seed`.
pub fn run_suite(opts: &VerifyOptions) -> Result<VerifyReport> {
    let sub = |i: u64| seeded(opts.seed, stream::VERIFY + (i << 8));
    let mut properties = vec![
        bound_property(opts, &mut sub(0)),
        ls_decomposition_property(opts, &mut sub(1))?,
        focal_bound_property(opts, &mut sub(2))?,
    ];
    for (i, kind) in LossKind::ALL.into_iter().enumerate() {
        properties.push(logit_gradient_property(
            kind,
            opts,
            &mut sub(10 + i as u64),
        )?);
    }
    for (i, kind) in LossKind::ALL.into_iter().enumerate() {
        properties.push(model_gradient_property(
            kind,
            opts,
            &mut sub(20 + i as u64),
        )?);
    }
    Ok(VerifyReport {
        options: *opts,
        properties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            seed: 3,
            bound_samples: 500,
            identity_samples: 300,
            gradient_points: 20,
            model_gradient_points: 4,
            gradient_fault: 0.0,
        }
    }

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(&[1.0, -2.0], 1e-4, |v| v[0] * v[0] + 3.0 * v[1]);
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn small_suite_passes_and_is_reproducible() {
        let a = run_suite(&small()).unwrap();
        assert!(a.passed(), "{a:#?}");
        assert_eq!(a, run_suite(&small()).unwrap());
    }

    #[test]
    fn injected_fault_is_caught() {
        let report = run_suite(&VerifyOptions {
            gradient_fault: 1e-2,
            ..small()
        })
        .unwrap();
        assert!(!report.passed());
        assert!(report
            .properties
            .iter()
            .filter(|p| p.name.contains("gradient"))
            .all(|p| !p.passed()));
    }
}
