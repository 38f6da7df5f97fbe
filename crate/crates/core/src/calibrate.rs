//! Post-hoc temperature scaling.
//!
//! A single temperature `T > 0` divides every logit. It is chosen on a
//! validation set by exhaustive grid search over NLL; the grid always contains
//! `T = 1`, so the fit never makes validation NLL worse.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{ece, nll, PredictionRecord, PredictionSet};
use crate::numerics::LogitVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemperatureGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
}

impl Default for TemperatureGrid {
    fn default() -> Self {
        Self {
            t_min: 0.1,
            t_max: 5.0,
            step: 0.1,
        }
    }
}

impl TemperatureGrid {
    pub fn new(t_min: f64, t_max: f64, step: f64) -> Result<Self> {
        if !(t_min > 0.0 && t_min <= 1.0 && t_max >= 1.0 && t_max.is_finite()) {
            return Err(Error::Usage(format!(
                "temperature bounds must satisfy 0 < t_min <= 1 <= t_max, got [{t_min}, {t_max}]"
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Usage(format!("grid step must be > 0, got {step}")));
        }
        Ok(Self { t_min, t_max, step })
    }

    /// `t_min + i * step` up to `t_max`, plus `1.0` if not already present, ascending.
    pub fn points(&self) -> Vec<f64> {
        // slack absorbs accumulated rounding of t_min + i * step near t_max
        let slack = self.step * 1e-9;
        let mut points: Vec<f64> = (0..)
            .map(|i| self.t_min + i as f64 * self.step)
            .take_while(|&t| t <= self.t_max + slack)
            .map(|t| if (t - 1.0).abs() <= slack { 1.0 } else { t })
            .collect();
        if !points.contains(&1.0) {
            points.push(1.0);
            points.sort_by(f64::total_cmp);
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureFit {
    pub t_star: f64,
    pub nll_pre: f64,
    pub nll_post: f64,
    pub ece_pre: f64,
    pub ece_post: f64,
    pub bins: usize,
    pub grid: TemperatureGrid,
    pub grid_points: usize,
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("temperature must be > 0, got {t}")))
    }
}

pub fn scale_logits(l: &LogitVector, t: f64) -> Result<LogitVector> {
    check_temperature(t)?;
    if t == 1.0 {
        return Ok(l.clone());
    }
    LogitVector::new(l.as_slice().iter().map(|v| v / t).collect())
}

pub fn apply_temperature(preds: &PredictionSet, t: f64) -> Result<PredictionSet> {
    check_temperature(t)?;
    let records = preds
        .records()
        .iter()
        .map(|r| {
            Ok(PredictionRecord {
                logits: scale_logits(&r.logits, t)?,
                label: r.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(records, preds.num_classes())
}

/// Picks the grid temperature minimising validation NLL.
///
/// Ties go to the temperature closest to 1, then to the smaller one.
pub fn fit_temperature(
    val: &PredictionSet,
    grid: TemperatureGrid,
    bins: usize,
) -> Result<TemperatureFit> {
    if val.is_empty() {
        return Err(Error::Usage(
            "temperature fit needs validation predictions".into(),
        ));
    }
    let grid = TemperatureGrid::new(grid.t_min, grid.t_max, grid.step)?;
    let points = grid.points();

    let nll_pre = nll(val)?;
    let mut best: (f64, f64) = (1.0, nll_pre);
    for &t in &points {
        let value = if t == 1.0 {
            nll_pre
        } else {
            nll(&apply_temperature(val, t)?)?
        };
        let (bt, bv) = best;
        let better = value < bv
            || (value == bv
                && ((t - 1.0).abs() < (bt - 1.0).abs()
                    || ((t - 1.0).abs() == (bt - 1.0).abs() && t < bt)));
        if better {
            best = (t, value);
        }
    }
    let (t_star, nll_post) = best;
    let ece_pre = ece(val, bins)?;
    let ece_post = ece(&apply_temperature(val, t_star)?, bins)?;
    Ok(TemperatureFit {
        t_star,
        nll_pre,
        nll_post,
        ece_pre,
        ece_post,
        bins,
        grid,
        grid_points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::accuracy;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn scale_examples() {
        let l = lv(&[0.3, -2.0, 1.7]);
        assert_eq!(scale_logits(&l, 1.0).unwrap(), l);
        let s = scale_logits(&lv(&[2.0, 0.0]), 2.0).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 0.0]);
        let p = crate::numerics::softmax(&s);
        assert!((p.as_slice()[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        for t in [0.05, 0.5, 3.0, 40.0] {
            assert_eq!(scale_logits(&l, t).unwrap().argmax(), l.argmax());
        }
        assert!(matches!(scale_logits(&l, 0.0), Err(Error::Domain(_))));
        assert!(scale_logits(&l, -1.0).is_err());
    }

    #[test]
    fn grid_contains_one_and_bounds() {
        let pts = TemperatureGrid::default().points();
        assert_eq!(pts.len(), 50);
        assert_eq!(pts[0], 0.1);
        assert!((pts[49] - 5.0).abs() < 1e-12);
        assert!(pts.contains(&1.0));

        let pts = TemperatureGrid::new(0.25, 2.0, 0.5).unwrap().points();
        assert_eq!(pts, vec![0.25, 0.75, 1.0, 1.25, 1.75]);

        assert!(TemperatureGrid::new(1.5, 5.0, 0.1).is_err());
        assert!(TemperatureGrid::new(0.1, 0.9, 0.1).is_err());
        assert!(TemperatureGrid::new(0.1, 5.0, 0.0).is_err());
    }

    #[test]
    fn apply_temperature_preserves_accuracy() {
        let preds = PredictionSet::from_rows(
            vec![
                (vec![2.0, 0.0, 1.0], 0),
                (vec![0.1, 0.0, 0.3], 1),
                (vec![-1.0, 4.0, 0.0], 1),
            ],
            3,
        )
        .unwrap();
        assert_eq!(apply_temperature(&preds, 1.0).unwrap(), preds);
        for t in [0.1, 0.7, 2.0, 9.0] {
            let scaled = apply_temperature(&preds, t).unwrap();
            assert_eq!(accuracy(&scaled).unwrap(), accuracy(&preds).unwrap());
        }
        assert!(apply_temperature(&preds, 0.0).is_err());
    }

    #[test]
    fn empty_validation_set_is_rejected() {
        let empty = PredictionSet::new(vec![], 2).unwrap();
        assert!(matches!(
            fit_temperature(&empty, TemperatureGrid::default(), 15),
            Err(Error::Usage(_))
        ));
    }
}
