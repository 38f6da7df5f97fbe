//! Calibration and discriminative metrics over a set of predictions.
//!
//! Confidence is the largest softmax probability and the predicted class is
//! the lowest-index argmax of the logits. Equal-width bins are
//! `[0, 1/M], (1/M, 2/M], ..., ((M-1)/M, 1]`, so a confidence of exactly 1
//! always lands in the last bin. Adaptive bins sort samples by confidence
//! (stable) and cut them into `M` contiguous groups whose sizes differ by at
//! most one, larger groups first.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{log_softmax_slice, max_softmax_slice, LogitVector};

/// Default bin count for ECE and AECE.
pub const DEFAULT_ECE_BINS: usize = 15;
/// Default bin count for reliability diagrams.
pub const DEFAULT_DIAGRAM_BINS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub logits: LogitVector,
    pub label: usize,
}

impl PredictionRecord {
    pub fn new(logits: LogitVector, label: usize) -> Result<Self> {
        if label >= logits.len() {
            return Err(Error::Contract(format!(
                "label {label} out of range for {} classes",
                logits.len()
            )));
        }
        Ok(Self { logits, label })
    }

    /// `max_k softmax(l)_k`
    pub fn confidence(&self) -> f64 {
        max_softmax_slice(self.logits.as_slice())
    }

    pub fn predicted(&self) -> usize {
        self.logits.argmax()
    }

    pub fn is_correct(&self) -> bool {
        self.predicted() == self.label
    }
}

/// Ordered predictions sharing one class count.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    records: Vec<PredictionRecord>,
    num_classes: usize,
}

impl PredictionSet {
    pub fn new(records: Vec<PredictionRecord>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Usage(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        for (i, r) in records.iter().enumerate() {
            if r.logits.len() != num_classes {
                return Err(Error::Usage(format!(
                    "record {i} has {} logits, expected {num_classes}",
                    r.logits.len()
                )));
            }
        }
        Ok(Self {
            records,
            num_classes,
        })
    }

    /// Builds a set from raw rows of logits and labels.
    pub fn from_rows(rows: Vec<(Vec<f64>, usize)>, num_classes: usize) -> Result<Self> {
        let records = rows
            .into_iter()
            .map(|(l, y)| PredictionRecord::new(LogitVector::new(l)?, y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(records, num_classes)
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(PredictionRecord::confidence)
            .collect()
    }

    fn require_non_empty(&self) -> Result<()> {
        if self.records.is_empty() {
            Err(Error::Usage("metrics need at least one prediction".into()))
        } else {
            Ok(())
        }
    }
}

/// Per-bin statistics. `accuracy` and `mean_confidence` are 0 for empty bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinStats {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub accuracy: f64,
    pub mean_confidence: f64,
}

/// Upper edge of equal-width bin `i` (0-based), `(i + 1) / M`.
fn upper_edge(i: usize, bins: usize) -> f64 {
    (i + 1) as f64 / bins as f64
}

/// Equal-width bin index for confidence `c`, honouring the closed-right edges.
pub fn equal_width_index(c: f64, bins: usize) -> usize {
    let mut i = ((c * bins as f64).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    // ceil() can land one bin off when c * M rounds across an integer.
    while i > 0 && c <= upper_edge(i - 1, bins) {
        i -= 1;
    }
    while i + 1 < bins && c > upper_edge(i, bins) {
        i += 1;
    }
    i
}

#[derive(Default, Clone, Copy)]
struct Accumulator {
    count: usize,
    correct: usize,
    confidence_sum: f64,
}

impl Accumulator {
    fn push(&mut self, confidence: f64, correct: bool) {
        self.count += 1;
        self.correct += usize::from(correct);
        self.confidence_sum += confidence;
    }

    fn finish(self, lo: f64, hi: f64) -> BinStats {
        let (accuracy, mean_confidence) = if self.count == 0 {
            (0.0, 0.0)
        } else {
            let n = self.count as f64;
            (self.correct as f64 / n, self.confidence_sum / n)
        };
        BinStats {
            lo,
            hi,
            count: self.count,
            accuracy,
            mean_confidence,
        }
    }
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        Err(Error::Usage("bin count must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Equal-width confidence bins, including empty ones.
pub fn bin_equal_width(preds: &PredictionSet, bins: usize) -> Result<Vec<BinStats>> {
    check_bins(bins)?;
    preds.require_non_empty()?;
    let mut acc = vec![Accumulator::default(); bins];
    for r in preds.records() {
        let c = r.confidence();
        acc[equal_width_index(c, bins)].push(c, r.is_correct());
    }
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let lo = if i == 0 { 0.0 } else { upper_edge(i - 1, bins) };
            a.finish(lo, upper_edge(i, bins))
        })
        .collect())
}

/// Group sizes for `n` samples in `bins` adaptive bins, larger groups first.
pub fn adaptive_group_sizes(n: usize, bins: usize) -> Vec<usize> {
    let base = n / bins;
    let extra = n % bins;
    (0..bins).map(|i| base + usize::from(i < extra)).collect()
}

/// Equal-mass bins; `lo`/`hi` are each group's min/max confidence.
pub fn bin_adaptive(preds: &PredictionSet, bins: usize) -> Result<Vec<BinStats>> {
    check_bins(bins)?;
    preds.require_non_empty()?;
    if preds.len() < bins {
        return Err(Error::Usage(format!(
            "adaptive binning needs at least {bins} samples, got {}",
            preds.len()
        )));
    }
    let scored: Vec<(f64, bool)> = preds
        .records()
        .iter()
        .map(|r| (r.confidence(), r.is_correct()))
        .collect();
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));

    let mut out = Vec::with_capacity(bins);
    let mut start = 0;
    for size in adaptive_group_sizes(scored.len(), bins) {
        let group = &order[start..start + size];
        let mut acc = Accumulator::default();
        for &i in group {
            acc.push(scored[i].0, scored[i].1);
        }
        let lo = scored[group[0]].0;
        let hi = scored[group[size - 1]].0;
        out.push(acc.finish(lo, hi));
        start += size;
    }
    Ok(out)
}

/// `sum_m (|B_m| / N) |A_m - C_m|` over non-empty bins.
pub fn calibration_error(bins: &[BinStats]) -> f64 {
    let n: usize = bins.iter().map(|b| b.count).sum();
    let n = n as f64;
    bins.iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n * (b.accuracy - b.mean_confidence).abs())
        .sum()
}

/// Expected calibration error over `bins` equal-width bins, as a fraction.
pub fn ece(preds: &PredictionSet, bins: usize) -> Result<f64> {
    Ok(calibration_error(&bin_equal_width(preds, bins)?))
}

/// Adaptive ECE over `bins` equal-mass bins, as a fraction.
pub fn aece(preds: &PredictionSet, bins: usize) -> Result<f64> {
    Ok(calibration_error(&bin_adaptive(preds, bins)?))
}

pub fn accuracy(preds: &PredictionSet) -> Result<f64> {
    preds.require_non_empty()?;
    let correct = preds.records().iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Mean negative log-likelihood of the true labels.
pub fn nll(preds: &PredictionSet) -> Result<f64> {
    preds.require_non_empty()?;
    let total: f64 = preds
        .records()
        .iter()
        .map(|r| -log_softmax_slice(r.logits.as_slice())[r.label])
        .sum();
    Ok(total / preds.len() as f64)
}

/// Mean of max-softmax confidence.
pub fn mean_confidence(preds: &PredictionSet) -> Result<f64> {
    preds.require_non_empty()?;
    Ok(preds.confidences().iter().sum::<f64>() / preds.len() as f64)
}

/// Equal-width table for reliability diagrams.
pub fn reliability_table(preds: &PredictionSet, bins: usize) -> Result<Vec<BinStats>> {
    bin_equal_width(preds, bins)
}
