//! Accuracy, calibration and confidence analyses.
//!
//! Calibration bins argmax confidence over `[0.5, 1]`; the reported `ece` is
//! the count-weighted mean of `|mean confidence − accuracy|` over non-empty
//! bins. [`reliability_curve`] gives the alternative view that bins `P(A)`
//! over `[0, 1]` against the observed frequency of `A`.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::ModelSnapshot;
use crate::error::{Error, Result};
use crate::prefdata::{split, Label, LabeledExample, PreferenceTriplet, SplitSpec};
use crate::scalar::Scalar;
use crate::ssrm::{run_ssrm, SsrmConfig};

pub const UNCATEGORIZED: &str = "uncategorized";
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_category: BTreeMap<String, CategoryAccuracy>,
    pub n_examples: usize,
}

fn category_of(t: &PreferenceTriplet) -> &str {
    match t.category.as_deref() {
        Some(c) if !c.is_empty() => c,
        _ => UNCATEGORIZED,
    }
}

fn require_ground_truth(test: &[LabeledExample]) -> Result<()> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    match test.iter().find(|e| !e.is_ground_truth()) {
        Some(e) => Err(Error::InvalidRecord {
            id: e.id().to_string(),
            message: "evaluation requires ground-truth labels".into(),
        }),
        None => Ok(()),
    }
}

/// Fraction of examples whose argmax label (ties to `A`) matches the stored label.
pub fn evaluate<F: Scalar>(
    model: &ModelSnapshot<F>,
    test: &[LabeledExample],
) -> Result<EvalReport> {
    require_ground_truth(test)?;
    let hits: Vec<bool> = test
        .par_iter()
        .map(|e| model.predict(&e.triplet).argmax() == e.label)
        .collect();
    let mut per_category: BTreeMap<String, CategoryAccuracy> = BTreeMap::new();
    for (e, &hit) in test.iter().zip(&hits) {
        let entry = per_category
            .entry(category_of(&e.triplet).to_string())
            .or_insert(CategoryAccuracy {
                correct: 0,
                total: 0,
                accuracy: 0.0,
            });
        entry.total += 1;
        entry.correct += hit as usize;
    }
    for c in per_category.values_mut() {
        c.accuracy = c.correct as f64 / c.total as f64;
    }
    let correct = hits.iter().filter(|&&h| h).count();
    Ok(EvalReport {
        overall_accuracy: correct as f64 / test.len() as f64,
        per_category,
        n_examples: test.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    /// `None` for empty bins.
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    /// Expected calibration error over argmax confidence.
    pub ece: f64,
    pub histogram: Vec<usize>,
    pub n: usize,
}

fn bin_index(value: f64, lower: f64, upper: f64, n_bins: usize) -> usize {
    // snap values that sit on an edge up to the bin they open
    let pos = (value - lower) / (upper - lower) * n_bins as f64 + 1e-9;
    (pos.floor().max(0.0) as usize).min(n_bins - 1)
}

/// Bins `(score, outcome)` pairs over `[lower, upper]` and computes the
/// count-weighted absolute gap between mean score and outcome frequency.
pub fn binned_calibration(
    pairs: &[(f64, bool)],
    lower: f64,
    upper: f64,
    n_bins: usize,
) -> Result<CalibrationReport> {
    if n_bins < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_bins {n_bins} must be >= 2"
        )));
    }
    let mut sums = vec![(0.0f64, 0usize, 0usize); n_bins];
    for &(score, outcome) in pairs {
        let b = &mut sums[bin_index(score, lower, upper, n_bins)];
        b.0 += score;
        b.1 += outcome as usize;
        b.2 += 1;
    }
    let width = (upper - lower) / n_bins as f64;
    let n = pairs.len();
    let mut ece = 0.0;
    let bins = sums
        .iter()
        .enumerate()
        .map(|(k, &(score_sum, hits, count))| {
            let (mean_confidence, empirical_accuracy) = if count == 0 {
                (None, None)
            } else {
                let conf = score_sum / count as f64;
                let acc = hits as f64 / count as f64;
                ece += count as f64 / n as f64 * (conf - acc).abs();
                (Some(conf), Some(acc))
            };
            CalibrationBin {
                lower: lower + k as f64 * width,
                upper: if k + 1 == n_bins {
                    upper
                } else {
                    lower + (k + 1) as f64 * width
                },
                mean_confidence,
                empirical_accuracy,
                count,
            }
        })
        .collect();
    Ok(CalibrationReport {
        bins,
        ece,
        histogram: sums.iter().map(|s| s.2).collect(),
        n,
    })
}

/// Reliability table over argmax confidence from precomputed
/// `(confidence, correct)` pairs.
pub fn calibration_from_outcomes(
    pairs: &[(f64, bool)],
    n_bins: usize,
) -> Result<CalibrationReport> {
    binned_calibration(pairs, 0.5, 1.0, n_bins)
}

pub fn calibration<F: Scalar>(
    model: &ModelSnapshot<F>,
    test: &[LabeledExample],
    n_bins: usize,
) -> Result<CalibrationReport> {
    let pairs: Vec<(f64, bool)> = test
        .par_iter()
        .map(|e| {
            let p = model.predict(&e.triplet);
            (p.confidence().as_f64(), p.argmax() == e.label)
        })
        .collect();
    calibration_from_outcomes(&pairs, n_bins)
}

/// `P(A)` binned over `[0, 1]` against how often `A` is the true label.
pub fn reliability_curve<F: Scalar>(
    model: &ModelSnapshot<F>,
    test: &[LabeledExample],
    n_bins: usize,
) -> Result<CalibrationReport> {
    let pairs: Vec<(f64, bool)> = test
        .par_iter()
        .map(|e| (model.predict(&e.triplet).p_a.as_f64(), e.label == Label::A))
        .collect();
    binned_calibration(&pairs, 0.0, 1.0, n_bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean_confidence: f64,
}

/// Histogram of argmax confidence over `[0.5, 1]`.
pub fn confidence_histogram<F: Scalar>(
    model: &ModelSnapshot<F>,
    data: &[PreferenceTriplet],
    n_bins: usize,
) -> Result<ConfidenceHistogram> {
    if n_bins < 1 {
        return Err(Error::InvalidConfig("n_bins must be >= 1".into()));
    }
    let conf: Vec<f64> = data
        .par_iter()
        .map(|t| model.predict(t).confidence().as_f64())
        .collect();
    let mut counts = vec![0usize; n_bins];
    for &c in &conf {
        counts[bin_index(c, 0.5, 1.0, n_bins)] += 1;
    }
    let mean_confidence = if conf.is_empty() {
        0.0
    } else {
        conf.iter().sum::<f64>() / conf.len() as f64
    };
    Ok(ConfidenceHistogram {
        edges: (0..=n_bins)
            .map(|k| 0.5 + 0.5 * k as f64 / n_bins as f64)
            .collect(),
        counts,
        mean_confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(with = "crate::prefdata::fraction_serde")]
    pub fraction: Ratio<u64>,
    pub labeled_count: usize,
    pub srm_accuracy: f64,
    pub accuracy: f64,
}

/// For each labeled fraction: split `examples`, run SSRM with a single
/// pseudo-labeling round, and report held-out accuracy of the final model.
pub fn labeled_fraction_sweep<F: Scalar>(
    pre_model: &ModelSnapshot<F>,
    examples: &[LabeledExample],
    fractions: &[Ratio<u64>],
    split_seed: u64,
    cfg: &SsrmConfig,
    test: &[LabeledExample],
) -> Result<Vec<SweepPoint>> {
    if let Some(f) = fractions.iter().find(|f| f.is_zero() || **f > Ratio::one()) {
        return Err(Error::InvalidFraction(f.to_string()));
    }
    let single = SsrmConfig {
        iterations: 2,
        ..cfg.clone()
    };
    fractions
        .iter()
        .map(|&fraction| {
            let data = split(examples, &SplitSpec::new(fraction, split_seed))?;
            let labeled_count = data.m();
            let run = run_ssrm(pre_model, &data, &single, Some(test))?;
            let acc = |t: usize| {
                run.reports[t]
                    .eval
                    .as_ref()
                    .map(|e| e.overall_accuracy)
                    .expect("evaluation set was supplied")
            };
            Ok(SweepPoint {
                fraction,
                labeled_count,
                srm_accuracy: acc(0),
                accuracy: acc(1),
            })
        })
        .collect()
}
