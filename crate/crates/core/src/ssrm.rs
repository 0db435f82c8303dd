//! Semi-supervised reward modeling: an initial supervised fit on `D_l`, then
//! `T − 1` rounds of pseudo-labeling `D_u`, keeping confident labels,
//! and retraining on `D_l` plus the retained examples.
//!
//! Iteration `t ≥ 1` labels `D_u` with the model from iteration `t − 1` and
//! produces model `t`; a run with `iterations = T` yields models `0..T`.
//! Pseudo-labels are recomputed from scratch every round and never enter
//! `D_l`.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{fit, ModelSnapshot, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::prefdata::{Label, LabeledExample, PreferenceDataset, PreferenceTriplet};
use crate::provenance::config_hash;
use crate::scalar::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    PreferA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsrmConfig {
    /// Minimum confidence for a pseudo-label to be kept (inclusive).
    pub threshold: f64,
    /// Number of models produced, counting the initial supervised one.
    pub iterations: usize,
    /// Retrain every round from the pre-trained model rather than from the
    /// previous round's model.
    pub restart_from_initial: bool,
    pub train: TrainConfig,
    pub tie_break: TieBreak,
    /// Experimental, off by default: score each unlabeled pair in both
    /// response orders and average before taking the argmax.
    pub order_averaged_confidence: bool,
}

impl Default for SsrmConfig {
    fn default() -> Self {
        SsrmConfig {
            threshold: DEFAULT_THRESHOLD,
            iterations: 4,
            restart_from_initial: true,
            train: TrainConfig::default(),
            tie_break: TieBreak::PreferA,
            order_averaged_confidence: false,
        }
    }
}

impl SsrmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        self.train.validate()
    }
}

/// A hard pseudo-label and the labeling model's probability for it.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeledExample {
    pub triplet: PreferenceTriplet,
    pub label: Label,
    pub confidence: f64,
}

impl PseudoLabeledExample {
    pub fn to_labeled(&self) -> LabeledExample {
        LabeledExample::pseudo(self.triplet.clone(), self.label, self.confidence)
            .expect("argmax confidence of a binary distribution is in [0.5, 1]")
    }
}

/// Argmax label of the model's prediction, ties going to `A`.
pub fn pseudo_label<F: Scalar>(
    model: &ModelSnapshot<F>,
    u: &PreferenceTriplet,
) -> PseudoLabeledExample {
    let p = model.predict(u);
    PseudoLabeledExample {
        triplet: u.clone(),
        label: p.argmax(),
        confidence: p.confidence().as_f64(),
    }
}

fn pseudo_label_order_averaged<F: Scalar>(
    model: &ModelSnapshot<F>,
    u: &PreferenceTriplet,
) -> PseudoLabeledExample {
    let forward = model.predict(u).p_a.as_f64();
    let backward = model.predict(&u.swapped()).p_b.as_f64();
    let p_a = 0.5 * (forward + backward);
    let p_b = 1.0 - p_a;
    let (label, confidence) = if p_a >= p_b {
        (Label::A, p_a)
    } else {
        (Label::B, p_b)
    };
    PseudoLabeledExample {
        triplet: u.clone(),
        label,
        confidence,
    }
}

/// Labels every triplet; output order matches input order.
pub fn pseudo_label_all<F: Scalar>(
    model: &ModelSnapshot<F>,
    pool: &[PreferenceTriplet],
    order_averaged: bool,
) -> Vec<PseudoLabeledExample> {
    pool.par_iter()
        .map(|u| {
            if order_averaged {
                pseudo_label_order_averaged(model, u)
            } else {
                pseudo_label(model, u)
            }
        })
        .collect()
}

/// Keeps examples with `confidence >= s`, in order.
pub fn confidence_filter(pseudo: &[PseudoLabeledExample], s: f64) -> Vec<PseudoLabeledExample> {
    pseudo
        .iter()
        .filter(|p| p.confidence >= s)
        .cloned()
        .collect()
}

/// `D_t = D_l` followed by the retained pseudo-labeled examples.
pub fn build_iteration_dataset(
    d_l: &[LabeledExample],
    retained: &[PseudoLabeledExample],
) -> Result<Vec<LabeledExample>> {
    let labeled_ids: HashSet<&str> = d_l.iter().map(|e| e.id()).collect();
    if let Some(p) = retained
        .iter()
        .find(|p| labeled_ids.contains(p.triplet.id.as_str()))
    {
        return Err(Error::DuplicateId(p.triplet.id.clone()));
    }
    let mut d_t = Vec::with_capacity(d_l.len() + retained.len());
    d_t.extend_from_slice(d_l);
    d_t.extend(retained.iter().map(PseudoLabeledExample::to_labeled));
    Ok(d_t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub t: usize,
    /// m
    pub labeled_count: usize,
    /// n
    pub unlabeled_count: usize,
    /// |D_t| = m + pseudo_count
    pub d_t_size: usize,
    pub pseudo_count: usize,
    /// pseudo_count / |D_t|
    pub pseudo_fraction: f64,
    /// pseudo_count / n
    pub retained_fraction: f64,
    /// Mean argmax confidence of the labeling model over `D_u`; absent for
    /// `t = 0` and when `D_u` is empty.
    pub mean_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
}

impl IterationReport {
    /// Training-set size and pseudo-labeled share, e.g. `406.3K (56.9%)`.
    pub fn data_summary(&self) -> String {
        format_data_count(self.d_t_size, self.pseudo_count)
    }
}

/// Renders a dataset size with its pseudo-labeled share: `175K (0)`,
/// `406.3K (56.9%)`, `43.75K (0)`.
pub fn format_data_count(size: usize, pseudo_count: usize) -> String {
    let scaled = |v: f64, suffix: &str| {
        let s = format!("{v:.2}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        format!("{s}{suffix}")
    };
    let size_text = if size < 1_000 {
        size.to_string()
    } else if size < 1_000_000 {
        scaled(size as f64 / 1e3, "K")
    } else {
        scaled(size as f64 / 1e6, "M")
    };
    if pseudo_count == 0 {
        format!("{size_text} (0)")
    } else {
        format!(
            "{size_text} ({:.1}%)",
            100.0 * pseudo_count as f64 / size as f64
        )
    }
}

/// What one iteration produced, handed to the observer of [`run_ssrm_with`].
pub struct IterationArtifacts<'a, F> {
    pub t: usize,
    pub model: &'a ModelSnapshot<F>,
    pub training_set: &'a [LabeledExample],
    pub report: &'a IterationReport,
}

#[derive(Debug, Clone)]
pub struct SsrmRun<F> {
    /// Models `0..T`; the last is the output of the run.
    pub models: Vec<ModelSnapshot<F>>,
    pub reports: Vec<IterationReport>,
}

impl<F> SsrmRun<F> {
    pub fn final_model(&self) -> &ModelSnapshot<F> {
        self.models.last().expect("a run yields at least one model")
    }
}

pub fn run_ssrm<F: Scalar>(
    pre_model: &ModelSnapshot<F>,
    data: &PreferenceDataset,
    cfg: &SsrmConfig,
    eval_set: Option<&[LabeledExample]>,
) -> Result<SsrmRun<F>> {
    run_ssrm_with(pre_model, data, cfg, eval_set, |_| Ok(()))
}

/// Runs the full loop, calling `observe` once per iteration (including
/// `t = 0`) before moving on.
///
/// With no labeled data the pre-trained model is used as model 0 directly.
pub fn run_ssrm_with<F, O>(
    pre_model: &ModelSnapshot<F>,
    data: &PreferenceDataset,
    cfg: &SsrmConfig,
    eval_set: Option<&[LabeledExample]>,
    mut observe: O,
) -> Result<SsrmRun<F>>
where
    F: Scalar,
    O: FnMut(&IterationArtifacts<'_, F>) -> Result<()>,
{
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let d_l = data.labeled();
    let d_u = data.unlabeled();
    let (m, n) = (data.m(), data.n());

    let stamp = |mut model: ModelSnapshot<F>, t: usize| {
        model.provenance.config_hash = Some(hash.clone());
        model.provenance.iteration = Some(t);
        model.provenance.stage = if t == 0 { "srm" } else { "ssrm" }.into();
        model
    };
    let evaluate_on =
        |model: &ModelSnapshot<F>| eval_set.map(|test| evaluate(model, test)).transpose();

    let initial = if m > 0 {
        fit(pre_model, d_l, &cfg.train)?
    } else {
        pre_model.clone()
    };
    let initial = stamp(initial, 0);
    let report = IterationReport {
        t: 0,
        labeled_count: m,
        unlabeled_count: n,
        d_t_size: m,
        pseudo_count: 0,
        pseudo_fraction: 0.0,
        retained_fraction: 0.0,
        mean_confidence: None,
        eval: evaluate_on(&initial)?,
    };
    observe(&IterationArtifacts {
        t: 0,
        model: &initial,
        training_set: d_l,
        report: &report,
    })?;
    let mut models = vec![initial];
    let mut reports = vec![report];

    for t in 1..cfg.iterations {
        let labeler = &models[t - 1];
        let pseudo = pseudo_label_all(labeler, d_u, cfg.order_averaged_confidence);
        let mean_confidence =
            (n > 0).then(|| pseudo.iter().map(|p| p.confidence).sum::<f64>() / n as f64);
        let retained = confidence_filter(&pseudo, cfg.threshold);
        let d_t = build_iteration_dataset(d_l, &retained)?;
        let start = if cfg.restart_from_initial {
            pre_model
        } else {
            labeler
        };
        let model = if d_t.is_empty() {
            start.clone()
        } else {
            fit(start, &d_t, &cfg.train)?
        };
        let model = stamp(model, t);
        let pseudo_count = retained.len();
        let report = IterationReport {
            t,
            labeled_count: m,
            unlabeled_count: n,
            d_t_size: d_t.len(),
            pseudo_count,
            pseudo_fraction: if d_t.is_empty() {
                0.0
            } else {
                pseudo_count as f64 / d_t.len() as f64
            },
            retained_fraction: if n == 0 {
                0.0
            } else {
                pseudo_count as f64 / n as f64
            },
            mean_confidence,
            eval: evaluate_on(&model)?,
        };
        observe(&IterationArtifacts {
            t,
            model: &model,
            training_set: &d_t,
            report: &report,
        })?;
        models.push(model);
        reports.push(report);
    }
    Ok(SsrmRun { models, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::FeaturizerSpec;

    fn pl(id: &str, confidence: f64) -> PseudoLabeledExample {
        PseudoLabeledExample {
            triplet: PreferenceTriplet::new(id, "", "", ""),
            label: Label::A,
            confidence,
        }
    }

    fn zero() -> ModelSnapshot<f64> {
        ModelSnapshot::zeros(FeaturizerSpec::unigrams(256)).unwrap()
    }

    #[test]
    fn zero_model_pseudo_label_ties_to_a() {
        let p = pseudo_label(&zero(), &PreferenceTriplet::new("0", "x", "y", "z"));
        assert_eq!((p.label, p.confidence), (Label::A, 0.5));
    }

    #[test]
    fn confident_a_prediction() {
        let mut m = zero();
        m.set_bias((0.9f64 / 0.1).ln());
        let p = pseudo_label(&m, &PreferenceTriplet::new("0", "", "", ""));
        assert_eq!(p.label, Label::A);
        assert!((p.confidence - 0.9).abs() < 1e-12);
        m.set_bias(-m.bias());
        assert_eq!(
            pseudo_label(&m, &PreferenceTriplet::new("0", "", "", "")).label,
            Label::B
        );
    }

    #[test]
    fn threshold_is_inclusive() {
        let xs = [pl("0", 0.9), pl("1", 0.8), pl("2", 0.79)];
        let kept: Vec<_> = confidence_filter(&xs, 0.8)
            .into_iter()
            .map(|p| p.triplet.id)
            .collect();
        assert_eq!(kept, ["0", "1"]);
        assert_eq!(confidence_filter(&xs, 0.5).len(), 3);
        let saturated = [pl("0", 1.0), pl("1", 0.999_999)];
        assert_eq!(confidence_filter(&saturated, 1.0).len(), 1);
    }

    #[test]
    fn iteration_dataset_starts_with_labeled_pool() {
        let d_l = vec![LabeledExample::ground_truth(
            PreferenceTriplet::new("l0", "", "", ""),
            Label::B,
        )];
        assert_eq!(build_iteration_dataset(&d_l, &[]).unwrap(), d_l);
        let d_t = build_iteration_dataset(&d_l, &[pl("u0", 0.95)]).unwrap();
        assert_eq!(d_t.len(), 2);
        assert!(d_t[0].is_ground_truth());
        assert_eq!(d_t[1].confidence(), Some(0.95));
        assert!(matches!(
            build_iteration_dataset(&d_l, &[pl("l0", 0.95)]),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn data_count_rendering() {
        assert_eq!(format_data_count(406_300, 231_300), "406.3K (56.9%)");
        assert_eq!(format_data_count(310_000, 135_000), "310K (43.5%)");
        assert_eq!(format_data_count(402_700, 227_700), "402.7K (56.5%)");
        assert_eq!(format_data_count(175_000, 0), "175K (0)");
        assert_eq!(format_data_count(43_750, 0), "43.75K (0)");
        assert_eq!(format_data_count(0, 0), "0 (0)");
        assert_eq!(format_data_count(1_250_000, 0), "1.25M (0)");
    }

    #[test]
    fn config_validation() {
        let bad = SsrmConfig {
            threshold: 1.5,
            ..SsrmConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SsrmConfig {
            iterations: 0,
            ..SsrmConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_iteration_returns_srm_model() {
        let d_l: Vec<_> = (0..20)
            .map(|i| {
                LabeledExample::ground_truth(
                    PreferenceTriplet::new(format!("l{i}"), "", "a", "b"),
                    Label::A,
                )
            })
            .collect();
        let data =
            PreferenceDataset::new(d_l.clone(), vec![PreferenceTriplet::new("u", "", "a", "b")])
                .unwrap();
        let cfg = SsrmConfig {
            iterations: 1,
            ..SsrmConfig::default()
        };
        let run = run_ssrm(&zero(), &data, &cfg, None).unwrap();
        assert_eq!(run.models.len(), 1);
        assert_eq!(run.reports.len(), 1);
        let srm = fit(&zero(), &d_l, &cfg.train).unwrap();
        assert_eq!(run.final_model().weights(), srm.weights());
    }

    #[test]
    fn no_labeled_data_uses_pretrained_model() {
        let mut pre = zero();
        pre.set_bias(5.0);
        let data = PreferenceDataset::new(
            vec![],
            (0..4)
                .map(|i| PreferenceTriplet::new(i.to_string(), "", "a", "b"))
                .collect(),
        )
        .unwrap();
        let cfg = SsrmConfig {
            iterations: 2,
            ..SsrmConfig::default()
        };
        let run = run_ssrm(&pre, &data, &cfg, None).unwrap();
        assert_eq!(run.models[0].weights(), pre.weights());
        assert_eq!(run.models[0].bias(), 5.0);
        assert_eq!(run.reports[1].pseudo_count, 4);
        assert_eq!(run.reports[1].d_t_size, 4);
        assert_eq!(run.reports[1].pseudo_fraction, 1.0);
    }
}
