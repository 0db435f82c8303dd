use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::featurizer::FeatureVector;
use super::model::{example_loss, logit_residual, ModelSnapshot};
use crate::error::{Error, Result};
use crate::prefdata::{Label, LabeledExample};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_schedule: LrSchedule,
    pub warmup_steps: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 128,
            epochs: 1,
            lr_schedule: LrSchedule::Constant,
            warmup_steps: 0,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::InvalidConfig(format!("l2 {} must be >= 0", self.l2)));
        }
        Ok(())
    }

    /// Step size for `step` (zero-based) out of `total_steps`.
    pub fn learning_rate_at(&self, step: usize, total_steps: usize) -> f64 {
        let base = self.learning_rate;
        if step < self.warmup_steps {
            return base * (step + 1) as f64 / self.warmup_steps as f64;
        }
        match self.lr_schedule {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let span = total_steps.saturating_sub(self.warmup_steps).max(1);
                let progress = (step - self.warmup_steps) as f64 / span as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
            }
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Trains a copy of `initial` for `cfg.epochs` shuffled passes over `data`.
///
/// The result depends only on `initial`, the order of `data` and `cfg`.
pub fn fit<F: Scalar>(
    initial: &ModelSnapshot<F>,
    data: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<ModelSnapshot<F>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let feats: Vec<(FeatureVector, Label)> = data
        .par_iter()
        .map(|e| (initial.featurize(&e.triplet), e.label))
        .collect();
    fit_features(initial, &feats, cfg)
}

fn fit_features<F: Scalar>(
    initial: &ModelSnapshot<F>,
    feats: &[(FeatureVector, Label)],
    cfg: &TrainConfig,
) -> Result<ModelSnapshot<F>> {
    let mut model = initial.clone();
    let dim = model.weights().len();
    let total_steps = cfg.epochs * cfg.steps_per_epoch(feats.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut grad = vec![F::zero(); dim];
    let mut touched: Vec<u32> = Vec::new();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = F::one() / F::of(batch.len() as f64);
            let mut loss = F::zero();
            let mut bias_grad = F::zero();
            for &k in batch {
                let (x, y) = &feats[k];
                let z = model.logit_unchecked(x);
                loss += example_loss(z, *y);
                let r = logit_residual(z, *y);
                for &(i, c) in x.entries() {
                    let g = &mut grad[i as usize];
                    if *g == F::zero() {
                        touched.push(i);
                    }
                    *g += r * F::of(c as f64);
                }
                bias_grad += r;
            }
            loss *= scale;
            if cfg.l2 > 0.0 {
                loss += F::of(0.5 * cfg.l2) * model.l2_norm_sq();
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }

            let lr = F::of(cfg.learning_rate_at(step, total_steps));
            let weights = model.weights_mut();
            if cfg.l2 > 0.0 {
                let shrink = F::one() - lr * F::of(cfg.l2);
                weights.iter_mut().for_each(|w| *w *= shrink);
            }
            // `touched` may repeat an index whose partial sum passed through
            // zero; the second visit sees the reset value and is a no-op.
            for &i in &touched {
                let g = &mut grad[i as usize];
                weights[i as usize] -= lr * *g * scale;
                *g = F::zero();
            }
            touched.clear();
            let bias = model.bias() - lr * bias_grad * scale;
            model.set_bias(bias);
            step += 1;
        }
    }
    if !model.bias().is_finite() || model.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: cfg.epochs - 1,
            step: step.saturating_sub(1),
        });
    }
    Ok(model)
}
