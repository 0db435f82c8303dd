use serde::{Deserialize, Serialize};

use super::featurizer::{FeatureVector, FeaturizerSpec};
use crate::error::{Error, Result};
use crate::prefdata::{format_template, Label, LabeledExample, PreferenceTriplet};
use crate::scalar::Scalar;

/// Where a snapshot came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    #[serde(default)]
    pub stage: String,
}

/// `P(A)` and `P(B)` for one triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionDistribution<F> {
    pub p_a: F,
    pub p_b: F,
}

impl<F: Scalar> PredictionDistribution<F> {
    pub fn from_logit(z: F) -> Self {
        let p_a = z.sigmoid();
        PredictionDistribution {
            p_a,
            p_b: F::one() - p_a,
        }
    }

    /// Most probable label; an exact tie goes to `A`.
    pub fn argmax(&self) -> Label {
        if self.p_a >= self.p_b {
            Label::A
        } else {
            Label::B
        }
    }

    pub fn confidence(&self) -> F {
        self.p_a.max(self.p_b)
    }

    pub fn prob(&self, label: Label) -> F {
        match label {
            Label::A => self.p_a,
            Label::B => self.p_b,
        }
    }
}

/// Binary logistic preference model over hashed template features:
/// `P(A) = σ(w·φ(T(x, a1, a2)) + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot<F> {
    weights: Vec<F>,
    bias: F,
    featurizer: FeaturizerSpec,
    pub provenance: Provenance,
}

impl<F: Scalar> ModelSnapshot<F> {
    /// The untrained model: all weights and the bias are zero, so every
    /// prediction is `(0.5, 0.5)`.
    pub fn zeros(featurizer: FeaturizerSpec) -> Result<Self> {
        featurizer.validate()?;
        Ok(ModelSnapshot {
            weights: vec![F::zero(); featurizer.hash_dimension],
            bias: F::zero(),
            featurizer,
            provenance: Provenance {
                stage: "pretrained".into(),
                ..Provenance::default()
            },
        })
    }

    pub fn from_parts(
        weights: Vec<F>,
        bias: F,
        featurizer: FeaturizerSpec,
        provenance: Provenance,
    ) -> Result<Self> {
        featurizer.validate()?;
        if weights.len() != featurizer.hash_dimension {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for hash dimension {}",
                weights.len(),
                featurizer.hash_dimension
            )));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Snapshot("non-finite parameter".into()));
        }
        Ok(ModelSnapshot {
            weights,
            bias,
            featurizer,
            provenance,
        })
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [F] {
        &mut self.weights
    }

    pub fn bias(&self) -> F {
        self.bias
    }

    pub fn set_bias(&mut self, bias: F) {
        self.bias = bias;
    }

    pub fn featurizer(&self) -> &FeaturizerSpec {
        &self.featurizer
    }

    pub fn featurize(&self, t: &PreferenceTriplet) -> FeatureVector {
        self.featurizer.featurize(&format_template(t))
    }

    /// `w·φ + b`. Callers must have checked the dimension.
    pub(crate) fn logit_unchecked(&self, x: &FeatureVector) -> F {
        let mut z = self.bias;
        for &(i, c) in x.entries() {
            z += self.weights[i as usize] * F::of(c as f64);
        }
        z
    }

    pub fn logit(&self, x: &FeatureVector) -> Result<F> {
        self.check_dimension(x)?;
        Ok(self.logit_unchecked(x))
    }

    pub fn predict_features(&self, x: &FeatureVector) -> Result<PredictionDistribution<F>> {
        self.logit(x).map(PredictionDistribution::from_logit)
    }

    pub fn predict(&self, t: &PreferenceTriplet) -> PredictionDistribution<F> {
        PredictionDistribution::from_logit(self.logit_unchecked(&self.featurize(t)))
    }

    pub(crate) fn check_dimension(&self, x: &FeatureVector) -> Result<()> {
        if x.dimension() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "feature dimension {} vs model dimension {}",
                x.dimension(),
                self.weights.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn l2_norm_sq(&self) -> F {
        self.weights.iter().map(|&w| w * w).sum()
    }
}

/// `−log P(label)` from the logit, computed stably.
pub(crate) fn example_loss<F: Scalar>(z: F, label: Label) -> F {
    match label {
        Label::A => (-z).softplus(),
        Label::B => z.softplus(),
    }
}

/// d loss / d logit: `P(A) − 1[label = A]`.
pub(crate) fn logit_residual<F: Scalar>(z: F, label: Label) -> F {
    let p_a = z.sigmoid();
    match label {
        Label::A => p_a - F::one(),
        Label::B => p_a,
    }
}

/// Gradient of the loss with respect to every weight and the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<F> {
    pub weights: Vec<F>,
    pub bias: F,
}

fn featurize_batch<F: Scalar>(
    model: &ModelSnapshot<F>,
    batch: &[LabeledExample],
) -> Result<Vec<(FeatureVector, Label)>> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    Ok(batch
        .iter()
        .map(|e| (model.featurize(&e.triplet), e.label))
        .collect())
}

/// Mean negative log-likelihood of the stored labels, plus `l2/2 · ‖w‖²`.
pub fn srm_loss<F: Scalar>(
    model: &ModelSnapshot<F>,
    batch: &[LabeledExample],
    l2: f64,
) -> Result<F> {
    let feats = featurize_batch(model, batch)?;
    Ok(loss_on_features(model, &feats, l2))
}

pub(crate) fn loss_on_features<F: Scalar>(
    model: &ModelSnapshot<F>,
    feats: &[(FeatureVector, Label)],
    l2: f64,
) -> F {
    let total: F = feats
        .iter()
        .map(|(x, y)| example_loss(model.logit_unchecked(x), *y))
        .sum();
    let mut loss = total / F::of(feats.len() as f64);
    if l2 > 0.0 {
        loss += F::of(0.5 * l2) * model.l2_norm_sq();
    }
    loss
}

/// Exact gradient of [`srm_loss`].
pub fn loss_gradient<F: Scalar>(
    model: &ModelSnapshot<F>,
    batch: &[LabeledExample],
    l2: f64,
) -> Result<Gradient<F>> {
    let feats = featurize_batch(model, batch)?;
    let scale = F::one() / F::of(feats.len() as f64);
    let mut grad = Gradient {
        weights: vec![F::zero(); model.weights.len()],
        bias: F::zero(),
    };
    for (x, y) in &feats {
        let r = logit_residual(model.logit_unchecked(x), *y) * scale;
        for &(i, c) in x.entries() {
            grad.weights[i as usize] += r * F::of(c as f64);
        }
        grad.bias += r;
    }
    if l2 > 0.0 {
        let l2 = F::of(l2);
        for (g, &w) in grad.weights.iter_mut().zip(&model.weights) {
            *g += l2 * w;
        }
    }
    Ok(grad)
}
