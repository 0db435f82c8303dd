//! The trainable preference model: featurization, logistic prediction over
//! `{A, B}`, the negative log-likelihood loss and its gradient, mini-batch
//! SGD, and snapshot files.

mod featurizer;
mod model;
mod snapshot;
mod train;

pub use featurizer::{FeatureVector, FeaturizerSpec, DEFAULT_HASH_DIMENSION};
pub use model::{
    loss_gradient, srm_loss, Gradient, ModelSnapshot, PredictionDistribution, Provenance,
};
pub use snapshot::{
    load_snapshot, save_snapshot, snapshot_from_str, snapshot_to_string, SNAPSHOT_FORMAT,
    SNAPSHOT_VERSION,
};
pub use train::{fit, LrSchedule, TrainConfig};
