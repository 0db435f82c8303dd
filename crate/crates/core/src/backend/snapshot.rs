//! Snapshot files.
//!
//! A snapshot is a single JSON document:
//!
//! ```text
//! {
//!   "format": "ssrm-preference-snapshot",
//!   "version": 1,
//!   "scalar": "f64",
//!   "featurizer": {"hash_dimension": 262144, "ngram_orders": [1, 2], "hash_seed": 0},
//!   "bias": -0.013,
//!   "weights": [[17, 0.42], [9001, -1.3]],
//!   "provenance": {"config_hash": "…", "iteration": 3, "stage": "ssrm"}
//! }
//! ```
//!
//! `weights` lists only entries whose bit pattern is not `+0.0`, as
//! `[index, value]` pairs in increasing index order. Values are written with
//! shortest round-trip formatting so a reload is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::featurizer::FeaturizerSpec;
use super::model::{ModelSnapshot, Provenance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SNAPSHOT_FORMAT: &str = "ssrm-preference-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    format: String,
    version: u32,
    scalar: String,
    featurizer: FeaturizerSpec,
    bias: f64,
    weights: Vec<(u64, f64)>,
    provenance: Provenance,
}

pub fn snapshot_to_string<F: Scalar>(model: &ModelSnapshot<F>) -> Result<String> {
    let file = SnapshotFile {
        format: SNAPSHOT_FORMAT.into(),
        version: SNAPSHOT_VERSION,
        scalar: F::NAME.into(),
        featurizer: model.featurizer().clone(),
        bias: model.bias().as_f64(),
        weights: model
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, w)| w.as_f64().to_bits() != 0)
            .map(|(i, w)| (i as u64, w.as_f64()))
            .collect(),
        provenance: model.provenance.clone(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn snapshot_from_str<F: Scalar>(text: &str) -> Result<ModelSnapshot<F>> {
    let file: SnapshotFile = serde_json::from_str(text)?;
    if file.format != SNAPSHOT_FORMAT {
        return Err(Error::Snapshot(format!("unknown format {:?}", file.format)));
    }
    if file.version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!(
            "version {} not supported (expected {SNAPSHOT_VERSION})",
            file.version
        )));
    }
    if file.scalar != F::NAME {
        return Err(Error::Snapshot(format!(
            "snapshot holds {} parameters, requested {}",
            file.scalar,
            F::NAME
        )));
    }
    file.featurizer.validate()?;
    let dim = file.featurizer.hash_dimension;
    let mut weights = vec![F::zero(); dim];
    let mut previous: Option<u64> = None;
    for (i, w) in file.weights {
        if i as usize >= dim || previous.is_some_and(|p| p >= i) {
            return Err(Error::Snapshot(format!(
                "weight index {i} out of order or range"
            )));
        }
        previous = Some(i);
        weights[i as usize] = F::of(w);
    }
    ModelSnapshot::from_parts(weights, F::of(file.bias), file.featurizer, file.provenance)
}

/// Writes through a temporary file and renames it into place, so readers
/// never observe a half-written snapshot.
pub fn save_snapshot<F: Scalar>(model: &ModelSnapshot<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = snapshot_to_string(model)?;
    let tmp = path.with_extension("json.partial");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot<F: Scalar>(path: impl AsRef<Path>) -> Result<ModelSnapshot<F>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    snapshot_from_str(&text)
}
