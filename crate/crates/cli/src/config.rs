//! Experiment configuration: one TOML file, every key overridable with
//! `--set dotted.key=value`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use ssrm_core::backend::FeaturizerSpec;
use ssrm_core::prefdata::SplitSpec;
use ssrm_core::ssrm::SsrmConfig;
use ssrm_core::synth::WorldParams;
use ssrm_core::Fraction;

pub const OUTPUT_ROOT_ENV: &str = "SSRM_OUTPUT_ROOT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds response-order randomization of the labeled data at load time.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    pub featurizer: FeaturizerSpec,
    /// Starting snapshot; a zero model over `featurizer` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_model: Option<PathBuf>,
    pub ssrm: SsrmConfig,
    pub output: OutputConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// JSONL dataset; mutually exclusive with `synth`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    pub randomize_order: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            synth: None,
            randomize_order: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub world: WorldParams,
    pub count: usize,
    /// Held-out triplets generated after the training indices.
    pub test_count: usize,
    pub bayes_samples: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            world: WorldParams::default(),
            count: 40_000,
            test_count: 10_000,
            bayes_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Also write `augmented_t{t}.jsonl` for every iteration.
    pub dump_augmented: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
    pub n_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            test_path: None,
            snapshot: None,
            n_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fractions: Vec<String>,
    pub split_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fractions: ["1/16", "1/8", "1/4", "1/2", "1"]
                .map(String::from)
                .to_vec(),
            split_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn parsed_fractions(&self) -> Result<Vec<Fraction>> {
        self.fractions
            .iter()
            .map(|f| ssrm_core::prefdata::parse_fraction(f).map_err(anyhow::Error::msg))
            .collect()
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `key=value` overrides, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.path.is_some() && self.data.synth.is_some() {
            bail!("data.path and data.synth are mutually exclusive");
        }
        if let Some(split) = &self.split {
            split.validate()?;
        }
        self.featurizer.validate()?;
        self.ssrm.validate()?;
        if self.eval.n_bins < 2 {
            bail!("eval.n_bins must be >= 2");
        }
        self.sweep.parsed_fractions()?;
        Ok(())
    }

    /// Hash of everything except where outputs go.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        Ok(ssrm_core::provenance::config_hash(&canonical)?)
    }

    /// `--out`, else `output_dir`, else `$SSRM_OUTPUT_ROOT/<name>`, else `runs/<name>`.
    pub fn resolve_output(&self, flag: Option<&Path>, name: &str) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(name),
            None => PathBuf::from("runs").join(name),
        }
    }
}

/// Sets `a.b.c = value` in the document. The value is parsed as a TOML
/// literal when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .with_context(|| format!("override {item:?} is not key=value"))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override key {key:?}");
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override {key:?} descends into non-table {part:?}"),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
