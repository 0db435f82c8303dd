//! A synthetic preference world with a known reward.
//!
//! Each vocabulary token `w{k}` has a latent quality `q_k ~ N(0, 1)`. A
//! response is a bag of `response_length` uniformly drawn tokens and its
//! reward is the sum of their qualities. Labels follow the Bradley-Terry law
//! `P(A) = σ(β · (r_a − r_b))`, or the Bayes label `argmax(r_a, r_b)` when
//! `deterministic_labels` is set. Prompts are random tokens and carry no
//! signal.
//!
//! Every triplet is drawn from its own ChaCha stream keyed by its index, so
//! output does not depend on how generation is parallelized.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prefdata::{Label, LabeledExample, PreferenceTriplet, HEADER_KEY};
use crate::scalar::Scalar;

const QUALITY_SALT: u64 = 0x51ab_1e00_0000_0001;
const SAMPLE_SALT: u64 = 0x51ab_1e00_0000_0002;
const BAYES_SALT: u64 = 0x51ab_1e00_0000_0003;
const BAYES_CHUNK: usize = 4096;

fn keyed_rng(seed: u64, salt: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(stream);
    rng
}

/// Everything needed to rebuild a world; the qualities follow from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub vocab_size: usize,
    pub response_length: usize,
    pub prompt_length: usize,
    pub temperature: f64,
    pub deterministic_labels: bool,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            vocab_size: 500,
            response_length: 12,
            prompt_length: 4,
            temperature: 1.0,
            deterministic_labels: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub params: WorldParams,
    qualities: Vec<f64>,
}

/// A default world of the given vocabulary size.
pub fn sample_world(vocab_size: usize, seed: u64) -> Result<WorldSpec> {
    WorldSpec::new(WorldParams {
        vocab_size,
        seed,
        ..WorldParams::default()
    })
}

impl WorldSpec {
    pub fn new(params: WorldParams) -> Result<Self> {
        if params.vocab_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "vocab_size {} leaves no preference signal (need >= 2)",
                params.vocab_size
            )));
        }
        if params.response_length == 0 {
            return Err(Error::InvalidConfig("response_length must be >= 1".into()));
        }
        if !(params.temperature.is_finite() && params.temperature >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} must be finite and >= 0",
                params.temperature
            )));
        }
        let mut rng = keyed_rng(params.seed, QUALITY_SALT, 0);
        let qualities = (0..params.vocab_size)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Ok(WorldSpec { params, qualities })
    }

    pub fn qualities(&self) -> &[f64] {
        &self.qualities
    }

    pub fn token(k: usize) -> String {
        format!("w{k}")
    }

    /// Sum of token qualities for a space-separated response of `w{k}` tokens.
    /// Unknown tokens contribute nothing.
    pub fn reward(&self, response: &str) -> f64 {
        response
            .split_whitespace()
            .filter_map(|tok| tok.strip_prefix('w')?.parse::<usize>().ok())
            .filter_map(|k| self.qualities.get(k))
            .sum()
    }

    /// `P(A)` under the label law for a reward gap `r_a − r_b`.
    pub fn preference_probability(&self, gap: f64) -> f64 {
        (self.params.temperature * gap).sigmoid()
    }

    fn draw_response(&self, rng: &mut ChaCha8Rng) -> (String, f64) {
        let mut reward = 0.0;
        let tokens: Vec<String> = (0..self.params.response_length)
            .map(|_| {
                let k = rng.random_range(0..self.params.vocab_size);
                reward += self.qualities[k];
                Self::token(k)
            })
            .collect();
        (tokens.join(" "), reward)
    }

    fn triplet_at(&self, index: u64) -> SyntheticTriplet {
        let mut rng = keyed_rng(self.params.seed, SAMPLE_SALT, index);
        let prompt: Vec<String> = (0..self.params.prompt_length)
            .map(|_| Self::token(rng.random_range(0..self.params.vocab_size)))
            .collect();
        let (response_a, latent_reward_a) = self.draw_response(&mut rng);
        let (response_b, latent_reward_b) = self.draw_response(&mut rng);
        let bayes_label = if latent_reward_a >= latent_reward_b {
            Label::A
        } else {
            Label::B
        };
        let label = if self.params.deterministic_labels {
            bayes_label
        } else {
            let p_a = self.preference_probability(latent_reward_a - latent_reward_b);
            if rng.random::<f64>() < p_a {
                Label::A
            } else {
                Label::B
            }
        };
        let triplet =
            PreferenceTriplet::new(index.to_string(), prompt.join(" "), response_a, response_b);
        SyntheticTriplet {
            example: LabeledExample::ground_truth(triplet, label),
            latent_reward_a,
            latent_reward_b,
            bayes_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTriplet {
    pub example: LabeledExample,
    pub latent_reward_a: f64,
    pub latent_reward_b: f64,
    pub bayes_label: Label,
}

/// Triplets with indices `0..count`.
pub fn generate(world: &WorldSpec, count: usize) -> Result<Vec<SyntheticTriplet>> {
    generate_range(world, 0, count)
}

/// Triplets with indices `first..first + count`; ids are the indices.
pub fn generate_range(
    world: &WorldSpec,
    first: u64,
    count: usize,
) -> Result<Vec<SyntheticTriplet>> {
    if count == 0 {
        return Err(Error::Empty("synthetic triplet count"));
    }
    Ok((first..first + count as u64)
        .into_par_iter()
        .map(|i| world.triplet_at(i))
        .collect())
}

pub fn labeled_examples(triplets: &[SyntheticTriplet]) -> Vec<LabeledExample> {
    triplets.iter().map(|s| s.example.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of `E[max(p, 1 − p)]` with `p = σ(β · Δr)` over fresh
/// response pairs: the best accuracy any predictor can reach in this world.
pub fn bayes_accuracy(world: &WorldSpec, sample_count: usize) -> Result<MonteCarloEstimate> {
    if sample_count == 0 {
        return Err(Error::Empty("Monte-Carlo sample count"));
    }
    if world.params.deterministic_labels {
        return Ok(MonteCarloEstimate {
            mean: 1.0,
            stderr: 0.0,
            samples: sample_count,
        });
    }
    let chunks = sample_count.div_ceil(BAYES_CHUNK);
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = keyed_rng(world.params.seed, BAYES_SALT, c as u64);
            let len = BAYES_CHUNK.min(sample_count - c * BAYES_CHUNK);
            let mut acc = (0.0, 0.0);
            for _ in 0..len {
                let (_, ra) = world.draw_response(&mut rng);
                let (_, rb) = world.draw_response(&mut rng);
                let p = world.preference_probability(ra - rb);
                let v = p.max(1.0 - p);
                acc.0 += v;
                acc.1 += v * v;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = sample_count as f64;
    let mean = sum / n;
    let var = if sample_count > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        stderr: (var / n).sqrt(),
        samples: sample_count,
    })
}

/// Side-file record with the hidden quantities for one triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub id: String,
    pub latent_reward_a: f64,
    pub latent_reward_b: f64,
    pub bayes_label: Label,
}

pub fn write_oracle<W: Write>(w: &mut W, triplets: &[SyntheticTriplet]) -> Result<()> {
    for s in triplets {
        let rec = OracleRecord {
            id: s.example.id().to_string(),
            latent_reward_a: s.latent_reward_a,
            latent_reward_b: s.latent_reward_b,
            bayes_label: s.bayes_label,
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<oracle>", e))?;
    }
    Ok(())
}

/// Reads oracle records, skipping a `_header` line if present.
pub fn read_oracle<R: BufRead>(r: R) -> Result<Vec<OracleRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        if value.get(HEADER_KEY).is_some() {
            continue;
        }
        out.push(
            serde_json::from_value(value).map_err(|e| Error::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        assert_eq!(sample_world(50, 3).unwrap(), sample_world(50, 3).unwrap());
        assert_ne!(
            sample_world(50, 3).unwrap().qualities(),
            sample_world(50, 4).unwrap().qualities()
        );
    }

    #[test]
    fn degenerate_vocab_rejected() {
        assert!(sample_world(1, 0).is_err());
    }

    #[test]
    fn qualities_are_standard_normal_on_average() {
        let w = sample_world(10_000, 17).unwrap();
        let mean = w.qualities().iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() <= 0.1, "mean {mean}");
    }

    #[test]
    fn rewards_recompute_from_text() {
        let w = sample_world(100, 1).unwrap();
        for s in generate(&w, 50).unwrap() {
            assert!((w.reward(&s.example.triplet.response_a) - s.latent_reward_a).abs() < 1e-12);
            assert!((w.reward(&s.example.triplet.response_b) - s.latent_reward_b).abs() < 1e-12);
            let expect = if s.latent_reward_a >= s.latent_reward_b {
                Label::A
            } else {
                Label::B
            };
            assert_eq!(s.bayes_label, expect);
            assert_eq!(s.example.triplet.response_a.split(' ').count(), 12);
        }
    }

    #[test]
    fn deterministic_labels_follow_bayes() {
        let w = WorldSpec::new(WorldParams {
            deterministic_labels: true,
            ..WorldParams::default()
        })
        .unwrap();
        assert!(generate(&w, 500)
            .unwrap()
            .iter()
            .all(|s| s.example.label == s.bayes_label));
        assert_eq!(bayes_accuracy(&w, 10).unwrap().mean, 1.0);
    }

    #[test]
    fn zero_temperature_is_a_coin_flip() {
        let w = WorldSpec::new(WorldParams {
            temperature: 0.0,
            seed: 8,
            ..WorldParams::default()
        })
        .unwrap();
        let xs = generate(&w, 10_000).unwrap();
        let frac_a = xs.iter().filter(|s| s.example.label == Label::A).count() as f64 / 1e4;
        assert!((frac_a - 0.5).abs() <= 0.02, "{frac_a}");
        assert_eq!(bayes_accuracy(&w, 1000).unwrap().mean, 0.5);
    }

    #[test]
    fn generation_is_index_keyed() {
        let w = sample_world(100, 5).unwrap();
        let all = generate(&w, 30).unwrap();
        let tail = generate_range(&w, 10, 20).unwrap();
        assert_eq!(&all[10..], &tail[..]);
        assert!(generate(&w, 0).is_err());
    }

    #[test]
    fn oracle_side_file_round_trip() {
        let w = sample_world(100, 5).unwrap();
        let xs = generate(&w, 5).unwrap();
        let mut buf = b"{\"_header\":{\"config_hash\":\"x\"}}\n".to_vec();
        write_oracle(&mut buf, &xs).unwrap();
        let back = read_oracle(&buf[..]).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back[2].latent_reward_a, xs[2].latent_reward_a);
        assert_eq!(back[2].bayes_label, xs[2].bayes_label);
    }
}
