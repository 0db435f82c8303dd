use std::hash::Hasher;

use serde::{Deserialize, Serialize};
use twox_hash::XxHash64;

use crate::error::{Error, Result};
use crate::prefdata::{CONTEXT_MARKER, RESPONSE_A_MARKER, RESPONSE_B_MARKER};

pub const DEFAULT_HASH_DIMENSION: usize = 1 << 18;

const MARKERS: [&str; 3] = [CONTEXT_MARKER, RESPONSE_A_MARKER, RESPONSE_B_MARKER];

/// Hashed bag-of-n-grams over a rendered preference template.
///
/// Tokens are whitespace-separated; each marker is a token of its own and
/// opens a section. N-grams never cross a marker and are hashed together with
/// the section they occur in, so the same word under `[RESPONSE A]` and under
/// `[RESPONSE B]` lands in different buckets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerSpec {
    pub hash_dimension: usize,
    pub ngram_orders: Vec<usize>,
    #[serde(default)]
    pub hash_seed: u64,
}

impl Default for FeaturizerSpec {
    fn default() -> Self {
        FeaturizerSpec {
            hash_dimension: DEFAULT_HASH_DIMENSION,
            ngram_orders: vec![1, 2],
            hash_seed: 0,
        }
    }
}

impl FeaturizerSpec {
    pub fn unigrams(hash_dimension: usize) -> Self {
        FeaturizerSpec {
            hash_dimension,
            ngram_orders: vec![1],
            hash_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hash_dimension < 2 || self.hash_dimension > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "hash_dimension {} must be in [2, 2^32)",
                self.hash_dimension
            )));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(Error::InvalidConfig(
                "ngram_orders must be nonempty with every order >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn featurize(&self, template_text: &str) -> FeatureVector {
        let mut indices = Vec::new();
        for (section, tokens) in sections(template_text) {
            for &order in &self.ngram_orders {
                for gram in tokens.windows(order) {
                    indices.push(self.bucket(section, gram));
                }
            }
        }
        FeatureVector::from_indices(self.hash_dimension, indices)
    }

    fn bucket(&self, section: u8, gram: &[&str]) -> u32 {
        let mut h = XxHash64::with_seed(self.hash_seed);
        h.write_u8(section);
        h.write_u8(gram.len() as u8);
        for token in gram {
            h.write(token.as_bytes());
            h.write_u8(0x1f);
        }
        (h.finish() % self.hash_dimension as u64) as u32
    }
}

/// Splits a rendered template into marker-delimited token runs. Section 0 is
/// anything before the first marker; markers 1..=3 follow `MARKERS` order.
fn sections(text: &str) -> Vec<(u8, Vec<&str>)> {
    let mut out: Vec<(u8, Vec<&str>)> = vec![(0, Vec::new())];
    let mut rest = text;
    loop {
        let next = MARKERS
            .iter()
            .enumerate()
            .filter_map(|(k, m)| rest.find(m).map(|pos| (pos, k)))
            .min();
        let Some((pos, k)) = next else {
            out.last_mut().unwrap().1.extend(rest.split_whitespace());
            break;
        };
        out.last_mut()
            .unwrap()
            .1
            .extend(rest[..pos].split_whitespace());
        out.push((k as u8 + 1, vec![MARKERS[k]]));
        rest = &rest[pos + MARKERS[k].len()..];
    }
    out
}

/// Sparse count vector, sorted by index with no duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    dimension: usize,
    entries: Vec<(u32, u32)>,
}

impl FeatureVector {
    pub fn from_indices(dimension: usize, mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::with_capacity(indices.len());
        for i in indices {
            match entries.last_mut() {
                Some((j, c)) if *j == i => *c += 1,
                _ => entries.push((i, 1)),
            }
        }
        FeatureVector { dimension, entries }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}
