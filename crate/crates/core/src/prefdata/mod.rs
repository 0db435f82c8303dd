//! Preference data model: triplets, labels, datasets, and the operations
//! that prepare them for training (template rendering, order randomization,
//! labeled/unlabeled splitting, JSON Lines I/O).

mod jsonl;
mod split;
mod template;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use jsonl::{
    load_entries, load_jsonl, read_entries, save_dataset, write_entries, write_header,
    write_labeled, write_triplets, Entry, JsonlFile, HEADER_KEY,
};
pub(crate) use split::fraction_string as fraction_serde;
pub use split::{parse_fraction, split, SplitSpec};
pub use template::{format_template, CONTEXT_MARKER, RESPONSE_A_MARKER, RESPONSE_B_MARKER};

/// Which response is preferred: `A` is the first (`response_a`), `B` the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn flip(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "A" => Some(Label::A),
            "B" => Some(Label::B),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    GroundTruth,
    Pseudo,
}

/// A prompt with two candidate responses.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PreferenceTriplet {
    pub id: String,
    pub prompt: String,
    pub response_a: String,
    pub response_b: String,
    pub category: Option<String>,
}

impl PreferenceTriplet {
    pub fn new(
        id: impl Into<String>,
        prompt: impl Into<String>,
        response_a: impl Into<String>,
        response_b: impl Into<String>,
    ) -> Self {
        PreferenceTriplet {
            id: id.into(),
            prompt: prompt.into(),
            response_a: response_a.into(),
            response_b: response_b.into(),
            category: None,
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    /// The same triplet with the two responses exchanged.
    pub fn swapped(&self) -> PreferenceTriplet {
        PreferenceTriplet {
            response_a: self.response_b.clone(),
            response_b: self.response_a.clone(),
            ..self.clone()
        }
    }
}

/// A triplet with a preference label, either annotated or pseudo-labeled.
///
/// `confidence` is present exactly when the label is a pseudo-label, and then
/// lies in `[0.5, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub triplet: PreferenceTriplet,
    pub label: Label,
    source: LabelSource,
    confidence: Option<f64>,
}

impl LabeledExample {
    pub fn ground_truth(triplet: PreferenceTriplet, label: Label) -> Self {
        LabeledExample {
            triplet,
            label,
            source: LabelSource::GroundTruth,
            confidence: None,
        }
    }

    pub fn pseudo(triplet: PreferenceTriplet, label: Label, confidence: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&confidence) {
            return Err(Error::InvalidRecord {
                id: triplet.id,
                message: format!("pseudo-label confidence {confidence} outside [0.5, 1]"),
            });
        }
        Ok(LabeledExample {
            triplet,
            label,
            source: LabelSource::Pseudo,
            confidence: Some(confidence),
        })
    }

    pub fn source(&self) -> LabelSource {
        self.source
    }

    pub fn confidence(&self) -> Option<f64> {
        self.confidence
    }

    pub fn is_ground_truth(&self) -> bool {
        self.source == LabelSource::GroundTruth
    }

    pub fn id(&self) -> &str {
        &self.triplet.id
    }

    /// Exchanges the responses and flips the label; the preferred text is unchanged.
    pub fn swapped(&self) -> LabeledExample {
        LabeledExample {
            triplet: self.triplet.swapped(),
            label: self.label.flip(),
            ..self.clone()
        }
    }

    /// Text of the preferred response.
    pub fn winner(&self) -> &str {
        match self.label {
            Label::A => &self.triplet.response_a,
            Label::B => &self.triplet.response_b,
        }
    }
}

/// Labeled pool `D_l` (size m) and unlabeled pool `D_u` (size n).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreferenceDataset {
    labeled: Vec<LabeledExample>,
    unlabeled: Vec<PreferenceTriplet>,
}

impl PreferenceDataset {
    /// Builds a dataset, rejecting any id that occurs twice across both pools.
    pub fn new(labeled: Vec<LabeledExample>, unlabeled: Vec<PreferenceTriplet>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(labeled.len() + unlabeled.len());
        let ids = labeled
            .iter()
            .map(|e| e.id())
            .chain(unlabeled.iter().map(|t| t.id.as_str()));
        for id in ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        Ok(PreferenceDataset { labeled, unlabeled })
    }

    pub fn labeled(&self) -> &[LabeledExample] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[PreferenceTriplet] {
        &self.unlabeled
    }

    pub fn m(&self) -> usize {
        self.labeled.len()
    }

    pub fn n(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn into_parts(self) -> (Vec<LabeledExample>, Vec<PreferenceTriplet>) {
        (self.labeled, self.unlabeled)
    }
}

/// Swaps each example's response order independently with probability 1/2,
/// flipping its label so the preferred response stays the same.
pub fn randomize_order(examples: &[LabeledExample], seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples
        .iter()
        .map(|e| {
            if rng.random_bool(0.5) {
                e.swapped()
            } else {
                e.clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: &str, label: Label) -> LabeledExample {
        LabeledExample::ground_truth(PreferenceTriplet::new(id, "p", "good", "bad"), label)
    }

    #[test]
    fn forced_swap_exchanges_responses_and_flips_label() {
        let e = example("0", Label::A);
        let s = e.swapped();
        assert_eq!(s.triplet.response_a, "bad");
        assert_eq!(s.triplet.response_b, "good");
        assert_eq!(s.label, Label::B);
        assert_eq!(s.winner(), e.winner());
    }

    #[test]
    fn randomize_is_deterministic_under_seed() {
        let xs: Vec<_> = (0..100)
            .map(|i| example(&i.to_string(), Label::A))
            .collect();
        assert_eq!(randomize_order(&xs, 9), randomize_order(&xs, 9));
        assert_ne!(randomize_order(&xs, 9), randomize_order(&xs, 10));
    }

    #[test]
    fn randomize_swaps_about_half() {
        let xs: Vec<_> = (0..10_000)
            .map(|i| example(&i.to_string(), Label::A))
            .collect();
        let out = randomize_order(&xs, 2024);
        let swapped = out.iter().filter(|e| e.label == Label::B).count();
        let frac = swapped as f64 / xs.len() as f64;
        assert!((frac - 0.5).abs() <= 0.02, "swapped fraction {frac}");
        assert!(out.iter().zip(&xs).all(|(o, x)| o.winner() == x.winner()));
    }

    #[test]
    fn dataset_rejects_id_in_both_pools() {
        let err = PreferenceDataset::new(
            vec![example("7", Label::A)],
            vec![PreferenceTriplet::new("7", "p", "x", "y")],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "7"));
    }

    #[test]
    fn pseudo_confidence_must_be_argmax_probability() {
        let t = PreferenceTriplet::new("0", "", "", "");
        assert!(LabeledExample::pseudo(t.clone(), Label::A, 0.49).is_err());
        assert!(LabeledExample::pseudo(t.clone(), Label::A, 1.01).is_err());
        let e = LabeledExample::pseudo(t, Label::B, 0.5).unwrap();
        assert_eq!(e.source(), LabelSource::Pseudo);
        assert_eq!(e.confidence(), Some(0.5));
    }
}
