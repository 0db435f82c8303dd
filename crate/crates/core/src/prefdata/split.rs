use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{LabeledExample, PreferenceDataset};
use crate::error::{Error, Result};

/// How many of the annotated examples keep their labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(with = "fraction_string")]
    pub labeled_fraction: Ratio<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shuffle")]
    pub shuffle: bool,
}

fn default_shuffle() -> bool {
    true
}

impl SplitSpec {
    pub fn new(labeled_fraction: Ratio<u64>, seed: u64) -> Self {
        SplitSpec {
            labeled_fraction,
            seed,
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.labeled_fraction;
        if f.is_zero() || f > Ratio::one() {
            return Err(Error::InvalidFraction(f.to_string()));
        }
        Ok(())
    }

    /// `⌊fraction · total⌋`, computed exactly.
    pub fn labeled_count(&self, total: usize) -> usize {
        let f = self.labeled_fraction;
        (*f.numer() as u128 * total as u128 / *f.denom() as u128) as usize
    }
}

/// Keeps labels on `⌊fraction · N⌋` examples and strips the rest into the
/// unlabeled pool. With `shuffle` the examples are permuted under `seed` first.
pub fn split(examples: &[LabeledExample], spec: &SplitSpec) -> Result<PreferenceDataset> {
    spec.validate()?;
    if let Some(e) = examples.iter().find(|e| !e.is_ground_truth()) {
        return Err(Error::InvalidRecord {
            id: e.id().to_string(),
            message: "split expects ground-truth labels only".into(),
        });
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if spec.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    }
    let m = spec.labeled_count(examples.len());
    let labeled = order[..m].iter().map(|&i| examples[i].clone()).collect();
    let unlabeled = order[m..]
        .iter()
        .map(|&i| examples[i].triplet.clone())
        .collect();
    PreferenceDataset::new(labeled, unlabeled)
}

/// Fractions serialize as `"num/den"` strings, e.g. `"1/4"`.
pub(crate) mod fraction_string {
    use super::*;

    pub fn serialize<S: Serializer>(f: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", f.numer(), f.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }

    pub fn parse(raw: &str) -> Result<Ratio<u64>, String> {
        let raw = raw.trim();
        let (n, d) = match raw.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (raw, "1"),
        };
        let n: u64 = n.parse().map_err(|_| format!("bad fraction {raw:?}"))?;
        let d: u64 = d.parse().map_err(|_| format!("bad fraction {raw:?}"))?;
        if d == 0 {
            return Err(format!("zero denominator in {raw:?}"));
        }
        Ok(Ratio::new(n, d))
    }
}

pub use fraction_string::parse as parse_fraction;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefdata::{Label, PreferenceTriplet};
    use std::collections::HashSet;

    fn pool(n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| {
                LabeledExample::ground_truth(
                    PreferenceTriplet::new(i.to_string(), "p", "a", "b"),
                    Label::A,
                )
            })
            .collect()
    }

    #[test]
    fn one_sixteenth_of_sixteen() {
        let ds = split(&pool(16), &SplitSpec::new(Ratio::new(1, 16), 3)).unwrap();
        assert_eq!((ds.m(), ds.n()), (1, 15));
    }

    #[test]
    fn full_fraction_keeps_everything_labeled() {
        let ds = split(&pool(10), &SplitSpec::new(Ratio::one(), 3)).unwrap();
        assert_eq!((ds.m(), ds.n()), (10, 0));
    }

    #[test]
    fn quarter_of_seven_hundred_thousand() {
        let spec = SplitSpec::new(Ratio::new(1, 4), 0);
        assert_eq!(spec.labeled_count(700_000), 175_000);
        assert_eq!(
            SplitSpec::new(Ratio::new(1, 16), 0).labeled_count(700_000),
            43_750
        );
    }

    #[test]
    fn floor_on_inexact_division() {
        assert_eq!(SplitSpec::new(Ratio::new(1, 3), 0).labeled_count(10), 3);
    }

    #[test]
    fn rejects_out_of_range_fractions() {
        for f in [Ratio::new(0, 1), Ratio::new(5, 4)] {
            assert!(matches!(
                split(&pool(4), &SplitSpec::new(f, 0)),
                Err(Error::InvalidFraction(_))
            ));
        }
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let xs = pool(37);
        let ds = split(&xs, &SplitSpec::new(Ratio::new(2, 7), 11)).unwrap();
        let l: HashSet<_> = ds.labeled().iter().map(|e| e.id().to_string()).collect();
        let u: HashSet<_> = ds.unlabeled().iter().map(|t| t.id.clone()).collect();
        assert!(l.is_disjoint(&u));
        assert_eq!(l.len() + u.len(), 37);
        assert_eq!(l.len(), 10);
    }

    #[test]
    fn unshuffled_split_takes_prefix() {
        let spec = SplitSpec {
            shuffle: false,
            ..SplitSpec::new(Ratio::new(1, 2), 0)
        };
        let ds = split(&pool(4), &spec).unwrap();
        assert_eq!(ds.labeled()[0].id(), "0");
        assert_eq!(ds.unlabeled()[0].id, "2");
    }

    #[test]
    fn fraction_strings() {
        assert_eq!(parse_fraction("1/4").unwrap(), Ratio::new(1, 4));
        assert_eq!(parse_fraction("1").unwrap(), Ratio::one());
        assert!(parse_fraction("1/0").is_err());
        let spec: SplitSpec =
            serde_json::from_str(r#"{"labeled_fraction":"2/8","seed":5}"#).unwrap();
        assert_eq!(spec.labeled_fraction, Ratio::new(1, 4));
        assert!(spec.shuffle);
    }
}
