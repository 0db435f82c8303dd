use std::collections::HashSet;

use proptest::prelude::*;
use ssrm_core::backend::{
    snapshot_from_str, snapshot_to_string, srm_loss, FeaturizerSpec, PredictionDistribution,
    Provenance,
};
use ssrm_core::prefdata::{
    format_template, randomize_order, read_entries, split, write_entries, Entry, Label,
    LabeledExample, PreferenceTriplet, SplitSpec, CONTEXT_MARKER, RESPONSE_A_MARKER,
    RESPONSE_B_MARKER,
};
use ssrm_core::ssrm::{build_iteration_dataset, confidence_filter, PseudoLabeledExample};
use ssrm_core::{Fraction, Snapshot};

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z ]{0,20}",
        any::<String>(),
        Just("[RESPONSE A]".to_string()),
    ]
}

fn triplet(id: usize) -> impl Strategy<Value = PreferenceTriplet> {
    (text(), text(), text())
        .prop_map(move |(x, a, b)| PreferenceTriplet::new(id.to_string(), x, a, b))
}

fn examples(max: usize) -> impl Strategy<Value = Vec<LabeledExample>> {
    prop::collection::vec(("[a-z]{1,6}", "[a-z]{1,6}", any::<bool>()), 1..max).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (a, b, y))| {
                let label = if y { Label::A } else { Label::B };
                LabeledExample::ground_truth(
                    PreferenceTriplet::new(i.to_string(), "q", a, b),
                    label,
                )
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn template_is_markers_in_order(t in triplet(0)) {
        let s = format_template(&t);
        let a_at = CONTEXT_MARKER.len() + t.prompt.len();
        let b_at = a_at + RESPONSE_A_MARKER.len() + t.response_a.len();
        prop_assert!(s.starts_with(CONTEXT_MARKER));
        prop_assert_eq!(&s[CONTEXT_MARKER.len()..a_at], t.prompt.as_str());
        prop_assert_eq!(&s[a_at..a_at + RESPONSE_A_MARKER.len()], RESPONSE_A_MARKER);
        prop_assert_eq!(&s[b_at..b_at + RESPONSE_B_MARKER.len()], RESPONSE_B_MARKER);
        prop_assert_eq!(&s[b_at + RESPONSE_B_MARKER.len()..], t.response_b.as_str());
    }

    #[test]
    fn split_partitions(data in examples(120), num in 1u64..=8, seed in any::<u64>()) {
        let fraction = Fraction::new(num, 8);
        let ds = split(&data, &SplitSpec::new(fraction, seed)).unwrap();
        prop_assert_eq!(ds.m(), data.len() * num as usize / 8);
        prop_assert_eq!(ds.m() + ds.n(), data.len());
        let mut ids: HashSet<&str> = ds.labeled().iter().map(|e| e.id()).collect();
        for t in ds.unlabeled() {
            prop_assert!(ids.insert(&t.id));
        }
        prop_assert_eq!(ids.len(), data.len());
    }

    #[test]
    fn distribution_sums_to_one(z in -800.0f64..800.0) {
        let p = PredictionDistribution::from_logit(z);
        prop_assert!((p.p_a + p.p_b - 1.0).abs() < 1e-15);
        prop_assert!(p.confidence() >= 0.5 && p.confidence() <= 1.0);
        let q = PredictionDistribution::from_logit(z as f32);
        prop_assert!((q.p_a + q.p_b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn loss_is_nonnegative(
        data in examples(20),
        weights in prop::collection::vec(-50.0f64..50.0, 16),
        bias in -50.0f64..50.0,
        l2 in 0.0f64..2.0,
    ) {
        let model = Snapshot::from_parts(weights, bias, FeaturizerSpec::unigrams(16), Provenance::default()).unwrap();
        let loss = srm_loss(&model, &data, l2).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
    }

    #[test]
    fn filter_is_monotone_and_inclusive(
        confs in prop::collection::vec(0.5f64..=1.0, 0..100),
        s in 0.5f64..=1.0,
    ) {
        let pool: Vec<PseudoLabeledExample> = confs.iter().enumerate().map(|(i, &c)| PseudoLabeledExample {
            triplet: PreferenceTriplet::new(i.to_string(), "", "", ""),
            label: Label::B,
            confidence: c,
        }).collect();
        let kept = confidence_filter(&pool, s);
        prop_assert_eq!(kept.len(), confs.iter().filter(|&&c| c >= s).count());
        prop_assert!(confidence_filter(&pool, s.max(0.75)).len() <= confidence_filter(&pool, s.min(0.75)).len());
        prop_assert_eq!(confidence_filter(&pool, 0.5), pool);
    }

    #[test]
    fn iteration_dataset_keeps_labeled_prefix(data in examples(40), extra in 0usize..20) {
        let retained: Vec<PseudoLabeledExample> = (0..extra).map(|i| PseudoLabeledExample {
            triplet: PreferenceTriplet::new(format!("u{i}"), "", "x", "y"),
            label: Label::A,
            confidence: 0.9,
        }).collect();
        let d_t = build_iteration_dataset(&data, &retained).unwrap();
        prop_assert_eq!(&d_t[..data.len()], &data[..]);
        prop_assert!(d_t[data.len()..].iter().all(|e| !e.is_ground_truth()));
    }

    #[test]
    fn randomize_order_preserves_winner(data in examples(60), seed in any::<u64>()) {
        let shuffled = randomize_order(&data, seed);
        prop_assert_eq!(shuffled.len(), data.len());
        for (a, b) in data.iter().zip(&shuffled) {
            prop_assert_eq!(a.winner(), b.winner());
            prop_assert_eq!(a.id(), b.id());
        }
        prop_assert_eq!(randomize_order(&data, seed), shuffled);
    }

    #[test]
    fn jsonl_round_trips(ts in prop::collection::vec(triplet(0), 1..20), labels in prop::collection::vec(any::<Option<bool>>(), 20)) {
        let entries: Vec<Entry> = ts.into_iter().enumerate().map(|(i, mut t)| {
            t.id = i.to_string();
            match labels[i] {
                None => Entry::Unlabeled(t),
                Some(y) => Entry::Labeled(LabeledExample::ground_truth(t, if y { Label::A } else { Label::B })),
            }
        }).collect();
        let mut bytes = Vec::new();
        write_entries(&mut bytes, &entries).unwrap();
        let parsed = read_entries(bytes.as_slice()).unwrap();
        prop_assert_eq!(&parsed.entries, &entries);
        let mut again = Vec::new();
        write_entries(&mut again, &parsed.entries).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn snapshot_round_trip_is_exact(
        weights in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 8),
        bias in prop::num::f64::NORMAL,
    ) {
        let model = Snapshot::from_parts(weights, bias, FeaturizerSpec::unigrams(8), Provenance::default()).unwrap();
        let back: Snapshot = snapshot_from_str(&snapshot_to_string(&model).unwrap()).unwrap();
        let bits = |m: &Snapshot| m.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&model));
        prop_assert_eq!(back.bias().to_bits(), model.bias().to_bits());
    }
}
