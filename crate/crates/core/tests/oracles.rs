//! Hand-computed and independently simulated reference values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssrm_core::backend::{fit, srm_loss, FeaturizerSpec, Provenance, TrainConfig};
use ssrm_core::eval::{calibration_from_outcomes, evaluate};
use ssrm_core::prefdata::{Label, LabeledExample, PreferenceTriplet};
use ssrm_core::synth::{
    bayes_accuracy, generate, generate_range, labeled_examples, WorldParams, WorldSpec,
};
use ssrm_core::Snapshot;

fn ex(id: &str, a: &str, b: &str, y: Label) -> LabeledExample {
    LabeledExample::ground_truth(PreferenceTriplet::new(id, "prompt", a, b), y)
}

#[test]
fn ece_matches_hand_computation() {
    // 5 at 0.52 (3 right), 5 at 0.77 (4 right), 10 at 0.93 (9 right):
    // 0.25·|0.52−0.6| + 0.25·|0.77−0.8| + 0.5·|0.93−0.9| = 0.0425
    let mut pairs = Vec::new();
    pairs.extend((0..5).map(|k| (0.52, k < 3)));
    pairs.extend((0..5).map(|k| (0.77, k < 4)));
    pairs.extend((0..10).map(|k| (0.93, k < 9)));
    let report = calibration_from_outcomes(&pairs, 10).unwrap();
    assert!((report.ece - 0.0425).abs() < 1e-12, "{}", report.ece);
    assert_eq!(report.histogram, vec![5, 0, 0, 0, 0, 5, 0, 0, 10, 0]);
}

#[test]
fn three_example_loss_fixture() {
    // bias ln 3 ⇒ P(A) = 3/4 for every input; labels A, A, B.
    let spec = FeaturizerSpec::unigrams(64);
    let model = Snapshot::from_parts(
        vec![0.0; 64],
        3f64.ln(),
        spec.clone(),
        Provenance::default(),
    )
    .unwrap();
    let batch = [
        ex("0", "x", "y", Label::A),
        ex("1", "y", "x", Label::A),
        ex("2", "x y", "z", Label::B),
    ];
    let expected = (2.0 * (4.0f64 / 3.0).ln() + 4f64.ln()) / 3.0;
    assert!((srm_loss(&model, &batch, 0.0).unwrap() - expected).abs() < 1e-10);

    // uniform weight w: z = b + w·(token count), plus 0.5·l2·dim·w²
    let w = 0.05;
    let model = Snapshot::from_parts(vec![w; 64], 0.0, spec, Provenance::default()).unwrap();
    let l2 = 0.1;
    let mut expected = 0.0;
    for e in &batch {
        let z = w * model.featurize(&e.triplet).total_count() as f64;
        let p_a = 1.0 / (1.0 + (-z).exp());
        expected -= if e.label == Label::A {
            p_a.ln()
        } else {
            (1.0 - p_a).ln()
        };
    }
    expected = expected / 3.0 + 0.5 * l2 * 64.0 * w * w;
    assert!((srm_loss(&model, &batch, l2).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn separable_fixture_is_learned() {
    let good = ["clear", "correct", "helpful", "precise"];
    let bad = ["wrong", "rude", "vague", "off-topic"];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut make = |n: usize, offset: usize| -> Vec<LabeledExample> {
        (0..n)
            .map(|i| {
                let g = good[rng.random_range(0..4)];
                let b = bad[rng.random_range(0..4)];
                let id = (offset + i).to_string();
                if rng.random_bool(0.5) {
                    ex(&id, g, b, Label::A)
                } else {
                    ex(&id, b, g, Label::B)
                }
            })
            .collect()
    };
    let train = make(400, 0);
    let test = make(200, 400);
    let pre = Snapshot::zeros(FeaturizerSpec::default()).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        batch_size: 16,
        epochs: 3,
        ..TrainConfig::default()
    };
    let model = fit(&pre, &train, &cfg).unwrap();
    assert!(evaluate(&model, &test).unwrap().overall_accuracy >= 0.95);
}

#[test]
fn trained_model_agrees_with_bayes_labels() {
    let world = WorldSpec::new(WorldParams {
        vocab_size: 200,
        seed: 2,
        ..WorldParams::default()
    })
    .unwrap();
    let train = labeled_examples(&generate(&world, 20_000).unwrap());
    let test = generate_range(&world, 500_000, 2_000).unwrap();
    let pre = Snapshot::zeros(FeaturizerSpec::unigrams(1 << 16)).unwrap();
    let model = fit(
        &pre,
        &train,
        &TrainConfig {
            learning_rate: 1.0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let agree = test
        .iter()
        .filter(|s| model.predict(&s.example.triplet).argmax() == s.bayes_label)
        .count();
    assert!(agree as f64 / test.len() as f64 >= 0.7, "{agree}");
}

/// Re-estimates the Bayes ceiling by drawing responses directly from the
/// token qualities, sharing nothing with the library sampler but the world.
#[test]
fn bayes_accuracy_matches_independent_simulation() {
    let world = WorldSpec::new(WorldParams::default()).unwrap();
    let q = world.qualities();
    let len = world.params.response_length;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 50_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let mut reward = || {
            (0..len)
                .map(|_| q[rng.random_range(0..q.len())])
                .sum::<f64>()
        };
        let gap = reward() - reward();
        let p = 1.0 / (1.0 + (-world.params.temperature * gap).exp());
        let v = p.max(1.0 - p);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    let est = bayes_accuracy(&world, 100_000).unwrap();
    let tol = 4.0 * (se * se + est.stderr * est.stderr).sqrt();
    assert!(
        (est.mean - mean).abs() < tol,
        "{} vs {mean} ± {tol}",
        est.mean
    );
    assert!(est.mean > 0.5 && est.mean < 1.0);
}

/// Default world (β = 1, 12-token responses, seed 0). Reference value from a
/// 4M-draw independent simulation: 0.89465 ± 0.00007.
const BAYES_GOLDEN: f64 = 0.89465;

#[test]
fn bayes_accuracy_in_golden_band() {
    let world = WorldSpec::new(WorldParams::default()).unwrap();
    let est = bayes_accuracy(&world, 100_000).unwrap();
    assert_eq!(est.samples, 100_000);
    let band = 4.0 * est.stderr + 3e-4;
    assert!(
        (est.mean - BAYES_GOLDEN).abs() < band,
        "{} ± {band}",
        est.mean
    );
}
