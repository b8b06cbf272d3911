mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subjscan::calibration::{
    calibrate_and_predict, class_weights, decide, fit_temperature, focal_loss, mean_nll, read_logits, scale, softmax,
    weighted_cross_entropy, write_logits, CalibrationError, ClassWeights, DecisionPolicy, LogitRecord, Logits, Probs,
    Temperature,
};
use subjscan::corpus::{Label, LabelDistribution};

use common::*;

#[test]
fn fit_matches_grid_oracle() {
    for (t_star, seed) in [(0.5, 1), (1.0, 2), (3.0, 3)] {
        let (records, golds) = synthetic_logits(4000, t_star, seed);
        let model = fit_temperature(&records, &golds, "synthetic").unwrap();
        let oracle = grid_minimizer(&records, &golds);
        assert!(
            (model.temperature - oracle).abs() < 1e-2,
            "T*={t_star}: fit {} oracle {oracle}",
            model.temperature
        );
        assert!(model.nll <= oracle_nll(&records, &golds, 1.0) + 1e-15);
        assert!((model.nll - oracle_nll(&records, &golds, model.temperature)).abs() < 1e-12);
    }
}

#[test]
fn library_nll_matches_oracle() {
    let (records, golds) = synthetic_logits(500, 2.0, 9);
    for t in [0.05, 0.7, 1.0, 4.2, 80.0] {
        let ours = mean_nll(&records, &golds, t).unwrap();
        assert!((ours - oracle_nll(&records, &golds, t)).abs() < 1e-12);
    }
}

#[test]
fn single_class_golds_are_rejected() {
    let (records, _) = synthetic_logits(10, 1.0, 4);
    let golds = vec![Label::Obj; 10];
    assert!(matches!(
        fit_temperature(&records, &golds, "x"),
        Err(CalibrationError::DegenerateLabels)
    ));
    assert!(matches!(
        fit_temperature(&records[..1], &[Label::Obj], "x"),
        Err(CalibrationError::TooFewRecords(1))
    ));
}

#[test]
fn threshold_boundary() {
    let policy = DecisionPolicy::default();
    let at = |p: f64| decide(Probs { obj: 1.0 - p, subj: p }, policy).unwrap();
    assert_eq!(at(0.44), Label::Obj);
    assert_eq!(at(0.45), Label::Subj);
    assert_eq!(at(0.46), Label::Subj);
    assert!(DecisionPolicy::new(0.0).is_err());
    assert!(DecisionPolicy::new(1.0).is_err());
    assert!(decide(Probs { obj: 0.7, subj: 0.7 }, policy).is_err());
}

#[test]
fn focal_loss_reference_values() {
    let probs = Probs { obj: 0.1, subj: 0.9 };
    let got = focal_loss(probs, Label::Subj, 2.0, ClassWeights::UNIFORM).unwrap();
    // -(1-p)^2 ln p with -ln(0.9) = sum_k 0.1^k / k
    let series: f64 = (1..40).map(|k| 0.1f64.powi(k) / k as f64).sum();
    assert!((got - 0.01 * series).abs() < 1e-15);
    assert!((got - 1.053_605_156_578_263e-3).abs() < 1e-9);

    let sure = Probs { obj: 0.0, subj: 1.0 };
    assert_eq!(focal_loss(sure, Label::Subj, 2.0, ClassWeights::UNIFORM).unwrap(), 0.0);
    assert!(matches!(
        focal_loss(sure, Label::Obj, 2.0, ClassWeights::UNIFORM),
        Err(CalibrationError::ZeroProbabilityForGold)
    ));
    assert!(focal_loss(probs, Label::Subj, -1.0, ClassWeights::UNIFORM).is_err());
}

#[test]
fn inverse_frequency_weights() {
    // English training split: 298 SUBJ, 532 OBJ.
    let w = class_weights(LabelDistribution { subj: 298, obj: 532 }).unwrap();
    assert!((w.subj - 830.0 / 596.0).abs() < 1e-15);
    assert!((w.obj - 830.0 / 1064.0).abs() < 1e-15);
    assert!(class_weights(LabelDistribution { subj: 0, obj: 5 }).is_err());
}

#[test]
fn logits_jsonl_round_trip_and_prediction() {
    let (records, _) = synthetic_logits(50, 1.5, 5);
    let mut buf = Vec::new();
    write_logits(&records, &mut buf).unwrap();
    let first = String::from_utf8(buf.clone()).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(line["logits"].as_array().unwrap().len(), 2);
    let back = read_logits(buf.as_slice()).unwrap();
    assert_eq!(back, records);

    let preds = calibrate_and_predict(&records, Temperature::new(1.5).unwrap(), DecisionPolicy::default()).unwrap();
    for (p, r) in preds.iter().zip(&records) {
        let expected = softmax(scale(r.logits, 1.5).unwrap()).unwrap().subj;
        assert_eq!(p.p_subj, expected);
        assert_eq!(p.label == Label::Subj, expected >= 0.45);
    }

    let bad = b"{\"sentence_id\":\"a\",\"logits\":[1.0]}\n";
    assert!(matches!(
        read_logits(&bad[..]),
        Err(CalibrationError::BadRecord { line: 1, .. })
    ));
    let dup = b"{\"sentence_id\":\"a\",\"logits\":[1,2]}\n{\"sentence_id\":\"a\",\"logits\":[1,2]}\n";
    assert!(matches!(read_logits(&dup[..]), Err(CalibrationError::DuplicateId(_))));
}

#[test]
fn argmax_invariance_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let z = Logits::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let t = rng.random_range(0.05..20.0);
        assert_eq!(scale(z, t).unwrap().argmax(), z.argmax());
    }
}

fn logit() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

fn gold() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Subj), Just(Label::Obj)]
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(a in logit(), b in logit()) {
        let p = softmax(Logits::new(a, b)).unwrap();
        prop_assert!((p.obj + p.subj - 1.0).abs() < 1e-12);
        prop_assert!(p.obj >= 0.0 && p.subj >= 0.0);
    }

    #[test]
    fn temperature_keeps_argmax(a in logit(), b in logit(), t in 0.01..100.0f64) {
        prop_assume!(a != b);
        let z = Logits::new(a, b);
        prop_assert_eq!(scale(z, t).unwrap().argmax(), z.argmax());
    }

    #[test]
    fn p_subj_grows_with_margin(base in logit(), m1 in -20.0..20.0f64, dm in 0.0..20.0f64) {
        let low = softmax(Logits::new(base, base + m1)).unwrap().subj;
        let high = softmax(Logits::new(base, base + m1 + dm)).unwrap().subj;
        prop_assert!(high >= low);
    }

    #[test]
    fn focal_without_focusing_is_weighted_ce(
        a in logit(), b in logit(), g in gold(), w_obj in 0.1..10.0f64, w_subj in 0.1..10.0f64,
    ) {
        let probs = softmax(Logits::new(a, b)).unwrap();
        prop_assume!(probs.get(g) > 0.0);
        let w = ClassWeights { obj: w_obj, subj: w_subj };
        let focal = focal_loss(probs, g, 0.0, w).unwrap();
        let ce = weighted_cross_entropy(probs, g, w).unwrap();
        prop_assert!((focal - ce).abs() <= 1e-12 * ce.max(1.0));
    }

    #[test]
    fn focal_never_exceeds_ce(p in 1e-6..1.0f64, gamma in 0.0..5.0f64) {
        let probs = Probs { obj: 1.0 - p, subj: p };
        let focal = focal_loss(probs, Label::Subj, gamma, ClassWeights::UNIFORM).unwrap();
        let ce = weighted_cross_entropy(probs, Label::Subj, ClassWeights::UNIFORM).unwrap();
        prop_assert!(focal >= 0.0 && focal <= ce);
    }

    #[test]
    fn half_threshold_matches_argmax(a in logit(), b in logit()) {
        prop_assume!((a - b).abs() > 1e-9);
        let z = Logits::new(a, b);
        let policy = DecisionPolicy::new(0.5).unwrap();
        prop_assert_eq!(decide(softmax(z).unwrap(), policy).unwrap(), z.argmax());
    }
}

#[test]
fn fit_never_worse_than_identity_on_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let records: Vec<LogitRecord> = (0..300)
        .map(|i| LogitRecord {
            sentence_id: format!("n{i}"),
            logits: Logits::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
        })
        .collect();
    let golds: Vec<Label> = (0..300)
        .map(|i| if i % 2 == 0 { Label::Subj } else { Label::Obj })
        .collect();
    let model = fit_temperature(&records, &golds, "noise").unwrap();
    assert!(model.nll <= mean_nll(&records, &golds, 1.0).unwrap());
}
