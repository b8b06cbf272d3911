mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subjscan::corpus::Label;
use subjscan::metrics::{
    confusion, confusion_by_id, macro_f1, macro_f1_with, read_predictions, report, write_predictions, EvalReport,
    MetricsError, Prediction, RunMetadata, ZeroDivision,
};

use common::*;

#[test]
fn agrees_with_brute_force_scorer() {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    for case in 0..2000 {
        let n = rng.random_range(1..=50);
        let bias = rng.random::<f64>();
        let golds = random_labels(&mut rng, n, bias);
        let skill = rng.random::<f64>();
        let preds = random_labels(&mut rng, n, skill);
        let cm = confusion(&preds, &golds).unwrap();
        let oracle = oracle_scores(&preds, &golds);
        for (k, label) in [Label::Subj, Label::Obj].into_iter().enumerate() {
            let s = cm.class_scores(label, ZeroDivision::Zero);
            assert!((s.precision - oracle.precision[k]).abs() < 1e-9, "case {case}");
            assert!((s.recall - oracle.recall[k]).abs() < 1e-9, "case {case}");
            assert!((s.f1 - oracle.f1[k]).abs() < 1e-9, "case {case}");
        }
        assert!((macro_f1(&cm) - oracle.macro_f1).abs() < 1e-9, "case {case}");
        assert!((cm.accuracy() - oracle.accuracy).abs() < 1e-9, "case {case}");
    }
}

#[test]
fn italian_fixture_against_baseline() {
    let (preds, golds) = italian_fixture();
    let cm = confusion(&preds, &golds).unwrap();
    let r = EvalReport::from_confusion(cm, Some(0.6941), ZeroDivision::Zero, RunMetadata::default());
    assert_eq!(r.n, 299);
    assert_eq!(format!("{:.4}", r.macro_f1), "0.8104");
    assert!((r.macro_f1 - 295.0 / 364.0).abs() < 1e-15);
    assert_eq!(format!("{:+.4}", r.delta.unwrap()), "+0.1163");
    assert_eq!(r.above_baseline, Some(true));
    let text = r.render_text();
    assert!(text.contains("**0.8104**"), "{text}");
    assert!(text.contains("(delta +0.1163)"), "{text}");
}

#[test]
fn equal_printed_scores_are_not_above_baseline() {
    let (preds, golds) = italian_fixture();
    let cm = confusion(&preds, &golds).unwrap();
    let r = EvalReport::from_confusion(cm, Some(0.81044), ZeroDivision::Zero, RunMetadata::default());
    assert_eq!(r.above_baseline, Some(false));
    assert!(!r.render_text().contains("**"));
}

#[test]
fn zero_division_convention() {
    let golds = [Label::Obj, Label::Obj];
    let preds = [Label::Obj, Label::Obj];
    let cm = confusion(&preds, &golds).unwrap();
    assert_eq!(macro_f1_with(&cm, ZeroDivision::Zero), 0.5);
    let subj = cm.class_scores(Label::Subj, ZeroDivision::One);
    assert_eq!((subj.precision, subj.recall, subj.f1), (1.0, 1.0, 1.0));
    assert_eq!(macro_f1_with(&cm, ZeroDivision::One), 1.0);
}

#[test]
fn id_alignment_errors() {
    let golds = vec![Prediction::new("a", Label::Subj), Prediction::new("b", Label::Obj)];
    let shuffled = vec![Prediction::new("b", Label::Obj), Prediction::new("a", Label::Subj)];
    assert!(confusion_by_id(&shuffled, &golds).unwrap().is_diagonal());

    let wrong = vec![Prediction::new("a", Label::Subj), Prediction::new("c", Label::Obj)];
    assert!(matches!(confusion_by_id(&wrong, &golds), Err(MetricsError::IdMismatch(id)) if id == "c"));
    let dup = vec![Prediction::new("a", Label::Subj), Prediction::new("a", Label::Obj)];
    assert!(matches!(
        confusion_by_id(&dup, &golds),
        Err(MetricsError::DuplicateId(_))
    ));
    assert!(matches!(
        confusion_by_id(&golds[..1], &golds),
        Err(MetricsError::LengthMismatch { preds: 1, golds: 2 })
    ));
    assert!(matches!(confusion(&[], &[]), Err(MetricsError::Empty)));
}

#[test]
fn predictions_file_round_trip() {
    let preds = vec![Prediction::new("x1", Label::Subj), Prediction::new("x2", Label::Obj)];
    let mut buf = Vec::new();
    write_predictions(&preds, &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf.clone()).unwrap(),
        "sentence_id\tlabel\nx1\tSUBJ\nx2\tOBJ\n"
    );
    assert_eq!(read_predictions(buf.as_slice()).unwrap(), preds);
    let r = report(&preds, &preds, None, ZeroDivision::Zero, RunMetadata::default()).unwrap();
    assert_eq!(r.macro_f1, 1.0);
    assert_eq!(r.delta, None);
}

fn labels(n: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(prop_oneof![Just(Label::Subj), Just(Label::Obj)], n)
}

fn paired() -> impl Strategy<Value = (Vec<Label>, Vec<Label>)> {
    (1usize..=50).prop_flat_map(|n| (labels(n), labels(n)))
}

proptest! {
    #[test]
    fn macro_f1_is_symmetric_in_class_names((preds, golds) in paired()) {
        let flip = |v: &[Label]| v.iter().map(|l| l.flipped()).collect::<Vec<_>>();
        let a = macro_f1(&confusion(&preds, &golds).unwrap());
        let b = macro_f1(&confusion(&flip(&preds), &flip(&golds)).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn scores_are_bounded((preds, golds) in paired()) {
        let cm = confusion(&preds, &golds).unwrap();
        for label in Label::ALL {
            let s = cm.class_scores(label, ZeroDivision::Zero);
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        prop_assert!((0.0..=1.0).contains(&macro_f1(&cm)));
        prop_assert_eq!(cm.total(), preds.len());
    }

    #[test]
    fn perfect_predictions_score_one(golds in (1usize..=50).prop_flat_map(labels)) {
        let cm = confusion(&golds, &golds).unwrap();
        prop_assert_eq!(cm.accuracy(), 1.0);
        let both = golds.contains(&Label::Subj) && golds.contains(&Label::Obj);
        if both {
            prop_assert_eq!(macro_f1(&cm), 1.0);
        }
    }
}
