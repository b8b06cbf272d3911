//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subjscan::calibration::{LogitRecord, Logits};
use subjscan::corpus::{Corpus, Label, Split};
use subjscan::gateway::{Gateway, MockBackend, MockScript, RetryPolicy};

/// (total, SUBJ, OBJ)
pub type Counts = (usize, usize, usize);

/// Per-language counts for train, dev and dev-test.
pub const SPLIT_COUNTS: [(&str, [Counts; 3]); 5] = [
    ("en", [(830, 298, 532), (462, 240, 222), (484, 122, 362)]),
    ("it", [(1613, 382, 1231), (667, 177, 490), (513, 136, 377)]),
    ("de", [(800, 308, 492), (491, 174, 317), (337, 111, 226)]),
    ("bg", [(729, 323, 406), (467, 292, 175), (250, 107, 143)]),
    ("ar", [(2446, 1055, 1391), (742, 476, 266), (748, 323, 425)]),
];

pub const COUNTED_SPLITS: [Split; 3] = [Split::Train, Split::Dev, Split::DevTest];

/// Language sequences of the merged training curricula and their sizes.
pub const CURRICULA: [(&[&str], usize); 4] = [
    (&["de", "en"], 1630),
    (&["de", "en", "it"], 3243),
    (&["de", "en", "it", "bg"], 3972),
    (&["de", "en", "it", "bg", "ar"], 6418),
];

pub const BLANCO_SENTENCE: &str =
    "Blanco established himself earlier in his career working for Dr. Luke's Kasz Money Productions.";

pub const BLANCO_ANNOTATION: &str = "Explanation: The sentence provides factual information about Blanco's career and his affiliation with a production company. It does not include any indications of personal opinion, sarcastic remarks, or evaluative language by the author. Instead, it merely states a historical fact, which aligns with the criteria for an objective sentence. Label: OBJ";

pub const BLANCO_REWRITE_SUBJ: &str = "In my view, Blanco really made a name for himself early on thanks to his work with Dr. Luke's Kasz Money Productions collaboration that, to me, marked a crucial turning point in his career.";

pub const BLANCO_REWRITE_OBJ: &str = "Blanco worked earlier in his career at Dr. Luke's Kasz Money Productions.";

pub const BLANCO_DOUBLEDOWN: &str = "Since the objective rewrite more closely reflects the original sentence and presents it as a factual career statement with only minor evaluative elements, the model classifies it as OBJ.";

pub const BLANCO_ANALYSIS_SUBJ: &str = "The phrase \"established himself\" is open to interpretation, as what qualifies as \"established\" can vary by individual perception.";

pub const BLANCO_ANALYSIS_OBJ: &str = "The statement refers to a verifiable fact: Blanco worked for Dr. Luke's Kasz Money Productions earlier in his career.";

pub const BLANCO_PERSPECTIVE: &str = "Explanation: The statement contains elements that can be viewed both subjectively and objectively. The subjective analysis points out that the phrase \"established himself\" is open to interpretation, as what qualifies as \"established\" can vary by individual perception, making it a somewhat evaluative judgment. The objective analysis highlights that the statement refers to a verifiable fact: Blanco worked for Dr. Luke's Kasz Money Productions earlier in his career. This part can be independently confirmed. However, the key phrase \"established himself\" goes beyond merely stating a fact about employment; it implies a level of success, recognition, or impact, which is inherently subjective because these concepts differ across perspectives. Therefore, while the statement contains a factual component, the primary assertion involves a subjective judgment. Given this, the subjective analysis is more convincing because the core claim revolves around the idea of \"establishing oneself\", which is not a strictly objective measure. Label: SUBJ";

/// Answers each prompt kind by its first line.
pub fn blanco_script() -> MockScript {
    MockScript::default()
        .rule("^Task: subjectivity annotation", BLANCO_ANNOTATION)
        .rule("^Task: subjective rewrite", BLANCO_REWRITE_SUBJ)
        .rule("^Task: objective rewrite", BLANCO_REWRITE_OBJ)
        .rule("^Task: rewrite adjudication", BLANCO_DOUBLEDOWN)
        .rule("^Task: subjective analysis", BLANCO_ANALYSIS_SUBJ)
        .rule("^Task: objective analysis", BLANCO_ANALYSIS_OBJ)
        .rule("^Task: analysis comparison", BLANCO_PERSPECTIVE)
}

pub fn mock_gateway(script: MockScript) -> (Arc<MockBackend>, Gateway) {
    let backend = Arc::new(MockBackend::new(script));
    let gateway = Gateway::new(backend.clone()).with_retry(RetryPolicy::no_delay(5));
    (backend, gateway)
}

pub fn blanco_corpus() -> Corpus {
    let mut c = Corpus::new("en", Split::Dev);
    c.push("blanco", BLANCO_SENTENCE, Some(Label::Obj)).unwrap();
    c
}

/// A TSV with `subj` SUBJ rows and `obj` OBJ rows, interleaved
/// deterministically. Ids are `<prefix>-<n>`.
pub fn synthetic_tsv(prefix: &str, subj: usize, obj: usize) -> String {
    let mut out = String::from("sentence_id\tsentence\tlabel\n");
    let total = subj + obj;
    let mut emitted_subj = 0;
    for i in 0..total {
        // Bresenham-style spread of SUBJ rows across the file.
        let want = (i + 1) * subj / total.max(1);
        let label = if want > emitted_subj {
            emitted_subj += 1;
            "SUBJ"
        } else {
            "OBJ"
        };
        let words = 3 + (i * 7) % 23;
        let mut text = format!("Sentence {i} of {prefix}");
        for w in 0..words {
            let _ = write!(text, " w{}", (i + w) % 97);
        }
        text.push('.');
        let _ = writeln!(out, "{prefix}-{i}\t{text}\t{label}");
    }
    out
}

pub fn write_synthetic(dir: &Path, name: &str, prefix: &str, subj: usize, obj: usize) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, synthetic_tsv(prefix, subj, obj)).unwrap();
    path
}

/// Writes the train split of every language; returns `(language, path)`.
pub fn write_train_splits(dir: &Path) -> Vec<(&'static str, PathBuf)> {
    SPLIT_COUNTS
        .iter()
        .map(|(lang, rows)| {
            let (_, subj, obj) = rows[0];
            (
                *lang,
                write_synthetic(dir, &format!("train_{lang}.tsv"), &format!("{lang}-train"), subj, obj),
            )
        })
        .collect()
}

/// Records whose logits are `t_star` times a calibrated base logit pair, with
/// golds drawn from the calibrated probabilities. The NLL-optimal temperature
/// is therefore close to `t_star`.
pub fn synthetic_logits(n: usize, t_star: f64, seed: u64) -> (Vec<LogitRecord>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut golds = Vec::with_capacity(n);
    for i in 0..n {
        let obj: f64 = rng.random_range(-2.0..2.0);
        let subj: f64 = rng.random_range(-2.0..2.0);
        let p_subj = 1.0 / (1.0 + (obj - subj).exp());
        golds.push(if rng.random::<f64>() < p_subj {
            Label::Subj
        } else {
            Label::Obj
        });
        records.push(LogitRecord {
            sentence_id: format!("r{i}"),
            logits: Logits::new(t_star * obj, t_star * subj),
        });
    }
    (records, golds)
}

/// Mean NLL written out directly from the two-class softmax.
pub fn oracle_nll(records: &[LogitRecord], golds: &[Label], t: f64) -> f64 {
    let mut sum = 0.0;
    for (r, g) in records.iter().zip(golds) {
        let (a, b) = (r.logits.obj / t, r.logits.subj / t);
        let gold = if *g == Label::Subj { b } else { a };
        let other = if *g == Label::Subj { a } else { b };
        // -ln(e^gold / (e^gold + e^other)) = ln(1 + e^(other - gold))
        let d = other - gold;
        sum += if d > 0.0 {
            d + (-d).exp().ln_1p()
        } else {
            d.exp().ln_1p()
        };
    }
    sum / records.len() as f64
}

/// Minimizer of [`oracle_nll`] over `T` in `[0.1, 10]` with step `1e-3`.
pub fn grid_minimizer(records: &[LogitRecord], golds: &[Label]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=9900 {
        let t = 0.1 + k as f64 * 1e-3;
        let v = oracle_nll(records, golds, t);
        if v < best.0 {
            best = (v, t);
        }
    }
    best.1
}

/// Per-class precision, recall and F1 plus macro-F1 and accuracy, counted
/// pair by pair. Zero denominators score 0.
#[derive(Debug, Clone, Copy)]
pub struct OracleScores {
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub f1: [f64; 2],
    pub macro_f1: f64,
    pub accuracy: f64,
}

pub fn oracle_scores(preds: &[Label], golds: &[Label]) -> OracleScores {
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut out = OracleScores {
        precision: [0.0; 2],
        recall: [0.0; 2],
        f1: [0.0; 2],
        macro_f1: 0.0,
        accuracy: 0.0,
    };
    for (k, class) in [Label::Subj, Label::Obj].into_iter().enumerate() {
        let predicted = preds.iter().filter(|&&p| p == class).count();
        let actual = golds.iter().filter(|&&g| g == class).count();
        let hits = preds
            .iter()
            .zip(golds)
            .filter(|(p, g)| **p == class && **g == class)
            .count();
        out.precision[k] = div(hits, predicted);
        out.recall[k] = div(hits, actual);
        out.f1[k] = div(2 * hits, predicted + actual);
    }
    out.macro_f1 = (out.f1[0] + out.f1[1]) / 2.0;
    out.accuracy = div(preds.iter().zip(golds).filter(|(p, g)| p == g).count(), preds.len());
    out
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, p_subj: f64) -> Vec<Label> {
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < p_subj {
                Label::Subj
            } else {
                Label::Obj
            }
        })
        .collect()
}

/// 299 Italian test rows whose confusion gives macro-F1 0.8104:
/// 67 true SUBJ, 24 missed SUBJ, 24 false SUBJ, 184 true OBJ.
pub fn italian_fixture() -> (Vec<Label>, Vec<Label>) {
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for (p, g, n) in [
        (Label::Subj, Label::Subj, 67),
        (Label::Obj, Label::Subj, 24),
        (Label::Subj, Label::Obj, 24),
        (Label::Obj, Label::Obj, 184),
    ] {
        preds.extend(std::iter::repeat_n(p, n));
        golds.extend(std::iter::repeat_n(g, n));
    }
    (preds, golds)
}
