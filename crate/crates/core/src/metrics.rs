//! Scoring: confusion matrix, per-class precision/recall/F1, macro-F1,
//! accuracy, and baseline-comparison reports.
//!
//! Predictions and golds are aligned by `sentence_id`, never by row order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{preds} predictions vs {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to score")]
    Empty,
    #[error("prediction for `{0}` has no matching gold row")]
    IdMismatch(String),
    #[error("duplicate sentence_id `{0}` in predictions")]
    DuplicateId(String),
    #[error("gold row `{0}` has no label")]
    UnlabeledGold(String),
    #[error("predictions file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence_id: String,
    pub label: Label,
}

impl Prediction {
    pub fn new(id: impl Into<String>, label: Label) -> Self {
        Prediction {
            sentence_id: id.into(),
            label,
        }
    }
}

/// Writes the scorer-convention TSV: header `sentence_id<TAB>label`.
pub fn write_predictions<W: Write>(preds: &[Prediction], mut out: W) -> std::io::Result<()> {
    writeln!(out, "sentence_id\tlabel")?;
    for p in preds {
        writeln!(out, "{}\t{}", p.sentence_id, p.label)?;
    }
    Ok(())
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<Prediction>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MetricsError::Malformed(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| MetricsError::Malformed(format!("missing column `{name}`")))
    };
    let (id_col, label_col) = (col("sentence_id")?, col("label")?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| MetricsError::Malformed(e.to_string()))?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let raw = rec.get(label_col).unwrap_or("").trim();
        let label = raw
            .parse::<Label>()
            .map_err(|_| MetricsError::Malformed(format!("`{id}`: bad label `{raw}`")))?;
        if !seen.insert(id.clone()) {
            return Err(MetricsError::DuplicateId(id));
        }
        out.push(Prediction { sentence_id: id, label });
    }
    Ok(out)
}

/// Gold labels of a corpus as predictions, for id-aligned scoring.
pub fn gold_predictions(corpus: &Corpus) -> Result<Vec<Prediction>> {
    corpus
        .iter()
        .map(|s| {
            s.label
                .map(|l| Prediction::new(s.sentence_id.clone(), l))
                .ok_or_else(|| MetricsError::UnlabeledGold(s.sentence_id.clone()))
        })
        .collect()
}

/// 2x2 table with SUBJ as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp_subj: usize,
    pub fp_subj: usize,
    pub fn_subj: usize,
    pub tn_subj: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp_subj + self.fp_subj + self.fn_subj + self.tn_subj
    }

    pub fn add(&mut self, pred: Label, gold: Label) {
        match (pred, gold) {
            (Label::Subj, Label::Subj) => self.tp_subj += 1,
            (Label::Subj, Label::Obj) => self.fp_subj += 1,
            (Label::Obj, Label::Subj) => self.fn_subj += 1,
            (Label::Obj, Label::Obj) => self.tn_subj += 1,
        }
    }

    /// The same table seen with OBJ as the positive class.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp_subj: self.tn_subj,
            fp_subj: self.fn_subj,
            fn_subj: self.fp_subj,
            tn_subj: self.tp_subj,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.fp_subj == 0 && self.fn_subj == 0
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp_subj + self.tn_subj) as f64 / self.total() as f64
    }

    pub fn class_scores(&self, label: Label, zero_division: ZeroDivision) -> ClassScores {
        let m = match label {
            Label::Subj => *self,
            Label::Obj => self.swapped(),
        };
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                zero_division.value()
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(m.tp_subj, m.tp_subj + m.fp_subj);
        let recall = ratio(m.tp_subj, m.tp_subj + m.fn_subj);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            precision,
            recall,
            f1,
            support: m.tp_subj + m.fn_subj,
        }
    }
}

/// Value used for a precision or recall whose denominator is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroDivision {
    #[default]
    Zero,
    One,
}

impl ZeroDivision {
    fn value(self) -> f64 {
        match self {
            ZeroDivision::Zero => 0.0,
            ZeroDivision::One => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Confusion matrix over position-aligned label vectors.
pub fn confusion(preds: &[Label], golds: &[Label]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in preds.iter().zip(golds) {
        cm.add(p, g);
    }
    Ok(cm)
}

/// Confusion matrix over id-keyed predictions and golds. Both sides must
/// cover exactly the same ids.
pub fn confusion_by_id(preds: &[Prediction], golds: &[Prediction]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let gold_by_id: HashMap<&str, Label> = golds.iter().map(|g| (g.sentence_id.as_str(), g.label)).collect();
    let mut seen = HashSet::new();
    let mut cm = ConfusionMatrix::default();
    for p in preds {
        if !seen.insert(p.sentence_id.as_str()) {
            return Err(MetricsError::DuplicateId(p.sentence_id.clone()));
        }
        let gold = *gold_by_id
            .get(p.sentence_id.as_str())
            .ok_or_else(|| MetricsError::IdMismatch(p.sentence_id.clone()))?;
        cm.add(p.label, gold);
    }
    Ok(cm)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    macro_f1_with(cm, ZeroDivision::Zero)
}

pub fn macro_f1_with(cm: &ConfusionMatrix, zero_division: ZeroDivision) -> f64 {
    let subj = cm.class_scores(Label::Subj, zero_division).f1;
    let obj = cm.class_scores(Label::Obj, zero_division).f1;
    (subj + obj) / 2.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub confusion: ConfusionMatrix,
    #[serde(rename = "SUBJ")]
    pub subj: ClassScores,
    #[serde(rename = "OBJ")]
    pub obj: ClassScores,
    pub macro_f1: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub above_baseline: Option<bool>,
    pub metadata: RunMetadata,
}

impl EvalReport {
    pub fn from_confusion(
        cm: ConfusionMatrix,
        baseline_f1: Option<f64>,
        zero_division: ZeroDivision,
        metadata: RunMetadata,
    ) -> EvalReport {
        let subj = cm.class_scores(Label::Subj, zero_division);
        let obj = cm.class_scores(Label::Obj, zero_division);
        let macro_f1 = (subj.f1 + obj.f1) / 2.0;
        EvalReport {
            n: cm.total(),
            confusion: cm,
            subj,
            obj,
            macro_f1,
            accuracy: cm.accuracy(),
            baseline_f1,
            delta: baseline_f1.map(|b| macro_f1 - b),
            above_baseline: baseline_f1.map(|b| above(macro_f1, b)),
            metadata,
        }
    }

    /// Aligned plain-text table. Scores above the baseline are wrapped in
    /// `**`, following the bold-above-baseline convention of leaderboard tables.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<9} {:>9} {:>9} {:>9} {:>8}",
            "class", "precision", "recall", "f1", "support"
        );
        for (name, c) in [("SUBJ", &self.subj), ("OBJ", &self.obj)] {
            let _ = writeln!(
                s,
                "{:<9} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                name, c.precision, c.recall, c.f1, c.support
            );
        }
        let f1 = format!("{:.4}", self.macro_f1);
        let f1 = if self.above_baseline == Some(true) {
            format!("**{f1}**")
        } else {
            f1
        };
        let _ = writeln!(s, "{:<9} {:>9}", "macro-F1", f1);
        let _ = writeln!(s, "{:<9} {:>9.4}", "accuracy", self.accuracy);
        if let (Some(b), Some(d)) = (self.baseline_f1, self.delta) {
            let _ = writeln!(s, "{:<9} {:>9.4} (delta {:+.4})", "baseline", b, d);
        }
        let _ = writeln!(s, "{:<9} {:>9}", "n", self.n);
        s
    }
}

/// Scores above the baseline, compared at the 4-decimal precision reports
/// are printed with, so equal printed values never count as an improvement.
fn above(ours: f64, baseline: f64) -> bool {
    (ours * 1e4).round() > (baseline * 1e4).round()
}

/// Full id-aligned evaluation.
pub fn report(
    preds: &[Prediction],
    golds: &[Prediction],
    baseline_f1: Option<f64>,
    zero_division: ZeroDivision,
    metadata: RunMetadata,
) -> Result<EvalReport> {
    let cm = confusion_by_id(preds, golds)?;
    Ok(EvalReport::from_confusion(cm, baseline_f1, zero_division, metadata))
}
