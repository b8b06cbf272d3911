//! Post-hoc calibration and the decision policy for two-class logits, plus
//! the training-side loss functions (focal loss, class weights).
//!
//! Logit order is always `[OBJ, SUBJ]`. The prediction pipeline is fixed as
//! scale by temperature, then softmax, then threshold on `p_subj`.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label, LabelDistribution};
use crate::optimize::golden_section;

/// Search interval for `ln T` when fitting a temperature.
pub const LOG_T_BOUNDS: (f64, f64) = (-5.0, 5.0);
pub const FIT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_SUBJ_THRESHOLD: f64 = 0.45;
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("probabilities ({0}, {1}) are not a distribution")]
    InvalidProbabilities(f64, f64),
    #[error("gold labels contain a single class")]
    DegenerateLabels,
    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("{records} records but {golds} gold labels")]
    LengthMismatch { records: usize, golds: usize },
    #[error("class count for {0} is zero")]
    ZeroClassCount(Label),
    #[error("gold class has probability zero")]
    ZeroProbabilityForGold,
    #[error("focal gamma must be >= 0, got {0}")]
    NegativeGamma(f64),
    #[error("duplicate sentence_id `{0}` in logits")]
    DuplicateId(String),
    #[error("no gold label for `{0}`")]
    MissingGold(String),
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CalibrationError::NonFinite(x))
    }
}

/// Raw two-class scores, serialized as `[z_obj, z_subj]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Logits {
    pub obj: f64,
    pub subj: f64,
}

impl Logits {
    pub fn new(obj: f64, subj: f64) -> Self {
        Logits { obj, subj }
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Obj => self.obj,
            Label::Subj => self.subj,
        }
    }

    pub fn argmax(&self) -> Label {
        if self.subj > self.obj {
            Label::Subj
        } else {
            Label::Obj
        }
    }
}

impl From<[f64; 2]> for Logits {
    fn from([obj, subj]: [f64; 2]) -> Self {
        Logits { obj, subj }
    }
}

impl From<Logits> for [f64; 2] {
    fn from(z: Logits) -> Self {
        [z.obj, z.subj]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probs {
    pub obj: f64,
    pub subj: f64,
}

impl Probs {
    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Obj => self.obj,
            Label::Subj => self.subj,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub sentence_id: String,
    pub logits: Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub const IDENTITY: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Temperature(t))
        } else {
            Err(CalibrationError::NonPositiveTemperature(t))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Max-subtracted softmax over the two logits.
pub fn softmax(z: Logits) -> Result<Probs> {
    finite(z.obj)?;
    finite(z.subj)?;
    let m = z.obj.max(z.subj);
    let e_obj = (z.obj - m).exp();
    let e_subj = (z.subj - m).exp();
    let sum = e_obj + e_subj;
    Ok(Probs {
        obj: e_obj / sum,
        subj: e_subj / sum,
    })
}

pub fn scale(z: Logits, t: f64) -> Result<Logits> {
    let t = Temperature::new(t)?;
    Ok(Logits::new(z.obj / t.get(), z.subj / t.get()))
}

/// `-ln softmax(z)[gold]`, evaluated through log-sum-exp.
fn gold_nll(z: Logits, gold: Label, t: f64) -> f64 {
    let (a, b) = (z.obj / t, z.subj / t);
    let m = a.max(b);
    let lse = m + ((a - m).exp() + (b - m).exp()).ln();
    lse - z.get(gold) / t
}

/// Mean negative log-likelihood of `golds` under `softmax(z / t)`.
pub fn mean_nll(records: &[LogitRecord], golds: &[Label], t: f64) -> Result<f64> {
    let t = Temperature::new(t)?.get();
    check_lengths(records, golds)?;
    if records.is_empty() {
        return Err(CalibrationError::TooFewRecords(0));
    }
    let sum: f64 = records.iter().zip(golds).map(|(r, &g)| gold_nll(r.logits, g, t)).sum();
    Ok(sum / records.len() as f64)
}

fn check_lengths(records: &[LogitRecord], golds: &[Label]) -> Result<()> {
    if records.len() != golds.len() {
        return Err(CalibrationError::LengthMismatch {
            records: records.len(),
            golds: golds.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub temperature: f64,
    pub fitted_on: String,
    pub nll: f64,
}

impl CalibrationModel {
    pub fn temperature(&self) -> Result<Temperature> {
        Temperature::new(self.temperature)
    }
}

/// Fits the temperature minimizing mean NLL by golden-section search on
/// `ln T` over `[-5, 5]`. Never returns a model worse than `T = 1`.
pub fn fit_temperature(records: &[LogitRecord], golds: &[Label], fitted_on: &str) -> Result<CalibrationModel> {
    check_lengths(records, golds)?;
    if records.len() < 2 {
        return Err(CalibrationError::TooFewRecords(records.len()));
    }
    let classes: HashSet<Label> = golds.iter().copied().collect();
    if classes.len() < 2 {
        return Err(CalibrationError::DegenerateLabels);
    }
    for r in records {
        finite(r.logits.obj)?;
        finite(r.logits.subj)?;
    }

    let objective = |log_t: f64| {
        let t = log_t.exp();
        records
            .iter()
            .zip(golds)
            .map(|(r, &g)| gold_nll(r.logits, g, t))
            .sum::<f64>()
            / records.len() as f64
    };
    let best = golden_section(objective, LOG_T_BOUNDS.0, LOG_T_BOUNDS.1, FIT_TOLERANCE);
    let identity = objective(0.0);
    let (temperature, nll) = if best.value <= identity {
        (best.x.exp(), best.value)
    } else {
        (1.0, identity)
    };
    Ok(CalibrationModel {
        temperature,
        fitted_on: fitted_on.to_string(),
        nll,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    subj_threshold: f64,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        DecisionPolicy {
            subj_threshold: DEFAULT_SUBJ_THRESHOLD,
        }
    }
}

impl DecisionPolicy {
    pub fn new(subj_threshold: f64) -> Result<Self> {
        if subj_threshold > 0.0 && subj_threshold < 1.0 {
            Ok(DecisionPolicy { subj_threshold })
        } else {
            Err(CalibrationError::InvalidThreshold(subj_threshold))
        }
    }

    pub fn subj_threshold(&self) -> f64 {
        self.subj_threshold
    }
}

/// SUBJ iff `p_subj >= threshold`.
pub fn decide(probs: Probs, policy: DecisionPolicy) -> Result<Label> {
    let ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
    if !ok(probs.obj) || !ok(probs.subj) || (probs.obj + probs.subj - 1.0).abs() > 1e-9 {
        return Err(CalibrationError::InvalidProbabilities(probs.obj, probs.subj));
    }
    Ok(if probs.subj >= policy.subj_threshold {
        Label::Subj
    } else {
        Label::Obj
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub obj: f64,
    pub subj: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights { obj: 1.0, subj: 1.0 };

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Obj => self.obj,
            Label::Subj => self.subj,
        }
    }
}

/// Inverse-frequency weights `w_c = N / (2 * n_c)`.
pub fn class_weights(dist: LabelDistribution) -> Result<ClassWeights> {
    for label in Label::ALL {
        if dist.count(label) == 0 {
            return Err(CalibrationError::ZeroClassCount(label));
        }
    }
    let n = dist.total() as f64;
    Ok(ClassWeights {
        obj: n / (2.0 * dist.obj as f64),
        subj: n / (2.0 * dist.subj as f64),
    })
}

/// Class-weighted focal loss `-w_t (1 - p_t)^gamma ln p_t`.
pub fn focal_loss(probs: Probs, gold: Label, gamma: f64, weights: ClassWeights) -> Result<f64> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(CalibrationError::NegativeGamma(gamma));
    }
    let p_t = finite(probs.get(gold))?;
    if p_t <= 0.0 {
        return Err(CalibrationError::ZeroProbabilityForGold);
    }
    let p_t = p_t.min(1.0);
    let loss = -weights.get(gold) * (1.0 - p_t).powf(gamma) * p_t.ln();
    Ok(loss.max(0.0))
}

/// Class-weighted cross-entropy `-w_t ln p_t`.
pub fn weighted_cross_entropy(probs: Probs, gold: Label, weights: ClassWeights) -> Result<f64> {
    let p_t = finite(probs.get(gold))?;
    if p_t <= 0.0 {
        return Err(CalibrationError::ZeroProbabilityForGold);
    }
    Ok((-weights.get(gold) * p_t.min(1.0).ln()).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibratedPrediction {
    pub sentence_id: String,
    pub p_subj: f64,
    pub label: Label,
}

/// Applies scale, softmax and threshold to each record.
pub fn calibrate_and_predict(
    records: &[LogitRecord],
    temperature: Temperature,
    policy: DecisionPolicy,
) -> Result<Vec<CalibratedPrediction>> {
    records
        .iter()
        .map(|r| {
            let probs = softmax(scale(r.logits, temperature.get())?)?;
            Ok(CalibratedPrediction {
                sentence_id: r.sentence_id.clone(),
                p_subj: probs.subj,
                label: decide(probs, policy)?,
            })
        })
        .collect()
}

/// Reads a logits JSONL file: one `{"sentence_id", "logits": [z_obj, z_subj]}`
/// object per line. Blank lines are skipped; ids must be unique.
pub fn read_logits<R: BufRead>(reader: R) -> Result<Vec<LogitRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogitRecord = serde_json::from_str(&line).map_err(|e| CalibrationError::BadRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        for z in [record.logits.obj, record.logits.subj] {
            if !z.is_finite() {
                return Err(CalibrationError::BadRecord {
                    line: i + 1,
                    message: format!("non-finite logit {z}"),
                });
            }
        }
        if !seen.insert(record.sentence_id.clone()) {
            return Err(CalibrationError::DuplicateId(record.sentence_id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_logits<W: Write>(records: &[LogitRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Gold labels for `records`, looked up by sentence id in `gold`.
pub fn align_golds(records: &[LogitRecord], gold: &Corpus) -> Result<Vec<Label>> {
    let by_id: HashMap<&str, Option<Label>> = gold.iter().map(|s| (s.sentence_id.as_str(), s.label)).collect();
    records
        .iter()
        .map(|r| {
            by_id
                .get(r.sentence_id.as_str())
                .copied()
                .flatten()
                .ok_or_else(|| CalibrationError::MissingGold(r.sentence_id.clone()))
        })
        .collect()
}
