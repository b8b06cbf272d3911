use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{classify, ParsePath, Strategy, StrategyConfig, StrategyError, StrategyErrorKind, StrategyResult};
use crate::corpus::{Corpus, Label};
use crate::gateway::Gateway;
use crate::metrics::Prediction;

/// What to record for a sentence whose classification failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Substitute this label and flag the row.
    Label(Label),
    /// Leave the row unlabeled.
    Error,
}

impl Default for Fallback {
    /// OBJ is the majority class of every training split.
    fn default() -> Self {
        Fallback::Label(Label::Obj)
    }
}

impl std::str::FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(Fallback::Label(Label::Obj)),
            "subj" => Ok(Fallback::Label(Label::Subj)),
            "error" => Ok(Fallback::Error),
            other => Err(format!("unknown fallback `{other}` (expected obj, subj or error)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Classified,
    Unparseable,
    EmptyOutput,
    UpstreamError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRow {
    pub sentence_id: String,
    /// Final label: the parsed verdict, or the fallback when one applies.
    pub label: Option<Label>,
    pub status: RowStatus,
    pub parse_path: Option<ParsePath>,
    pub fallback_applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trace: Vec<String>,
    #[serde(skip)]
    pub result: Option<StrategyResult>,
}

impl BatchRow {
    fn classified(result: StrategyResult) -> Self {
        BatchRow {
            sentence_id: result.sentence_id.clone(),
            label: Some(result.verdict.label),
            status: RowStatus::Classified,
            parse_path: Some(result.verdict.parse_path),
            fallback_applied: false,
            error: None,
            trace: result.trace.clone(),
            result: Some(result),
        }
    }

    fn failed(err: StrategyError, fallback: Fallback) -> Self {
        let status = match &err.kind {
            StrategyErrorKind::Unparseable { .. } => RowStatus::Unparseable,
            StrategyErrorKind::EmptyRewrite(_) | StrategyErrorKind::EmptyAnalysis(_) => RowStatus::EmptyOutput,
            StrategyErrorKind::Gateway(_) | StrategyErrorKind::Prompt(_) => RowStatus::UpstreamError,
        };
        let label = match fallback {
            Fallback::Label(l) => Some(l),
            Fallback::Error => None,
        };
        BatchRow {
            sentence_id: err.sentence_id.clone(),
            label,
            status,
            parse_path: None,
            fallback_applied: label.is_some(),
            error: Some(err.kind.to_string()),
            trace: err.trace,
            result: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRun {
    pub strategy: Strategy,
    /// One row per corpus sentence, in corpus order.
    pub rows: Vec<BatchRow>,
}

impl BatchRun {
    pub fn fallback_count(&self) -> usize {
        self.rows.iter().filter(|r| r.fallback_applied).count()
    }

    pub fn count(&self, status: RowStatus) -> usize {
        self.rows.iter().filter(|r| r.status == status).count()
    }

    /// Total calls issued by the strategies (cache hits included).
    pub fn calls(&self) -> usize {
        self.rows.iter().map(|r| r.trace.len()).sum()
    }

    /// Rows with a label, in corpus order; `None` if any row has none.
    pub fn predictions(&self) -> Option<Vec<Prediction>> {
        self.rows
            .iter()
            .map(|r| r.label.map(|l| Prediction::new(r.sentence_id.clone(), l)))
            .collect()
    }
}

/// Classifies every sentence with up to `concurrency` worker threads.
/// Per-sentence failures become flagged rows; output order always follows
/// the corpus.
pub fn run_batch(
    corpus: &Corpus,
    strategy: Strategy,
    config: &StrategyConfig,
    gateway: &Gateway,
    concurrency: usize,
    fallback: Fallback,
) -> BatchRun {
    let n = corpus.len();
    let slots: Vec<Mutex<Option<BatchRow>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = concurrency.clamp(1, n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let sentence = &corpus.sentences[i];
                let row = match classify(strategy, sentence, config, gateway) {
                    Ok(result) => BatchRow::classified(result),
                    Err(err) => BatchRow::failed(err, fallback),
                };
                *slots[i].lock().unwrap() = Some(row);
            });
        }
    });

    BatchRun {
        strategy,
        rows: slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every sentence is processed"))
            .collect(),
    }
}
