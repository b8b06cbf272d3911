//! Zero-shot subjectivity classification strategies.
//!
//! - **annotation**: one call; the prompt embeds the decision rules.
//! - **doubledown**: a subjective rewrite, an objective rewrite, then an
//!   adjudication call deciding which rewrite the original is closer to.
//! - **perspective**: independent subjective-angle and objective-angle
//!   analyses, then a comparison call picking the more convincing one.
//!
//! Every strategy ends in [`parse_verdict`] on the last call's output.

mod batch;
mod prompts;
mod verdict;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabeledSentence;
use crate::gateway::{cache_key, ChatRequest, Gateway, GatewayError, Message};

pub use batch::{run_batch, BatchRow, BatchRun, Fallback, RowStatus};
pub use prompts::{sha256_hex, PromptError, PromptKind, PromptSet, PromptTemplate, RuleSet};
pub use verdict::{parse_verdict, ParsePath, Unparseable, Verdict};

pub const DEFAULT_ANNOTATION_MODEL: &str = "o3-mini";
pub const DEFAULT_GENERATIVE_MODEL: &str = "gpt-4.1-mini";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Annotation,
    DoubleDown,
    Perspective,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Annotation, Strategy::DoubleDown, Strategy::Perspective];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Annotation => "annotation",
            Strategy::DoubleDown => "doubledown",
            Strategy::Perspective => "perspective",
        }
    }

    /// Upstream calls issued per sentence.
    pub fn calls_per_sentence(self) -> usize {
        match self {
            Strategy::Annotation => 1,
            Strategy::DoubleDown | Strategy::Perspective => 3,
        }
    }

    pub fn default_model(self) -> &'static str {
        match self {
            Strategy::Annotation => DEFAULT_ANNOTATION_MODEL,
            Strategy::DoubleDown | Strategy::Perspective => DEFAULT_GENERATIVE_MODEL,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annotation" => Ok(Strategy::Annotation),
            "doubledown" => Ok(Strategy::DoubleDown),
            "perspective" => Ok(Strategy::Perspective),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Subjective,
    Objective,
}

/// Texts produced by the first two calls of the multi-step strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Intermediate {
    Rewrites { subjective: String, objective: String },
    Analyses { subjective: String, objective: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub sentence_id: String,
    pub strategy: Strategy,
    pub verdict: Verdict,
    /// Cache digests of the calls made, in issue order.
    pub trace: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<Intermediate>,
    /// Raw output of the final call.
    pub raw: String,
}

#[derive(Debug, Error)]
pub enum StrategyErrorKind {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("model output has no verdict: {raw:?}")]
    Unparseable { raw: String },
    #[error("{0:?} rewrite came back empty")]
    EmptyRewrite(Style),
    #[error("{0:?} analysis came back empty")]
    EmptyAnalysis(Style),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// A failed classification, with the digests of every call attempted so far
/// (the failing one included).
#[derive(Debug, Error)]
#[error("sentence `{sentence_id}`: {kind}")]
pub struct StrategyError {
    pub sentence_id: String,
    pub trace: Vec<String>,
    #[source]
    pub kind: StrategyErrorKind,
}

impl StrategyError {
    pub fn is_unparseable(&self) -> bool {
        matches!(self.kind, StrategyErrorKind::Unparseable { .. })
    }
}

/// Prompts, rules and model choice shared by all sentences of a run.
#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub prompts: PromptSet,
    pub rules: RuleSet,
    /// Overrides each strategy's default model when set.
    pub model: Option<String>,
    pub max_tokens: Option<u32>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            prompts: PromptSet::bundled(),
            rules: RuleSet::bundled(),
            model: None,
            max_tokens: None,
        }
    }
}

impl StrategyConfig {
    pub fn model_for(&self, strategy: Strategy) -> &str {
        self.model.as_deref().unwrap_or(strategy.default_model())
    }
}

/// Issues calls for one sentence and records their digests.
struct Session<'a> {
    sentence: &'a LabeledSentence,
    config: &'a StrategyConfig,
    gateway: &'a Gateway,
    model: &'a str,
    trace: Vec<String>,
}

impl<'a> Session<'a> {
    fn new(
        sentence: &'a LabeledSentence,
        strategy: Strategy,
        config: &'a StrategyConfig,
        gateway: &'a Gateway,
    ) -> Self {
        Session {
            sentence,
            config,
            gateway,
            model: config.model_for(strategy),
            trace: Vec::with_capacity(strategy.calls_per_sentence()),
        }
    }

    fn fail(self, kind: impl Into<StrategyErrorKind>) -> StrategyError {
        StrategyError {
            sentence_id: self.sentence.sentence_id.clone(),
            trace: self.trace,
            kind: kind.into(),
        }
    }

    fn call(&mut self, kind: PromptKind, extra: &[(&str, &str)]) -> Result<String, StrategyErrorKind> {
        let mut values = vec![("sentence", self.sentence.text.as_str())];
        values.extend_from_slice(extra);
        let prompt = self.config.prompts.get(kind).render(&values)?;
        let mut request = ChatRequest::new(self.model, vec![Message::user(prompt)]);
        request.max_tokens = self.config.max_tokens;
        self.trace.push(cache_key(&request));
        let completion = self.gateway.complete(&request)?;
        Ok(completion.exchange.response.content)
    }

    fn finish(
        self,
        strategy: Strategy,
        raw: String,
        intermediate: Option<Intermediate>,
    ) -> Result<StrategyResult, StrategyError> {
        match parse_verdict(&raw) {
            Ok(verdict) => Ok(StrategyResult {
                sentence_id: self.sentence.sentence_id.clone(),
                strategy,
                verdict,
                trace: self.trace,
                intermediate,
                raw,
            }),
            Err(Unparseable) => Err(self.fail(StrategyErrorKind::Unparseable { raw })),
        }
    }
}

macro_rules! step {
    ($session:ident, $expr:expr) => {
        match $expr {
            Ok(v) => v,
            Err(e) => return Err($session.fail(e)),
        }
    };
}

pub fn classify_annotation(
    sentence: &LabeledSentence,
    config: &StrategyConfig,
    gateway: &Gateway,
) -> Result<StrategyResult, StrategyError> {
    let mut s = Session::new(sentence, Strategy::Annotation, config, gateway);
    if config.rules.is_empty() {
        return Err(s.fail(PromptError::EmptyRules(config.rules.source().to_string())));
    }
    let rules = config.rules.render();
    let raw = step!(s, s.call(PromptKind::Annotation, &[("rules", &rules)]));
    s.finish(Strategy::Annotation, raw, None)
}

pub fn classify_doubledown(
    sentence: &LabeledSentence,
    config: &StrategyConfig,
    gateway: &Gateway,
) -> Result<StrategyResult, StrategyError> {
    let mut s = Session::new(sentence, Strategy::DoubleDown, config, gateway);
    let subjective = step!(s, s.call(PromptKind::DoubleDownSubjective, &[]));
    if subjective.trim().is_empty() {
        return Err(s.fail(StrategyErrorKind::EmptyRewrite(Style::Subjective)));
    }
    let objective = step!(s, s.call(PromptKind::DoubleDownObjective, &[]));
    if objective.trim().is_empty() {
        return Err(s.fail(StrategyErrorKind::EmptyRewrite(Style::Objective)));
    }
    let raw = step!(
        s,
        s.call(
            PromptKind::DoubleDownJudge,
            &[("rewrite_subj", subjective.trim()), ("rewrite_obj", objective.trim())],
        )
    );
    let rewrites = Intermediate::Rewrites { subjective, objective };
    s.finish(Strategy::DoubleDown, raw, Some(rewrites))
}

pub fn classify_perspective(
    sentence: &LabeledSentence,
    config: &StrategyConfig,
    gateway: &Gateway,
) -> Result<StrategyResult, StrategyError> {
    let mut s = Session::new(sentence, Strategy::Perspective, config, gateway);
    // The two analyses are separate requests with no shared context.
    let subjective = step!(s, s.call(PromptKind::PerspectiveSubjective, &[]));
    if subjective.trim().is_empty() {
        return Err(s.fail(StrategyErrorKind::EmptyAnalysis(Style::Subjective)));
    }
    let objective = step!(s, s.call(PromptKind::PerspectiveObjective, &[]));
    if objective.trim().is_empty() {
        return Err(s.fail(StrategyErrorKind::EmptyAnalysis(Style::Objective)));
    }
    let raw = step!(
        s,
        s.call(
            PromptKind::PerspectiveJudge,
            &[("analysis_subj", subjective.trim()), ("analysis_obj", objective.trim())],
        )
    );
    let analyses = Intermediate::Analyses { subjective, objective };
    s.finish(Strategy::Perspective, raw, Some(analyses))
}

pub fn classify(
    strategy: Strategy,
    sentence: &LabeledSentence,
    config: &StrategyConfig,
    gateway: &Gateway,
) -> Result<StrategyResult, StrategyError> {
    match strategy {
        Strategy::Annotation => classify_annotation(sentence, config, gateway),
        Strategy::DoubleDown => classify_doubledown(sentence, config, gateway),
        Strategy::Perspective => classify_perspective(sentence, config, gateway),
    }
}
