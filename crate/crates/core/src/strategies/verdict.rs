//! Two-stage extraction of a label from free-form model output.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParsePath {
    Json,
    Keyword,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub explanation: String,
    pub parse_path: ParsePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no verdict in model output")]
pub struct Unparseable;

/// Stage 1: the whole output, or else its first embedded JSON object, with a
/// `verdict` field naming subj(ective) or obj(ective). Stage 2: the earliest
/// case-insensitive occurrence of "subjective" or "objective" in the raw text.
pub fn parse_verdict(raw: &str) -> Result<Verdict, Unparseable> {
    if let Some(v) = json_verdict(raw) {
        return Ok(v);
    }
    keyword_verdict(raw).ok_or(Unparseable)
}

fn json_verdict(raw: &str) -> Option<Verdict> {
    let object = match serde_json::from_str::<Value>(raw.trim()) {
        Ok(v @ Value::Object(_)) => v,
        _ => first_object(raw)?,
    };
    let label = match object.get("verdict")? {
        Value::String(s) => earliest(&s.to_lowercase(), &[("subj", Label::Subj), ("obj", Label::Obj)])?,
        _ => return None,
    };
    let explanation = match object.get("explanation") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    Some(Verdict {
        label,
        explanation,
        parse_path: ParsePath::Json,
    })
}

/// The first `{` that starts a complete JSON object.
fn first_object(raw: &str) -> Option<Value> {
    raw.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v @ Value::Object(_))) => Some(v),
            _ => None,
        }
    })
}

fn keyword_verdict(raw: &str) -> Option<Verdict> {
    let label = earliest(
        &raw.to_lowercase(),
        &[("subjective", Label::Subj), ("objective", Label::Obj)],
    )?;
    Some(Verdict {
        label,
        explanation: raw.trim().to_string(),
        parse_path: ParsePath::Keyword,
    })
}

fn earliest(haystack: &str, needles: &[(&str, Label)]) -> Option<Label> {
    needles
        .iter()
        .filter_map(|(n, l)| haystack.find(n).map(|i| (i, *l)))
        .min_by_key(|(i, _)| *i)
        .map(|(_, l)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_path() {
        let v = parse_verdict(r#"{"verdict":"objective","explanation":"factual statement"}"#).unwrap();
        assert_eq!(
            v,
            Verdict {
                label: Label::Obj,
                explanation: "factual statement".into(),
                parse_path: ParsePath::Json
            }
        );
    }

    #[test]
    fn keyword_path_keeps_whole_text() {
        let raw = "The sentence is clearly subjective because of loaded wording.";
        let v = parse_verdict(raw).unwrap();
        assert_eq!((v.label, v.parse_path), (Label::Subj, ParsePath::Keyword));
        assert_eq!(v.explanation, raw);
    }

    #[test]
    fn earliest_keyword_wins() {
        assert_eq!(
            parse_verdict("It reads objective, not subjective.").unwrap().label,
            Label::Obj
        );
        assert!(parse_verdict("I cannot decide.").is_err());
    }
}
