//! Prompt templates and the decision rule set, bundled as text assets and
//! overridable from disk.
//!
//! Templates use `{name}` placeholders. Substitution is a single pass over the
//! template, so braces inside substituted values (a sentence quoting JSON, a
//! rewrite containing `{rules}`) are never expanded.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template `{template}` uses unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}` is missing required placeholder `{{{name}}}`")]
    MissingPlaceholder { template: String, name: String },
    #[error("no value supplied for `{{{0}}}`")]
    MissingValue(String),
    #[error("rule set `{0}` is empty")]
    EmptyRules(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The seven prompt slots, with the placeholders each must use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptKind {
    Annotation,
    DoubleDownSubjective,
    DoubleDownObjective,
    DoubleDownJudge,
    PerspectiveSubjective,
    PerspectiveObjective,
    PerspectiveJudge,
}

impl PromptKind {
    pub const ALL: [PromptKind; 7] = [
        PromptKind::Annotation,
        PromptKind::DoubleDownSubjective,
        PromptKind::DoubleDownObjective,
        PromptKind::DoubleDownJudge,
        PromptKind::PerspectiveSubjective,
        PromptKind::PerspectiveObjective,
        PromptKind::PerspectiveJudge,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::Annotation => "annotation.txt",
            PromptKind::DoubleDownSubjective => "dd_subj.txt",
            PromptKind::DoubleDownObjective => "dd_obj.txt",
            PromptKind::DoubleDownJudge => "dd_judge.txt",
            PromptKind::PerspectiveSubjective => "persp_subj.txt",
            PromptKind::PerspectiveObjective => "persp_obj.txt",
            PromptKind::PerspectiveJudge => "persp_judge.txt",
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptKind::Annotation => &["sentence", "rules"],
            PromptKind::DoubleDownJudge => &["sentence", "rewrite_subj", "rewrite_obj"],
            PromptKind::PerspectiveJudge => &["sentence", "analysis_subj", "analysis_obj"],
            _ => &["sentence"],
        }
    }

    fn bundled(self) -> &'static str {
        match self {
            PromptKind::Annotation => include_str!("../../assets/prompts/annotation.txt"),
            PromptKind::DoubleDownSubjective => include_str!("../../assets/prompts/dd_subj.txt"),
            PromptKind::DoubleDownObjective => include_str!("../../assets/prompts/dd_obj.txt"),
            PromptKind::DoubleDownJudge => include_str!("../../assets/prompts/dd_judge.txt"),
            PromptKind::PerspectiveSubjective => include_str!("../../assets/prompts/persp_subj.txt"),
            PromptKind::PerspectiveObjective => include_str!("../../assets/prompts/persp_obj.txt"),
            PromptKind::PerspectiveJudge => include_str!("../../assets/prompts/persp_judge.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

impl PromptTemplate {
    /// Checks that the template uses exactly the `allowed` placeholders.
    pub fn new(name: impl Into<String>, text: impl Into<String>, allowed: &[&str]) -> Result<Self, PromptError> {
        let name = name.into();
        let text = text.into();
        let used: HashSet<&str> = placeholder_re()
            .captures_iter(&text)
            .map(|c| c.get(1).unwrap().as_str())
            .collect();
        if let Some(unknown) = used.iter().find(|u| !allowed.contains(u)) {
            return Err(PromptError::UnknownPlaceholder {
                template: name,
                name: unknown.to_string(),
            });
        }
        if let Some(missing) = allowed.iter().find(|a| !used.contains(*a)) {
            return Err(PromptError::MissingPlaceholder {
                template: name,
                name: missing.to_string(),
            });
        }
        Ok(PromptTemplate { name, text })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut missing = None;
        let out = placeholder_re().replace_all(&self.text, |caps: &Captures| {
            let key = &caps[1];
            match values.iter().find(|(k, _)| *k == key) {
                Some((_, v)) => v.to_string(),
                None => {
                    missing.get_or_insert_with(|| key.to_string());
                    String::new()
                }
            }
        });
        match missing {
            Some(key) => Err(PromptError::MissingValue(key)),
            None => Ok(out.trim_end().to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<PromptKind, PromptTemplate>,
    sources: BTreeMap<PromptKind, String>,
}

impl PromptSet {
    pub fn bundled() -> Self {
        let mut templates = BTreeMap::new();
        let mut sources = BTreeMap::new();
        for kind in PromptKind::ALL {
            let t = PromptTemplate::new(kind.file_name(), kind.bundled(), kind.placeholders())
                .expect("bundled prompt templates are valid");
            templates.insert(kind, t);
            sources.insert(kind, format!("bundled:{}", kind.file_name()));
        }
        PromptSet { templates, sources }
    }

    /// Bundled templates, replaced by any same-named file found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::bundled();
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            set.templates
                .insert(kind, PromptTemplate::new(kind.file_name(), text, kind.placeholders())?);
            set.sources.insert(kind, path.display().to_string());
        }
        Ok(set)
    }

    pub fn get(&self, kind: PromptKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    /// `file name -> sha256` of every template, for run manifests.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(k, t)| (k.file_name().to_string(), sha256_hex(t.text())))
            .collect()
    }

    pub fn sources(&self) -> BTreeMap<String, String> {
        self.sources
            .iter()
            .map(|(k, s)| (k.file_name().to_string(), s.clone()))
            .collect()
    }
}

/// Ordered subjectivity decision rules embedded in the annotation prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<String>,
    source: String,
}

impl RuleSet {
    pub const BUNDLED_LEN: usize = 14;

    pub fn bundled() -> Self {
        Self::parse(include_str!("../../assets/rules.txt"), "bundled:rules.txt").expect("bundled rules are valid")
    }

    /// One rule per line; blank lines and `#` comments are skipped and a
    /// leading list marker (`1.`, `2)`, `-`, `*`) is stripped.
    pub fn parse(text: &str, source: impl Into<String>) -> Result<Self, PromptError> {
        let source = source.into();
        let marker = Regex::new(r"^(?:\d+[.)]|[-*])\s*").unwrap();
        let rules: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| marker.replace(l, "").trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if rules.is_empty() {
            return Err(PromptError::EmptyRules(source));
        }
        Ok(RuleSet { rules, source })
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, path.display().to_string())
    }

    pub fn rules(&self) -> &[String] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Numbered list, one rule per line, as inserted into `{rules}`.
    pub fn render(&self) -> String {
        self.rules
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{}. {r}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_assets() {
        assert_eq!(RuleSet::bundled().len(), RuleSet::BUNDLED_LEN);
        let set = PromptSet::bundled();
        assert_eq!(set.hashes().len(), 7);
        assert!(set.get(PromptKind::Annotation).text().contains("{rules}"));
    }

    #[test]
    fn render_is_single_pass() {
        let t = PromptTemplate::new("t", "S: {sentence} R: {rules}", &["sentence", "rules"]).unwrap();
        let out = t.render(&[("sentence", "a {rules} b"), ("rules", "R1")]).unwrap();
        assert_eq!(out, "S: a {rules} b R: R1");
        assert!(matches!(t.render(&[("sentence", "x")]), Err(PromptError::MissingValue(k)) if k == "rules"));
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplate::new("t", "{sentence} {bogus}", &["sentence"]),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
        assert!(matches!(
            PromptTemplate::new("t", "no slots", &["sentence"]),
            Err(PromptError::MissingPlaceholder { .. })
        ));
        // JSON braces are not placeholders.
        assert!(PromptTemplate::new("t", "{sentence} {\"verdict\": \"x\"}", &["sentence"]).is_ok());
    }

    #[test]
    fn rule_parsing() {
        let r = RuleSet::parse("# note\n1. first\n\n2) second\n- third\n", "t").unwrap();
        assert_eq!(r.rules(), ["first", "second", "third"]);
        assert_eq!(r.render(), "1. first\n2. second\n3. third");
        assert!(RuleSet::parse("# only comments\n", "t").is_err());
    }

    #[test]
    fn overrides_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("dd_obj.txt"), "Neutralize: {sentence}").unwrap();
        let set = PromptSet::with_overrides(dir.path()).unwrap();
        assert_eq!(
            set.get(PromptKind::DoubleDownObjective).text(),
            "Neutralize: {sentence}"
        );
        assert_ne!(set.hashes()["dd_obj.txt"], PromptSet::bundled().hashes()["dd_obj.txt"]);
        std::fs::write(dir.path().join("dd_judge.txt"), "{sentence} only").unwrap();
        assert!(PromptSet::with_overrides(dir.path()).is_err());
    }
}
