//! Shared-task corpora: TSV ingestion, label/length statistics, anomaly
//! detection and translation-curriculum merging.
//!
//! The interchange format is a UTF-8, tab-separated file with a header row
//! naming at least `sentence_id`, `sentence` and (except for the test split)
//! `label`. Quoting is disabled: quote characters are ordinary text, which is
//! exactly what lets unmatched quotes survive into the token statistics.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ID_COLUMN: &str = "sentence_id";
pub const TEXT_COLUMN: &str = "sentence";
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed TSV: {0}")]
    Malformed(String),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("duplicate sentence_id `{0}`")]
    DuplicateId(String),
    #[error("row {line}: empty sentence_id")]
    EmptyId { line: u64 },
    #[error("row {line} (`{id}`): empty text")]
    EmptyText { line: u64, id: String },
    #[error("row {line} (`{id}`): bad label `{value}` (expected SUBJ or OBJ)")]
    BadLabel { line: u64, id: String, value: String },
    #[error("`{0}` has no label")]
    UnlabeledRow(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("curriculum has no entries")]
    EmptySpec,
    #[error("curriculum lists language `{0}` twice")]
    DuplicateLanguage(String),
    #[error("`{id}`: field contains a tab or newline and cannot be written as TSV")]
    Unwritable { id: String },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "SUBJ")]
    Subj,
    #[serde(rename = "OBJ")]
    Obj,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Subj, Label::Obj];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Subj => "SUBJ",
            Label::Obj => "OBJ",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Subj => Label::Obj,
            Label::Obj => Label::Subj,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label `{0}`")]
pub struct ParseLabelError(pub String);

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "SUBJ" => Ok(Label::Subj),
            "OBJ" => Ok(Label::Obj),
            other => Err(ParseLabelError(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Dev,
    DevTest,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::DevTest => "dev-test",
            Split::Test => "test",
        }
    }

    /// Only the test split may ship without gold labels.
    pub fn requires_labels(self) -> bool {
        self != Split::Test
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "dev-test" | "dev_test" => Ok(Split::DevTest),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence_id: String,
    pub text: String,
    pub label: Option<Label>,
    pub language: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub language: String,
    pub split: Split,
    pub sentences: Vec<LabeledSentence>,
}

impl Corpus {
    pub fn new(language: impl Into<String>, split: Split) -> Self {
        Corpus {
            language: language.into(),
            split,
            sentences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledSentence> {
        self.sentences.iter()
    }

    /// Appends a sentence, enforcing the corpus invariants.
    pub fn push(&mut self, id: impl Into<String>, text: impl Into<String>, label: Option<Label>) -> Result<()> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(CorpusError::EmptyId {
                line: self.sentences.len() as u64 + 2,
            });
        }
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                line: self.sentences.len() as u64 + 2,
                id,
            });
        }
        if self.sentences.iter().any(|s| s.sentence_id == id) {
            return Err(CorpusError::DuplicateId(id));
        }
        self.sentences.push(LabeledSentence {
            sentence_id: id,
            text,
            label,
            language: self.language.clone(),
            split: self.split,
        });
        Ok(())
    }

    /// Gold labels in corpus order, failing on the first unlabeled row.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.sentences
            .iter()
            .map(|s| s.label.ok_or_else(|| CorpusError::UnlabeledRow(s.sentence_id.clone())))
            .collect()
    }

    /// Copy of the corpus without the given sentence ids.
    pub fn without_ids(&self, ids: &HashSet<&str>) -> Corpus {
        Corpus {
            language: self.language.clone(),
            split: self.split,
            sentences: self
                .sentences
                .iter()
                .filter(|s| !ids.contains(s.sentence_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

pub fn load_split(path: impl AsRef<Path>, language: &str, split: Split) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_split(file, language, split)
}

/// Parses a corpus TSV from any reader; see [`load_split`].
pub fn read_split<R: Read>(reader: R, language: &str, split: Split) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed(e.to_string()))?
        .clone();
    let column = |name: &'static str| headers.iter().position(|h| h.trim() == name);
    let id_col = column(ID_COLUMN).ok_or(CorpusError::MissingColumn(ID_COLUMN))?;
    let text_col = column(TEXT_COLUMN).ok_or(CorpusError::MissingColumn(TEXT_COLUMN))?;
    let label_col = column(LABEL_COLUMN);
    if label_col.is_none() && split.requires_labels() {
        return Err(CorpusError::MissingColumn(LABEL_COLUMN));
    }

    let mut corpus = Corpus::new(language, split);
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CorpusError::Malformed(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::EmptyId { line });
        }
        let text = record.get(text_col).unwrap_or("");
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { line, id });
        }
        let raw_label = label_col.and_then(|c| record.get(c)).unwrap_or("").trim();
        let label = if raw_label.is_empty() && !split.requires_labels() {
            None
        } else {
            match raw_label.parse::<Label>() {
                Ok(l) => Some(l),
                Err(_) => {
                    return Err(CorpusError::BadLabel {
                        line,
                        id,
                        value: raw_label.to_string(),
                    })
                }
            }
        };
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        corpus.sentences.push(LabeledSentence {
            sentence_id: id,
            text: text.to_string(),
            label,
            language: language.to_string(),
            split,
        });
    }
    Ok(corpus)
}

/// Writes the canonical three-column TSV. Absent labels become empty cells.
pub fn write_tsv<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    let io = |source| CorpusError::Io {
        path: PathBuf::from("<output>"),
        source,
    };
    writeln!(out, "{ID_COLUMN}\t{TEXT_COLUMN}\t{LABEL_COLUMN}").map_err(io)?;
    for s in &corpus.sentences {
        let bad = |f: &str| f.contains(['\t', '\n', '\r']);
        if bad(&s.sentence_id) || bad(&s.text) {
            return Err(CorpusError::Unwritable {
                id: s.sentence_id.clone(),
            });
        }
        let label = s.label.map(Label::as_str).unwrap_or("");
        writeln!(out, "{}\t{}\t{}", s.sentence_id, s.text, label).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    #[serde(rename = "SUBJ")]
    pub subj: usize,
    #[serde(rename = "OBJ")]
    pub obj: usize,
}

impl LabelDistribution {
    pub fn total(&self) -> usize {
        self.subj + self.obj
    }

    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Subj => self.subj,
            Label::Obj => self.obj,
        }
    }

    /// SUBJ / (SUBJ + OBJ); 0 for an empty distribution.
    pub fn subj_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.subj as f64 / self.total() as f64
        }
    }
}

pub fn label_distribution(corpus: &Corpus) -> Result<LabelDistribution> {
    let mut dist = LabelDistribution { subj: 0, obj: 0 };
    for label in corpus.labels()? {
        match label {
            Label::Subj => dist.subj += 1,
            Label::Obj => dist.obj += 1,
        }
    }
    Ok(dist)
}

/// Splits text into tokens for length statistics.
pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

impl<F> Tokenizer for F
where
    F: Fn(&str) -> Vec<String> + Sync,
{
    fn tokenize(&self, text: &str) -> Vec<String> {
        self(text)
    }
}

/// Whitespace split, then every leading and trailing punctuation character
/// of a chunk becomes its own token. "Punctuation" is any character that is
/// neither alphanumeric nor whitespace, so `«Hi!»` gives `«`, `Hi`, `!`, `»`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTokenizer;

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

impl Tokenizer for RuleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for chunk in text.split_whitespace() {
            let Some(start) = chunk.find(|c: char| !is_punct(c)) else {
                tokens.extend(chunk.chars().map(String::from));
                continue;
            };
            let end = chunk
                .char_indices()
                .rev()
                .find(|&(_, c)| !is_punct(c))
                .map(|(i, c)| i + c.len_utf8())
                .unwrap_or(chunk.len());
            tokens.extend(chunk[..start].chars().map(String::from));
            tokens.push(chunk[start..end].to_string());
            tokens.extend(chunk[end..].chars().map(String::from));
        }
        tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub total: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    /// Lower-middle element for even totals, so the value is always a real count.
    pub median: usize,
}

impl LengthStats {
    pub fn from_counts(counts: &[usize]) -> Result<LengthStats> {
        if counts.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let total = sorted.len();
        let sum: usize = sorted.iter().sum();
        Ok(LengthStats {
            total,
            mean: sum as f64 / total as f64,
            min: sorted[0],
            max: sorted[total - 1],
            median: sorted[(total - 1) / 2],
        })
    }
}

pub fn token_stats(corpus: &Corpus, tokenizer: &dyn Tokenizer) -> Result<LengthStats> {
    let counts: Vec<usize> = corpus.iter().map(|s| tokenizer.count(&s.text)).collect();
    LengthStats::from_counts(&counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomaly {
    pub sentence_id: String,
    pub tokens: usize,
}

/// Rows longer than `max_tokens`, longest first (ties keep corpus order).
pub fn detect_anomalies(corpus: &Corpus, tokenizer: &dyn Tokenizer, max_tokens: usize) -> Vec<Anomaly> {
    let mut flagged: Vec<Anomaly> = corpus
        .iter()
        .filter_map(|s| {
            let tokens = tokenizer.count(&s.text);
            (tokens > max_tokens).then(|| Anomaly {
                sentence_id: s.sentence_id.clone(),
                tokens,
            })
        })
        .collect();
    flagged.sort_by_key(|a| std::cmp::Reverse(a.tokens));
    flagged
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumEntry {
    pub language: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumSpec {
    pub entries: Vec<CurriculumEntry>,
    pub seed: u64,
}

impl CurriculumSpec {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(CorpusError::EmptySpec);
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.language.as_str()) {
                return Err(CorpusError::DuplicateLanguage(e.language.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCount {
    pub language: String,
    pub path: PathBuf,
    pub sentences: usize,
}

#[derive(Debug, Clone)]
pub struct Curriculum {
    pub corpus: Corpus,
    pub sources: Vec<SourceCount>,
}

/// Loads every entry as a train split, concatenates them in spec order and
/// shuffles once with [`shuffle_seeded`]. The merged corpus takes the first
/// entry's language; ids must stay unique across sources.
pub fn build_curriculum(spec: &CurriculumSpec) -> Result<Curriculum> {
    spec.validate()?;
    let language = spec.entries[0].language.clone();
    let mut merged = Corpus::new(language.clone(), Split::Train);
    let mut seen = HashSet::new();
    let mut sources = Vec::with_capacity(spec.entries.len());
    for entry in &spec.entries {
        let part = load_split(&entry.path, &entry.language, Split::Train)?;
        sources.push(SourceCount {
            language: entry.language.clone(),
            path: entry.path.clone(),
            sentences: part.len(),
        });
        for mut s in part.sentences {
            if !seen.insert(s.sentence_id.clone()) {
                return Err(CorpusError::DuplicateId(s.sentence_id));
            }
            s.language = language.clone();
            merged.sentences.push(s);
        }
    }
    shuffle_seeded(&mut merged.sentences, spec.seed);
    Ok(Curriculum {
        corpus: merged,
        sources,
    })
}

/// Deterministic Fisher-Yates shuffle.
///
/// The generator is ChaCha8 keyed with the seed's 8 little-endian bytes
/// followed by 24 zero bytes. For `i` from `len-1` down to `1`, the swap
/// partner is `j = (next_u64() * (i + 1)) >> 64` (128-bit product), so the
/// order is reproducible from this description alone.
pub fn shuffle_seeded<T>(items: &mut [T], seed: u64) {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    for i in (1..items.len()).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tsv(body: &str) -> Result<Corpus> {
        read_split(body.as_bytes(), "en", Split::Train)
    }

    #[test]
    fn header_only_is_empty_corpus() {
        let c = tsv("sentence_id\tsentence\tlabel\n").unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = tsv("sentence_id\tsentence\tlabel\nx1\tA.\tOBJ\nx1\tB.\tSUBJ\n").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "x1"));
    }

    #[test]
    fn bad_and_missing_labels() {
        let err = tsv("sentence_id\tsentence\tlabel\nx1\tA.\tsubj\n").unwrap_err();
        assert!(matches!(err, CorpusError::BadLabel { value, .. } if value == "subj"));
        let err = tsv("sentence_id\tsentence\tlabel\nx1\tA.\t\n").unwrap_err();
        assert!(matches!(err, CorpusError::BadLabel { .. }));
    }

    #[test]
    fn test_split_may_omit_labels() {
        let c = read_split("sentence_id\tsentence\nt1\tSome text.\n".as_bytes(), "it", Split::Test).unwrap();
        assert_eq!(c.sentences[0].label, None);
        let err = read_split("sentence_id\tsentence\nt1\tSome text.\n".as_bytes(), "it", Split::Dev).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn("label")));
    }

    #[test]
    fn missing_text_column_and_empty_text() {
        let err = tsv("sentence_id\ttext\tlabel\n").unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn("sentence")));
        let err = tsv("sentence_id\tsentence\tlabel\nx1\t  \tOBJ\n").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyText { .. }));
    }

    #[test]
    fn extra_columns_and_literal_quotes() {
        let c = tsv("sentence_id\tsentence\tlabel\tsolved_conflict\nx1\t\"Open quote only.\tSUBJ\tFalse\n").unwrap();
        assert_eq!(c.sentences[0].text, "\"Open quote only.");
        assert_eq!(c.sentences[0].label, Some(Label::Subj));
    }

    #[test]
    fn rule_tokenizer_peels_punctuation() {
        let t = RuleTokenizer.tokenize("«Hi!» he said -- twice.");
        assert_eq!(t, ["«", "Hi", "!", "»", "he", "said", "-", "-", "twice", "."]);
        assert_eq!(RuleTokenizer.tokenize("Dr. Luke's"), ["Dr", ".", "Luke's"]);
    }

    #[test]
    fn median_is_lower_middle() {
        assert_eq!(LengthStats::from_counts(&[4, 8]).unwrap().median, 4);
        let one = LengthStats::from_counts(&[1]).unwrap();
        assert_eq!((one.total, one.min, one.max, one.median), (1, 1, 1, 1));
        assert_eq!(one.mean, 1.0);
        assert!(matches!(LengthStats::from_counts(&[]), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn all_obj_distribution() {
        let mut c = Corpus::new("en", Split::Train);
        for i in 0..4 {
            c.push(format!("o{i}"), "Fact.", Some(Label::Obj)).unwrap();
        }
        let d = label_distribution(&c).unwrap();
        assert_eq!((d.subj, d.obj), (0, 4));
        assert_eq!(d.subj_fraction(), 0.0);
    }

    #[test]
    fn shuffle_is_a_permutation_and_seed_stable() {
        let mut a: Vec<u32> = (0..100).collect();
        let mut b = a.clone();
        shuffle_seeded(&mut a, 7);
        shuffle_seeded(&mut b, 7);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        let mut c: Vec<u32> = (0..100).collect();
        shuffle_seeded(&mut c, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn curriculum_spec_validation() {
        let spec = CurriculumSpec {
            entries: vec![],
            seed: 0,
        };
        assert!(matches!(build_curriculum(&spec), Err(CorpusError::EmptySpec)));
        let e = CurriculumEntry {
            language: "de".into(),
            path: "a.tsv".into(),
        };
        let spec = CurriculumSpec {
            entries: vec![e.clone(), e],
            seed: 0,
        };
        assert!(matches!(spec.validate(), Err(CorpusError::DuplicateLanguage(_))));
    }
}
