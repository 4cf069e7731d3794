//! Canonical question-answering datasets.
//!
//! Every supported task shape (multiple choice with 2 to 5 options, and yes/no)
//! is stored as an [`Example`] with lettered options. Yes/no questions become
//! two-option examples with `A = "yes"` and `B = "no"`, so stance handling and
//! metrics never need a separate code path.
//!
//! On disk a dataset is one JSON record per line:
//!
//! ```text
//! {"id":"copa-1","question":"...","options":["...","..."],"gold":"A","task_kind":"multiple_choice"}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no examples in {0}")]
    Empty(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate example id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: gold {gold} is not among the {options} options")]
    GoldNotAmongOptions {
        line: usize,
        gold: OptionLabel,
        options: usize,
    },
    #[error("line {line}: example has {found} options, dataset declares {declared}")]
    OptionCountMismatch {
        line: usize,
        found: usize,
        declared: usize,
    },
    #[error("invalid option label {0:?}")]
    InvalidLabel(String),
}

/// A choice letter, `A` through `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OptionLabel(u8);

impl OptionLabel {
    pub const A: OptionLabel = OptionLabel(0);
    pub const B: OptionLabel = OptionLabel(1);
    pub const C: OptionLabel = OptionLabel(2);
    pub const D: OptionLabel = OptionLabel(3);
    pub const E: OptionLabel = OptionLabel(4);

    pub fn from_index(index: usize) -> Option<Self> {
        (index < MAX_OPTIONS).then_some(OptionLabel(index as u8))
    }

    pub fn from_letter(letter: char) -> Option<Self> {
        let upper = letter.to_ascii_uppercase();
        if ('A'..='E').contains(&upper) {
            Some(OptionLabel(upper as u8 - b'A'))
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }

    /// Labels `A..` for an example with `count` options.
    pub fn all(count: usize) -> impl Iterator<Item = OptionLabel> {
        (0..count.min(MAX_OPTIONS)).map(|i| OptionLabel(i as u8))
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for OptionLabel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_uppercase() => {
                OptionLabel::from_letter(c).ok_or_else(|| DatasetError::InvalidLabel(s.into()))
            }
            _ => Err(DatasetError::InvalidLabel(s.into())),
        }
    }
}

impl Serialize for OptionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OptionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MultipleChoice,
    YesNo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YesNo {
    Yes,
    No,
}

/// One question with lettered options and a gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub question: String,
    /// Option texts in label order; the label of `options[i]` is the i-th letter.
    pub options: Vec<String>,
    pub gold: OptionLabel,
    pub task_kind: TaskKind,
}

impl Example {
    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = OptionLabel> {
        OptionLabel::all(self.options.len())
    }

    pub fn has_label(&self, label: OptionLabel) -> bool {
        label.index() < self.options.len()
    }

    pub fn option_text(&self, label: OptionLabel) -> Option<&str> {
        self.options.get(label.index()).map(String::as_str)
    }

    /// Structural problems with this example, independent of its dataset.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.options.len();
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&n) {
            out.push(format!(
                "{} options, expected {MIN_OPTIONS} to {MAX_OPTIONS}",
                n
            ));
        }
        if !self.has_label(self.gold) {
            out.push(format!("gold {} is not among the {n} options", self.gold));
        }
        if self.task_kind == TaskKind::YesNo && self.options != ["yes", "no"] {
            out.push("yes/no example must have options [\"yes\", \"no\"]".into());
        }
        out
    }
}

/// Builds a yes/no example stored as two options, `A = yes` and `B = no`.
pub fn normalize_yes_no(id: impl Into<String>, raw_question: &str, raw_gold: YesNo) -> Example {
    Example {
        id: id.into(),
        question: raw_question.to_string(),
        options: vec!["yes".into(), "no".into()],
        gold: match raw_gold {
            YesNo::Yes => OptionLabel::A,
            YesNo::No => OptionLabel::B,
        },
        task_kind: TaskKind::YesNo,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
    pub declared_option_count: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormatHint {
    CanonicalJsonl,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// 1-based position of the example in the dataset.
    pub position: usize,
    pub example_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub count: usize,
    /// option count -> number of examples
    pub option_histogram: BTreeMap<usize, usize>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut seen = HashSet::new();
    let mut violations = Vec::new();
    let mut option_histogram = BTreeMap::new();
    for (i, ex) in ds.examples.iter().enumerate() {
        let position = i + 1;
        *option_histogram.entry(ex.option_count()).or_insert(0) += 1;
        let mut push = |message: String| {
            violations.push(Violation {
                position,
                example_id: ex.id.clone(),
                message,
            })
        };
        if !seen.insert(ex.id.as_str()) {
            push(format!("duplicate id {:?}", ex.id));
        }
        if ex.option_count() != ds.declared_option_count {
            push(format!(
                "{} options, dataset declares {}",
                ex.option_count(),
                ds.declared_option_count
            ));
        }
        for problem in ex.problems() {
            push(problem);
        }
    }
    if ds.examples.is_empty() {
        violations.push(Violation {
            position: 0,
            example_id: String::new(),
            message: "no examples".into(),
        });
    }
    ValidationReport {
        count: ds.examples.len(),
        option_histogram,
        violations,
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses records without enforcing dataset-level invariants. Each entry carries
/// its 1-based source line. Used by validation, which wants every violation.
pub fn read_examples(path: &Path, hint: FormatHint) -> Result<Vec<(usize, Example)>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let array_form = hint == FormatHint::Auto && text.trim_start().starts_with('[');
    if array_form {
        let examples: Vec<Example> = serde_json::from_str(&text).map_err(|e| {
            DatasetError::Malformed {
                line: e.line(),
                message: e.to_string(),
            }
        })?;
        return Ok(examples
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i + 1, e))
            .collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, ex));
    }
    Ok(out)
}

/// Loads a dataset and enforces every invariant, failing on the first offender.
pub fn load_dataset(path: &Path, hint: FormatHint) -> Result<Dataset, DatasetError> {
    let records = read_examples(path, hint)?;
    let Some((_, first)) = records.first() else {
        return Err(DatasetError::Empty(path.display().to_string()));
    };
    let declared = first.option_count();
    let mut seen = HashSet::new();
    for (line, ex) in &records {
        let line = *line;
        let n = ex.option_count();
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&n) {
            return Err(DatasetError::Malformed {
                line,
                message: format!("{n} options, expected {MIN_OPTIONS} to {MAX_OPTIONS}"),
            });
        }
        if !ex.has_label(ex.gold) {
            return Err(DatasetError::GoldNotAmongOptions {
                line,
                gold: ex.gold,
                options: n,
            });
        }
        if let Some(problem) = ex.problems().into_iter().next() {
            return Err(DatasetError::Malformed {
                line,
                message: problem,
            });
        }
        if !seen.insert(ex.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line,
                id: ex.id.clone(),
            });
        }
        if n != declared {
            return Err(DatasetError::OptionCountMismatch {
                line,
                found: n,
                declared,
            });
        }
    }
    Ok(Dataset {
        name: dataset_name(path),
        examples: records.into_iter().map(|(_, e)| e).collect(),
        declared_option_count: declared,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut buf = Vec::new();
    for ex in &ds.examples {
        serde_json::to_writer(&mut buf, ex).expect("example serializes");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;
    file.sync_all().map_err(io_err(path))
}

/// Hex SHA-256 of the file's bytes.
pub fn file_digest(path: &Path) -> Result<String, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn mc(id: &str, n: usize, gold: OptionLabel) -> Example {
        Example {
            id: id.into(),
            question: format!("question {id}"),
            options: (0..n).map(|i| format!("option {i}")).collect(),
            gold,
            task_kind: TaskKind::MultipleChoice,
        }
    }

    fn write(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn labels_parse_and_display() {
        assert_eq!("C".parse::<OptionLabel>().unwrap(), OptionLabel::C);
        assert!("F".parse::<OptionLabel>().is_err());
        assert!("a".parse::<OptionLabel>().is_err());
        assert!("AB".parse::<OptionLabel>().is_err());
        assert_eq!(OptionLabel::E.to_string(), "E");
        assert_eq!(OptionLabel::all(3).collect::<Vec<_>>(), [OptionLabel::A, OptionLabel::B, OptionLabel::C]);
    }

    #[test]
    fn copa_sized_file_loads() {
        let dir = TempDir::new().unwrap();
        let ds = Dataset {
            name: "copa".into(),
            examples: (0..500).map(|i| mc(&format!("copa-{i}"), 2, OptionLabel::from_index(i % 2).unwrap())).collect(),
            declared_option_count: 2,
        };
        let path = dir.path().join("copa.jsonl");
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path, FormatHint::CanonicalJsonl).unwrap();
        assert_eq!(loaded.name, "copa");
        assert_eq!(loaded.len(), 500);
        assert_eq!(loaded.declared_option_count, 2);
        assert_eq!(loaded, ds);
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = TempDir::new().unwrap();
        let p = write(&dir, "empty.jsonl", "");
        let err = load_dataset(&p, FormatHint::Auto).unwrap_err();
        assert!(err.to_string().contains("no examples"), "{err}");
    }

    #[test]
    fn gold_outside_options_reports_line() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "bad.jsonl",
            r#"{"id":"x","question":"q","options":["a","b"],"gold":"C","task_kind":"multiple_choice"}"#,
        );
        match load_dataset(&p, FormatHint::Auto).unwrap_err() {
            DatasetError::GoldNotAmongOptions { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_records() {
        let dir = TempDir::new().unwrap();
        let good = r#"{"id":"x","question":"q","options":["a","b"],"gold":"A","task_kind":"multiple_choice"}"#;
        let p = write(&dir, "m.jsonl", &format!("{good}\n{{not json\n"));
        match load_dataset(&p, FormatHint::Auto).unwrap_err() {
            DatasetError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let p = write(&dir, "d.jsonl", &format!("{good}\n{good}\n"));
        match load_dataset(&p, FormatHint::Auto).unwrap_err() {
            DatasetError::DuplicateId { line, id } => {
                assert_eq!(line, 2);
                assert_eq!(id, "x");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn json_array_form_is_accepted_on_auto() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "arr.json",
            r#"[{"id":"x","question":"q","options":["a","b"],"gold":"B","task_kind":"multiple_choice"}]"#,
        );
        assert_eq!(load_dataset(&p, FormatHint::Auto).unwrap().len(), 1);
        assert!(load_dataset(&p, FormatHint::CanonicalJsonl).is_err());
    }

    #[test]
    fn yes_no_normalization() {
        let ex = normalize_yes_no("sqa-1", "Do hamsters provide food for any animals?", YesNo::Yes);
        assert_eq!(ex.gold, OptionLabel::A);
        assert_eq!(ex.options, ["yes", "no"]);
        assert_eq!(ex.task_kind, TaskKind::YesNo);
        assert_eq!(normalize_yes_no("q", "q", YesNo::No).gold, OptionLabel::B);
    }

    #[test]
    fn yes_no_round_trips_through_file() {
        let dir = TempDir::new().unwrap();
        let ex = normalize_yes_no("sqa-1", "Do hamsters provide food for any animals?", YesNo::Yes);
        let ds = Dataset {
            name: "strategyqa".into(),
            examples: vec![ex.clone()],
            declared_option_count: 2,
        };
        let path = dir.path().join("strategyqa.jsonl");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path, FormatHint::Auto).unwrap();
        assert_eq!(back.examples[0], ex);
    }

    #[test]
    fn validation_counts_and_violations() {
        let ds = Dataset {
            name: "anli".into(),
            examples: (0..1507).map(|i| mc(&format!("a{i}"), 2, OptionLabel::A)).collect(),
            declared_option_count: 2,
        };
        let report = validate_dataset(&ds);
        assert_eq!(report.count, 1507);
        assert!(report.violations.is_empty());
        assert_eq!(report.option_histogram[&2], 1507);

        let mut dup = ds.clone();
        dup.examples[3].id = "a0".into();
        let report = validate_dataset(&dup);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.contains("duplicate"));

        let mut mixed = ds.clone();
        mixed.examples.truncate(10);
        mixed.examples[2] = mc("m2", 3, OptionLabel::A);
        mixed.examples[7] = mc("m7", 3, OptionLabel::C);
        let report = validate_dataset(&mixed);
        let offenders: Vec<_> = report.violations.iter().map(|v| v.example_id.as_str()).collect();
        assert_eq!(offenders, ["m2", "m7"]);
        assert_eq!(report.option_histogram[&3], 2);
    }
}
