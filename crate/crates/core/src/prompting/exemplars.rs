//! Few-shot exemplar sets, one JSON file per dataset family.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PromptError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    /// Everything after `Question: `, including any `Answer Choices:` list.
    pub question: String,
    /// Rationale ending in an explicit answer sentence.
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub dataset_name: String,
    pub exemplars: Vec<Exemplar>,
}

const BUILTIN: [(&str, &str); 7] = [
    ("anli", include_str!("../../exemplars/anli.json")),
    ("csqa", include_str!("../../exemplars/csqa.json")),
    ("copa", include_str!("../../exemplars/copa.json")),
    ("ecare", include_str!("../../exemplars/ecare.json")),
    ("siqa", include_str!("../../exemplars/siqa.json")),
    ("piqa", include_str!("../../exemplars/piqa.json")),
    ("strategyqa", include_str!("../../exemplars/strategyqa.json")),
];

/// Maps common spellings of a dataset name to its builtin family key.
pub fn family_key(name: &str) -> Option<&'static str> {
    let norm: String = name
        .to_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    let table: [(&str, &[&str]); 7] = [
        ("strategyqa", &["strategyqa", "strategy"]),
        ("csqa", &["csqa", "commonsenseqa", "commonsense"]),
        ("siqa", &["siqa", "socialiqa", "social"]),
        ("piqa", &["piqa", "physicaliqa"]),
        ("ecare", &["ecare"]),
        ("copa", &["copa"]),
        ("anli", &["anli", "alphanli", "nli"]),
    ];
    table
        .iter()
        .find(|(_, names)| names.iter().any(|n| norm.contains(n)))
        .map(|(key, _)| *key)
}

impl ExemplarSet {
    pub fn parse(json: &str) -> Result<Self, PromptError> {
        let set: ExemplarSet = serde_json::from_str(json).map_err(|e| PromptError::Exemplars(e.to_string()))?;
        set.check()?;
        Ok(set)
    }

    /// The shipped set for a dataset family, looked up by name or alias.
    pub fn builtin(name: &str) -> Result<Self, PromptError> {
        let key = family_key(name).ok_or_else(|| PromptError::Exemplars(format!("no builtin exemplars for {name:?}")))?;
        let (_, json) = BUILTIN.iter().find(|(k, _)| *k == key).expect("family keys are builtin");
        Self::parse(json)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(k, _)| *k)
    }

    /// Loads `<dir>/<family>.json` for the named dataset.
    pub fn load_dir(dir: &Path, name: &str) -> Result<Self, PromptError> {
        let key = family_key(name).unwrap_or(name);
        let path = dir.join(format!("{key}.json"));
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PromptError::Exemplars(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check(&self) -> Result<(), PromptError> {
        if self.exemplars.is_empty() {
            return Err(PromptError::EmptyExemplars);
        }
        for (i, ex) in self.exemplars.iter().enumerate() {
            if !ex.answer.contains("the answer") {
                return Err(PromptError::Exemplars(format!(
                    "{} exemplar {} has no answer sentence",
                    self.dataset_name,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}
