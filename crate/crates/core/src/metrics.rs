//! Accuracy, inter-consistency and debate metrics.
//!
//! Ratios are computed exactly as [`Ratio<u64>`] and converted to `f64` only
//! at the edge. Two kinds of disagreement are kept apart: correctness-based
//! INCON over a [`ConfusionMatrix`] and stance-based disagreement over raw
//! predictions. They coincide for two-option tasks and differ for more
//! options, where two models can be wrong in different ways.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, OptionLabel};
use crate::debate::DebateOutcome;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("ratio over zero examples")]
    ZeroTotal,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("prediction set {model} has id {id:?} not in the dataset")]
    DatasetMismatch { model: String, id: String },
    #[error("need at least {need} prediction sets, got {got}")]
    TooFewSets { need: usize, got: usize },
    #[error("stance sets cover different examples")]
    MismatchedStanceSets,
    #[error("no debate outcomes")]
    EmptyOutcomes,
}

/// One model's answers, keyed by example id. `None` means no parsable answer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model_id: String,
    pub entries: BTreeMap<String, Option<OptionLabel>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionLine {
    example_id: String,
    stance: Option<OptionLabel>,
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>) -> Self {
        PredictionSet { model_id: model_id.into(), entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, stance: Option<OptionLabel>) {
        self.entries.insert(id.into(), stance);
    }

    /// Stance for an example; missing entries are `None`.
    pub fn stance(&self, id: &str) -> Option<OptionLabel> {
        self.entries.get(id).copied().flatten()
    }

    fn check(&self, ds: &Dataset) -> Result<(), MetricError> {
        if ds.is_empty() {
            return Err(MetricError::EmptyDataset);
        }
        match self.entries.keys().find(|id| ds.get(id).is_none()) {
            Some(id) => Err(MetricError::DatasetMismatch { model: self.model_id.clone(), id: id.clone() }),
            None => Ok(()),
        }
    }

    fn correct(&self, id: &str, gold: OptionLabel) -> bool {
        self.stance(id) == Some(gold)
    }

    /// One `{"example_id":..,"stance":..}` record per line, in id order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, stance) in &self.entries {
            let line = PredictionLine { example_id: id.clone(), stance: *stance };
            out.push_str(&serde_json::to_string(&line).expect("prediction serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(model_id: impl Into<String>, text: &str) -> Result<Self, String> {
        let mut set = PredictionSet::new(model_id);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: PredictionLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            set.entries.insert(rec.example_id, rec.stance);
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        f.sync_data()
    }
}

/// Rows: model 1 correct / wrong. Columns: model 2 correct / wrong.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub m11: u64,
    pub m12: u64,
    pub m21: u64,
    pub m22: u64,
}

impl ConfusionMatrix {
    pub fn new(m11: u64, m12: u64, m21: u64, m22: u64) -> Self {
        ConfusionMatrix { m11, m12, m21, m22 }
    }

    pub fn total(&self) -> u64 {
        self.m11 + self.m12 + self.m21 + self.m22
    }

    fn ratio(&self, num: u64, scale: u64) -> Result<Ratio<u64>, MetricError> {
        match self.total() {
            0 => Err(MetricError::ZeroTotal),
            t => Ok(Ratio::new(num, scale * t)),
        }
    }

    pub fn incon_exact(&self) -> Result<Ratio<u64>, MetricError> {
        self.ratio(self.m12 + self.m21, 1)
    }

    pub fn syn_soft_exact(&self) -> Result<Ratio<u64>, MetricError> {
        self.ratio(2 * self.m11 + self.m12 + self.m21, 2)
    }

    pub fn syn_hard_exact(&self) -> Result<Ratio<u64>, MetricError> {
        self.ratio(self.m11, 1)
    }

    /// Accuracy of model 1 (row marginal).
    pub fn accuracy_1(&self) -> Result<Ratio<u64>, MetricError> {
        self.ratio(self.m11 + self.m12, 1)
    }

    /// Accuracy of model 2 (column marginal).
    pub fn accuracy_2(&self) -> Result<Ratio<u64>, MetricError> {
        self.ratio(self.m11 + self.m21, 1)
    }
}

pub fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn incon(m: &ConfusionMatrix) -> Result<f64, MetricError> {
    m.incon_exact().map(to_f64)
}

pub fn syn_soft(m: &ConfusionMatrix) -> Result<f64, MetricError> {
    m.syn_soft_exact().map(to_f64)
}

pub fn syn_hard(m: &ConfusionMatrix) -> Result<f64, MetricError> {
    m.syn_hard_exact().map(to_f64)
}

pub fn accuracy_exact(p: &PredictionSet, ds: &Dataset) -> Result<Ratio<u64>, MetricError> {
    p.check(ds)?;
    let correct = ds.examples.iter().filter(|e| p.correct(&e.id, e.gold)).count() as u64;
    Ok(Ratio::new(correct, ds.len() as u64))
}

pub fn accuracy(p: &PredictionSet, ds: &Dataset) -> Result<f64, MetricError> {
    accuracy_exact(p, ds).map(to_f64)
}

pub fn build_confusion(p1: &PredictionSet, p2: &PredictionSet, ds: &Dataset) -> Result<ConfusionMatrix, MetricError> {
    p1.check(ds)?;
    p2.check(ds)?;
    let mut m = ConfusionMatrix::default();
    for e in &ds.examples {
        match (p1.correct(&e.id, e.gold), p2.correct(&e.id, e.gold)) {
            (true, true) => m.m11 += 1,
            (true, false) => m.m12 += 1,
            (false, true) => m.m21 += 1,
            (false, false) => m.m22 += 1,
        }
    }
    Ok(m)
}

fn check_all(sets: &[PredictionSet], ds: &Dataset, need: usize) -> Result<(), MetricError> {
    if sets.len() < need {
        return Err(MetricError::TooFewSets { need, got: sets.len() });
    }
    sets.iter().try_for_each(|p| p.check(ds))
}

/// k-model Syn-Soft: the mean of the models' accuracies.
pub fn syn_soft_k(sets: &[PredictionSet], ds: &Dataset) -> Result<Ratio<u64>, MetricError> {
    check_all(sets, ds, 1)?;
    let correct: u64 = sets
        .iter()
        .map(|p| ds.examples.iter().filter(|e| p.correct(&e.id, e.gold)).count() as u64)
        .sum();
    Ok(Ratio::new(correct, sets.len() as u64 * ds.len() as u64))
}

/// k-model Syn-Hard: the fraction of examples every model answers correctly.
pub fn syn_hard_k(sets: &[PredictionSet], ds: &Dataset) -> Result<Ratio<u64>, MetricError> {
    check_all(sets, ds, 1)?;
    let all = ds
        .examples
        .iter()
        .filter(|e| sets.iter().all(|p| p.correct(&e.id, e.gold)))
        .count() as u64;
    Ok(Ratio::new(all, ds.len() as u64))
}

/// True when the stances are not all identical. An unparsed stance is one
/// more value, distinct from every label.
pub fn stances_disagree(stances: &[Option<OptionLabel>]) -> bool {
    stances.windows(2).any(|w| w[0] != w[1])
}

/// Fraction of examples on which the sets' stances are not all identical.
pub fn stance_incon_exact(sets: &[PredictionSet]) -> Result<Ratio<u64>, MetricError> {
    if sets.len() < 2 {
        return Err(MetricError::TooFewSets { need: 2, got: sets.len() });
    }
    let ids: BTreeSet<&String> = sets[0].entries.keys().collect();
    if sets.iter().any(|p| p.entries.keys().collect::<BTreeSet<_>>() != ids) {
        return Err(MetricError::MismatchedStanceSets);
    }
    if ids.is_empty() {
        return Err(MetricError::ZeroTotal);
    }
    let differing = ids
        .iter()
        .filter(|id| {
            let row: Vec<Option<OptionLabel>> = sets.iter().map(|p| p.stance(id)).collect();
            stances_disagree(&row)
        })
        .count() as u64;
    Ok(Ratio::new(differing, ids.len() as u64))
}

pub fn stance_incon(sets: &[PredictionSet]) -> Result<f64, MetricError> {
    stance_incon_exact(sets).map(to_f64)
}

/// Per participant, the fraction of debated outcomes whose conclusion equals
/// that participant's initial stance.
pub fn dominance_exact(outcomes: &[DebateOutcome]) -> Result<BTreeMap<String, Ratio<u64>>, MetricError> {
    if outcomes.is_empty() {
        return Err(MetricError::EmptyOutcomes);
    }
    let n = outcomes.len() as u64;
    let mut wins: BTreeMap<String, u64> = BTreeMap::new();
    for o in outcomes {
        for p in o.final_stances.keys() {
            wins.entry(p.clone()).or_insert(0);
        }
        for p in &o.winner_attribution {
            *wins.entry(p.clone()).or_insert(0) += 1;
        }
    }
    Ok(wins.into_iter().map(|(p, w)| (p, Ratio::new(w, n))).collect())
}

pub fn dominance(outcomes: &[DebateOutcome]) -> Result<BTreeMap<String, f64>, MetricError> {
    Ok(dominance_exact(outcomes)?.into_iter().map(|(p, r)| (p, to_f64(r))).collect())
}

/// Stances of every participant after each round, index 0 being the
/// pre-debate state. A history shorter than the series is held at its last
/// entry, which is how concluded and undebated examples contribute.
pub type StanceHistory = Vec<Vec<Option<OptionLabel>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSeries {
    pub values: Vec<(usize, f64)>,
}

/// Exact stance disagreement per round over all examples, rounds `0..=max_round`.
pub fn incon_by_round_exact(histories: &[StanceHistory], max_round: usize) -> Result<Vec<Ratio<u64>>, MetricError> {
    if histories.is_empty() {
        return Err(MetricError::ZeroTotal);
    }
    let n = histories.len() as u64;
    Ok((0..=max_round)
        .map(|r| {
            let differing = histories
                .iter()
                .filter(|h| h.get(r).or(h.last()).is_some_and(|s| stances_disagree(s)))
                .count() as u64;
            Ratio::new(differing, n)
        })
        .collect())
}

pub fn incon_by_round(histories: &[StanceHistory], max_round: usize) -> Result<RoundSeries, MetricError> {
    let exact = incon_by_round_exact(histories, max_round)?;
    Ok(RoundSeries { values: exact.into_iter().map(to_f64).enumerate().collect() })
}

/// A ratio as a percentage with two decimals, rounding half up exactly.
pub fn percent_2dp(r: Ratio<u64>) -> String {
    let scaled = Ratio::new(*r.numer() as u128 * 10_000, *r.denom() as u128);
    let rounded = (scaled + Ratio::new(1u128, 2)).floor().to_integer();
    format!("{}.{:02}", rounded / 100, rounded % 100)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Example, TaskKind};

    fn ds(golds: &[OptionLabel]) -> Dataset {
        Dataset {
            name: "t".into(),
            examples: golds
                .iter()
                .enumerate()
                .map(|(i, g)| Example {
                    id: format!("e{i}"),
                    question: "q".into(),
                    options: vec!["x".into(), "y".into(), "z".into()],
                    gold: *g,
                    task_kind: TaskKind::MultipleChoice,
                })
                .collect(),
            declared_option_count: 3,
        }
    }

    fn preds(name: &str, stances: &[Option<OptionLabel>]) -> PredictionSet {
        let mut p = PredictionSet::new(name);
        for (i, s) in stances.iter().enumerate() {
            p.insert(format!("e{i}"), *s);
        }
        p
    }

    const A: Option<OptionLabel> = Some(OptionLabel::A);
    const B: Option<OptionLabel> = Some(OptionLabel::B);
    const C: Option<OptionLabel> = Some(OptionLabel::C);

    #[test]
    fn reference_matrix_values() {
        let m = ConfusionMatrix::new(1042, 163, 121, 181);
        assert_eq!(percent_2dp(m.incon_exact().unwrap()), "18.85");
        assert_eq!(percent_2dp(m.syn_soft_exact().unwrap()), "78.57");
        assert_eq!(percent_2dp(m.syn_hard_exact().unwrap()), "69.14");
        assert_eq!(percent_2dp(m.accuracy_1().unwrap()), "79.96");
        assert_eq!(percent_2dp(m.accuracy_2().unwrap()), "77.17");
        let e = ConfusionMatrix::new(1641, 183, 89, 209);
        assert_eq!(e.incon_exact().unwrap(), Ratio::new(272, 2122));
        assert_eq!(percent_2dp(e.syn_hard_exact().unwrap()), "77.33");
    }

    #[test]
    fn zero_total_errors() {
        assert_eq!(incon(&ConfusionMatrix::default()), Err(MetricError::ZeroTotal));
    }

    #[test]
    fn confusion_and_accuracy() {
        let d = ds(&[OptionLabel::A, OptionLabel::B, OptionLabel::C, OptionLabel::A]);
        let p1 = preds("m1", &[A, B, None, B]);
        let p2 = preds("m2", &[A, C, C, B]);
        assert_eq!(accuracy(&p1, &d).unwrap(), 0.5);
        assert_eq!(build_confusion(&p1, &p2, &d).unwrap(), ConfusionMatrix::new(1, 1, 1, 1));
        assert_eq!(build_confusion(&p1, &p1, &d).unwrap(), ConfusionMatrix::new(2, 0, 0, 2));
        let mut stray = p1.clone();
        stray.insert("zzz", A);
        assert!(matches!(accuracy(&stray, &d), Err(MetricError::DatasetMismatch { .. })));
    }

    #[test]
    fn stance_incon_and_none_sentinel() {
        let sets = [preds("a", &[A, A, None]), preds("b", &[A, B, None]), preds("c", &[A, A, None])];
        assert_eq!(stance_incon_exact(&sets).unwrap(), Ratio::new(1, 3));
        assert!(stances_disagree(&[None, A]));
        assert!(stance_incon(&sets[..1]).is_err());
    }

    #[test]
    fn k_way_synergy() {
        let d = ds(&[OptionLabel::A, OptionLabel::B]);
        let sets = [preds("a", &[A, B]), preds("b", &[A, C]), preds("c", &[B, B])];
        assert_eq!(syn_soft_k(&sets, &d).unwrap(), Ratio::new(4, 6));
        assert_eq!(syn_hard_k(&sets, &d).unwrap(), Ratio::new(0, 2));
    }

    #[test]
    fn round_series_holds_short_histories() {
        let h: Vec<StanceHistory> = vec![
            vec![vec![A, B], vec![A, A]],
            vec![vec![A, A]],
            vec![vec![A, B], vec![A, B], vec![B, B]],
        ];
        let s = incon_by_round_exact(&h, 3).unwrap();
        assert_eq!(s, [Ratio::new(2, 3), Ratio::new(1, 3), Ratio::new(0, 3), Ratio::new(0, 3)]);
    }

    #[test]
    fn percent_rounding_is_exact() {
        assert_eq!(percent_2dp(Ratio::new(1, 8)), "12.50");
        assert_eq!(percent_2dp(Ratio::new(1, 80000)), "0.00");
        assert_eq!(percent_2dp(Ratio::new(1, 20000)), "0.01");
        assert_eq!(percent_2dp(Ratio::new(21, 275)), "7.64");
        assert_eq!(percent_2dp(Ratio::new(254, 275)), "92.36");
        assert_eq!(percent_2dp(Ratio::new(1, 1)), "100.00");
    }

    #[test]
    fn prediction_jsonl_round_trip() {
        let p = preds("m", &[A, None]);
        let text = p.to_jsonl();
        assert_eq!(text, "{\"example_id\":\"e0\",\"stance\":\"A\"}\n{\"example_id\":\"e1\",\"stance\":null}\n");
        assert_eq!(PredictionSet::from_jsonl("m", &text).unwrap(), p);
    }
}
