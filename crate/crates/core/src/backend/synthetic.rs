//! Seeded simulated debaters.
//!
//! An agent has a capability (probability its first answer is gold) and a
//! stubbornness (probability it keeps its own stance when challenged). When it
//! does not keep its stance it adopts the majority stance of the other
//! participants' latest arguments, ties going to the earliest speaker.
//!
//! The randomness for each reply is drawn from a ChaCha stream seeded by the
//! request hash, so a reply is a pure function of the prompt, the agent
//! parameters and the agent seed, and replays identically.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{canonical_request_hash, BackendError, BackendProfile, Completion, CompletionRequest, Driver};
use crate::dataset::{Dataset, Example, OptionLabel, TaskKind};
use crate::prompting::{self, read_prompt, PromptView, ViewEntry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub capability: f64,
    pub stubbornness: f64,
    #[serde(default)]
    pub seed: u64,
}

impl AgentParams {
    pub fn new(capability: f64, stubbornness: f64, seed: u64) -> Self {
        AgentParams { capability, stubbornness, seed }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("capability", self.capability), ("stubbornness", self.stubbornness)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("agent {name} {v} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// First-answer draw: gold with probability `capability`, else a uniformly
/// chosen wrong option. Always consumes exactly two draws.
pub fn synthetic_initial(params: &AgentParams, ex: &Example, rng: &mut impl Rng) -> OptionLabel {
    let hit = rng.random::<f64>() < params.capability;
    let pick = rng.random::<f64>();
    if hit || ex.option_count() < 2 {
        return ex.gold;
    }
    let wrong: Vec<OptionLabel> = ex.labels().filter(|l| *l != ex.gold).collect();
    let i = ((pick * wrong.len() as f64) as usize).min(wrong.len() - 1);
    wrong[i]
}

/// One debate response. `observed` holds the other participants' latest
/// stances, earliest speaker first. Always consumes exactly one draw.
pub fn synthetic_turn(params: &AgentParams, own: OptionLabel, observed: &[OptionLabel], rng: &mut impl Rng) -> OptionLabel {
    let keep = rng.random::<f64>() < params.stubbornness;
    if keep || observed.is_empty() {
        return own;
    }
    let mut counts: Vec<(OptionLabel, usize)> = Vec::new();
    for s in observed {
        match counts.iter_mut().find(|(l, _)| l == s) {
            Some((_, c)) => *c += 1,
            None => counts.push((*s, 1)),
        }
    }
    // max_by_key keeps the last maximum; iterate reversed so the earliest wins ties
    counts.iter().rev().max_by_key(|(_, c)| *c).map(|(l, _)| *l).unwrap_or(own)
}

const READING_LEAD: &str = "I stand by the reading \"";

/// The option an agent reply argues for, found through its quoted option text.
fn stance_in(text: &str, ex: &Example) -> Option<OptionLabel> {
    let start = text.rfind(READING_LEAD)? + READING_LEAD.len();
    let rest = &text[start..];
    let quoted = &rest[..rest.find("\".")?];
    ex.labels().find(|l| ex.option_text(*l) == Some(quoted))
}

fn reading(ex: &Example, l: OptionLabel) -> String {
    format!("{READING_LEAD}{}\".", ex.option_text(l).unwrap_or_default())
}

/// Serves every prompt family for the examples of the datasets it was built from.
pub struct SyntheticDriver {
    key: HashMap<String, Example>,
}

impl SyntheticDriver {
    pub fn new<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> Self {
        let mut key = HashMap::new();
        for ds in datasets {
            for ex in &ds.examples {
                for line in [
                    prompting::zero_shot_question_line(ex),
                    prompting::few_shot_question_line(ex),
                    prompting::debate_question_line(ex),
                ] {
                    key.entry(line).or_insert_with(|| ex.clone());
                }
            }
        }
        SyntheticDriver { key }
    }

    fn reply(&self, params: &AgentParams, req: &CompletionRequest, rng: &mut ChaCha8Rng) -> Result<String, BackendError> {
        let view = read_prompt(req).ok_or_else(|| BackendError::Synthetic("unrecognized prompt layout".into()))?;
        let ex = self
            .key
            .get(view.question_line())
            .ok_or_else(|| BackendError::Synthetic(format!("unknown question: {}", view.question_line())))?;
        let yes_no = ex.task_kind == TaskKind::YesNo;
        Ok(match view {
            PromptView::Initial { .. } => {
                let s = synthetic_initial(params, ex, rng);
                let word = ex.option_text(s).unwrap_or_default();
                match (req.is_chat(), yes_no) {
                    (true, true) => format!("Answer: {word}. Explanation: {}", reading(ex, s)),
                    (true, false) => format!("Answer: ({s}) is more plausible. Explanation: {}", reading(ex, s)),
                    (false, true) => format!(" {} Therefore, the answer (yes or no) is {word}.", reading(ex, s)),
                    (false, false) => format!(" {} Therefore, the answer is ({s}).", reading(ex, s)),
                }
            }
            PromptView::Debate { entries, .. } => {
                let latest = |mine: bool| -> Vec<&ViewEntry> {
                    entries.iter().filter(|e| e.from_self == mine).collect()
                };
                let own = latest(true)
                    .iter()
                    .rev()
                    .find_map(|e| stance_in(&e.text, ex))
                    .ok_or_else(|| BackendError::Synthetic("no earlier stance of its own".into()))?;
                let observed = others_latest(&entries, ex);
                let s = synthetic_turn(params, own, &observed, rng);
                format!("Answer: ({s}) is more plausible. Explanation: {}", reading(ex, s))
            }
            PromptView::Judge { entries, .. } => {
                let s = synthetic_initial(params, ex, rng);
                format!(
                    "Summary: The users exchanged {} arguments. Conclusion: ({s}) is more plausible.",
                    entries.len()
                )
            }
        })
    }
}

/// Latest stance of each other speaker, ordered by that speaker's first appearance.
fn others_latest(entries: &[ViewEntry], ex: &Example) -> Vec<OptionLabel> {
    let mut order: Vec<Option<usize>> = Vec::new();
    let mut latest: HashMap<Option<usize>, OptionLabel> = HashMap::new();
    for e in entries.iter().filter(|e| !e.from_self) {
        if !order.contains(&e.position) {
            order.push(e.position);
        }
        if let Some(s) = stance_in(&e.text, ex) {
            latest.insert(e.position, s);
        }
    }
    order.iter().filter_map(|p| latest.get(p).copied()).collect()
}

impl Driver for SyntheticDriver {
    fn call(&self, profile: &BackendProfile, req: &CompletionRequest) -> Result<Completion, BackendError> {
        let params = profile
            .agent
            .ok_or_else(|| BackendError::InvalidProfile("synthetic profile without agent parameters".into()))?;
        let hash = canonical_request_hash(req, profile);
        let seed: [u8; 32] = Sha256::digest(hash.as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        self.reply(&params, req, &mut rng).map(Completion::stop)
    }
}
