//! The three-step debate protocol for a single example.
//!
//! 1. Every participant states a stance and an argument.
//! 2. If the stances differ, participants speak in roster order, one
//!    response per round, each seeing every earlier argument with explicit
//!    stance sentences removed. The debate stops as soon as all current
//!    stances agree, or after `max_rounds` responses.
//! 3. A conclusion is drawn, by the equal-weight rule or by a judge model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendProfile, Response};
use crate::dataset::{Example, OptionLabel};
use crate::metrics::stances_disagree;
use crate::prompting::{
    self, conclusion_stance, parse_stance, strip_stance_declarations, summary_segment, DebateMode, DebatePromptContext,
    ExemplarSet, ParseRoute, PromptError, PromptShape, PromptingMode, TranscriptEntry,
};

/// Participant id used for judge records.
pub const JUDGE_ID: &str = "judge";

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("invalid debate configuration: {0}")]
    Config(String),
    #[error("backend call for {participant} failed: {source}")]
    Backend {
        participant: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("could not persist turn: {0}")]
    Sink(String),
    #[error("debate has not finished")]
    NotConcluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub profile: BackendProfile,
    pub prompting_mode: PromptingMode,
    /// 1-based speaking order.
    pub speaking_position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConclusionMode {
    EqualWeight,
    LlmJudge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub participants: Vec<Participant>,
    pub max_rounds: usize,
    pub conclusion_mode: ConclusionMode,
    pub judge_profile: Option<BackendProfile>,
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), DebateError> {
        let bad = |m: String| Err(DebateError::Config(m));
        let k = self.participants.len();
        if k < 2 {
            return bad(format!("need at least 2 participants, got {k}"));
        }
        let mut positions: Vec<usize> = self.participants.iter().map(|p| p.speaking_position).collect();
        positions.sort_unstable();
        if positions != (1..=k).collect::<Vec<_>>() {
            return bad(format!("speaking positions must be 1..{k} without gaps, got {positions:?}"));
        }
        let ids: BTreeSet<&str> = self.participants.iter().map(|p| p.id.as_str()).collect();
        if ids.len() != k {
            return bad("participant ids must be unique".into());
        }
        if ids.contains(JUDGE_ID) {
            return bad(format!("participant id {JUDGE_ID:?} is reserved"));
        }
        if self.max_rounds < k {
            return bad(format!("max_rounds {} is below the number of participants {k}", self.max_rounds));
        }
        match (self.conclusion_mode, &self.judge_profile) {
            (ConclusionMode::LlmJudge, None) => return bad("llm_judge conclusion needs a judge profile".into()),
            (ConclusionMode::EqualWeight, Some(_)) => {
                return bad("a judge profile is only used with llm_judge conclusion".into())
            }
            _ => {}
        }
        for p in &self.participants {
            p.profile.validate().map_err(|e| DebateError::Config(format!("{}: {e}", p.id)))?;
        }
        if let Some(j) = &self.judge_profile {
            j.validate().map_err(|e| DebateError::Config(format!("judge: {e}")))?;
        }
        Ok(())
    }

    /// Participants in speaking order.
    pub fn ordered(&self) -> Vec<&Participant> {
        let mut v: Vec<&Participant> = self.participants.iter().collect();
        v.sort_by_key(|p| p.speaking_position);
        v
    }

    pub fn mode(&self) -> DebateMode {
        if self.participants.len() == 2 {
            DebateMode::Pairwise
        } else {
            DebateMode::Roundtable
        }
    }
}

/// A participant bound to its backend.
#[derive(Clone)]
pub struct Debater {
    pub participant: Participant,
    pub backend: Backend,
    pub exemplars: Option<ExemplarSet>,
}

/// Everything needed to debate any example of a campaign.
#[derive(Clone)]
pub struct Panel {
    /// In speaking order.
    pub debaters: Vec<Debater>,
    pub max_rounds: usize,
    pub conclusion_mode: ConclusionMode,
    pub judge: Option<Backend>,
    pub mode: DebateMode,
}

impl Panel {
    /// Binds a validated configuration to backends.
    pub fn new(
        cfg: &DebateConfig,
        mut backend_for: impl FnMut(&BackendProfile) -> Result<Backend, BackendError>,
        mut exemplars_for: impl FnMut(&Participant) -> Result<Option<ExemplarSet>, PromptError>,
    ) -> Result<Self, DebateError> {
        cfg.validate()?;
        let mut debaters = Vec::new();
        for p in cfg.ordered() {
            let backend = backend_for(&p.profile).map_err(|e| DebateError::Config(format!("{}: {e}", p.id)))?;
            let exemplars = exemplars_for(p)?;
            if p.prompting_mode == PromptingMode::FewShotCotText && exemplars.is_none() {
                return Err(DebateError::Prompt(PromptError::EmptyExemplars));
            }
            debaters.push(Debater { participant: p.clone(), backend, exemplars });
        }
        let judge = match &cfg.judge_profile {
            Some(j) => Some(backend_for(j).map_err(|e| DebateError::Config(format!("judge: {e}")))?),
            None => None,
        };
        Ok(Panel { debaters, max_rounds: cfg.max_rounds, conclusion_mode: cfg.conclusion_mode, judge, mode: cfg.mode() })
    }

    pub fn roster(&self) -> Vec<String> {
        self.debaters.iter().map(|d| d.participant.id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    DebateTurn,
    Judge,
}

/// One backend exchange, reported to the campaign before the engine moves on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnEvent<'a> {
    pub example_id: &'a str,
    pub phase: Phase,
    pub participant: &'a str,
    /// 0 for initial answers, the response number for debate turns, the
    /// final round count for the judge.
    pub round: usize,
    pub request_hash: &'a str,
    pub raw_text: &'a str,
    pub parsed_stance: Option<OptionLabel>,
    pub recorded_at: u64,
}

pub type Sink<'a> = &'a (dyn Fn(&TurnEvent<'_>) -> Result<(), String> + Sync);

/// A sink that drops every event.
pub fn discard(_: &TurnEvent<'_>) -> Result<(), String> {
    Ok(())
}

/// A parsed reply: the stance it announces and the argument shown to others.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub participant: String,
    pub raw_text: String,
    pub parsed_stance: Option<OptionLabel>,
    pub parse_route: ParseRoute,
    /// Reply text without the matched answer sentence.
    pub explanation: String,
    /// Explanation with every stance declaration removed.
    pub argument: String,
    pub request_hash: String,
    pub recorded_at: u64,
}

impl Statement {
    fn from_response(participant: &str, ex: &Example, resp: Response) -> Self {
        let parsed = parse_stance(&resp.completion.text, ex);
        Statement {
            participant: participant.to_string(),
            argument: strip_stance_declarations(&parsed.explanation, ex),
            explanation: parsed.explanation,
            parsed_stance: parsed.stance,
            parse_route: parsed.parse_route,
            raw_text: resp.completion.text,
            request_hash: resp.request_hash,
            recorded_at: resp.recorded_at,
        }
    }
}

fn call(d: &Debater, req: &crate::backend::CompletionRequest) -> Result<Response, DebateError> {
    d.backend
        .complete(req)
        .map_err(|source| DebateError::Backend { participant: d.participant.id.clone(), source })
}

/// Step 1 for one participant.
pub fn generate_initial(ex: &Example, d: &Debater) -> Result<Statement, DebateError> {
    let req = prompting::render_initial(ex, d.participant.prompting_mode, d.exemplars.as_ref())?;
    let resp = call(d, &req)?;
    Ok(Statement::from_response(&d.participant.id, ex, resp))
}

/// Whether a debate is needed: true iff the stances are not all identical.
pub fn filter_for_debate(stances: &[Option<OptionLabel>]) -> bool {
    stances_disagree(stances)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebateStatus {
    NotNeeded,
    Running,
    Consensus,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub statement: Statement,
    /// The speaker's stance after this turn; an unparsable reply keeps the previous one.
    pub stance: OptionLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateState {
    pub example: Example,
    /// Participant ids in speaking order.
    pub roster: Vec<String>,
    /// Step-1 statements in roster order.
    pub initial: Vec<Statement>,
    pub turns: Vec<Turn>,
    pub status: DebateStatus,
    /// Number of debate responses so far; equals `turns.len()`.
    pub round_count: usize,
}

impl DebateState {
    /// Each participant's latest stance, in roster order.
    pub fn current_stances(&self) -> Vec<Option<OptionLabel>> {
        let mut cur: Vec<Option<OptionLabel>> = self.initial.iter().map(|s| s.parsed_stance).collect();
        for (i, t) in self.turns.iter().enumerate() {
            cur[i % self.roster.len()] = Some(t.stance);
        }
        cur
    }

    /// Stance snapshot after every round, index 0 being the initial stances.
    pub fn history(&self) -> Vec<Vec<Option<OptionLabel>>> {
        let mut cur: Vec<Option<OptionLabel>> = self.initial.iter().map(|s| s.parsed_stance).collect();
        let mut out = vec![cur.clone()];
        for (i, t) in self.turns.iter().enumerate() {
            cur[i % self.roster.len()] = Some(t.stance);
            out.push(cur.clone());
        }
        out
    }

    /// Total responses shown in the debate, initial arguments included.
    pub fn responses(&self) -> usize {
        self.initial.len() + self.turns.len()
    }

    fn context(&self, addressee: &str, mode: DebateMode, text: impl Fn(&Statement) -> String) -> DebatePromptContext {
        let transcript = self
            .initial
            .iter()
            .chain(self.turns.iter().map(|t| &t.statement))
            .map(|s| TranscriptEntry::new(s.participant.clone(), text(s)))
            .collect();
        DebatePromptContext {
            example: self.example.clone(),
            transcript,
            addressee: addressee.to_string(),
            roster: self.roster.clone(),
            mode,
        }
    }
}

/// Step 2. `initial` must be in roster order, every stance parsed and not all equal.
pub fn run_debate(ex: &Example, panel: &Panel, initial: Vec<Statement>, sink: Sink<'_>) -> Result<DebateState, DebateError> {
    let roster = panel.roster();
    if initial.len() != roster.len() || initial.iter().zip(&roster).any(|(s, r)| &s.participant != r) {
        return Err(DebateError::Config("initial statements do not follow the roster".into()));
    }
    let stances: Vec<Option<OptionLabel>> = initial.iter().map(|s| s.parsed_stance).collect();
    if stances.iter().any(Option::is_none) || !filter_for_debate(&stances) {
        return Err(DebateError::Config("debate needs parsed, differing initial stances".into()));
    }
    let mut state = DebateState {
        example: ex.clone(),
        roster,
        initial,
        turns: Vec::new(),
        status: DebateStatus::Running,
        round_count: 0,
    };
    let k = panel.debaters.len();
    while state.round_count < panel.max_rounds {
        let d = &panel.debaters[state.round_count % k];
        let id = &d.participant.id;
        let shape = PromptShape::for_participant(d.backend.profile().kind, d.participant.prompting_mode);
        let req = prompting::render_debate_turn(&state.context(id, panel.mode, |s| s.argument.clone()), shape)?;
        let statement = Statement::from_response(id, ex, call(d, &req)?);
        let previous = state.current_stances()[state.round_count % k].expect("initial stances are parsed");
        let stance = statement.parsed_stance.unwrap_or(previous);
        sink(&TurnEvent {
            example_id: &ex.id,
            phase: Phase::DebateTurn,
            participant: id,
            round: state.round_count + 1,
            request_hash: &statement.request_hash,
            raw_text: &statement.raw_text,
            parsed_stance: statement.parsed_stance,
            recorded_at: statement.recorded_at,
        })
        .map_err(DebateError::Sink)?;
        state.turns.push(Turn { statement, stance });
        state.round_count += 1;
        if !stances_disagree(&state.current_stances()) {
            state.status = DebateStatus::Consensus;
            return Ok(state);
        }
    }
    state.status = DebateStatus::Exhausted;
    Ok(state)
}

/// Which rule produced a conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConclusionRule {
    Consensus,
    Majority,
    AssertionCount,
    Proposition,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateOutcome {
    pub final_stances: BTreeMap<String, OptionLabel>,
    pub conclusion: OptionLabel,
    pub consensus: bool,
    /// Participants whose initial stance equals the conclusion.
    pub winner_attribution: BTreeSet<String>,
    pub rule: ConclusionRule,
    pub judge_summary: Option<String>,
    /// The judge's own verdict, which decides only debates without consensus.
    pub judge_verdict: Option<OptionLabel>,
    /// The judge reply had no usable conclusion and the equal-weight rule was applied.
    pub judge_fallback: bool,
}

fn outcome(state: &DebateState, conclusion: OptionLabel, rule: ConclusionRule) -> DebateOutcome {
    let finals = state.current_stances();
    DebateOutcome {
        final_stances: state.roster.iter().cloned().zip(finals.iter().map(|s| s.expect("parsed"))).collect(),
        conclusion,
        consensus: state.status == DebateStatus::Consensus,
        winner_attribution: state
            .initial
            .iter()
            .filter(|s| s.parsed_stance == Some(conclusion))
            .map(|s| s.participant.clone())
            .collect(),
        rule,
        judge_summary: None,
        judge_verdict: None,
        judge_fallback: false,
    }
}

/// Labels with the highest count, in order of first appearance.
pub(crate) fn top_counts(items: impl IntoIterator<Item = OptionLabel>) -> Vec<OptionLabel> {
    let mut counts: Vec<(OptionLabel, usize)> = Vec::new();
    for s in items {
        match counts.iter_mut().find(|(l, _)| *l == s) {
            Some((_, c)) => *c += 1,
            None => counts.push((s, 1)),
        }
    }
    let max = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    counts.into_iter().filter(|(_, c)| *c == max).map(|(l, _)| l).collect()
}

/// Equal weight for every argument: strict majority of final stances, then
/// the candidate asserted in the most statements, then the earliest speaker's
/// final stance among the candidates.
pub fn conclude_equal_weight(state: &DebateState) -> Result<DebateOutcome, DebateError> {
    match state.status {
        DebateStatus::Consensus => {
            let shared = state.current_stances()[0].expect("parsed");
            return Ok(outcome(state, shared, ConclusionRule::Consensus));
        }
        DebateStatus::Exhausted => {}
        _ => return Err(DebateError::NotConcluded),
    }
    let finals: Vec<OptionLabel> = state.current_stances().into_iter().map(|s| s.expect("parsed")).collect();
    let leaders = top_counts(finals.iter().copied());
    if leaders.len() == 1 {
        return Ok(outcome(state, leaders[0], ConclusionRule::Majority));
    }
    let asserted = state
        .initial
        .iter()
        .chain(state.turns.iter().map(|t| &t.statement))
        .filter_map(|s| s.parsed_stance)
        .filter(|s| leaders.contains(s));
    let by_count = top_counts(asserted);
    if by_count.len() == 1 {
        return Ok(outcome(state, by_count[0], ConclusionRule::AssertionCount));
    }
    let pool = if by_count.is_empty() { &leaders } else { &by_count };
    let pick = finals.iter().find(|s| pool.contains(s)).copied().expect("a leader is a final stance");
    Ok(outcome(state, pick, ConclusionRule::Proposition))
}

/// The judge's reading of a finished debate, with the raw exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeCall {
    pub outcome: DebateOutcome,
    pub raw_text: String,
    pub request_hash: String,
    pub recorded_at: u64,
}

/// Step 3 with a judge model. The judge reads every argument as it was
/// written, apart from the answer sentence of each reply.
pub fn conclude_with_judge(state: &DebateState, judge: &Backend, mode: DebateMode) -> Result<JudgeCall, DebateError> {
    let base = conclude_equal_weight(state)?;
    let first = state.roster[0].clone();
    let req = prompting::render_judge(&state.context(&first, mode, |s| s.explanation.clone()))?;
    let resp = judge
        .complete(&req)
        .map_err(|source| DebateError::Backend { participant: JUDGE_ID.into(), source })?;
    let text = resp.completion.text;
    let verdict = conclusion_stance(&text, &state.example);
    let mut out = match (verdict, base.consensus) {
        (Some(v), false) => DebateOutcome { judge_verdict: Some(v), ..outcome(state, v, ConclusionRule::Judge) },
        (v, _) => DebateOutcome { judge_verdict: v, judge_fallback: v.is_none(), ..base },
    };
    out.judge_summary = summary_segment(&text);
    Ok(JudgeCall { outcome: out, raw_text: text, request_hash: resp.request_hash, recorded_at: resp.recorded_at })
}
