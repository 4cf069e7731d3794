//! Prompt rendering and reply parsing.
//!
//! Every request sent to a participant or judge is built here from structured
//! state, and every reply is read back through [`parse_stance`].

pub mod exemplars;
pub mod parse;
pub mod templates;
pub mod view;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendKind, CompletionRequest, Message};
use crate::dataset::{Example, TaskKind};

pub use exemplars::{Exemplar, ExemplarSet};
pub use parse::{conclusion_stance, parse_stance, strip_stance_declarations, summary_segment, ParseRoute, ParsedResponse};
pub use view::{read_prompt, PromptView, ViewEntry};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("few-shot rendering needs at least one exemplar")]
    EmptyExemplars,
    #[error("exemplar set: {0}")]
    Exemplars(String),
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("addressee {0:?} is not in the roster")]
    AddresseeNotInRoster(String),
    #[error("transcript speaker {0:?} is not in the roster")]
    UnknownSpeaker(String),
    #[error("pairwise debates need exactly two participants, roster has {0}")]
    PairwiseRoster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptingMode {
    ZeroShotChat,
    FewShotCotText,
}

/// Whether a request is built as chat messages or one flat prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptShape {
    Chat,
    Text,
}

impl PromptShape {
    /// Remote kinds dictate the shape; offline kinds follow the prompting mode.
    pub fn for_participant(kind: BackendKind, mode: PromptingMode) -> Self {
        match (kind, mode) {
            (BackendKind::Chat, _) => PromptShape::Chat,
            (BackendKind::TextCompletion, _) => PromptShape::Text,
            (_, PromptingMode::ZeroShotChat) => PromptShape::Chat,
            (_, PromptingMode::FewShotCotText) => PromptShape::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebateMode {
    Pairwise,
    Roundtable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: String,
    pub argument: String,
}

impl TranscriptEntry {
    pub fn new(speaker: impl Into<String>, argument: impl Into<String>) -> Self {
        TranscriptEntry { speaker: speaker.into(), argument: argument.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebatePromptContext {
    pub example: Example,
    /// Every argument shown so far, oldest first.
    pub transcript: Vec<TranscriptEntry>,
    pub addressee: String,
    pub roster: Vec<String>,
    pub mode: DebateMode,
}

impl DebatePromptContext {
    /// 1-based position of a participant in the roster.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.roster.iter().position(|r| r == id).map(|i| i + 1)
    }

    fn check(&self) -> Result<usize, PromptError> {
        if self.transcript.is_empty() {
            return Err(PromptError::EmptyTranscript);
        }
        if self.mode == DebateMode::Pairwise && self.roster.len() != 2 {
            return Err(PromptError::PairwiseRoster(self.roster.len()));
        }
        if let Some(bad) = self.transcript.iter().find(|t| self.position(&t.speaker).is_none()) {
            return Err(PromptError::UnknownSpeaker(bad.speaker.clone()));
        }
        self.position(&self.addressee)
            .ok_or_else(|| PromptError::AddresseeNotInRoster(self.addressee.clone()))
    }
}

/// `(A) first (B) second ...`
pub fn choices_list(ex: &Example) -> String {
    ex.labels()
        .zip(&ex.options)
        .map(|(l, t)| format!("({l}) {t}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The question line used in debate and judge prompts.
pub fn debate_question_line(ex: &Example) -> String {
    format!("Question: {} Choices: {}", ex.question, choices_list(ex))
}

/// The first line of a zero-shot user message.
pub fn zero_shot_question_line(ex: &Example) -> String {
    match ex.task_kind {
        TaskKind::YesNo => format!("Question: {}", ex.question),
        TaskKind::MultipleChoice => debate_question_line(ex),
    }
}

/// The target question line of a few-shot prompt.
pub fn few_shot_question_line(ex: &Example) -> String {
    match ex.task_kind {
        TaskKind::YesNo => format!("Question: {}", ex.question),
        TaskKind::MultipleChoice => format!("Question: {} Answer Choices: {}", ex.question, choices_list(ex)),
    }
}

pub fn render_zero_shot(ex: &Example) -> CompletionRequest {
    let instruction = match ex.task_kind {
        TaskKind::YesNo => templates::YES_NO_INSTRUCTION,
        TaskKind::MultipleChoice => templates::ZERO_SHOT_INSTRUCTION,
    };
    CompletionRequest::Chat {
        messages: vec![Message::user(format!("{}\n{instruction}", zero_shot_question_line(ex)))],
    }
}

pub fn render_few_shot_cot(ex: &Example, shots: &ExemplarSet) -> Result<CompletionRequest, PromptError> {
    if shots.exemplars.is_empty() {
        return Err(PromptError::EmptyExemplars);
    }
    let mut prompt = String::new();
    for shot in &shots.exemplars {
        prompt.push_str(&format!("Question: {}\nAnswer: {}\n\n", shot.question, shot.answer));
    }
    prompt.push_str(&few_shot_question_line(ex));
    prompt.push_str("\nAnswer:");
    Ok(CompletionRequest::Text { prompt })
}

/// The initial request for a participant in the given mode.
pub fn render_initial(ex: &Example, mode: PromptingMode, shots: Option<&ExemplarSet>) -> Result<CompletionRequest, PromptError> {
    match mode {
        PromptingMode::ZeroShotChat => Ok(render_zero_shot(ex)),
        PromptingMode::FewShotCotText => render_few_shot_cot(ex, shots.ok_or(PromptError::EmptyExemplars)?),
    }
}

fn with_closing(argument: &str, closing: &str) -> String {
    if argument.is_empty() {
        closing.to_string()
    } else {
        format!("{argument}\n{closing}")
    }
}

pub fn render_debate_turn(ctx: &DebatePromptContext, shape: PromptShape) -> Result<CompletionRequest, PromptError> {
    let me = ctx.check()?;
    let ex = &ctx.example;
    let n = ex.option_count();
    let question = debate_question_line(ex);
    let last = ctx.transcript.len() - 1;
    match ctx.mode {
        DebateMode::Pairwise => {
            let closing = templates::reanswer_instruction(n);
            let own = |t: &TranscriptEntry| t.speaker == ctx.addressee;
            match shape {
                PromptShape::Chat => {
                    let mut messages = vec![Message::system(templates::DEBATE_SYSTEM), Message::user(question)];
                    for (i, t) in ctx.transcript.iter().enumerate() {
                        let content = if i == last { with_closing(&t.argument, &closing) } else { t.argument.clone() };
                        messages.push(if own(t) && i != last { Message::assistant(content) } else { Message::user(content) });
                    }
                    Ok(CompletionRequest::Chat { messages })
                }
                PromptShape::Text => {
                    let mut prompt = format!("{}\n\n{question}\n\n", templates::DEBATE_SYSTEM);
                    for t in &ctx.transcript {
                        let label = if own(t) { "You" } else { "Me" };
                        prompt.push_str(&format!("{label}: {}\n", t.argument));
                    }
                    prompt.push_str(&format!("{closing}\nYou:"));
                    Ok(CompletionRequest::Text { prompt })
                }
            }
        }
        DebateMode::Roundtable => {
            let k = ctx.roster.len();
            let system = templates::roundtable_system(me, k, n);
            let others: Vec<usize> = (1..=k).filter(|&p| p != me).collect();
            let closing = templates::roundtable_closing(me, &others, n);
            let lines: Vec<String> = ctx
                .transcript
                .iter()
                .map(|t| format!("user{}: {}", ctx.position(&t.speaker).unwrap(), t.argument))
                .collect();
            let body = format!("{}\n{closing}", lines.join("\n"));
            match shape {
                PromptShape::Chat => Ok(CompletionRequest::Chat {
                    messages: vec![Message::system(system), Message::user(question), Message::user(body)],
                }),
                PromptShape::Text => Ok(CompletionRequest::Text {
                    prompt: format!("{system}\n\n{question}\n\n{body}\nuser{me}:"),
                }),
            }
        }
    }
}

pub fn render_judge(ctx: &DebatePromptContext) -> Result<CompletionRequest, PromptError> {
    ctx.check()?;
    let system = templates::judge_system(ctx.roster.len(), ctx.example.option_count());
    let lines: Vec<String> = ctx
        .transcript
        .iter()
        .map(|t| format!("user{}: {}", ctx.position(&t.speaker).unwrap(), t.argument))
        .collect();
    Ok(CompletionRequest::Chat {
        messages: vec![
            Message::system(system),
            Message::user(debate_question_line(&ctx.example)),
            Message::user(lines.join("\n")),
        ],
    })
}
