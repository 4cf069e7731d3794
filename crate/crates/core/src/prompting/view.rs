//! Reading rendered prompts back into structure.
//!
//! Simulated agents see exactly what a model would see. This module recovers
//! the question line and the attributed arguments from any request produced
//! by the renderers in this crate.

use crate::backend::{CompletionRequest, Role};

use super::templates::{JUDGE_LEAD, REANSWER_LEAD, ROUNDTABLE_CLOSING_LEAD, ROUNDTABLE_LEAD};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewEntry {
    pub from_self: bool,
    /// Roster position when the prompt attributes it (roundtable and judge).
    pub position: Option<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptView {
    Initial { question_line: String },
    Debate { question_line: String, me: Option<usize>, entries: Vec<ViewEntry> },
    Judge { question_line: String, entries: Vec<ViewEntry> },
}

impl PromptView {
    pub fn question_line(&self) -> &str {
        match self {
            PromptView::Initial { question_line }
            | PromptView::Debate { question_line, .. }
            | PromptView::Judge { question_line, .. } => question_line,
        }
    }
}

fn user_number(label: &str) -> Option<usize> {
    label.strip_prefix("user")?.parse().ok()
}

/// Splits `userN: text` lines into entries; unlabelled lines continue the previous entry.
fn user_lines(body: &str, me: Option<usize>) -> Vec<ViewEntry> {
    let mut out: Vec<ViewEntry> = Vec::new();
    for line in body.lines() {
        let labelled = line
            .split_once(": ")
            .and_then(|(l, rest)| user_number(l).map(|n| (n, rest)))
            .or_else(|| line.strip_suffix(':').and_then(user_number).map(|n| (n, "")));
        match labelled {
            Some((n, rest)) => out.push(ViewEntry { from_self: Some(n) == me, position: Some(n), text: rest.to_string() }),
            None => {
                if let Some(last) = out.last_mut() {
                    last.text.push('\n');
                    last.text.push_str(line);
                }
            }
        }
    }
    out
}

fn strip_closing<'a>(text: &'a str, lead: &str) -> &'a str {
    match text.find(lead) {
        Some(i) => text[..i].trim_end_matches('\n'),
        None => text,
    }
}

pub fn read_prompt(req: &CompletionRequest) -> Option<PromptView> {
    match req {
        CompletionRequest::Chat { messages } => {
            let system = messages.iter().find(|m| m.role == Role::System).map(|m| m.content.as_str());
            let users: Vec<usize> = messages
                .iter()
                .enumerate()
                .filter(|(_, m)| m.role == Role::User)
                .map(|(i, _)| i)
                .collect();
            let first_user = &messages[*users.first()?].content;
            let question_line = first_user.lines().next()?.to_string();
            match system {
                None => Some(PromptView::Initial { question_line }),
                Some(s) if s.starts_with(JUDGE_LEAD) => {
                    let body = &messages[*users.get(1)?].content;
                    Some(PromptView::Judge { question_line, entries: user_lines(body, None) })
                }
                Some(s) if s.starts_with(ROUNDTABLE_LEAD) => {
                    let me = s[ROUNDTABLE_LEAD.len()..].split_whitespace().next().and_then(|n| n.parse().ok());
                    let body = strip_closing(&messages[*users.get(1)?].content, ROUNDTABLE_CLOSING_LEAD);
                    Some(PromptView::Debate { question_line, me, entries: user_lines(body, me) })
                }
                Some(_) => {
                    let entries = messages
                        .iter()
                        .skip(users[0] + 1)
                        .filter(|m| m.role != Role::System)
                        .map(|m| ViewEntry {
                            from_self: m.role == Role::Assistant,
                            position: None,
                            text: strip_closing(&m.content, REANSWER_LEAD).to_string(),
                        })
                        .collect();
                    Some(PromptView::Debate { question_line, me: None, entries })
                }
            }
        }
        CompletionRequest::Text { prompt } => {
            if prompt.starts_with(ROUNDTABLE_LEAD) || prompt.contains(REANSWER_LEAD) {
                let question_line = prompt.lines().find(|l| l.starts_with("Question: "))?.to_string();
                let (_, after) = prompt.split_once(&format!("{question_line}\n\n"))?;
                if let Some(rest) = prompt.strip_prefix(ROUNDTABLE_LEAD) {
                    let me = rest.split_whitespace().next().and_then(|n| n.parse().ok());
                    let body = strip_closing(after, ROUNDTABLE_CLOSING_LEAD);
                    return Some(PromptView::Debate { question_line, me, entries: user_lines(body, me) });
                }
                let body = strip_closing(after, REANSWER_LEAD);
                let mut entries: Vec<ViewEntry> = Vec::new();
                for line in body.lines() {
                    let (from_self, rest) = if let Some(r) = line.strip_prefix("You: ") {
                        (true, r)
                    } else if let Some(r) = line.strip_prefix("Me: ") {
                        (false, r)
                    } else if let Some(last) = entries.last_mut() {
                        last.text.push('\n');
                        last.text.push_str(line);
                        continue;
                    } else {
                        continue;
                    };
                    entries.push(ViewEntry { from_self, position: None, text: rest.to_string() });
                }
                Some(PromptView::Debate { question_line, me: None, entries })
            } else {
                let question_line = prompt.lines().rfind(|l| l.starts_with("Question: "))?.to_string();
                Some(PromptView::Initial { question_line })
            }
        }
    }
}
