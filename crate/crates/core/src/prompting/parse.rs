//! Recovering stances and arguments from model replies.

use std::ops::Range;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::dataset::{Example, OptionLabel, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseRoute {
    /// `Answer: (X) ...` or `Conclusion: (X) ...`
    AnswerPrefix,
    /// `... the answer is (X).`
    ThereforeSuffix,
    /// `Answer: yes.`
    YesNo,
    /// `Option (X) is more plausible`, without an answer label.
    BareOption,
    FallbackFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub stance: Option<OptionLabel>,
    pub explanation: String,
    pub parse_route: ParseRoute,
}

const LETTER: &str = r"(?:\(\s*(?P<l1>[A-Ea-e])\s*\)|\b(?P<l2>[A-E])\b)";

static ANSWER_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i:\b(?:final\s+)?(?:answer|conclusion))\s*:\s*(?i:option\s*)?{LETTER}")).unwrap()
});

static THEREFORE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i:\bthe\s+(?:final\s+)?answer\s*(?:\(\s*yes\s+or\s+no\s*\)\s*)?is)\s*:?\s*(?i:option\s*)?(?:{LETTER}|(?P<yn>(?i:yes|no))\b)"
    ))
    .unwrap()
});

static YES_NO: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\banswer\s*:\s*|^\s*)(?P<yn>yes|no)\b").unwrap()
});

static BARE_OPTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:\b(?:option|choice)\s*\(\s*(?P<l1>[a-e])\s*\)|\b(?:option|choice)\s+(?P<l2>[a-e])\b|\(\s*(?P<l3>[a-e])\s*\))\s+is\s+(?:the\s+)?(?:more|most)\s+(?:plausible|likely|reasonable)",
    )
    .unwrap()
});

/// Sentence-initial `Option (X) is ...` / `Option (X) suggests ...`.
static OPTION_LEAD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:option|choice)\s*(?:\(\s*[a-e]\s*\)|[a-e]\b)\s*(?:is|suggests)\b").unwrap()
});

static EXPLANATION_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*explanation\s*:\s*").unwrap());

fn letter_of(c: &Captures<'_>) -> Option<OptionLabel> {
    ["l1", "l2", "l3"]
        .iter()
        .find_map(|n| c.name(n))
        .and_then(|m| m.as_str().chars().next())
        .and_then(OptionLabel::from_letter)
}

fn yes_no_label(word: &str) -> OptionLabel {
    if word.eq_ignore_ascii_case("yes") {
        OptionLabel::A
    } else {
        OptionLabel::B
    }
}

/// Byte spans of sentences. Each span covers the sentence and its trailing
/// separator, so concatenating all spans reproduces the input.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let end = if b == b'\n' {
            Some(i + 1)
        } else if matches!(b, b'.' | b'!' | b'?') {
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b'.' | b'!' | b'?') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_whitespace() {
                while j < bytes.len() && bytes[j].is_ascii_whitespace() && bytes[j] != b'\n' {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'\n' {
                    j += 1;
                }
                Some(j)
            } else {
                i = j - 1;
                None
            }
        } else {
            None
        };
        match end {
            Some(e) => {
                spans.push(start..e);
                start = e;
                i = e;
            }
            None => i += 1,
        }
    }
    if start < bytes.len() {
        spans.push(start..bytes.len());
    }
    spans
}

/// Text with every sentence overlapping `hit` removed.
fn remove_sentences(text: &str, hit: Range<usize>) -> String {
    let kept: String = sentence_spans(text)
        .into_iter()
        .filter(|s| s.end <= hit.start || s.start >= hit.end)
        .map(|s| &text[s])
        .collect();
    kept.trim().to_string()
}

fn explanation_without(text: &str, hit: Range<usize>) -> String {
    let rest = remove_sentences(text, hit);
    EXPLANATION_LABEL.replace(&rest, "").trim().to_string()
}

/// Candidate (label, span) from a regex, skipping letters the example lacks.
fn letter_hits(re: &Regex, text: &str, ex: &Example, allow_yes_no: bool) -> Vec<(OptionLabel, Range<usize>)> {
    re.captures_iter(text)
        .filter_map(|c| {
            let label = match c.name("yn") {
                Some(w) if allow_yes_no => Some(yes_no_label(w.as_str())),
                Some(_) => None,
                None => letter_of(&c),
            }?;
            ex.has_label(label).then(|| (label, c.get(0).unwrap().range()))
        })
        .collect()
}

pub fn parse_stance(text: &str, ex: &Example) -> ParsedResponse {
    let yes_no_task = ex.task_kind == TaskKind::YesNo;
    let found = |route, hit: Option<(OptionLabel, Range<usize>)>| {
        hit.map(|(label, span)| ParsedResponse {
            stance: Some(label),
            explanation: explanation_without(text, span),
            parse_route: route,
        })
    };
    if let Some(p) = found(ParseRoute::AnswerPrefix, letter_hits(&ANSWER_PREFIX, text, ex, false).into_iter().next()) {
        return p;
    }
    if let Some(p) = found(ParseRoute::ThereforeSuffix, letter_hits(&THEREFORE, text, ex, yes_no_task).pop()) {
        return p;
    }
    if yes_no_task {
        let hit = YES_NO
            .captures(text)
            .map(|c| (yes_no_label(&c["yn"]), c.get(0).unwrap().range()));
        if let Some(p) = found(ParseRoute::YesNo, hit) {
            return p;
        }
    }
    if let Some(p) = found(ParseRoute::BareOption, letter_hits(&BARE_OPTION, text, ex, false).into_iter().next()) {
        return p;
    }
    ParsedResponse {
        stance: None,
        explanation: EXPLANATION_LABEL.replace(text.trim(), "").trim().to_string(),
        parse_route: ParseRoute::FallbackFailed,
    }
}

fn declares_stance(sentence: &str, ex: &Example) -> bool {
    let yes_no_task = ex.task_kind == TaskKind::YesNo;
    ANSWER_PREFIX.is_match(sentence)
        || THEREFORE.captures_iter(sentence).any(|c| c.name("yn").is_none() || yes_no_task)
        || (yes_no_task && YES_NO.is_match(sentence))
        || BARE_OPTION.is_match(sentence)
        || OPTION_LEAD.is_match(sentence)
}

/// Drops every sentence that announces an answer, keeping the rest in order.
pub fn strip_stance_declarations(argument: &str, ex: &Example) -> String {
    let kept: String = sentence_spans(argument)
        .into_iter()
        .map(|s| &argument[s])
        .filter(|s| !declares_stance(s, ex))
        .collect();
    kept.trim().to_string()
}

/// The `Summary:` segment of a judge reply, up to any `Conclusion:`.
pub fn summary_segment(text: &str) -> Option<String> {
    static SUMMARY: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?is)\bsummary\s*:\s*(.*?)\s*(?:\bconclusion\s*:|$)").unwrap());
    SUMMARY
        .captures(text)
        .map(|c| c[1].trim().trim_end_matches('.').trim().to_string())
        .filter(|s| !s.is_empty())
}

/// The stance named in the `Conclusion:` segment of a judge reply, if any.
pub fn conclusion_stance(text: &str, ex: &Example) -> Option<OptionLabel> {
    static CONCLUSION: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(&format!(r"(?i:\bconclusion)\s*:\s*(?i:option\s*)?{LETTER}")).unwrap()
    });
    letter_hits(&CONCLUSION, text, ex, false).into_iter().next().map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::normalize_yes_no;
    use crate::dataset::YesNo;

    fn two() -> Example {
        Example {
            id: "t".into(),
            question: "The item was packaged in bubble wrap. What was the cause of this?".into(),
            options: vec!["It was fragile.".into(), "It was small.".into()],
            gold: OptionLabel::A,
            task_kind: TaskKind::MultipleChoice,
        }
    }

    fn five() -> Example {
        let mut e = two();
        e.options = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        e
    }

    fn yn() -> Example {
        normalize_yes_no("s", "Is it common to see frost during some college commencements?", YesNo::Yes)
    }

    #[test]
    fn sentence_spans_cover_input() {
        for t in ["", "One. Two!  Three?\nFour", "a.b c", "end.", "x\n\ny", ".. .", "Hi!!! ok"] {
            let joined: String = sentence_spans(t).into_iter().map(|s| &t[s]).collect();
            assert_eq!(joined, t);
        }
        let t = "One. Two!  Three?\nFour";
        let parts: Vec<&str> = sentence_spans(t).into_iter().map(|s| &t[s]).collect();
        assert_eq!(parts, ["One. ", "Two!  ", "Three?\n", "Four"]);
        assert_eq!(sentence_spans("3.5 apples").len(), 1);
    }

    #[test]
    fn prompt_one_reply() {
        let reply = "Answer: (A) is more plausible. \nExplanation: Bubble wrap is commonly used to protect fragile items during shipping or transportation.";
        let p = parse_stance(reply, &two());
        assert_eq!(p.stance, Some(OptionLabel::A));
        assert_eq!(p.parse_route, ParseRoute::AnswerPrefix);
        assert_eq!(p.explanation, "Bubble wrap is commonly used to protect fragile items during shipping or transportation.");
    }

    #[test]
    fn therefore_takes_last_match() {
        let t = "At first the answer is (A) seemed right. Option (B) is safer. Therefore, the answer is (B).";
        let p = parse_stance(t, &two());
        assert_eq!(p.stance, Some(OptionLabel::B));
        assert_eq!(p.parse_route, ParseRoute::ThereforeSuffix);
        assert_eq!(p.explanation, "At first the answer is (A) seemed right. Option (B) is safer.");
    }

    #[test]
    fn yes_no_forms() {
        let p = parse_stance("Frost is cold. Therefore, the answer (yes or no) is no.", &yn());
        assert_eq!((p.stance, p.parse_route), (Some(OptionLabel::B), ParseRoute::ThereforeSuffix));
        let p = parse_stance("Answer: yes. \nExplanation: It is common.", &yn());
        assert_eq!((p.stance, p.parse_route), (Some(OptionLabel::A), ParseRoute::YesNo));
        assert_eq!(p.explanation, "It is common.");
        // yes/no words mean nothing for lettered tasks
        assert_eq!(parse_stance("Answer: yes.", &two()).parse_route, ParseRoute::FallbackFailed);
    }

    #[test]
    fn out_of_range_letters_are_skipped() {
        let p = parse_stance("Answer: (E) is odd. Answer: (B) is more plausible.", &two());
        assert_eq!(p.stance, Some(OptionLabel::B));
        let p = parse_stance("Answer: (E) is more plausible.", &five());
        assert_eq!(p.stance, Some(OptionLabel::E));
    }

    #[test]
    fn article_a_is_not_a_letter() {
        let p = parse_stance("Answer: a blotter absorbs ink.", &five());
        assert_eq!(p.parse_route, ParseRoute::FallbackFailed);
        assert_eq!(p.stance, None);
    }

    #[test]
    fn failure_keeps_text() {
        let p = parse_stance("I like both options.", &two());
        assert_eq!(p.stance, None);
        assert_eq!(p.parse_route, ParseRoute::FallbackFailed);
        assert_eq!(p.explanation, "I like both options.");
    }

    #[test]
    fn strip_examples() {
        let ex = two();
        assert_eq!(
            strip_stance_declarations("Answer: (A) is more plausible. Explanation: The yearbook caused nostalgia.", &ex),
            "Explanation: The yearbook caused nostalgia."
        );
        let plain = "Fragile things get wrapped. Small things do not.";
        assert_eq!(strip_stance_declarations(plain, &ex), plain);
        let davinci = "Option (B) suggests that I was looking through things while I cleaned, which would explain directly why the day was almost over and I hadn't cleaned anything.";
        assert_eq!(strip_stance_declarations(davinci, &ex), "");
        let mixed = "Nostalgia is strong. While option (B) suggests procrastination, that is less likely. So (A) is more plausible.";
        assert_eq!(
            strip_stance_declarations(mixed, &ex),
            "Nostalgia is strong. While option (B) suggests procrastination, that is less likely."
        );
    }

    #[test]
    fn judge_segments() {
        let ex = two();
        let reply = "Summary: The proposition argues for (A). The opposition gives in. Conclusion: (A) is more plausible.";
        assert_eq!(conclusion_stance(reply, &ex), Some(OptionLabel::A));
        assert_eq!(summary_segment(reply).unwrap(), "The proposition argues for (A). The opposition gives in");
        assert_eq!(conclusion_stance("Summary: they argued. Answer: (B).", &ex), None);
    }
}
