//! Reply variants with the stance and route each must parse to.

use ford::dataset::{normalize_yes_no, Example, OptionLabel, TaskKind, YesNo};
use ford::prompting::ParseRoute;

pub const A: OptionLabel = OptionLabel::A;
pub const B: OptionLabel = OptionLabel::B;
pub const C: OptionLabel = OptionLabel::C;
pub const D: OptionLabel = OptionLabel::D;
pub const E: OptionLabel = OptionLabel::E;
use ParseRoute::{AnswerPrefix, BareOption, FallbackFailed, ThereforeSuffix, YesNo as YesNoRoute};

pub fn choice(n: usize) -> Example {
    Example {
        id: "c".into(),
        question: "The item was packaged in bubble wrap. What was the cause of this?".into(),
        options: (0..n).map(|i| format!("option text {i}")).collect(),
        gold: A,
        task_kind: TaskKind::MultipleChoice,
    }
}

pub fn yes_no() -> Example {
    normalize_yes_no("y", "Is it common to see frost during some college commencements?", YesNo::Yes)
}

/// The example a corpus row is parsed against.
pub fn example_for(n: usize) -> Example {
    if n == 0 {
        yes_no()
    } else {
        choice(n)
    }
}

/// (reply, option count or 0 for a yes/no task, expected stance, expected route)
pub const CORPUS: &[(&str, usize, Option<OptionLabel>, ParseRoute)] = &[
    ("Answer: (A) is more plausible. Explanation: Bubble wrap protects fragile items.", 2, Some(A), AnswerPrefix),
    ("Answer: (B) is more plausible.\nExplanation: Small items fit in small boxes.", 2, Some(B), AnswerPrefix),
    ("answer: (b) is more plausible", 2, Some(B), AnswerPrefix),
    ("Answer: B is more plausible. Explanation: it is.", 2, Some(B), AnswerPrefix),
    ("Answer:(A)", 2, Some(A), AnswerPrefix),
    ("Final answer: Option (C) is more plausible.", 3, Some(C), AnswerPrefix),
    ("I reconsidered the argument.\nAnswer: ( E ) is more plausible. Explanation: blotters absorb ink.", 5, Some(E), AnswerPrefix),
    ("Summary: the users agreed. Conclusion: (A) is more plausible.", 2, Some(A), AnswerPrefix),
    (" A blotter absorbs excess ink. Therefore, the answer is (E).", 5, Some(E), ThereforeSuffix),
    (" Speeding is a violation. Therefore, the answer is (B).", 2, Some(B), ThereforeSuffix),
    (" Option (B) suggests waiting, and option (A) does not. Therefore, the answer is (A).", 2, Some(A), ThereforeSuffix),
    ("Thus the final answer is D.", 4, Some(D), ThereforeSuffix),
    ("It could be (A). On reflection the answer is (B).", 2, Some(B), ThereforeSuffix),
    (" Hamsters are prey animals. Therefore, the answer (yes or no) is yes.", 0, Some(A), ThereforeSuffix),
    (" There are 5 Spice Girls. Therefore, the answer (yes or no) is no.", 0, Some(B), ThereforeSuffix),
    ("Answer: yes. Explanation: Outdoor ceremonies are held in cold months.", 0, Some(A), YesNoRoute),
    ("Answer: No. Explanation: Frost is rare in June.", 0, Some(B), YesNoRoute),
    ("yes, frost can appear in December.", 0, Some(A), YesNoRoute),
    ("No\nCommencements are usually in summer.", 0, Some(B), YesNoRoute),
    ("I think option (B) is more plausible because small items are shipped often.", 2, Some(B), BareOption),
    ("Option A is more likely here.", 2, Some(A), BareOption),
    ("After the debate, (C) is the most reasonable choice.", 3, Some(C), BareOption),
    ("Choice (D) is more plausible than the rest.", 5, Some(D), BareOption),
    // adversarial non-answers
    ("I cannot decide between the two options.", 2, None, FallbackFailed),
    ("Both answers seem plausible to me, it depends on context.", 2, None, FallbackFailed),
    ("Answer: (C) is more plausible.", 2, None, FallbackFailed),
    ("The answer is unclear. Explanation: neither option fits.", 2, None, FallbackFailed),
    ("Maybe yes, maybe no; the question is ambiguous.", 2, None, FallbackFailed),
    ("", 2, None, FallbackFailed),
];
