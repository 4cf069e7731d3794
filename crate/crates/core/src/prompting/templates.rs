//! Fixed instruction strings.
//!
//! The two-option, three-participant forms are reproduced exactly; other
//! option counts and roster sizes substitute the letter set and the counts.

use crate::dataset::OptionLabel;

pub const ZERO_SHOT_INSTRUCTION: &str = "Please answer the above question by choosing a more plausible answer. You should choose only one answer from the choices and give a short explanation. Please use the format like \"Answer: _ is more plausible. Explanation: _.\"";

pub const YES_NO_INSTRUCTION: &str = "Please answer yes or no to this question and give a short explanation. Please use the format like \"Answer: _. Explanation: _\"";

pub const DEBATE_SYSTEM: &str = "You are in a debate now. My opinion is not always true, you can ignore any incorrect part of my opinion. And you can refer to my opinion to revise your choice or defend your own. Please remember there should and must be a more plausible answer in the choices.";

pub const REANSWER_LEAD: &str = "Do you think I am more reasonable?";
pub const ROUNDTABLE_LEAD: &str = "Now you are user";
pub const ROUNDTABLE_CLOSING_LEAD: &str = "Remember you are user";
pub const JUDGE_LEAD: &str = "You are given a Question and its corresponding Options.";

/// `A|B`, `A|B|C`, ...
pub fn letters_piped(option_count: usize) -> String {
    letters_joined(option_count, "|")
}

/// `A or B`, `A or B or C`, ...
pub fn letters_or(option_count: usize) -> String {
    letters_joined(option_count, " or ")
}

fn letters_joined(option_count: usize, sep: &str) -> String {
    OptionLabel::all(option_count)
        .map(|l| l.letter().to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

/// `user2 and user3`, `user1, user3 and user4`, ...
pub fn user_list(positions: &[usize]) -> String {
    let names: Vec<String> = positions.iter().map(|p| format!("user{p}")).collect();
    match names.len() {
        0 => String::new(),
        1 => names[0].clone(),
        n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
    }
}

pub fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

pub fn reanswer_instruction(option_count: usize) -> String {
    format!(
        "{REANSWER_LEAD} Please give your final answer starting with \"Answer: ({}) is more plausible.\" and explain very shortly starting with \"Explanation: \". You should choose only one answer.",
        letters_piped(option_count)
    )
}

pub fn roundtable_system(me: usize, participants: usize, option_count: usize) -> String {
    format!(
        "{ROUNDTABLE_LEAD}{me} in a round table debate of {} users. The debate is about choosing a more plausible Option ({}) to answer the Question below. The opinions of the other {} users are not always true, you can ignore any incorrect part of their opinion. And you can refer to their opinions to revise your choice or defend your own. Please remember there should and must be a more plausible answer in the choices.",
        count_word(participants),
        letters_or(option_count),
        count_word(participants.saturating_sub(1)),
    )
}

pub fn roundtable_closing(me: usize, others: &[usize], option_count: usize) -> String {
    format!(
        "{ROUNDTABLE_CLOSING_LEAD}{me}. What do you think about the opinions of {}? more reasonable? or more unreasonable? Please give your final answer choice of the Question starting with \"Answer: ({}) is more plausible.\" and explain very shortly starting with \"Explanation: \". You should choose only one option.",
        user_list(others),
        letters_piped(option_count),
    )
}

pub fn judge_system(participants: usize, option_count: usize) -> String {
    let all: Vec<usize> = (1..=participants).collect();
    format!(
        "{JUDGE_LEAD} There is a debate on this question between {}, one user might give in, please summarise the debate very shortly. Then give the conclusion based on the debate process. Your response should be in the format like \"Summary: ___. Conclusion: ({}) is more plausible.\" Remember that you should choose only one option for the answer.",
        user_list(&all),
        letters_or(option_count),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_sets() {
        assert_eq!(letters_piped(2), "A|B");
        assert_eq!(letters_piped(5), "A|B|C|D|E");
        assert_eq!(letters_or(3), "A or B or C");
    }

    #[test]
    fn user_lists() {
        assert_eq!(user_list(&[2, 3]), "user2 and user3");
        assert_eq!(user_list(&[1, 3, 4]), "user1, user3 and user4");
        assert_eq!(user_list(&[2]), "user2");
    }
}
