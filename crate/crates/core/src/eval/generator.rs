//! Answer prompt, reply parsing and deterministic generator stubs.

use std::collections::HashSet;

use crate::annotation::prompts;
use crate::providers::{ChatMessage, DecodingParams, LlmProvider, ProviderError};
use crate::tokenize::terms;

pub const CHOICE_LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

pub fn render_choices(choices: &[String]) -> String {
    choices
        .iter()
        .zip(CHOICE_LETTERS)
        .map(|(c, l)| format!("{l}. {c}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn answer_prompt(context: &str, question: &str, choices: &[String]) -> String {
    prompts::render(
        prompts::ANSWER,
        &[("CONTEXT", context), ("QUESTION", question), ("CHOICES", &render_choices(choices))],
    )
}

/// Choice index from a generator reply.
///
/// Accepts a leading letter `A`-`D` or digit `1`-`4` (optionally after
/// "answer:" and wrapped in brackets or followed by punctuation), or a reply
/// equal to one choice's text ignoring case and surrounding whitespace.
pub fn parse_choice(reply: &str, choices: &[String]) -> Option<usize> {
    let trimmed = reply.trim();
    let lower = trimmed.to_ascii_lowercase();
    let body = ["the answer is", "answer:", "answer"]
        .iter()
        .find_map(|p| lower.strip_prefix(p).map(|_| trimmed[p.len()..].trim_start()))
        .unwrap_or(trimmed);
    let token = body.trim_start_matches(['(', '[', '*', '"', '\'']);
    let mut chars = token.chars();
    if let Some(first) = chars.next() {
        let next_ok = chars.next().is_none_or(|c| !c.is_alphanumeric());
        if next_ok {
            let idx = match first.to_ascii_uppercase() {
                c @ 'A'..='D' => Some(c as usize - 'A' as usize),
                c @ '1'..='4' => Some(c as usize - '1' as usize),
                _ => None,
            };
            if let Some(i) = idx.filter(|&i| i < choices.len()) {
                return Some(i);
            }
        }
    }
    choices.iter().position(|c| c.trim().eq_ignore_ascii_case(trimmed))
}

fn letter(i: usize) -> String {
    CHOICE_LETTERS.get(i).map_or_else(|| (i + 1).to_string(), |c| c.to_string())
}

/// Always answers the same choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConstantChoiceLlm {
    pub choice: usize,
}

impl LlmProvider for ConstantChoiceLlm {
    fn id(&self) -> String {
        format!("stub-constant/{}", letter(self.choice))
    }

    fn complete(&self, _messages: &[ChatMessage], _params: &DecodingParams) -> Result<String, ProviderError> {
        Ok(letter(self.choice))
    }
}

/// Picks the choice sharing the most distinct terms with the context
/// section of the answer prompt; ties go to the earlier choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverlapOracleLlm;

fn section<'a>(prompt: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = prompt.find(open)? + open.len();
    let end = prompt.rfind(close)?;
    (start <= end).then(|| &prompt[start..end])
}

impl OverlapOracleLlm {
    pub fn choose(context: &str, choices: &[&str]) -> usize {
        let ctx: HashSet<String> = terms(context).into_iter().collect();
        let mut best = (0usize, 0usize);
        for (i, c) in choices.iter().enumerate() {
            let mut ts = terms(c);
            ts.sort();
            ts.dedup();
            let n = ts.iter().filter(|t| ctx.contains(*t)).count();
            if n > best.1 {
                best = (i, n);
            }
        }
        best.0
    }
}

impl LlmProvider for OverlapOracleLlm {
    fn id(&self) -> String {
        "stub-overlap-oracle".into()
    }

    fn complete(&self, messages: &[ChatMessage], _params: &DecodingParams) -> Result<String, ProviderError> {
        let prompt = messages.last().map_or("", |m| m.content.as_str());
        let context = section(prompt, "### CONTEXT\n", "### QUESTION\n")
            .ok_or_else(|| ProviderError::InvalidResponse("prompt has no context section".into()))?;
        let choices_block = section(prompt, "### CHOICES\n", "### INSTRUCTIONS")
            .ok_or_else(|| ProviderError::InvalidResponse("prompt has no choices section".into()))?;
        let choices: Vec<&str> = choices_block
            .lines()
            .filter_map(|l| l.get(3..).filter(|_| l.as_bytes().get(1) == Some(&b'.')))
            .collect();
        Ok(letter(Self::choose(context, &choices)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch() -> Vec<String> {
        ["rose sharply", "fell", "stayed flat", "doubled"].map(String::from).to_vec()
    }

    #[test]
    fn reply_formats() {
        let c = ch();
        for (reply, want) in [
            ("A", Some(0)),
            ("b", Some(1)),
            (" C.", Some(2)),
            ("(D)", Some(3)),
            ("Answer: B", Some(1)),
            ("The answer is C", Some(2)),
            ("3", Some(2)),
            ("fell", Some(1)),
            ("Stayed Flat", Some(2)),
            ("E", None),
            ("5", None),
            ("Apple", None),
            ("", None),
        ] {
            assert_eq!(parse_choice(reply, &c), want, "{reply:?}");
        }
    }

    #[test]
    fn oracle_reads_its_own_prompt() {
        let prompt = answer_prompt("[Published: 2015-01-01]\nshares stayed flat all year\n", "How?", &ch());
        let reply = OverlapOracleLlm.complete(&[ChatMessage::user(prompt)], &DecodingParams::default()).unwrap();
        assert_eq!(reply, "C");
        let reply = ConstantChoiceLlm { choice: 1 }.complete(&[], &DecodingParams::default()).unwrap();
        assert_eq!(reply, "B");
    }
}
