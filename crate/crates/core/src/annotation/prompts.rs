//! Versioned prompt templates shipped in `prompts/`.

pub const PROMPT_VERSION: &str = "v1";

pub const DOC_PASS: &str = include_str!("../../prompts/doc_pass.v1.txt");
pub const CHUNK_PASS: &str = include_str!("../../prompts/chunk_pass.v1.txt");
pub const DECOMPOSE: &str = include_str!("../../prompts/decompose.v1.txt");
pub const REPAIR: &str = include_str!("../../prompts/repair.v1.txt");
pub const ANSWER: &str = include_str!("../../prompts/answer.v1.txt");

/// Substitute `{{KEY}}` placeholders. Values are inserted verbatim, and
/// substitution is single-pass so inserted text is never re-expanded.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(key);
                        out.push_str("}}");
                    }
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
