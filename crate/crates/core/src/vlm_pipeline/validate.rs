//! Single-sentence check applied to every descriptor response.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DescriptorRejection {
    #[error("response is empty")]
    Empty,
    #[error("response does not end with sentence punctuation")]
    NoTerminalPunctuation,
    #[error("response contains more than one sentence")]
    MultiSentence,
}

const CLOSERS: [char; 4] = ['"', '\'', ')', '”'];

/// Accepts text that trims to exactly one sentence and returns it trimmed.
///
/// A sentence boundary is `.`, `!` or `?` followed by whitespace and then an
/// alphanumeric character; closing quotes and brackets may follow the final mark.
pub fn validate_descriptor(raw: &str) -> Result<String, DescriptorRejection> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(DescriptorRejection::Empty);
    }
    let core = s.trim_end_matches(CLOSERS);
    if !core.ends_with(['.', '!', '?']) {
        return Err(DescriptorRejection::NoTerminalPunctuation);
    }
    let chars: Vec<char> = s.chars().collect();
    for (i, c) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && CLOSERS.contains(&chars[j]) {
            j += 1;
        }
        let ws_start = j;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        if j > ws_start && j < chars.len() && chars[j].is_alphanumeric() {
            return Err(DescriptorRejection::MultiSentence);
        }
    }
    if !looks_past_tense(s) {
        log::warn!("descriptor may not be in past tense: {s:?}");
    }
    Ok(s.to_string())
}

/// Loose advisory check; never used to reject.
fn looks_past_tense(s: &str) -> bool {
    s.split(|c: char| !c.is_alphabetic()).any(|w| {
        let w = w.to_lowercase();
        w.ends_with("ed") || matches!(w.as_str(), "was" | "were" | "had" | "sat" | "leaned" | "held" | "touched" | "stood" | "leant")
    })
}
