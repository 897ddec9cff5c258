//! Content constraints on generated texts and emotion descriptions.

use serde::{Deserialize, Serialize};

pub const MIN_TEXT_WORDS: usize = 15;
pub const MAX_TEXT_WORDS: usize = 25;
pub const MAX_EMPHASIZED_WORDS: usize = 2;
pub const MIN_DESCRIPTION_WORDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Text word count outside [15, 25].
    Length { words: usize },
    /// More than two fully capitalized words.
    Emphasis { capitalized: usize },
    /// Description does not open with a present participle.
    Participle,
    /// Description is not a single sentence.
    Sentence,
    /// Description shorter than three words.
    Brevity { words: usize },
    /// Character the toy G2P cannot pronounce.
    Charset { ch: char },
}

/// A word with at least two letters, all uppercase.
fn is_emphasized(word: &str) -> bool {
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

pub fn validate_text(text: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    let words: Vec<&str> = text.split_whitespace().collect();
    if !(MIN_TEXT_WORDS..=MAX_TEXT_WORDS).contains(&words.len()) {
        out.push(Violation::Length { words: words.len() });
    }
    let capitalized = words.iter().filter(|w| is_emphasized(w)).count();
    if capitalized > MAX_EMPHASIZED_WORDS {
        out.push(Violation::Emphasis { capitalized });
    }
    if let Some(ch) = text
        .chars()
        .find(|c| !(c.is_ascii_alphabetic() || c.is_ascii_punctuation() || *c == ' '))
    {
        out.push(Violation::Charset { ch });
    }
    out
}

pub fn validate_description(description: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    let trimmed = description.trim();
    let words: Vec<&str> = trimmed.split_whitespace().collect();
    let first: String = words
        .first()
        .map(|w| w.chars().filter(|c| c.is_alphabetic()).collect())
        .unwrap_or_default();
    if !(first.len() > 3 && first.to_ascii_lowercase().ends_with("ing")) {
        out.push(Violation::Participle);
    }
    let body = trimmed.strip_suffix('.').unwrap_or(trimmed);
    if body.contains(['.', '!', '?', '\n']) {
        out.push(Violation::Sentence);
    }
    if words.len() < MIN_DESCRIPTION_WORDS {
        out.push(Violation::Brevity { words: words.len() });
    }
    if let Some(ch) = trimmed.chars().find(|c| !(c.is_ascii_graphic() || *c == ' ')) {
        out.push(Violation::Charset { ch });
    }
    out
}
