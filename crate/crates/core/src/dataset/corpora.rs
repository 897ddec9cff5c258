//! Fixed corpora for training checks and statistics fixtures.

use super::manifest::ManifestEntry;
use super::textgen::PARTICIPLES;
use crate::error::Result;
use crate::toyspeech::{g2p, toy_synthesize, EmotionCategory, TOKENS_PER_SECOND};

const ADJECTIVES: &[&str] = &[
    "cold", "warm", "red", "old", "dark", "soft", "loud", "pale", "wild", "calm", "bare", "grim", "gold", "blue",
    "tall", "slow",
];
const NOUNS: &[&str] = &["door", "rain", "bell", "road", "moon", "fire", "lamp", "sea"];

/// Short affect phrase per category for compact descriptions.
fn affect(emotion: EmotionCategory) -> &'static str {
    use EmotionCategory::*;
    match emotion {
        Angry => "hot fury",
        Happy => "bright joy",
        Sad => "deep grief",
        Surprised => "sudden awe",
        Fearful => "cold dread",
        Disgusted => "sour disdain",
        Neutral => "even calm",
    }
}

fn short_description(emotion: EmotionCategory, i: usize) -> String {
    format!("{} {}.", PARTICIPLES[i % 4], affect(emotion))
}

fn entry(
    id: String,
    text: String,
    emotion: EmotionCategory,
    description: String,
    speaker: u8,
) -> Result<ManifestEntry> {
    let phonemes = g2p(&text)?;
    let audio = toy_synthesize(&phonemes, emotion);
    let mut e = ManifestEntry::new(id, text, emotion, description, speaker, phonemes, audio);
    e.wer = Some(0.0);
    Ok(e)
}

/// `n` distinct two-word utterances cycling through the emotions, each
/// with a compact participle description. Small enough to memorize.
pub fn overfit_corpus(n: usize) -> Result<Vec<ManifestEntry>> {
    (0..n)
        .map(|i| {
            let emotion = EmotionCategory::ALL[i % 7];
            let text = format!(
                "{} {}.",
                capitalize(ADJECTIVES[i % ADJECTIVES.len()]),
                NOUNS[(i / ADJECTIVES.len() + i) % NOUNS.len()]
            );
            entry(
                format!("fit_{i:03}"),
                text,
                emotion,
                short_description(emotion, i),
                (i % 5) as u8 + 1,
            )
        })
        .collect()
}

const HARD_TEXTS: &[&str] = &[
    "Red lorry, yellow lorry, red lorry.",
    "She sells sea shells by the sea.",
    "Fuzzy wuzzy was a bear.",
    "Which witch wished which wish?",
    "Toy boat, toy boat, toy boat.",
    "Black back bat, black back bat.",
    "Six sick slick slim sycamore saplings.",
    "Quick quirky quokkas quarrel quietly.",
    "Unique New York, unique New York.",
    "Zigzag zebras zip zanily.",
    "Eleven benevolent elephants.",
    "Peter picked peppers, peppers Peter picked.",
];

/// Tongue twisters, repeated words and rare letter clusters, each voiced
/// with a description belonging to a different emotion than its tokens.
pub fn hard_case_corpus() -> Result<Vec<ManifestEntry>> {
    HARD_TEXTS
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let emotion = EmotionCategory::ALL[(i * 3) % 7];
            let described = EmotionCategory::ALL[(i * 3 + 2) % 7];
            entry(
                format!("hard_{i:03}"),
                text.to_string(),
                emotion,
                short_description(described, i + 1),
                (i % 5) as u8 + 1,
            )
        })
        .collect()
}

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    c.next()
        .map_or_else(String::new, |f| f.to_ascii_uppercase().to_string() + c.as_str())
}

/// Published per-category counts and hours of the reference corpus.
pub const REFERENCE_TABLE: [(EmotionCategory, usize, f64); 7] = [
    (EmotionCategory::Angry, 3486, 5.76),
    (EmotionCategory::Happy, 3269, 6.02),
    (EmotionCategory::Sad, 3174, 6.94),
    (EmotionCategory::Surprised, 3072, 5.67),
    (EmotionCategory::Fearful, 2961, 5.52),
    (EmotionCategory::Disgusted, 2950, 5.59),
    (EmotionCategory::Neutral, 3188, 4.95),
];
pub const REFERENCE_TOTAL_COUNT: usize = 22100;
pub const REFERENCE_TOTAL_HOURS: f64 = 40.45;

/// Synthetic (emotion, token count) records whose per-category counts and
/// durations equal [`REFERENCE_TABLE`] by construction: each category's
/// token budget is split as evenly as possible over its entries.
pub fn reference_shaped_token_counts() -> Vec<(EmotionCategory, usize)> {
    let mut out = Vec::with_capacity(REFERENCE_TOTAL_COUNT);
    for (emotion, count, hours) in REFERENCE_TABLE {
        let budget = (hours * 3600.0 * TOKENS_PER_SECOND).round() as usize;
        let (base, extra) = (budget / count, budget % count);
        out.extend((0..count).map(|i| (emotion, base + usize::from(i < extra))));
    }
    out
}
