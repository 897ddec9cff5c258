//! Deterministic stand-ins for the speech models around the synthesizer:
//! rule-based G2P, an emotion-banded token codec, its inverse transcriber and
//! an emotion embedder.
//!
//! Codec: every phoneme becomes [`TOKENS_PER_PHONEME`] copies of
//! `phoneme_index * 7 + emotion_index`. Indices 189 and 190 are AUDIO_EOS and
//! AUDIO_PAD, matching the reserved top of the audio partition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LETTER_COUNT: usize = 26;
/// 26 letters plus the word separator.
pub const PHONEME_COUNT: usize = LETTER_COUNT + 1;
pub const EMOTION_COUNT: usize = 7;
pub const TOKENS_PER_PHONEME: usize = 4;
pub const AUDIO_EOS_INDEX: u32 = (PHONEME_COUNT * EMOTION_COUNT) as u32;
pub const AUDIO_PAD_INDEX: u32 = AUDIO_EOS_INDEX + 1;
pub const CODEBOOK_SIZE: usize = PHONEME_COUNT * EMOTION_COUNT + 2;
/// Codec frame rate used for duration accounting.
pub const TOKENS_PER_SECOND: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionCategory {
    Angry,
    Happy,
    Sad,
    Surprised,
    Fearful,
    Disgusted,
    Neutral,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; EMOTION_COUNT] = [
        Self::Angry,
        Self::Happy,
        Self::Sad,
        Self::Surprised,
        Self::Fearful,
        Self::Disgusted,
        Self::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Angry => "angry",
            Self::Happy => "happy",
            Self::Sad => "sad",
            Self::Surprised => "surprised",
            Self::Fearful => "fearful",
            Self::Disgusted => "disgusted",
            Self::Neutral => "neutral",
        }
    }
}

impl fmt::Display for EmotionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown emotion category `{s}`")))
    }
}

/// Pseudo-phoneme: index 0..26 for letters `a..z`, 26 for the word separator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phoneme(u8);

impl Phoneme {
    pub const SEPARATOR: Phoneme = Phoneme(LETTER_COUNT as u8);

    pub fn new(index: usize) -> Result<Self> {
        if index < PHONEME_COUNT {
            Ok(Self(index as u8))
        } else {
            Err(Error::Validation(format!("phoneme index {index} out of range")))
        }
    }

    pub fn letter(c: char) -> Option<Self> {
        c.is_ascii_alphabetic()
            .then(|| Self((c.to_ascii_lowercase() as u8) - b'a'))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The normalized-text character this phoneme spells.
    pub fn grapheme(self) -> char {
        if self == Self::SEPARATOR {
            ' '
        } else {
            (b'a' + self.0) as char
        }
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::SEPARATOR {
            f.write_str("sep")
        } else {
            write!(f, "p_{}", self.grapheme())
        }
    }
}

/// Lowercase letters and single spaces; punctuation removed.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        let w: String = word
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        if w.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&w);
    }
    out
}

/// Rule-based G2P: letters map 1:1 (case-folded), whitespace runs become one
/// separator, ASCII punctuation is dropped. Anything else is rejected.
pub fn g2p(text: &str) -> Result<Vec<Phoneme>> {
    if let Some(bad) = text
        .chars()
        .find(|c| !(c.is_ascii_alphabetic() || c.is_ascii_punctuation() || *c == ' '))
    {
        return Err(Error::UnsupportedChar(bad));
    }
    let normalized = normalize(text);
    Ok(normalized
        .chars()
        .map(|c| Phoneme::letter(c).unwrap_or(Phoneme::SEPARATOR))
        .collect())
}

pub fn codec_index(phoneme: Phoneme, emotion: EmotionCategory) -> u32 {
    (phoneme.index() * EMOTION_COUNT + emotion.index()) as u32
}

/// Decodes a codec index into its (phoneme, emotion) pair; `None` for the
/// reserved ids.
pub fn decode_index(index: u32) -> Option<(Phoneme, EmotionCategory)> {
    let i = index as usize;
    if i >= PHONEME_COUNT * EMOTION_COUNT {
        return None;
    }
    Some((
        Phoneme(i.div_euclid(EMOTION_COUNT) as u8),
        EmotionCategory::ALL[i % EMOTION_COUNT],
    ))
}

pub fn toy_synthesize(phonemes: &[Phoneme], emotion: EmotionCategory) -> Vec<u32> {
    phonemes
        .iter()
        .flat_map(|&p| std::iter::repeat_n(codec_index(p, emotion), TOKENS_PER_PHONEME))
        .collect()
}

/// Majority vote over consecutive 4-token windows (reserved ids skipped
/// first). Ties go to the earliest token in the window.
pub fn transcribe_phonemes(tokens: &[u32]) -> Vec<Phoneme> {
    let content: Vec<Phoneme> = tokens.iter().filter_map(|&t| decode_index(t).map(|(p, _)| p)).collect();
    content
        .chunks(TOKENS_PER_PHONEME)
        .map(|window| {
            let mut best = window[0];
            let mut best_count = 0;
            for &candidate in window {
                let count = window.iter().filter(|&&p| p == candidate).count();
                if count > best_count {
                    best = candidate;
                    best_count = count;
                }
            }
            best
        })
        .collect()
}

/// Inverse of [`toy_synthesize`] on clean input; returns normalized text.
pub fn toy_transcribe(tokens: &[u32]) -> String {
    let raw: String = transcribe_phonemes(tokens).into_iter().map(Phoneme::grapheme).collect();
    normalize(&raw)
}

/// L2-normalized histogram of the emotion bands present in `tokens`.
pub fn toy_emotion_embed(tokens: &[u32]) -> Result<[f64; EMOTION_COUNT]> {
    let mut hist = [0.0; EMOTION_COUNT];
    for (_, emotion) in tokens.iter().filter_map(|&t| decode_index(t)) {
        hist[emotion.index()] += 1.0;
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Validation(
            "emotion embedding needs at least one content token".into(),
        ));
    }
    hist.iter_mut().for_each(|v| *v /= norm);
    Ok(hist)
}

/// Argmax of the embedding; ties resolve to the lowest category index.
pub fn toy_classify(tokens: &[u32]) -> Result<EmotionCategory> {
    let emb = toy_emotion_embed(tokens)?;
    let mut best = 0;
    for (i, &v) in emb.iter().enumerate() {
        if v > emb[best] {
            best = i;
        }
    }
    Ok(EmotionCategory::ALL[best])
}

pub fn duration_seconds(token_count: usize) -> f64 {
    token_count as f64 / TOKENS_PER_SECOND
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: char) -> Phoneme {
        Phoneme::letter(c).unwrap()
    }

    #[test]
    fn g2p_rules() {
        assert_eq!(g2p("ab").unwrap(), vec![p('a'), p('b')]);
        let sep = Phoneme::SEPARATOR;
        assert_eq!(
            g2p("Hi there").unwrap(),
            vec![p('h'), p('i'), sep, p('t'), p('h'), p('e'), p('r'), p('e')]
        );
        assert!(g2p("").unwrap().is_empty());
        assert_eq!(g2p("  Well,   done!  ").unwrap().len(), 9);
        assert!(matches!(g2p("route 66"), Err(Error::UnsupportedChar('6'))));
    }

    #[test]
    fn synthesize_and_transcribe() {
        let angry = EmotionCategory::Angry;
        assert_eq!(toy_synthesize(&[p('a')], angry), vec![0; 4]);
        let cat = toy_synthesize(&g2p("cat").unwrap(), EmotionCategory::Sad);
        assert_eq!(toy_transcribe(&cat), "cat");

        let mut corrupted = cat.clone();
        corrupted[5] = codec_index(p('z'), EmotionCategory::Sad);
        assert_eq!(toy_transcribe(&corrupted), "cat");

        assert_eq!(toy_transcribe(&[AUDIO_PAD_INDEX; 8]), "");
        assert_eq!(toy_transcribe(&[]), "");
    }

    #[test]
    fn emotion_bands_are_disjoint() {
        let ph = g2p("same words").unwrap();
        let a = toy_synthesize(&ph, EmotionCategory::Happy);
        let b = toy_synthesize(&ph, EmotionCategory::Fearful);
        assert!(a.iter().all(|t| !b.contains(t)));
    }

    #[test]
    fn emotion_embedding() {
        let angry = toy_synthesize(&g2p("grr").unwrap(), EmotionCategory::Angry);
        let e = toy_emotion_embed(&angry).unwrap();
        assert_eq!(e, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let happy = toy_synthesize(&g2p("yay").unwrap(), EmotionCategory::Happy);
        let mixed: Vec<u32> = angry.iter().chain(&happy).copied().collect();
        let e = toy_emotion_embed(&mixed).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((e[0] - h).abs() < 1e-15 && (e[1] - h).abs() < 1e-15);
        assert!(e[2..].iter().all(|&v| v == 0.0));

        let sad = toy_synthesize(&g2p("oh").unwrap(), EmotionCategory::Sad);
        assert_eq!(toy_classify(&sad).unwrap(), EmotionCategory::Sad);
        assert!(toy_emotion_embed(&[]).is_err());
        assert!(toy_emotion_embed(&[AUDIO_EOS_INDEX]).is_err());
    }

    #[test]
    fn phoneme_stream_fits_step_budget() {
        for n in 1..2000usize {
            let steps = (TOKENS_PER_PHONEME * n).div_ceil(3);
            assert!(n <= steps);
        }
    }

    proptest! {
        #[test]
        fn codec_round_trip(text in "[a-zA-Z ,.!?']{0,40}", e in 0usize..7) {
            let emotion = EmotionCategory::ALL[e];
            let ph = g2p(&text).unwrap();
            let audio = toy_synthesize(&ph, emotion);
            prop_assert_eq!(audio.len(), 4 * ph.len());
            prop_assert_eq!(transcribe_phonemes(&audio), ph);
            prop_assert_eq!(toy_transcribe(&audio), normalize(&text));
        }

        #[test]
        fn codec_injective(i in 0u32..189, j in 0u32..189) {
            prop_assert_eq!(decode_index(i) == decode_index(j), i == j);
        }

        #[test]
        fn cosine_one_iff_same_emotion(a in 0usize..7, b in 0usize..7, t in "[a-z]{1,8}") {
            let ph = g2p(&t).unwrap();
            let ea = toy_emotion_embed(&toy_synthesize(&ph, EmotionCategory::ALL[a])).unwrap();
            let eb = toy_emotion_embed(&toy_synthesize(&ph, EmotionCategory::ALL[b])).unwrap();
            let dot: f64 = ea.iter().zip(&eb).map(|(x, y)| x * y).sum();
            prop_assert_eq!(dot == 1.0, a == b);
        }
    }
}
