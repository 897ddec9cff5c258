//! Joint token space: text characters, optional phoneme extension, and the
//! audio codebook, laid out as contiguous partitions of one id range.
//!
//! ```text
//! [0, text)                      printable ASCII + SYSTEM, DELIM, BOUNDARY, TEXT_EOS
//! [text, text + phoneme)         phoneme symbols + PHONEME_EOS, PHONEME_PAD
//! [guidance, guidance + audio)   codec entries + AUDIO_EOS, AUDIO_PAD
//! ```
//!
//! Reserved ids always sit at the top of their partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Reserved ids at the top of the text partition.
pub const TEXT_RESERVED: usize = 4;
/// Reserved ids at the top of the phoneme and audio partitions.
pub const STREAM_RESERVED: usize = 2;

const PRINTABLE_FIRST: u8 = 0x20;
const PRINTABLE_LAST: u8 = 0x7e;
/// Number of printable ASCII characters the text tokenizer covers.
pub const PRINTABLE_COUNT: usize = (PRINTABLE_LAST - PRINTABLE_FIRST + 1) as usize;
/// Text partition size used by the character tokenizer.
pub const STANDARD_TEXT_SIZE: usize = PRINTABLE_COUNT + TEXT_RESERVED;

pub const SYSTEM_MARKER: &str = "<SYSTEM>";
/// Separator between the instruction and the text, as printed in the
/// template: space, backslash, `n`, space.
pub const LINE_DELIMITER: &str = " \\n ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub system: TokenId,
    pub delimiter: TokenId,
    pub boundary: TokenId,
    pub text_eos: TokenId,
    pub phoneme_eos: Option<TokenId>,
    pub phoneme_pad: Option<TokenId>,
    pub audio_eos: TokenId,
    pub audio_pad: TokenId,
}

/// Index geometry of the joint vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabLayout {
    pub text_size: usize,
    /// Phoneme extension size including its two reserved ids; 0 for the base layout.
    pub phoneme_size: usize,
    /// Audio codebook size including AUDIO_EOS and AUDIO_PAD.
    pub audio_size: usize,
    pub special_ids: SpecialIds,
}

/// Builds a layout from partition sizes.
///
/// `phoneme_inventory` counts phoneme symbols only; when non-zero the
/// extension also receives PHONEME_EOS and PHONEME_PAD. `text_vocab_size` and
/// `audio_codebook_size` include their reserved ids.
pub fn build_layout(
    text_vocab_size: usize,
    phoneme_inventory: usize,
    audio_codebook_size: usize,
) -> Result<VocabLayout> {
    if text_vocab_size <= TEXT_RESERVED {
        return Err(Error::Config(format!(
            "text partition of size {text_vocab_size} leaves no room beyond {TEXT_RESERVED} reserved ids"
        )));
    }
    if audio_codebook_size <= STREAM_RESERVED {
        return Err(Error::Config(format!(
            "audio partition of size {audio_codebook_size} leaves no room beyond {STREAM_RESERVED} reserved ids"
        )));
    }
    let phoneme_size = if phoneme_inventory == 0 {
        0
    } else {
        phoneme_inventory + STREAM_RESERVED
    };
    let guidance = text_vocab_size + phoneme_size;
    let joint = guidance + audio_codebook_size;
    let id = |i: usize| i as TokenId;
    let special_ids = SpecialIds {
        system: id(text_vocab_size - 4),
        delimiter: id(text_vocab_size - 3),
        boundary: id(text_vocab_size - 2),
        text_eos: id(text_vocab_size - 1),
        phoneme_eos: (phoneme_size > 0).then(|| id(guidance - 2)),
        phoneme_pad: (phoneme_size > 0).then(|| id(guidance - 1)),
        audio_eos: id(joint - 2),
        audio_pad: id(joint - 1),
    };
    Ok(VocabLayout {
        text_size: text_vocab_size,
        phoneme_size,
        audio_size: audio_codebook_size,
        special_ids,
    })
}

impl VocabLayout {
    /// Layout used with the character tokenizer and the toy codec.
    pub fn standard(with_phonemes: bool) -> Self {
        let phonemes = if with_phonemes {
            crate::toyspeech::PHONEME_COUNT
        } else {
            0
        };
        build_layout(STANDARD_TEXT_SIZE, phonemes, crate::toyspeech::CODEBOOK_SIZE)
            .expect("standard layout sizes are valid")
    }

    /// |V_t'| (or |V_t| for the base layout): the guidance slice width.
    pub fn guidance_size(&self) -> usize {
        self.text_size + self.phoneme_size
    }

    pub fn joint_size(&self) -> usize {
        self.guidance_size() + self.audio_size
    }

    pub fn has_phonemes(&self) -> bool {
        self.phoneme_size > 0
    }

    pub fn audio_offset(&self) -> usize {
        self.guidance_size()
    }

    pub fn phoneme_offset(&self) -> usize {
        self.text_size
    }

    pub fn is_text(&self, id: TokenId) -> bool {
        (id as usize) < self.text_size
    }

    pub fn is_guidance(&self, id: TokenId) -> bool {
        (id as usize) < self.guidance_size()
    }

    pub fn is_audio(&self, id: TokenId) -> bool {
        let id = id as usize;
        id >= self.audio_offset() && id < self.joint_size()
    }

    pub fn is_phoneme(&self, id: TokenId) -> bool {
        let id = id as usize;
        id >= self.phoneme_offset() && id < self.guidance_size()
    }

    /// Codec index of an audio id.
    pub fn audio_index(&self, id: TokenId) -> Result<u32> {
        if self.is_audio(id) {
            Ok(id - self.audio_offset() as TokenId)
        } else {
            Err(Error::Partition { id, partition: "audio" })
        }
    }

    /// Joint id of a codec index.
    pub fn audio_id(&self, index: u32) -> Result<TokenId> {
        if (index as usize) < self.audio_size {
            Ok(index + self.audio_offset() as TokenId)
        } else {
            Err(Error::Partition {
                id: index,
                partition: "audio codebook",
            })
        }
    }

    /// Joint id of a phoneme symbol index.
    pub fn phoneme_id(&self, index: u32) -> Result<TokenId> {
        if (index as usize) < self.phoneme_size.saturating_sub(STREAM_RESERVED) {
            Ok(index + self.phoneme_offset() as TokenId)
        } else {
            Err(Error::Partition {
                id: index,
                partition: "phoneme inventory",
            })
        }
    }

    /// Phoneme symbol index of a joint id, if it names a phoneme symbol.
    pub fn phoneme_index(&self, id: TokenId) -> Option<u32> {
        let symbols = self.phoneme_size.saturating_sub(STREAM_RESERVED);
        let id = id as usize;
        (id >= self.phoneme_offset() && id < self.phoneme_offset() + symbols)
            .then(|| (id - self.phoneme_offset()) as u32)
    }

    /// Structural checks; layouts loaded from disk pass through here.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = build_layout(
            self.text_size,
            self.phoneme_size.saturating_sub(STREAM_RESERVED),
            self.audio_size,
        )?;
        if self.phoneme_size == 1 || rebuilt != *self {
            return Err(Error::Config(
                "layout descriptor is inconsistent with its partition sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let layout: Self = serde_json::from_str(s)?;
        layout.validate()?;
        Ok(layout)
    }
}

/// Splits a logits row into its guidance part `[0, |V_t'|)` and audio part
/// `[|V_t'|, |V_j|)`.
pub fn slice_logits<'a>(row: &'a [f64], layout: &VocabLayout) -> Result<(&'a [f64], &'a [f64])> {
    if row.len() != layout.joint_size() {
        return Err(Error::Shape(format!(
            "logits row has length {}, layout expects {}",
            row.len(),
            layout.joint_size()
        )));
    }
    Ok(row.split_at(layout.guidance_size()))
}

/// Character-level tokenizer over printable ASCII.
pub fn encode_text(text: &str) -> Result<Vec<TokenId>> {
    text.chars()
        .map(|c| {
            if c.is_ascii() && (PRINTABLE_FIRST..=PRINTABLE_LAST).contains(&(c as u8)) {
                Ok((c as u8 - PRINTABLE_FIRST) as TokenId)
            } else {
                Err(Error::UnsupportedChar(c))
            }
        })
        .collect()
}

/// Inverse of [`encode_text`], also rendering the prompt markers.
pub fn decode_text(ids: &[TokenId], layout: &VocabLayout) -> Result<String> {
    let special = &layout.special_ids;
    let mut out = String::with_capacity(ids.len());
    for &id in ids {
        if (id as usize) < PRINTABLE_COUNT {
            out.push((id as u8 + PRINTABLE_FIRST) as char);
        } else if id == special.system {
            out.push_str(SYSTEM_MARKER);
        } else if id == special.delimiter {
            out.push('.');
            out.push_str(LINE_DELIMITER);
        } else if id == special.text_eos {
            // end-of-prompt marker renders as nothing
        } else {
            return Err(Error::Partition {
                id,
                partition: "printable text",
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Pretrain,
    Emotion,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptRecord {
    pub mode: PromptMode,
    pub description: String,
    pub text: String,
}

const INSTRUCTION: &str = ": Say this sentence";
const EMOTION_CLAUSE: &str = " with emotion of ";

impl PromptRecord {
    pub fn pretrain(text: impl Into<String>) -> Self {
        Self {
            mode: PromptMode::Pretrain,
            description: String::new(),
            text: text.into(),
        }
    }

    pub fn emotion(description: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            mode: PromptMode::Emotion,
            description: description.into(),
            text: text.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::Validation("prompt text is empty".into()));
        }
        if self.mode == PromptMode::Emotion && self.description.is_empty() {
            return Err(Error::Validation(
                "emotion prompt requires a non-empty description".into(),
            ));
        }
        Ok(())
    }

    /// The prompt string exactly as the template prints it.
    pub fn render(&self) -> Result<String> {
        self.validate()?;
        let mut s = String::from(SYSTEM_MARKER);
        s.push_str(INSTRUCTION);
        if self.mode == PromptMode::Emotion {
            s.push_str(EMOTION_CLAUSE);
            s.push_str(&self.description);
        }
        s.push('.');
        s.push_str(LINE_DELIMITER);
        s.push_str(&self.text);
        Ok(s)
    }
}

/// Tokenizes a prompt. The marker and the `. \n ` separator become single
/// reserved ids, so the description and text are recoverable from the ids
/// even when they contain the separator characters themselves. A trailing
/// TEXT_EOS hands over to generation.
pub fn format_prompt(record: &PromptRecord, layout: &VocabLayout) -> Result<Vec<TokenId>> {
    record.validate()?;
    let special = &layout.special_ids;
    let mut ids = vec![special.system];
    ids.extend(encode_text(INSTRUCTION)?);
    if record.mode == PromptMode::Emotion {
        ids.extend(encode_text(EMOTION_CLAUSE)?);
        ids.extend(encode_text(&record.description)?);
    }
    ids.push(special.delimiter);
    ids.extend(encode_text(&record.text)?);
    ids.push(special.text_eos);
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_offsets() {
        // 71 text + 27 phoneme symbols + 2 reserved = 100
        let l = build_layout(71, 27, 50).unwrap();
        assert_eq!(l.guidance_size(), 100);
        assert_eq!(l.joint_size(), 150);
        assert_eq!(l.audio_offset(), 100);
        assert_eq!(l.special_ids.phoneme_eos, Some(98));
        assert_eq!(l.special_ids.phoneme_pad, Some(99));
        assert_eq!(l.special_ids.audio_eos, 148);
        assert_eq!(l.special_ids.audio_pad, 149);

        let base = build_layout(10, 0, 4).unwrap();
        assert_eq!(base.joint_size(), 14);
        assert_eq!(base.audio_offset(), 10);
        assert_eq!(base.special_ids.phoneme_eos, None);
        assert!(base.is_audio(10) && base.is_audio(13) && !base.is_audio(14));
    }

    #[test]
    fn empty_partitions_rejected() {
        assert!(build_layout(0, 0, 10).is_err());
        assert!(build_layout(4, 0, 10).is_err());
        assert!(build_layout(10, 0, 2).is_err());
    }

    #[test]
    fn specials_inside_partitions() {
        for phon in [true, false] {
            let l = VocabLayout::standard(phon);
            let s = l.special_ids;
            for id in [s.system, s.delimiter, s.boundary, s.text_eos] {
                assert!(l.is_text(id));
            }
            for id in [s.phoneme_eos, s.phoneme_pad].into_iter().flatten() {
                assert!(l.is_phoneme(id));
            }
            assert!(l.is_audio(s.audio_eos) && l.is_audio(s.audio_pad));
            assert!(l.validate().is_ok());
        }
    }

    #[test]
    fn json_descriptor_round_trip() {
        let l = VocabLayout::standard(true);
        assert_eq!(VocabLayout::from_json(&l.to_json().unwrap()).unwrap(), l);
        let mut bad = l.clone();
        bad.special_ids.audio_eos = 3;
        assert!(VocabLayout::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn prompt_templates() {
        let r = PromptRecord::emotion("Conveying calm", "Hello there.");
        assert_eq!(
            r.render().unwrap(),
            "<SYSTEM>: Say this sentence with emotion of Conveying calm. \\n Hello there."
        );
        let r = PromptRecord::pretrain("Hello there.");
        assert_eq!(r.render().unwrap(), "<SYSTEM>: Say this sentence. \\n Hello there.");
        assert!(PromptRecord::emotion("", "Hi").render().is_err());
        assert!(format_prompt(&PromptRecord::emotion("", "Hi"), &VocabLayout::standard(false)).is_err());
        assert!(PromptRecord::pretrain("").validate().is_err());
    }

    #[test]
    fn prompt_tokens_decode_to_rendering() {
        let layout = VocabLayout::standard(true);
        let r = PromptRecord::emotion("Expressing aggravated displeasure.", "Wobbly tables ruin everything!");
        let ids = format_prompt(&r, &layout).unwrap();
        assert_eq!(decode_text(&ids, &layout).unwrap(), r.render().unwrap());
        assert_eq!(*ids.last().unwrap(), layout.special_ids.text_eos);
    }

    #[test]
    fn slice_logits_lengths() {
        let l = build_layout(71, 27, 50).unwrap();
        let row: Vec<f64> = (0..150).map(f64::from).collect();
        let (g, a) = slice_logits(&row, &l).unwrap();
        assert_eq!((g.len(), a.len()), (100, 50));
        assert!(slice_logits(&row[..149], &l).is_err());

        let base = build_layout(10, 0, 4).unwrap();
        let row: Vec<f64> = (0..14).map(f64::from).collect();
        let (_, a) = slice_logits(&row, &base).unwrap();
        assert_eq!(a, &[10.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn unsupported_text_rejected() {
        assert!(matches!(
            encode_text("caf\u{e9}"),
            Err(Error::UnsupportedChar('\u{e9}'))
        ));
        assert!(encode_text("tab\there").is_err());
    }

    proptest! {
        #[test]
        fn slice_round_trip(row in proptest::collection::vec(-10.0f64..10.0, 150)) {
            let l = build_layout(71, 27, 50).unwrap();
            let (g, a) = slice_logits(&row, &l).unwrap();
            let joined: Vec<f64> = g.iter().chain(a).copied().collect();
            prop_assert_eq!(joined, row);
        }

        #[test]
        fn tokenizer_round_trip(s in "[ -~]{0,64}") {
            let l = VocabLayout::standard(false);
            let ids = encode_text(&s).unwrap();
            prop_assert_eq!(decode_text(&ids, &l).unwrap(), s);
        }

        #[test]
        fn prompt_tokens_injective(
            a in ("[ -~]{1,12}", "[ -~]{1,12}", any::<bool>()),
            b in ("[ -~]{1,12}", "[ -~]{1,12}", any::<bool>()),
        ) {
            let l = VocabLayout::standard(true);
            let make = |(d, t, emo): (String, String, bool)| {
                if emo { PromptRecord::emotion(d, t) } else { PromptRecord::pretrain(t) }
            };
            let (ra, rb) = (make(a), make(b));
            let (ia, ib) = (format_prompt(&ra, &l).unwrap(), format_prompt(&rb, &l).unwrap());
            prop_assert_eq!(ia == ib, ra == rb);
        }
    }
}
