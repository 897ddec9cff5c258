use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TEXT_RUN: usize = 12;
pub const DEFAULT_AUDIO_RUN: usize = 36;

/// Output structure of the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Audio token groups only.
    AudioOnly,
    /// Audio groups plus a phoneme stream predicted at the same step.
    ParallelPhoneme,
    /// Audio groups plus a text stream predicted at the same step.
    ParallelText,
    /// Phonemes first, then BOUNDARY, then audio, in one stream.
    SerialPhoneme,
    /// Text first, then BOUNDARY, then audio, in one stream.
    SerialText,
    /// Alternating runs of text and audio ids in one stream.
    Interleaved { text_run: usize, audio_run: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuidanceKind {
    Phoneme,
    Text,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::AudioOnly,
        Variant::ParallelPhoneme,
        Variant::ParallelText,
        Variant::SerialPhoneme,
        Variant::SerialText,
        Variant::Interleaved {
            text_run: DEFAULT_TEXT_RUN,
            audio_run: DEFAULT_AUDIO_RUN,
        },
    ];

    pub fn interleaved() -> Self {
        Variant::Interleaved {
            text_run: DEFAULT_TEXT_RUN,
            audio_run: DEFAULT_AUDIO_RUN,
        }
    }

    /// Variants that emit audio through the group head, one group per step.
    pub fn is_grouped(self) -> bool {
        matches!(
            self,
            Variant::AudioOnly | Variant::ParallelPhoneme | Variant::ParallelText
        )
    }

    pub fn is_parallel(self) -> bool {
        matches!(self, Variant::ParallelPhoneme | Variant::ParallelText)
    }

    pub fn is_serial(self) -> bool {
        matches!(self, Variant::SerialPhoneme | Variant::SerialText)
    }

    pub fn guidance(self) -> Option<GuidanceKind> {
        match self {
            Variant::AudioOnly => None,
            Variant::ParallelPhoneme | Variant::SerialPhoneme => Some(GuidanceKind::Phoneme),
            Variant::ParallelText | Variant::SerialText | Variant::Interleaved { .. } => Some(GuidanceKind::Text),
        }
    }

    /// Whether the layout carries the phoneme extension (and its EOS/PAD ids).
    pub fn uses_phoneme_layout(self) -> bool {
        self != Variant::AudioOnly
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::AudioOnly => "audio",
            Variant::ParallelPhoneme => "pp",
            Variant::ParallelText => "pt",
            Variant::SerialPhoneme => "sp",
            Variant::SerialText => "st",
            Variant::Interleaved { .. } => "i",
        }
    }

    pub fn validate(self) -> Result<()> {
        if let Variant::Interleaved { text_run, audio_run } = self {
            if text_run == 0 || audio_run == 0 {
                return Err(Error::Config("interleave runs must be positive".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Interleaved { text_run, audio_run }
                if (*text_run, *audio_run) != (DEFAULT_TEXT_RUN, DEFAULT_AUDIO_RUN) =>
            {
                write!(f, "i:{text_run}:{audio_run}")
            }
            v => f.write_str(v.short_name()),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `audio`, `pp`, `pt`, `sp`, `st`, `i` (or `i:<text>:<audio>`)
    /// and the long snake_case names.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let v = match lower.as_str() {
            "audio" | "audio_only" => Variant::AudioOnly,
            "pp" | "parallel_phoneme" => Variant::ParallelPhoneme,
            "pt" | "parallel_text" => Variant::ParallelText,
            "sp" | "serial_phoneme" => Variant::SerialPhoneme,
            "st" | "serial_text" => Variant::SerialText,
            "i" | "interleaved" => Variant::interleaved(),
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                match parts.as_slice() {
                    ["i", t, a] => Variant::Interleaved {
                        text_run: t.parse().map_err(|_| Error::Config(format!("bad text run in `{s}`")))?,
                        audio_run: a
                            .parse()
                            .map_err(|_| Error::Config(format!("bad audio run in `{s}`")))?,
                    },
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown variant `{s}` (expected audio, pp, pt, sp, st or i)"
                        )))
                    }
                }
            }
        };
        v.validate()?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        let custom: Variant = "i:4:8".parse().unwrap();
        assert_eq!(custom.to_string(), "i:4:8");
        assert!("i:0:8".parse::<Variant>().is_err());
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn default_interleave_ratio() {
        assert_eq!(
            Variant::interleaved(),
            Variant::Interleaved {
                text_run: 12,
                audio_run: 36
            }
        );
    }
}
