use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toyspeech::{duration_seconds, EmotionCategory, Phoneme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One utterance record. Field order is the JSONL field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub text: String,
    pub emotion: EmotionCategory,
    pub description: String,
    pub speaker: u8,
    pub phonemes: Vec<Phoneme>,
    /// Codec indices (layout independent).
    pub audio_tokens: Vec<u32>,
    pub wer: Option<f64>,
    pub split: Option<Split>,
    #[serde(default)]
    pub description_variants: Vec<String>,
}

impl ManifestEntry {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        emotion: EmotionCategory,
        description: impl Into<String>,
        speaker: u8,
        phonemes: Vec<Phoneme>,
        audio_tokens: Vec<u32>,
    ) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            emotion,
            description: description.into(),
            speaker,
            phonemes,
            audio_tokens,
            wer: None,
            split: None,
            description_variants: Vec::new(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        duration_seconds(self.audio_tokens.len())
    }

    /// Base description followed by its paraphrases.
    pub fn descriptions(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.description.as_str()).chain(self.description_variants.iter().map(String::as_str))
    }
}

pub fn to_jsonl(entries: &[ManifestEntry]) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(to_jsonl(entries)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| Error::Data {
            entry: format!("{}:{}", path.display(), n + 1),
            reason: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Entries assigned to `split`; all entries when none carry a split.
pub fn select_split(entries: &[ManifestEntry], split: Split) -> Vec<ManifestEntry> {
    if entries.iter().all(|e| e.split.is_none()) {
        return entries.to_vec();
    }
    entries.iter().filter(|e| e.split == Some(split)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyspeech::{g2p, toy_synthesize};

    #[test]
    fn jsonl_round_trip_and_field_order() {
        let ph = g2p("hi").unwrap();
        let audio = toy_synthesize(&ph, EmotionCategory::Sad);
        let mut e = ManifestEntry::new(
            "sad_00001",
            "Hi.",
            EmotionCategory::Sad,
            "Sounding low and weary.",
            3,
            ph,
            audio,
        );
        e.description_variants = vec!["Voicing low and weary.".into()];
        e.wer = Some(0.0);
        let text = to_jsonl(&[e.clone()]).unwrap();
        assert!(text.starts_with(r#"{"id":"sad_00001","text":"Hi.","emotion":"sad","description""#));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &[e.clone()]).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), vec![e.clone()]);
        assert_eq!(e.descriptions().count(), 2);
        assert!((e.duration_seconds() - 8.0 / 50.0).abs() < 1e-15);
    }
}
