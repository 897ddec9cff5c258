//! Per-emotion count and duration statistics.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::ManifestEntry;
use crate::error::{Error, Result};
use crate::toyspeech::{EmotionCategory, EMOTION_COUNT, TOKENS_PER_SECOND};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionStats {
    pub emotion: EmotionCategory,
    pub count: usize,
    pub hours: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub rows: Vec<EmotionStats>,
    pub total_count: usize,
    pub total_hours: f64,
}

impl DatasetStats {
    pub fn row(&self, emotion: EmotionCategory) -> &EmotionStats {
        &self.rows[emotion.index()]
    }

    /// Aligned text table with a totals row, hours to two decimals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>7} {:>12}", "emotion", "count", "duration_h");
        for r in &self.rows {
            let _ = writeln!(out, "{:<10} {:>7} {:>12.2}", r.emotion.name(), r.count, r.hours);
        }
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>12.2}",
            "total", self.total_count, self.total_hours
        );
        out
    }
}

/// Statistics over (emotion, duration in seconds) pairs. Each category is
/// summed in seconds before converting, so totals carry one rounding step.
pub fn stats_from_durations(items: impl IntoIterator<Item = (EmotionCategory, f64)>) -> DatasetStats {
    let mut counts = [0usize; EMOTION_COUNT];
    let mut seconds = [0.0f64; EMOTION_COUNT];
    for (e, s) in items {
        counts[e.index()] += 1;
        seconds[e.index()] += s;
    }
    let rows: Vec<EmotionStats> = EmotionCategory::ALL
        .iter()
        .map(|&e| EmotionStats {
            emotion: e,
            count: counts[e.index()],
            hours: seconds[e.index()] / 3600.0,
        })
        .collect();
    DatasetStats {
        total_count: counts.iter().sum(),
        total_hours: seconds.iter().sum::<f64>() / 3600.0,
        rows,
    }
}

/// Statistics over (emotion, audio token count) pairs at 50 tokens/s.
pub fn stats_from_token_counts(items: impl IntoIterator<Item = (EmotionCategory, usize)>) -> DatasetStats {
    stats_from_durations(items.into_iter().map(|(e, n)| (e, n as f64 / TOKENS_PER_SECOND)))
}

pub fn stats(entries: &[ManifestEntry]) -> DatasetStats {
    stats_from_token_counts(entries.iter().map(|e| (e.emotion, e.audio_tokens.len())))
}

/// Reads an external JSONL manifest carrying an `emotion` label and either
/// a `duration` in seconds or an `audio_tokens` list per line.
pub fn load_external_durations(path: impl AsRef<Path>) -> Result<Vec<(EmotionCategory, f64)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Data {
            entry: format!("{}:{}", path.display(), n + 1),
            reason,
        };
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let emotion: EmotionCategory = v
            .get("emotion")
            .and_then(|e| e.as_str())
            .ok_or_else(|| bad("missing `emotion`".into()))?
            .parse()
            .map_err(|e: Error| bad(e.to_string()))?;
        let seconds = if let Some(d) = v.get("duration").or_else(|| v.get("duration_seconds")) {
            d.as_f64().ok_or_else(|| bad("`duration` is not a number".into()))?
        } else if let Some(tokens) = v.get("audio_tokens").and_then(|t| t.as_array()) {
            tokens.len() as f64 / TOKENS_PER_SECOND
        } else {
            return Err(bad("neither `duration` nor `audio_tokens` present".into()));
        };
        out.push((emotion, seconds));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn empty_manifest_is_all_zero() {
        let s = stats(&[]);
        assert_eq!(s.total_count, 0);
        assert_eq!(s.total_hours, 0.0);
        assert_eq!(s.rows.len(), 7);
        assert!(s.rows.iter().all(|r| r.count == 0 && r.hours == 0.0));
        assert!(s.render().contains("total"));
    }

    #[test]
    fn token_counts_convert_at_fifty_hertz() {
        let s = stats_from_token_counts([(EmotionCategory::Sad, 180_000), (EmotionCategory::Sad, 90_000)]);
        assert_eq!(s.row(EmotionCategory::Sad).count, 2);
        assert!((s.row(EmotionCategory::Sad).hours - 1.5).abs() < 1e-12);
    }

    #[test]
    fn external_loader_accepts_both_duration_forms() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"emotion":"angry","duration":3600}}"#).unwrap();
        writeln!(f, r#"{{"emotion":"Happy","audio_tokens":[1,2,3,4,5]}}"#).unwrap();
        let items = load_external_durations(f.path()).unwrap();
        let s = stats_from_durations(items);
        assert_eq!(s.total_count, 2);
        assert!((s.row(EmotionCategory::Angry).hours - 1.0).abs() < 1e-12);
        assert!((s.row(EmotionCategory::Happy).hours - 0.1 / 3600.0).abs() < 1e-15);
    }
}
