//! Three-step construction: validated text generation, speech synthesis,
//! and transcription-based WER filtering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clients::{ClientSuite, SpeechSynthesizer};
use super::manifest::ManifestEntry;
use super::validate::{validate_description, validate_text, Violation};
use crate::error::{Error, Result};
use crate::eval::wer_text;
use crate::toyspeech::{g2p, EmotionCategory};

pub const DEFAULT_WER_THRESHOLD: f64 = 0.05;
pub const DEFAULT_RETRY_CAP: usize = 32;
pub const SPEAKER_COUNT: u8 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub per_emotion: usize,
    pub emotions: Vec<EmotionCategory>,
    pub wer_threshold: f64,
    /// Generation attempts per requested pair before giving up.
    pub retry_cap: usize,
    pub speakers: u8,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(per_emotion: usize, seed: u64) -> Self {
        Self {
            per_emotion,
            emotions: EmotionCategory::ALL.to_vec(),
            wer_threshold: DEFAULT_WER_THRESHOLD,
            retry_cap: DEFAULT_RETRY_CAP,
            speakers: SPEAKER_COUNT,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.retry_cap == 0 || self.speakers == 0 {
            return Err(Error::Config("retry_cap and speakers must be positive".into()));
        }
        if self.wer_threshold.is_nan() || self.wer_threshold < 0.0 {
            return Err(Error::Config(format!(
                "wer_threshold {} is negative",
                self.wer_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Pairs accepted by the validators (step 1 output).
    pub generated: usize,
    pub text_rejections: usize,
    pub description_rejections: usize,
    /// Entries dropped by the WER filter.
    pub filtered: usize,
    pub filtered_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub entries: Vec<ManifestEntry>,
    pub report: PipelineReport,
}

struct Draft {
    id: String,
    emotion: EmotionCategory,
    text: String,
    description: String,
}

fn generate_pairs(config: &PipelineConfig, clients: &ClientSuite, report: &mut PipelineReport) -> Result<Vec<Draft>> {
    let mut drafts = Vec::new();
    for &emotion in &config.emotions {
        for request in 0..config.per_emotion {
            let mut accepted = None;
            let mut last: Vec<Violation> = Vec::new();
            for attempt in 0..config.retry_cap {
                let (text, description) = clients.text_generator.generate(emotion, request, attempt)?;
                let text_issues = validate_text(&text);
                let desc_issues = validate_description(&description);
                report.text_rejections += usize::from(!text_issues.is_empty());
                report.description_rejections += usize::from(!desc_issues.is_empty());
                if text_issues.is_empty() && desc_issues.is_empty() {
                    accepted = Some((text, description));
                    break;
                }
                last = text_issues.into_iter().chain(desc_issues).collect();
            }
            let Some((text, description)) = accepted else {
                return Err(Error::Pipeline(format!(
                    "{emotion} request {request}: no valid pair after {} attempts \
                     ({} text and {} description rejections so far; last violations {last:?})",
                    config.retry_cap, report.text_rejections, report.description_rejections
                )));
            };
            drafts.push(Draft {
                id: format!("{}_{:05}", emotion.name(), request),
                emotion,
                text,
                description,
            });
        }
    }
    report.generated = drafts.len();
    Ok(drafts)
}

fn synthesize(draft: &Draft, speaker: u8, synthesizer: &dyn SpeechSynthesizer) -> Result<ManifestEntry> {
    let phonemes = g2p(&draft.text)?;
    let audio = synthesizer.synthesize(&draft.text, &draft.description, draft.emotion, speaker)?;
    Ok(ManifestEntry::new(
        draft.id.clone(),
        draft.text.clone(),
        draft.emotion,
        draft.description.clone(),
        speaker,
        phonemes,
        audio,
    ))
}

/// Runs all three steps. Output is sorted by id and independent of the
/// worker count.
pub fn run_pipeline(config: &PipelineConfig, clients: &ClientSuite) -> Result<PipelineOutput> {
    config.validate()?;
    let mut report = PipelineReport::default();
    let drafts = generate_pairs(config, clients, &mut report)?;

    let scored: Vec<ManifestEntry> = drafts
        .par_iter()
        .enumerate()
        .map(|(i, draft)| -> Result<ManifestEntry> {
            let speaker = (i % config.speakers as usize) as u8 + 1;
            let mut entry = synthesize(draft, speaker, clients.speech_synthesizer.as_ref())?;
            let transcript = clients.transcriber.transcribe(&entry.audio_tokens)?;
            entry.wer = Some(wer_text(&entry.text, &transcript)?);
            Ok(entry)
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(scored.len());
    for entry in scored {
        if entry.wer.is_some_and(|w| w > config.wer_threshold) {
            report.filtered_ids.push(entry.id);
        } else {
            entries.push(entry);
        }
    }
    report.filtered = report.filtered_ids.len();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    report.filtered_ids.sort();
    Ok(PipelineOutput { entries, report })
}
