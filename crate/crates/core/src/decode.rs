//! Greedy autoregressive generation with a repetition penalty on audio.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, Model, StepScores};
use crate::toyspeech::{Phoneme, AUDIO_PAD_INDEX};
use crate::vocab::{TokenId, VocabLayout};

pub const DEFAULT_REPETITION_PENALTY: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub repetition_penalty: f64,
    /// Forward passes allowed before giving up on an end marker.
    pub max_steps: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            repetition_penalty: DEFAULT_REPETITION_PENALTY,
            max_steps: 256,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetition_penalty.is_nan() || self.repetition_penalty < 1.0 || self.max_steps == 0 {
            return Err(Error::Config(format!(
                "need repetition_penalty >= 1 and max_steps >= 1, got {} and {}",
                self.repetition_penalty, self.max_steps
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Eos,
    MaxSteps,
    /// The context window filled before an end marker.
    ContextFull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Codec indices, with PAD and everything from AUDIO_EOS on removed.
    pub audio_tokens: Vec<u32>,
    /// Guidance ids in the joint vocabulary, without end marker, padding
    /// or the serial boundary.
    pub guidance_tokens: Vec<TokenId>,
    /// Forward passes taken.
    pub step_count: usize,
    pub stop_reason: StopReason,
    /// Step at which the guidance stream emitted its end marker (parallel
    /// variants only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_eos_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_eos_step: Option<usize>,
}

impl GenerationResult {
    /// Guidance tokens that are phonemes, as pseudo-phonemes.
    pub fn phonemes(&self, layout: &VocabLayout) -> Vec<Phoneme> {
        self.guidance_tokens
            .iter()
            .filter_map(|&id| layout.phoneme_index(id))
            .filter_map(|i| Phoneme::new(i as usize).ok())
            .collect()
    }
}

/// Divides positive scores and multiplies non-positive scores of every id
/// in `history` by `penalty`; each id is penalized once.
pub fn apply_repetition_penalty(scores: ArrayView1<f64>, history: &[usize], penalty: f64) -> Array1<f64> {
    let mut out = scores.to_owned();
    let mut seen = vec![false; out.len()];
    for &id in history {
        if id < out.len() && !seen[id] {
            seen[id] = true;
            let s = out[id];
            out[id] = if s > 0.0 { s / penalty } else { s * penalty };
        }
    }
    out
}

/// Argmax of penalized scores. Ties go to the lowest id, except that an
/// id outside `history` beats a tied history id; this only matters for raw
/// scores of exactly zero, which the penalty leaves unchanged.
fn penalized_argmax(adjusted: ArrayView1<f64>, history: &[usize]) -> usize {
    let mut in_history = vec![false; adjusted.len()];
    for &h in history {
        if h < in_history.len() {
            in_history[h] = true;
        }
    }
    let mut best = 0;
    for (i, &v) in adjusted.iter().enumerate() {
        let b = adjusted[best];
        if v > b || (v == b && in_history[best] && !in_history[i]) {
            best = i;
        }
    }
    best
}

/// Ids picked at one step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepChoice {
    Grouped {
        /// Joint-vocabulary audio ids, one per slot.
        audio: Vec<TokenId>,
        guidance: Option<TokenId>,
    },
    Single(TokenId),
}

/// Per-slot argmax after penalizing previously emitted audio; ties go to
/// the lowest id. `audio_history` holds codec indices. `forced_guidance`
/// overrides the guidance choice (used once its stream has ended).
pub fn greedy_step(
    scores: &StepScores,
    audio_history: &[usize],
    forced_guidance: Option<TokenId>,
    layout: &VocabLayout,
    penalty: f64,
) -> Result<StepChoice> {
    match scores {
        StepScores::Grouped { audio, guidance } => {
            let audio = audio
                .iter()
                .map(|slot| {
                    let adjusted = apply_repetition_penalty(slot.view(), audio_history, penalty);
                    layout.audio_id(penalized_argmax(adjusted.view(), audio_history) as u32)
                })
                .collect::<Result<Vec<_>>>()?;
            let guidance = match (guidance, forced_guidance) {
                (Some(_), Some(forced)) => Some(forced),
                (Some(g), None) => Some(argmax(g.view()) as TokenId),
                (None, _) => None,
            };
            Ok(StepChoice::Grouped { audio, guidance })
        }
        StepScores::Single(row) => {
            let offset = layout.audio_offset();
            let shifted: Vec<usize> = audio_history.iter().map(|&i| i + offset).collect();
            let adjusted = apply_repetition_penalty(row.view(), &shifted, penalty);
            Ok(StepChoice::Single(
                penalized_argmax(adjusted.view(), &shifted) as TokenId
            ))
        }
    }
}

/// Greedy generation from a prompt until the audio end marker, `max_steps`
/// forward passes, or a full context window.
pub fn generate(model: &Model, prompt: &[TokenId], config: &DecodeConfig) -> Result<GenerationResult> {
    config.validate()?;
    if prompt.is_empty() {
        return Err(Error::Shape("empty prompt".into()));
    }
    let layout = model.layout();
    if let Some(&bad) = prompt.iter().find(|&&id| id as usize >= layout.joint_size()) {
        return Err(Error::Partition {
            id: bad,
            partition: "joint vocabulary",
        });
    }
    let special = layout.special_ids;
    let audio_eos = layout.audio_index(special.audio_eos)? as usize;
    let mut inputs: Vec<Vec<TokenId>> = prompt.iter().map(|&id| vec![id]).collect();
    let mut result = GenerationResult {
        audio_tokens: Vec::new(),
        guidance_tokens: Vec::new(),
        step_count: 0,
        stop_reason: StopReason::MaxSteps,
        guidance_eos_step: None,
        audio_eos_step: None,
    };
    // every emitted audio index, padding included, for the penalty
    let mut history: Vec<usize> = Vec::new();
    let grouped = model.variant().is_grouped();

    while result.step_count < config.max_steps {
        if inputs.len() > model.config.max_seq_len {
            result.stop_reason = StopReason::ContextFull;
            break;
        }
        let x = model.embed_slots(&inputs)?;
        let row = model.logits_at(x.view(), &[inputs.len() - 1])?;
        let scores = model.step_logits(row.row(0).as_slice().expect("contiguous row"))?;
        let step = result.step_count;
        result.step_count += 1;
        let forced = result.guidance_eos_step.and(special.phoneme_pad);
        match greedy_step(&scores, &history, forced, layout, config.repetition_penalty)? {
            StepChoice::Grouped { audio, guidance } => {
                debug_assert!(grouped);
                if let Some(g) = guidance {
                    if result.guidance_eos_step.is_none() {
                        if Some(g) == special.phoneme_eos {
                            result.guidance_eos_step = Some(step);
                        } else if Some(g) != special.phoneme_pad {
                            result.guidance_tokens.push(g);
                        }
                    }
                }
                let indices: Vec<usize> = audio
                    .iter()
                    .map(|&id| layout.audio_index(id).map(|i| i as usize))
                    .collect::<Result<_>>()?;
                let eos_at = indices.iter().position(|&i| i == audio_eos);
                let kept = &indices[..eos_at.unwrap_or(indices.len())];
                result.audio_tokens.extend(
                    kept.iter()
                        .filter(|&&i| i != AUDIO_PAD_INDEX as usize)
                        .map(|&i| i as u32),
                );
                if eos_at.is_some() {
                    result.audio_eos_step = Some(step);
                    result.stop_reason = StopReason::Eos;
                    break;
                }
                history.extend(indices);
                let mut slot = audio;
                slot.extend(guidance);
                inputs.push(slot);
            }
            StepChoice::Single(id) => {
                if id == special.audio_eos {
                    result.audio_eos_step = Some(step);
                    result.stop_reason = StopReason::Eos;
                    break;
                }
                if layout.is_audio(id) {
                    let index = layout.audio_index(id)? as usize;
                    history.push(index);
                    if index != AUDIO_PAD_INDEX as usize {
                        result.audio_tokens.push(index as u32);
                    }
                } else if id != special.boundary {
                    result.guidance_tokens.push(id);
                }
                inputs.push(vec![id]);
            }
        }
    }
    Ok(result)
}

/// [`generate`] over many prompts in parallel; output order follows input.
pub fn generate_batch(model: &Model, prompts: &[Vec<TokenId>], config: &DecodeConfig) -> Result<Vec<GenerationResult>> {
    prompts.par_iter().map(|p| generate(model, p, config)).collect()
}
