//! Toy causal transformer over the joint vocabulary, with the grouped audio
//! head and every output-structure variant.

mod checkpoint;
mod network;
mod variant;
mod weights;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use network::{argmax, LossReport, LossWeights, PlannedOutput, SequencePlan, StepTarget, StreamAccuracy};
pub use variant::{GuidanceKind, Variant, DEFAULT_AUDIO_RUN, DEFAULT_TEXT_RUN};
pub use weights::{BlockWeights, GroupHead, Weights};

use crate::error::{Error, Result};
use crate::vocab::{slice_logits, TokenId, VocabLayout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub group_size: usize,
    pub variant: Variant,
    pub layout: VocabLayout,
    pub max_seq_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, d_model 32, group size 3, standard
    /// layout for the variant.
    pub fn toy(variant: Variant) -> Self {
        Self {
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            ff_dim: 64,
            group_size: 3,
            variant,
            layout: VocabLayout::standard(variant.uses_phoneme_layout()),
            max_seq_len: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ff_dim", self.ff_dim),
            ("group_size", self.group_size),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        self.variant.validate()?;
        self.layout.validate()?;
        if self.variant.uses_phoneme_layout() != self.layout.has_phonemes() {
            return Err(Error::Config(format!(
                "variant {} {} a phoneme-extended layout",
                self.variant,
                if self.variant.uses_phoneme_layout() {
                    "requires"
                } else {
                    "does not use"
                }
            )));
        }
        Ok(())
    }
}

/// Scores produced at one decode position.
#[derive(Clone, Debug, PartialEq)]
pub enum StepScores {
    /// G slot score vectors over the codec (|V_a| each) and, for parallel
    /// variants, scores over the guidance slice.
    Grouped {
        audio: Vec<Array1<f64>>,
        guidance: Option<Array1<f64>>,
    },
    /// One distribution over the whole joint vocabulary.
    Single(Array1<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub weights: Weights,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = Weights::init(&config, seed);
        Ok(Self { config, weights })
    }

    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let weights = Weights::zeros(&config);
        Ok(Self { config, weights })
    }

    pub fn layout(&self) -> &VocabLayout {
        &self.config.layout
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Input embedding for a decode step: the mean of the group's audio
    /// embeddings, with the guidance embedding joining the mean for parallel
    /// variants.
    pub fn embed_step(&self, audio_group: &[TokenId], guidance: Option<TokenId>) -> Result<Array1<f64>> {
        let ids = self.step_input_ids(audio_group, guidance)?;
        Ok(self.embed_slots(&[ids])?.row(0).to_owned())
    }

    /// Validated id list averaged for one grouped decode step.
    pub fn step_input_ids(&self, audio_group: &[TokenId], guidance: Option<TokenId>) -> Result<Vec<TokenId>> {
        let layout = &self.config.layout;
        if !self.config.variant.is_grouped() {
            return Err(Error::Config(format!(
                "variant {} does not decode audio groups",
                self.config.variant
            )));
        }
        if audio_group.len() != self.config.group_size {
            return Err(Error::Shape(format!(
                "audio group of {} ids, expected {}",
                audio_group.len(),
                self.config.group_size
            )));
        }
        for &id in audio_group {
            layout.audio_index(id)?;
        }
        let mut ids = audio_group.to_vec();
        match (self.config.variant.is_parallel(), guidance) {
            (true, Some(id)) if layout.is_guidance(id) => ids.push(id),
            (true, Some(id)) => {
                return Err(Error::Partition {
                    id,
                    partition: "guidance",
                })
            }
            (true, None) => {
                return Err(Error::Validation(
                    "parallel variants need a guidance id at every step".into(),
                ))
            }
            (false, Some(_)) => return Err(Error::Validation("audio-only variant takes no guidance id".into())),
            (false, None) => {}
        }
        Ok(ids)
    }

    /// Projects audio logits (|V_a|) into a |V_a| x G score matrix; column
    /// `j` holds the pre-softmax scores of slot `j`.
    pub fn project_group(&self, audio_logits: &[f64]) -> Result<Array2<f64>> {
        let head = self
            .weights
            .group_head
            .as_ref()
            .ok_or_else(|| Error::Config(format!("variant {} has no group head", self.config.variant)))?;
        project_with(head, audio_logits)
    }

    /// Splits a logits row per the variant and applies the group head.
    pub fn step_logits(&self, row: &[f64]) -> Result<StepScores> {
        let layout = &self.config.layout;
        let (guidance, audio) = slice_logits(row, layout)?;
        if !self.config.variant.is_grouped() {
            return Ok(StepScores::Single(Array1::from(row.to_vec())));
        }
        let scores = self.project_group(audio)?;
        let slots = scores.columns().into_iter().map(|c| c.to_owned()).collect();
        Ok(StepScores::Grouped {
            audio: slots,
            guidance: self
                .config
                .variant
                .is_parallel()
                .then(|| Array1::from(guidance.to_vec())),
        })
    }
}

pub(crate) fn project_with(head: &GroupHead, audio_logits: &[f64]) -> Result<Array2<f64>> {
    let va = head.audio_size();
    if audio_logits.len() != va {
        return Err(Error::Shape(format!(
            "audio logits of length {}, group head expects {va}",
            audio_logits.len()
        )));
    }
    let flat = Array1::from(audio_logits.to_vec()).dot(&head.weight) + &head.bias;
    let g = head.group_size();
    Ok(Array2::from_shape_fn((va, g), |(v, j)| flat[j * va + v]))
}
