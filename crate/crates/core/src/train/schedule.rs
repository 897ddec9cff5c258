use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LossWeights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Plain TTS prompts, no description.
    Pretrain,
    /// Emotion-description prompts.
    Finetune,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }

    pub fn default_peak_lr(self) -> f64 {
        match self {
            Phase::Pretrain => 1e-4,
            Phase::Finetune => 1e-5,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Phase::Pretrain),
            "finetune" => Ok(Phase::Finetune),
            other => Err(Error::Config(format!(
                "unknown phase `{other}` (expected pretrain or finetune)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Write `{phase}-{step}.ckpt` every this many steps (and at the end).
    pub checkpoint_every: Option<usize>,
}

impl TrainConfig {
    pub fn new(phase: Phase, total_steps: usize) -> Self {
        Self {
            phase,
            peak_lr: phase.default_peak_lr(),
            warmup_steps: 1000.min(total_steps),
            total_steps,
            batch_size: 6,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            weight_decay: 0.0,
            loss_weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config("peak learning rate must be positive".into()));
        }
        if self.total_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("total_steps and batch_size must be positive".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to the peak, then linear decay to 0 at `total_steps`.
pub fn lr_at(step: usize, config: &TrainConfig) -> Result<f64> {
    let (warmup, total, peak) = (config.warmup_steps, config.total_steps, config.peak_lr);
    if step > total {
        return Err(Error::Config(format!("step {step} outside the schedule [0, {total}]")));
    }
    if step <= warmup {
        if warmup == 0 {
            return Ok(peak);
        }
        return Ok(peak * (step as f64 / warmup as f64));
    }
    Ok(peak * ((total - step) as f64 / (total - warmup) as f64))
}
