use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, Variant};
use crate::error::{Error, Result};
use crate::vocab::VocabLayout;

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON container: format version, run metadata, config and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub phase: String,
    pub step: usize,
    pub seed: u64,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: Model, phase: impl Into<String>, step: usize, seed: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            phase: phase.into(),
            step,
            seed,
            model,
        }
    }

    /// `{phase}-{step}.ckpt`
    pub fn file_name(phase: &str, step: usize) -> String {
        format!("{phase}-{step}.ckpt")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let ckpt: Self = serde_json::from_slice(&bytes)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint version {}",
                path.display(),
                ckpt.version
            )));
        }
        ckpt.model.config.validate()?;
        let expected = super::Weights::zeros(&ckpt.model.config);
        let shapes_match = expected
            .tensors()
            .iter()
            .zip(ckpt.model.weights.tensors())
            .all(|((_, a), (_, b))| a.len() == b.len())
            && expected.tensors().len() == ckpt.model.weights.tensors().len();
        if !shapes_match {
            return Err(Error::Checkpoint(format!(
                "{}: parameter shapes do not match the stored config",
                path.display()
            )));
        }
        Ok(ckpt)
    }

    /// Rejects checkpoints whose layout or variant differ from what the
    /// caller is about to feed them.
    pub fn ensure_compatible(&self, layout: &VocabLayout, variant: Option<Variant>) -> Result<()> {
        if &self.model.config.layout != layout {
            return Err(Error::Checkpoint(
                "checkpoint vocabulary layout differs from the requested layout".into(),
            ));
        }
        if let Some(v) = variant {
            if v != self.model.config.variant {
                return Err(Error::Checkpoint(format!(
                    "checkpoint variant {} differs from requested {v}",
                    self.model.config.variant
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ModelConfig::toy(Variant::ParallelPhoneme);
        config.d_model = 8;
        config.n_heads = 2;
        config.ff_dim = 8;
        config.max_seq_len = 16;
        let model = Model::new(config, 4).unwrap();
        let ckpt = Checkpoint::new(model, "pretrain", 10, 4);
        let path = dir.path().join(Checkpoint::file_name("pretrain", 10));
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        assert!(back
            .ensure_compatible(&VocabLayout::standard(true), Some(Variant::ParallelPhoneme))
            .is_ok());
        assert!(back.ensure_compatible(&VocabLayout::standard(false), None).is_err());
        assert!(back
            .ensure_compatible(&VocabLayout::standard(true), Some(Variant::SerialPhoneme))
            .is_err());
    }
}
