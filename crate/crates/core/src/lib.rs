//! Emotion-controllable discrete-token text-to-speech at desk scale.
//!
//! A causal transformer reads a character-level prompt (instruction,
//! free-form emotion description, text) and autoregressively emits audio
//! codec tokens, G per step through a group head, optionally alongside a
//! phoneme or text guidance stream. Everything external (G2P, codec, ASR,
//! emotion embedder, data-generation services) is replaced by deterministic
//! toy counterparts so the whole loop can be trained and checked on a CPU.

pub mod dataset;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod toyspeech;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
