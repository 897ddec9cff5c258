//! Teacher-forcing targets, the multi-stream objective, optimizer and
//! learning-rate schedule.

pub mod fit;
pub mod gradcheck;
pub mod schedule;
pub mod targets;

pub use fit::{
    fit, multi_stream_loss, prepare, prompt_records, AdamW, FitHooks, PreparedItem, StepCallback, StepRecord,
    TrainingLog,
};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckOptions, GradCheckReport, TensorCheck};
pub use schedule::{lr_at, Phase, TrainConfig};
pub use targets::{
    build_targets, group_audio, guidance_ids, interleave, split_serial, teacher_forcing_plan, TokenStreams,
};
