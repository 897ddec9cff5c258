//! Intelligibility and emotion metrics, reports, and the judge audit.

pub mod audit;
pub mod metrics;
pub mod report;

pub use audit::{
    judge_stability, mos_and_balanced_select, synthetic_audit, AuditConfig, AuditResult, BalancedSelection, RaterTable,
    StabilityReport,
};
pub use metrics::{
    average_ranks, cosine, edit_distance, emotion_similarity, normalize_words, pearson, recall_breakdown, recall_rate,
    spearman, wer, wer_text, AudioSample, EmotionModel, ToyEmotionModel, DEFAULT_RECALL_CATEGORIES,
};
pub use report::{evaluate, render_table, CategoryReport, EvalItem, EvalReport};
