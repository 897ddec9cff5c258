//! Emotion-labelled corpus model and its construction pipeline.

pub mod augment;
pub mod clients;
pub mod corpora;
pub mod manifest;
pub mod pipeline;
pub mod split;
pub mod stats;
pub mod textgen;
pub mod validate;

pub use augment::{augment_descriptions, AugmentShortfall, DEFAULT_PARAPHRASES};
pub use clients::{
    ClientSuite, ExternalService, Paraphraser, RuleParaphraser, ServiceConfig, SpeechSynthesizer,
    TemplateTextGenerator, TextGenerator, ToySynthesizer, ToyTranscriber, Transcriber, WordDroppingSynthesizer,
};
pub use corpora::{hard_case_corpus, overfit_corpus, reference_shaped_token_counts};
pub use manifest::{read_manifest, select_split, to_jsonl, write_manifest, ManifestEntry, Split};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput, PipelineReport};
pub use split::{split, SplitSizes};
pub use stats::{stats, stats_from_durations, stats_from_token_counts, DatasetStats, EmotionStats};
pub use validate::{validate_description, validate_text, Violation};
