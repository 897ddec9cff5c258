//! Service boundary of the dataset pipeline. Each slot has a deterministic
//! toy implementation; [`ExternalService`] is the adapter slot for remote
//! generators, synthesizers and recognizers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::textgen::{generate_description, generate_text, TextStyle, PARTICIPLES};
use crate::error::{Error, Result};
use crate::toyspeech::{g2p, toy_synthesize, toy_transcribe, EmotionCategory};

/// Produces (text, description) pairs for an emotion.
pub trait TextGenerator: Send + Sync {
    /// `request` numbers the pair within its emotion, `attempt` the retry.
    fn generate(&self, emotion: EmotionCategory, request: usize, attempt: usize) -> Result<(String, String)>;
}

/// Renders speech tokens for a text under an emotion description.
pub trait SpeechSynthesizer: Send + Sync {
    fn synthesize(&self, text: &str, description: &str, emotion: EmotionCategory, speaker: u8) -> Result<Vec<u32>>;
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, audio_tokens: &[u32]) -> Result<String>;
}

pub trait Paraphraser: Send + Sync {
    fn rephrase(&self, description: &str, k: usize) -> Result<Vec<String>>;
}

/// Seeded template generator; cycles through the three text styles.
#[derive(Clone, Debug)]
pub struct TemplateTextGenerator {
    pub seed: u64,
}

impl TextGenerator for TemplateTextGenerator {
    fn generate(&self, emotion: EmotionCategory, request: usize, attempt: usize) -> Result<(String, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((emotion.index() as u64) << 48) | ((request as u64) << 8) | attempt as u64);
        let style = TextStyle::ALL[request % TextStyle::ALL.len()];
        let text = generate_text(emotion, style, &mut rng);
        let description = generate_description(emotion, &mut rng);
        Ok((text, description))
    }
}

/// G2P followed by the emotion-banded toy codec.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToySynthesizer;

impl SpeechSynthesizer for ToySynthesizer {
    fn synthesize(&self, text: &str, _description: &str, emotion: EmotionCategory, _speaker: u8) -> Result<Vec<u32>> {
        Ok(toy_synthesize(&g2p(text)?, emotion))
    }
}

/// Corrupting synthesizer for filter tests: drops the first word of every
/// text whose byte sum is divisible by `modulus` (`1` corrupts everything).
#[derive(Clone, Copy, Debug)]
pub struct WordDroppingSynthesizer {
    pub modulus: usize,
}

impl WordDroppingSynthesizer {
    pub fn corrupts(&self, text: &str) -> bool {
        let sum: usize = text.bytes().map(usize::from).sum();
        self.modulus > 0 && sum.is_multiple_of(self.modulus)
    }
}

impl SpeechSynthesizer for WordDroppingSynthesizer {
    fn synthesize(&self, text: &str, description: &str, emotion: EmotionCategory, speaker: u8) -> Result<Vec<u32>> {
        if !self.corrupts(text) {
            return ToySynthesizer.synthesize(text, description, emotion, speaker);
        }
        let rest = text.split_once(' ').map_or("", |(_, rest)| rest);
        ToySynthesizer.synthesize(rest, description, emotion, speaker)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ToyTranscriber;

impl Transcriber for ToyTranscriber {
    fn transcribe(&self, audio_tokens: &[u32]) -> Result<String> {
        Ok(toy_transcribe(audio_tokens))
    }
}

/// Rotates the opening participle through a fixed ring; variant `i` uses
/// the participle `i` places further along.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleParaphraser;

impl Paraphraser for RuleParaphraser {
    fn rephrase(&self, description: &str, k: usize) -> Result<Vec<String>> {
        let trimmed = description.trim();
        let (first, rest) = trimmed.split_once(' ').unwrap_or((trimmed, ""));
        let Some(pos) = PARTICIPLES.iter().position(|p| p.eq_ignore_ascii_case(first)) else {
            return Err(Error::Client(format!(
                "no paraphrase rule for description opening `{first}`"
            )));
        };
        let k = k.min(PARTICIPLES.len() - 1);
        Ok((1..=k)
            .map(|i| format!("{} {rest}", PARTICIPLES[(pos + i) % PARTICIPLES.len()]))
            .collect())
    }
}

pub struct ClientSuite {
    pub text_generator: Box<dyn TextGenerator>,
    pub speech_synthesizer: Box<dyn SpeechSynthesizer>,
    pub transcriber: Box<dyn Transcriber>,
    pub paraphraser: Box<dyn Paraphraser>,
}

impl ClientSuite {
    pub fn toy(seed: u64) -> Self {
        Self {
            text_generator: Box::new(TemplateTextGenerator { seed }),
            speech_synthesizer: Box::new(ToySynthesizer),
            transcriber: Box::new(ToyTranscriber),
            paraphraser: Box::new(RuleParaphraser),
        }
    }
}

/// Endpoint settings for a remote service, read from a flat `key = value`
/// file (`#` starts a comment).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ServiceConfig {
    pub values: BTreeMap<String, String>,
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn endpoint(&self) -> Result<&str> {
        self.get("endpoint")
            .ok_or_else(|| Error::Config("service config lacks `endpoint`".into()))
    }
}

/// Adapter slot for remote services. This build carries no network
/// transport, so every call reports the service as unavailable after
/// validating its configuration.
#[derive(Clone, Debug)]
pub struct ExternalService {
    pub config: ServiceConfig,
}

impl ExternalService {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        config.endpoint()?;
        Ok(Self { config })
    }

    fn unavailable<T>(&self, what: &str) -> Result<T> {
        Err(Error::Client(format!(
            "{what}: no transport for endpoint `{}` in this build",
            self.config.get("endpoint").unwrap_or_default()
        )))
    }
}

impl TextGenerator for ExternalService {
    fn generate(&self, _: EmotionCategory, _: usize, _: usize) -> Result<(String, String)> {
        self.unavailable("text generation")
    }
}

impl SpeechSynthesizer for ExternalService {
    fn synthesize(&self, _: &str, _: &str, _: EmotionCategory, _: u8) -> Result<Vec<u32>> {
        self.unavailable("speech synthesis")
    }
}

impl Transcriber for ExternalService {
    fn transcribe(&self, _: &[u32]) -> Result<String> {
        self.unavailable("transcription")
    }
}

impl Paraphraser for ExternalService {
    fn rephrase(&self, _: &str, _: usize) -> Result<Vec<String>> {
        self.unavailable("paraphrasing")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paraphraser_is_deterministic() {
        let p = RuleParaphraser;
        let a = p.rephrase("Conveying a contagious, joyful atmosphere.", 2).unwrap();
        assert_eq!(a, p.rephrase("Conveying a contagious, joyful atmosphere.", 2).unwrap());
        assert_eq!(
            a,
            vec![
                "Expressing a contagious, joyful atmosphere.".to_string(),
                "Evoking a contagious, joyful atmosphere.".to_string()
            ]
        );
        assert!(p.rephrase("Happy.", 2).is_err());
        assert!(p.rephrase("Carrying calm.", 0).unwrap().is_empty());
    }

    #[test]
    fn generator_is_seeded() {
        let g = TemplateTextGenerator { seed: 9 };
        let a = g.generate(EmotionCategory::Sad, 3, 0).unwrap();
        assert_eq!(a, g.generate(EmotionCategory::Sad, 3, 0).unwrap());
        assert_ne!(a, g.generate(EmotionCategory::Sad, 3, 1).unwrap());
    }

    #[test]
    fn service_config_parsing() {
        let cfg = ServiceConfig::parse("# remote\nendpoint = https://example.invalid/v1\napi_key_env=KEY # env var\n")
            .unwrap();
        assert_eq!(cfg.endpoint().unwrap(), "https://example.invalid/v1");
        assert_eq!(cfg.get("api_key_env"), Some("KEY"));
        assert!(ServiceConfig::parse("no equals sign").is_err());
        let svc = ExternalService::new(cfg).unwrap();
        assert!(matches!(svc.transcribe(&[1, 2]), Err(Error::Client(_))));
        assert!(ExternalService::new(ServiceConfig::default()).is_err());
    }
}
