use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toyspeech::{toy_classify, toy_emotion_embed, EmotionCategory};

/// Lowercased words with punctuation removed.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word-level Levenshtein distance (substitutions, insertions, deletions).
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Edit distance over reference length.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Metric("word error rate needs a non-empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// [`wer`] after normalizing both strings.
pub fn wer_text(reference: &str, hypothesis: &str) -> Result<f64> {
    wer(&normalize_words(reference), &normalize_words(hypothesis))
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", u.len(), v.len())));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Metric("cosine of a zero vector".into()));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv))
}

/// Emotion embedding and classification of an audio token sequence.
pub trait EmotionModel: Send + Sync {
    fn embed(&self, audio_tokens: &[u32]) -> Result<Vec<f64>>;
    fn classify(&self, audio_tokens: &[u32]) -> Result<EmotionCategory>;
}

/// Band-histogram embedder over toy codec indices.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyEmotionModel;

impl EmotionModel for ToyEmotionModel {
    fn embed(&self, audio_tokens: &[u32]) -> Result<Vec<f64>> {
        Ok(toy_emotion_embed(audio_tokens)?.to_vec())
    }

    fn classify(&self, audio_tokens: &[u32]) -> Result<EmotionCategory> {
        toy_classify(audio_tokens)
    }
}

/// An utterance's audio tokens keyed by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioSample {
    pub id: String,
    pub audio_tokens: Vec<u32>,
}

/// Cosine similarity of each generated/reference pair and their mean.
/// Pairs are matched by id; generated audio with no content scores 0.
pub fn emotion_similarity(
    generated: &[AudioSample],
    reference: &[AudioSample],
    model: &dyn EmotionModel,
) -> Result<(f64, Vec<f64>)> {
    if generated.is_empty() {
        return Err(Error::Metric("emotion similarity of an empty batch".into()));
    }
    let per_pair = generated
        .iter()
        .map(|g| {
            let r = reference
                .iter()
                .find(|r| r.id == g.id)
                .ok_or_else(|| Error::Metric(format!("no reference audio for `{}`", g.id)))?;
            let rv = model.embed(&r.audio_tokens)?;
            match model.embed(&g.audio_tokens) {
                Ok(gv) => cosine(&gv, &rv),
                Err(_) => Ok(0.0),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    Ok((mean, per_pair))
}

/// Emotion categories counted by default in recall.
pub const DEFAULT_RECALL_CATEGORIES: [EmotionCategory; 4] = [
    EmotionCategory::Angry,
    EmotionCategory::Happy,
    EmotionCategory::Sad,
    EmotionCategory::Neutral,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecall {
    pub emotion: EmotionCategory,
    pub correct: usize,
    pub total: usize,
}

impl CategoryRecall {
    pub fn rate(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

pub fn recall_breakdown(
    predictions: &[EmotionCategory],
    labels: &[EmotionCategory],
    included: &[EmotionCategory],
) -> Result<Vec<CategoryRecall>> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    included
        .iter()
        .map(|&emotion| {
            let (correct, total) = labels
                .iter()
                .zip(predictions)
                .filter(|(l, _)| **l == emotion)
                .fold((0, 0), |(c, t), (l, p)| (c + usize::from(l == p), t + 1));
            if total == 0 {
                return Err(Error::Metric(format!("no samples labelled `{emotion}`")));
            }
            Ok(CategoryRecall {
                emotion,
                correct,
                total,
            })
        })
        .collect()
}

/// Unweighted mean of per-category recall over the included categories.
pub fn recall_rate(
    predictions: &[EmotionCategory],
    labels: &[EmotionCategory],
    included: &[EmotionCategory],
) -> Result<f64> {
    if included.is_empty() {
        return Err(Error::Metric("recall needs at least one included category".into()));
    }
    let rows = recall_breakdown(predictions, labels, included)?;
    Ok(rows.iter().map(CategoryRecall::rate).sum::<f64>() / rows.len() as f64)
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Metric(format!(
            "correlation needs two equal-length vectors of at least 2 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric("correlation undefined for a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return pearson(x, y);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}
