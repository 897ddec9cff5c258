use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cosine, edit_distance, normalize_words, EmotionModel};
use crate::dataset::Transcriber;
use crate::error::{Error, Result};
use crate::toyspeech::EmotionCategory;

/// One synthesized utterance with its intended content and ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub text: String,
    pub emotion: EmotionCategory,
    /// Generated codec indices.
    pub generated: Vec<u32>,
    /// Ground-truth codec indices.
    pub reference: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub emotion: EmotionCategory,
    pub n: usize,
    pub wer: f64,
    pub emo_sim: f64,
    pub correct: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Corpus-level: total word edits over total reference words.
    pub wer: f64,
    pub emo_sim: f64,
    /// Mean per-category recall over `recall_categories`.
    pub recall: f64,
    pub recall_categories: Vec<EmotionCategory>,
    pub n_utterances: usize,
    pub per_category: Vec<CategoryReport>,
    /// Slot for an external quality scorer; absent by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.wer >= 0.0 && (-1.0..=1.0).contains(&self.emo_sim) && (0.0..=1.0).contains(&self.recall);
        if !ok {
            return Err(Error::Metric(format!(
                "report values out of range: wer {}, emo_sim {}, recall {}",
                self.wer, self.emo_sim, self.recall
            )));
        }
        Ok(())
    }
}

struct Scored {
    edits: usize,
    ref_words: usize,
    sim: f64,
    predicted: Option<EmotionCategory>,
}

/// Scores a batch. Recall covers the `included` categories present in the
/// batch; generated audio without content scores similarity 0 and counts
/// as misclassified.
pub fn evaluate(
    items: &[EvalItem],
    transcriber: &dyn Transcriber,
    emotion_model: &dyn EmotionModel,
    included: &[EmotionCategory],
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::Metric("nothing to evaluate".into()));
    }
    let scored: Vec<Scored> = items
        .par_iter()
        .map(|item| -> Result<Scored> {
            let reference = normalize_words(&item.text);
            if reference.is_empty() {
                return Err(Error::Metric(format!("`{}` has an empty reference text", item.id)));
            }
            let hypothesis = normalize_words(&transcriber.transcribe(&item.generated)?);
            let ref_emb = emotion_model.embed(&item.reference)?;
            let (sim, predicted) = match emotion_model.embed(&item.generated) {
                Ok(g) => (cosine(&g, &ref_emb)?, Some(emotion_model.classify(&item.generated)?)),
                Err(_) => (0.0, None),
            };
            Ok(Scored {
                edits: edit_distance(&reference, &hypothesis),
                ref_words: reference.len(),
                sim,
                predicted,
            })
        })
        .collect::<Result<_>>()?;

    let mut per_category = Vec::new();
    for emotion in EmotionCategory::ALL {
        let members: Vec<(&EvalItem, &Scored)> = items
            .iter()
            .zip(&scored)
            .filter(|(i, _)| i.emotion == emotion)
            .collect();
        if members.is_empty() {
            continue;
        }
        let edits: usize = members.iter().map(|(_, s)| s.edits).sum();
        let words: usize = members.iter().map(|(_, s)| s.ref_words).sum();
        per_category.push(CategoryReport {
            emotion,
            n: members.len(),
            wer: edits as f64 / words as f64,
            emo_sim: members.iter().map(|(_, s)| s.sim).sum::<f64>() / members.len() as f64,
            correct: members.iter().filter(|(_, s)| s.predicted == Some(emotion)).count(),
        });
    }
    let recall_rows: Vec<&CategoryReport> = per_category.iter().filter(|c| included.contains(&c.emotion)).collect();
    if recall_rows.is_empty() {
        return Err(Error::Metric(format!(
            "none of the recall categories {included:?} occur in the batch"
        )));
    }
    let recall = recall_rows.iter().map(|c| c.correct as f64 / c.n as f64).sum::<f64>() / recall_rows.len() as f64;
    let edits: usize = scored.iter().map(|s| s.edits).sum();
    let words: usize = scored.iter().map(|s| s.ref_words).sum();
    Ok(EvalReport {
        wer: edits as f64 / words as f64,
        emo_sim: scored.iter().map(|s| s.sim).sum::<f64>() / scored.len() as f64,
        recall,
        recall_categories: recall_rows.iter().map(|c| c.emotion).collect(),
        n_utterances: items.len(),
        per_category,
        quality: None,
        seed: None,
    })
}

/// Aligned comparison grid: one row per system, WER in percent.
pub fn render_table(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} {:>8} {:>8} {:>7}",
        "system", "WER(%)", "Emo_Sim", "Recall"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$} {:>8.2} {:>8.4} {:>7.3}",
            name,
            r.wer * 100.0,
            r.emo_sim,
            r.recall
        );
    }
    out
}
