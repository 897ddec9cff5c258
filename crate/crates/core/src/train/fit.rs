use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{lr_at, Phase, TrainConfig};
use super::targets::{build_targets, teacher_forcing_plan, TokenStreams};
use crate::dataset::ManifestEntry;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, LossReport, LossWeights, Model, SequencePlan, Weights};
use crate::vocab::{format_prompt, PromptRecord, TokenId, VocabLayout};

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    betas: (f64, f64),
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(weights: &Weights, betas: (f64, f64), eps: f64, weight_decay: f64) -> Self {
        let zeros = || -> Vec<Vec<f64>> { weights.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect() };
        Self {
            betas,
            eps,
            weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, weights: &mut Weights, grads: &Weights, lr: f64) {
        self.step += 1;
        let (b1, b2) = self.betas;
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((p, (_, g)), m), v) in weights
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                p[i] -= lr * (update + self.weight_decay * p[i]);
            }
        }
    }
}

/// One utterance ready for teacher forcing: a prompt per description
/// choice and its target streams.
#[derive(Clone, Debug)]
pub struct PreparedItem {
    pub id: String,
    pub prompts: Vec<Vec<TokenId>>,
    pub streams: TokenStreams,
}

impl PreparedItem {
    pub fn plan(&self, choice: usize) -> Result<SequencePlan> {
        teacher_forcing_plan(&self.prompts[choice % self.prompts.len()], &self.streams)
    }
}

/// Prompt records for an entry: pretrain uses the plain instruction; finetune
/// offers the base description plus its paraphrases.
pub fn prompt_records(entry: &ManifestEntry, phase: Phase) -> Vec<PromptRecord> {
    match phase {
        Phase::Pretrain => vec![PromptRecord::pretrain(entry.text.clone())],
        Phase::Finetune => entry
            .descriptions()
            .map(|d| PromptRecord::emotion(d, entry.text.clone()))
            .collect(),
    }
}

pub fn prepare(entries: &[ManifestEntry], model: &Model, phase: Phase) -> Result<Vec<PreparedItem>> {
    let layout: &VocabLayout = model.layout();
    entries
        .iter()
        .map(|e| {
            let prompts = prompt_records(e, phase)
                .iter()
                .map(|r| format_prompt(r, layout))
                .collect::<Result<Vec<_>>>()
                .map_err(|err| Error::Data {
                    entry: e.id.clone(),
                    reason: err.to_string(),
                })?;
            let streams = build_targets(e, model.variant(), layout, model.config.group_size)?;
            let item = PreparedItem {
                id: e.id.clone(),
                prompts,
                streams,
            };
            let longest = item
                .prompts
                .iter()
                .map(|p| p.len() + item.streams.decode_steps() - 1)
                .max()
                .unwrap_or(0);
            if longest > model.config.max_seq_len {
                return Err(Error::Data {
                    entry: e.id.clone(),
                    reason: format!(
                        "sequence of {longest} positions exceeds max_seq_len {}",
                        model.config.max_seq_len
                    ),
                });
            }
            Ok(item)
        })
        .collect()
}

/// Mean cross-entropy per stream; errors when every slot is masked.
pub fn multi_stream_loss(model: &Model, plans: &[SequencePlan], weights: LossWeights) -> Result<LossReport> {
    let (report, _) = model.batch_loss(plans, weights, false)?;
    if report.unmasked_slots() == 0 {
        return Err(Error::Validation("every target slot in the batch is masked".into()));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guidance_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequence_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<StepRecord>,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainingLog {
    /// JSON-lines, one record per step.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_jsonl()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Called after every optimizer step.
pub type StepCallback<'a> = Box<dyn FnMut(&StepRecord, &Model) + 'a>;

/// Where checkpoints go and who hears about each step.
#[derive(Default)]
pub struct FitHooks<'a> {
    pub checkpoint_dir: Option<PathBuf>,
    pub on_step: Option<StepCallback<'a>>,
}

/// Per-item stream: the description choice for item `index` at `step`
/// depends only on (seed, step, index), not on batch composition.
fn item_rng(seed: u64, step: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(((step as u64) << 32) | index as u64);
    rng
}

/// Mini-batch training with the warmup/decay schedule. Batches walk a
/// seeded permutation of the dataset, reshuffled every epoch.
pub fn fit(
    model: &mut Model,
    dataset: &[ManifestEntry],
    config: &TrainConfig,
    mut hooks: FitHooks<'_>,
) -> Result<TrainingLog> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let items = prepare(dataset, model, config.phase)?;
    let mut optimizer = AdamW::new(&model.weights, config.betas, config.adam_eps, config.weight_decay);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;
    let mut log = TrainingLog::default();

    for step in 1..=config.total_steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size.min(items.len()) {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let plans: Vec<SequencePlan> = batch
            .iter()
            .map(|&i| {
                let item = &items[i];
                let choice = item_rng(config.seed, step, i).gen_range(0..item.prompts.len());
                item.plan(choice)
            })
            .collect::<Result<_>>()?;

        let (report, grads) = model.batch_loss(&plans, config.loss_weights, true)?;
        let grads = grads.expect("gradients requested");
        if !report.total.is_finite() || !grads.all_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                items: batch.iter().map(|&i| items[i].id.clone()).collect(),
            });
        }
        let lr = lr_at(step, config)?;
        optimizer.update(&mut model.weights, &grads, lr);

        let record = StepRecord {
            step,
            lr,
            loss: report.total,
            audio_loss: report.audio,
            guidance_loss: report.guidance,
            sequence_loss: report.sequence,
        };
        if let Some(cb) = hooks.on_step.as_mut() {
            cb(&record, model);
        }
        log.records.push(record);

        if let Some(dir) = &hooks.checkpoint_dir {
            let due = config.checkpoint_every.is_some_and(|n| n > 0 && step % n == 0);
            if due || step == config.total_steps {
                let path = dir.join(Checkpoint::file_name(config.phase.name(), step));
                Checkpoint::new(model.clone(), config.phase.name(), step, config.seed).save(&path)?;
                log.checkpoints.push(path);
            }
        }
    }
    Ok(log)
}
