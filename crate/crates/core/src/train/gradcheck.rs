//! Central finite differences against the analytic backward pass.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::AdamW;
use super::targets::{build_targets, teacher_forcing_plan};
use crate::dataset::ManifestEntry;
use crate::error::Result;
use crate::model::{LossWeights, Model, ModelConfig, SequencePlan, Variant, Weights};
use crate::toyspeech::{EmotionCategory, Phoneme};
use crate::vocab::{build_layout, TokenId};

/// Denominator floor for the relative error. Central differences at
/// epsilon 1e-4 carry an absolute error near 1e-11..1e-10, so entries whose
/// gradient is below the floor are effectively compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Check at most this many entries per tensor (random sample); `None`
    /// checks every entry.
    pub max_entries_per_tensor: Option<usize>,
    pub seed: u64,
    pub loss_weights: LossWeights,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_entries_per_tensor: None,
            seed: 0,
            loss_weights: LossWeights::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub max_abs_grad: f64,
    /// Largest |analytic - numeric| over all checked entries.
    pub max_abs_err: f64,
}

/// Variant as exercised by [`tiny_fixture`]: interleaved runs shrink to
/// 2:3 so the short streams alternate several times.
pub fn tiny_variant(variant: Variant) -> Variant {
    match variant {
        Variant::Interleaved { .. } => Variant::Interleaved {
            text_run: 2,
            audio_run: 3,
        },
        v => v,
    }
}

/// A 2-layer, d_model 16 model over a miniature vocabulary (8 text ids of
/// which 4 printable, 4 phonemes, 6 codec entries) with a two-utterance
/// batch built through the regular target pipeline. `warm_steps` Adam
/// updates move the weights off their initialization first.
pub fn tiny_fixture(variant: Variant, seed: u64, warm_steps: usize) -> Result<(Model, Vec<SequencePlan>)> {
    let variant = tiny_variant(variant);
    let with_phonemes = variant.uses_phoneme_layout();
    let layout = build_layout(8, if with_phonemes { 4 } else { 0 }, 8)?;
    let config = ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        ff_dim: 32,
        group_size: 3,
        variant,
        layout: layout.clone(),
        max_seq_len: 64,
    };
    let mut model = Model::new(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut plans = Vec::new();
    for (u, len) in [4usize, 3].into_iter().enumerate() {
        // printable ids 0..4 are ' ', '!', '"', '#'
        let text: String = (0..len).map(|_| (b' ' + rng.gen_range(0..4u8)) as char).collect();
        let phonemes = (0..len)
            .map(|_| Phoneme::new(rng.gen_range(0..4)))
            .collect::<Result<Vec<_>>>()?;
        let audio: Vec<u32> = (0..4 * len + u).map(|_| rng.gen_range(0..6)).collect();
        let entry = ManifestEntry::new(
            format!("tiny_{u}"),
            text,
            EmotionCategory::Neutral,
            "",
            1,
            phonemes,
            audio,
        );
        let streams = build_targets(&entry, variant, &layout, 3)?;
        let special = layout.special_ids;
        let prompt: Vec<TokenId> = vec![
            special.system,
            rng.gen_range(0..4),
            special.delimiter,
            rng.gen_range(0..4),
            special.text_eos,
        ];
        plans.push(teacher_forcing_plan(&prompt, &streams)?);
    }
    if warm_steps > 0 {
        let mut opt = AdamW::new(&model.weights, (0.9, 0.999), 1e-8, 0.0);
        for _ in 0..warm_steps {
            let (_, grads) = model.batch_loss(&plans, LossWeights::default(), true)?;
            opt.update(&mut model.weights, &grads.expect("gradients requested"), 1e-2);
        }
    }
    Ok((model, plans))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

pub fn grad_check(model: &Model, batch: &[SequencePlan], options: &GradCheckOptions) -> Result<GradCheckReport> {
    grad_check_with(model, batch, options, |_| {})
}

/// Like [`grad_check`], with a hook that may tamper with the analytic
/// gradients before comparison (used to prove the check has teeth).
pub fn grad_check_with(
    model: &Model,
    batch: &[SequencePlan],
    options: &GradCheckOptions,
    tamper: impl FnOnce(&mut Weights),
) -> Result<GradCheckReport> {
    let (report, grads) = model.batch_loss(batch, options.loss_weights, true)?;
    let mut grads = grads.expect("gradients requested");
    tamper(&mut grads);
    let eps = options.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let analytic = grads.tensors();
    let mut probes: Vec<(usize, usize)> = Vec::new();
    for (t, (_, g)) in analytic.iter().enumerate() {
        match options.max_entries_per_tensor {
            Some(cap) if g.len() > cap => {
                probes.extend(sample(&mut rng, g.len(), cap).into_iter().map(|i| (t, i)));
            }
            _ => probes.extend((0..g.len()).map(|i| (t, i))),
        }
    }

    let numeric: Vec<f64> = probes
        .par_chunks(64)
        .map(|chunk| -> Result<Vec<f64>> {
            let mut probe = model.clone();
            let mut out = Vec::with_capacity(chunk.len());
            for &(t, i) in chunk {
                let original = probe.weights.tensors()[t].1[i];
                let mut eval = |value: f64| -> Result<f64> {
                    probe.weights.tensors_mut()[t][i] = value;
                    Ok(probe.batch_loss(batch, options.loss_weights, false)?.0.total)
                };
                let plus = eval(original + eps)?;
                let minus = eval(original - eps)?;
                probe.weights.tensors_mut()[t][i] = original;
                out.push((plus - minus) / (2.0 * eps));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut tensors: Vec<TensorCheck> = analytic
        .iter()
        .map(|(name, _)| TensorCheck {
            name: name.clone(),
            checked: 0,
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        })
        .collect();
    let mut max_abs_grad: f64 = 0.0;
    let mut max_abs_err: f64 = 0.0;
    for (&(t, i), &n) in probes.iter().zip(&numeric) {
        let a = analytic[t].1[i];
        max_abs_grad = max_abs_grad.max(a.abs());
        max_abs_err = max_abs_err.max((a - n).abs());
        let err = relative_error(a, n);
        let entry = &mut tensors[t];
        entry.checked += 1;
        if err > entry.max_rel_err || entry.checked == 1 {
            entry.max_rel_err = err;
            entry.worst_index = i;
            entry.analytic = a;
            entry.numeric = n;
        }
    }
    let worst = tensors
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .cloned();
    Ok(GradCheckReport {
        loss: report.total,
        max_rel_err: worst.as_ref().map_or(0.0, |w| w.max_rel_err),
        worst_tensor: worst.map_or_else(String::new, |w| w.name),
        tensors,
        max_abs_grad,
        max_abs_err,
    })
}
