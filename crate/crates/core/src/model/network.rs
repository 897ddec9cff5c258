//! Pre-norm causal transformer with hand-written backward pass, plus the
//! output heads and the teacher-forced cross-entropy.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weights::{BlockWeights, Weights};
use super::Model;
use crate::error::{Error, Result};
use crate::vocab::TokenId;

const NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Inputs and targets for one teacher-forced sequence.
///
/// `inputs[p]` lists the ids averaged into the embedding at position `p`
/// (one id for prompt positions, the previous group plus optional guidance id
/// for grouped decode steps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub inputs: Vec<Vec<TokenId>>,
    pub outputs: Vec<PlannedOutput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedOutput {
    pub position: usize,
    pub target: StepTarget,
}

/// Targets read from one position. `None` marks a masked slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepTarget {
    Grouped {
        audio: Vec<Option<TokenId>>,
        guidance: Option<TokenId>,
    },
    Single(Option<TokenId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub audio: f64,
    pub guidance: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            audio: 1.0,
            guidance: 1.0,
        }
    }
}

/// Per-stream mean cross-entropies for a batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub audio: Option<f64>,
    pub guidance: Option<f64>,
    pub sequence: Option<f64>,
    pub audio_slots: usize,
    pub guidance_slots: usize,
    pub sequence_slots: usize,
}

impl LossReport {
    pub fn unmasked_slots(&self) -> usize {
        self.audio_slots + self.guidance_slots + self.sequence_slots
    }
}

/// Correct / total counts per stream under argmax.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamAccuracy {
    pub audio: (usize, usize),
    pub guidance: (usize, usize),
    pub sequence: (usize, usize),
}

impl StreamAccuracy {
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in [
            (&mut self.audio, other.audio),
            (&mut self.guidance, other.guidance),
            (&mut self.sequence, other.sequence),
        ] {
            a.0 += b.0;
            a.1 += b.1;
        }
        self
    }

    fn ratio((c, t): (usize, usize)) -> Option<f64> {
        (t > 0).then(|| c as f64 / t as f64)
    }

    pub fn audio_rate(&self) -> Option<f64> {
        Self::ratio(self.audio)
    }

    pub fn guidance_rate(&self) -> Option<f64> {
        Self::ratio(self.guidance)
    }

    pub fn sequence_rate(&self) -> Option<f64> {
        Self::ratio(self.sequence)
    }

    /// Accuracy over every unmasked slot of every stream.
    pub fn overall(&self) -> Option<f64> {
        let c = self.audio.0 + self.guidance.0 + self.sequence.0;
        let t = self.audio.1 + self.guidance.1 + self.sequence.1;
        Self::ratio((c, t))
    }
}

struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct BlockTrace {
    norm1: NormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    norm2: NormCache,
    b: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

struct Trace {
    blocks: Vec<BlockTrace>,
    final_norm: NormCache,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *r = 1.0 / (var + NORM_EPS).sqrt();
        let scale = *r;
        row.mapv_inplace(|v| v * scale);
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, rstd })
}

/// Returns (dx, dgain, dbias).
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dgain = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        let r = cache.rstd[i];
        Zip::from(dx.row_mut(i))
            .and(&g)
            .and(&xh)
            .for_each(|o, &gv, &xv| *o = r * (gv - mean_g - xv * mean_gx));
    }
    (dx, dgain, dbias)
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_K * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_K * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
}

/// Log-softmax cross-entropy of `target` against `scores`; returns the loss
/// and the softmax probabilities.
fn cross_entropy(scores: ArrayView1<f64>, target: usize) -> (f64, Array1<f64>) {
    let max = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut probs = scores.mapv(|v| (v - max).exp());
    let z = probs.sum();
    probs /= z;
    let loss = z.ln() + max - scores[target];
    (loss, probs)
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax(scores: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

fn block_forward(w: &BlockWeights, x: &Array2<f64>, n_heads: usize) -> (Array2<f64>, BlockTrace) {
    let (n, d) = x.dim();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (a, norm1) = layer_norm(x, &w.norm1_gain, &w.norm1_bias);
    let q = a.dot(&w.wq);
    let k = a.dot(&w.wk);
    let v = a.dot(&w.wv);
    let mut attn = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        for (i, mut row) in p.rows_mut().into_iter().enumerate() {
            let max = row.slice(s![..=i]).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut z = 0.0;
            for (j, e) in row.iter_mut().enumerate() {
                if j <= i {
                    *e = (*e - max).exp();
                    z += *e;
                } else {
                    *e = 0.0;
                }
            }
            row.mapv_inplace(|e| e / z);
        }
        attn.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let mid = x + &attn.dot(&w.wo);
    let (b, norm2) = layer_norm(&mid, &w.norm2_gain, &w.norm2_bias);
    let pre = b.dot(&w.w1) + &w.b1;
    let act = pre.mapv(gelu);
    let out = &mid + &(act.dot(&w.w2) + &w.b2);
    let trace = BlockTrace {
        norm1,
        a,
        q,
        k,
        v,
        probs,
        attn,
        norm2,
        b,
        pre,
        act,
    };
    (out, trace)
}

fn block_backward(
    w: &BlockWeights,
    t: &BlockTrace,
    dout: &Array2<f64>,
    n_heads: usize,
    grad: &mut BlockWeights,
) -> Array2<f64> {
    let d = dout.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward branch
    grad.w2 += &t.act.t().dot(dout);
    grad.b2 += &dout.sum_axis(Axis(0));
    let mut dpre = dout.dot(&w.w2.t());
    Zip::from(&mut dpre).and(&t.pre).for_each(|g, &u| *g *= gelu_grad(u));
    grad.w1 += &t.b.t().dot(&dpre);
    grad.b1 += &dpre.sum_axis(Axis(0));
    let db = dpre.dot(&w.w1.t());
    let (dmid_norm, dg2, dbias2) = layer_norm_backward(&db, &t.norm2, &w.norm2_gain);
    grad.norm2_gain += &dg2;
    grad.norm2_bias += &dbias2;
    let dmid = dout + &dmid_norm;

    // attention branch
    grad.wo += &t.attn.t().dot(&dmid);
    let dattn = dmid.dot(&w.wo.t());
    let mut dq = Array2::zeros(t.q.raw_dim());
    let mut dk = Array2::zeros(t.k.raw_dim());
    let mut dv = Array2::zeros(t.v.raw_dim());
    for (h, p) in t.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dout_h = dattn.slice(cols);
        let dp = dout_h.dot(&t.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dout_h));
        let mut ds = dp;
        for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(p.rows()) {
            let inner = ds_row.dot(&p_row);
            Zip::from(&mut ds_row)
                .and(&p_row)
                .for_each(|g, &pv| *g = pv * (*g - inner) * scale);
        }
        dq.slice_mut(cols).assign(&ds.dot(&t.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&t.q.slice(cols)));
    }
    grad.wq += &t.a.t().dot(&dq);
    grad.wk += &t.a.t().dot(&dk);
    grad.wv += &t.a.t().dot(&dv);
    let da = dq.dot(&w.wq.t()) + dk.dot(&w.wk.t()) + dv.dot(&w.wv.t());
    let (dx_norm, dg1, dbias1) = layer_norm_backward(&da, &t.norm1, &w.norm1_gain);
    grad.norm1_gain += &dg1;
    grad.norm1_bias += &dbias1;
    dmid + dx_norm
}

/// Loss scale per unmasked slot of each stream (weight / batch count).
#[derive(Clone, Copy)]
struct SlotScales {
    audio: f64,
    guidance: f64,
    sequence: f64,
}

#[derive(Default)]
struct SequenceSums {
    audio: f64,
    guidance: f64,
    sequence: f64,
}

impl Model {
    /// Token-mixture embeddings (no positions) for each input slot.
    pub fn embed_slots(&self, slots: &[Vec<TokenId>]) -> Result<Array2<f64>> {
        let d = self.config.d_model;
        let vocab = self.config.layout.joint_size();
        let mut x = Array2::zeros((slots.len(), d));
        for (mut row, slot) in x.rows_mut().into_iter().zip(slots) {
            if slot.is_empty() {
                return Err(Error::Shape("empty input slot".into()));
            }
            for &id in slot {
                if id as usize >= vocab {
                    return Err(Error::Partition {
                        id,
                        partition: "joint vocabulary",
                    });
                }
                row += &self.weights.token_embedding.row(id as usize);
            }
            row /= slot.len() as f64;
        }
        Ok(x)
    }

    fn check_length(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Shape("empty input sequence".into()));
        }
        if n > self.config.max_seq_len {
            return Err(Error::Shape(format!(
                "sequence length {n} exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }
        Ok(())
    }

    fn trunk(&self, inputs: ArrayView2<f64>) -> (Array2<f64>, Trace) {
        let n = inputs.nrows();
        let mut x = &inputs + &self.weights.position_embedding.slice(s![..n, ..]);
        let mut blocks = Vec::with_capacity(self.weights.blocks.len());
        for w in &self.weights.blocks {
            let (out, trace) = block_forward(w, &x, self.config.n_heads);
            x = out;
            blocks.push(trace);
        }
        let (hf, final_norm) = layer_norm(&x, &self.weights.final_gain, &self.weights.final_bias);
        (hf, Trace { blocks, final_norm })
    }

    /// Accumulates parameter gradients for `dhf` into `grad` and returns the
    /// gradient with respect to the input embeddings.
    fn trunk_backward(&self, trace: &Trace, dhf: &Array2<f64>, grad: &mut Weights) -> Array2<f64> {
        let (dx, dg, db) = layer_norm_backward(dhf, &trace.final_norm, &self.weights.final_gain);
        grad.final_gain += &dg;
        grad.final_bias += &db;
        let mut dx = dx;
        for ((w, t), g) in self
            .weights
            .blocks
            .iter()
            .zip(&trace.blocks)
            .zip(grad.blocks.iter_mut())
            .rev()
        {
            dx = block_backward(w, t, &dx, self.config.n_heads, g);
        }
        let n = dx.nrows();
        let mut pos = grad.position_embedding.slice_mut(s![..n, ..]);
        pos += &dx;
        dx
    }

    /// Logits rows of length |V_j| for every position of `inputs`
    /// (token-mixture embeddings; positions are added here).
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let all: Vec<usize> = (0..inputs.nrows()).collect();
        self.logits_at(inputs, &all)
    }

    /// Logits rows for selected positions only.
    pub fn logits_at(&self, inputs: ArrayView2<f64>, positions: &[usize]) -> Result<Array2<f64>> {
        self.check_length(inputs.nrows())?;
        if inputs.ncols() != self.config.d_model {
            return Err(Error::Shape(format!(
                "input width {} != d_model {}",
                inputs.ncols(),
                self.config.d_model
            )));
        }
        if let Some(&p) = positions.iter().find(|&&p| p >= inputs.nrows()) {
            return Err(Error::Shape(format!("position {p} outside the sequence")));
        }
        let (hf, _) = self.trunk(inputs);
        Ok(hf.select(Axis(0), positions).dot(&self.weights.lm_head))
    }

    fn validate_plan(&self, plan: &SequencePlan) -> Result<()> {
        self.check_length(plan.inputs.len())?;
        let layout = &self.config.layout;
        let g = self.config.group_size;
        for out in &plan.outputs {
            if out.position >= plan.inputs.len() {
                return Err(Error::Shape(format!(
                    "target position {} outside the sequence",
                    out.position
                )));
            }
            match (&out.target, self.config.variant.is_grouped()) {
                (StepTarget::Grouped { audio, guidance }, true) => {
                    if audio.len() != g {
                        return Err(Error::Shape(format!(
                            "audio target group of {} ids, expected {g}",
                            audio.len()
                        )));
                    }
                    for &id in audio.iter().flatten() {
                        layout.audio_index(id)?;
                    }
                    if let Some(id) = guidance {
                        if !self.config.variant.is_parallel() || !layout.is_guidance(*id) {
                            return Err(Error::Partition {
                                id: *id,
                                partition: "guidance",
                            });
                        }
                    }
                }
                (StepTarget::Single(t), false) => {
                    if let Some(id) = t {
                        if *id as usize >= layout.joint_size() {
                            return Err(Error::Partition {
                                id: *id,
                                partition: "joint vocabulary",
                            });
                        }
                    }
                }
                _ => {
                    return Err(Error::Shape(format!(
                        "target kind does not match variant {}",
                        self.config.variant
                    )))
                }
            }
        }
        Ok(())
    }

    fn sequence_pass(
        &self,
        plan: &SequencePlan,
        scales: SlotScales,
        with_grad: bool,
    ) -> Result<(SequenceSums, Option<Weights>)> {
        let layout = &self.config.layout;
        let va = layout.audio_size;
        let vg = layout.guidance_size();
        let audio_off = layout.audio_offset();
        let g = self.config.group_size;

        let x0 = self.embed_slots(&plan.inputs)?;
        let (hf, trace) = self.trunk(x0.view());
        let positions: Vec<usize> = plan.outputs.iter().map(|o| o.position).collect();
        let h = hf.select(Axis(0), &positions);
        let z = h.dot(&self.weights.lm_head);
        let mut dz = Array2::<f64>::zeros(z.raw_dim());
        let mut sums = SequenceSums::default();

        let grouped_rows: Vec<usize> = plan
            .outputs
            .iter()
            .enumerate()
            .filter(|(_, o)| matches!(o.target, StepTarget::Grouped { .. }))
            .map(|(i, _)| i)
            .collect();

        let mut group_terms = None;
        if !grouped_rows.is_empty() {
            let head = self
                .weights
                .group_head
                .as_ref()
                .ok_or_else(|| Error::Shape("grouped targets need a group head".into()))?;
            let a = z.select(Axis(0), &grouped_rows).slice(s![.., audio_off..]).to_owned();
            let scores = a.dot(&head.weight) + &head.bias;
            let mut ds = Array2::<f64>::zeros(scores.raw_dim());
            for (r, &row) in grouped_rows.iter().enumerate() {
                let StepTarget::Grouped { audio, guidance } = &plan.outputs[row].target else {
                    unreachable!()
                };
                for (j, target) in audio.iter().enumerate() {
                    let Some(id) = target else { continue };
                    let idx = *id as usize - audio_off;
                    let block = s![r, j * va..(j + 1) * va];
                    let (ce, mut probs) = cross_entropy(scores.slice(block), idx);
                    sums.audio += ce;
                    probs[idx] -= 1.0;
                    ds.slice_mut(block).assign(&(probs * scales.audio));
                }
                if let Some(id) = guidance {
                    let idx = *id as usize;
                    let cols = s![row, ..vg];
                    let (ce, mut probs) = cross_entropy(z.slice(cols), idx);
                    sums.guidance += ce;
                    probs[idx] -= 1.0;
                    let mut dst = dz.slice_mut(cols);
                    dst += &(probs * scales.guidance);
                }
            }
            debug_assert_eq!(ds.ncols(), va * g);
            group_terms = Some((a, ds));
        }

        for (row, out) in plan.outputs.iter().enumerate() {
            if let StepTarget::Single(Some(id)) = out.target {
                let idx = id as usize;
                let (ce, mut probs) = cross_entropy(z.row(row), idx);
                sums.sequence += ce;
                probs[idx] -= 1.0;
                let mut dst = dz.row_mut(row);
                dst += &(probs * scales.sequence);
            }
        }

        if !with_grad {
            return Ok((sums, None));
        }

        let mut grad = Weights::zeros(&self.config);
        if let Some((a, ds)) = group_terms {
            let head = self.weights.group_head.as_ref().expect("checked above");
            let gh = grad.group_head.as_mut().expect("same config");
            gh.weight += &a.t().dot(&ds);
            gh.bias += &ds.sum_axis(Axis(0));
            let da = ds.dot(&head.weight.t());
            for (r, &row) in grouped_rows.iter().enumerate() {
                let mut dst = dz.slice_mut(s![row, audio_off..]);
                dst += &da.row(r);
            }
        }
        grad.lm_head += &h.t().dot(&dz);
        let dh = dz.dot(&self.weights.lm_head.t());
        let mut dhf = Array2::zeros(hf.raw_dim());
        for (r, &p) in positions.iter().enumerate() {
            let mut dst = dhf.row_mut(p);
            dst += &dh.row(r);
        }
        let dx0 = self.trunk_backward(&trace, &dhf, &mut grad);
        for (slot, dx) in plan.inputs.iter().zip(dx0.rows()) {
            let share = 1.0 / slot.len() as f64;
            for &id in slot {
                let mut dst = grad.token_embedding.row_mut(id as usize);
                dst.scaled_add(share, &dx);
            }
        }
        Ok((sums, Some(grad)))
    }

    /// Mean cross-entropy per stream over the unmasked slots of the batch,
    /// combined as `audio_w * audio + guidance_w * guidance + sequence`.
    /// Streams with no unmasked slot contribute zero; a fully masked batch
    /// yields a zero loss and zero gradients.
    pub fn batch_loss(
        &self,
        plans: &[SequencePlan],
        weights: LossWeights,
        with_grad: bool,
    ) -> Result<(LossReport, Option<Weights>)> {
        for plan in plans {
            self.validate_plan(plan)?;
        }
        let mut report = LossReport::default();
        for plan in plans {
            for out in &plan.outputs {
                match &out.target {
                    StepTarget::Grouped { audio, guidance } => {
                        report.audio_slots += audio.iter().flatten().count();
                        report.guidance_slots += usize::from(guidance.is_some());
                    }
                    StepTarget::Single(t) => report.sequence_slots += usize::from(t.is_some()),
                }
            }
        }
        let per = |w: f64, n: usize| if n == 0 { 0.0 } else { w / n as f64 };
        let scales = SlotScales {
            audio: per(weights.audio, report.audio_slots),
            guidance: per(weights.guidance, report.guidance_slots),
            sequence: per(1.0, report.sequence_slots),
        };
        let results: Vec<(SequenceSums, Option<Weights>)> = plans
            .par_iter()
            .map(|plan| self.sequence_pass(plan, scales, with_grad))
            .collect::<Result<_>>()?;

        let mut sums = SequenceSums::default();
        let mut grad = with_grad.then(|| Weights::zeros(&self.config));
        for (s, g) in &results {
            sums.audio += s.audio;
            sums.guidance += s.guidance;
            sums.sequence += s.sequence;
            if let (Some(total), Some(g)) = (grad.as_mut(), g) {
                total.add_assign(g);
            }
        }
        let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
        report.audio = mean(sums.audio, report.audio_slots);
        report.guidance = mean(sums.guidance, report.guidance_slots);
        report.sequence = mean(sums.sequence, report.sequence_slots);
        report.total = weights.audio * report.audio.unwrap_or(0.0)
            + weights.guidance * report.guidance.unwrap_or(0.0)
            + report.sequence.unwrap_or(0.0);
        Ok((report, grad))
    }

    /// Teacher-forced argmax accuracy per stream.
    pub fn teacher_forced_accuracy(&self, plans: &[SequencePlan]) -> Result<StreamAccuracy> {
        let parts: Vec<StreamAccuracy> = plans
            .par_iter()
            .map(|plan| self.plan_accuracy(plan))
            .collect::<Result<_>>()?;
        Ok(parts.into_iter().fold(StreamAccuracy::default(), StreamAccuracy::merge))
    }

    fn plan_accuracy(&self, plan: &SequencePlan) -> Result<StreamAccuracy> {
        self.validate_plan(plan)?;
        let layout = &self.config.layout;
        let x0 = self.embed_slots(&plan.inputs)?;
        let positions: Vec<usize> = plan.outputs.iter().map(|o| o.position).collect();
        let z = self.logits_at(x0.view(), &positions)?;
        let mut acc = StreamAccuracy::default();
        for (row, out) in plan.outputs.iter().enumerate() {
            match &out.target {
                StepTarget::Grouped { audio, guidance } => {
                    let scores = self.step_logits(z.row(row).as_slice().expect("row"))?;
                    let super::StepScores::Grouped {
                        audio: slots,
                        guidance: gscores,
                    } = scores
                    else {
                        unreachable!("grouped variant")
                    };
                    for (slot, target) in slots.iter().zip(audio) {
                        if let Some(id) = target {
                            let pick = argmax(slot.view()) + layout.audio_offset();
                            acc.audio.0 += usize::from(pick == *id as usize);
                            acc.audio.1 += 1;
                        }
                    }
                    if let (Some(id), Some(gs)) = (guidance, gscores) {
                        acc.guidance.0 += usize::from(argmax(gs.view()) == *id as usize);
                        acc.guidance.1 += 1;
                    }
                }
                StepTarget::Single(Some(id)) => {
                    acc.sequence.0 += usize::from(argmax(z.row(row)) == *id as usize);
                    acc.sequence.1 += 1;
                }
                StepTarget::Single(None) => {}
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_differences() {
        for &u in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn uniform_cross_entropy() {
        let (ce, p) = cross_entropy(Array1::zeros(4).view(), 2);
        assert!((ce - 4f64.ln()).abs() < 1e-15);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(Array1::from(vec![0.1, 0.9, 0.3]).view()), 1);
        assert_eq!(argmax(Array1::from(vec![0.0, 1.0, 2.0, 0.5, 1.0, 2.0]).view()), 2);
    }
}
