use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockWeights {
    pub norm1_gain: Array1<f64>,
    pub norm1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub norm2_gain: Array1<f64>,
    pub norm2_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Linear map from the audio logits (|V_a|) to G slot-major score blocks.
///
/// Score for slot `j`, codec entry `v` sits at column `j * |V_a| + v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupHead {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl GroupHead {
    pub fn zeros(audio_size: usize, group_size: usize) -> Self {
        Self {
            weight: Array2::zeros((audio_size, audio_size * group_size)),
            bias: Array1::zeros(audio_size * group_size),
        }
    }

    /// Every slot copies the input scores.
    pub fn identity(audio_size: usize, group_size: usize) -> Self {
        let mut head = Self::zeros(audio_size, group_size);
        for j in 0..group_size {
            for v in 0..audio_size {
                head.weight[[v, j * audio_size + v]] = 1.0;
            }
        }
        head
    }

    pub fn audio_size(&self) -> usize {
        self.weight.nrows()
    }

    pub fn group_size(&self) -> usize {
        self.weight.ncols() / self.weight.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub blocks: Vec<BlockWeights>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
    pub lm_head: Array2<f64>,
    pub group_head: Option<GroupHead>,
}

fn uniform2(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl Weights {
    /// All-zero parameters (layer-norm gains included), used for gradient
    /// buffers and the uniform-logits check.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let ff = config.ff_dim;
        let vocab = config.layout.joint_size();
        let block = || BlockWeights {
            norm1_gain: Array1::zeros(d),
            norm1_bias: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            norm2_gain: Array1::zeros(d),
            norm2_bias: Array1::zeros(d),
            w1: Array2::zeros((d, ff)),
            b1: Array1::zeros(ff),
            w2: Array2::zeros((ff, d)),
            b2: Array1::zeros(d),
        };
        Self {
            token_embedding: Array2::zeros((vocab, d)),
            position_embedding: Array2::zeros((config.max_seq_len, d)),
            blocks: (0..config.n_layers).map(|_| block()).collect(),
            final_gain: Array1::zeros(d),
            final_bias: Array1::zeros(d),
            lm_head: Array2::zeros((d, vocab)),
            group_head: config
                .variant
                .is_grouped()
                .then(|| GroupHead::zeros(config.layout.audio_size, config.group_size)),
        }
    }

    /// Uniform init scaled by fan-in; layer-norm gains start at one.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let ff = config.ff_dim;
        let vocab = config.layout.joint_size();
        let by_fan_in = |n: usize| 1.0 / (n as f64).sqrt();
        let mut w = Self::zeros(config);
        w.token_embedding = uniform2(&mut rng, vocab, d, 1.0);
        w.position_embedding = uniform2(&mut rng, config.max_seq_len, d, 0.5);
        for block in &mut w.blocks {
            block.norm1_gain.fill(1.0);
            block.norm2_gain.fill(1.0);
            block.wq = uniform2(&mut rng, d, d, by_fan_in(d));
            block.wk = uniform2(&mut rng, d, d, by_fan_in(d));
            block.wv = uniform2(&mut rng, d, d, by_fan_in(d));
            block.wo = uniform2(&mut rng, d, d, by_fan_in(d));
            block.w1 = uniform2(&mut rng, d, ff, by_fan_in(d));
            block.w2 = uniform2(&mut rng, ff, d, by_fan_in(ff));
        }
        w.final_gain.fill(1.0);
        w.lm_head = uniform2(&mut rng, d, vocab, by_fan_in(d));
        if let Some(head) = &mut w.group_head {
            let va = head.audio_size();
            head.weight = uniform2(&mut rng, va, head.weight.ncols(), by_fan_in(va));
        }
        w
    }

    /// Flat views of every tensor, in a fixed order, with stable names.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        macro_rules! push {
            ($name:expr, $t:expr) => {
                out.push(($name, $t.as_slice().expect("contiguous tensor")))
            };
        }
        push!("token_embedding".into(), self.token_embedding);
        push!("position_embedding".into(), self.position_embedding);
        for (i, b) in self.blocks.iter().enumerate() {
            push!(format!("blocks.{i}.norm1_gain"), b.norm1_gain);
            push!(format!("blocks.{i}.norm1_bias"), b.norm1_bias);
            push!(format!("blocks.{i}.wq"), b.wq);
            push!(format!("blocks.{i}.wk"), b.wk);
            push!(format!("blocks.{i}.wv"), b.wv);
            push!(format!("blocks.{i}.wo"), b.wo);
            push!(format!("blocks.{i}.norm2_gain"), b.norm2_gain);
            push!(format!("blocks.{i}.norm2_bias"), b.norm2_bias);
            push!(format!("blocks.{i}.w1"), b.w1);
            push!(format!("blocks.{i}.b1"), b.b1);
            push!(format!("blocks.{i}.w2"), b.w2);
            push!(format!("blocks.{i}.b2"), b.b2);
        }
        push!("final_gain".into(), self.final_gain);
        push!("final_bias".into(), self.final_bias);
        push!("lm_head".into(), self.lm_head);
        if let Some(h) = &self.group_head {
            push!("group_head.weight".into(), h.weight);
            push!("group_head.bias".into(), h.bias);
        }
        out
    }

    /// Mutable counterpart of [`Weights::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        macro_rules! push {
            ($t:expr) => {
                out.push($t.as_slice_mut().expect("contiguous tensor"))
            };
        }
        push!(self.token_embedding);
        push!(self.position_embedding);
        for b in &mut self.blocks {
            push!(b.norm1_gain);
            push!(b.norm1_bias);
            push!(b.wq);
            push!(b.wk);
            push!(b.wv);
            push!(b.wo);
            push!(b.norm2_gain);
            push!(b.norm2_bias);
            push!(b.w1);
            push!(b.b1);
            push!(b.w2);
            push!(b.b2);
        }
        push!(self.final_gain);
        push!(self.final_bias);
        push!(self.lm_head);
        if let Some(h) = &mut self.group_head {
            push!(h.weight);
            push!(h.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|a| *a *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}
