use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{validate_tasks, EncoderConfig, EncoderError, TaskSpec};
use crate::data::{LabelVocabulary, Tier};
use crate::linalg::Matrix;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `y = x W + b` with `W` stored `in × out` and `b` as a `1 × out` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..bound)),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: Matrix::zeros(1, self.bias.cols()),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight).expect("linear input width");
        y.add_row_vector(self.bias.as_slice());
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Matrix,
    pub beta: Matrix,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self {
            gamma: Matrix::from_fn(1, d, |_, _| 1.0),
            beta: Matrix::zeros(1, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: Matrix::zeros(1, self.gamma.cols()),
            beta: Matrix::zeros(1, self.beta.cols()),
        }
    }
}

/// One post-norm block: `h1 = LN1(h + Attn(h))`, `out = LN2(h1 + FFN(h1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    fn init(d: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            query: Linear::init(d, d, rng),
            key: Linear::init(d, d, rng),
            value: Linear::init(d, d, rng),
            output: Linear::init(d, d, rng),
            norm1: LayerNorm::new(d),
            ff1: Linear::init(d, d_ff, rng),
            ff2: Linear::init(d_ff, d, rng),
            norm2: LayerNorm::new(d),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            output: self.output.zeros_like(),
            norm1: self.norm1.zeros_like(),
            ff1: self.ff1.zeros_like(),
            ff2: self.ff2.zeros_like(),
            norm2: self.norm2.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub vocabulary: LabelVocabulary,
    pub linear: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub input: Linear,
    pub layers: Vec<EncoderLayer>,
    pub heads: BTreeMap<Tier, Head>,
}

fn head_stream(tier: Tier) -> u64 {
    1 + Tier::ALL.iter().position(|t| *t == tier).expect("tier in ALL") as u64
}

impl EncoderModel {
    /// Body parameters come from stream 0 of `ChaCha8(seed)` and each head
    /// from a stream of its own, so models that differ only in their task
    /// sets start from the same body and share the heads they have in common.
    pub fn new(config: &EncoderConfig, tasks: &[TaskSpec]) -> Result<Self, EncoderError> {
        config.validate()?;
        validate_tasks(tasks)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let input = Linear::init(config.d_input, config.d_model, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer::init(config.d_model, config.d_ff, &mut rng))
            .collect();
        let mut heads = BTreeMap::new();
        for task in tasks {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(head_stream(task.tier));
            heads.insert(
                task.tier,
                Head {
                    vocabulary: task.vocabulary.clone(),
                    linear: Linear::init(config.d_model, task.vocabulary.len(), &mut rng),
                },
            );
        }
        Ok(Self {
            config: config.clone(),
            input,
            layers,
            heads,
        })
    }

    /// Same structure, every tensor zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            input: self.input.zeros_like(),
            layers: self.layers.iter().map(EncoderLayer::zeros_like).collect(),
            heads: self
                .heads
                .iter()
                .map(|(t, h)| {
                    (
                        *t,
                        Head {
                            vocabulary: h.vocabulary.clone(),
                            linear: h.linear.zeros_like(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn tiers(&self) -> Vec<Tier> {
        self.heads.keys().copied().collect()
    }

    pub fn tasks(&self) -> Vec<TaskSpec> {
        self.heads.values().map(|h| TaskSpec::new(h.vocabulary.clone())).collect()
    }

    /// Every tensor with its canonical name, in a fixed order.
    pub fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        fn linear<'a>(out: &mut Vec<(String, &'a Matrix)>, prefix: String, l: &'a Linear) {
            out.push((format!("{prefix}.weight"), &l.weight));
            out.push((format!("{prefix}.bias"), &l.bias));
        }
        linear(&mut out, "input".into(), &self.input);
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            linear(&mut out, format!("{p}.query"), &layer.query);
            linear(&mut out, format!("{p}.key"), &layer.key);
            linear(&mut out, format!("{p}.value"), &layer.value);
            linear(&mut out, format!("{p}.output"), &layer.output);
            out.push((format!("{p}.norm1.gamma"), &layer.norm1.gamma));
            out.push((format!("{p}.norm1.beta"), &layer.norm1.beta));
            linear(&mut out, format!("{p}.ff1"), &layer.ff1);
            linear(&mut out, format!("{p}.ff2"), &layer.ff2);
            out.push((format!("{p}.norm2.gamma"), &layer.norm2.gamma));
            out.push((format!("{p}.norm2.beta"), &layer.norm2.beta));
        }
        for (tier, head) in &self.heads {
            linear(&mut out, format!("heads.{tier}"), &head.linear);
        }
        out
    }

    /// Mutable counterpart of [`EncoderModel::params`], same order.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        fn linear<'a>(out: &mut Vec<(String, &'a mut Matrix)>, prefix: String, l: &'a mut Linear) {
            out.push((format!("{prefix}.weight"), &mut l.weight));
            out.push((format!("{prefix}.bias"), &mut l.bias));
        }
        linear(&mut out, "input".into(), &mut self.input);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let p = format!("layers.{i}");
            linear(&mut out, format!("{p}.query"), &mut layer.query);
            linear(&mut out, format!("{p}.key"), &mut layer.key);
            linear(&mut out, format!("{p}.value"), &mut layer.value);
            linear(&mut out, format!("{p}.output"), &mut layer.output);
            out.push((format!("{p}.norm1.gamma"), &mut layer.norm1.gamma));
            out.push((format!("{p}.norm1.beta"), &mut layer.norm1.beta));
            linear(&mut out, format!("{p}.ff1"), &mut layer.ff1);
            linear(&mut out, format!("{p}.ff2"), &mut layer.ff2);
            out.push((format!("{p}.norm2.gamma"), &mut layer.norm2.gamma));
            out.push((format!("{p}.norm2.beta"), &mut layer.norm2.beta));
        }
        for (tier, head) in self.heads.iter_mut() {
            linear(&mut out, format!("heads.{tier}"), &mut head.linear);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|(_, m)| m.is_finite())
    }
}

/// Sinusoidal positions: `sin(t / 10000^(2i/d))` on even columns, `cos` on odd.
pub(crate) fn positional_encoding(n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |t, c| {
        let pair = (c / 2) * 2;
        let angle = t as f64 / 10000f64.powf(pair as f64 / d as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
