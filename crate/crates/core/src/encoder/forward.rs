use std::collections::BTreeMap;

use super::model::{positional_encoding, EncoderModel, LayerNorm, LAYER_NORM_EPS};
use super::EncoderError;
use crate::data::Tier;
use crate::linalg::Matrix;

/// Per-layer outputs (layer 1 first) and per-tier logits of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub layers: Vec<Matrix>,
    pub logits: BTreeMap<Tier, Matrix>,
}

/// Intermediates of one layer kept for the backward pass.
pub(crate) struct LayerCache {
    pub x: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Row-stochastic attention weights, one `n × n` matrix per head.
    pub attn: Vec<Matrix>,
    pub ctx: Matrix,
    pub xhat1: Matrix,
    pub rstd1: Vec<f64>,
    pub a: Matrix,
    pub z1: Matrix,
    pub g: Matrix,
    pub xhat2: Matrix,
    pub rstd2: Vec<f64>,
}

pub(crate) struct Trace {
    pub output: ForwardOutput,
    pub caches: Vec<LayerCache>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Returns `(y, xhat, 1/sqrt(var + eps))` for row-wise normalisation.
fn layer_norm(r: &Matrix, ln: &LayerNorm) -> (Matrix, Matrix, Vec<f64>) {
    let d = r.cols();
    let mut xhat = Matrix::zeros(r.rows(), d);
    let mut y = Matrix::zeros(r.rows(), d);
    let mut rstd = Vec::with_capacity(r.rows());
    let (gamma, beta) = (ln.gamma.as_slice(), ln.beta.as_slice());
    for i in 0..r.rows() {
        let row = r.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd.push(s);
        let xh = xhat.row_mut(i);
        for j in 0..d {
            xh[j] = (row[j] - mean) * s;
        }
        let yr = y.row_mut(i);
        for j in 0..d {
            yr[j] = xhat[(i, j)] * gamma[j] + beta[j];
        }
    }
    (y, xhat, rstd)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn check(m: &Matrix, layer: impl FnOnce() -> String) -> Result<(), EncoderError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(EncoderError::NumericalFailure { layer: layer() })
    }
}

pub(crate) fn forward_traced(model: &EncoderModel, frames: &Matrix) -> Result<Trace, EncoderError> {
    let cfg = &model.config;
    if frames.cols() != cfg.d_input {
        return Err(EncoderError::Shape(format!(
            "frames have {} features, the model expects {}",
            frames.cols(),
            cfg.d_input
        )));
    }
    check(frames, || "input frames".into())?;
    let n = frames.rows();
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut h = model.input.apply(frames);
    h.add_assign(&positional_encoding(n, d));
    check(&h, || "input projection".into())?;

    let mut caches = Vec::with_capacity(model.layers.len());
    let mut outputs = Vec::with_capacity(model.layers.len());
    for (li, layer) in model.layers.iter().enumerate() {
        let x = h;
        let q = layer.query.apply(&x);
        let k = layer.key.apply(&x);
        let v = layer.value.apply(&x);
        let mut ctx = Matrix::zeros(n, d);
        let mut attn = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (c0, c1) = (hd * dh, (hd + 1) * dh);
            let (qh, kh, vh) = (q.slice_cols(c0, c1), k.slice_cols(c0, c1), v.slice_cols(c0, c1));
            let mut s = qh.matmul_t(&kh)?;
            s.scale(scale);
            for i in 0..n {
                softmax_in_place(s.row_mut(i));
            }
            let ch = s.matmul(&vh)?;
            for i in 0..n {
                ctx.row_mut(i)[c0..c1].copy_from_slice(ch.row(i));
            }
            attn.push(s);
        }
        let mut r1 = layer.output.apply(&ctx);
        r1.add_assign(&x);
        let (a, xhat1, rstd1) = layer_norm(&r1, &layer.norm1);
        let z1 = layer.ff1.apply(&a);
        let mut g = z1.clone();
        g.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
        let mut r2 = layer.ff2.apply(&g);
        r2.add_assign(&a);
        let (y, xhat2, rstd2) = layer_norm(&r2, &layer.norm2);
        check(&y, || format!("layer {}", li + 1))?;
        outputs.push(y.clone());
        caches.push(LayerCache {
            x,
            q,
            k,
            v,
            attn,
            ctx,
            xhat1,
            rstd1,
            a,
            z1,
            g,
            xhat2,
            rstd2,
        });
        h = y;
    }

    let mut logits = BTreeMap::new();
    for (tier, head) in &model.heads {
        let lg = head.linear.apply(&h);
        check(&lg, || format!("{tier} head"))?;
        logits.insert(*tier, lg);
    }
    Ok(Trace {
        output: ForwardOutput {
            layers: outputs,
            logits,
        },
        caches,
    })
}

/// Runs one utterance (`n_frames × d_input`) through the encoder and heads.
pub fn forward(model: &EncoderModel, frames: &Matrix) -> Result<ForwardOutput, EncoderError> {
    forward_traced(model, frames).map(|t| t.output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_191_990_607_477_2).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.158_808_009_392_522_8).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let r = Matrix::from_fn(3, 6, |i, j| (i * 7 + j * j) as f64);
        let (y, _, _) = layer_norm(&r, &LayerNorm::new(6));
        for i in 0..3 {
            let row = y.row(i);
            let mean = row.iter().sum::<f64>() / 6.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
