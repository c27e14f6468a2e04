//! Reverse-mode gradients for the encoder, derived by hand.
//!
//! For a row-wise layer norm with `xhat = (r - mean) * s`, `y = xhat * gamma + beta`:
//! `dr = s * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))` with `dxhat = dy * gamma`.
//! For a softmax row `A = softmax(S)`: `dS = A * (dA - rowsum(dA * A))`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::forward::{forward_traced, gelu_grad, LayerCache, Trace};
use super::loss::{ce_sum_and_grad, multitask_loss, LossTerms};
use super::model::{EncoderModel, LayerNorm, Linear};
use super::train::TrainingBatch;
use super::EncoderError;
use crate::data::Tier;
use crate::linalg::{gemm, Matrix};

/// Gradient of the batch loss, shaped like the model it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) grad: EncoderModel,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.grad.params()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.grad.params().into_iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, m)| m.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn accumulate(&mut self, other: &Gradients) {
        for ((_, a), (_, b)) in self.grad.params_mut().into_iter().zip(other.grad.params()) {
            a.add_assign(b);
        }
    }
}

/// `c += op(a) op(b)`.
fn acc(c: &mut Matrix, a: &Matrix, ta: bool, b: &Matrix, tb: bool) {
    gemm(1.0, a, ta, b, tb, 1.0, c);
}

fn acc_colsum(bias: &mut Matrix, d: &Matrix) {
    let b = bias.as_mut_slice();
    for i in 0..d.rows() {
        for (bj, v) in b.iter_mut().zip(d.row(i)) {
            *bj += v;
        }
    }
}

/// Accumulates `dW`, `db` for `y = x W + b` and returns `dx`.
fn linear_backward(lin: &Linear, grad: &mut Linear, x: &Matrix, dy: &Matrix) -> Matrix {
    acc(&mut grad.weight, x, true, dy, false);
    acc_colsum(&mut grad.bias, dy);
    let mut dx = Matrix::zeros(dy.rows(), lin.weight.rows());
    gemm(1.0, dy, false, &lin.weight, true, 0.0, &mut dx);
    dx
}

fn layer_norm_backward(ln: &LayerNorm, grad: &mut LayerNorm, xhat: &Matrix, rstd: &[f64], dy: &Matrix) -> Matrix {
    let d = dy.cols();
    let gamma = ln.gamma.as_slice();
    let mut dr = Matrix::zeros(dy.rows(), d);
    let mut dxhat = vec![0.0; d];
    for i in 0..dy.rows() {
        let (dyr, xr) = (dy.row(i), xhat.row(i));
        let dg = grad.gamma.as_mut_slice();
        for j in 0..d {
            dg[j] += dyr[j] * xr[j];
        }
        let db = grad.beta.as_mut_slice();
        for j in 0..d {
            db[j] += dyr[j];
        }
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            dxhat[j] = dyr[j] * gamma[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xr[j];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let out = dr.row_mut(i);
        for j in 0..d {
            out[j] = rstd[i] * (dxhat[j] - m1 - xr[j] * m2);
        }
    }
    dr
}

fn layer_backward(model: &EncoderModel, li: usize, c: &LayerCache, grad: &mut EncoderModel, dy: &Matrix) -> Matrix {
    let layer = &model.layers[li];
    let g = &mut grad.layers[li];
    let n = dy.rows();
    let d = model.config.d_model;
    let heads = model.config.n_heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(&layer.norm2, &mut g.norm2, &c.xhat2, &c.rstd2, dy);
    let mut dgact = linear_backward(&layer.ff2, &mut g.ff2, &c.g, &dr2);
    for (v, z) in dgact.as_mut_slice().iter_mut().zip(c.z1.as_slice()) {
        *v *= gelu_grad(*z);
    }
    let mut da = linear_backward(&layer.ff1, &mut g.ff1, &c.a, &dgact);
    da.add_assign(&dr2);

    let dr1 = layer_norm_backward(&layer.norm1, &mut g.norm1, &c.xhat1, &c.rstd1, &da);
    let dctx = linear_backward(&layer.output, &mut g.output, &c.ctx, &dr1);

    let mut dq = Matrix::zeros(n, d);
    let mut dk = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    for (hd, a) in c.attn.iter().enumerate() {
        let (c0, c1) = (hd * dh, (hd + 1) * dh);
        let dctx_h = dctx.slice_cols(c0, c1);
        let (qh, kh, vh) = (c.q.slice_cols(c0, c1), c.k.slice_cols(c0, c1), c.v.slice_cols(c0, c1));
        let da_h = dctx_h.matmul_t(&vh).expect("head shapes");
        let dvh = a.t_matmul(&dctx_h).expect("head shapes");
        let mut ds = Matrix::zeros(n, n);
        for i in 0..n {
            let (ar, dar) = (a.row(i), da_h.row(i));
            let dot: f64 = ar.iter().zip(dar).map(|(x, y)| x * y).sum();
            let out = ds.row_mut(i);
            for j in 0..n {
                out[j] = scale * ar[j] * (dar[j] - dot);
            }
        }
        let dqh = ds.matmul(&kh).expect("head shapes");
        let dkh = ds.t_matmul(&qh).expect("head shapes");
        for i in 0..n {
            dq.row_mut(i)[c0..c1].copy_from_slice(dqh.row(i));
            dk.row_mut(i)[c0..c1].copy_from_slice(dkh.row(i));
            dv.row_mut(i)[c0..c1].copy_from_slice(dvh.row(i));
        }
    }
    let mut dx = dr1;
    dx.add_assign(&linear_backward(&layer.query, &mut g.query, &c.x, &dq));
    dx.add_assign(&linear_backward(&layer.key, &mut g.key, &c.x, &dk));
    dx.add_assign(&linear_backward(&layer.value, &mut g.value, &c.x, &dv));
    dx
}

/// Back-propagates logit gradients of one utterance into `grad`.
pub(crate) fn backward(model: &EncoderModel, frames: &Matrix, trace: &Trace, dlogits: &BTreeMap<Tier, Matrix>, grad: &mut EncoderModel) {
    let last = trace.output.layers.last().expect("at least one layer");
    let mut dh = Matrix::zeros(last.rows(), last.cols());
    for (tier, dl) in dlogits {
        let head = &model.heads[tier];
        let g = &mut grad.heads.get_mut(tier).expect("gradient head").linear;
        dh.add_assign(&linear_backward(&head.linear, g, last, dl));
    }
    for li in (0..model.layers.len()).rev() {
        dh = layer_backward(model, li, &trace.caches[li], grad, &dh);
    }
    // positional encodings are constants, so dh flows straight into the projection
    let _ = linear_backward(&model.input, &mut grad.input, frames, &dh);
}

/// Masked multitask loss of a batch and its gradient.
///
/// For each task the normaliser is the number of labeled frames pooled over
/// the whole batch. A task with no labeled frame anywhere in the batch is
/// left out of the loss; if that holds for every task the batch is rejected.
pub fn loss_and_gradients(model: &EncoderModel, batch: &TrainingBatch<'_>) -> Result<(LossTerms, Gradients), EncoderError> {
    let mut counts: BTreeMap<Tier, usize> = BTreeMap::new();
    for tier in model.heads.keys() {
        let mut n = 0;
        for item in &batch.items {
            let labels = item
                .labels
                .get(tier)
                .ok_or_else(|| EncoderError::Task(format!("{} has no {tier} labels", item.id)))?;
            n += labels.iter().flatten().count();
        }
        if n > 0 {
            counts.insert(*tier, n);
        }
    }
    if counts.is_empty() {
        return Err(EncoderError::NoLabeledFrames);
    }

    let per_item: Vec<Result<(BTreeMap<Tier, f64>, Gradients), EncoderError>> = batch
        .items
        .par_iter()
        .map(|item| {
            let trace = forward_traced(model, item.frames)?;
            let mut sums = BTreeMap::new();
            let mut dlogits = BTreeMap::new();
            for (tier, n) in &counts {
                let (s, dl) = ce_sum_and_grad(&trace.output.logits[tier], &item.labels[tier], 1.0 / *n as f64)?;
                sums.insert(*tier, s);
                dlogits.insert(*tier, dl);
            }
            let mut grad = model.zeros_like();
            backward(model, item.frames, &trace, &dlogits, &mut grad);
            Ok((sums, Gradients { grad }))
        })
        .collect();

    // fixed-order reduction keeps results independent of thread scheduling
    let mut total = Gradients {
        grad: model.zeros_like(),
    };
    let mut sums: BTreeMap<Tier, f64> = counts.keys().map(|t| (*t, 0.0)).collect();
    for r in per_item {
        let (s, g) = r?;
        for (t, v) in s {
            *sums.get_mut(&t).expect("counted tier") += v;
        }
        total.accumulate(&g);
    }
    let per_task = sums.into_iter().map(|(t, s)| (t, s / counts[&t] as f64)).collect();
    Ok((multitask_loss(per_task), total))
}
