use std::collections::BTreeMap;

use super::forward::softmax_in_place;
use super::EncoderError;
use crate::data::Tier;
use crate::linalg::Matrix;

/// Per-task mean losses and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub per_task: BTreeMap<Tier, f64>,
}

/// Sums per-task losses in ascending tier-name order so the floating-point
/// result does not depend on how the tasks were listed.
pub fn multitask_loss(per_task: BTreeMap<Tier, f64>) -> LossTerms {
    let total = per_task.values().fold(0.0, |acc, v| acc + v);
    LossTerms { total, per_task }
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for i in 0..p.rows() {
        softmax_in_place(p.row_mut(i));
    }
    p
}

pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

fn check_labels(logits: &Matrix, labels: &[Option<usize>]) -> Result<(), EncoderError> {
    if labels.len() != logits.rows() {
        return Err(EncoderError::Shape(format!(
            "{} labels for {} frames",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(c) = labels.iter().flatten().find(|c| **c >= logits.cols()) {
        return Err(EncoderError::Task(format!("label {c} outside a {}-class head", logits.cols())));
    }
    Ok(())
}

/// Sum of `-log p(label)` over labeled frames and the gradient of
/// `scale * sum` with respect to the logits. Masked rows get zero gradient.
pub(crate) fn ce_sum_and_grad(logits: &Matrix, labels: &[Option<usize>], scale: f64) -> Result<(f64, Matrix), EncoderError> {
    check_labels(logits, labels)?;
    let logp = log_softmax_rows(logits);
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut sum = 0.0;
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = *l {
            sum -= logp[(i, c)];
            let g = grad.row_mut(i);
            for (j, lp) in logp.row(i).iter().enumerate() {
                g[j] = scale * lp.exp();
            }
            g[c] -= scale;
        }
    }
    Ok((sum, grad))
}

/// Mean negative log-likelihood over the labeled frames only. Masked frames
/// (`None`) neither contribute to the sum nor to the count.
pub fn masked_cross_entropy(logits: &Matrix, labels: &[Option<usize>]) -> Result<f64, EncoderError> {
    check_labels(logits, labels)?;
    let n = labels.iter().flatten().count();
    if n == 0 {
        return Err(EncoderError::NoLabeledFrames);
    }
    let (sum, _) = ce_sum_and_grad(logits, labels, 0.0)?;
    Ok(sum / n as f64)
}
