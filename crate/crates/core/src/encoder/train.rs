use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backward::loss_and_gradients;
use super::model::EncoderModel;
use super::{EncoderConfig, EncoderError, Optimizer, TaskSpec};
use crate::data::{build_training_labels, Corpus, DataError, Tier, Utterance};
use crate::linalg::Matrix;

/// Stream of the batch-order RNG; heads use the low streams.
const SHUFFLE_STREAM: u64 = 1000;

/// Losses above this are treated as divergence even when finite.
const DIVERGENCE_LOSS: f64 = 1e6;

/// One utterance inside a batch. Attention never crosses item boundaries.
#[derive(Debug, Clone)]
pub struct BatchItem<'a> {
    pub id: &'a str,
    pub frames: &'a Matrix,
    pub labels: BTreeMap<Tier, &'a [Option<usize>]>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingBatch<'a> {
    pub items: Vec<BatchItem<'a>>,
}

impl TrainingBatch<'_> {
    pub fn n_frames(&self) -> usize {
        self.items.iter().map(|i| i.frames.rows()).sum()
    }
}

/// Greedy packing in the given order: an utterance joins the current batch
/// if the frame budget allows, otherwise it opens a new one. An utterance
/// longer than the budget forms a batch by itself.
pub fn make_batches(order: &[usize], lengths: &[usize], max_frames: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut frames = 0;
    for &i in order {
        if !cur.is_empty() && frames + lengths[i] > max_frames {
            out.push(std::mem::take(&mut cur));
            frames = 0;
        }
        cur.push(i);
        frames += lengths[i];
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Only head parameters are updated.
    HeadOnly,
    Full,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::HeadOnly => "head",
            Phase::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    /// 1-based update index.
    pub update: usize,
    pub phase: Phase,
    pub loss_total: f64,
    pub per_task: BTreeMap<Tier, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub tiers: Vec<Tier>,
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    /// `update,phase,loss_total,loss_<tier>...`; a task absent from a batch
    /// leaves its cell empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("update,phase,loss_total");
        for t in &self.tiers {
            let _ = write!(out, ",loss_{t}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.update, r.phase, r.loss_total);
            for t in &self.tiers {
                out.push(',');
                if let Some(v) = r.per_task.get(t) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Mean total loss over the last `n` updates.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let k = n.min(self.rows.len());
        if k == 0 {
            return None;
        }
        Some(self.rows[self.rows.len() - k..].iter().map(|r| r.loss_total).sum::<f64>() / k as f64)
    }
}

type LabelTable = Vec<BTreeMap<Tier, Vec<Option<usize>>>>;

fn label_table(utts: &[Utterance], tiers: &[Tier]) -> Result<LabelTable, EncoderError> {
    let mut out = Vec::with_capacity(utts.len());
    for u in utts {
        let mut m = BTreeMap::new();
        for &t in tiers {
            let labels = match build_training_labels(u, t) {
                Ok(seq) => seq.labels,
                // an utterance without annotations on this tier only contributes masked frames
                Err(DataError::EmptyTier { .. }) => vec![None; u.n_frames()],
                Err(e) => return Err(e.into()),
            };
            m.insert(t, labels);
        }
        out.push(m);
    }
    Ok(out)
}

fn sgd_step(model: &mut EncoderModel, grads: &super::Gradients, lr: f64, phase: Phase) {
    debug_assert_eq!(model.config.optimizer, Optimizer::Sgd);
    for ((name, p), (_, g)) in model.params_mut().into_iter().zip(grads.tensors()) {
        if phase == Phase::HeadOnly && !name.starts_with("heads.") {
            continue;
        }
        p.axpy(-lr, g);
    }
}

/// Builds a model for `tasks` and trains it on every utterance of `corpus`.
pub fn train(cfg: &EncoderConfig, corpus: &Corpus, tasks: &[TaskSpec]) -> Result<(EncoderModel, TrainingLog), EncoderError> {
    if let Some(d) = corpus.d_input() {
        if d != cfg.d_input {
            return Err(EncoderError::Config(format!("corpus frames have {d} features, config says {}", cfg.d_input)));
        }
    }
    let mut model = EncoderModel::new(cfg, tasks)?;
    let log = train_model(&mut model, &corpus.utterances, |_| {})?;
    Ok((model, log))
}

/// Runs the configured number of SGD updates on `model` in place.
///
/// Updates `1..=head_only_updates` touch only the heads; the rest update every
/// parameter. Batches are packed from a per-epoch shuffle seeded by the
/// config, so the run is reproducible. `on_update` sees each log row as it is
/// produced.
pub fn train_model(
    model: &mut EncoderModel,
    utterances: &[Utterance],
    mut on_update: impl FnMut(&LogRow),
) -> Result<TrainingLog, EncoderError> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if utterances.is_empty() {
        return Err(EncoderError::Config("no training utterances".into()));
    }
    let tiers = model.tiers();
    let labels = label_table(utterances, &tiers)?;
    let any_labeled = labels.iter().any(|m| m.values().any(|l| l.iter().any(Option::is_some)));
    if !any_labeled {
        return Err(EncoderError::NoLabeledFrames);
    }
    let lengths: Vec<usize> = utterances.iter().map(Utterance::n_frames).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut log = TrainingLog {
        tiers: tiers.clone(),
        rows: Vec::with_capacity(cfg.total_updates),
    };
    let mut pending: std::vec::IntoIter<Vec<usize>> = Vec::new().into_iter();
    let mut update = 0;
    while update < cfg.total_updates {
        let idx = match pending.next() {
            Some(b) => b,
            None => {
                let mut order: Vec<usize> = (0..utterances.len()).collect();
                order.shuffle(&mut rng);
                pending = make_batches(&order, &lengths, cfg.batch_max_frames).into_iter();
                continue;
            }
        };
        let batch = TrainingBatch {
            items: idx
                .iter()
                .map(|&i| BatchItem {
                    id: &utterances[i].id,
                    frames: &utterances[i].frames,
                    labels: labels[i].iter().map(|(t, l)| (*t, l.as_slice())).collect(),
                })
                .collect(),
        };
        let phase = if update < cfg.head_only_updates { Phase::HeadOnly } else { Phase::Full };
        let (terms, grads) = match loss_and_gradients(model, &batch) {
            Ok(r) => r,
            Err(EncoderError::NoLabeledFrames) => continue,
            Err(EncoderError::NumericalFailure { .. }) => {
                return Err(EncoderError::TrainingDiverged {
                    update: update + 1,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        if !terms.total.is_finite() || terms.total > DIVERGENCE_LOSS {
            return Err(EncoderError::TrainingDiverged {
                update: update + 1,
                loss: terms.total,
            });
        }
        sgd_step(model, &grads, cfg.learning_rate, phase);
        if !model.is_finite() {
            return Err(EncoderError::TrainingDiverged {
                update: update + 1,
                loss: terms.total,
            });
        }
        update += 1;
        let row = LogRow {
            update,
            phase,
            loss_total: terms.total,
            per_task: terms.per_task,
        };
        on_update(&row);
        log.rows.push(row);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_packing() {
        let lengths = [100, 250, 100, 500, 50, 60];
        let b = make_batches(&[0, 1, 2, 3, 4, 5], &lengths, 400);
        assert_eq!(b, vec![vec![0, 1], vec![2], vec![3], vec![4, 5]]);
        let b = make_batches(&[5, 4, 0], &lengths, 400);
        assert_eq!(b, vec![vec![5, 4, 0]]);
    }

    #[test]
    fn csv_layout() {
        let log = TrainingLog {
            tiers: vec![Tier::Sex, Tier::Tone],
            rows: vec![LogRow {
                update: 1,
                phase: Phase::HeadOnly,
                loss_total: 1.5,
                per_task: BTreeMap::from([(Tier::Tone, 1.5)]),
            }],
        };
        assert_eq!(log.to_csv(), "update,phase,loss_total,loss_sex,loss_tone\n1,head,1.5,,1.5\n");
    }
}
