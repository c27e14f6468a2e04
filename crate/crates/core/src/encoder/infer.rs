use std::collections::BTreeMap;

use rayon::prelude::*;

use super::forward::forward;
use super::model::EncoderModel;
use super::EncoderError;
use crate::data::{central_frame, Tier, Utterance};
use crate::linalg::Matrix;

/// Index of the largest entry; the lowest index wins ties.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Framewise argmax class per head.
pub fn predict_frames(model: &EncoderModel, frames: &Matrix) -> Result<BTreeMap<Tier, Vec<usize>>, EncoderError> {
    let out = forward(model, frames)?;
    Ok(out
        .logits
        .iter()
        .map(|(t, lg)| (*t, (0..lg.rows()).map(|i| argmax(lg.row(i))).collect()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    /// Fraction correct; zero when nothing was scored.
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Scores each head at the central frame of every segment annotated on its
/// tier. Unannotated segments are skipped.
pub fn central_frame_accuracy(model: &EncoderModel, utterances: &[Utterance]) -> Result<BTreeMap<Tier, Accuracy>, EncoderError> {
    let per_utt: Vec<Result<BTreeMap<Tier, Accuracy>, EncoderError>> = utterances
        .par_iter()
        .map(|u| {
            let pred = predict_frames(model, &u.frames)?;
            let mut acc: BTreeMap<Tier, Accuracy> = BTreeMap::new();
            for (tier, p) in &pred {
                let a = acc.entry(*tier).or_default();
                for seg in &u.segments {
                    if let Some(reference) = u.attribute(seg, *tier) {
                        a.total += 1;
                        a.correct += usize::from(p[central_frame(seg)] == reference);
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut out: BTreeMap<Tier, Accuracy> = model.tiers().into_iter().map(|t| (t, Accuracy::default())).collect();
    for r in per_utt {
        for (t, a) in r? {
            let o = out.get_mut(&t).expect("model tier");
            o.correct += a.correct;
            o.total += a.total;
        }
    }
    Ok(out)
}

/// Central-frame features of one layer with the segments' attributes,
/// one row per segment in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures {
    pub layer: usize,
    pub features: Matrix,
    /// `utt_id:segment_index`.
    pub sample_ids: Vec<String>,
    pub tone: Vec<Option<usize>>,
    pub final_class: Vec<Option<usize>>,
    pub sex: Vec<usize>,
}

impl LayerFeatures {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn labels(&self, tier: Tier) -> Vec<Option<usize>> {
        match tier {
            Tier::Tone => self.tone.clone(),
            Tier::Final => self.final_class.clone(),
            Tier::Sex => self.sex.iter().map(|s| Some(*s)).collect(),
        }
    }
}

/// Features of every layer (index 0 is the first transformer layer), from a
/// single forward pass per utterance.
pub fn extract_all_layers(model: &EncoderModel, utterances: &[Utterance]) -> Result<Vec<LayerFeatures>, EncoderError> {
    if utterances.iter().all(|u| u.segments.is_empty()) {
        return Err(EncoderError::Shape("no segments to extract features from".into()));
    }
    let per_utt: Vec<Result<Vec<Matrix>, EncoderError>> = utterances
        .par_iter()
        .filter(|u| !u.segments.is_empty())
        .map(|u| {
            let out = forward(model, &u.frames)?;
            let idx: Vec<usize> = u.segments.iter().map(central_frame).collect();
            Ok(out.layers.iter().map(|l| l.select_rows(&idx)).collect())
        })
        .collect();
    let mut rows: Vec<Vec<Matrix>> = vec![Vec::new(); model.n_layers()];
    for r in per_utt {
        for (l, m) in r?.into_iter().enumerate() {
            rows[l].push(m);
        }
    }
    let mut sample_ids = Vec::new();
    let mut tone = Vec::new();
    let mut final_class = Vec::new();
    let mut sex = Vec::new();
    for u in utterances {
        for (i, s) in u.segments.iter().enumerate() {
            sample_ids.push(format!("{}:{i}", u.id));
            tone.push(s.tone);
            final_class.push(s.final_class);
            sex.push(u.sex);
        }
    }
    rows.into_iter()
        .enumerate()
        .map(|(layer, parts)| {
            let parts: Vec<&Matrix> = parts.iter().collect();
            Ok(LayerFeatures {
                layer,
                features: Matrix::vstack(&parts)?,
                sample_ids: sample_ids.clone(),
                tone: tone.clone(),
                final_class: final_class.clone(),
                sex: sex.clone(),
            })
        })
        .collect()
}

pub fn extract_features(model: &EncoderModel, utterances: &[Utterance], layer: usize) -> Result<LayerFeatures, EncoderError> {
    if layer >= model.n_layers() {
        return Err(EncoderError::InvalidLayer {
            layer,
            n_layers: model.n_layers(),
        });
    }
    let mut all = extract_all_layers(model, utterances)?;
    Ok(all.swap_remove(layer))
}
