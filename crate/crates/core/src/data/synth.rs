//! Synthetic corpus with known tone, final and sex attributes.
//!
//! Each frame vector is laid out as
//!
//! * `[0]` pitch: `pitch_unit · scale(sex) · (1 + contour(tone, τ)) + offset(sex)`
//! * `[1]` pitch slope: the time derivative of the contour under the same scaling
//! * `[2..]` a spectral template fixed per final class
//!
//! plus i.i.d. Gaussian noise on every coordinate. `τ ∈ (0, 1)` is the
//! normalised position of the frame inside its segment. Sex scales the whole
//! pitch track, so tone identity is only recoverable relative to the speaker's
//! pitch range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Corpus, DataError, Segment, Utterance, Vocabularies};
use crate::linalg::Matrix;

pub const TONE_CONTOURS: [&str; 5] = ["high-level", "rising", "dipping", "falling", "short-neutral"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_utterances: usize,
    pub segments_min: usize,
    pub segments_max: usize,
    pub segment_frames_min: usize,
    pub segment_frames_max: usize,
    pub d_input: usize,
    pub n_finals: usize,
    pub noise: f64,
    pub pitch_unit: f64,
    pub contour_amplitude: f64,
    pub female_pitch_scale: f64,
    pub female_pitch_offset: f64,
    pub template_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_utterances: 800,
            segments_min: 6,
            segments_max: 10,
            segment_frames_min: 5,
            segment_frames_max: 15,
            d_input: 16,
            n_finals: 8,
            noise: 0.05,
            pitch_unit: 8.0,
            contour_amplitude: 0.15,
            female_pitch_scale: 2.0,
            female_pitch_offset: 0.0,
            template_scale: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.n_utterances == 0 {
            return bad("n_utterances must be at least 1");
        }
        if self.d_input < 4 {
            return bad("d_input must be at least 4");
        }
        if self.segments_min == 0 || self.segments_min > self.segments_max {
            return bad("need 1 <= segments_min <= segments_max");
        }
        if self.segment_frames_min == 0 || self.segment_frames_min > self.segment_frames_max {
            return bad("need 1 <= segment_frames_min <= segment_frames_max");
        }
        if self.n_finals == 0 {
            return bad("n_finals must be at least 1");
        }
        for (name, v) in [
            ("noise", self.noise),
            ("pitch_unit", self.pitch_unit),
            ("contour_amplitude", self.contour_amplitude),
            ("female_pitch_scale", self.female_pitch_scale),
            ("template_scale", self.template_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DataError::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        if !self.female_pitch_offset.is_finite() {
            return bad("female_pitch_offset must be finite");
        }
        Ok(())
    }
}

/// Contour value and its derivative at normalised time `tau`.
pub(crate) fn contour(tone: usize, tau: f64) -> (f64, f64) {
    use std::f64::consts::PI;
    match tone {
        0 => (1.0, 0.0),
        1 => (-0.6 + 1.6 * tau, 1.6),
        2 => (-0.6 - 1.2 * (PI * tau).sin() + 0.8 * tau, -1.2 * PI * (PI * tau).cos() + 0.8),
        3 => (1.0 - 2.0 * tau, -2.0),
        4 => (-0.3 * tau, -0.3),
        _ => unreachable!("five tone contours"),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Deterministic for a given `(cfg, seed)`. Utterance `i` draws from its own
/// ChaCha stream, so generation order does not affect the result.
pub fn synth_corpus(cfg: &SynthConfig, seed: u64) -> Result<Corpus, DataError> {
    cfg.validate()?;
    let spectral = cfg.d_input - 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates: Vec<Vec<f64>> = (0..cfg.n_finals)
        .map(|_| (0..spectral).map(|_| normal(&mut rng) * cfg.template_scale).collect())
        .collect();

    let width = cfg.n_utterances.to_string().len().max(4);
    let mut utterances = Vec::with_capacity(cfg.n_utterances);
    for i in 0..cfg.n_utterances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let sex = rng.gen_range(0..2usize);
        let (scale, offset) = if sex == 0 {
            (1.0, 0.0)
        } else {
            (cfg.female_pitch_scale, cfg.female_pitch_offset)
        };
        let n_seg = rng.gen_range(cfg.segments_min..=cfg.segments_max);
        let mut segments = Vec::with_capacity(n_seg);
        let mut rows: Vec<f64> = Vec::new();
        let mut pos = 0;
        for _ in 0..n_seg {
            let len = rng.gen_range(cfg.segment_frames_min..=cfg.segment_frames_max);
            let tone = rng.gen_range(0..5usize);
            let fin = rng.gen_range(0..cfg.n_finals);
            for f in 0..len {
                let tau = (f as f64 + 0.5) / len as f64;
                let (c, dc) = contour(tone, tau);
                let a = cfg.contour_amplitude;
                let pitch = cfg.pitch_unit * scale * (1.0 + a * c) + offset;
                let slope = cfg.pitch_unit * scale * a * dc;
                rows.push(pitch);
                rows.push(slope);
                rows.extend_from_slice(&templates[fin]);
            }
            segments.push(Segment {
                start_frame: pos,
                end_frame: pos + len - 1,
                tone: Some(tone),
                final_class: Some(fin),
            });
            pos += len;
        }
        for v in rows.iter_mut() {
            let noisy = *v + cfg.noise * normal(&mut rng);
            // stored features are f32, keep the in-memory corpus identical to what is written
            *v = f64::from(noisy as f32);
        }
        let frames = Matrix::new(pos, cfg.d_input, rows).expect("rows built to shape");
        utterances.push(Utterance::new(format!("utt{i:0width$}"), frames, segments, sex)?);
    }
    Ok(Corpus {
        utterances,
        vocab: Vocabularies::synthetic(cfg.n_finals),
    })
}
