//! Analytic gradients against central finite differences.

use std::collections::BTreeMap;

use layerlens::data::{LabelVocabulary, Tier};
use layerlens::encoder::{loss_and_gradients, BatchItem, EncoderConfig, EncoderModel, TaskSpec, TrainingBatch};
use layerlens::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;

struct Fixture {
    frames: Vec<Matrix>,
    labels: Vec<BTreeMap<Tier, Vec<Option<usize>>>>,
}

fn fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let lens = [7usize, 5, 9];
    let frames = lens
        .iter()
        .map(|&n| Matrix::from_fn(n, 5, |_, _| rng.gen_range(-1.5..1.5)))
        .collect();
    let mut labels = Vec::new();
    for (u, &n) in lens.iter().enumerate() {
        let mut tone = vec![None; n];
        let mut sex = vec![None; n];
        for i in (u % 2..n).step_by(3) {
            tone[i] = Some(rng.gen_range(0..5));
        }
        // the middle utterance carries no sex labels at all
        if u != 1 {
            sex[n / 2] = Some(u % 2);
            sex[0] = Some(1 - u % 2);
        }
        labels.push(BTreeMap::from([(Tier::Tone, tone), (Tier::Sex, sex)]));
    }
    Fixture { frames, labels }
}

fn batch<'a>(f: &'a Fixture) -> TrainingBatch<'a> {
    TrainingBatch {
        items: f
            .frames
            .iter()
            .zip(&f.labels)
            .map(|(x, l)| BatchItem {
                id: "u",
                frames: x,
                labels: l.iter().map(|(t, v)| (*t, v.as_slice())).collect(),
            })
            .collect(),
    }
}

fn model(tiers: &[Tier], n_heads: usize) -> EncoderModel {
    let cfg = EncoderConfig {
        d_input: 5,
        d_model: 8,
        n_layers: 2,
        n_heads,
        d_ff: 16,
        seed: 3,
        ..EncoderConfig::default()
    };
    let tasks: Vec<TaskSpec> = tiers
        .iter()
        .map(|t| {
            TaskSpec::new(match t {
                Tier::Tone => LabelVocabulary::tones(),
                _ => LabelVocabulary::sexes(),
            })
        })
        .collect();
    let mut m = EncoderModel::new(&cfg, &tasks).unwrap();
    // move norm parameters and biases away from their initial constants so
    // their gradients are exercised in a generic position
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, p) in m.params_mut() {
        if name.contains("norm") || name.ends_with("bias") {
            for v in p.as_mut_slice() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    }
    m
}

fn check(tiers: &[Tier], n_heads: usize) -> f64 {
    let f = fixture();
    let b = batch(&f);
    let mut m = model(tiers, n_heads);
    let (_, grads) = loss_and_gradients(&m, &b).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, g)| (n, g.as_slice().to_vec()))
        .collect();
    let mut worst: f64 = 0.0;
    for (pi, (name, g)) in analytic.iter().enumerate() {
        for (j, a) in g.iter().enumerate() {
            let orig = m.params()[pi].1.as_slice()[j];
            m.params_mut()[pi].1.as_mut_slice()[j] = orig + EPS;
            let up = loss_and_gradients(&m, &b).unwrap().0.total;
            m.params_mut()[pi].1.as_mut_slice()[j] = orig - EPS;
            let down = loss_and_gradients(&m, &b).unwrap().0.total;
            m.params_mut()[pi].1.as_mut_slice()[j] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let scale = a.abs().max(numeric.abs());
            // entries that are zero up to round-off are compared absolutely
            let err = if scale < 1e-7 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            assert!(err <= TOL, "{name}[{j}]: analytic {a:e} numeric {numeric:e} rel {err:e}");
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn single_task_gradients_match_finite_differences() {
    let worst = check(&[Tier::Tone], 1);
    assert!(worst <= TOL);
}

#[test]
fn multitask_gradients_match_finite_differences() {
    let worst = check(&[Tier::Sex, Tier::Tone], 1);
    assert!(worst <= TOL);
}

#[test]
fn multihead_attention_gradients_match_finite_differences() {
    let worst = check(&[Tier::Tone], 2);
    assert!(worst <= TOL);
}
