//! Checkpoint layout, all integers little-endian `u32`:
//!
//! ```text
//! "LLNM" version config_len config_utf8
//! { name_len name rank dim_0 .. dim_rank-1 f32_payload }*   until EOF
//! ```
//!
//! The config block is `key=value` lines holding every [`EncoderConfig`]
//! field plus one `task=<tier>:<cat>,<cat>,...` line per head.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::model::EncoderModel;
use super::{EncoderConfig, EncoderError, Optimizer, TaskSpec};
use crate::data::{LabelVocabulary, Tier};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LLNM";
const VERSION: u32 = 1;

fn config_block(model: &EncoderModel) -> String {
    let c = &model.config;
    let mut s = String::new();
    let _ = writeln!(s, "d_input={}", c.d_input);
    let _ = writeln!(s, "d_model={}", c.d_model);
    let _ = writeln!(s, "n_layers={}", c.n_layers);
    let _ = writeln!(s, "n_heads={}", c.n_heads);
    let _ = writeln!(s, "d_ff={}", c.d_ff);
    let _ = writeln!(s, "learning_rate={:e}", c.learning_rate);
    let _ = writeln!(s, "head_only_updates={}", c.head_only_updates);
    let _ = writeln!(s, "total_updates={}", c.total_updates);
    let _ = writeln!(s, "batch_max_frames={}", c.batch_max_frames);
    let _ = writeln!(s, "seed={}", c.seed);
    let _ = writeln!(s, "optimizer=sgd");
    for (tier, head) in &model.heads {
        let _ = writeln!(s, "task={tier}:{}", head.vocabulary.categories.join(","));
    }
    s
}

fn bad(msg: impl Into<String>) -> EncoderError {
    EncoderError::Checkpoint(msg.into())
}

fn parse_config(text: &str) -> Result<(EncoderConfig, Vec<TaskSpec>), EncoderError> {
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    let mut tasks = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("config line {line:?}")))?;
        if k == "task" {
            let (tier, cats) = v.split_once(':').ok_or_else(|| bad(format!("task line {line:?}")))?;
            let tier: Tier = tier.parse().map_err(bad)?;
            let vocab = LabelVocabulary::new(tier, cats.split(',').map(str::to_string).collect())?;
            tasks.push(TaskSpec::new(vocab));
        } else if kv.insert(k, v).is_some() {
            return Err(bad(format!("duplicate config key {k}")));
        }
    }
    fn get<T: std::str::FromStr>(kv: &BTreeMap<&str, &str>, k: &str) -> Result<T, EncoderError> {
        kv.get(k)
            .ok_or_else(|| bad(format!("config key {k} missing")))?
            .parse()
            .map_err(|_| bad(format!("config key {k} malformed")))
    }
    if kv.get("optimizer") != Some(&"sgd") {
        return Err(bad("unsupported optimizer"));
    }
    let cfg = EncoderConfig {
        d_input: get(&kv, "d_input")?,
        d_model: get(&kv, "d_model")?,
        n_layers: get(&kv, "n_layers")?,
        n_heads: get(&kv, "n_heads")?,
        d_ff: get(&kv, "d_ff")?,
        learning_rate: get(&kv, "learning_rate")?,
        head_only_updates: get(&kv, "head_only_updates")?,
        total_updates: get(&kv, "total_updates")?,
        batch_max_frames: get(&kv, "batch_max_frames")?,
        seed: get(&kv, "seed")?,
        optimizer: Optimizer::Sgd,
    };
    Ok((cfg, tasks))
}

/// Tensors are stored as `f32`; a reloaded model equals the saved one after
/// rounding every parameter to single precision.
pub fn write_checkpoint<W: Write>(mut w: W, model: &EncoderModel) -> Result<(), EncoderError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = config_block(model);
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(cfg.as_bytes());
    for (name, m) in model.params() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EncoderError> {
        if self.bytes.len() - self.pos < n {
            return Err(bad("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, EncoderError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<EncoderModel, EncoderError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4).map_err(|_| bad("missing LLNM header"))? != CHECKPOINT_MAGIC {
        return Err(bad("missing LLNM header"));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = c.u32()?;
    let text = std::str::from_utf8(c.take(len)?).map_err(|_| bad("config block is not UTF-8"))?;
    let (cfg, tasks) = parse_config(text)?;
    let mut model = EncoderModel::new(&cfg, &tasks)?;
    let expected = model.params().len();
    let mut seen = HashSet::new();
    {
        let mut params = model.params_mut();
        while !c.done() {
            let n = c.u32()?;
            let name = std::str::from_utf8(c.take(n)?).map_err(|_| bad("tensor name is not UTF-8"))?.to_string();
            let rank = c.u32()?;
            let dims = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
            let (_, target) = params
                .iter_mut()
                .find(|(p, _)| *p == name)
                .ok_or_else(|| bad(format!("unexpected tensor {name}")))?;
            if dims != [target.rows(), target.cols()] {
                return Err(bad(format!("tensor {name} has shape {dims:?}, expected {:?}", target.shape())));
            }
            let payload = c.take(dims.iter().product::<usize>() * 4)?;
            for (dst, src) in target.as_mut_slice().iter_mut().zip(payload.chunks_exact(4)) {
                *dst = f64::from(f32::from_le_bytes(src.try_into().expect("4 bytes")));
            }
            if !seen.insert(name.clone()) {
                return Err(bad(format!("tensor {name} appears twice")));
            }
        }
    }
    if seen.len() != expected {
        return Err(bad(format!("{} of {expected} tensors present", seen.len())));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &EncoderModel) -> Result<(), EncoderError> {
    write_checkpoint(std::io::BufWriter::new(std::fs::File::create(path)?), model)
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderModel, EncoderError> {
    read_checkpoint(std::fs::File::open(path)?)
}
