//! Label TSV: `utt_id \t frame_index \t tier \t label`, masked frames omitted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{DataError, FrameLabelSequence, Tier, Vocabularies};

pub fn write_labels(rows: &[(&str, &FrameLabelSequence)], vocab: &Vocabularies) -> String {
    let mut out = String::new();
    for (id, seq) in rows {
        let v = vocab.get(seq.tier);
        for (frame, l) in seq.labels.iter().enumerate() {
            if let Some(c) = l {
                let _ = writeln!(out, "{id}\t{frame}\t{}\t{}", seq.tier, v.name(*c));
            }
        }
    }
    out
}

pub fn write_label_file(path: &Path, rows: &[(&str, &FrameLabelSequence)], vocab: &Vocabularies) -> Result<(), DataError> {
    std::fs::write(path, write_labels(rows, vocab))?;
    Ok(())
}

/// Rebuilds full-length sequences; `n_frames` gives each utterance's length.
pub fn parse_labels(
    text: &str,
    vocab: &Vocabularies,
    n_frames: &BTreeMap<String, usize>,
) -> Result<BTreeMap<(String, Tier), FrameLabelSequence>, DataError> {
    let mut out: BTreeMap<(String, Tier), FrameLabelSequence> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| DataError::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", f.len())));
        }
        let n = *n_frames
            .get(f[0])
            .ok_or_else(|| err(format!("unknown utterance {:?}", f[0])))?;
        let frame: usize = f[1].parse().map_err(|_| err(format!("bad frame index {:?}", f[1])))?;
        if frame >= n {
            return Err(err(format!("frame {frame} beyond utterance length {n}")));
        }
        let tier: Tier = f[2].parse().map_err(err)?;
        let class = vocab.get(tier).index_of(f[3]).map_err(|e| err(e.to_string()))?;
        let seq = out
            .entry((f[0].to_string(), tier))
            .or_insert_with(|| FrameLabelSequence::masked(tier, n));
        if seq.labels[frame].is_some() {
            return Err(err(format!("duplicate label for frame {frame}")));
        }
        seq.labels[frame] = Some(class);
    }
    Ok(out)
}

pub fn parse_label_file(
    path: &Path,
    vocab: &Vocabularies,
    n_frames: &BTreeMap<String, usize>,
) -> Result<BTreeMap<(String, Tier), FrameLabelSequence>, DataError> {
    parse_labels(&std::fs::read_to_string(path)?, vocab, n_frames)
}
