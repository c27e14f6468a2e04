//! Alignment TSV: `utt_id \t start_sec \t end_sec \t label \t tier`.
//!
//! Lines sharing an utterance and identical boundaries describe one segment
//! annotated on several tiers. Seconds carry at most three decimals and are
//! converted to frames as `floor(ms / framerate_ms)` for both boundaries.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{validate_segments, DataError, Segment, Tier, Utterance, Vocabularies};

/// An utterance as described by an alignment file, before features are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedUtterance {
    pub id: String,
    pub segments: Vec<Segment>,
    pub sex: Option<usize>,
}

fn parse_millis(field: &str) -> Option<u64> {
    let (int, frac) = match field.split_once('.') {
        Some((i, f)) => (i, f),
        None => (field, ""),
    };
    if int.is_empty() || frac.len() > 3 || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut ms: u64 = int.parse::<u64>().ok()?.checked_mul(1000)?;
    let mut scale = 100;
    for b in frac.bytes() {
        ms += u64::from(b - b'0') * scale;
        scale /= 10;
    }
    Some(ms)
}

pub fn parse_alignment(text: &str, vocab: &Vocabularies, framerate_ms: u32) -> Result<Vec<AlignedUtterance>, DataError> {
    if framerate_ms == 0 {
        return Err(DataError::Validation("framerate must be positive".into()));
    }
    let mut out: Vec<AlignedUtterance> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| DataError::Parse { line: lineno, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(err("empty utterance id".into()));
        }
        let start_ms = parse_millis(fields[1]).ok_or_else(|| err(format!("bad start time {:?}", fields[1])))?;
        let end_ms = parse_millis(fields[2]).ok_or_else(|| err(format!("bad end time {:?}", fields[2])))?;
        if end_ms < start_ms {
            return Err(err(format!("end {} precedes start {}", fields[2], fields[1])));
        }
        let tier: Tier = fields[4].parse().map_err(err)?;
        let class = vocab
            .get(tier)
            .index_of(fields[3])
            .map_err(|e| err(e.to_string()))?;
        let start_frame = (start_ms / u64::from(framerate_ms)) as usize;
        let end_frame = (end_ms / u64::from(framerate_ms)) as usize;

        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            out.push(AlignedUtterance {
                id: id.to_string(),
                segments: Vec::new(),
                sex: None,
            });
            out.len() - 1
        });
        let utt = &mut out[slot];
        let same_as_last = utt
            .segments
            .last()
            .is_some_and(|s| s.start_frame == start_frame && s.end_frame == end_frame);
        if !same_as_last {
            if let Some(last) = utt.segments.last() {
                if start_frame <= last.end_frame {
                    return Err(DataError::Validation(format!(
                        "line {lineno}: {id} segment [{start_frame}, {end_frame}] is out of order or overlaps [{}, {}]",
                        last.start_frame, last.end_frame
                    )));
                }
            }
            utt.segments.push(Segment {
                start_frame,
                end_frame,
                tone: None,
                final_class: None,
            });
        }
        let seg = utt.segments.last_mut().expect("segment just ensured");
        let conflict = |what: &str| {
            DataError::Validation(format!("line {lineno}: conflicting {what} annotation for {id}"))
        };
        match tier {
            Tier::Tone => {
                if seg.tone.is_some_and(|t| t != class) {
                    return Err(conflict("tone"));
                }
                seg.tone = Some(class);
            }
            Tier::Final => {
                if seg.final_class.is_some_and(|t| t != class) {
                    return Err(conflict("final"));
                }
                seg.final_class = Some(class);
            }
            Tier::Sex => {
                if utt.sex.is_some_and(|s| s != class) {
                    return Err(conflict("sex"));
                }
                utt.sex = Some(class);
            }
        }
    }
    for u in &out {
        validate_segments(&u.id, &u.segments, None)?;
    }
    Ok(out)
}

pub fn parse_alignment_file(path: &Path, vocab: &Vocabularies, framerate_ms: u32) -> Result<Vec<AlignedUtterance>, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_alignment(&text, vocab, framerate_ms)
}

fn fmt_seconds(frame: usize, framerate_ms: u32) -> String {
    let ms = frame as u64 * u64::from(framerate_ms);
    format!("{}.{:03}", ms / 1000, ms % 1000)
}

/// Writes one line per annotated tier per segment; sex is repeated on every
/// segment since it is a segment-level target.
pub fn write_alignment(utts: &[AlignedUtterance], vocab: &Vocabularies, framerate_ms: u32) -> String {
    let mut out = String::new();
    for u in utts {
        for s in &u.segments {
            let a = fmt_seconds(s.start_frame, framerate_ms);
            let b = fmt_seconds(s.end_frame, framerate_ms);
            let mut line = |label: &str, tier: Tier| {
                let _ = writeln!(out, "{}\t{a}\t{b}\t{label}\t{tier}", u.id);
            };
            if let Some(t) = s.tone {
                line(vocab.tone.name(t), Tier::Tone);
            }
            if let Some(f) = s.final_class {
                line(vocab.final_.name(f), Tier::Final);
            }
            if let Some(x) = u.sex {
                line(vocab.sex.name(x), Tier::Sex);
            }
        }
    }
    out
}

pub fn write_alignment_file(path: &Path, utts: &[Utterance], vocab: &Vocabularies, framerate_ms: u32) -> Result<(), DataError> {
    let skeletons: Vec<AlignedUtterance> = utts.iter().map(AlignedUtterance::from).collect();
    std::fs::write(path, write_alignment(&skeletons, vocab, framerate_ms))?;
    Ok(())
}

impl From<&Utterance> for AlignedUtterance {
    fn from(u: &Utterance) -> Self {
        Self {
            id: u.id.clone(),
            segments: u.segments.clone(),
            sex: Some(u.sex),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabularies {
        Vocabularies::synthetic(8)
    }

    #[test]
    fn seconds_to_frames() {
        let u = parse_alignment("utt1\t0.00\t0.22\tT1\ttone\n", &vocab(), 20).unwrap();
        assert_eq!(u.len(), 1);
        assert_eq!(
            u[0].segments,
            vec![Segment {
                start_frame: 0,
                end_frame: 11,
                tone: Some(0),
                final_class: None
            }]
        );
        assert_eq!(u[0].sex, None);
    }

    #[test]
    fn merges_tiers_on_shared_boundaries() {
        let text = "# comment\nu\t0.00\t0.1\tT2\ttone\nu\t0.00\t0.100\tF3\tfinal\nu\t0.00\t0.10\tfemale\tsex\nu\t0.12\t0.2\tT4\ttone\n";
        let u = parse_alignment(text, &vocab(), 20).unwrap();
        assert_eq!(u[0].segments.len(), 2);
        assert_eq!(u[0].segments[0].final_class, Some(2));
        assert_eq!(u[0].sex, Some(1));
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_alignment("", &vocab(), 20).unwrap().is_empty());
        assert!(parse_alignment("# only a comment\n", &vocab(), 20).unwrap().is_empty());
    }

    #[test]
    fn out_of_order_is_rejected() {
        let text = "u\t0.50\t0.60\tT1\ttone\nu\t0.00\t0.20\tT2\ttone\n";
        assert!(matches!(parse_alignment(text, &vocab(), 20), Err(DataError::Validation(_))));
        let overlap = "u\t0.00\t0.20\tT1\ttone\nu\t0.20\t0.40\tT2\ttone\n";
        assert!(matches!(parse_alignment(overlap, &vocab(), 20), Err(DataError::Validation(_))));
    }

    #[test]
    fn malformed_lines_report_their_number() {
        for bad in [
            "u\t0.00\t0.20\tT1\n",
            "u\t0.0000\t0.20\tT1\ttone\n",
            "u\t-1\t0.20\tT1\ttone\n",
            "u\t0.00\t0.20\tT9\ttone\n",
            "u\t0.00\t0.20\tT1\tpitch\n",
            "u\t0.30\t0.20\tT1\ttone\n",
        ] {
            let text = format!("u0\t0.00\t0.02\tT1\ttone\n{bad}");
            match parse_alignment(&text, &vocab(), 20) {
                Err(DataError::Parse { line, .. }) => assert_eq!(line, 2, "{bad:?}"),
                other => panic!("{bad:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn conflicting_annotations() {
        let text = "u\t0.00\t0.20\tT1\ttone\nu\t0.00\t0.20\tT2\ttone\n";
        assert!(parse_alignment(text, &vocab(), 20).is_err());
        let sex = "u\t0.00\t0.20\tmale\tsex\nu\t0.30\t0.40\tfemale\tsex\n";
        assert!(parse_alignment(sex, &vocab(), 20).is_err());
    }
}
