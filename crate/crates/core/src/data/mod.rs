//! Utterances, aligned segments, frame labels and the synthetic corpus.
//!
//! Frames are indexed at a fixed 20 ms step. Training supervision is sparse:
//! only the central frame of a segment carries a label, every other frame is
//! masked (`None`, written as `O` in text formats).

mod alignment;
mod features;
mod labels;
mod synth;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::Matrix;

pub use alignment::{parse_alignment, parse_alignment_file, write_alignment, write_alignment_file, AlignedUtterance};
pub use features::{read_features, read_features_file, write_features, write_features_file, FEATURES_MAGIC};
pub use labels::{parse_label_file, parse_labels, write_label_file, write_labels};
pub use synth::{synth_corpus, SynthConfig, TONE_CONTOURS};

/// Frame step in milliseconds.
pub const DEFAULT_FRAMERATE_MS: u32 = 20;

/// Marker for masked frames in text formats.
pub const MASK_LABEL: &str = "O";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("utterance {utterance} has no segments annotated for tier {tier}")]
    EmptyTier { utterance: String, tier: Tier },
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("unknown {tier} label {label:?}")]
    Vocabulary { tier: Tier, label: String },
    #[error("malformed feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Annotation tier. Variant order is ascending by name, which fixes the
/// summation order of multitask losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Final,
    Sex,
    Tone,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Final, Tier::Sex, Tier::Tone];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Final => "final",
            Tier::Sex => "sex",
            Tier::Tone => "tone",
        }
    }

    pub fn short(self) -> char {
        match self {
            Tier::Final => 'f',
            Tier::Sex => 's',
            Tier::Tone => 't',
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tone" | "t" => Ok(Tier::Tone),
            "final" | "f" => Ok(Tier::Final),
            "sex" | "s" => Ok(Tier::Sex),
            other => Err(format!("unknown tier {other:?} (expected tone, final or sex)")),
        }
    }
}

/// Parses a task list such as `tone,sex` or a compact code such as `st`.
pub fn parse_tiers(spec: &str) -> Result<Vec<Tier>, String> {
    let spec = spec.trim();
    let mut tiers: Vec<Tier> = if spec.contains(',') || spec.len() > 2 {
        spec.split(',').map(str::parse).collect::<Result<_, _>>()?
    } else {
        spec.chars().map(|c| c.to_string().parse()).collect::<Result<_, _>>()?
    };
    if tiers.is_empty() {
        return Err("empty tier list".into());
    }
    let n = tiers.len();
    tiers.sort();
    tiers.dedup();
    if tiers.len() != n {
        return Err(format!("duplicate tier in {spec:?}"));
    }
    Ok(tiers)
}

/// Ordered category names for one tier. `O` is never a category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    pub tier: Tier,
    pub categories: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(tier: Tier, categories: Vec<String>) -> Result<Self, DataError> {
        if categories.is_empty() {
            return Err(DataError::Validation(format!("{tier} vocabulary is empty")));
        }
        for (i, c) in categories.iter().enumerate() {
            if c == MASK_LABEL {
                return Err(DataError::Validation(format!(
                    "{MASK_LABEL:?} is a mask marker and cannot be a {tier} category"
                )));
            }
            if c.is_empty() || c.contains(char::is_whitespace) {
                return Err(DataError::Validation(format!("bad {tier} category {c:?}")));
            }
            if categories[..i].contains(c) {
                return Err(DataError::Validation(format!("duplicate {tier} category {c:?}")));
            }
        }
        Ok(Self { tier, categories })
    }

    pub fn tones() -> Self {
        Self::new(Tier::Tone, (1..=5).map(|i| format!("T{i}")).collect()).unwrap()
    }

    pub fn finals(n: usize) -> Self {
        Self::new(Tier::Final, (1..=n).map(|i| format!("F{i}")).collect()).unwrap()
    }

    pub fn sexes() -> Self {
        Self::new(Tier::Sex, vec!["male".into(), "female".into()]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize, DataError> {
        self.categories
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| DataError::Vocabulary {
                tier: self.tier,
                label: label.to_string(),
            })
    }

    pub fn name(&self, id: usize) -> &str {
        &self.categories[id]
    }
}

/// Vocabularies for all three tiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabularies {
    pub tone: LabelVocabulary,
    pub final_: LabelVocabulary,
    pub sex: LabelVocabulary,
}

impl Vocabularies {
    pub fn synthetic(n_finals: usize) -> Self {
        Self {
            tone: LabelVocabulary::tones(),
            final_: LabelVocabulary::finals(n_finals),
            sex: LabelVocabulary::sexes(),
        }
    }

    pub fn get(&self, tier: Tier) -> &LabelVocabulary {
        match tier {
            Tier::Tone => &self.tone,
            Tier::Final => &self.final_,
            Tier::Sex => &self.sex,
        }
    }

    /// Text form: one `tier \t index \t name` line per category.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for tier in Tier::ALL {
            for (i, c) in self.get(tier).categories.iter().enumerate() {
                out.push_str(&format!("{tier}\t{i}\t{c}\n"));
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, DataError> {
        let mut cats: [Vec<String>; 3] = Default::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let err = |m: &str| DataError::Parse {
                line: lineno + 1,
                message: m.to_string(),
            };
            if f.len() != 3 {
                return Err(err("expected 3 tab-separated fields"));
            }
            let tier: Tier = f[0].parse().map_err(|e: String| err(&e))?;
            let idx: usize = f[1].parse().map_err(|_| err("bad category index"))?;
            let slot = &mut cats[tier as usize];
            if idx != slot.len() {
                return Err(err("category indices must be consecutive from 0"));
            }
            slot.push(f[2].to_string());
        }
        let [final_, sex, tone] = cats;
        Ok(Self {
            tone: LabelVocabulary::new(Tier::Tone, tone)?,
            final_: LabelVocabulary::new(Tier::Final, final_)?,
            sex: LabelVocabulary::new(Tier::Sex, sex)?,
        })
    }
}

/// A tone or phone interval, in inclusive frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub tone: Option<usize>,
    pub final_class: Option<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Midpoint of a segment; ties on even lengths resolve to the earlier frame.
pub fn central_frame(seg: &Segment) -> usize {
    (seg.start_frame + seg.end_frame) / 2
}

/// Checks ordering, non-overlap and (when known) the frame bound.
pub(crate) fn validate_segments(id: &str, segments: &[Segment], n_frames: Option<usize>) -> Result<(), DataError> {
    let mut prev_end: Option<usize> = None;
    for s in segments {
        if s.start_frame > s.end_frame {
            return Err(DataError::Validation(format!(
                "{id}: segment [{}, {}] ends before it starts",
                s.start_frame, s.end_frame
            )));
        }
        if let Some(pe) = prev_end {
            if s.start_frame <= pe {
                return Err(DataError::Validation(format!(
                    "{id}: segment [{}, {}] overlaps or precedes the previous one ending at {pe}",
                    s.start_frame, s.end_frame
                )));
            }
        }
        if let Some(n) = n_frames {
            if s.end_frame >= n {
                return Err(DataError::Validation(format!(
                    "{id}: segment ends at frame {} but the utterance has {n} frames",
                    s.end_frame
                )));
            }
        }
        prev_end = Some(s.end_frame);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `n_frames × d_input`.
    pub frames: Matrix,
    pub segments: Vec<Segment>,
    /// Constant across all segments of the utterance.
    pub sex: usize,
}

impl Utterance {
    pub fn new(id: String, frames: Matrix, segments: Vec<Segment>, sex: usize) -> Result<Self, DataError> {
        validate_segments(&id, &segments, Some(frames.rows()))?;
        Ok(Self {
            id,
            frames,
            segments,
            sex,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    /// Category of `tier` for one segment; sex comes from the utterance.
    pub fn attribute(&self, seg: &Segment, tier: Tier) -> Option<usize> {
        match tier {
            Tier::Tone => seg.tone,
            Tier::Final => seg.final_class,
            Tier::Sex => Some(self.sex),
        }
    }
}

/// Per-frame labels for one tier; `None` is the masked `O` marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabelSequence {
    pub tier: Tier,
    pub labels: Vec<Option<usize>>,
}

impl FrameLabelSequence {
    pub fn masked(tier: Tier, n_frames: usize) -> Self {
        Self {
            tier,
            labels: vec![None; n_frames],
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Space-separated rendering, `O` for masked frames.
    pub fn render(&self, vocab: &LabelVocabulary) -> String {
        self.labels
            .iter()
            .map(|l| l.map_or(MASK_LABEL, |c| vocab.name(c)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Sparse training targets: the central frame of every segment annotated for
/// `tier` gets its category, everything else is masked.
pub fn build_training_labels(utt: &Utterance, tier: Tier) -> Result<FrameLabelSequence, DataError> {
    let mut seq = FrameLabelSequence::masked(tier, utt.n_frames());
    let mut any = false;
    for seg in &utt.segments {
        if let Some(c) = utt.attribute(seg, tier) {
            seq.labels[central_frame(seg)] = Some(c);
            any = true;
        }
    }
    if !any {
        return Err(DataError::EmptyTier {
            utterance: utt.id.clone(),
            tier,
        });
    }
    Ok(seq)
}

/// Utterances plus the vocabularies their category ids refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub vocab: Vocabularies,
}

impl Corpus {
    pub fn d_input(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.frames.cols())
    }

    pub fn segment_count(&self) -> usize {
        self.utterances.iter().map(|u| u.segments.len()).sum()
    }

    /// Deterministic split: the trailing `test_fraction` of utterances form the test set.
    pub fn split(&self, test_fraction: f64) -> (Corpus, Corpus) {
        let n = self.utterances.len();
        let mut n_test = (n as f64 * test_fraction).round() as usize;
        if n >= 2 {
            n_test = n_test.clamp(1, n - 1);
        } else {
            n_test = 0;
        }
        let (train, test) = self.utterances.split_at(n - n_test);
        (
            Corpus {
                utterances: train.to_vec(),
                vocab: self.vocab.clone(),
            },
            Corpus {
                utterances: test.to_vec(),
                vocab: self.vocab.clone(),
            },
        )
    }

    /// Attaches feature matrices to alignment skeletons, matching by id.
    pub fn assemble(
        skeletons: Vec<AlignedUtterance>,
        mut frames_for: impl FnMut(&str) -> Result<Matrix, DataError>,
        vocab: Vocabularies,
    ) -> Result<Self, DataError> {
        let mut utterances = Vec::with_capacity(skeletons.len());
        for sk in skeletons {
            let frames = frames_for(&sk.id)?;
            let sex = sk
                .sex
                .ok_or_else(|| DataError::Validation(format!("{}: no sex annotation", sk.id)))?;
            utterances.push(Utterance::new(sk.id, frames, sk.segments, sex)?);
        }
        Ok(Self { utterances, vocab })
    }
}
