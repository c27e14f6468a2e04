//! On-disk corpus layout:
//!
//! ```text
//! <dir>/alignment.tsv
//! <dir>/vocab.tsv
//! <dir>/features/<utt_id>.lln
//! ```

use std::path::{Path, PathBuf};

use layerlens::data::{
    parse_alignment, read_features_file, write_alignment_file, write_features_file, Corpus, Vocabularies,
};

use crate::error::CliError;

pub const ALIGNMENT_FILE: &str = "alignment.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const FEATURES_DIR: &str = "features";

pub fn feature_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(FEATURES_DIR).join(format!("{id}.lln"))
}

/// Writes the corpus and returns the paths written, in a stable order.
pub fn save_corpus(dir: &Path, corpus: &Corpus, framerate_ms: u32) -> Result<Vec<PathBuf>, CliError> {
    let features = dir.join(FEATURES_DIR);
    std::fs::create_dir_all(&features).map_err(|e| CliError::io(features.display(), e))?;
    let alignment = dir.join(ALIGNMENT_FILE);
    write_alignment_file(&alignment, &corpus.utterances, &corpus.vocab, framerate_ms)?;
    let vocab = dir.join(VOCAB_FILE);
    std::fs::write(&vocab, corpus.vocab.to_tsv()).map_err(|e| CliError::io(vocab.display(), e))?;
    let mut out = vec![alignment, vocab];
    for u in &corpus.utterances {
        let p = feature_path(dir, &u.id);
        write_features_file(&p, &u.frames)?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_corpus(dir: &Path, framerate_ms: u32) -> Result<Corpus, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("corpus directory {} does not exist", dir.display())));
    }
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| CliError::io(p.display(), e))
    };
    let vocab = Vocabularies::from_tsv(&read(VOCAB_FILE)?)?;
    let skeletons = parse_alignment(&read(ALIGNMENT_FILE)?, &vocab, framerate_ms)?;
    if skeletons.is_empty() {
        return Err(CliError::Usage(format!("{} lists no utterances", dir.join(ALIGNMENT_FILE).display())));
    }
    let corpus = Corpus::assemble(skeletons, |id| read_features_file(&feature_path(dir, id)), vocab)?;
    if let Some(d) = corpus.d_input() {
        if let Some(u) = corpus.utterances.iter().find(|u| u.frames.cols() != d) {
            return Err(CliError::Usage(format!("{} has {} features, expected {d}", u.id, u.frames.cols())));
        }
    }
    Ok(corpus)
}
