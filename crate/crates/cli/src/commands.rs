use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use layerlens::analysis::{
    line_chart_svg, project_2d, projection_csv, report_csv, scatter_svg, silhouette_score, sweep_features,
    trend_summary, LayerSweepConfig,
};
use layerlens::data::{
    build_training_labels, parse_tiers, synth_corpus, write_label_file, Corpus, DataError, FrameLabelSequence,
    SynthConfig, Tier, DEFAULT_FRAMERATE_MS,
};
use layerlens::encoder::{
    central_frame_accuracy, extract_all_layers, extract_features, load_checkpoint, save_checkpoint, train_model,
    EncoderConfig, EncoderError, EncoderModel, Optimizer, TaskSpec,
};
use serde::{Deserialize, Serialize};

use crate::corpus_io::{load_corpus, save_corpus};
use crate::error::CliError;
use crate::manifest::RunManifest;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn tiers_arg(spec: &str) -> Result<Vec<Tier>, CliError> {
    parse_tiers(spec).map_err(CliError::Usage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

/// Options shared by every command that reads a corpus directory.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusArgs {
    /// Corpus directory written by `synth` (alignment.tsv, vocab.tsv, features/).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Frame step used to convert alignment times to frame indices.
    #[arg(long, default_value_t = DEFAULT_FRAMERATE_MS)]
    pub framerate_ms: u32,
    /// Fraction of utterances, taken from the end of the corpus, held out as the test split.
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
}

impl CorpusArgs {
    fn load(&self, split: Split) -> Result<Corpus, CliError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Usage("--test-fraction must be in (0, 1)".into()));
        }
        let corpus = load_corpus(&self.corpus, self.framerate_ms)?;
        let (train, test) = corpus.split(self.test_fraction);
        Ok(match split {
            Split::Train => train,
            Split::Test => test,
            Split::All => corpus,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Number of utterances to generate.
    #[arg(long, default_value_t = 800)]
    pub utterances: usize,
    #[arg(long, env = "LAYERLENS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub segments_min: usize,
    #[arg(long, default_value_t = 10)]
    pub segments_max: usize,
    #[arg(long, default_value_t = 5)]
    pub segment_frames_min: usize,
    #[arg(long, default_value_t = 15)]
    pub segment_frames_max: usize,
    #[arg(long, default_value_t = 16)]
    pub d_input: usize,
    #[arg(long, default_value_t = 8)]
    pub n_finals: usize,
    /// Standard deviation of the Gaussian noise added to every coordinate.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 8.0)]
    pub pitch_unit: f64,
    #[arg(long, default_value_t = 0.15)]
    pub contour_amplitude: f64,
    /// Multiplier on the pitch track of female speakers.
    #[arg(long, default_value_t = 2.0)]
    pub female_pitch_scale: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub female_pitch_offset: f64,
    /// Scale of the per-final spectral templates.
    #[arg(long, default_value_t = 3.0)]
    pub template_scale: f64,
    #[arg(long, default_value_t = DEFAULT_FRAMERATE_MS)]
    pub framerate_ms: u32,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            n_utterances: self.utterances,
            segments_min: self.segments_min,
            segments_max: self.segments_max,
            segment_frames_min: self.segment_frames_min,
            segment_frames_max: self.segment_frames_max,
            d_input: self.d_input,
            n_finals: self.n_finals,
            noise: self.noise,
            pitch_unit: self.pitch_unit,
            contour_amplitude: self.contour_amplitude,
            female_pitch_scale: self.female_pitch_scale,
            female_pitch_offset: self.female_pitch_offset,
            template_scale: self.template_scale,
        }
    }
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.framerate_ms == 0 {
        return Err(CliError::Usage("--framerate-ms must be positive".into()));
    }
    let corpus = synth_corpus(&args.config(), args.seed)?;
    create_dir(&args.out)?;
    let outputs = save_corpus(&args.out, &corpus, args.framerate_ms)?;
    let mut m = RunManifest::new("synth", Some(args.seed), args)?;
    m.outputs = outputs;
    m.write(&args.out.join("synth.manifest.json"))?;
    println!(
        "wrote {} utterances ({} segments) to {}",
        corpus.utterances.len(),
        corpus.segment_count(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LabelsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Tiers to label, e.g. `tone,sex` or `st`.
    #[arg(long, default_value = "tone,final,sex")]
    pub tiers: String,
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
    /// Output directory for labels.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn labels(args: &LabelsArgs) -> Result<(), CliError> {
    let tiers = tiers_arg(&args.tiers)?;
    let corpus = args.corpus.load(args.split)?;
    let mut seqs: Vec<(&str, FrameLabelSequence)> = Vec::new();
    for u in &corpus.utterances {
        for &t in &tiers {
            match build_training_labels(u, t) {
                Ok(s) => seqs.push((&u.id, s)),
                Err(DataError::EmptyTier { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    create_dir(&args.out)?;
    let path = args.out.join("labels.tsv");
    let rows: Vec<(&str, &FrameLabelSequence)> = seqs.iter().map(|(id, s)| (*id, s)).collect();
    write_label_file(&path, &rows, &corpus.vocab)?;
    let mut m = RunManifest::new("labels", None, args)?;
    m.inputs = vec![args.corpus.corpus.clone()];
    m.outputs = vec![path.clone()];
    m.write(&args.out.join("labels.manifest.json"))?;
    println!("wrote {} label sequences to {}", rows.len(), path.display());
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Tasks to train: t, st, f, sf, tf or a list such as `tone,sex`.
    #[arg(long, default_value = "t")]
    pub tasks: String,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 6)]
    pub n_layers: usize,
    #[arg(long, default_value_t = 1)]
    pub n_heads: usize,
    /// Hidden width of the feed-forward sublayer.
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Updates during which only the task heads are trained.
    #[arg(long, default_value_t = 200)]
    pub head_only_updates: usize,
    #[arg(long, default_value_t = 4000)]
    pub total_updates: usize,
    /// Frame budget used when packing utterances into a batch.
    #[arg(long, default_value_t = 400)]
    pub batch_max_frames: usize,
    #[arg(long, env = "LAYERLENS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory for checkpoint.llnm and train_log.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Print the loss every this many updates (0 disables).
    #[arg(long, default_value_t = 500)]
    pub log_every: usize,
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let tiers = tiers_arg(&args.tasks)?;
    let corpus = args.corpus.load(Split::Train)?;
    let d_input = corpus.d_input().ok_or_else(|| CliError::Usage("empty corpus".into()))?;
    let cfg = EncoderConfig {
        d_input,
        d_model: args.d_model,
        n_layers: args.n_layers,
        n_heads: args.n_heads,
        d_ff: args.d_ff,
        learning_rate: args.learning_rate,
        head_only_updates: args.head_only_updates,
        total_updates: args.total_updates,
        batch_max_frames: args.batch_max_frames,
        seed: args.seed,
        optimizer: Optimizer::Sgd,
    };
    let tasks: Vec<TaskSpec> = tiers.iter().map(|t| TaskSpec::new(corpus.vocab.get(*t).clone())).collect();
    let mut model = EncoderModel::new(&cfg, &tasks)?;
    let every = args.log_every;
    let log = train_model(&mut model, &corpus.utterances, |row| {
        if every > 0 && row.update % every == 0 {
            eprintln!("update {} ({}) loss {:.6}", row.update, row.phase, row.loss_total);
        }
    })?;
    create_dir(&args.out)?;
    let ckpt = args.out.join("checkpoint.llnm");
    let log_path = args.out.join("train_log.csv");
    save_checkpoint(&ckpt, &model)?;
    write_text(&log_path, &log.to_csv())?;
    let mut m = RunManifest::new("train", Some(args.seed), args)?;
    m.inputs = vec![args.corpus.corpus.clone()];
    m.outputs = vec![ckpt.clone(), log_path];
    m.write(&args.out.join("train.manifest.json"))?;
    println!(
        "trained {} updates on {} utterances, final loss {:.6}; checkpoint {}",
        log.rows.len(),
        corpus.utterances.len(),
        log.rows.last().map_or(f64::NAN, |r| r.loss_total),
        ckpt.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<EncoderModel, CliError> {
    if !path.is_file() {
        return Err(CliError::Io(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Tiers to score; defaults to every head in the checkpoint.
    #[arg(long)]
    pub tiers: Option<String>,
    /// Output directory for accuracy.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    let tiers = match &args.tiers {
        Some(s) => tiers_arg(s)?,
        None => model.tiers(),
    };
    if let Some(t) = tiers.iter().find(|t| !model.heads.contains_key(t)) {
        return Err(CliError::Usage(format!("checkpoint has no {t} head")));
    }
    let corpus = args.corpus.load(args.split)?;
    let acc = central_frame_accuracy(&model, &corpus.utterances)?;
    let mut csv = String::from("tier,correct,total,accuracy\n");
    println!("{:<8}{:>10}{:>10}{:>10}", "tier", "correct", "total", "accuracy");
    for t in &tiers {
        let a = acc[t];
        let _ = writeln!(csv, "{t},{},{},{:.6}", a.correct, a.total, a.value());
        println!("{:<8}{:>10}{:>10}{:>9.2}%", t.name(), a.correct, a.total, 100.0 * a.value());
    }
    create_dir(&args.out)?;
    let path = args.out.join("accuracy.csv");
    write_text(&path, &csv)?;
    let mut m = RunManifest::new("eval", None, args)?;
    m.inputs = vec![args.checkpoint.clone(), args.corpus.corpus.clone()];
    m.outputs = vec![path];
    m.write(&args.out.join("eval.manifest.json"))?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SvccaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    #[arg(long, default_value = "tone,final,sex")]
    pub tiers: String,
    /// PCA dimensions per layer before SVCCA (capped at feature width and rank).
    #[arg(long, default_value_t = 100)]
    pub pca_dims: usize,
    /// Share of variance each view keeps in the SVD step of SVCCA.
    #[arg(long, default_value_t = 0.99)]
    pub variance_keep: f64,
    /// Ridge added to both covariance matrices in CCA.
    #[arg(long, default_value_t = 1e-10)]
    pub reg: f64,
    /// Label used in the plot title; defaults to the checkpoint path.
    #[arg(long)]
    pub model_id: Option<String>,
    /// Output directory for svcca.csv, svcca.svg and trend.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn svcca(args: &SvccaArgs) -> Result<(), CliError> {
    let cfg = LayerSweepConfig {
        pca_dims: args.pca_dims,
        variance_keep: args.variance_keep,
        reg: args.reg,
        tiers: tiers_arg(&args.tiers)?,
    };
    cfg.validate()?;
    let model = load_model(&args.checkpoint)?;
    let corpus = args.corpus.load(args.split)?;
    let layers = extract_all_layers(&model, &corpus.utterances)?;
    let id = args.model_id.clone().unwrap_or_else(|| args.checkpoint.display().to_string());
    let report = sweep_features(&id, &layers, &corpus.vocab, &cfg)?;
    for (layer, tier, why) in &report.warnings {
        eprintln!("warning: layer {layer} {tier}: {why}");
    }
    let trend = trend_summary(&report);
    let mut trend_csv = String::from("tier,argmax_layer,peak,final,suppression_ratio\n");
    for (t, tr) in &trend.tiers {
        let _ = writeln!(
            trend_csv,
            "{t},{},{:.9},{:.9},{:.9}",
            tr.argmax_layer, tr.peak, tr.final_value, tr.suppression_ratio
        );
        println!(
            "{t}: peak {:.3} at layer {}, final {:.3}, ratio {:.3}",
            tr.peak, tr.argmax_layer, tr.final_value, tr.suppression_ratio
        );
    }
    create_dir(&args.out)?;
    let csv = args.out.join("svcca.csv");
    let svg = args.out.join("svcca.svg");
    let trend_path = args.out.join("trend.csv");
    write_text(&csv, &report_csv(&report))?;
    write_text(&svg, &line_chart_svg(&report))?;
    write_text(&trend_path, &trend_csv)?;
    let mut m = RunManifest::new("svcca", None, args)?;
    m.inputs = vec![args.checkpoint.clone(), args.corpus.corpus.clone()];
    m.outputs = vec![csv, svg, trend_path];
    m.write(&args.out.join("svcca.manifest.json"))?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Layer index (0-based) or `last`.
    #[arg(long, default_value = "last")]
    pub layer: String,
    /// Tier used to colour the points.
    #[arg(long, default_value = "sex")]
    pub color: String,
    /// Output directory; files are named after the layer and colour tier.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn project(args: &ProjectArgs) -> Result<(), CliError> {
    let color: Tier = args.color.parse().map_err(CliError::Usage)?;
    let model = load_model(&args.checkpoint)?;
    let layer = match args.layer.as_str() {
        "last" => model.n_layers() - 1,
        s => s
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("--layer expects an index or `last`, got {s:?}")))?,
    };
    if layer >= model.n_layers() {
        return Err(EncoderError::InvalidLayer {
            layer,
            n_layers: model.n_layers(),
        }
        .into());
    }
    let corpus = args.corpus.load(args.split)?;
    let lf = extract_features(&model, &corpus.utterances, layer)?;
    let proj = project_2d(&lf.features)?;
    let labels = lf.labels(color);
    let title = format!("layer {layer} coloured by {color}");
    let svg_text = scatter_svg(&proj, &labels, corpus.vocab.get(color), &title);
    let labeled: Vec<usize> = (0..labels.len()).filter(|i| labels[*i].is_some()).collect();
    if labeled.len() >= 3 {
        let ids: Vec<usize> = labeled.iter().map(|i| labels[*i].expect("filtered")).collect();
        if let Ok(s) = silhouette_score(&proj.select_rows(&labeled), &ids) {
            println!("silhouette ({color}) on layer {layer}: {s:.4}");
        }
    }
    create_dir(&args.out)?;
    let stem = format!("projection_l{layer}_{color}");
    let csv = args.out.join(format!("{stem}.csv"));
    let svg = args.out.join(format!("{stem}.svg"));
    write_text(&csv, &projection_csv(&lf, &proj, &corpus.vocab))?;
    write_text(&svg, &svg_text)?;
    let mut m = RunManifest::new("project", None, args)?;
    m.inputs = vec![args.checkpoint.clone(), args.corpus.corpus.clone()];
    m.outputs = vec![csv, svg];
    m.write(&args.out.join(format!("{stem}.manifest.json")))?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier command.
    #[arg(long)]
    pub manifest: PathBuf,
}

pub fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let m = RunManifest::read(&args.manifest)?;
    let a = m.args.clone();
    match m.command.as_str() {
        "synth" => synth(&serde_json::from_value(a)?),
        "labels" => labels(&serde_json::from_value(a)?),
        "train" => train(&serde_json::from_value(a)?),
        "eval" => eval(&serde_json::from_value(a)?),
        "svcca" => svcca(&serde_json::from_value(a)?),
        "project" => project(&serde_json::from_value(a)?),
        other => Err(CliError::Usage(format!("manifest names unknown command {other:?}"))),
    }
}

