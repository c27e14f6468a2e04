//! Layer-wise representation analysis: per-layer PCA, SVCCA against one-hot
//! attribute encodings, trend summaries and 2-D projections.

mod projection;
mod report;
mod svg;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{LabelVocabulary, Tier, Utterance, Vocabularies};
use crate::encoder::{extract_all_layers, EncoderError, EncoderModel, LayerFeatures};
use crate::linalg::{pca_fit, pca_transform, svcca_detailed, LinalgError, Matrix, DEFAULT_REG, DEFAULT_VARIANCE_KEEP};

pub use projection::{project_2d, silhouette_score};
pub use report::{projection_csv, projection_rows, report_csv, ProjectionRow};
pub use svg::{line_chart_svg, scatter_svg};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("label {label} is not a {tier} category")]
    Vocabulary { tier: Tier, label: usize },
    #[error("invalid analysis config: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSweepConfig {
    /// Upper bound on PCA dimensions; also capped by feature width and rank.
    pub pca_dims: usize,
    pub variance_keep: f64,
    pub reg: f64,
    pub tiers: Vec<Tier>,
}

impl Default for LayerSweepConfig {
    fn default() -> Self {
        Self {
            pca_dims: 100,
            variance_keep: DEFAULT_VARIANCE_KEEP,
            reg: DEFAULT_REG,
            tiers: Tier::ALL.to_vec(),
        }
    }
}

impl LayerSweepConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.pca_dims < 2 {
            return Err(AnalysisError::Config("pca_dims must be at least 2".into()));
        }
        if self.tiers.is_empty() {
            return Err(AnalysisError::Config("at least one tier is required".into()));
        }
        if !(self.variance_keep > 0.0 && self.variance_keep <= 1.0) {
            return Err(AnalysisError::Config("variance_keep must be in (0, 1]".into()));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(AnalysisError::Config("reg must be >= 0".into()));
        }
        Ok(())
    }
}

/// One-hot encoding, `n × |vocab|`.
pub fn label_matrix(labels: &[usize], vocab: &LabelVocabulary) -> Result<Matrix, AnalysisError> {
    if labels.is_empty() {
        return Err(AnalysisError::Config("no labels to encode".into()));
    }
    let mut m = Matrix::zeros(labels.len(), vocab.len());
    for (i, &l) in labels.iter().enumerate() {
        if l >= vocab.len() {
            return Err(AnalysisError::Vocabulary { tier: vocab.tier, label: l });
        }
        m[(i, l)] = 1.0;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvccaEntry {
    pub mean: f64,
    pub n_samples: usize,
    pub pca_dims_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvccaReport {
    pub model_id: String,
    pub n_layers: usize,
    pub n_samples: usize,
    pub config: LayerSweepConfig,
    /// Keyed by `(layer, tier)`; layers are 0-based.
    pub entries: BTreeMap<(usize, Tier), SvccaEntry>,
    /// Pairs that could not be computed, with the reason.
    pub warnings: Vec<(usize, Tier, String)>,
}

impl SvccaReport {
    pub fn get(&self, layer: usize, tier: Tier) -> Option<f64> {
        self.entries.get(&(layer, tier)).map(|e| e.mean)
    }

    /// Values for one tier by layer, `None` where missing.
    pub fn curve(&self, tier: Tier) -> Vec<Option<f64>> {
        (0..self.n_layers).map(|l| self.get(l, tier)).collect()
    }
}

/// Reduces one layer's features with PCA fit on those same features, to
/// `min(pca_dims, d, n - 1, rank)` dimensions.
fn reduce(features: &Matrix, pca_dims: usize) -> Result<Matrix, LinalgError> {
    let (n, d) = features.shape();
    if n < 3 {
        return Err(LinalgError::InvalidArgument(format!("{n} samples are too few")));
    }
    let k = pca_dims.min(d).min(n - 1);
    let model = match pca_fit(features, k) {
        Err(LinalgError::EffectiveRank { achievable, .. }) if achievable >= 2 => pca_fit(features, achievable)?,
        Err(LinalgError::EffectiveRank { achievable, .. }) => {
            return Err(LinalgError::EffectiveRank {
                requested: 2,
                achievable,
            })
        }
        other => other?,
    };
    pca_transform(&model, features)
}

fn sweep_layer(
    lf: &LayerFeatures,
    vocab: &Vocabularies,
    cfg: &LayerSweepConfig,
) -> Vec<(Tier, Result<SvccaEntry, String>)> {
    let reduced = match reduce(&lf.features, cfg.pca_dims) {
        Ok(r) => r,
        Err(e) => {
            let why = format!("layer {} skipped: {e}", lf.layer);
            return cfg.tiers.iter().map(|t| (*t, Err(why.clone()))).collect();
        }
    };
    cfg.tiers
        .iter()
        .map(|&tier| {
            let labels = lf.labels(tier);
            let rows: Vec<usize> = (0..labels.len()).filter(|i| labels[*i].is_some()).collect();
            if rows.len() < 3 {
                return (tier, Err(format!("{} labeled samples for {tier}", rows.len())));
            }
            let ids: Vec<usize> = rows.iter().map(|i| labels[*i].expect("filtered")).collect();
            let x = if rows.len() == labels.len() { reduced.clone() } else { reduced.select_rows(&rows) };
            let res = label_matrix(&ids, vocab.get(tier))
                .map_err(|e| e.to_string())
                .and_then(|y| svcca_detailed(&x, &y, cfg.variance_keep, cfg.reg).map_err(|e| e.to_string()));
            match res {
                Ok(o) => (
                    tier,
                    Ok(SvccaEntry {
                        mean: o.mean,
                        n_samples: rows.len(),
                        pca_dims_used: reduced.cols(),
                    }),
                ),
                Err(e) => (tier, Err(format!("layer {} {tier}: {e}", lf.layer))),
            }
        })
        .collect()
}

/// SVCCA of every layer against every configured tier, from features that
/// were already extracted.
pub fn sweep_features(
    model_id: &str,
    layers: &[LayerFeatures],
    vocab: &Vocabularies,
    cfg: &LayerSweepConfig,
) -> Result<SvccaReport, AnalysisError> {
    cfg.validate()?;
    let per_layer: Vec<_> = layers.par_iter().map(|lf| sweep_layer(lf, vocab, cfg)).collect();
    let mut entries = BTreeMap::new();
    let mut warnings = Vec::new();
    for (lf, results) in layers.iter().zip(per_layer) {
        for (tier, r) in results {
            match r {
                Ok(e) => {
                    entries.insert((lf.layer, tier), e);
                }
                Err(why) => warnings.push((lf.layer, tier, why)),
            }
        }
    }
    Ok(SvccaReport {
        model_id: model_id.to_string(),
        n_layers: layers.len(),
        n_samples: layers.first().map_or(0, LayerFeatures::n_samples),
        config: cfg.clone(),
        entries,
        warnings,
    })
}

/// Extracts central-frame features of every layer of `model` on
/// `utterances` and runs [`sweep_features`].
pub fn layer_sweep(
    model_id: &str,
    model: &EncoderModel,
    utterances: &[Utterance],
    vocab: &Vocabularies,
    cfg: &LayerSweepConfig,
) -> Result<SvccaReport, AnalysisError> {
    cfg.validate()?;
    let layers = extract_all_layers(model, utterances)?;
    sweep_features(model_id, &layers, vocab, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierTrend {
    pub argmax_layer: usize,
    pub peak: f64,
    pub final_value: f64,
    /// `final_value / peak`; 1 for an all-zero curve.
    pub suppression_ratio: f64,
}

/// Trend of a single curve. Ties on the maximum go to the earliest layer.
pub fn curve_trend(curve: &[f64]) -> Option<TierTrend> {
    let last = *curve.last()?;
    let mut arg = 0;
    for (i, v) in curve.iter().enumerate() {
        if *v > curve[arg] {
            arg = i;
        }
    }
    let peak = curve[arg];
    let ratio = if peak > 0.0 { last / peak } else { 1.0 };
    Some(TierTrend {
        argmax_layer: arg,
        peak,
        final_value: last,
        suppression_ratio: ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrendSummary {
    pub tiers: BTreeMap<Tier, TierTrend>,
}

/// Per-tier trends. A tier with any missing layer is left out.
pub fn trend_summary(report: &SvccaReport) -> TrendSummary {
    let mut tiers = BTreeMap::new();
    for &t in &report.config.tiers {
        let curve: Option<Vec<f64>> = report.curve(t).into_iter().collect();
        if let Some(tr) = curve.as_deref().and_then(curve_trend) {
            tiers.insert(t, tr);
        }
    }
    TrendSummary { tiers }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_rows() {
        let v = LabelVocabulary::sexes();
        let m = label_matrix(&[0, 1, 0], &v).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0]);
        assert_eq!(m.column_sums(), vec![2.0, 1.0]);
        assert!(matches!(label_matrix(&[2], &v), Err(AnalysisError::Vocabulary { label: 2, .. })));
    }

    #[test]
    fn trend_examples() {
        let up = curve_trend(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((up.argmax_layer, up.suppression_ratio), (2, 1.0));
        let down = curve_trend(&[0.9, 0.5]).unwrap();
        assert_eq!(down.argmax_layer, 0);
        assert!((down.suppression_ratio - 0.5 / 0.9).abs() < 1e-15);
        let flat = curve_trend(&[0.4, 0.4, 0.4]).unwrap();
        assert_eq!((flat.argmax_layer, flat.suppression_ratio), (0, 1.0));
        assert!(curve_trend(&[]).is_none());
    }

    #[test]
    fn config_bounds() {
        assert!(LayerSweepConfig { pca_dims: 1, ..Default::default() }.validate().is_err());
        assert!(LayerSweepConfig { tiers: vec![], ..Default::default() }.validate().is_err());
        assert!(LayerSweepConfig::default().validate().is_ok());
    }
}
