use std::fmt::Write as _;

use super::SvccaReport;
use crate::data::Vocabularies;
use crate::encoder::LayerFeatures;
use crate::linalg::Matrix;

/// `layer,tier,mean_svcca,n_samples,pca_dims_used`, one row per
/// `(layer, tier)`. Missing pairs keep their row with empty value fields.
pub fn report_csv(report: &SvccaReport) -> String {
    let mut out = String::from("layer,tier,mean_svcca,n_samples,pca_dims_used\n");
    for layer in 0..report.n_layers {
        for &tier in &report.config.tiers {
            match report.entries.get(&(layer, tier)) {
                Some(e) => {
                    let _ = writeln!(out, "{layer},{tier},{:.9},{},{}", e.mean, e.n_samples, e.pca_dims_used);
                }
                None => {
                    let _ = writeln!(out, "{layer},{tier},,,");
                }
            }
        }
    }
    out
}

/// One plotted sample with attribute names (empty if unannotated).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub sample_id: String,
    pub x: f64,
    pub y: f64,
    pub tone: String,
    pub final_class: String,
    pub sex: String,
}

pub fn projection_rows(features: &LayerFeatures, projection: &Matrix, vocab: &Vocabularies) -> Vec<ProjectionRow> {
    let name = |v: &crate::data::LabelVocabulary, l: Option<usize>| l.map(|i| v.name(i).to_string()).unwrap_or_default();
    (0..features.n_samples())
        .map(|i| ProjectionRow {
            sample_id: features.sample_ids[i].clone(),
            x: projection[(i, 0)],
            y: projection[(i, 1)],
            tone: name(&vocab.tone, features.tone[i]),
            final_class: name(&vocab.final_, features.final_class[i]),
            sex: name(&vocab.sex, Some(features.sex[i])),
        })
        .collect()
}

/// `sample_id,x,y,tone,final,sex`.
pub fn projection_csv(features: &LayerFeatures, projection: &Matrix, vocab: &Vocabularies) -> String {
    let mut out = String::from("sample_id,x,y,tone,final,sex\n");
    for r in projection_rows(features, projection, vocab) {
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{},{},{}",
            r.sample_id, r.x, r.y, r.tone, r.final_class, r.sex
        );
    }
    out
}
