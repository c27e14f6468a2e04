use std::collections::BTreeMap;

use super::AnalysisError;
use crate::linalg::{pca_fit, pca_transform, LinalgError, Matrix};

/// Top-two principal-component scores (`n × 2`, centered).
pub fn project_2d(features: &Matrix) -> Result<Matrix, AnalysisError> {
    if features.rows() < 3 {
        return Err(LinalgError::InvalidArgument(format!("projection needs at least 3 samples, got {}", features.rows())).into());
    }
    if features.cols() < 2 {
        return Err(LinalgError::EffectiveRank {
            requested: 2,
            achievable: features.cols(),
        }
        .into());
    }
    let model = pca_fit(features, 2)?;
    Ok(pca_transform(&model, features)?)
}

/// Mean silhouette over all points with Euclidean distance. Points in a
/// singleton cluster score 0.
pub fn silhouette_score(points: &Matrix, labels: &[usize]) -> Result<f64, AnalysisError> {
    let n = points.rows();
    if labels.len() != n {
        return Err(AnalysisError::Config(format!("{} labels for {n} points", labels.len())));
    }
    let mut members: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *members.entry(l).or_default() += 1;
    }
    if members.len() < 2 || members.len() >= n {
        return Err(AnalysisError::Config(format!(
            "silhouette needs 2..n-1 clusters, found {} over {n} points",
            members.len()
        )));
    }
    let clusters: Vec<usize> = members.keys().copied().collect();
    let slot = |l: usize| clusters.binary_search(&l).expect("known cluster");
    let mut total = 0.0;
    let mut sums = vec![0.0; clusters.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let pi = points.row(i);
        for j in 0..n {
            if i != j {
                let d: f64 = pi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                sums[slot(labels[j])] += d;
            }
        }
        let own = slot(labels[i]);
        let own_size = members[&labels[i]];
        if own_size == 1 {
            continue;
        }
        let a = sums[own] / (own_size - 1) as f64;
        let b = clusters
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != own)
            .map(|(k, l)| sums[k] / members[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}
