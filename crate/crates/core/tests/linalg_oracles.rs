use layerlens::linalg::{cca, pca_fit, pca_transform, svcca, svd, LinalgError, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Cyclic Jacobi rotations on a symmetric matrix; returns eigenvalues sorted descending.
fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// Modified Gram-Schmidt on a random square matrix.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = gaussian(n, n, rng);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = g.column(j);
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= d * qi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    Matrix::from_fn(n, n, |r, c| cols[c][r])
}

fn sample_variance(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

fn one_hot(labels: &[usize], k: usize) -> Matrix {
    Matrix::from_fn(labels.len(), k, |r, c| if labels[r] == c { 1.0 } else { 0.0 })
}

#[test]
fn singular_values_match_jacobi_eigenvalues_of_gram_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = gaussian(8, 5, &mut rng);
    let ata = a.t_matmul(&a).unwrap();
    let ev = jacobi_eigenvalues(&ata);
    let dec = svd(&a).unwrap();
    assert_eq!(dec.s.len(), 5);
    for (s, e) in dec.s.iter().zip(&ev) {
        assert!((s - e.max(0.0).sqrt()).abs() < 1e-8, "{s} vs {}", e.sqrt());
    }
}

#[test]
fn explained_variance_sums_to_covariance_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = gaussian(200, 20, &mut rng);
    let model = pca_fit(&x, 20).unwrap();
    let trace: f64 = (0..20).map(|j| sample_variance(&x.column(j))).sum();
    let total: f64 = model.explained_variance.iter().sum();
    assert!((total - trace).abs() < 1e-8, "{total} vs {trace}");
}

#[test]
fn transformed_column_variance_matches_explained_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = gaussian(150, 10, &mut rng);
    let model = pca_fit(&x, 6).unwrap();
    let z = pca_transform(&model, &x).unwrap();
    assert_eq!(z.shape(), (150, 6));
    for j in 0..6 {
        let v = sample_variance(&z.column(j));
        assert!((v - model.explained_variance[j]).abs() < 1e-8);
    }
}

#[test]
fn pca_exact_subspace_and_two_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let coeffs = gaussian(40, 2, &mut rng);
    let basis = gaussian(2, 5, &mut rng);
    let x = coeffs.matmul(&basis).unwrap();
    let model = pca_fit(&x, 2).unwrap();
    let back = model.inverse_transform(&pca_transform(&model, &x).unwrap()).unwrap();
    assert!(back.sub(&x).max_abs() < 1e-10);

    let mean_row = Matrix::new(1, 5, model.mean.clone()).unwrap();
    assert!(pca_transform(&model, &mean_row).unwrap().max_abs() < 1e-12);

    let err = pca_fit(&x, 3).unwrap_err();
    assert_eq!(err, LinalgError::EffectiveRank { requested: 3, achievable: 2 });
    assert!(matches!(pca_fit(&x, 0), Err(LinalgError::InvalidRank { .. })));
    assert!(matches!(pca_transform(&model, &Matrix::zeros(3, 4)), Err(LinalgError::Shape(_))));

    let pts = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 0.0, -1.0]]).unwrap();
    let m = pca_fit(&pts, 1).unwrap();
    let diff = [3.0, -2.0, -4.0];
    let norm = diff.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    let cos: f64 = m.components.row(0).iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>() / norm;
    assert!(cos.abs() >= 1.0 - 1e-10);
}

#[test]
fn independent_views_have_low_canonical_correlation() {
    let mut means = Vec::new();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = gaussian(2000, 5, &mut rng);
        let y = gaussian(2000, 5, &mut rng);
        means.push(cca(&x, &y, 0.0).unwrap().mean());
    }
    let worst = means.iter().cloned().fold(0.0, f64::max);
    let avg = means.iter().sum::<f64>() / means.len() as f64;
    // Under the null each correlation is O(1/sqrt(n)); 0.15 is far in the tail.
    assert!(worst <= 0.15, "worst null mean {worst}");
    assert!(avg < 0.06, "average null mean {avg}");
}

#[test]
fn affine_transforms_preserve_correlations() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = gaussian(300, 4, &mut rng);
    let mix = gaussian(4, 3, &mut rng);
    let mut y = x.matmul(&mix).unwrap();
    y.axpy(0.5, &gaussian(300, 3, &mut rng));
    let base = cca(&x, &y, 0.0).unwrap();

    let a = gaussian(4, 4, &mut rng);
    let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut xa = x.matmul(&a).unwrap();
    xa.add_row_vector(&b);
    let c = gaussian(3, 3, &mut rng);
    let ya = y.matmul(&c).unwrap();
    let moved = cca(&xa, &ya, 0.0).unwrap();
    assert_eq!(base.k, 3);
    for (p, q) in base.correlations.iter().zip(&moved.correlations) {
        assert!((p - q).abs() < 1e-6);
    }

    let same = cca(&x, &xa, 0.0).unwrap();
    assert!(same.correlations.iter().all(|r| (r - 1.0).abs() < 1e-6));
}

#[test]
fn planted_labels_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let labels: Vec<usize> = (0..600).map(|_| rng.gen_range(0..5)).collect();
    let y = one_hot(&labels, 5);
    let mut x = y.clone();
    x.axpy(0.01, &gaussian(600, 5, &mut rng));
    let s = svcca(&x, &y, 0.99, 1e-10).unwrap();
    assert!(s >= 0.95, "planted svcca {s}");
    // A one-hot view has rank 4 once centered; the direct untruncated CCA agrees.
    let direct = cca(&x, &y.slice_cols(0, 4), 1e-10).unwrap();
    assert!((direct.mean() - s).abs() < 1e-3, "{} vs {s}", direct.mean());
}

#[test]
fn svcca_self_and_orthogonal_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = gaussian(200, 6, &mut rng);
    let own = svcca(&x, &x, 0.99, 1e-10).unwrap();
    assert!((own - 1.0).abs() < 1e-6);
    let q = random_orthogonal(6, &mut rng);
    let xq = x.matmul(&q).unwrap();
    assert!((svcca(&x, &xq, 0.99, 1e-10).unwrap() - own).abs() < 1e-6);
}

fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE)
}

fn orthonormal_cols(m: &Matrix) -> f64 {
    let g = m.t_matmul(m).unwrap();
    g.sub(&Matrix::identity(g.rows())).max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(seed in any::<u64>(), rows in 1usize..24, cols in 1usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(rows, cols, &mut rng);
        let dec = svd(&a).unwrap();
        prop_assert!(rel_frobenius(&a, &dec.reconstruct()) <= 1e-8);
        prop_assert!(orthonormal_cols(&dec.u) <= 1e-8);
        prop_assert!(orthonormal_cols(&dec.vt.transpose()) <= 1e-8);
        prop_assert!(dec.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(dec.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn cca_is_sorted_and_bounded(seed in any::<u64>(), n in 8usize..60, dx in 1usize..5, dy in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(n, dx, &mut rng);
        let mut y = gaussian(n, dy, &mut rng);
        y.axpy(1.0, &x.matmul(&gaussian(dx, dy, &mut rng)).unwrap());
        let res = cca(&x, &y, 1e-10).unwrap();
        prop_assert_eq!(res.k, dx.min(dy).min(n - 1));
        prop_assert!(res.correlations.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(res.correlations.iter().all(|&r| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn cca_ignores_invertible_affine_maps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(120, 3, &mut rng);
        let mut y = x.matmul(&gaussian(3, 3, &mut rng)).unwrap();
        y.axpy(1.0, &gaussian(120, 3, &mut rng));
        let base = cca(&x, &y, 0.0).unwrap();
        // Orthogonal times diagonal keeps the map comfortably invertible.
        let a = random_orthogonal(3, &mut rng)
            .matmul(&Matrix::diag(&[rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)]))
            .unwrap();
        let mut xa = x.matmul(&a).unwrap();
        xa.add_row_vector(&[rng.gen_range(-9.0..9.0), 1.0, -2.0]);
        let moved = cca(&xa, &y, 0.0).unwrap();
        for (p, q) in base.correlations.iter().zip(&moved.correlations) {
            prop_assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn svcca_ignores_rotation_and_isotropic_scaling(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(80, 5, &mut rng);
        let mut y = x.slice_cols(0, 3).matmul(&gaussian(3, 4, &mut rng)).unwrap();
        y.axpy(0.7, &gaussian(80, 4, &mut rng));
        let base = svcca(&x, &y, 0.99, 1e-10).unwrap();
        let xq = x.matmul(&random_orthogonal(5, &mut rng)).unwrap().scaled(scale);
        let yq = y.matmul(&random_orthogonal(4, &mut rng)).unwrap();
        let moved = svcca(&xq, &yq, 0.99, 1e-10).unwrap();
        prop_assert!((base - moved).abs() < 1e-6, "{} vs {}", base, moved);
    }

    #[test]
    fn full_rank_pca_preserves_distances(seed in any::<u64>(), rank in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(20, rank, &mut rng).matmul(&gaussian(rank, 6, &mut rng)).unwrap();
        let model = pca_fit(&x, rank).unwrap();
        let z = pca_transform(&model, &x).unwrap();
        let dist = |m: &Matrix, i: usize, j: usize| {
            m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        for i in 0..20 {
            for j in i + 1..20 {
                prop_assert!((dist(&x, i, j) - dist(&z, i, j)).abs() < 1e-10 * (1.0 + dist(&x, i, j)));
            }
        }
        let rows: Vec<usize> = (0..model.k()).collect();
        let gram = model.components.select_rows(&rows).matmul_t(&model.components).unwrap();
        prop_assert!(gram.sub(&Matrix::identity(rank)).max_abs() < 1e-8);
    }
}
