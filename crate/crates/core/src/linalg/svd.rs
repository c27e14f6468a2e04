//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of a working copy of `A` are orthogonalised pairwise until every
//! pair is numerically orthogonal; the column norms are then the singular
//! values and the accumulated rotations form `V`. The method is slower than
//! bidiagonalisation for large inputs but has high relative accuracy, which
//! matters more for the conditioning-sensitive correlation analysis.

use super::{LinalgError, Matrix};

const MAX_SWEEPS: usize = 80;

/// `u · diag(s) · vt` with `u` of shape `m × k`, `vt` of shape `k × n`, `k = min(m, n)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (v, s) in us.row_mut(r).iter_mut().zip(&self.s) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformable")
    }

    /// Number of singular values above `max(m, n) · ε · s_max`.
    pub fn numerical_rank(&self) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        let tol = rank_tolerance(self.u.rows().max(self.vt.cols()), smax);
        self.s.iter().filter(|&&s| s > tol).count()
    }
}

pub(crate) fn rank_tolerance(max_dim: usize, smax: f64) -> f64 {
    max_dim as f64 * f64::EPSILON * smax * 8.0
}

pub fn svd(a: &Matrix) -> Result<SvdResult, LinalgError> {
    a.ensure_finite("svd input")?;
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        })
    }
}

fn jacobi_tall(a: &Matrix) -> Result<SvdResult, LinalgError> {
    let (m, n) = a.shape();
    // column-major working storage so column dot products are contiguous
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON * m as f64;
    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NumericalFailure {
                what: "svd did not converge".into(),
                iterations: sweeps,
            });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&w[p], &w[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<(f64, usize)> = w
        .iter()
        .enumerate()
        .map(|(j, col)| (col.iter().map(|x| x * x).sum::<f64>().sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let smax = order.first().map_or(0.0, |o| o.0);
    let zero_tol = rank_tolerance(m, smax);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut vt = Matrix::zeros(n, n);
    let mut pending = Vec::new();
    for (k, &(sigma, j)) in order.iter().enumerate() {
        vt.row_mut(k).copy_from_slice(&v[j]);
        s.push(sigma);
        if sigma > zero_tol && sigma > 0.0 {
            u_cols.push(w[j].iter().map(|x| x / sigma).collect());
        } else {
            u_cols.push(Vec::new());
            pending.push(k);
        }
    }
    complete_orthonormal(&mut u_cols, &pending, m);

    let u = Matrix::from_fn(m, n, |r, c| u_cols[c][r]);
    Ok(SvdResult { u, s, vt })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the columns listed in `pending` with unit vectors orthogonal to all others.
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize], m: usize) {
    let mut basis = 0;
    for &k in pending {
        loop {
            assert!(basis < m, "ran out of basis vectors while completing U");
            let mut e = vec![0.0; m];
            e[basis] = 1.0;
            basis += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (j, col) in cols.iter().enumerate() {
                    if j == k || col.is_empty() {
                        continue;
                    }
                    let d: f64 = col.iter().zip(&e).map(|(a, b)| a * b).sum();
                    for (x, c) in e.iter_mut().zip(col) {
                        *x -= d * c;
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                cols[k] = e.into_iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal_columns(m: &Matrix) -> f64 {
        let g = m.t_matmul(m).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let r = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_its_own_decomposition() {
        let r = svd(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(r.s, vec![3.0, 2.0, 1.0]);
        assert_eq!(r.u, Matrix::identity(3));
        assert_eq!(r.vt, Matrix::identity(3));
    }

    #[test]
    fn wide_and_rank_deficient_inputs() {
        let a = Matrix::from_fn(3, 6, |r, c| ((r + 1) * (c + 2)) as f64);
        let r = svd(&a).unwrap();
        assert_eq!(r.s.len(), 3);
        assert_eq!(r.numerical_rank(), 1);
        assert!(orthonormal_columns(&r.u) < 1e-12);
        assert!(orthonormal_columns(&r.vt.transpose()) < 1e-12);
        let err = r.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn zero_matrix_gets_orthonormal_factors() {
        let r = svd(&Matrix::zeros(4, 2)).unwrap();
        assert_eq!(r.s, vec![0.0, 0.0]);
        assert!(orthonormal_columns(&r.u) < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&a), Err(LinalgError::NonFinite(_))));
    }
}
