use super::svd::rank_tolerance;
use super::{svd, LinalgError, Matrix};

/// Correlations above `1 + CLAMP_SLACK` are treated as a bug, not rounding.
const CLAMP_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult {
    /// Canonical correlations, non-increasing, clamped to `[0, 1]`.
    pub correlations: Vec<f64>,
    pub k: usize,
}

impl CcaResult {
    pub fn mean(&self) -> f64 {
        self.correlations.iter().sum::<f64>() / self.k as f64
    }
}

/// Canonical correlations between two views sharing a row count.
///
/// Computes the singular values of `(Σxx + reg·I)^(-1/2) Σxy (Σyy + reg·I)^(-1/2)`
/// (sample covariances, divisor `n − 1`) without forming the covariances: with
/// `X = Ux Sx Vxᵀ` each whitened view reduces to `Ux · diag(sx / sqrt(sx² + (n−1)·reg))`,
/// so the correlations are the singular values of the product of the two.
pub fn cca(x: &Matrix, y: &Matrix, reg: f64) -> Result<CcaResult, LinalgError> {
    let n = x.rows();
    if y.rows() != n {
        return Err(LinalgError::Shape(format!("cca views have {} and {} rows", n, y.rows())));
    }
    if n < 3 {
        return Err(LinalgError::InvalidArgument(format!("cca needs at least 3 rows, got {n}")));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(LinalgError::InvalidArgument(format!("reg must be finite and >= 0, got {reg}")));
    }
    x.ensure_finite("cca x")?;
    y.ensure_finite("cca y")?;

    let wx = whitened_basis(x, reg, "x")?;
    let wy = whitened_basis(y, reg, "y")?;
    let cross = wx.t_matmul(&wy)?;
    let dec = svd(&cross)?;

    let k = x.cols().min(y.cols()).min(n - 1);
    let mut correlations = Vec::with_capacity(k);
    for &s in dec.s.iter().take(k) {
        if s > 1.0 + CLAMP_SLACK {
            return Err(LinalgError::NumericalFailure {
                what: format!("canonical correlation {s} exceeds 1; covariance is ill-conditioned"),
                iterations: 0,
            });
        }
        correlations.push(s.clamp(0.0, 1.0));
    }
    // the cross matrix may have fewer singular values than k when a view is short
    correlations.resize(k, 0.0);
    Ok(CcaResult { correlations, k })
}

fn whitened_basis(v: &Matrix, reg: f64, name: &str) -> Result<Matrix, LinalgError> {
    let (c, _) = v.centered();
    let dec = svd(&c)?;
    let n1 = (v.rows() - 1) as f64;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let tol = rank_tolerance(c.rows().max(c.cols()), smax);
    let mut basis = dec.u;
    let factors: Vec<f64> = dec
        .s
        .iter()
        .map(|&s| {
            if reg == 0.0 {
                if s <= tol || s == 0.0 {
                    Err(LinalgError::NumericalFailure {
                        what: format!(
                            "covariance of view {name} is singular; use a ridge term reg > 0"
                        ),
                        iterations: 0,
                    })
                } else {
                    Ok(1.0)
                }
            } else {
                Ok(s / (s * s + n1 * reg).sqrt())
            }
        })
        .collect::<Result<_, _>>()?;
    for r in 0..basis.rows() {
        for (b, f) in basis.row_mut(r).iter_mut().zip(&factors) {
            *b *= f;
        }
    }
    Ok(basis)
}

/// Result of one SVCCA comparison.
#[derive(Debug, Clone)]
pub struct SvccaOutcome {
    pub mean: f64,
    pub dims_x: usize,
    pub dims_y: usize,
    pub cca: CcaResult,
}

/// Centers `x`, then keeps the smallest number of leading singular directions
/// whose squared singular values reach `variance_keep` of the total. Returns the
/// view expressed in those directions (`n × r`).
pub fn truncate_to_variance(x: &Matrix, variance_keep: f64) -> Result<Matrix, LinalgError> {
    if !(variance_keep > 0.0 && variance_keep <= 1.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "variance_keep must be in (0, 1], got {variance_keep}"
        )));
    }
    let (c, _) = x.centered();
    let dec = svd(&c)?;
    let energy: Vec<f64> = dec.s.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();
    if total <= 0.0 || dec.numerical_rank() == 0 {
        return Err(LinalgError::EffectiveRank {
            requested: 1,
            achievable: 0,
        });
    }
    let target = variance_keep * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut keep = energy.len();
    for (i, e) in energy.iter().enumerate() {
        acc += e;
        if acc >= target {
            keep = i + 1;
            break;
        }
    }
    let mut reduced = dec.u.slice_cols(0, keep);
    for r in 0..reduced.rows() {
        for (v, s) in reduced.row_mut(r).iter_mut().zip(&dec.s) {
            *v *= s;
        }
    }
    Ok(reduced)
}

pub fn svcca_detailed(
    x: &Matrix,
    y: &Matrix,
    variance_keep: f64,
    reg: f64,
) -> Result<SvccaOutcome, LinalgError> {
    if x.rows() != y.rows() {
        return Err(LinalgError::Shape(format!(
            "svcca views have {} and {} rows",
            x.rows(),
            y.rows()
        )));
    }
    let rx = truncate_to_variance(x, variance_keep)?;
    let ry = truncate_to_variance(y, variance_keep)?;
    let res = cca(&rx, &ry, reg)?;
    Ok(SvccaOutcome {
        mean: res.mean(),
        dims_x: rx.cols(),
        dims_y: ry.cols(),
        cca: res,
    })
}

/// Mean canonical correlation after per-view variance truncation.
pub fn svcca(x: &Matrix, y: &Matrix, variance_keep: f64, reg: f64) -> Result<f64, LinalgError> {
    svcca_detailed(x, y, variance_keep, reg).map(|o| o.mean)
}

/// `(a + reg·I)^(-1/2)` for a symmetric positive semi-definite `a`.
pub fn inverse_sqrt_psd(a: &Matrix, reg: f64) -> Result<Matrix, LinalgError> {
    if a.rows() != a.cols() {
        return Err(LinalgError::Shape("inverse square root of a non-square matrix".into()));
    }
    let dec = svd(a)?;
    let mut vs = dec.vt.transpose();
    for r in 0..vs.rows() {
        for (v, s) in vs.row_mut(r).iter_mut().zip(&dec.s) {
            let e = s + reg;
            if e <= 0.0 {
                return Err(LinalgError::NumericalFailure {
                    what: "matrix is singular; use reg > 0".into(),
                    iterations: 0,
                });
            }
            *v /= e.sqrt();
        }
    }
    vs.matmul(&dec.vt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, d: usize, salt: u64) -> Matrix {
        // small deterministic LCG so unit tests stay dependency-free
        let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ salt;
        Matrix::from_fn(n, d, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn self_correlation_is_one() {
        let x = sample(50, 4, 1);
        let r = cca(&x, &x, 0.0).unwrap();
        assert_eq!(r.k, 4);
        assert!(r.correlations.iter().all(|c| (c - 1.0).abs() < 1e-6));
    }

    #[test]
    fn singular_view_without_ridge_fails() {
        let x = sample(20, 3, 2);
        let y = Matrix::from_fn(20, 2, |r, _| x[(r, 0)]);
        assert!(matches!(cca(&x, &y, 0.0), Err(LinalgError::NumericalFailure { .. })));
        let r = cca(&x, &y, 1e-8).unwrap();
        assert!((r.correlations[0] - 1.0).abs() < 1e-6);
        assert!(r.correlations[1] < 1e-6);
    }

    #[test]
    fn row_mismatch_and_tiny_samples() {
        let x = sample(5, 2, 3);
        assert!(matches!(cca(&x, &sample(4, 2, 4), 0.0), Err(LinalgError::Shape(_))));
        assert!(cca(&sample(2, 1, 5), &sample(2, 1, 6), 0.1).is_err());
    }

    #[test]
    fn truncation_keeps_leading_directions() {
        // one dominant direction and a faint one
        let x = Matrix::from_fn(40, 2, |r, c| {
            let t = r as f64 - 19.5;
            if c == 0 { t } else { 1e-3 * ((r % 3) as f64 - 1.0) }
        });
        assert_eq!(truncate_to_variance(&x, 0.99).unwrap().cols(), 1);
        assert_eq!(truncate_to_variance(&x, 1.0).unwrap().cols(), 2);
        assert!(truncate_to_variance(&x, 0.0).is_err());
        assert!(matches!(
            truncate_to_variance(&Matrix::zeros(5, 2), 0.5),
            Err(LinalgError::EffectiveRank { achievable: 0, .. })
        ));
    }

    #[test]
    fn inverse_sqrt_of_diagonal() {
        let a = Matrix::diag(&[4.0, 1.0, 0.25]);
        let r = inverse_sqrt_psd(&a, 0.0).unwrap();
        let want = Matrix::diag(&[0.5, 1.0, 2.0]);
        assert!(r.sub(&want).max_abs() < 1e-12);
    }
}
