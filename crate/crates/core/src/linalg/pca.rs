use super::{svd, LinalgError, Matrix};

/// Principal axes of a sample, ordered by explained variance.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Matrix,
    /// Sample-covariance eigenvalues (divisor `n − 1`), non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    /// Maps reduced coordinates back into the original space.
    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix, LinalgError> {
        if z.cols() != self.k() {
            return Err(LinalgError::Shape(format!(
                "inverse transform expects {} columns, got {}",
                self.k(),
                z.cols()
            )));
        }
        let mut x = z.matmul(&self.components)?;
        x.add_row_vector(&self.mean);
        Ok(x)
    }
}

pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel, LinalgError> {
    x.ensure_finite("pca input")?;
    let (n, d) = x.shape();
    if n < 2 {
        return Err(LinalgError::InvalidArgument(format!("pca needs at least 2 rows, got {n}")));
    }
    let max = (n - 1).min(d);
    if k == 0 || k > max {
        return Err(LinalgError::InvalidRank { k, max });
    }
    let (centered, mean) = x.centered();
    let dec = svd(&centered)?;
    let rank = dec.numerical_rank();
    if k > rank {
        return Err(LinalgError::EffectiveRank {
            requested: k,
            achievable: rank,
        });
    }
    let components = dec.vt.slice_rows(0, k);
    let denom = (n - 1) as f64;
    let explained_variance = dec.s[..k].iter().map(|s| s * s / denom).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix, LinalgError> {
    if x.cols() != model.dim() {
        return Err(LinalgError::Shape(format!(
            "pca model has dimension {}, input has {} columns",
            model.dim(),
            x.cols()
        )));
    }
    x.ensure_finite("pca transform input")?;
    let mut c = x.clone();
    for r in 0..c.rows() {
        for (v, m) in c.row_mut(r).iter_mut().zip(&model.mean) {
            *v -= m;
        }
    }
    c.matmul_t(&model.components)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_bounds_are_enforced() {
        let x = Matrix::from_fn(4, 3, |r, c| (r * 3 + c * c) as f64);
        assert!(matches!(pca_fit(&x, 0), Err(LinalgError::InvalidRank { .. })));
        assert!(matches!(pca_fit(&x, 4), Err(LinalgError::InvalidRank { k: 4, max: 3 })));
    }

    #[test]
    fn rank_deficient_data_reports_achievable_rank() {
        // all rows on a line
        let x = Matrix::from_fn(6, 3, |r, c| r as f64 * (c as f64 + 1.0));
        match pca_fit(&x, 2) {
            Err(LinalgError::EffectiveRank { requested, achievable }) => {
                assert_eq!((requested, achievable), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_points_give_their_difference_direction() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 0.0, 5.0]]).unwrap();
        let m = pca_fit(&x, 1).unwrap();
        let diff = [1.0, -2.0, 2.0];
        let norm = 3.0;
        let cos: f64 = m.components.row(0).iter().zip(diff).map(|(a, b)| a * b).sum::<f64>() / norm;
        assert!(cos.abs() >= 1.0 - 1e-10);
    }

    #[test]
    fn transform_of_mean_is_zero_and_dimension_checked() {
        let x = Matrix::from_fn(10, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 + 0.1 * c as f64);
        let m = pca_fit(&x, 2).unwrap();
        let mean = Matrix::new(1, 4, m.mean.clone()).unwrap();
        let z = pca_transform(&m, &mean).unwrap();
        assert!(z.max_abs() < 1e-12);
        assert!(matches!(
            pca_transform(&m, &Matrix::zeros(2, 3)),
            Err(LinalgError::Shape(_))
        ));
    }
}
