use super::svd::{kernel_and_nonzero, svd};
use super::Matrix;
use crate::error::{Error, Result};

/// Determinant by LU decomposition with partial pivoting.
pub fn determinant(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("determinant of non-square {}x{} matrix", m.rows(), m.cols())));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for k in 0..n {
        let pivot = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs())).unwrap_or(k);
        if a[(pivot, k)] == 0.0 {
            return Ok(0.0);
        }
        if pivot != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(pivot, j)];
                a[(pivot, j)] = tmp;
            }
            det = -det;
        }
        let p = a[(k, k)];
        det *= p;
        for i in (k + 1)..n {
            let f = a[(i, k)] / p;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[(i, j)] -= f * a[(k, j)];
            }
        }
    }
    Ok(det)
}

/// `|det w|^{-1/2}` for a square invertible weight.
pub fn det_factor_invertible(w: &Matrix) -> Result<f64> {
    let det = determinant(w)?;
    if det.abs() <= f64::MIN_POSITIVE {
        return Err(Error::Singular { det });
    }
    Ok(det.abs().powf(-0.5))
}

/// `|det(wᵀw)|^{-1/4}`, i.e. the product of `s_i^{-1/2}` over all singular values.
pub fn det_factor_injective(w: &Matrix) -> Result<f64> {
    let r = svd(w)?;
    if r.numerical_rank < w.cols() {
        return Err(Error::NotInjective { rank: r.numerical_rank, cols: w.cols() });
    }
    Ok(inv_sqrt_product(&r.singular_values))
}

/// Determinant of `w` restricted to `ker(w)^⊥`, as its `-1/2` power, with an
/// orthonormal basis of `ker(w)` (one basis vector per column).
#[derive(Debug, Clone)]
pub struct RestrictedDet {
    pub factor: f64,
    pub kernel_basis: Matrix,
}

pub fn det_factor_restricted(w: &Matrix) -> Result<RestrictedDet> {
    let (kernel_basis, nonzero) = kernel_and_nonzero(w)?;
    // empty product for the zero matrix
    Ok(RestrictedDet { factor: inv_sqrt_product(&nonzero), kernel_basis })
}

fn inv_sqrt_product(s: &[f64]) -> f64 {
    (-0.5 * s.iter().map(|x| x.ln()).sum::<f64>()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn invertible_examples() {
        assert_relative_eq!(det_factor_invertible(&Matrix::identity(3)).unwrap(), 1.0);
        assert_relative_eq!(det_factor_invertible(&Matrix::identity(2).scale(2.0)).unwrap(), 0.5);
        let rot = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert_relative_eq!(det_factor_invertible(&rot).unwrap(), 1.0);
    }

    #[test]
    fn singular_is_an_error() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(det_factor_invertible(&m), Err(Error::Singular { .. })));
        assert!(det_factor_invertible(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn injective_examples() {
        assert_relative_eq!(det_factor_injective(&Matrix::identity(4)).unwrap(), 1.0, epsilon = 1e-14);
        let tall = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_relative_eq!(det_factor_injective(&tall).unwrap(), 1.0, epsilon = 1e-14);
        let emb = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        assert_relative_eq!(det_factor_injective(&emb).unwrap(), 6f64.powf(-0.5), epsilon = 1e-14);
        assert!((det_factor_injective(&emb).unwrap() - 0.4082).abs() < 1e-4);
        let wide = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(det_factor_injective(&wide), Err(Error::NotInjective { rank: 1, cols: 2 })));
    }

    #[test]
    fn restricted_examples() {
        let r = det_factor_restricted(&Matrix::diag(&[2.0, 0.0])).unwrap();
        assert_relative_eq!(r.factor, 2f64.powf(-0.5), epsilon = 1e-14);
        assert_eq!(r.kernel_basis.cols(), 1);
        assert_relative_eq!(r.kernel_basis[(1, 0)].abs(), 1.0, epsilon = 1e-14);
        assert!(r.kernel_basis[(0, 0)].abs() < 1e-14);

        let r = det_factor_restricted(&Matrix::identity(3)).unwrap();
        assert_relative_eq!(r.factor, 1.0, epsilon = 1e-14);
        assert_eq!(r.kernel_basis.cols(), 0);

        let r = det_factor_restricted(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(r.factor, 1.0);
        assert_eq!(r.kernel_basis.cols(), 2);
        let g = r.kernel_basis.transpose().matmul(&r.kernel_basis).unwrap();
        assert!(g.sub(&Matrix::identity(2)).unwrap().frobenius_norm() < 1e-14);
    }

    fn square(n: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0f64..3.0, n * n).prop_map(move |d| Matrix::from_vec(n, n, d).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn invertible_factor_squared_times_det_is_one(m in (1usize..=8).prop_flat_map(square)) {
            let det = determinant(&m).unwrap();
            prop_assume!(det.abs() > 1e-6);
            let f = det_factor_invertible(&m).unwrap();
            prop_assert!((f * f * det.abs() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn injective_matches_restricted_on_full_column_rank(
            (r, c, d) in (1usize..=8).prop_flat_map(|c| (c..=10, Just(c)))
                .prop_flat_map(|(r, c)| (Just(r), Just(c), proptest::collection::vec(-3.0f64..3.0, r * c)))
        ) {
            let m = Matrix::from_vec(r, c, d).unwrap();
            let s = svd(&m).unwrap();
            prop_assume!(s.numerical_rank == c && s.smallest() > 1e-6 * s.singular_values[0]);
            let a = det_factor_injective(&m).unwrap();
            let b = det_factor_restricted(&m).unwrap();
            prop_assert_eq!(b.kernel_basis.cols(), 0);
            prop_assert!((a - b.factor).abs() <= 1e-10 * a.abs());
        }

        #[test]
        fn svd_product_matches_lu_determinant(m in (1usize..=8).prop_flat_map(square)) {
            let det = determinant(&m).unwrap().abs();
            prop_assume!(det > 1e-6);
            let p: f64 = svd(&m).unwrap().singular_values.iter().product();
            prop_assert!((p - det).abs() <= 1e-9 * det);
        }
    }
}
