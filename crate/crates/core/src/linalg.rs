//! Small dense linear-algebra helpers shared by the fitting routines.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Ridge added to the diagonal when a symmetric system is not positive definite.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Cholesky factor of a symmetric positive-definite matrix, with a record of
/// whether a ridge had to be added to obtain it.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    pub ridged: bool,
}

impl SpdFactor {
    /// Factor `a`. Falls back to `a + ridge·I` with a growing ridge, scaled by
    /// the mean diagonal, when the plain factorisation fails.
    pub fn new(a: &DMatrix<f64>) -> Self {
        if let Some(chol) = Cholesky::new(a.clone()) {
            if chol
                .l_dirty()
                .diagonal()
                .iter()
                .all(|d| d.is_finite() && *d > 0.0)
            {
                return SpdFactor {
                    chol,
                    ridged: false,
                };
            }
        }
        let n = a.nrows();
        let scale = (a.trace() / n.max(1) as f64).abs().max(1.0);
        let mut ridge = RIDGE_FALLBACK * scale;
        loop {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] += ridge;
            }
            if let Some(chol) = Cholesky::new(b) {
                return SpdFactor { chol, ridged: true };
            }
            ridge *= 10.0;
            assert!(ridge.is_finite(), "matrix could not be regularised");
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// `Xᵀ diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (mut row, wi) in xw.row_iter_mut().zip(w) {
        row *= *wi;
    }
    x.transpose() * xw
}

/// `Xᵀ diag(w) v`.
pub fn weighted_xtv(x: &DMatrix<f64>, w: &[f64], v: &[f64]) -> DVector<f64> {
    let wv = DVector::from_iterator(v.len(), w.iter().zip(v).map(|(a, b)| a * b));
    x.transpose() * wv
}

/// Trace of `A⁻¹ G` given the factor of `A`.
pub fn trace_solve(factor: &SpdFactor, g: &DMatrix<f64>) -> f64 {
    factor.solve_mat(g).trace()
}

/// Orthonormal basis (as columns) of the orthogonal complement of `c`,
/// built from a Householder reflection. Returns a `k × (k-1)` matrix.
pub fn null_space_of_vector(c: &DVector<f64>) -> DMatrix<f64> {
    let k = c.len();
    let norm = c.norm();
    let mut v = c.clone();
    // reflect c onto -sign(c0)·|c|·e1 to avoid cancellation
    let alpha = if c[0] >= 0.0 { -norm } else { norm };
    v[0] -= alpha;
    let vnorm2 = v.norm_squared();
    let mut h = DMatrix::<f64>::identity(k, k);
    if vnorm2 > 0.0 {
        h -= (&v * v.transpose()) * (2.0 / vnorm2);
    }
    h.columns(1, k - 1).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_orthonormal_and_orthogonal_to_vector() {
        let c = DVector::from_vec(vec![3.0, 1.0, 2.0, 0.5]);
        let z = null_space_of_vector(&c);
        assert_eq!(z.shape(), (4, 3));
        let ztz = z.transpose() * &z;
        assert!((ztz - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        assert!((z.transpose() * &c).abs().max() < 1e-12);
    }

    #[test]
    fn singular_system_gets_ridge() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = SpdFactor::new(&a);
        assert!(f.ridged);
        let x = f.solve(&DVector::from_vec(vec![2.0, 2.0]));
        assert!(x.iter().all(|v| v.is_finite()));
    }
}
