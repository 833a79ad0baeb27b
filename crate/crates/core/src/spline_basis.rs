//! B-spline bases on evenly spaced knots and difference penalties.
//!
//! A basis of order `m` (degree `m - 1`) with `K` functions on `[lo, hi]` uses
//! `K + m` knots with constant spacing `h = (hi - lo) / (K - m + 1)`. The
//! `m - 1` knots below `lo` and above `hi` continue the same spacing, so the
//! basis is uniform everywhere and sums to one on `[lo, hi]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Knot layout of a uniform B-spline basis.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    pub lo: f64,
    pub hi: f64,
    pub knots: Vec<f64>,
    pub order: usize,
    pub num_basis: usize,
}

impl KnotVector {
    pub fn new(lo: f64, hi: f64, num_basis: usize, order: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFinite("knot domain"));
        }
        if lo >= hi {
            return Err(Error::InvalidDomain { lo, hi });
        }
        if order == 0 || num_basis < order {
            return Err(Error::TooFewBasis { num_basis, order });
        }
        let intervals = num_basis - order + 1;
        let spacing = (hi - lo) / intervals as f64;
        let knots = (0..num_basis + order)
            .map(|j| {
                let offset = j as isize - (order as isize - 1);
                if offset == 0 {
                    lo
                } else if offset == intervals as isize {
                    hi
                } else {
                    lo + offset as f64 * spacing
                }
            })
            .collect();
        Ok(KnotVector {
            lo,
            hi,
            knots,
            order,
            num_basis,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.num_basis - self.order + 1) as f64
    }

    /// Index `s` of the knot interval `[t_s, t_{s+1})` holding `x` (already
    /// clamped); the right end `hi` belongs to the last interval.
    fn span(&self, x: f64) -> usize {
        let first = self.order - 1;
        let last = self.num_basis - 1;
        let rel = ((x - self.lo) / self.spacing()).floor();
        let s = if rel.is_nan() || rel < 0.0 {
            first
        } else {
            first + rel as usize
        };
        s.clamp(first, last)
    }
}

/// Order-`m` B-spline basis with `K` functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    pub knot_vector: KnotVector,
    pub num_basis: usize,
}

/// Build a basis of `num_basis` order-`order` B-splines on `[lo, hi]`.
pub fn build_basis(lo: f64, hi: f64, num_basis: usize, order: usize) -> Result<BSplineBasis> {
    let knot_vector = KnotVector::new(lo, hi, num_basis, order)?;
    Ok(BSplineBasis {
        knot_vector,
        num_basis,
    })
}

impl BSplineBasis {
    pub fn order(&self) -> usize {
        self.knot_vector.order
    }

    pub fn lo(&self) -> f64 {
        self.knot_vector.lo
    }

    pub fn hi(&self) -> f64 {
        self.knot_vector.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo(), self.hi())
    }

    /// Nonzero basis values at `x` (clamped): returns the index of the first
    /// nonzero function and the `m` values starting there.
    pub fn eval_local(&self, x: f64) -> (usize, Vec<f64>) {
        let kv = &self.knot_vector;
        let m = kv.order;
        let t = &kv.knots;
        let x = self.clamp(x);
        let s = kv.span(x);
        // de Boor triangular scheme (Cox–de Boor recursion, non-recursive form)
        let mut values = vec![0.0; m];
        let mut left = vec![0.0; m];
        let mut right = vec![0.0; m];
        values[0] = 1.0;
        for j in 1..m {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = values[r] / denom;
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (s + 1 - m, values)
    }

    /// All `K` basis values at `x` (clamped).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis];
        let (first, local) = self.eval_local(x);
        out[first..first + local.len()].copy_from_slice(&local);
        out
    }

    /// `r`-th derivative of every basis function at `x` (clamped), from the
    /// derivative recurrence on lower-order splines over the same knots.
    pub fn eval_derivative(&self, x: f64, r: usize) -> Vec<f64> {
        let kv = &self.knot_vector;
        let m = kv.order;
        if r == 0 {
            return self.eval(x);
        }
        if r >= m {
            return vec![0.0; self.num_basis];
        }
        let t = &kv.knots;
        let x = self.clamp(x);
        let s = kv.span(x);
        // order-(m - r) values for all K + r functions on the full knot vector
        let low = m - r;
        let mut vals = vec![0.0; self.num_basis + r];
        {
            let mut local = vec![0.0; low];
            let mut left = vec![0.0; low];
            let mut right = vec![0.0; low];
            local[0] = 1.0;
            for j in 1..low {
                left[j] = x - t[s + 1 - j];
                right[j] = t[s + j] - x;
                let mut saved = 0.0;
                for q in 0..j {
                    let temp = local[q] / (right[q + 1] + left[j - q]);
                    local[q] = saved + right[q + 1] * temp;
                    saved = left[j - q] * temp;
                }
                local[j] = saved;
            }
            let first = s + 1 - low;
            for (q, v) in local.into_iter().enumerate() {
                if first + q < vals.len() {
                    vals[first + q] = v;
                }
            }
        }
        for q in (low + 1)..=m {
            let len = vals.len() - 1;
            let next = (0..len)
                .map(|i| {
                    let d1 = t[i + q - 1] - t[i];
                    let d2 = t[i + q] - t[i + 1];
                    let a = if d1 > 0.0 { vals[i] / d1 } else { 0.0 };
                    let b = if d2 > 0.0 { vals[i + 1] / d2 } else { 0.0 };
                    (q - 1) as f64 * (a - b)
                })
                .collect();
            vals = next;
        }
        vals
    }

    /// Gram matrix of the `r`-th derivatives, `∫ B_i^{(r)} B_j^{(r)}` over `[lo, hi]`.
    ///
    /// Uses Gauss–Legendre quadrature on each knot interval with enough nodes
    /// to be exact for the polynomial products involved.
    pub fn derivative_gram(&self, r: usize) -> DMatrix<f64> {
        let k = self.num_basis;
        let kv = &self.knot_vector;
        let degree = (kv.order - 1).saturating_sub(r);
        let (nodes, weights) = gauss_legendre(degree + 1);
        let mut gram = DMatrix::zeros(k, k);
        let h = kv.spacing();
        let intervals = k - kv.order + 1;
        for s in 0..intervals {
            let a = kv.lo + s as f64 * h;
            for (node, weight) in nodes.iter().zip(&weights) {
                let x = a + 0.5 * h * (node + 1.0);
                let d = self.eval_derivative(x, r);
                let w = 0.5 * h * weight;
                for i in 0..k {
                    if d[i] == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        gram[(i, j)] += w * d[i] * d[j];
                    }
                }
            }
        }
        gram
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, exact for polynomials of
/// degree `2n - 1`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Evaluate the basis at every entry of `xs`; row `i` holds the `K` values at `xs[i]`.
pub fn eval_basis_matrix(basis: &BSplineBasis, xs: &[f64]) -> Result<DMatrix<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("basis evaluation points"));
    }
    let mut out = DMatrix::zeros(xs.len(), basis.num_basis);
    for (i, &x) in xs.iter().enumerate() {
        let (first, local) = basis.eval_local(x);
        for (q, v) in local.into_iter().enumerate() {
            out[(i, first + q)] = v;
        }
    }
    Ok(out)
}

/// `P = DᵀD` for the order-`order` difference operator `D` on `dim` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub dim: usize,
    pub order: usize,
    pub entries: DMatrix<f64>,
}

impl PenaltyMatrix {
    /// `βᵀPβ`.
    pub fn quadratic_form(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        (b.transpose() * &self.entries * &b)[(0, 0)]
    }
}

/// The difference operator itself, `(dim - order) × dim`.
pub fn difference_operator(dim: usize, order: usize) -> Result<DMatrix<f64>> {
    if order == 0 || dim < order + 1 {
        return Err(Error::DimensionTooSmall { dim, order });
    }
    let mut d = DMatrix::<f64>::identity(dim, dim);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        d = DMatrix::from_fn(rows, dim, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    Ok(d)
}

pub fn difference_penalty(dim: usize, order: usize) -> Result<PenaltyMatrix> {
    if !(1..=2).contains(&order) {
        return Err(Error::DimensionTooSmall { dim, order });
    }
    let d = difference_operator(dim, order)?;
    Ok(PenaltyMatrix {
        dim,
        order,
        entries: d.transpose() * d,
    })
}
