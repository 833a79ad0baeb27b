//! Simultaneous estimation of all additive components by maximising the
//! penalized log-likelihood
//!
//! ```text
//! l*(α, β) = l(y; α, β) - ½ Σ_j λ_j β_jᵀ P β_j
//! ```
//!
//! with one B-spline basis per feature and a difference penalty `P`.
//! Each coefficient block is restricted to `1ᵀ B_j β_j = 0`, so every
//! component sums to zero over the training rows and the intercept carries
//! the overall level. The restriction is absorbed by reparametrising
//! `β_j = Z_j θ_j` with `Z_j` an orthonormal basis of the constraint's null
//! space, and the problem is solved by Newton's method (penalized IRLS) with
//! step-halving.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{null_space_of_vector, weighted_gram, SpdFactor};
use crate::logistic_glm::{deviance_from_eta, logit, sigmoid, validate_binary, WEIGHT_FLOOR};
use crate::spline_basis::{
    build_basis, difference_penalty, eval_basis_matrix, BSplineBasis, PenaltyMatrix,
};

#[derive(Debug, Clone)]
pub struct PsplineOptions {
    pub num_basis: usize,
    pub order: usize,
    pub penalty_order: usize,
    pub max_iter: usize,
    /// Newton stops once the penalized score max-norm falls below this.
    pub tol: f64,
    pub max_halvings: usize,
    pub separation_bound: f64,
    pub fail_on_separation: bool,
    /// Multiplier on effective df inside AIC.
    pub df_scale: f64,
}

impl Default for PsplineOptions {
    fn default() -> Self {
        PsplineOptions {
            num_basis: 10,
            order: 4,
            penalty_order: 1,
            max_iter: 100,
            tol: 1e-6,
            max_halvings: 10,
            separation_bound: 1e3,
            fail_on_separation: true,
            df_scale: 1.0,
        }
    }
}

/// Thirteen log-spaced values from `1e-4` to `1e4`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..13)
        .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 12.0))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PsplineFit {
    pub alpha: f64,
    /// Per-feature coefficients on the `K` B-splines.
    pub beta: Vec<Vec<f64>>,
    pub bases: Vec<BSplineBasis>,
    pub lambdas: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub penalized_loglik: f64,
    pub deviance: f64,
    /// Trace of the penalized hat matrix, intercept included.
    pub effective_df: f64,
    /// `deviance + 2·df_scale·effective_df`.
    pub aic: f64,
    pub separation: bool,
    pub ridge_fallback: bool,
    pub num_features: usize,
    /// `-2 l*` at the start and after each Newton step.
    pub penalized_deviance_path: Vec<f64>,
}

impl PsplineFit {
    pub fn component(&self, feature: usize, x: f64) -> f64 {
        self.bases[feature]
            .eval(x)
            .iter()
            .zip(&self.beta[feature])
            .map(|(b, c)| b * c)
            .sum()
    }

    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x_new.ncols() != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "expected {} columns, got {}",
                self.num_features,
                x_new.ncols()
            )));
        }
        let mut eta = vec![self.alpha; x_new.nrows()];
        for j in 0..self.num_features {
            let col: Vec<f64> = x_new.column(j).iter().copied().collect();
            let b = eval_basis_matrix(&self.bases[j], &col)?;
            let f = b * DVector::from_column_slice(&self.beta[j]);
            for (e, v) in eta.iter_mut().zip(f.iter()) {
                *e += v;
            }
        }
        Ok(eta)
    }
}

/// Basis over the training range of one column; a constant column gets a
/// unit-width domain around its value.
pub fn feature_basis(col: &[f64], num_basis: usize, order: usize) -> Result<BSplineBasis> {
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        build_basis(lo, hi, num_basis, order)
    } else {
        build_basis(lo - 0.5, hi + 0.5, num_basis, order)
    }
}

/// `l(y; α, β) - ½ Σ_j λ_j β_jᵀ P β_j` for full (unconstrained) coefficient blocks.
pub fn penalized_loglik(
    beta_all: &[Vec<f64>],
    alpha: f64,
    x_bases: &[DMatrix<f64>],
    y: &[f64],
    lambdas: &[f64],
    penalty: &PenaltyMatrix,
) -> Result<f64> {
    let eta = block_eta(beta_all, alpha, x_bases, y.len(), lambdas)?;
    let penalty_sum: f64 = beta_all
        .iter()
        .zip(lambdas)
        .map(|(b, l)| l * penalty.quadratic_form(b))
        .sum();
    Ok(-0.5 * deviance_from_eta(y, &eta) - 0.5 * penalty_sum)
}

/// Gradient of [`penalized_loglik`] with respect to each coefficient block:
/// `B_jᵀ (y - p) - λ_j P β_j`.
pub fn penalized_loglik_gradient(
    beta_all: &[Vec<f64>],
    alpha: f64,
    x_bases: &[DMatrix<f64>],
    y: &[f64],
    lambdas: &[f64],
    penalty: &PenaltyMatrix,
) -> Result<Vec<Vec<f64>>> {
    let eta = block_eta(beta_all, alpha, x_bases, y.len(), lambdas)?;
    let resid = DVector::from_iterator(y.len(), y.iter().zip(&eta).map(|(a, e)| a - sigmoid(*e)));
    Ok(beta_all
        .iter()
        .zip(x_bases)
        .zip(lambdas)
        .map(|((b, bm), l)| {
            let pb = &penalty.entries * DVector::from_column_slice(b);
            (bm.transpose() * &resid - pb * *l)
                .iter()
                .copied()
                .collect()
        })
        .collect())
}

fn block_eta(
    beta_all: &[Vec<f64>],
    alpha: f64,
    x_bases: &[DMatrix<f64>],
    n: usize,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    if beta_all.len() != x_bases.len() || lambdas.len() != x_bases.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficient blocks, {} bases, {} smoothing parameters",
            beta_all.len(),
            x_bases.len(),
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|&l| l < 0.0 || l.is_nan()) {
        return Err(Error::InvalidConfig(
            "smoothing parameters must be ≥ 0".into(),
        ));
    }
    let mut eta = vec![alpha; n];
    for (b, bm) in beta_all.iter().zip(x_bases) {
        if bm.nrows() != n || bm.ncols() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "basis {}x{} against {} rows and {} coefficients",
                bm.nrows(),
                bm.ncols(),
                n,
                b.len()
            )));
        }
        let f = bm * DVector::from_column_slice(b);
        for (e, v) in eta.iter_mut().zip(f.iter()) {
            *e += v;
        }
    }
    Ok(eta)
}

/// Constrained model matrices shared across smoothing parameters.
struct Design {
    bases: Vec<BSplineBasis>,
    /// `Z_j`, `K × (K - 1)`.
    constraints: Vec<DMatrix<f64>>,
    /// `[1, B_1 Z_1, …, B_p Z_p]`.
    matrix: DMatrix<f64>,
    /// `Z_jᵀ P Z_j`.
    penalties: Vec<DMatrix<f64>>,
    block: usize,
}

impl Design {
    fn new(x: &DMatrix<f64>, opts: &PsplineOptions) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        let k = opts.num_basis;
        let block = k - 1;
        let penalty = difference_penalty(k, opts.penalty_order)?;
        let mut matrix = DMatrix::zeros(n, 1 + p * block);
        matrix.column_mut(0).fill(1.0);
        let mut bases = Vec::with_capacity(p);
        let mut constraints = Vec::with_capacity(p);
        let mut penalties = Vec::with_capacity(p);
        for j in 0..p {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let basis = feature_basis(&col, k, opts.order)?;
            let bm = eval_basis_matrix(&basis, &col)?;
            let sums = DVector::from_fn(k, |c, _| bm.column(c).sum());
            let z = null_space_of_vector(&sums);
            let bz = &bm * &z;
            matrix.columns_mut(1 + j * block, block).copy_from(&bz);
            penalties.push(z.transpose() * &penalty.entries * &z);
            bases.push(basis);
            constraints.push(z);
        }
        Ok(Design {
            bases,
            constraints,
            matrix,
            penalties,
            block,
        })
    }

    fn penalty_matrix(&self, lambdas: &[f64]) -> DMatrix<f64> {
        let dim = self.matrix.ncols();
        let mut s = DMatrix::zeros(dim, dim);
        for (j, (pj, l)) in self.penalties.iter().zip(lambdas).enumerate() {
            let start = 1 + j * self.block;
            s.view_mut((start, start), (self.block, self.block))
                .copy_from(&(pj * *l));
        }
        s
    }
}

fn check_problem(x: &DMatrix<f64>, y: &[f64], opts: &PsplineOptions) -> Result<f64> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    if opts.num_basis < 2 {
        return Err(Error::TooFewBasis {
            num_basis: opts.num_basis,
            order: opts.order,
        });
    }
    let ybar = validate_binary(y)?;
    if y.len() <= 5 * x.ncols() {
        log::warn!(
            "penalized spline fit with {} features on only {} observations may not converge",
            x.ncols(),
            y.len()
        );
    }
    Ok(ybar)
}

/// Penalized IRLS at fixed per-feature smoothing parameters.
pub fn fit_pspline(
    x: &DMatrix<f64>,
    y: &[f64],
    lambdas: &[f64],
    opts: &PsplineOptions,
) -> Result<PsplineFit> {
    let ybar = check_problem(x, y, opts)?;
    if lambdas.len() != x.ncols() {
        return Err(Error::LengthMismatch {
            expected: x.ncols(),
            got: lambdas.len(),
        });
    }
    if lambdas.iter().any(|&l| l.is_nan() || l < 0.0) {
        return Err(Error::InvalidConfig(
            "smoothing parameters must be ≥ 0".into(),
        ));
    }
    let design = Design::new(x, opts)?;
    fit_design(&design, x.ncols(), y, ybar, lambdas, opts)
}

fn fit_design(
    design: &Design,
    num_features: usize,
    y: &[f64],
    ybar: f64,
    lambdas: &[f64],
    opts: &PsplineOptions,
) -> Result<PsplineFit> {
    let xm = &design.matrix;
    let s = design.penalty_matrix(lambdas);
    let dim = xm.ncols();
    let mut theta = DVector::zeros(dim);
    theta[0] = logit(ybar);
    let objective = |theta: &DVector<f64>, eta: &DVector<f64>| {
        deviance_from_eta(y, eta.as_slice()) + (theta.transpose() * &s * theta)[(0, 0)]
    };
    let mut eta = xm * &theta;
    let mut obj = objective(&theta, &eta);
    let mut path = vec![obj];
    let mut converged = false;
    let mut separation = false;
    let mut ridged = false;
    let mut iterations = 0;
    for iter in 1..=opts.max_iter {
        iterations = iter;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(y.len(), y.iter().zip(&mu).map(|(a, m)| a - m));
        let grad = xm.transpose() * resid - &s * &theta;
        if grad.amax() < opts.tol {
            converged = true;
            break;
        }
        let w: Vec<f64> = mu
            .iter()
            .map(|m| (m * (1.0 - m)).max(WEIGHT_FLOOR))
            .collect();
        let factor = SpdFactor::new(&(weighted_gram(xm, &w) + &s));
        ridged |= factor.ridged;
        let step = factor.solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand = &theta + &step * scale;
            let cand_eta = xm * &cand;
            let cand_obj = objective(&cand, &cand_eta);
            if cand_obj <= obj + 1e-12 * (1.0 + obj) {
                theta = cand;
                eta = cand_eta;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        path.push(obj);
        let magnitude = eta.amax();
        if magnitude > opts.separation_bound || deviance_from_eta(y, eta.as_slice()) < 1e-6 {
            separation = true;
            if opts.fail_on_separation {
                return Err(Error::SeparationDetected { magnitude });
            }
            break;
        }
    }
    let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let w: Vec<f64> = mu
        .iter()
        .map(|m| (m * (1.0 - m)).max(WEIGHT_FLOOR))
        .collect();
    let info = weighted_gram(xm, &w);
    let factor = SpdFactor::new(&(&info + &s));
    ridged |= factor.ridged;
    let effective_df = factor.solve_mat(&info).trace();
    let deviance = deviance_from_eta(y, eta.as_slice());
    let beta: Vec<Vec<f64>> = design
        .constraints
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let t = theta.rows(1 + j * design.block, design.block);
            (z * t).iter().copied().collect()
        })
        .collect();
    Ok(PsplineFit {
        alpha: theta[0],
        beta,
        bases: design.bases.clone(),
        lambdas: lambdas.to_vec(),
        converged,
        iterations,
        penalized_loglik: -0.5 * obj,
        deviance,
        effective_df,
        aic: deviance + 2.0 * opts.df_scale * effective_df,
        separation,
        ridge_fallback: ridged,
        num_features,
        penalized_deviance_path: path,
    })
}

/// Fit one shared λ per grid value (in parallel) and keep the lowest AIC;
/// ties go to the larger λ.
pub fn select_lambda_aic(
    x: &DMatrix<f64>,
    y: &[f64],
    grid: &[f64],
    opts: &PsplineOptions,
) -> Result<PsplineFit> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("smoothing parameter grid"));
    }
    let ybar = check_problem(x, y, opts)?;
    let design = Design::new(x, opts)?;
    let p = x.ncols();
    let fits: Vec<Result<PsplineFit>> = grid
        .par_iter()
        .map(|&lambda| fit_design(&design, p, y, ybar, &vec![lambda; p], opts))
        .collect();
    let mut best: Option<(f64, PsplineFit)> = None;
    for (fit, &lambda) in fits.into_iter().zip(grid) {
        let Ok(fit) = fit else { continue };
        let better = match &best {
            None => true,
            Some((best_lambda, b)) => {
                fit.aic < b.aic - 1e-9 || ((fit.aic - b.aic).abs() <= 1e-9 && lambda > *best_lambda)
            }
        };
        if better {
            best = Some((lambda, fit));
        }
    }
    best.map(|(_, f)| f).ok_or(Error::AllFitsFailed)
}
