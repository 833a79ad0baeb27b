//! Additive logistic regression by local scoring, with backfitting of
//! weighted cubic smoothing splines as the inner solver.
//!
//! Each smoother is specified by its effective degrees of freedom (the trace
//! of its smoother matrix, constant included). A target of 2 gives the exact
//! weighted straight-line fit; larger targets give a penalized cubic
//! B-spline fit with roughness penalty `∫ f''²`, with the smoothing parameter
//! found by bisection on the trace.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{trace_solve, weighted_gram, weighted_xtv, SpdFactor};
use crate::logistic_glm::{deviance_from_eta, logit, sigmoid, validate_binary, WEIGHT_FLOOR};
use crate::spline_basis::{build_basis, eval_basis_matrix, BSplineBasis};

/// Largest number of knot intervals used by a smoothing spline.
const MAX_SPLINE_INTERVALS: usize = 20;
const LAMBDA_MIN: f64 = 1e-8;
const LAMBDA_MAX: f64 = 1e8;
const BISECTION_STEPS: usize = 60;
/// Targets at or below this are fitted by weighted least-squares lines.
const LINEAR_DF: f64 = 2.0 + 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherKind {
    Linear,
    Spline,
}

/// One fitted additive component, stored by its values at the sorted
/// distinct training values of its feature.
#[derive(Debug, Clone)]
pub struct SmoothComponent {
    pub feature_index: usize,
    pub design_x: Vec<f64>,
    pub fitted_values: Vec<f64>,
    pub target_df: f64,
    /// Trace of the smoother matrix actually realised.
    pub df: f64,
    pub lambda: f64,
    pub kind: SmootherKind,
    /// Set when a spline was requested but the feature had fewer than four
    /// distinct values.
    pub linear_fallback: bool,
    /// Pointwise standard errors at `design_x` (approximate; see `component_curves`).
    pub se_at_design: Vec<f64>,
    pub se_at_grid: Option<Vec<f64>>,
}

impl SmoothComponent {
    /// Linear interpolation between design points, constant beyond them.
    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.design_x, &self.fitted_values, x)
    }

    pub fn se(&self, x: f64) -> f64 {
        interpolate(&self.design_x, &self.se_at_design, x)
    }

    fn zero(feature_index: usize, design_x: Vec<f64>) -> Self {
        let n = design_x.len();
        SmoothComponent {
            feature_index,
            design_x,
            fitted_values: vec![0.0; n],
            target_df: 1.0,
            df: 1.0,
            lambda: f64::INFINITY,
            kind: SmootherKind::Linear,
            linear_fallback: false,
            se_at_design: vec![0.0; n],
            se_at_grid: None,
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    if xs[lo] == x {
        return ys[lo];
    }
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

fn sorted_unique(x: &[f64]) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| a.total_cmp(b));
    u.dedup();
    u
}

/// A smoother prepared for fixed abscissae and weights.
struct Smoother {
    design_x: Vec<f64>,
    weights: Vec<f64>,
    target_df: f64,
    df: f64,
    lambda: f64,
    linear_fallback: bool,
    body: SmootherBody,
}

enum SmootherBody {
    Linear {
        x: Vec<f64>,
        xbar: f64,
        sxx: f64,
    },
    Spline {
        basis: BSplineBasis,
        bmat: DMatrix<f64>,
        factor: SpdFactor,
        gram: DMatrix<f64>,
    },
}

impl Smoother {
    fn new(x: &[f64], weights: &[f64], target_df: f64) -> Result<Self> {
        let design_x = sorted_unique(x);
        let want_spline = target_df > LINEAR_DF;
        let linear_fallback = want_spline && design_x.len() < 4;
        if !want_spline || linear_fallback {
            let wsum: f64 = weights.iter().sum();
            let xbar = x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / wsum;
            let sxx: f64 = x
                .iter()
                .zip(weights)
                .map(|(a, w)| w * (a - xbar).powi(2))
                .sum();
            let df = if sxx > 0.0 { 2.0 } else { 1.0 };
            return Ok(Smoother {
                design_x,
                weights: weights.to_vec(),
                target_df,
                df,
                lambda: f64::INFINITY,
                linear_fallback,
                body: SmootherBody::Linear {
                    x: x.to_vec(),
                    xbar,
                    sxx,
                },
            });
        }
        let lo = design_x[0];
        let hi = design_x[design_x.len() - 1];
        let intervals = (design_x.len() - 1).min(MAX_SPLINE_INTERVALS);
        let basis = build_basis(lo, hi, intervals + 3, 4)?;
        let bmat = eval_basis_matrix(&basis, x)?;
        let gram = weighted_gram(&bmat, weights);
        let mut rough = basis.derivative_gram(2);
        // scale the penalty to the data so one λ range suits every feature
        let ratio = gram.trace() / rough.trace();
        rough *= ratio;
        let df_at = |lambda: f64| -> (f64, SpdFactor) {
            let factor = SpdFactor::new(&(&gram + &rough * lambda));
            (trace_solve(&factor, &gram), factor)
        };
        let (df_lo, _) = df_at(LAMBDA_MIN);
        let (lambda, (df, factor)) = if target_df >= df_lo {
            (LAMBDA_MIN, df_at(LAMBDA_MIN))
        } else {
            let (mut a, mut b) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (a + b);
                let (d, _) = df_at(mid.exp());
                // df decreases as λ grows
                if d > target_df {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let lambda = (0.5 * (a + b)).exp();
            (lambda, df_at(lambda))
        };
        Ok(Smoother {
            design_x,
            weights: weights.to_vec(),
            target_df,
            df,
            lambda,
            linear_fallback: false,
            body: SmootherBody::Spline {
                basis,
                bmat,
                factor,
                gram,
            },
        })
    }

    /// Smooth `target`, returning weighted-centered fitted values at the
    /// training points.
    fn apply(&self, target: &[f64]) -> Vec<f64> {
        let w = &self.weights;
        let wsum: f64 = w.iter().sum();
        let mut fitted: Vec<f64> = match &self.body {
            SmootherBody::Linear { x, xbar, sxx } => {
                let slope = if *sxx > 0.0 {
                    x.iter()
                        .zip(target)
                        .zip(w)
                        .map(|((a, t), wi)| wi * (a - xbar) * t)
                        .sum::<f64>()
                        / sxx
                } else {
                    0.0
                };
                x.iter().map(|a| slope * (a - xbar)).collect()
            }
            SmootherBody::Spline { bmat, factor, .. } => {
                let rhs = weighted_xtv(bmat, w, target);
                let coef = factor.solve(&rhs);
                (bmat * coef).iter().copied().collect()
            }
        };
        let mean = fitted.iter().zip(w).map(|(f, wi)| f * wi).sum::<f64>() / wsum;
        for f in &mut fitted {
            *f -= mean;
        }
        fitted
    }

    /// Approximate standard errors of the centered fit at `xs`, taking the
    /// working response variance as `1 / w`.
    fn standard_errors(&self, xs: &[f64]) -> Vec<f64> {
        match &self.body {
            SmootherBody::Linear { xbar, sxx, .. } => xs
                .iter()
                .map(|a| {
                    if *sxx > 0.0 {
                        (a - xbar).abs() / sxx.sqrt()
                    } else {
                        0.0
                    }
                })
                .collect(),
            SmootherBody::Spline {
                basis,
                bmat,
                factor,
                gram,
            } => {
                let w = &self.weights;
                let wsum: f64 = w.iter().sum();
                let k = bmat.ncols();
                let mean_row = DVector::from_fn(k, |j, _| {
                    bmat.column(j)
                        .iter()
                        .zip(w)
                        .map(|(b, wi)| b * wi)
                        .sum::<f64>()
                        / wsum
                });
                let ainv = factor.inverse();
                let cov = &ainv * gram * &ainv;
                xs.iter()
                    .map(|&x| {
                        let d = DVector::from_vec(basis.eval(x)) - &mean_row;
                        (d.transpose() * &cov * &d)[(0, 0)].max(0.0).sqrt()
                    })
                    .collect()
            }
        }
    }

    fn component(&self, feature_index: usize, x: &[f64], fitted: &[f64]) -> SmoothComponent {
        let mut values = vec![0.0; self.design_x.len()];
        for (xi, fi) in x.iter().zip(fitted) {
            let pos = self.design_x.partition_point(|&v| v < *xi);
            values[pos] = *fi;
        }
        let (lambda, kind) = match self.body {
            SmootherBody::Linear { .. } => (f64::INFINITY, SmootherKind::Linear),
            SmootherBody::Spline { .. } => (self.lambda, SmootherKind::Spline),
        };
        SmoothComponent {
            feature_index,
            se_at_design: self.standard_errors(&self.design_x),
            design_x: self.design_x.clone(),
            fitted_values: values,
            target_df: self.target_df,
            df: self.df,
            lambda,
            kind,
            linear_fallback: self.linear_fallback,
            se_at_grid: None,
        }
    }
}

fn check_inputs(x: &[f64], target: &[f64], weights: &[f64]) -> Result<()> {
    for other in [target.len(), weights.len()] {
        if other != x.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                got: other,
            });
        }
    }
    if x.iter()
        .chain(target)
        .chain(weights)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("smoother input"));
    }
    if weights.iter().any(|&w| w < 0.0) || weights.iter().all(|&w| w == 0.0) {
        return Err(Error::EmptyInput("positive weights"));
    }
    Ok(())
}

/// Weighted smoothing of `target` against `x` at the requested degrees of
/// freedom. The returned component is centered to weighted mean zero.
pub fn smooth_weighted(
    x: &[f64],
    target: &[f64],
    weights: &[f64],
    target_df: f64,
) -> Result<SmoothComponent> {
    check_inputs(x, target, weights)?;
    let smoother = Smoother::new(x, weights, target_df)?;
    let fitted = smoother.apply(target);
    Ok(smoother.component(0, x, &fitted))
}

/// Fitted additive logistic (or weighted additive) model.
#[derive(Debug, Clone)]
pub struct AdditiveFit {
    pub alpha: f64,
    pub components: Vec<SmoothComponent>,
    pub converged: bool,
    pub outer_iterations: usize,
    /// Bernoulli deviance for logistic fits; weighted residual sum of squares
    /// for a plain backfit.
    pub deviance: f64,
    /// `1 + Σ (df_j - 1)`.
    pub effective_df: f64,
    pub num_features: usize,
    pub sweeps: usize,
    pub separation: bool,
    /// Deviance at the start and after each outer iteration.
    pub deviance_path: Vec<f64>,
}

impl AdditiveFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.alpha
            + self
                .components
                .iter()
                .map(|c| c.eval(row[c.feature_index]))
                .sum::<f64>()
    }

    /// Linear predictor `α + Σ f_j(x_j)` for every row of `x_new`.
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x_new.ncols() != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "expected {} columns, got {}",
                self.num_features,
                x_new.ncols()
            )));
        }
        Ok((0..x_new.nrows())
            .map(|i| {
                let row: Vec<f64> = x_new.row(i).iter().copied().collect();
                self.predict_row(&row)
            })
            .collect())
    }

    pub fn kept_features(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.feature_index).collect()
    }

    fn blend_toward(&mut self, other: &AdditiveFit, t: f64) {
        self.alpha += t * (other.alpha - self.alpha);
        for (mine, theirs) in self.components.iter_mut().zip(&other.components) {
            for (a, b) in mine.fitted_values.iter_mut().zip(&theirs.fitted_values) {
                *a += t * (b - *a);
            }
            mine.se_at_design = theirs.se_at_design.clone();
            mine.df = theirs.df;
            mine.lambda = theirs.lambda;
            mine.kind = theirs.kind;
            mine.target_df = theirs.target_df;
            mine.linear_fallback = theirs.linear_fallback;
        }
        self.effective_df = other.effective_df;
    }

    fn eta(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.predict(x).expect("training design has matching shape")
    }
}

#[derive(Debug, Clone)]
pub struct BackfitOptions {
    /// Stop once no component changes by more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for BackfitOptions {
    fn default() -> Self {
        BackfitOptions {
            tol: 1e-6,
            max_sweeps: 50,
        }
    }
}

/// A smooth term: feature column and degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub feature: usize,
    pub df: f64,
}

fn column(x: &DMatrix<f64>, j: usize) -> Vec<f64> {
    x.column(j).iter().copied().collect()
}

/// Weighted additive model `z ≈ α + Σ f_j(x_j)` by backfitting, one smooth
/// per column of `x` with the given degrees of freedom.
pub fn backfit(
    x: &DMatrix<f64>,
    z: &[f64],
    weights: &[f64],
    dfs: &[f64],
    opts: &BackfitOptions,
) -> Result<AdditiveFit> {
    if dfs.len() != x.ncols() {
        return Err(Error::LengthMismatch {
            expected: x.ncols(),
            got: dfs.len(),
        });
    }
    let terms: Vec<Term> = dfs
        .iter()
        .enumerate()
        .map(|(feature, &df)| Term { feature, df })
        .collect();
    backfit_terms(x, z, weights, &terms, opts)
}

pub fn backfit_terms(
    x: &DMatrix<f64>,
    z: &[f64],
    weights: &[f64],
    terms: &[Term],
    opts: &BackfitOptions,
) -> Result<AdditiveFit> {
    if x.nrows() != z.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: z.len(),
        });
    }
    let n = z.len();
    let columns: Vec<Vec<f64>> = terms.iter().map(|t| column(x, t.feature)).collect();
    for col in &columns {
        check_inputs(col, z, weights)?;
    }
    if terms.is_empty() {
        check_inputs(z, z, weights)?;
    }
    let smoothers = terms
        .iter()
        .zip(&columns)
        .map(|(t, col)| Smoother::new(col, weights, t.df))
        .collect::<Result<Vec<_>>>()?;
    let wsum: f64 = weights.iter().sum();
    let alpha = z.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / wsum;
    let mut fitted = vec![vec![0.0; n]; terms.len()];
    let mut total: Vec<f64> = vec![0.0; n];
    let mut converged = terms.is_empty();
    let mut sweeps = 0;
    while !converged && sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for (j, smoother) in smoothers.iter().enumerate() {
            let partial: Vec<f64> = (0..n)
                .map(|i| z[i] - alpha - (total[i] - fitted[j][i]))
                .collect();
            let new = smoother.apply(&partial);
            for i in 0..n {
                max_change = max_change.max((new[i] - fitted[j][i]).abs());
                total[i] += new[i] - fitted[j][i];
            }
            fitted[j] = new;
        }
        converged = max_change < opts.tol;
    }
    let components: Vec<SmoothComponent> = terms
        .iter()
        .zip(&smoothers)
        .zip(&fitted)
        .zip(&columns)
        .map(|(((t, s), f), col)| s.component(t.feature, col, f))
        .collect();
    let rss = (0..n)
        .map(|i| weights[i] * (z[i] - alpha - total[i]).powi(2))
        .sum();
    Ok(AdditiveFit {
        alpha,
        effective_df: 1.0 + smoothers.iter().map(|s| s.df - 1.0).sum::<f64>(),
        components,
        converged,
        outer_iterations: 0,
        deviance: rss,
        num_features: x.ncols(),
        sweeps,
        separation: false,
        deviance_path: vec![],
    })
}

#[derive(Debug, Clone)]
pub struct LocalScoringOptions {
    pub max_outer: usize,
    /// Relative deviance change that ends the outer loop.
    pub tol: f64,
    pub backfit: BackfitOptions,
    pub max_halvings: usize,
    /// Linear-predictor magnitude taken as evidence of separation.
    pub separation_bound: f64,
    pub fail_on_separation: bool,
}

impl Default for LocalScoringOptions {
    fn default() -> Self {
        LocalScoringOptions {
            max_outer: 25,
            tol: 1e-6,
            backfit: BackfitOptions::default(),
            max_halvings: 10,
            separation_bound: 1e3,
            fail_on_separation: true,
        }
    }
}

/// Additive logistic regression by local scoring, one smooth per column of
/// `x` with the given degrees of freedom.
pub fn local_scoring(
    x: &DMatrix<f64>,
    y: &[f64],
    dfs: &[f64],
    opts: &LocalScoringOptions,
) -> Result<AdditiveFit> {
    if dfs.len() != x.ncols() {
        return Err(Error::LengthMismatch {
            expected: x.ncols(),
            got: dfs.len(),
        });
    }
    let terms: Vec<Term> = dfs
        .iter()
        .enumerate()
        .map(|(feature, &df)| Term { feature, df })
        .collect();
    local_scoring_terms(x, y, &terms, opts)
}

pub fn local_scoring_terms(
    x: &DMatrix<f64>,
    y: &[f64],
    terms: &[Term],
    opts: &LocalScoringOptions,
) -> Result<AdditiveFit> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    let ybar = validate_binary(y)?;
    let n = y.len();
    if n < 10 * terms.len() {
        log::warn!(
            "local scoring with {} terms on only {n} observations",
            terms.len()
        );
    }
    let mut current = AdditiveFit {
        alpha: logit(ybar),
        components: terms
            .iter()
            .map(|t| SmoothComponent::zero(t.feature, sorted_unique(&column(x, t.feature))))
            .collect(),
        converged: false,
        outer_iterations: 0,
        deviance: 0.0,
        effective_df: 1.0,
        num_features: x.ncols(),
        sweeps: 0,
        separation: false,
        deviance_path: vec![],
    };
    let mut eta = current.eta(x);
    let mut dev = deviance_from_eta(y, &eta);
    current.deviance_path.push(dev);
    for outer in 1..=opts.max_outer {
        current.outer_iterations = outer;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = p
            .iter()
            .map(|pi| (pi * (1.0 - pi)).max(WEIGHT_FLOOR))
            .collect();
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - p[i]) / w[i]).collect();
        let inner = backfit_terms(x, &z, &w, terms, &opts.backfit)?;
        current.sweeps += inner.sweeps;
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=opts.max_halvings {
            let mut candidate = current.clone();
            candidate.blend_toward(&inner, t);
            let cand_eta = candidate.eta(x);
            let cand_dev = deviance_from_eta(y, &cand_eta);
            if cand_dev <= dev + 1e-12 * (1.0 + dev) {
                accepted = Some((candidate, cand_eta, cand_dev));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, cand_eta, cand_dev)) = accepted else {
            break;
        };
        let change = (dev - cand_dev).abs() / (cand_dev.abs() + 0.1);
        current = candidate;
        eta = cand_eta;
        dev = cand_dev;
        current.deviance_path.push(dev);
        let magnitude = eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if magnitude > opts.separation_bound || dev < 1e-6 {
            current.separation = true;
            if opts.fail_on_separation {
                return Err(Error::SeparationDetected { magnitude });
            }
            break;
        }
        if change < opts.tol {
            current.converged = true;
            break;
        }
    }
    // move the unweighted training mean of each component into the intercept
    for comp in &mut current.components {
        let col = column(x, comp.feature_index);
        let mean = col.iter().map(|&v| comp.eval(v)).sum::<f64>() / n as f64;
        for v in &mut comp.fitted_values {
            *v -= mean;
        }
        current.alpha += mean;
    }
    current.deviance = dev;
    Ok(current)
}

#[derive(Debug, Clone)]
pub struct StepwiseOptions {
    pub scoring: LocalScoringOptions,
    /// Candidate smooth degrees of freedom besides omission, smallest first.
    pub df_choices: Vec<f64>,
    /// Starting degrees of freedom for every feature.
    pub start_df: f64,
    /// Multiplier on effective df inside AIC.
    pub df_scale: f64,
}

impl Default for StepwiseOptions {
    fn default() -> Self {
        StepwiseOptions {
            scoring: LocalScoringOptions::default(),
            df_choices: vec![2.0, 4.0],
            start_df: 4.0,
            df_scale: 1.0,
        }
    }
}

pub fn scaled_aic(fit: &AdditiveFit, df_scale: f64) -> f64 {
    fit.deviance + 2.0 * df_scale * fit.effective_df
}

/// One greedy pass over the features choosing, for each, between omission
/// and each smooth df in `df_choices` by AIC with scaled df.
pub fn stepwise_components(
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &StepwiseOptions,
) -> Result<AdditiveFit> {
    let mut config: Vec<Option<f64>> = vec![Some(opts.start_df); x.ncols()];
    let terms_of = |config: &[Option<f64>]| -> Vec<Term> {
        config
            .iter()
            .enumerate()
            .filter_map(|(feature, df)| df.map(|df| Term { feature, df }))
            .collect()
    };
    let mut best_fit = local_scoring_terms(x, y, &terms_of(&config), &opts.scoring)?;
    for j in 0..x.ncols() {
        let mut options: Vec<Option<f64>> = vec![None];
        options.extend(opts.df_choices.iter().map(|&d| Some(d)));
        let mut best: Option<(f64, Option<f64>, AdditiveFit)> = None;
        // options are ordered by increasing df, so a strict improvement is
        // needed to move to a larger one
        for option in options {
            let mut trial = config.clone();
            trial[j] = option;
            let fit = if trial == config {
                best_fit.clone()
            } else {
                local_scoring_terms(x, y, &terms_of(&trial), &opts.scoring)?
            };
            let aic = scaled_aic(&fit, opts.df_scale);
            if best.as_ref().is_none_or(|(b, _, _)| aic < b - 1e-9) {
                best = Some((aic, option, fit));
            }
        }
        let (_, option, fit) = best.expect("at least one option");
        config[j] = option;
        best_fit = fit;
    }
    // final refit of the chosen configuration
    local_scoring_terms(x, y, &terms_of(&config), &opts.scoring)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCurve {
    pub feature_index: usize,
    pub points: Vec<CurvePoint>,
}

/// Each component on an equispaced grid over its training range, with
/// approximate pointwise standard errors from the final smoother.
pub fn component_curves(fit: &AdditiveFit, grid_size: usize) -> Vec<ComponentCurve> {
    let grid_size = grid_size.max(2);
    fit.components
        .iter()
        .map(|c| {
            let lo = c.design_x[0];
            let hi = c.design_x[c.design_x.len() - 1];
            let points = (0..grid_size)
                .map(|g| {
                    let x = if g + 1 == grid_size {
                        hi
                    } else {
                        lo + (hi - lo) * g as f64 / (grid_size - 1) as f64
                    };
                    CurvePoint {
                        x,
                        value: c.eval(x),
                        se: c.se(x),
                    }
                })
                .collect();
            ComponentCurve {
                feature_index: c.feature_index,
                points,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logistic_glm::{fit_glm_irls, GlmOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn interpolation_is_linear_with_constant_ends() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [1.0, 3.0, -1.0];
        assert_eq!(interpolate(&xs, &ys, -5.0), 1.0);
        assert_eq!(interpolate(&xs, &ys, 0.5), 2.0);
        assert_eq!(interpolate(&xs, &ys, 1.0), 3.0);
        assert_eq!(interpolate(&xs, &ys, 2.0), 1.0);
        assert_eq!(interpolate(&xs, &ys, 9.0), -1.0);
    }

    #[test]
    fn constant_target_gives_zero_component() {
        let x = uniform(50, 1);
        let c = smooth_weighted(&x, &[3.5; 50], &[1.0; 50], 4.0).unwrap();
        assert!(c.fitted_values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn linear_target_is_reproduced() {
        let x = uniform(80, 2);
        let w: Vec<f64> = uniform(80, 3).iter().map(|v| 1.5 + v).collect();
        let target: Vec<f64> = x.iter().map(|v| 0.7 - 2.0 * v).collect();
        let wsum: f64 = w.iter().sum();
        let mean = target.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum;
        for df in [2.0, 5.0] {
            let c = smooth_weighted(&x, &target, &w, df).unwrap();
            for (xi, ti) in x.iter().zip(&target) {
                assert!((c.eval(*xi) - (ti - mean)).abs() < 1e-6, "df {df}");
            }
        }
    }

    #[test]
    fn realised_df_matches_target() {
        let x = uniform(200, 4);
        let target: Vec<f64> = x.iter().map(|v| (5.0 * v).sin()).collect();
        for df in [3.0, 4.0, 6.0, 9.0] {
            let c = smooth_weighted(&x, &target, &[1.0; 200], df).unwrap();
            assert!((c.df - df).abs() < 0.05, "df {} vs {df}", c.df);
        }
        let c = smooth_weighted(&x, &target, &[1.0; 200], 2.0).unwrap();
        assert_eq!(c.kind, SmootherKind::Linear);
        assert_eq!(c.df, 2.0);
    }

    #[test]
    fn sine_is_smoothed_accurately() {
        let x = uniform(200, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let target: Vec<f64> = x
            .iter()
            .map(|v| (5.0 * v).sin() + 0.1 * (rng.random::<f64>() - 0.5))
            .collect();
        let c = smooth_weighted(&x, &target, &[1.0; 200], 6.0).unwrap();
        let mean = target.iter().sum::<f64>() / 200.0;
        let rms = (x
            .iter()
            .zip(&target)
            .map(|(xi, ti)| (c.eval(*xi) - (ti - mean)).powi(2))
            .sum::<f64>()
            / 200.0)
            .sqrt();
        assert!(rms < 0.15, "rms {rms}");
    }

    #[test]
    fn few_distinct_values_fall_back_to_linear() {
        let x = [0.0, 1.0, 2.0, 0.0, 1.0, 2.0];
        let t = [0.0, 1.0, 5.0, 0.2, 1.1, 4.9];
        let c = smooth_weighted(&x, &t, &[1.0; 6], 4.0).unwrap();
        assert!(c.linear_fallback);
        assert_eq!(c.kind, SmootherKind::Linear);
    }

    #[test]
    fn smoother_input_errors() {
        assert!(matches!(
            smooth_weighted(&[0.0, 1.0], &[1.0], &[1.0, 1.0], 4.0),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            smooth_weighted(&[0.0, f64::NAN], &[1.0, 1.0], &[1.0, 1.0], 4.0),
            Err(Error::NonFinite(_))
        ));
        assert!(smooth_weighted(&[0.0, 1.0], &[1.0, 2.0], &[0.0, 0.0], 4.0).is_err());
    }

    #[test]
    fn single_feature_backfit_equals_smoother() {
        let x = uniform(100, 7);
        let z: Vec<f64> = x.iter().map(|v| v * v + 0.3).collect();
        let w: Vec<f64> = uniform(100, 8).iter().map(|v| 1.0 + 0.5 * v).collect();
        let xm = DMatrix::from_column_slice(100, 1, &x);
        let fit = backfit(&xm, &z, &w, &[4.0], &BackfitOptions::default()).unwrap();
        let direct = smooth_weighted(&x, &z, &w, 4.0).unwrap();
        assert!(fit.converged);
        for (a, b) in fit.components[0]
            .fitted_values
            .iter()
            .zip(&direct.fitted_values)
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn factorial_design_converges_quickly() {
        let levels: Vec<f64> = (0..12).map(|i| -1.0 + i as f64 * 2.0 / 11.0).collect();
        let mut x = Vec::new();
        for &a in &levels {
            for &b in &levels {
                x.push((a, b));
            }
        }
        let n = x.len();
        let xm = DMatrix::from_fn(n, 2, |i, j| if j == 0 { x[i].0 } else { x[i].1 });
        let z: Vec<f64> = x
            .iter()
            .map(|(a, b)| 2.0 * a * a + (5.0 * b).sin())
            .collect();
        let fit = backfit(
            &xm,
            &z,
            &vec![1.0; n],
            &[5.0, 5.0],
            &BackfitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert!(fit.sweeps <= 3, "sweeps {}", fit.sweeps);
    }

    #[test]
    fn backfit_recovers_additive_gaussian_components() {
        let n = 500;
        let x1 = uniform(n, 10);
        let x2 = uniform(n, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = rand_distr_normal(&mut rng, n);
        let z: Vec<f64> = (0..n)
            .map(|i| 2.0 * x1[i] * x1[i] + (5.0 * x2[i]).sin() + 0.1 * normal[i])
            .collect();
        let mut data = x1.clone();
        data.extend(&x2);
        let xm = DMatrix::from_column_slice(n, 2, &data);
        let fit = backfit(
            &xm,
            &z,
            &vec![1.0; n],
            &[5.0, 8.0],
            &BackfitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        let grid: Vec<f64> = (0..101).map(|g| -0.98 + 1.96 * g as f64 / 100.0).collect();
        // truths centered over the uniform design
        let f1 = |v: f64| 2.0 * v * v - 2.0 / 3.0;
        let f2 = |v: f64| (5.0 * v).sin();
        for (comp, truth) in fit.components.iter().zip([&f1 as &dyn Fn(f64) -> f64, &f2]) {
            let rms = (grid
                .iter()
                .map(|&g| (comp.eval(g) - truth(g)).powi(2))
                .sum::<f64>()
                / grid.len() as f64)
                .sqrt();
            assert!(rms < 0.1, "rms {rms}");
        }
        // components stay weighted-centered
        for (j, comp) in fit.components.iter().enumerate() {
            let mean: f64 = (0..n).map(|i| comp.eval(xm[(i, j)])).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-10);
        }
    }

    fn rand_distr_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-300);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect()
    }

    fn logistic_data(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: DMatrix<f64> = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = (0..n)
            .map(|i| {
                let eta =
                    3.0 * (-0.7 + x[(i, 0)] + 2.0 * x[(i, 1)].powi(2) + (5.0 * x[(i, 2)]).sin());
                if rng.random::<f64>() < sigmoid(eta) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn linear_local_scoring_reproduces_glm() {
        for seed in 0..5 {
            let (x, y) = logistic_data(200, 100 + seed);
            let glm = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
            let gam = local_scoring(&x, &y, &[2.0; 3], &LocalScoringOptions::default()).unwrap();
            assert!(gam.converged);
            let a = glm.predict_scores(&x).unwrap();
            let b = gam.predict(&x).unwrap();
            let diff = a
                .iter()
                .zip(&b)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-4, "max diff {diff}");
        }
    }

    #[test]
    fn local_scoring_deviance_is_monotone() {
        let (x, y) = logistic_data(150, 21);
        let fit = local_scoring(&x, &y, &[4.0; 3], &LocalScoringOptions::default()).unwrap();
        for w in fit.deviance_path.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]));
        }
        assert!((fit.deviance - fit.deviance_path.last().unwrap()).abs() < 1e-12);
        let effective = 1.0 + fit.components.iter().map(|c| c.df - 1.0).sum::<f64>();
        assert!((fit.effective_df - effective).abs() < 1e-12);
        for c in &fit.components {
            assert!((c.df - 4.0).abs() < 0.1);
        }
    }

    #[test]
    fn prediction_decomposes_into_components() {
        let (x, y) = logistic_data(150, 22);
        let fit = local_scoring(&x, &y, &[4.0; 3], &LocalScoringOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let row: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let parts: f64 = fit
                .components
                .iter()
                .map(|c| c.eval(row[c.feature_index]))
                .sum();
            assert_eq!(fit.predict_row(&row), fit.alpha + parts);
        }
        // components are centered over the training points
        for c in &fit.components {
            let mean = (0..150)
                .map(|i| c.eval(x[(i, c.feature_index)]))
                .sum::<f64>()
                / 150.0;
            assert!(mean.abs() < 1e-10);
        }
    }

    #[test]
    fn one_class_response_is_rejected() {
        let (x, _) = logistic_data(40, 1);
        assert!(matches!(
            local_scoring(&x, &[0.0; 40], &[4.0; 3], &LocalScoringOptions::default()),
            Err(Error::OneClassInput)
        ));
    }

    #[test]
    fn curves_span_training_range() {
        let (x, y) = logistic_data(150, 23);
        let fit = local_scoring(&x, &y, &[2.0, 4.0, 4.0], &LocalScoringOptions::default()).unwrap();
        let curves = component_curves(&fit, 25);
        assert_eq!(curves.len(), 3);
        for (curve, comp) in curves.iter().zip(&fit.components) {
            assert_eq!(curve.points.len(), 25);
            assert_eq!(curve.points[0].x, comp.design_x[0]);
            assert_eq!(curve.points[24].x, *comp.design_x.last().unwrap());
            assert!(curve.points.iter().all(|p| p.se >= 0.0));
        }
        // the linear component's grid values lie on a line
        let lin = &curves[0].points;
        let slope = (lin[24].value - lin[0].value) / (lin[24].x - lin[0].x);
        for p in lin {
            let line = lin[0].value + slope * (p.x - lin[0].x);
            assert!((p.value - line).abs() < 1e-9);
        }
    }
}
