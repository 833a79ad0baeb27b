//! Linear logistic regression by IRLS with step-halving, plus AIC-driven
//! backward elimination.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{weighted_gram, SpdFactor};

/// Floor applied to each log argument inside the deviance.
pub const PROB_EPS: f64 = 1e-12;
/// Floor on IRLS weights `p(1 - p)`.
pub const WEIGHT_FLOOR: f64 = 1e-10;

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `-2 Σ [y log p + (1 - y) log(1 - p)]`, with `0·log 0 = 0` and each log
/// argument floored at `PROB_EPS`.
pub fn bernoulli_deviance(y: &[f64], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: p.len(),
        });
    }
    Ok(y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let mut ll = 0.0;
            if yi > 0.0 {
                ll += yi * pi.max(PROB_EPS).ln();
            }
            if yi < 1.0 {
                ll += (1.0 - yi) * (1.0 - pi).max(PROB_EPS).ln();
            }
            -2.0 * ll
        })
        .sum())
}

/// Deviance evaluated directly from a linear predictor.
pub fn deviance_from_eta(y: &[f64], eta: &[f64]) -> f64 {
    let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    bernoulli_deviance(y, &p).expect("equal lengths")
}

/// Checks that `y` is a 0/1 vector holding both classes; returns the mean.
pub fn validate_binary(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput("response"));
    }
    let mut positives = 0usize;
    for &v in y {
        if v == 1.0 {
            positives += 1;
        } else if v != 0.0 {
            return Err(Error::InvalidLabel(v));
        }
    }
    if positives == 0 || positives == y.len() {
        return Err(Error::OneClassInput);
    }
    Ok(positives as f64 / y.len() as f64)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the score `Xᵀ(y - p)`.
    pub tol: f64,
    /// Coefficient max-abs beyond which the data are declared separated.
    pub separation_bound: f64,
    /// Return `Err(SeparationDetected)` on separation instead of a flagged fit.
    pub fail_on_separation: bool,
    pub max_halvings: usize,
    /// Multiplier on the parameter count in AIC (1.0 = plain AIC).
    pub df_scale: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            max_iter: 50,
            tol: 1e-8,
            separation_bound: 1e3,
            fail_on_separation: true,
            max_halvings: 10,
            df_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    /// Intercept first, then one coefficient per kept feature.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// `deviance + 2·df_scale·(free coefficients)`.
    pub aic: f64,
    /// Raw parameter count (intercept included).
    pub df: f64,
    pub kept_features: Vec<usize>,
    /// Column count of the design the fit was built from.
    pub num_features: usize,
    pub separation: bool,
    pub ridge_fallback: bool,
    /// Deviance after each accepted iteration, starting from the initial value.
    pub deviance_path: Vec<f64>,
}

/// Design matrix `[1, X[:, cols]]`.
fn with_intercept(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            x[(i, cols[j - 1])]
        }
    })
}

/// Fit on every column of `x`.
pub fn fit_glm_irls(x: &DMatrix<f64>, y: &[f64], opts: &GlmOptions) -> Result<GlmFit> {
    let cols: Vec<usize> = (0..x.ncols()).collect();
    fit_glm_columns(x, y, &cols, opts)
}

/// Fit on the listed columns of `x`.
pub fn fit_glm_columns(
    x: &DMatrix<f64>,
    y: &[f64],
    cols: &[usize],
    opts: &GlmOptions,
) -> Result<GlmFit> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= x.ncols()) {
        return Err(Error::ShapeMismatch(format!(
            "column {c} requested from a {}-column design",
            x.ncols()
        )));
    }
    let ybar = validate_binary(y)?;
    let design = with_intercept(x, cols);
    let (beta, state) = irls(&design, y, ybar, opts);
    let df = design.ncols() as f64;
    if state.separation && opts.fail_on_separation {
        let magnitude = beta.amax();
        return Err(Error::SeparationDetected { magnitude });
    }
    Ok(GlmFit {
        coefficients: beta.iter().copied().collect(),
        converged: state.converged,
        iterations: state.iterations,
        deviance: state.deviance,
        aic: state.deviance + 2.0 * opts.df_scale * df,
        df,
        kept_features: cols.to_vec(),
        num_features: x.ncols(),
        separation: state.separation,
        ridge_fallback: state.ridged,
        deviance_path: state.path,
    })
}

struct IrlsState {
    converged: bool,
    separation: bool,
    ridged: bool,
    iterations: usize,
    deviance: f64,
    path: Vec<f64>,
}

fn irls(
    design: &DMatrix<f64>,
    y: &[f64],
    ybar: f64,
    opts: &GlmOptions,
) -> (DVector<f64>, IrlsState) {
    let p = design.ncols();
    let mut beta = DVector::zeros(p);
    beta[0] = logit(ybar);
    let mut eta = design * &beta;
    let mut dev = deviance_from_eta(y, eta.as_slice());
    let mut state = IrlsState {
        converged: false,
        separation: false,
        ridged: false,
        iterations: 0,
        deviance: dev,
        path: vec![dev],
    };
    for iter in 1..=opts.max_iter {
        state.iterations = iter;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let score = design.transpose() * DVector::from_vec(resid);
        if score.amax() < opts.tol {
            state.converged = true;
            break;
        }
        let w: Vec<f64> = mu
            .iter()
            .map(|m| (m * (1.0 - m)).max(WEIGHT_FLOOR))
            .collect();
        let info = weighted_gram(design, &w);
        let factor = SpdFactor::new(&info);
        state.ridged |= factor.ridged;
        let step = factor.solve(&score);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let candidate = &beta + &step * scale;
            let cand_eta = design * &candidate;
            let cand_dev = deviance_from_eta(y, cand_eta.as_slice());
            // slack absorbs rounding once the iterate sits at the optimum
            if cand_dev <= dev + 1e-12 * (1.0 + dev) || !dev.is_finite() {
                beta = candidate;
                eta = cand_eta;
                dev = cand_dev;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        state.path.push(dev);
        if beta.amax() > opts.separation_bound || dev < 1e-6 {
            state.separation = true;
            break;
        }
    }
    state.deviance = dev;
    (beta, state)
}

impl GlmFit {
    /// Linear predictor for rows of `x_new`, which must have the same column
    /// layout as the training design (unkept columns are ignored).
    pub fn predict_scores(&self, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x_new.ncols() != self.num_features {
            return Err(Error::ShapeMismatch(format!(
                "expected {} columns, got {}",
                self.num_features,
                x_new.ncols()
            )));
        }
        Ok((0..x_new.nrows())
            .map(|i| {
                self.coefficients[0]
                    + self
                        .kept_features
                        .iter()
                        .zip(&self.coefficients[1..])
                        .map(|(&c, b)| b * x_new[(i, c)])
                        .sum::<f64>()
            })
            .collect())
    }
}

/// Backward elimination by AIC starting from the full model.
pub fn backward_eliminate(x: &DMatrix<f64>, y: &[f64], opts: &GlmOptions) -> Result<GlmFit> {
    let mut current = fit_glm_irls(x, y, opts)?;
    loop {
        let mut best: Option<GlmFit> = None;
        for drop in 0..current.kept_features.len() {
            let cols: Vec<usize> = current
                .kept_features
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, &c)| c)
                .collect();
            let cand = fit_glm_columns(x, y, &cols, opts)?;
            if best.as_ref().is_none_or(|b| cand.aic < b.aic) {
                best = Some(cand);
            }
        }
        match best {
            Some(b) if b.aic < current.aic => current = b,
            _ => return Ok(current),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_data(n: usize, beta: (f64, f64), seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = (0..n)
            .map(|i| {
                let p = sigmoid(beta.0 + beta.1 * x[(i, 0)]);
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-12);
        // 1 / (1 + e^{2.1}) computed independently
        let oracle = 1.0 / (1.0 + 2.1f64.exp());
        assert!((sigmoid(-2.1) - oracle).abs() < 1e-15);
        assert!((sigmoid(-2.1) - 0.109_096_821_195_613_9).abs() < 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn deviance_values() {
        assert_eq!(bernoulli_deviance(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let d = bernoulli_deviance(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((d - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!((d - 2.772_588_722_239_781).abs() < 1e-12);
        assert!(matches!(
            bernoulli_deviance(&[1.0], &[0.5, 0.5]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn intercept_only_is_logit_of_mean() {
        let x = DMatrix::<f64>::zeros(8, 0);
        let y = [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let fit = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn one_class_and_bad_labels_rejected() {
        let x = DMatrix::from_element(4, 1, 1.0);
        assert!(matches!(
            fit_glm_irls(&x, &[1.0; 4], &GlmOptions::default()),
            Err(Error::OneClassInput)
        ));
        assert!(matches!(
            fit_glm_irls(&x, &[1.0, 0.0, 2.0, 0.0], &GlmOptions::default()),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn separated_data_is_detected() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            fit_glm_irls(&x, &y, &GlmOptions::default()),
            Err(Error::SeparationDetected { .. })
        ));
        let lenient = GlmOptions {
            fail_on_separation: false,
            ..Default::default()
        };
        let fit = fit_glm_irls(&x, &y, &lenient).unwrap();
        assert!(fit.separation && !fit.converged);
        assert!(fit.coefficients[1] > 0.0);
    }

    #[test]
    fn recovers_linear_model_in_most_seeds() {
        let mut hits = 0;
        for seed in 0..100 {
            let (x, y) = linear_data(200, (0.0, 1.5), seed);
            let fit = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
            assert!(fit.converged);
            if fit.coefficients[0].abs() <= 0.5 && (fit.coefficients[1] - 1.5).abs() <= 0.5 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "hits = {hits}");
    }

    #[test]
    fn score_at_origin_is_near_intercept() {
        let (x, y) = linear_data(200, (0.0, 1.5), 7);
        let fit = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
        let s = fit.predict_scores(&DMatrix::zeros(1, 1)).unwrap();
        assert!(s[0].abs() < 0.5);
        assert_eq!(s[0], fit.coefficients[0]);
    }

    #[test]
    fn zero_coefficients_give_zero_scores() {
        let fit = GlmFit {
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            deviance: 0.0,
            aic: 0.0,
            df: 2.0,
            kept_features: vec![0],
            num_features: 1,
            separation: false,
            ridge_fallback: false,
            deviance_path: vec![],
        };
        let s = fit
            .predict_scores(&DMatrix::from_element(3, 1, 4.2))
            .unwrap();
        assert_eq!(s, vec![0.0; 3]);
        assert!(fit.predict_scores(&DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn score_vector_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(150, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..150)
            .map(|i| {
                let p = sigmoid(0.3 + x[(i, 0)] - 2.0 * x[(i, 2)]);
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let fit = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
        let design = with_intercept(&x, &[0, 1, 2]);
        let loglik = |b: &DVector<f64>| -0.5 * deviance_from_eta(&y, (&design * b).as_slice());
        // evaluate away from the optimum too, where the gradient is not tiny
        for shift in [0.0, 0.3] {
            let beta = DVector::from_vec(fit.coefficients.clone()).add_scalar(shift);
            let mu: Vec<f64> = (&design * &beta).iter().map(|&e| sigmoid(e)).collect();
            let analytic = design.transpose()
                * DVector::from_iterator(150, y.iter().zip(&mu).map(|(a, b)| a - b));
            let h = 1e-5;
            let fd = DVector::from_fn(4, |j, _| {
                let mut bp = beta.clone();
                let mut bm = beta.clone();
                bp[j] += h;
                bm[j] -= h;
                (loglik(&bp) - loglik(&bm)) / (2.0 * h)
            });
            let err = (&analytic - &fd).norm();
            if shift == 0.0 {
                assert!(analytic.amax() < 1e-8);
                assert!(err < 1e-5);
            } else {
                assert!(
                    err / analytic.norm() < 1e-5,
                    "rel err {}",
                    err / analytic.norm()
                );
            }
        }
    }

    #[test]
    fn irls_matches_grid_search() {
        let (x, y) = linear_data(120, (0.4, -1.2), 11);
        let fit = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
        let design = with_intercept(&x, &[0]);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 1001;
        for a in 0..steps {
            let b0 = -5.0 + 0.01 * a as f64;
            for b in 0..steps {
                let b1 = -5.0 + 0.01 * b as f64;
                let dev: f64 = (0..120)
                    .map(|i| {
                        let e = b0 + b1 * design[(i, 1)];
                        let p = sigmoid(e);
                        if y[i] == 1.0 {
                            -2.0 * p.ln()
                        } else {
                            -2.0 * (1.0 - p).ln()
                        }
                    })
                    .sum();
                if dev < best.0 {
                    best = (dev, b0, b1);
                }
            }
        }
        assert!((fit.coefficients[0] - best.1).abs() <= 0.01 + 1e-9);
        assert!((fit.coefficients[1] - best.2).abs() <= 0.01 + 1e-9);
    }

    #[test]
    fn deviance_path_is_monotone_and_deterministic() {
        let (x, y) = linear_data(100, (-0.5, 2.0), 5);
        let a = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
        let b = fit_glm_irls(&x, &y, &GlmOptions::default()).unwrap();
        for w in a.deviance_path.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(a.coefficients, b.coefficients);
        assert!((a.aic - (a.deviance + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn elimination_keeps_minimal_model() {
        let (x, y) = linear_data(200, (0.0, 2.0), 9);
        let fit = backward_eliminate(&x, &y, &GlmOptions::default()).unwrap();
        assert_eq!(fit.kept_features, vec![0]);
    }

    #[test]
    fn elimination_drops_pure_noise() {
        let mut intercept_only = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x = DMatrix::from_fn(300, 3, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..300)
                .map(|_| if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 })
                .collect();
            let fit = backward_eliminate(&x, &y, &GlmOptions::default()).unwrap();
            if fit.kept_features.is_empty() {
                intercept_only += 1;
            }
        }
        assert!(intercept_only > 20, "intercept-only in {intercept_only}/40");
    }
}
