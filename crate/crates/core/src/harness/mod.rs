//! Benchmark runs: simulated train/test replications and stratified
//! resampling of a loaded dataset, every method fitted on the same data.

mod data;
mod report;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use data::{check_class_sizes, load_csv, load_csv_ignoring, stratified_split};
pub use report::{
    averaged_roc_text, emit_report, mean, parse_averaged_roc, parse_records, parse_summary,
    quantile_sorted, sample_sd, summarize, write_records, CurveSet, ExperimentReport, FitRecord,
    FitStatus, MethodSummary, RECORD_HEADER, SUMMARY_HEADER,
};

use crate::error::{Error, Result};
use crate::gam_backfit::{
    component_curves, local_scoring, stepwise_components, AdditiveFit, LocalScoringOptions,
    StepwiseOptions,
};
use crate::gam_pspline::{
    default_lambda_grid, fit_pspline, select_lambda_aic, PsplineFit, PsplineOptions,
};
use crate::gamboost::{boost_fit, predict_boost, BoostFit, BoostOptions};
use crate::logistic_glm::{backward_eliminate, fit_glm_irls, GlmFit, GlmOptions};
use crate::roc_eval::{average_tpr_rows, fpr_grid, partial_auc, roc_curve};
use crate::simgen::{dataset_oracle_auc, gen_dataset, Dataset, GeneratorSpec};

/// Smoother df used by the plain backfitting method.
pub const BACKFIT_DF: f64 = 4.0;
/// Fixed smoothing parameter of the P-spline method without AIC selection.
pub const PSPLINE_LAMBDA: f64 = 1.0;
pub const SENSITIVITY_FPRS: [f64; 3] = [0.05, 0.10, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Glm,
    GlmStep,
    Backfit,
    BackfitStep,
    Pspline,
    PsplineAic,
    Gamboost,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Glm,
        Method::GlmStep,
        Method::Backfit,
        Method::BackfitStep,
        Method::Pspline,
        Method::PsplineAic,
        Method::Gamboost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Glm => "glm",
            Method::GlmStep => "glm_step",
            Method::Backfit => "backfit",
            Method::BackfitStep => "backfit_step",
            Method::Pspline => "pspline",
            Method::PsplineAic => "pspline_aic",
            Method::Gamboost => "gamboost",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }

    /// Comma-separated list; `all` expands to every method.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let s = s.trim();
        if s == "all" {
            return Ok(Method::ALL.to_vec());
        }
        if s.is_empty() {
            return Ok(vec![]);
        }
        s.split(',').map(|t| Method::parse(t.trim())).collect()
    }

    pub fn is_additive(self) -> bool {
        !matches!(self, Method::Glm | Method::GlmStep)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Resample,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub train_frac: f64,
    pub seed: u64,
    /// Multiplier on effective df in the AIC of glm_step, backfit_step and
    /// pspline_aic.
    pub df_scale: f64,
    pub output_dir: PathBuf,
    /// Run replications on the rayon pool.
    pub parallel: bool,
    pub roc_grid: usize,
    pub curve_grid: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Simulate,
            methods: Method::ALL.to_vec(),
            reps: 100,
            train_n: 100,
            test_n: 1000,
            train_frac: 0.9,
            seed: 1,
            df_scale: 1.4,
            output_dir: PathBuf::from("results"),
            parallel: true,
            roc_grid: 101,
            curve_grid: 101,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad(format!(
                "train_frac must lie in (0, 1), got {}",
                self.train_frac
            ));
        }
        if !(self.df_scale > 0.0 && self.df_scale.is_finite()) {
            return bad(format!("df_scale must be positive, got {}", self.df_scale));
        }
        if self.mode == Mode::Simulate && (self.train_n < 2 || self.test_n < 2) {
            return bad("train_n and test_n must be at least 2".into());
        }
        if self.roc_grid < 2 || self.curve_grid < 2 {
            return bad("grid sizes must be at least 2".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return bad(format!("method '{dup}' listed twice"));
        }
        Ok(())
    }
}

/// A fitted model of any method, scored by its linear predictor.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Glm(GlmFit),
    Additive(AdditiveFit),
    Pspline(PsplineFit),
    Boost(BoostFit),
}

impl FittedModel {
    pub fn scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            FittedModel::Glm(f) => f.predict_scores(x),
            FittedModel::Additive(f) => f.predict(x),
            FittedModel::Pspline(f) => f.predict(x),
            FittedModel::Boost(f) => predict_boost(f, x, None),
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            FittedModel::Glm(f) => f.converged,
            FittedModel::Additive(f) => f.converged,
            FittedModel::Pspline(f) => f.converged,
            FittedModel::Boost(_) => true,
        }
    }

    pub fn separation(&self) -> bool {
        match self {
            FittedModel::Glm(f) => f.separation,
            FittedModel::Additive(f) => f.separation,
            FittedModel::Pspline(f) => f.separation,
            FittedModel::Boost(_) => false,
        }
    }

    /// Raw (unscaled) effective degrees of freedom.
    pub fn effective_df(&self) -> f64 {
        match self {
            FittedModel::Glm(f) => f.df,
            FittedModel::Additive(f) => f.effective_df,
            FittedModel::Pspline(f) => f.effective_df,
            FittedModel::Boost(f) => f.trajectory[f.chosen_step].effective_df,
        }
    }
}

fn selected_features(method: Method, model: &FittedModel) -> Option<Vec<usize>> {
    match (method, model) {
        (Method::GlmStep, FittedModel::Glm(f)) => Some(f.kept_features.clone()),
        (Method::BackfitStep, FittedModel::Additive(f)) => Some(f.kept_features()),
        (Method::Gamboost, FittedModel::Boost(f)) => {
            let mut s: Vec<usize> = f.selected_sequence[..f.chosen_step].to_vec();
            s.sort_unstable();
            s.dedup();
            Some(s)
        }
        _ => None,
    }
}

/// Fit one method with the harness settings. Separation is reported through
/// a flag on the fit rather than as an error.
pub fn fit_method(
    method: Method,
    x: &DMatrix<f64>,
    y: &[f64],
    df_scale: f64,
) -> Result<FittedModel> {
    let glm = GlmOptions {
        fail_on_separation: false,
        df_scale,
        ..Default::default()
    };
    let scoring = LocalScoringOptions {
        fail_on_separation: false,
        ..Default::default()
    };
    let pspline = PsplineOptions {
        fail_on_separation: false,
        df_scale,
        ..Default::default()
    };
    Ok(match method {
        Method::Glm => FittedModel::Glm(fit_glm_irls(x, y, &glm)?),
        Method::GlmStep => FittedModel::Glm(backward_eliminate(x, y, &glm)?),
        Method::Backfit => {
            FittedModel::Additive(local_scoring(x, y, &vec![BACKFIT_DF; x.ncols()], &scoring)?)
        }
        Method::BackfitStep => FittedModel::Additive(stepwise_components(
            x,
            y,
            &StepwiseOptions {
                scoring,
                df_scale,
                ..Default::default()
            },
        )?),
        Method::Pspline => FittedModel::Pspline(fit_pspline(
            x,
            y,
            &vec![PSPLINE_LAMBDA; x.ncols()],
            &pspline,
        )?),
        Method::PsplineAic => {
            FittedModel::Pspline(select_lambda_aic(x, y, &default_lambda_grid(), &pspline)?)
        }
        Method::Gamboost => FittedModel::Boost(boost_fit(x, y, &BoostOptions::default())?),
    })
}

/// Wall-clock seconds around the fit call alone.
pub fn time_fit(method: Method, data: &Dataset, df_scale: f64) -> (Result<FittedModel>, f64) {
    let start = Instant::now();
    let fit = fit_method(method, &data.x, &data.y, df_scale);
    (fit, start.elapsed().as_secs_f64())
}

fn warm_up(methods: &[Method], data: &Dataset, df_scale: f64) {
    static WARMED: OnceLock<Mutex<HashSet<Method>>> = OnceLock::new();
    let warmed = WARMED.get_or_init(|| Mutex::new(HashSet::new()));
    for &m in methods {
        let fresh = warmed.lock().map(|mut w| w.insert(m)).unwrap_or(false);
        if fresh {
            let _ = fit_method(m, &data.x, &data.y, df_scale);
        }
    }
}

struct Outcome {
    record: FitRecord,
    tpr_row: Option<Vec<f64>>,
    curves: Option<CurveSet>,
}

fn evaluate(
    rep: usize,
    method: Method,
    train: &Dataset,
    test: &Dataset,
    oracle_auc: Option<f64>,
    cfg: &ExperimentConfig,
) -> Outcome {
    let (fit, secs) = time_fit(method, train, cfg.df_scale);
    let failed = |e: Error, secs: f64| Outcome {
        record: FitRecord {
            rep,
            method,
            status: FitStatus::Failed,
            error_code: Some(e.code().to_owned()),
            auc: None,
            partial_auc: None,
            sensitivity: None,
            oracle_auc,
            effective_df: None,
            converged: false,
            selected_features: None,
            fit_seconds: secs,
        },
        tpr_row: None,
        curves: None,
    };
    let model = match fit {
        Ok(m) => m,
        Err(e) => return failed(e, secs),
    };
    let curve = match model.scores(&test.x).and_then(|s| roc_curve(&s, &test.y)) {
        Ok(c) => c,
        Err(e) => return failed(e, secs),
    };
    let flagged = model.separation();
    let curves = match (&model, rep) {
        (FittedModel::Additive(f), 0) => Some(CurveSet {
            method,
            rep,
            curves: component_curves(f, cfg.curve_grid),
        }),
        _ => None,
    };
    Outcome {
        record: FitRecord {
            rep,
            method,
            status: if flagged {
                FitStatus::Flagged
            } else {
                FitStatus::Ok
            },
            error_code: flagged.then(|| "separation-detected".to_owned()),
            auc: Some(curve.area()),
            partial_auc: partial_auc(&curve, 0.0, 0.1).ok(),
            sensitivity: Some(SENSITIVITY_FPRS.map(|f| curve.tpr_at(f))),
            oracle_auc,
            effective_df: Some(model.effective_df()),
            converged: model.converged(),
            selected_features: selected_features(method, &model),
            fit_seconds: secs,
        },
        tpr_row: Some(
            fpr_grid(cfg.roc_grid)
                .iter()
                .map(|&f| curve.tpr_at(f))
                .collect(),
        ),
        curves,
    }
}

fn run_reps<F>(cfg: &ExperimentConfig, split: F) -> Result<ExperimentReport>
where
    F: Fn(usize) -> Result<(Dataset, Dataset)> + Sync,
{
    cfg.validate()?;
    if !cfg.methods.is_empty() {
        let (train, _) = split(0)?;
        warm_up(&cfg.methods, &train, cfg.df_scale);
    }
    let one_rep = |rep: usize| -> Result<Vec<Outcome>> {
        let (train, test) = split(rep)?;
        let oracle = dataset_oracle_auc(&test).ok();
        Ok(cfg
            .methods
            .iter()
            .map(|&m| evaluate(rep, m, &train, &test, oracle, cfg))
            .collect())
    };
    let per_rep: Vec<Vec<Outcome>> = if cfg.parallel {
        (0..cfg.reps)
            .into_par_iter()
            .map(one_rep)
            .collect::<Result<_>>()?
    } else {
        (0..cfg.reps).map(one_rep).collect::<Result<_>>()?
    };
    Ok(assemble(cfg, per_rep))
}

fn assemble(cfg: &ExperimentConfig, per_rep: Vec<Vec<Outcome>>) -> ExperimentReport {
    let grid = fpr_grid(cfg.roc_grid);
    let mut records = Vec::with_capacity(cfg.reps * cfg.methods.len());
    let mut rows: Vec<Vec<Vec<f64>>> = vec![vec![]; cfg.methods.len()];
    let mut curves = Vec::new();
    for outcomes in per_rep {
        for (k, o) in outcomes.into_iter().enumerate() {
            if let Some(row) = o.tpr_row {
                rows[k].push(row);
            }
            if let Some(c) = o.curves {
                curves.push(c);
            }
            records.push(o.record);
        }
    }
    let averaged_roc = cfg
        .methods
        .iter()
        .zip(&rows)
        .filter_map(|(&m, r)| average_tpr_rows(r, &grid).ok().map(|a| (m, a)))
        .collect();
    let summaries = cfg
        .methods
        .iter()
        .map(|&m| {
            let recs: Vec<&FitRecord> = records.iter().filter(|r| r.method == m).collect();
            summarize(m, &recs)
        })
        .collect();
    ExperimentReport {
        methods: cfg.methods.clone(),
        records,
        averaged_roc,
        summaries,
        curves,
    }
}

/// Training and test draws of replication `rep`: streams `2·rep` and
/// `2·rep + 1` of the generator seed.
pub fn simulation_draws(
    spec: &GeneratorSpec,
    train_n: usize,
    test_n: usize,
    rep: usize,
) -> Result<(Dataset, Dataset)> {
    let train = gen_dataset(&GeneratorSpec {
        n: train_n,
        stream: 2 * rep as u64,
        ..*spec
    })?;
    let test = gen_dataset(&GeneratorSpec {
        n: test_n,
        stream: 2 * rep as u64 + 1,
        ..*spec
    })?;
    Ok((train, test))
}

/// `cfg.reps` fresh train/test draws from `spec` (its `n` and `stream` are
/// replaced by the configured sizes and per-replication streams).
pub fn run_simulation(cfg: &ExperimentConfig, spec: &GeneratorSpec) -> Result<ExperimentReport> {
    GeneratorSpec {
        n: cfg.train_n,
        ..*spec
    }
    .validate()?;
    run_reps(cfg, |rep| {
        simulation_draws(spec, cfg.train_n, cfg.test_n, rep)
    })
}

/// Row indices of the stratified split used in replication `rep`.
pub fn resampling_split(
    y: &[f64],
    train_frac: f64,
    seed: u64,
    rep: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    stratified_split(y, train_frac, &mut rng)
}

/// `cfg.reps` stratified `train_frac` splits of `data`.
pub fn run_resampling(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentReport> {
    check_class_sizes(&data.y)?;
    run_reps(cfg, |rep| {
        let (train, test) = resampling_split(&data.y, cfg.train_frac, cfg.seed, rep)?;
        Ok((data.subset(&train), data.subset(&test)))
    })
}
