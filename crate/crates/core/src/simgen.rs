//! Synthetic two-class data with a known additive log-odds.
//!
//! Every coordinate is drawn i.i.d. from `U[-1, 1]`; only `x1`, `x3` and `x5`
//! enter the log-odds
//!
//! ```text
//! η = 3 (-0.7 + g1(x1) + g2(x3) + g3(x5)),   p = 1 / (1 + e^{-η})
//! ```
//!
//! Random streams come from ChaCha8 keyed by `seed`, with the 64-bit
//! `stream` word selecting an independent sequence. The harness gives
//! replication `r` the streams `2r` (training) and `2r + 1` (test), so each
//! draw depends only on `(seed, r)` and never on execution order.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logistic_glm::sigmoid;
use crate::roc_eval::auc;

/// Zero-based columns of the effective variables `x1`, `x3`, `x5`.
pub const EFFECTIVE_INDICES: [usize; 3] = [0, 2, 4];
const MAX_RETRIES: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableSet {
    /// `g1 = x`, `g2 = 2x²`, `g3 = sin(5x)`.
    Set1,
    /// `g1 = 2(1 - x³)`, `g2 = 3 exp(-5x²)`, `g3 = 4 ln(1 + x²)`.
    Set2,
}

impl VariableSet {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(VariableSet::Set1),
            2 => Ok(VariableSet::Set2),
            _ => Err(Error::InvalidConfig(format!(
                "variable set must be 1 or 2, got {n}"
            ))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            VariableSet::Set1 => 1,
            VariableSet::Set2 => 2,
        }
    }

    /// `(g1, g2, g3)` evaluated at the three effective coordinates.
    pub fn effects(self, a: f64, b: f64, c: f64) -> [f64; 3] {
        match self {
            VariableSet::Set1 => [a, 2.0 * b * b, (5.0 * c).sin()],
            VariableSet::Set2 => [
                2.0 * (-a.powi(3) + 1.0),
                3.0 * (-5.0 * b * b).exp(),
                4.0 * (1.0 + c * c).ln(),
            ],
        }
    }

    /// True log-odds for one row (length ≥ 5).
    pub fn log_odds(self, row: &[f64]) -> f64 {
        let [g1, g2, g3] = self.effects(
            row[EFFECTIVE_INDICES[0]],
            row[EFFECTIVE_INDICES[1]],
            row[EFFECTIVE_INDICES[2]],
        );
        3.0 * (-0.7 + g1 + g2 + g3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub set: VariableSet,
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
    pub stream: u64,
}

impl GeneratorSpec {
    pub fn new(set: VariableSet, dim: usize, n: usize, seed: u64) -> Self {
        GeneratorSpec {
            set,
            dim,
            n,
            seed,
            stream: 0,
        }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        GeneratorSpec { stream, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 5 {
            return Err(Error::InvalidConfig(format!(
                "dimension must be at least 5 (got {})",
                self.dim
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("sample size must be positive".into()));
        }
        Ok(())
    }
}

/// Feature matrix, 0/1 response and, for synthetic data, the true log-odds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub oracle_eta: Option<Vec<f64>>,
    /// How many times the draw was repeated with an incremented seed because
    /// it held a single class.
    pub regenerations: u32,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1.0).count()
    }

    /// Rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: DMatrix::from_fn(rows.len(), self.dim(), |i, j| self.x[(rows[i], j)]),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            feature_names: self.feature_names.clone(),
            oracle_eta: self
                .oracle_eta
                .as_ref()
                .map(|e| rows.iter().map(|&r| e[r]).collect()),
            regenerations: self.regenerations,
        }
    }

    /// Comma-separated text in the harness input schema: a header of
    /// feature names followed by `label`, labels written as `1`/`0`.
    pub fn to_csv(&self) -> String {
        let mut out = self.feature_names.join(",");
        out.push_str(",label\n");
        for i in 0..self.n() {
            for j in 0..self.dim() {
                let _ = write!(out, "{},", self.x[(i, j)]);
            }
            let _ = writeln!(out, "{}", self.y[i] as u8);
        }
        out
    }
}

fn draw(spec: &GeneratorSpec, seed: u64, log_odds: &dyn Fn(&[f64]) -> f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(spec.stream);
    let mut x = DMatrix::zeros(spec.n, spec.dim);
    let mut y = Vec::with_capacity(spec.n);
    let mut eta = Vec::with_capacity(spec.n);
    let mut row = vec![0.0; spec.dim];
    for i in 0..spec.n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rng.random_range(-1.0..=1.0);
            x[(i, j)] = *v;
        }
        let e = log_odds(&row);
        let u: f64 = rng.random();
        y.push(if u < sigmoid(e) { 1.0 } else { 0.0 });
        eta.push(e);
    }
    Dataset {
        x,
        y,
        feature_names: (1..=spec.dim).map(|j| format!("x{j}")).collect(),
        oracle_eta: Some(eta),
        regenerations: 0,
    }
}

/// Draw with an arbitrary log-odds function, retrying with `seed + 1, seed + 2, …`
/// while the sample holds a single class.
pub fn gen_with_log_odds(
    spec: &GeneratorSpec,
    log_odds: &dyn Fn(&[f64]) -> f64,
) -> Result<Dataset> {
    spec.validate()?;
    for retry in 0..=MAX_RETRIES {
        let mut data = draw(spec, spec.seed.wrapping_add(retry as u64), log_odds);
        let pos = data.positives();
        if pos > 0 && pos < data.n() {
            data.regenerations = retry;
            if retry > 0 {
                log::warn!(
                    "single-class draw regenerated {retry} time(s) (n = {})",
                    spec.n
                );
            }
            return Ok(data);
        }
    }
    Err(Error::DegenerateAfterRetries {
        retries: MAX_RETRIES,
        n: spec.n,
    })
}

pub fn gen_dataset(spec: &GeneratorSpec) -> Result<Dataset> {
    let set = spec.set;
    gen_with_log_odds(spec, &move |row| set.log_odds(row))
}

/// AUC of the true log-odds on a draw of `n_test` rows from `spec`.
pub fn oracle_auc(spec: &GeneratorSpec, n_test: usize) -> Result<f64> {
    let data = gen_dataset(&GeneratorSpec { n: n_test, ..*spec })?;
    dataset_oracle_auc(&data)
}

/// AUC of a dataset's stored true log-odds.
pub fn dataset_oracle_auc(data: &Dataset) -> Result<f64> {
    let eta = data
        .oracle_eta
        .as_ref()
        .ok_or(Error::EmptyInput("oracle log-odds"))?;
    auc(eta, &data.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_odds_at_origin() {
        let zero = [0.0; 5];
        assert!((VariableSet::Set1.log_odds(&zero) - (-2.1)).abs() < 1e-15);
        assert!(
            (sigmoid(VariableSet::Set1.log_odds(&zero)) - 0.109_096_821_195_613_9).abs() < 1e-12
        );
        assert_eq!(VariableSet::Set2.effects(0.0, 0.0, 0.0), [2.0, 3.0, 0.0]);
        assert!((VariableSet::Set2.log_odds(&zero) - 12.9).abs() < 1e-12);
        assert!((sigmoid(12.9) - 0.999_997_5).abs() < 1e-7);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = GeneratorSpec::new(VariableSet::Set1, 10, 200, 42);
        assert_eq!(gen_dataset(&spec).unwrap(), gen_dataset(&spec).unwrap());
        let other = gen_dataset(&spec.with_stream(1)).unwrap();
        assert_ne!(gen_dataset(&spec).unwrap().x, other.x);
    }

    #[test]
    fn oracle_eta_is_consistent_and_coordinates_uniform() {
        let spec = GeneratorSpec::new(VariableSet::Set2, 10, 4000, 9);
        let d = gen_dataset(&spec).unwrap();
        let eta = d.oracle_eta.as_ref().unwrap();
        for (i, &e) in eta.iter().enumerate() {
            let row: Vec<f64> = d.x.row(i).iter().copied().collect();
            assert_eq!(VariableSet::Set2.log_odds(&row), e);
        }
        let sigma = (1.0f64 / 3.0).sqrt();
        for j in 0..10 {
            let col = d.x.column(j);
            let mean = col.sum() / d.n() as f64;
            assert!(
                mean.abs() < 3.0 * sigma / (d.n() as f64).sqrt(),
                "col {j} mean {mean}"
            );
            assert!(col.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    /// `E[p(x)]` for Set 1 by 200³-node Gauss–Legendre quadrature, computed
    /// offline.
    const SET1_POSITIVE_RATE: f64 = 0.485_207_678_545_867_55;

    #[test]
    fn set1_class_balance_matches_quadrature_rate() {
        let n = 20_000;
        let d = gen_dataset(&GeneratorSpec::new(VariableSet::Set1, 5, n, 77)).unwrap();
        let rate = d.positives() as f64 / n as f64;
        let p = SET1_POSITIVE_RATE;
        let bound = 2.576 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() < bound, "rate {rate}");
    }

    #[test]
    fn uninformative_oracle_has_half_auc() {
        let spec = GeneratorSpec::new(VariableSet::Set1, 5, 1000, 3);
        let d = gen_with_log_odds(&spec, &|_| 0.0).unwrap();
        assert_eq!(dataset_oracle_auc(&d).unwrap(), 0.5);
    }

    #[test]
    fn tiny_samples_regenerate_or_fail() {
        // Set 2 is ~99% positive: n = 1 is always single-class
        let spec = GeneratorSpec::new(VariableSet::Set2, 5, 1, 0);
        assert!(matches!(
            gen_dataset(&spec),
            Err(Error::DegenerateAfterRetries { .. })
        ));
        let spec = GeneratorSpec::new(VariableSet::Set2, 5, 100, 0);
        let d = gen_dataset(&spec).unwrap();
        assert!(d.positives() < d.n());
    }

    #[test]
    fn rejects_small_dimension() {
        let spec = GeneratorSpec::new(VariableSet::Set1, 3, 10, 0);
        assert!(gen_dataset(&spec).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let d = gen_dataset(&GeneratorSpec::new(VariableSet::Set1, 5, 4, 1)).unwrap();
        let text = d.to_csv();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2,x3,x4,x5,label");
        assert_eq!(lines.count(), 4);
    }
}
