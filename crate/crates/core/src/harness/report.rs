//! Experiment records and their on-disk form.
//!
//! `records.csv` has one line per (replication, method) with the fields of
//! [`RECORD_HEADER`] in that order. Reals are written in Rust's shortest
//! round-trip form, absent values as empty cells, and selected features as
//! `;`-separated zero-based column indices.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gam_backfit::ComponentCurve;
use crate::roc_eval::AveragedRoc;

use super::Method;

pub const RECORD_HEADER: [&str; 14] = [
    "rep",
    "method",
    "status",
    "error_code",
    "auc",
    "pauc_0_0.1",
    "sens_fpr_0.05",
    "sens_fpr_0.10",
    "sens_fpr_0.15",
    "oracle_auc",
    "effective_df",
    "converged",
    "selected_features",
    "fit_seconds",
];

pub const SUMMARY_HEADER: [&str; 18] = [
    "method",
    "n_ok",
    "n_flagged",
    "n_failed",
    "auc_mean",
    "auc_sd",
    "auc_min",
    "auc_q1",
    "auc_median",
    "auc_q3",
    "auc_max",
    "pauc_mean",
    "sens_0.05_mean",
    "sens_0.10_mean",
    "sens_0.15_mean",
    "oracle_auc_mean",
    "fit_seconds_mean",
    "fit_seconds_median",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Ok,
    /// Fitted and scored, but with a warning condition (separation).
    Flagged,
    Failed,
}

impl FitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FitStatus::Ok => "ok",
            FitStatus::Flagged => "flagged",
            FitStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(FitStatus::Ok),
            "flagged" => Some(FitStatus::Flagged),
            "failed" => Some(FitStatus::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub rep: usize,
    pub method: Method,
    pub status: FitStatus,
    pub error_code: Option<String>,
    pub auc: Option<f64>,
    pub partial_auc: Option<f64>,
    /// Sensitivity at false-positive rates 0.05, 0.10, 0.15.
    pub sensitivity: Option<[f64; 3]>,
    pub oracle_auc: Option<f64>,
    pub effective_df: Option<f64>,
    pub converged: bool,
    pub selected_features: Option<Vec<usize>>,
    pub fit_seconds: f64,
}

impl FitRecord {
    pub fn scored(&self) -> bool {
        self.auc.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    pub n_flagged: usize,
    pub n_failed: usize,
    pub auc_mean: f64,
    pub auc_sd: f64,
    /// min, q1, median, q3, max.
    pub auc_quantiles: [f64; 5],
    pub partial_auc_mean: f64,
    pub sensitivity_mean: [f64; 3],
    pub oracle_auc_mean: Option<f64>,
    pub fit_seconds_mean: f64,
    pub fit_seconds_median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub method: Method,
    pub rep: usize,
    pub curves: Vec<ComponentCurve>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub methods: Vec<Method>,
    /// Ordered by (rep, method position in `methods`).
    pub records: Vec<FitRecord>,
    pub averaged_roc: Vec<(Method, AveragedRoc)>,
    pub summaries: Vec<MethodSummary>,
    pub curves: Vec<CurveSet>,
}

impl ExperimentReport {
    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &FitRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn averaged(&self, method: Method) -> Option<&AveragedRoc> {
        self.averaged_roc
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, a)| a)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data (`(n-1)·q` positioning).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(method: Method, records: &[&FitRecord]) -> MethodSummary {
    let count = |s: FitStatus| records.iter().filter(|r| r.status == s).count();
    let scored: Vec<&&FitRecord> = records.iter().filter(|r| r.scored()).collect();
    let mut aucs: Vec<f64> = scored.iter().filter_map(|r| r.auc).collect();
    aucs.sort_by(f64::total_cmp);
    let paucs: Vec<f64> = scored.iter().filter_map(|r| r.partial_auc).collect();
    let sens = |k: usize| {
        mean(
            &scored
                .iter()
                .filter_map(|r| r.sensitivity.map(|s| s[k]))
                .collect::<Vec<_>>(),
        )
    };
    let oracle: Vec<f64> = records.iter().filter_map(|r| r.oracle_auc).collect();
    let mut secs: Vec<f64> = records
        .iter()
        .filter(|r| r.status != FitStatus::Failed)
        .map(|r| r.fit_seconds)
        .collect();
    secs.sort_by(f64::total_cmp);
    MethodSummary {
        method,
        n_ok: count(FitStatus::Ok),
        n_flagged: count(FitStatus::Flagged),
        n_failed: count(FitStatus::Failed),
        auc_mean: mean(&aucs),
        auc_sd: sample_sd(&aucs),
        auc_quantiles: [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&aucs, q)),
        partial_auc_mean: mean(&paucs),
        sensitivity_mean: [sens(0), sens(1), sens(2)],
        oracle_auc_mean: (!oracle.is_empty()).then(|| mean(&oracle)),
        fit_seconds_mean: mean(&secs),
        fit_seconds_median: quantile_sorted(&secs, 0.5),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_fields(r: &FitRecord) -> Vec<String> {
    let sens = |k: usize| opt(r.sensitivity.map(|s| s[k]));
    vec![
        r.rep.to_string(),
        r.method.name().to_owned(),
        r.status.as_str().to_owned(),
        r.error_code.clone().unwrap_or_default(),
        opt(r.auc),
        opt(r.partial_auc),
        sens(0),
        sens(1),
        sens(2),
        opt(r.oracle_auc),
        opt(r.effective_df),
        r.converged.to_string(),
        r.selected_features
            .as_ref()
            .map(|f| {
                f.iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default(),
        r.fit_seconds.to_string(),
    ]
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_write_error(path, e))?;
    w.write_record(header)
        .map_err(|e| csv_write_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_write_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_write_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_records(path: &Path, records: &[FitRecord]) -> Result<()> {
    write_csv(path, &RECORD_HEADER, records.iter().map(record_fields))
}

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_owned(),
        message: message.into(),
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => parse_error(0, "", format!("{other:?}")),
    })?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(0, "", e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(parse_error(0, "", format!("unexpected header {found:?}")));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| parse_error(i + 1, "", e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    row: usize,
    header: &[&str],
    k: usize,
) -> Result<T> {
    rec[k]
        .parse()
        .map_err(|_| parse_error(row, header[k], format!("cannot parse '{}'", &rec[k])))
}

fn opt_field(
    rec: &csv::StringRecord,
    row: usize,
    header: &[&str],
    k: usize,
) -> Result<Option<f64>> {
    if rec[k].is_empty() {
        Ok(None)
    } else {
        field(rec, row, header, k).map(Some)
    }
}

pub fn parse_records(path: &Path) -> Result<Vec<FitRecord>> {
    let h = &RECORD_HEADER;
    read_rows(path, h)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            let method = Method::parse(&rec[1]).map_err(|_| parse_error(row, h[1], &rec[1]))?;
            let status =
                FitStatus::parse(&rec[2]).ok_or_else(|| parse_error(row, h[2], &rec[2]))?;
            let s: Vec<Option<f64>> = (6..9)
                .map(|k| opt_field(rec, row, h, k))
                .collect::<Result<_>>()?;
            let sensitivity = match (s[0], s[1], s[2]) {
                (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                _ => None,
            };
            let selected_features = if rec[12].is_empty() {
                None
            } else {
                Some(
                    rec[12]
                        .split(';')
                        .map(|t| t.parse().map_err(|_| parse_error(row, h[12], t)))
                        .collect::<Result<Vec<usize>>>()?,
                )
            };
            Ok(FitRecord {
                rep: field(rec, row, h, 0)?,
                method,
                status,
                error_code: (!rec[3].is_empty()).then(|| rec[3].to_owned()),
                auc: opt_field(rec, row, h, 4)?,
                partial_auc: opt_field(rec, row, h, 5)?,
                sensitivity,
                oracle_auc: opt_field(rec, row, h, 9)?,
                effective_df: opt_field(rec, row, h, 10)?,
                converged: field(rec, row, h, 11)?,
                selected_features,
                fit_seconds: field(rec, row, h, 13)?,
            })
        })
        .collect()
}

fn summary_fields(s: &MethodSummary) -> Vec<String> {
    let mut v = vec![
        s.method.name().to_owned(),
        s.n_ok.to_string(),
        s.n_flagged.to_string(),
        s.n_failed.to_string(),
        s.auc_mean.to_string(),
        s.auc_sd.to_string(),
    ];
    v.extend(s.auc_quantiles.iter().map(f64::to_string));
    v.push(s.partial_auc_mean.to_string());
    v.extend(s.sensitivity_mean.iter().map(f64::to_string));
    v.push(opt(s.oracle_auc_mean));
    v.push(s.fit_seconds_mean.to_string());
    v.push(s.fit_seconds_median.to_string());
    v
}

pub fn parse_summary(path: &Path) -> Result<Vec<MethodSummary>> {
    let h = &SUMMARY_HEADER;
    read_rows(path, h)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            let f = |k: usize| field::<f64>(rec, row, h, k);
            Ok(MethodSummary {
                method: Method::parse(&rec[0]).map_err(|_| parse_error(row, h[0], &rec[0]))?,
                n_ok: field(rec, row, h, 1)?,
                n_flagged: field(rec, row, h, 2)?,
                n_failed: field(rec, row, h, 3)?,
                auc_mean: f(4)?,
                auc_sd: f(5)?,
                auc_quantiles: [f(6)?, f(7)?, f(8)?, f(9)?, f(10)?],
                partial_auc_mean: f(11)?,
                sensitivity_mean: [f(12)?, f(13)?, f(14)?],
                oracle_auc_mean: opt_field(rec, row, h, 15)?,
                fit_seconds_mean: f(16)?,
                fit_seconds_median: f(17)?,
            })
        })
        .collect()
}

/// Tab-separated `fpr mean_tpr ci_lo ci_hi` lines under a header.
pub fn averaged_roc_text(avg: &AveragedRoc) -> String {
    let mut out = String::from("fpr\tmean_tpr\tci_lo\tci_hi\n");
    for i in 0..avg.fpr_grid.len() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            avg.fpr_grid[i], avg.mean_tpr[i], avg.ci_lo[i], avg.ci_hi[i]
        ));
    }
    out
}

/// Inverse of [`averaged_roc_text`]; the replication count is not stored.
pub fn parse_averaged_roc(text: &str) -> Result<AveragedRoc> {
    let mut avg = AveragedRoc {
        fpr_grid: vec![],
        mean_tpr: vec![],
        ci_lo: vec![],
        ci_hi: vec![],
        n_curves: 0,
    };
    for (i, line) in text.lines().enumerate().skip(1) {
        let v: Vec<f64> = line
            .split('\t')
            .map(|t| {
                t.parse()
                    .map_err(|_| parse_error(i, "", format!("bad value '{t}'")))
            })
            .collect::<Result<_>>()?;
        if v.len() != 4 {
            return Err(parse_error(i, "", "expected 4 columns"));
        }
        avg.fpr_grid.push(v[0]);
        avg.mean_tpr.push(v[1]);
        avg.ci_lo.push(v[2]);
        avg.ci_hi.push(v[3]);
    }
    Ok(avg)
}

fn curve_rows(set: &CurveSet) -> impl Iterator<Item = Vec<String>> + '_ {
    set.curves.iter().flat_map(|c| {
        c.points.iter().map(move |p| {
            vec![
                (c.feature_index + 1).to_string(),
                p.x.to_string(),
                p.value.to_string(),
                p.se.to_string(),
            ]
        })
    })
}

/// Write `records.csv`, `summary.csv`, `roc_<method>.tsv` per method and
/// `curves_<method>_rep<r>.csv` per stored component-curve set.
pub fn emit_report(report: &ExperimentReport, output_dir: &Path) -> Result<()> {
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    write_records(&output_dir.join("records.csv"), &report.records)?;
    write_csv(
        &output_dir.join("summary.csv"),
        &SUMMARY_HEADER,
        report.summaries.iter().map(summary_fields),
    )?;
    for (method, avg) in &report.averaged_roc {
        let path = output_dir.join(format!("roc_{}.tsv", method.name()));
        fs::write(&path, averaged_roc_text(avg)).map_err(|e| Error::io(&path, e))?;
    }
    for set in &report.curves {
        let path = output_dir.join(format!("curves_{}_rep{}.csv", set.method.name(), set.rep));
        write_csv(&path, &["feature", "x", "value", "se"], curve_rows(set))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!(quantile_sorted(&[], 0.5).is_nan());
        assert!((sample_sd(&v) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let records = vec![
            FitRecord {
                rep: 0,
                method: Method::GlmStep,
                status: FitStatus::Ok,
                error_code: None,
                auc: Some(0.1 + 0.2),
                partial_auc: Some(1e-7),
                sensitivity: Some([0.1, 1.0 / 3.0, 0.0]),
                oracle_auc: Some(0.93),
                effective_df: Some(4.0),
                converged: true,
                selected_features: Some(vec![0, 2, 4]),
                fit_seconds: 0.001234,
            },
            FitRecord {
                rep: 3,
                method: Method::Gamboost,
                status: FitStatus::Failed,
                error_code: Some("one-class-input".into()),
                auc: None,
                partial_auc: None,
                sensitivity: None,
                oracle_auc: None,
                effective_df: None,
                converged: false,
                selected_features: None,
                fit_seconds: 0.0,
            },
        ];
        write_records(&path, &records).unwrap();
        assert_eq!(parse_records(&path).unwrap(), records);
    }

    #[test]
    fn averaged_roc_round_trip() {
        let avg = AveragedRoc {
            fpr_grid: vec![0.0, 0.5, 1.0],
            mean_tpr: vec![0.0, 0.7, 1.0],
            ci_lo: vec![0.0, 0.6, 1.0],
            ci_hi: vec![0.0, 0.8, 1.0],
            n_curves: 0,
        };
        assert_eq!(parse_averaged_roc(&averaged_roc_text(&avg)).unwrap(), avg);
    }
}
