use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::simgen::Dataset;

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "?")
}

fn same_label(cell: &str, label: &str) -> bool {
    if cell == label {
        return true;
    }
    match (cell.parse::<f64>(), label.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Read a headed, comma-separated file. `positive_label` maps to 1 and the
/// one other label value present maps to 0; a third distinct value is an
/// error. Rows with a missing cell are dropped with a warning.
pub fn load_csv(path: &Path, label_column: &str, positive_label: &str) -> Result<Dataset> {
    load_csv_ignoring(path, label_column, positive_label, &[])
}

/// As [`load_csv`], skipping the named non-feature columns (e.g. record ids).
pub fn load_csv_ignoring(
    path: &Path,
    label_column: &str,
    positive_label: &str,
    ignore: &[String],
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::InvalidConfig(format!("label column '{label_column}' not in header"))
        })?;
    if let Some(missing) = ignore.iter().find(|c| !header.contains(c)) {
        return Err(Error::InvalidConfig(format!(
            "ignored column '{missing}' not in header"
        )));
    }
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_idx && !ignore.contains(&header[c]))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::EmptyInput("feature columns"));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut negative: Option<String> = None;
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        // data rows are numbered from 1, header excluded
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let label = record.get(label_idx).unwrap_or("");
        if is_missing(label)
            || feature_cols
                .iter()
                .any(|&c| is_missing(record.get(c).unwrap_or("")))
        {
            dropped += 1;
            continue;
        }
        let mut parsed = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: header[c].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header[c].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            parsed.push(v);
        }
        let y_val = if same_label(label, positive_label) {
            1.0
        } else {
            match &negative {
                None => {
                    negative = Some(label.to_owned());
                    0.0
                }
                Some(neg) if same_label(label, neg) => 0.0,
                Some(_) => return Err(Error::UnknownLabelValue(label.to_owned())),
            }
        };
        values.extend(parsed);
        y.push(y_val);
    }
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} row(s) with missing values",
            path.display()
        );
    }
    if y.is_empty() {
        return Err(if dropped > 0 {
            Error::AllRowsDropped
        } else {
            Error::EmptyInput("data rows")
        });
    }
    if !y.contains(&1.0) {
        return Err(Error::UnknownLabelValue(positive_label.to_owned()));
    }
    let d = feature_cols.len();
    Ok(Dataset {
        x: DMatrix::from_row_slice(y.len(), d, &values),
        y,
        feature_names: feature_cols.iter().map(|&c| header[c].clone()).collect(),
        oracle_eta: None,
        regenerations: 0,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            row: 0,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

/// Per-class random split keeping `round(train_frac·n_c)` rows of each class
/// for training, at least one and at most `n_c - 1`. Both index lists are
/// sorted.
pub fn stratified_split<R: Rng + ?Sized>(
    y: &[f64],
    train_frac: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_class_sizes(y)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        idx.shuffle(rng);
        let n_c = idx.len();
        let k = ((train_frac * n_c as f64).round() as usize).clamp(1, n_c - 1);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn check_class_sizes(y: &[f64]) -> Result<()> {
    for label in [0u8, 1u8] {
        let count = y.iter().filter(|&&v| v == label as f64).count();
        if count < 2 {
            return Err(Error::ClassTooSmall { label, count });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn maps_labels_and_reads_features() {
        let f = write("a,b,label\n1.5,2,pos\n-1,0.25,neg\n3,4,pos\n");
        let d = load_csv(f.path(), "label", "pos").unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.y, vec![1.0, 0.0, 1.0]);
        assert_eq!(d.x[(1, 1)], 0.25);
        assert_eq!(d.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let f = write("a,b,label\n1,2,1\n3,oops,0\n");
        match load_csv(f.path(), "label", "1") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_rows_are_dropped() {
        let f = write("a,b,label\n1,2,1\n3,,0\n5,6,0\n");
        let d = load_csv(f.path(), "label", "1").unwrap();
        assert_eq!(d.n(), 2);
        let f = write("a,label\n,1\nNA,0\n");
        assert!(matches!(
            load_csv(f.path(), "label", "1"),
            Err(Error::AllRowsDropped)
        ));
    }

    #[test]
    fn third_label_is_rejected_and_numeric_labels_compare_by_value() {
        let f = write("a,label\n1,x\n2,y\n3,z\n");
        assert!(matches!(
            load_csv(f.path(), "label", "x"),
            Err(Error::UnknownLabelValue(v)) if v == "z"
        ));
        let f = write("a,label\n1,1.0\n2,0\n");
        assert_eq!(load_csv(f.path(), "label", "1").unwrap().y, vec![1.0, 0.0]);
        assert!(load_csv(f.path(), "nope", "1").is_err());
    }

    #[test]
    fn ignored_columns_are_skipped() {
        let f = write("name,a,status\nr1,0.5,1\nr2,0.7,0\n");
        assert!(load_csv(f.path(), "status", "1").is_err());
        let d = load_csv_ignoring(f.path(), "status", "1", &["name".into()]).unwrap();
        assert_eq!(d.feature_names, vec!["a"]);
    }

    #[test]
    fn parkinsons_shaped_split() {
        let y: Vec<f64> = (0..195).map(|i| if i < 147 { 1.0 } else { 0.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, test) = stratified_split(&y, 0.9, &mut rng).unwrap();
        let pos = train.iter().filter(|&&i| y[i] == 1.0).count();
        assert_eq!((pos, train.len() - pos), (132, 43));
        assert_eq!(train.len() + test.len(), 195);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..195).collect::<Vec<_>>());
    }

    #[test]
    fn tiny_class_is_rejected() {
        let y = vec![1.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            stratified_split(&y, 0.9, &mut rng),
            Err(Error::ClassTooSmall { label: 1, count: 1 })
        ));
    }
}
