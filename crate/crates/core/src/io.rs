//! CSV and libsvm readers plus the CSV writer used for partition outputs.
//!
//! CSV files are RFC-4180 with a required header row. Columns must be
//! numeric; empty cells become missing values. Feature ids are taken from
//! header names of the form `f<N>` when every feature column follows that
//! convention (the form the partition writer emits), otherwise they are
//! assigned positionally from 0.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::dataset::{Dataset, FeatureId, InstanceId, MISSING};
use crate::error::{CoreError, Result};

pub fn parse_csv(
    path: &Path,
    label_column: Option<&str>,
    id_column: Option<&str>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CoreError::Parse { line: 0, msg: e.to_string() })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CoreError::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(CoreError::Parse { line: 1, msg: "no rows".into() });
    }

    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CoreError::Validation(format!("label column '{name}' not found")))?,
        ),
        None => None,
    };
    let id_idx = match id_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CoreError::Validation(format!("id column '{name}' not found")))?,
        ),
        None => None,
    };

    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|i| Some(*i) != label_idx && Some(*i) != id_idx)
        .collect();
    let feature_ids = feature_ids_from_headers(&headers, &feature_cols);

    let mut instance_ids: Vec<InstanceId> = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); feature_cols.len()];
    let mut labels: Vec<f64> = Vec::new();

    for (rec_no, rec) in reader.records().enumerate() {
        let line = rec_no + 2; // 1-based, after header
        let rec = rec.map_err(|e| CoreError::Parse { line, msg: e.to_string() })?;
        if rec.len() != headers.len() {
            return Err(CoreError::Parse {
                line,
                msg: format!("expected {} columns, found {}", headers.len(), rec.len()),
            });
        }
        let id = match id_idx {
            Some(i) => rec[i]
                .trim()
                .parse::<InstanceId>()
                .map_err(|_| CoreError::Parse { line, msg: format!("bad id '{}'", &rec[i]) })?,
            None => rec_no as InstanceId,
        };
        instance_ids.push(id);
        if let Some(i) = label_idx {
            let v = parse_cell(rec[i].trim(), line)?;
            if v.is_nan() {
                return Err(CoreError::Parse { line, msg: "missing label".into() });
            }
            labels.push(v);
        }
        for (c, col_idx) in feature_cols.iter().enumerate() {
            columns[c].push(parse_cell(rec[*col_idx].trim(), line)?);
        }
    }

    if instance_ids.is_empty() {
        return Err(CoreError::Parse { line: 1, msg: "no rows".into() });
    }
    Dataset::new(
        instance_ids,
        feature_ids,
        columns,
        label_idx.map(|_| labels),
    )
}

fn parse_cell(s: &str, line: usize) -> Result<f64> {
    if s.is_empty() {
        return Ok(MISSING);
    }
    s.parse::<f64>()
        .map_err(|_| CoreError::Parse { line, msg: format!("non-numeric value '{s}'") })
}

fn feature_ids_from_headers(headers: &[String], feature_cols: &[usize]) -> Vec<FeatureId> {
    let parsed: Option<Vec<FeatureId>> = feature_cols
        .iter()
        .map(|i| {
            let h = &headers[*i];
            h.strip_prefix('f').and_then(|rest| rest.parse::<FeatureId>().ok())
        })
        .collect();
    match parsed {
        Some(ids) => ids,
        None => (0..feature_cols.len() as FeatureId).collect(),
    }
}

/// Parse a libsvm-format file: `<label> <index>:<value> ...` with 1-based,
/// strictly increasing indices per line. Produces a dense dataset whose
/// width is the maximum index seen anywhere in the file.
pub fn parse_libsvm(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);

    let mut labels: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut width = 0usize;

    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line_1 = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let label_tok = parts.next().unwrap();
        let label = label_tok
            .parse::<f64>()
            .map_err(|_| CoreError::Parse { line: line_1, msg: format!("bad label '{label_tok}'") })?;
        let mut pairs = Vec::new();
        let mut last_idx = 0usize;
        for tok in parts {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| CoreError::Parse {
                line: line_1,
                msg: format!("expected index:value, found '{tok}'"),
            })?;
            let idx = idx_s.parse::<usize>().map_err(|_| CoreError::Parse {
                line: line_1,
                msg: format!("bad index '{idx_s}'"),
            })?;
            let val = val_s.parse::<f64>().map_err(|_| CoreError::Parse {
                line: line_1,
                msg: format!("bad value '{val_s}'"),
            })?;
            if idx == 0 {
                return Err(CoreError::Parse { line: line_1, msg: "indices are 1-based".into() });
            }
            if idx <= last_idx {
                return Err(CoreError::Parse {
                    line: line_1,
                    msg: format!("non-monotone index {idx} after {last_idx}"),
                });
            }
            last_idx = idx;
            pairs.push((idx, val));
        }
        width = width.max(last_idx);
        labels.push(label);
        rows.push(pairs);
    }

    if rows.is_empty() {
        return Err(CoreError::Parse { line: 1, msg: "no rows".into() });
    }

    let n = rows.len();
    let mut columns = vec![vec![0.0; n]; width];
    for (r, pairs) in rows.iter().enumerate() {
        for (idx, val) in pairs {
            columns[idx - 1][r] = *val;
        }
    }
    Dataset::new(
        (0..n as InstanceId).collect(),
        (0..width as FeatureId).collect(),
        columns,
        Some(labels),
    )
}

/// Write a dataset as CSV with an `id` column, `f<fid>` feature columns and,
/// when labels are present, a trailing `label` column. Missing values are
/// written as empty cells. Reals round-trip exactly through `parse_csv`.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header = String::from("id");
    for fid in dataset.feature_ids() {
        header.push_str(&format!(",f{fid}"));
    }
    if dataset.has_labels() {
        header.push_str(",label");
    }
    writeln!(out, "{header}")?;
    for (row, id) in dataset.instance_ids().iter().enumerate() {
        let mut line = id.to_string();
        for col in 0..dataset.n_features() {
            let v = dataset.value_at(row, col);
            line.push(',');
            if !v.is_nan() {
                line.push_str(ryu_full(v).as_str());
            }
        }
        if let Some(y) = dataset.labels() {
            line.push(',');
            line.push_str(ryu_full(y[row]).as_str());
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn ryu_full(v: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{v}")
}
