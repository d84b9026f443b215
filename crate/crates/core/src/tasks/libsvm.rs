//! LIBSVM text format: `<label> <index>:<value> ...`, 1-based ascending indices.

use std::fmt::Write as _;

use super::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn parse_error(line: usize, field: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Parses LIBSVM text into a dense dataset.
///
/// Labels: `{−1, +1}` maps to `{0, 1}`, `{1, 2}` to `{0, 1}`, other
/// nonnegative integers are class ids as-is, anything else is a real target.
/// Absent features are zero; the feature count is the largest index seen.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label_field = fields.next().expect("nonempty line");
        let label: f64 = label_field
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_error(lineno, label_field, "label is not a number"))?;

        let mut entries = Vec::new();
        let mut last = 0;
        for field in fields {
            let (idx, val) = field
                .split_once(':')
                .ok_or_else(|| parse_error(lineno, field, "expected <index>:<value>"))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_error(lineno, field, "index is not a positive integer"))?;
            if idx == 0 {
                return Err(parse_error(lineno, field, "indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_error(lineno, field, "indices must be strictly ascending"));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_error(lineno, field, "value is not a finite number"))?;
            last = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(last);
        labels.push(label);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if max_index == 0 {
        return Err(Error::InvalidParameter("no features in input".into()));
    }
    let mut data = vec![0.0; rows.len() * max_index];
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            data[i * max_index + j] = v;
        }
    }
    let x = Matrix::new(rows.len(), max_index, data)?;
    Dataset::new(x, classify_labels(&labels))
}

fn classify_labels(raw: &[f64]) -> Targets {
    let all_in = |set: &[f64]| raw.iter().all(|l| set.contains(l));
    if all_in(&[-1.0, 1.0]) && raw.contains(&-1.0) {
        Targets::Classes {
            labels: raw.iter().map(|&l| (l > 0.0) as usize).collect(),
            num_classes: 2,
        }
    } else if all_in(&[1.0, 2.0]) {
        Targets::Classes {
            labels: raw.iter().map(|&l| l as usize - 1).collect(),
            num_classes: 2,
        }
    } else if raw.iter().all(|&l| l >= 0.0 && l.fract() == 0.0 && l < 1e6) {
        let labels: Vec<usize> = raw.iter().map(|&l| l as usize).collect();
        let num_classes = (labels.iter().max().unwrap() + 1).max(2);
        Targets::Classes { labels, num_classes }
    } else {
        Targets::Real(raw.to_vec())
    }
}

/// Writes a dataset so that [`parse_libsvm`] reads it back unchanged
/// (binary labels as `1`/`2`, zeros omitted except the last feature of the
/// first row, which pins the feature count).
pub fn serialize_libsvm(d: &Dataset) -> String {
    let mut out = String::new();
    let cols = d.num_features();
    for i in 0..d.num_samples() {
        match &d.y {
            Targets::Classes { labels, num_classes: 2 } => write!(out, "{}", labels[i] + 1),
            Targets::Classes { labels, .. } => write!(out, "{}", labels[i]),
            Targets::Real(v) => write!(out, "{}", v[i]),
        }
        .expect("writing to a String");
        for (j, &v) in d.x.row(i).iter().enumerate() {
            if v != 0.0 || (i == 0 && j == cols - 1) {
                write!(out, " {}:{}", j + 1, v).expect("writing to a String");
            }
        }
        out.push('\n');
    }
    out
}
