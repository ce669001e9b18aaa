//! Sparse `label index:value ...` text files.

use std::path::Path;

use ipdfp_core::linop::DenseMatrix;
use ipdfp_core::problems::LogRegDataset;

use crate::error::{CliError, Result};

/// Parse LibSVM text. Label `0` is read as `-1`; indices are 1-based.
///
/// Blank lines and lines starting with `#` are skipped. The feature
/// dimension is the largest index seen, or `dim` if given.
pub fn parse_libsvm(text: &str, source: &Path, dim: Option<usize>) -> Result<LogRegDataset> {
    let bad = |line: usize, message: String| CliError::Input {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| bad(line_no, format!("invalid label `{label_tok}`")))?;
        let label = if label == 0.0 {
            -1.0
        } else if label == 1.0 || label == -1.0 {
            label
        } else {
            return Err(bad(line_no, format!("label must be -1, 0 or 1, got `{label_tok}`")));
        };
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| bad(line_no, format!("expected index:value, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| bad(line_no, format!("invalid index `{idx}`")))?;
            if idx == 0 {
                return Err(bad(line_no, "indices are 1-based, got 0".into()));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad(line_no, format!("invalid value `{val}`")))?;
            if row.iter().any(|&(j, _)| j == idx - 1) {
                return Err(bad(line_no, format!("duplicate index {idx}")));
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(bad(0, "no observations".into()));
    }
    let q = match dim {
        Some(d) if d < max_index => {
            return Err(bad(0, format!("index {max_index} exceeds declared dimension {d}")))
        }
        Some(d) => d,
        None => max_index,
    };
    if q == 0 {
        return Err(bad(0, "no features".into()));
    }
    let mut features = DenseMatrix::zeros(rows.len(), q);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features.set(i, j, v);
        }
    }
    LogRegDataset::new(features, labels).map_err(|e| bad(0, e.to_string()))
}

pub fn read_libsvm(path: &Path, dim: Option<usize>) -> Result<LogRegDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_libsvm(&text, path, dim)
}
