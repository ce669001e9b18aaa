//! Linear operators with forward and adjoint application.
//!
//! Every operator is immutable after construction. Concrete maps implement the
//! unchecked `*_into` kernels; callers go through [`LinearMap::apply`] and
//! [`LinearMap::adjoint_apply`], which verify dimensions first.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::vector::{dot, DenseVector};

/// Factor applied to power-iteration norm estimates before they enter a step
/// condition. Power iteration approaches the norm from below.
pub const NORM_SAFETY_FACTOR: f64 = 1.01;

pub trait LinearMap: fmt::Debug + Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;

    /// `out = K u` without dimension checks.
    fn apply_into(&self, u: &[f64], out: &mut [f64]);

    /// `out = K* w` without dimension checks.
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]);

    fn apply(&self, u: &[f64]) -> Result<DenseVector> {
        check_dim("apply", self.in_dim(), u.len())?;
        let mut out = vec![0.0; self.out_dim()];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    fn adjoint_apply(&self, w: &[f64]) -> Result<DenseVector> {
        check_dim("adjoint_apply", self.out_dim(), w.len())?;
        let mut out = vec![0.0; self.in_dim()];
        self.adjoint_into(w, &mut out);
        Ok(out)
    }
}

/// Shared handle to an operator.
pub type SharedMap = Arc<dyn LinearMap>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity {
    dim: usize,
}

impl Identity {
    pub fn new(dim: usize) -> Self {
        Identity { dim }
    }
}

impl LinearMap for Identity {
    fn in_dim(&self) -> usize {
        self.dim
    }
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        out.copy_from_slice(w);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagonal {
    entries: Vec<f64>,
}

impl Diagonal {
    pub fn new(entries: Vec<f64>) -> Self {
        Diagonal { entries }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

impl LinearMap for Diagonal {
    fn in_dim(&self) -> usize {
        self.entries.len()
    }
    fn out_dim(&self) -> usize {
        self.entries.len()
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for ((o, d), x) in out.iter_mut().zip(&self.entries).zip(u) {
            *o = d * x;
        }
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        self.apply_into(w, out)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: format!("matrix must be non-empty, got {rows}x{cols}"),
            });
        }
        check_dim("DenseMatrix::new", rows * cols, data.len())?;
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim("DenseMatrix::from_rows", cols, row.len())?;
            data.extend_from_slice(row);
        }
        DenseMatrix::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Parse comma-separated rows of decimal literals (no header).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        Error::Parse(format!("line {}: bad number `{}`", lineno + 1, tok.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                let first: &Vec<f64> = first;
                if first.len() != row.len() {
                    return Err(Error::Parse(format!(
                        "line {}: expected {} columns, found {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty matrix".into()));
        }
        DenseMatrix::from_rows(&rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> std::io::Result<Result<Self>> {
        let text = std::fs::read_to_string(path)?;
        Ok(DenseMatrix::from_csv_str(&text))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rows `range` as a new matrix.
    pub fn row_block(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.rows {
            return Err(Error::InvalidParameter {
                name: "range",
                reason: format!("{range:?} out of 0..{}", self.rows),
            });
        }
        let data = self.data[range.start * self.cols..range.end * self.cols].to_vec();
        DenseMatrix::new(range.end - range.start, self.cols, data)
    }

    /// `[I; self]`, the identity block stacked on top.
    pub fn with_identity_on_top(&self) -> Self {
        let n = self.cols;
        let mut out = DenseMatrix::zeros(n + self.rows, n);
        for j in 0..n {
            out.set(j, j, 1.0);
        }
        out.data[n * n..].copy_from_slice(&self.data);
        out
    }
}

impl LinearMap for DenseMatrix {
    fn in_dim(&self) -> usize {
        self.cols
    }
    fn out_dim(&self) -> usize {
        self.rows
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), u);
        }
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, wi) in w.iter().enumerate() {
            if *wi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * wi;
            }
        }
    }
}

/// Forward differences of a length-`n` signal, an `(n-1) x n` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstDifference1d {
    len: usize,
}

impl FirstDifference1d {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidParameter {
                name: "len",
                reason: "need at least two samples".into(),
            });
        }
        Ok(FirstDifference1d { len })
    }
}

impl LinearMap for FirstDifference1d {
    fn in_dim(&self) -> usize {
        self.len
    }
    fn out_dim(&self) -> usize {
        self.len - 1
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, pair) in out.iter_mut().zip(u.windows(2)) {
            *o = pair[1] - pair[0];
        }
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, wi) in w.iter().enumerate() {
            out[i] -= wi;
            out[i + 1] += wi;
        }
    }
}

/// Horizontal then vertical forward differences of a row-major `height x width`
/// image. The last column (resp. row) has a zero difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstDifference2d {
    height: usize,
    width: usize,
}

impl FirstDifference2d {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: format!("image must be non-empty, got {height}x{width}"),
            });
        }
        Ok(FirstDifference2d { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

impl LinearMap for FirstDifference2d {
    fn in_dim(&self) -> usize {
        self.height * self.width
    }
    fn out_dim(&self) -> usize {
        2 * self.height * self.width
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let (h, w) = (self.height, self.width);
        let (dx, dy) = out.split_at_mut(h * w);
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                dx[p] = if j + 1 < w { u[p + 1] - u[p] } else { 0.0 };
                dy[p] = if i + 1 < h { u[p + w] - u[p] } else { 0.0 };
            }
        }
    }
    fn adjoint_into(&self, g: &[f64], out: &mut [f64]) {
        let (h, w) = (self.height, self.width);
        let (dx, dy) = g.split_at(h * w);
        out.fill(0.0);
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                if j + 1 < w {
                    out[p] -= dx[p];
                    out[p + 1] += dx[p];
                }
                if i + 1 < h {
                    out[p] -= dy[p];
                    out[p + w] += dy[p];
                }
            }
        }
    }
}

/// Vertical concatenation of maps sharing a domain.
#[derive(Debug, Clone)]
pub struct StackedMap {
    blocks: Vec<SharedMap>,
    offsets: Vec<usize>,
}

impl StackedMap {
    pub fn new(blocks: Vec<SharedMap>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::InvalidParameter {
            name: "blocks",
            reason: "at least one block is required".into(),
        })?;
        let in_dim = first.in_dim();
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        offsets.push(0);
        for block in &blocks {
            check_dim("StackedMap::new", in_dim, block.in_dim())?;
            offsets.push(offsets.last().unwrap() + block.out_dim());
        }
        Ok(StackedMap { blocks, offsets })
    }

    pub fn blocks(&self) -> &[SharedMap] {
        &self.blocks
    }

    /// Output index range of block `i`.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

impl LinearMap for StackedMap {
    fn in_dim(&self) -> usize {
        self.blocks[0].in_dim()
    }
    fn out_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, block) in self.blocks.iter().enumerate() {
            block.apply_into(u, &mut out[self.block_range(i)]);
        }
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut tmp = vec![0.0; out.len()];
        for (i, block) in self.blocks.iter().enumerate() {
            block.adjoint_into(&w[self.block_range(i)], &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += t;
            }
        }
    }
}

/// Materialize an operator as an explicit matrix by probing unit vectors.
pub fn to_dense(op: &dyn LinearMap) -> DenseMatrix {
    let (rows, cols) = (op.out_dim(), op.in_dim());
    let mut m = DenseMatrix::zeros(rows, cols);
    let mut e = vec![0.0; cols];
    let mut col = vec![0.0; rows];
    for j in 0..cols {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        for (i, c) in col.iter().enumerate() {
            m.set(i, j, *c);
        }
        e[j] = 0.0;
    }
    m
}

/// Deterministic start vector for power iteration.
///
/// Entries are hashed from their index (splitmix64) into `[0.5, 1.5)`. A
/// constant seed lies in the kernel of every difference operator, and seeds
/// with a reflection symmetry miss the antisymmetric singular vectors.
fn power_seed(n: usize) -> DenseVector {
    let raw: Vec<f64> = (0..n as u64)
        .map(|j| {
            let mut z = j.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            0.5 + (z >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    let nrm = crate::vector::norm(&raw);
    raw.into_iter().map(|x| x / nrm).collect()
}

/// Estimate `||K||` by power iteration on `K* K`.
///
/// Stops when successive Rayleigh quotients agree to `tol` relative.
pub fn estimate_norm(op: &dyn LinearMap, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    let n = op.in_dim();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "in_dim",
            reason: "operator has an empty domain".into(),
        });
    }
    let mut u = power_seed(n);
    let mut ku = vec![0.0; op.out_dim()];
    let mut ktku = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut gap = f64::INFINITY;
    for _ in 0..max_iter {
        op.apply_into(&u, &mut ku);
        let rq = dot(&ku, &ku);
        op.adjoint_into(&ku, &mut ktku);
        let next_norm = crate::vector::norm(&ktku);
        if rq == 0.0 || next_norm == 0.0 {
            return Ok(0.0);
        }
        if prev.is_finite() {
            gap = (rq - prev).abs() / rq;
            if gap <= tol {
                return Ok(rq.sqrt());
            }
        }
        prev = rq;
        for (a, b) in u.iter_mut().zip(&ktku) {
            *a = b / next_norm;
        }
    }
    Err(Error::NormNotConverged {
        iterations: max_iter,
        estimate: prev.max(0.0).sqrt(),
        gap,
    })
}

/// Norm estimate inflated by [`NORM_SAFETY_FACTOR`], for step conditions.
pub fn safe_norm(op: &dyn LinearMap) -> Result<f64> {
    Ok(NORM_SAFETY_FACTOR * estimate_norm(op, 1e-8, 100_000)?)
}
