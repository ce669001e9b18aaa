//! Problem bundles `min_x Σᵢ Fᵢ(Kᵢx) + G(x) + H(x)` and the two application
//! models: L1/TV denoising and l1-regularized logistic regression.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linop::{DenseMatrix, FirstDifference2d, Identity, LinearMap, SharedMap};
use crate::prox::{
    BoxIndicator, GroupL2, L1Norm, LogisticLoss, PairLayout, Scaled, SharedProx,
    ShiftedL1, Zero,
};

/// One composite term `Fᵢ(Kᵢ x)`.
#[derive(Debug, Clone)]
pub struct Block {
    pub op: SharedMap,
    pub f: SharedProx,
}

impl Block {
    pub fn new(op: SharedMap, f: SharedProx) -> Result<Self> {
        check_dim("block function vs operator range", op.out_dim(), f.dim())?;
        Ok(Block { op, f })
    }
}

#[derive(Debug, Clone)]
pub struct CompositeProblem {
    primal_dim: usize,
    blocks: Vec<Block>,
    g: SharedProx,
    h: Option<SharedProx>,
}

impl CompositeProblem {
    /// `h` is an optional extra primal term handled by its own prox; the
    /// splitting variant replaces it by the consensus constraint and rejects it.
    pub fn new(
        primal_dim: usize,
        blocks: Vec<Block>,
        g: SharedProx,
        h: Option<SharedProx>,
    ) -> Result<Self> {
        if primal_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "primal_dim",
                reason: "must be positive".into(),
            });
        }
        if blocks.is_empty() {
            return Err(Error::InvalidParameter {
                name: "blocks",
                reason: "need at least one composite term".into(),
            });
        }
        for b in &blocks {
            check_dim("block operator domain", primal_dim, b.op.in_dim())?;
        }
        check_dim("G", primal_dim, g.dim())?;
        if let Some(h) = &h {
            check_dim("H", primal_dim, h.dim())?;
        }
        Ok(CompositeProblem {
            primal_dim,
            blocks,
            g,
            h,
        })
    }

    /// All-zero problem on `R^n` with a single identity block.
    pub fn zero(n: usize) -> Result<Self> {
        CompositeProblem::new(
            n,
            vec![Block::new(Arc::new(Identity::new(n)), Arc::new(Zero::new(n)))?],
            Arc::new(Zero::new(n)),
            None,
        )
    }

    pub fn primal_dim(&self) -> usize {
        self.primal_dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn g(&self) -> &SharedProx {
        &self.g
    }

    pub fn h(&self) -> Option<&SharedProx> {
        self.h.as_ref()
    }

    pub fn ops(&self) -> Vec<&dyn LinearMap> {
        self.blocks.iter().map(|b| b.op.as_ref()).collect()
    }

    /// `Σᵢ Fᵢ(Kᵢx) + G(x) + H(x)`; `+∞` when an indicator is violated.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        check_dim("objective", self.primal_dim, x.len())?;
        let missing = |what: &str| Error::Unsupported(format!("{what} cannot be evaluated"));
        let mut total = self.g.eval(x).ok_or_else(|| missing("G"))?;
        if let Some(h) = &self.h {
            total += h.eval(x).ok_or_else(|| missing("H"))?;
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let kx = b.op.apply(x)?;
            total += b
                .f
                .eval(&kx)
                .ok_or_else(|| missing(&format!("F_{}", i + 1)))?;
        }
        Ok(total)
    }
}

/// Pixel bounds of the box constraint in the denoising model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for PixelRange {
    fn default() -> Self {
        PixelRange { lo: 0.0, hi: 255.0 }
    }
}

/// `‖x − b‖₁ + δ_box(x) + λ_tv·TV(x)` with anisotropic (l1) or isotropic
/// (per-pixel l2) total variation.
///
/// Block 1 is `(I, δ_box)`, block 2 is `(∇, λ_tv·φ)` with forward differences.
pub fn build_l1tv(
    image: &[f64],
    height: usize,
    width: usize,
    lambda_tv: f64,
    isotropic: bool,
    range: PixelRange,
) -> Result<CompositeProblem> {
    if !(lambda_tv > 0.0 && lambda_tv.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lambda_tv",
            reason: format!("must be positive, got {lambda_tv}"),
        });
    }
    let grad = FirstDifference2d::new(height, width)?;
    let n = grad.in_dim();
    check_dim("image", n, image.len())?;
    let tv: SharedProx = if isotropic {
        Arc::new(GroupL2::new(n, 1.0, PairLayout::Halves))
    } else {
        Arc::new(L1Norm::new(2 * n, 1.0))
    };
    let blocks = vec![
        Block::new(
            Arc::new(Identity::new(n)),
            Arc::new(BoxIndicator::new(n, range.lo, range.hi)?),
        )?,
        Block::new(Arc::new(grad), Arc::new(Scaled::new(tv, lambda_tv)?))?,
    ];
    CompositeProblem::new(n, blocks, Arc::new(ShiftedL1::new(image.to_vec(), 1.0)), None)
}

/// Labelled observations for logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegDataset {
    features: DenseMatrix,
    labels: Vec<f64>,
}

impl LogRegDataset {
    pub fn new(features: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        check_dim("labels", features.rows(), labels.len())?;
        if let Some(i) = labels.iter().position(|y| *y != 1.0 && *y != -1.0) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: format!("observation {i} has label {}, expected -1 or +1", labels[i]),
            });
        }
        Ok(LogRegDataset { features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: "dataset is empty".into(),
            });
        }
        LogRegDataset::new(DenseMatrix::from_rows(rows)?, labels)
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Observation count.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature count.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Contiguous partition of `0..len` into `parts` blocks whose sizes differ by
/// at most one, larger blocks first.
pub fn batch_ranges(len: usize, parts: usize) -> Result<Vec<Range<usize>>> {
    if parts == 0 || parts > len {
        return Err(Error::InvalidParameter {
            name: "batches",
            reason: format!("need 1 <= batches <= {len}, got {parts}"),
        });
    }
    let (base, extra) = (len / parts, len % parts);
    let mut start = 0;
    Ok((0..parts)
        .map(|p| {
            let size = base + usize::from(p < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect())
}

/// `(1/m) Σᵢ log(1 + e^{−yᵢ aᵢᵀx}) + τ‖x‖₁`, split into `batches` row blocks.
pub fn build_logreg(data: &LogRegDataset, tau: f64, batches: usize) -> Result<CompositeProblem> {
    if data.is_empty() {
        return Err(Error::InvalidParameter {
            name: "data",
            reason: "dataset is empty".into(),
        });
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must be positive, got {tau}"),
        });
    }
    let weight = 1.0 / data.len() as f64;
    let blocks = batch_ranges(data.len(), batches)?
        .into_iter()
        .map(|r| {
            let rows = data.features.row_block(r.clone())?;
            let loss = LogisticLoss::new(data.labels[r].to_vec(), weight)?;
            Block::new(Arc::new(rows), Arc::new(loss))
        })
        .collect::<Result<Vec<_>>>()?;
    CompositeProblem::new(data.dim(), blocks, Arc::new(L1Norm::new(data.dim(), tau)), None)
}
