//! Step metrics: scalar `(σ, γ, τ)` triples and diagonal `(Σ, Υ, T̃)` maps.
//!
//! A metric defines the block operator
//!
//! ```text
//!     P = | Σ⁻¹  −I   −K* |
//!         | −I   Υ⁻¹   0  |
//!         | −K    0   T̃⁻¹ |
//! ```
//!
//! under which the iteration is a relaxed resolvent step. Solvers only accept
//! a [`ValidatedMetric`], which can only be obtained from a check that makes
//! `P` positive definite.

use crate::error::{check_dim, Error, Result};
use crate::linop::{estimate_norm, DenseMatrix, LinearMap, NORM_SAFETY_FACTOR};
use crate::prox::Step;
use crate::solver::IterTriple;
use crate::vector::dot;

/// Shrink applied to Lemma-style diagonal weights to turn `≤ 1` into `< 1`
/// after the power-iteration safety inflation.
pub const DIAGONAL_SHRINK: f64 = 0.02;

/// Power-iteration tolerance used when validating diagonal metrics.
pub const DIAGONAL_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum StepMetric {
    Scalar { sigma: f64, gamma: f64, tau: f64 },
    /// `sigma` and `gamma` live on the primal space, `tau` on the (stacked) dual space.
    Diagonal {
        sigma: Vec<f64>,
        gamma: Vec<f64>,
        tau: Vec<f64>,
    },
}

impl StepMetric {
    pub fn scalar(sigma: f64, gamma: f64, tau: f64) -> Self {
        StepMetric::Scalar { sigma, gamma, tau }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, StepMetric::Diagonal { .. })
    }

    pub fn sigma(&self) -> Step<'_> {
        match self {
            StepMetric::Scalar { sigma, .. } => Step::Scalar(*sigma),
            StepMetric::Diagonal { sigma, .. } => Step::Diagonal(sigma),
        }
    }

    pub fn gamma(&self) -> Step<'_> {
        match self {
            StepMetric::Scalar { gamma, .. } => Step::Scalar(*gamma),
            StepMetric::Diagonal { gamma, .. } => Step::Diagonal(gamma),
        }
    }

    pub fn tau(&self) -> Step<'_> {
        match self {
            StepMetric::Scalar { tau, .. } => Step::Scalar(*tau),
            StepMetric::Diagonal { tau, .. } => Step::Diagonal(tau),
        }
    }

    fn all_positive(&self) -> bool {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match self {
            StepMetric::Scalar { sigma, gamma, tau } => ok(*sigma) && ok(*gamma) && ok(*tau),
            StepMetric::Diagonal { sigma, gamma, tau } => {
                sigma.iter().chain(gamma).chain(tau).all(|v| ok(*v))
            }
        }
    }

    fn check_dims(&self, primal_dim: usize, dual_dim: usize) -> Result<()> {
        if let StepMetric::Diagonal { sigma, gamma, tau } = self {
            check_dim("metric sigma", primal_dim, sigma.len())?;
            check_dim("metric gamma", primal_dim, gamma.len())?;
            check_dim("metric tau", dual_dim, tau.len())?;
        }
        Ok(())
    }
}

/// The two terms of the diagonal definiteness condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalTerms {
    /// `‖Σ^½ Υ^½‖²`
    pub primal: f64,
    /// `‖Σ^½ K* T̃^½‖²`
    pub coupling: f64,
    /// `‖Σ^½ [Υ^½ | K* T̃^½]‖²`, the quantity that must stay below one.
    pub combined: f64,
}

impl DiagonalTerms {
    pub fn sum(&self) -> f64 {
        self.primal + self.coupling
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub accepted: bool,
    /// Left-hand side of the `< 1` condition.
    pub value: f64,
    /// `1 − value`
    pub margin: f64,
    pub diagonal: Option<DiagonalTerms>,
    pub reason: Option<String>,
}

impl ValidationReport {
    fn from_value(value: f64, diagonal: Option<DiagonalTerms>) -> Self {
        let accepted = value < 1.0;
        ValidationReport {
            accepted,
            value,
            margin: 1.0 - value,
            diagonal,
            reason: (!accepted).then(|| format!("definiteness condition {value} >= 1")),
        }
    }

    fn rejected(reason: String) -> Self {
        ValidationReport {
            accepted: false,
            value: f64::NAN,
            margin: f64::NAN,
            diagonal: None,
            reason: Some(reason),
        }
    }
}

/// Check `σγ + στ‖K‖² < 1` with all steps positive.
pub fn validate_scalar(sigma: f64, gamma: f64, tau: f64, norm_k: f64) -> ValidationReport {
    validate_split(sigma, gamma, tau, &[norm_k])
}

/// Check `σγ + στ Σᵢ‖Kᵢ‖² < 1` with all steps positive.
pub fn validate_split(sigma: f64, gamma: f64, tau: f64, norms: &[f64]) -> ValidationReport {
    for (name, v) in [("sigma", sigma), ("gamma", gamma), ("tau", tau)] {
        if !(v > 0.0 && v.is_finite()) {
            return ValidationReport::rejected(format!("{name} must be positive, got {v}"));
        }
    }
    let norm_sq: f64 = norms.iter().map(|n| n * n).sum();
    ValidationReport::from_value(sigma * gamma + sigma * tau * norm_sq, None)
}

/// Largest `s` with `σ = γ = τ = s` satisfying `s² (1 + Σ‖Kᵢ‖²) ≤ target`.
pub fn equal_step_bound(norms: &[f64], target: f64) -> f64 {
    let norm_sq: f64 = norms.iter().map(|n| n * n).sum();
    (target / (1.0 + norm_sq)).sqrt()
}

/// Unshrunk diagonal weights `σⱼ = 1/Σᵢ|Dᵢⱼ|^{2−s}` and `φᵢ = 1/Σⱼ|Dᵢⱼ|^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalWeights {
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
}

/// `|a|^p` with the convention `|0|^p = 0` for every `p`, including `p = 0`.
fn abs_pow(a: f64, p: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.abs().powf(p)
    }
}

/// Treatment of identically zero rows of `d_hat`.
///
/// A zero row of `K` never couples its dual coordinate to `x`, so any positive
/// step is admissible there; `UnitStep` assigns `φᵢ = 1` before shrinking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroRows {
    #[default]
    Reject,
    UnitStep,
}

/// Row and column power sums of `d_hat` (rows: identity block then `K`).
pub fn diagonal_weights(d_hat: &DenseMatrix, s: f64) -> Result<DiagonalWeights> {
    diagonal_weights_with(d_hat, s, ZeroRows::Reject)
}

/// [`diagonal_weights`] with an explicit zero-row policy.
pub fn diagonal_weights_with(d_hat: &DenseMatrix, s: f64, zero_rows: ZeroRows) -> Result<DiagonalWeights> {
    if !(0.0..=2.0).contains(&s) {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: format!("exponent must lie in [0, 2], got {s}"),
        });
    }
    let (rows, cols) = (d_hat.rows(), d_hat.cols());
    let mut col_sums = vec![0.0; cols];
    let mut phi = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut row_sum = 0.0;
        for (j, a) in d_hat.row(i).iter().enumerate() {
            col_sums[j] += abs_pow(*a, 2.0 - s);
            row_sum += abs_pow(*a, s);
        }
        if row_sum == 0.0 {
            match zero_rows {
                ZeroRows::Reject => return Err(Error::ZeroLine { kind: "row", index: i }),
                ZeroRows::UnitStep => phi.push(1.0),
            }
        } else {
            phi.push(1.0 / row_sum);
        }
    }
    let sigma = col_sums
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if *c == 0.0 {
                Err(Error::ZeroLine { kind: "column", index: j })
            } else {
                Ok(1.0 / c)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DiagonalWeights { sigma, phi })
}

/// Diagonal metric from the power sums of `d_hat = [I; K]`, shrunk by
/// `1 − DIAGONAL_SHRINK`.
pub fn build_diagonal(d_hat: &DenseMatrix, s: f64) -> Result<StepMetric> {
    build_diagonal_with(d_hat, s, ZeroRows::Reject)
}

/// [`build_diagonal`] with an explicit zero-row policy.
pub fn build_diagonal_with(d_hat: &DenseMatrix, s: f64, zero_rows: ZeroRows) -> Result<StepMetric> {
    let n = d_hat.cols();
    if d_hat.rows() <= n {
        return Err(Error::InvalidParameter {
            name: "d_hat",
            reason: format!(
                "expected (n + m) x n with m >= 1, got {}x{}",
                d_hat.rows(),
                n
            ),
        });
    }
    let w = diagonal_weights_with(d_hat, s, zero_rows)?;
    let c = 1.0 - DIAGONAL_SHRINK;
    let shrink = |v: Vec<f64>| v.into_iter().map(|x| c * x).collect::<Vec<f64>>();
    let mut phi = w.phi;
    let tau = phi.split_off(n);
    Ok(StepMetric::Diagonal {
        sigma: shrink(w.sigma),
        gamma: shrink(phi),
        tau: shrink(tau),
    })
}

/// [`build_diagonal`] for an operator, materialized and stacked under `I`.
pub fn build_diagonal_for(op: &dyn LinearMap, s: f64) -> Result<StepMetric> {
    build_diagonal_for_with(op, s, ZeroRows::Reject)
}

pub fn build_diagonal_for_with(op: &dyn LinearMap, s: f64, zero_rows: ZeroRows) -> Result<StepMetric> {
    build_diagonal_with(&crate::linop::to_dense(op).with_identity_on_top(), s, zero_rows)
}

fn inflated_norm_sq(m: &DenseMatrix) -> Result<f64> {
    let n = estimate_norm(m, DIAGONAL_NORM_TOL, 200_000)? * NORM_SAFETY_FACTOR;
    Ok(n * n)
}

/// Definiteness check for a diagonal metric against an explicit `K`.
///
/// Reports both terms and their sum; acceptance is decided on the joint
/// norm `‖Σ^½ [Υ^½ | K* T̃^½]‖²`, which never exceeds the sum.
pub fn validate_diagonal(metric: &StepMetric, k: &DenseMatrix) -> Result<ValidationReport> {
    let (sigma, gamma, tau) = match metric {
        StepMetric::Diagonal { sigma, gamma, tau } => (sigma, gamma, tau),
        StepMetric::Scalar { .. } => {
            return Err(Error::InvalidParameter {
                name: "metric",
                reason: "validate_diagonal needs a diagonal metric".into(),
            })
        }
    };
    let (n, m) = (k.cols(), k.rows());
    metric.check_dims(n, m)?;
    if !metric.all_positive() {
        return Ok(ValidationReport::rejected(
            "all diagonal entries must be positive".into(),
        ));
    }
    let primal = sigma
        .iter()
        .zip(gamma)
        .map(|(s, g)| s * g)
        .fold(0.0, f64::max);

    // coupling = Σ^½ K* T̃^½, an n x m matrix
    let mut coupling = DenseMatrix::zeros(n, m);
    let mut joint = DenseMatrix::zeros(n, n + m);
    for j in 0..n {
        let sj = sigma[j].sqrt();
        joint.set(j, j, (sigma[j] * gamma[j]).sqrt());
        for i in 0..m {
            let v = sj * k.get(i, j) * tau[i].sqrt();
            coupling.set(j, i, v);
            joint.set(j, n + i, v);
        }
    }
    let terms = DiagonalTerms {
        primal,
        coupling: inflated_norm_sq(&coupling)?,
        combined: inflated_norm_sq(&joint)?,
    };
    Ok(ValidationReport::from_value(terms.combined, Some(terms)))
}

/// A metric whose operator `P` has been checked positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedMetric {
    metric: StepMetric,
    primal_dim: usize,
    dual_dims: Vec<usize>,
    report: ValidationReport,
}

impl ValidatedMetric {
    pub fn metric(&self) -> &StepMetric {
        &self.metric
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn primal_dim(&self) -> usize {
        self.primal_dim
    }

    pub fn dual_dims(&self) -> &[usize] {
        &self.dual_dims
    }

    /// `T̃` restricted to dual block `i`.
    pub fn tau_block(&self, i: usize) -> Step<'_> {
        let start: usize = self.dual_dims[..i].iter().sum();
        self.metric.tau().slice(start..start + self.dual_dims[i])
    }

    /// Validate `metric` for the dual blocks `ops` (all sharing a domain).
    ///
    /// Scalar metrics use inflated power-iteration norms in
    /// `σγ + στ Σᵢ‖Kᵢ‖² < 1`; diagonal metrics use [`validate_diagonal`] on
    /// the stacked operator.
    pub fn new(metric: StepMetric, ops: &[&dyn LinearMap]) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::InvalidParameter {
            name: "ops",
            reason: "need at least one dual block".into(),
        })?;
        let primal_dim = first.in_dim();
        for op in ops {
            check_dim("metric operator domain", primal_dim, op.in_dim())?;
        }
        let dual_dims: Vec<usize> = ops.iter().map(|op| op.out_dim()).collect();
        let report = match &metric {
            StepMetric::Scalar { sigma, gamma, tau } => {
                let norms = ops
                    .iter()
                    .map(|op| crate::linop::safe_norm(*op))
                    .collect::<Result<Vec<f64>>>()?;
                validate_split(*sigma, *gamma, *tau, &norms)
            }
            StepMetric::Diagonal { .. } => {
                let dual: usize = dual_dims.iter().sum();
                metric.check_dims(primal_dim, dual)?;
                let mut stacked = DenseMatrix::zeros(dual, primal_dim);
                let mut row = 0;
                for op in ops {
                    let block = crate::linop::to_dense(*op);
                    for i in 0..block.rows() {
                        for j in 0..primal_dim {
                            stacked.set(row + i, j, block.get(i, j));
                        }
                    }
                    row += block.rows();
                }
                validate_diagonal(&metric, &stacked)?
            }
        };
        if !report.accepted {
            return Err(Error::MetricRejected(
                report.reason.clone().unwrap_or_else(|| "rejected".into()),
            ));
        }
        Ok(ValidatedMetric {
            metric,
            primal_dim,
            dual_dims,
            report,
        })
    }
}

/// `⟨z, P z'⟩` for `m = ops.len()` dual blocks.
///
/// With several blocks the primal pair is replicated once per block (the
/// consensus lifting), so the `x`/`y` part carries a factor `m`.
pub fn metric_inner(
    metric: &ValidatedMetric,
    ops: &[&dyn LinearMap],
    z: &IterTriple,
    w: &IterTriple,
) -> Result<f64> {
    check_dim("metric blocks", metric.dual_dims.len(), ops.len())?;
    for t in [z, w] {
        check_dim("metric x", metric.primal_dim, t.x.len())?;
        check_dim("metric y", metric.primal_dim, t.y.len())?;
        check_dim("metric v blocks", ops.len(), t.v.len())?;
        for (vi, d) in t.v.iter().zip(&metric.dual_dims) {
            check_dim("metric v", *d, vi.len())?;
        }
    }
    let m = metric.metric();
    let (sigma, gamma) = (m.sigma(), m.gamma());
    let mut primal = 0.0;
    for j in 0..z.x.len() {
        primal += z.x[j] * w.x[j] / sigma.at(j) - z.x[j] * w.y[j] - z.y[j] * w.x[j]
            + z.y[j] * w.y[j] / gamma.at(j);
    }
    let mut total = ops.len() as f64 * primal;
    for (i, op) in ops.iter().enumerate() {
        let tau = metric.tau_block(i);
        let kz = op.apply(&z.x)?;
        let kw = op.apply(&w.x)?;
        total -= dot(&kz, &w.v[i]) + dot(&z.v[i], &kw);
        total += z.v[i]
            .iter()
            .zip(&w.v[i])
            .enumerate()
            .map(|(j, (a, b))| a * b / tau.at(j))
            .sum::<f64>();
    }
    Ok(total)
}

/// `⟨z, D z⟩` for the block diagonal `D = diag(Σ⁻¹, Υ⁻¹, T̃⁻¹)` of `P`, with
/// the same multi-block weighting as [`metric_inner`].
pub fn metric_diagonal_energy(metric: &ValidatedMetric, z: &IterTriple) -> f64 {
    let m = metric.metric();
    let (sigma, gamma) = (m.sigma(), m.gamma());
    let primal: f64 = (0..z.x.len())
        .map(|j| z.x[j] * z.x[j] / sigma.at(j) + z.y[j] * z.y[j] / gamma.at(j))
        .sum();
    let dual: f64 = z
        .v
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let tau = metric.tau_block(i);
            v.iter().enumerate().map(|(j, a)| a * a / tau.at(j)).sum::<f64>()
        })
        .sum();
    z.v.len() as f64 * primal + dual
}

/// `‖z‖_P = √⟨z, P z⟩`.
pub fn metric_norm(metric: &ValidatedMetric, ops: &[&dyn LinearMap], z: &IterTriple) -> Result<f64> {
    Ok(metric_inner(metric, ops, z, z)?.max(0.0).sqrt())
}
