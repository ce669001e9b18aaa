//! Proximity operators.
//!
//! A [`ProxFunction`] evaluates `prox_{λf}(u) = argmin_y f(y) + ½‖u − y‖²_{λ⁻¹}`
//! for a scalar step `λ` or a positive diagonal step. Conjugates are never
//! hand-coded at the trait level: [`Conjugate`] derives them through the Moreau
//! identity `prox_{λf*}(u) = u − λ prox_{λ⁻¹f}(λ⁻¹u)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::vector::{norm_l1, DenseVector};

/// Step parameter of a proximity operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step<'a> {
    Scalar(f64),
    Diagonal(&'a [f64]),
}

impl<'a> Step<'a> {
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        match self {
            Step::Scalar(s) => *s,
            Step::Diagonal(d) => d[j],
        }
    }

    /// Restrict a diagonal step to `range`; scalars pass through.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Step<'a> {
        match *self {
            Step::Scalar(s) => Step::Scalar(s),
            Step::Diagonal(d) => Step::Diagonal(&d[range]),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Step::Scalar(s) => {
                if *s > 0.0 && s.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        name: "step",
                        reason: format!("must be positive and finite, got {s}"),
                    })
                }
            }
            Step::Diagonal(d) => {
                check_dim("diagonal step", dim, d.len())?;
                match d.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                    None => Ok(()),
                    Some(j) => Err(Error::InvalidParameter {
                        name: "step",
                        reason: format!("entry {j} must be positive and finite, got {}", d[j]),
                    }),
                }
            }
        }
    }

    /// The step multiplied by `c`, materialized when diagonal.
    pub fn scaled(&self, c: f64) -> OwnedStep {
        match self {
            Step::Scalar(s) => OwnedStep::Scalar(c * s),
            Step::Diagonal(d) => OwnedStep::Diagonal(d.iter().map(|s| c * s).collect()),
        }
    }

    fn reciprocal(&self) -> OwnedStep {
        match self {
            Step::Scalar(s) => OwnedStep::Scalar(1.0 / s),
            Step::Diagonal(d) => OwnedStep::Diagonal(d.iter().map(|s| 1.0 / s).collect()),
        }
    }
}

/// Owned counterpart of [`Step`], used where a derived step must outlive a call.
#[derive(Debug, Clone, PartialEq)]
pub enum OwnedStep {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl OwnedStep {
    pub fn as_step(&self) -> Step<'_> {
        match self {
            OwnedStep::Scalar(s) => Step::Scalar(*s),
            OwnedStep::Diagonal(d) => Step::Diagonal(d),
        }
    }
}

/// A closed proper convex function with a computable proximity operator.
pub trait ProxFunction: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Proximity operator without input validation.
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector>;

    /// Function value; `+∞` outside the domain, `None` when not available.
    fn eval(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn prox(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        check_dim("prox", self.dim(), u.len())?;
        step.validate(self.dim())?;
        self.prox_unchecked(step, u)
    }
}

pub type SharedProx = Arc<dyn ProxFunction>;

#[inline]
pub fn soft_threshold(u: f64, t: f64) -> f64 {
    u.signum() * (u.abs() - t).max(0.0)
}

/// Componentwise soft-thresholding `sign(u)·max(|u| − λ, 0)`.
pub fn prox_l1(step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
    L1Norm::new(u.len(), 1.0).prox(step, u)
}

/// `b + prox_l1(λ, u − b)`.
pub fn prox_l1_shifted(step: Step<'_>, u: &[f64], b: &[f64]) -> Result<DenseVector> {
    check_dim("prox_l1_shifted", u.len(), b.len())?;
    ShiftedL1::new(b.to_vec(), 1.0).prox(step, u)
}

/// Prox of the conjugate of `f`, through the Moreau identity.
pub fn prox_conjugate(f: &dyn ProxFunction, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
    check_dim("prox_conjugate", f.dim(), u.len())?;
    step.validate(f.dim())?;
    moreau(f, step, u)
}

fn moreau(f: &dyn ProxFunction, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
    let inv = step.reciprocal();
    let inv = inv.as_step();
    let scaled: Vec<f64> = u.iter().enumerate().map(|(j, x)| x * inv.at(j)).collect();
    let p = f.prox_unchecked(inv, &scaled)?;
    Ok(u.iter()
        .zip(&p)
        .enumerate()
        .map(|(j, (x, pj))| x - step.at(j) * pj)
        .collect())
}

/// Projection onto the consensus set: every block becomes the block mean.
pub fn project_consensus(blocks: &[DenseVector]) -> Result<Vec<DenseVector>> {
    let first = blocks.first().ok_or_else(|| Error::InvalidParameter {
        name: "blocks",
        reason: "consensus projection needs at least one block".into(),
    })?;
    let n = first.len();
    let mut mean = vec![0.0; n];
    for b in blocks {
        check_dim("project_consensus", n, b.len())?;
        for (m, x) in mean.iter_mut().zip(b) {
            *m += x;
        }
    }
    let inv = 1.0 / blocks.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(vec![mean; blocks.len()])
}

/// Outcome of the scalar logistic prox.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticProx {
    pub value: f64,
    /// False when Newton stalled and the bisection result was returned.
    pub newton_converged: bool,
}

const LOGISTIC_TOL: f64 = 1e-12;
const LOGISTIC_NEWTON_ITERS: usize = 100;

/// `1 / (1 + e^z)` without overflow.
#[inline]
fn logistic_tail(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// `log(1 + e^{-z})` without overflow.
#[inline]
pub fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Prox of `t ↦ c·log(1 + e^{−y t})` with step `lambda`.
///
/// Solves `t = u + λ c y / (1 + e^{y t})` by Newton's method inside the
/// bracket `[u − λc, u + λc]`, bisecting whenever a step leaves it.
pub fn prox_logistic(lambda: f64, u: f64, y: f64, c: f64) -> Result<LogisticProx> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be positive, got {lambda}"),
        });
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "c",
            reason: format!("must be positive, got {c}"),
        });
    }
    if y != 1.0 && y != -1.0 {
        return Err(Error::InvalidParameter {
            name: "y",
            reason: format!("label must be -1 or +1, got {y}"),
        });
    }
    Ok(logistic_solve(lambda * c, u, y))
}

fn logistic_solve(lc: f64, u: f64, y: f64) -> LogisticProx {
    let residual = |t: f64| t - u - lc * y * logistic_tail(y * t);
    let (mut lo, mut hi) = (u - lc, u + lc);
    let mut t = u;
    for _ in 0..LOGISTIC_NEWTON_ITERS {
        let r = residual(t);
        if r == 0.0 {
            return LogisticProx { value: t, newton_converged: true };
        }
        if r < 0.0 {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
        let s = logistic_tail(y * t);
        let slope = 1.0 + lc * s * (1.0 - s);
        let mut next = t - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= LOGISTIC_TOL || hi - lo <= LOGISTIC_TOL {
            return LogisticProx { value: next, newton_converged: true };
        }
        t = next;
    }
    while hi - lo > LOGISTIC_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    LogisticProx {
        value: 0.5 * (lo + hi),
        newton_converged: false,
    }
}

/// Group soft-thresholding of `p` pairs `(u[2g], u[2g+1])`.
pub fn prox_group_l2(lambda: f64, u: &[f64]) -> Result<DenseVector> {
    if u.len() % 2 != 0 {
        return Err(Error::InvalidParameter {
            name: "u",
            reason: format!("group-l2 needs an even length, got {}", u.len()),
        });
    }
    GroupL2::new(u.len() / 2, 1.0, PairLayout::Interleaved).prox(Step::Scalar(lambda), u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zero {
    dim: usize,
}

impl Zero {
    pub fn new(dim: usize) -> Self {
        Zero { dim }
    }
}

impl ProxFunction for Zero {
    fn dim(&self) -> usize {
        self.dim
    }
    fn prox_unchecked(&self, _step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        Ok(u.to_vec())
    }
    fn eval(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

/// `weight · ‖x‖₁`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm {
    dim: usize,
    weight: f64,
}

impl L1Norm {
    pub fn new(dim: usize, weight: f64) -> Self {
        L1Norm { dim, weight }
    }
}

impl ProxFunction for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        Ok(u.iter()
            .enumerate()
            .map(|(j, x)| soft_threshold(*x, self.weight * step.at(j)))
            .collect())
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        Some(self.weight * norm_l1(x))
    }
}

/// `weight · ‖x − center‖₁`
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedL1 {
    center: Vec<f64>,
    weight: f64,
}

impl ShiftedL1 {
    pub fn new(center: Vec<f64>, weight: f64) -> Self {
        ShiftedL1 { center, weight }
    }
}

impl ProxFunction for ShiftedL1 {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        Ok(u.iter()
            .zip(&self.center)
            .enumerate()
            .map(|(j, (x, b))| b + soft_threshold(x - b, self.weight * step.at(j)))
            .collect())
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        Some(
            self.weight
                * x.iter()
                    .zip(&self.center)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>(),
        )
    }
}

/// `(weight / 2) · ‖x − center‖²`
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredDistance {
    center: Vec<f64>,
    weight: f64,
}

impl SquaredDistance {
    pub fn new(center: Vec<f64>, weight: f64) -> Self {
        SquaredDistance { center, weight }
    }
}

impl ProxFunction for SquaredDistance {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        Ok(u.iter()
            .zip(&self.center)
            .enumerate()
            .map(|(j, (x, b))| {
                let lw = self.weight * step.at(j);
                (x + lw * b) / (1.0 + lw)
            })
            .collect())
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        Some(
            0.5 * self.weight
                * x.iter()
                    .zip(&self.center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
        )
    }
}

/// Indicator of the box `[lo, hi]^dim`.
///
/// Evaluation treats points within `feasibility_tol` of the box as feasible,
/// so iterates that converge onto the boundary from outside report a finite
/// objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxIndicator {
    dim: usize,
    lo: f64,
    hi: f64,
    feasibility_tol: f64,
}

impl BoxIndicator {
    pub fn new(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidParameter {
                name: "box",
                reason: format!("lower bound {lo} exceeds upper bound {hi}"),
            });
        }
        Ok(BoxIndicator {
            dim,
            lo,
            hi,
            feasibility_tol: 1e-6 * (hi - lo).max(1.0),
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

impl ProxFunction for BoxIndicator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn prox_unchecked(&self, _step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        Ok(u.iter().map(|x| x.clamp(self.lo, self.hi)).collect())
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        let t = self.feasibility_tol;
        let inside = x.iter().all(|v| *v >= self.lo - t && *v <= self.hi + t);
        Some(if inside { 0.0 } else { f64::INFINITY })
    }
}

/// Indicator of `{‖x‖∞ ≤ radius}`, the conjugate of `radius · ‖·‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LInfBall {
    dim: usize,
    radius: f64,
}

impl LInfBall {
    pub fn new(dim: usize, radius: f64) -> Self {
        LInfBall { dim, radius }
    }
}

impl ProxFunction for LInfBall {
    fn dim(&self) -> usize {
        self.dim
    }
    fn prox_unchecked(&self, _step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        Ok(u.iter().map(|x| x.clamp(-self.radius, self.radius)).collect())
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        let inside = x.iter().all(|v| v.abs() <= self.radius);
        Some(if inside { 0.0 } else { f64::INFINITY })
    }
}

/// How the two coordinates of each group sit in the vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLayout {
    /// `(u[2g], u[2g+1])`
    Interleaved,
    /// `(u[g], u[p+g])`, matching the horizontal/vertical split of image gradients.
    Halves,
}

/// `weight · Σ_g ‖(u_g¹, u_g²)‖₂`, the isotropic total-variation atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupL2 {
    pairs: usize,
    weight: f64,
    layout: PairLayout,
}

impl GroupL2 {
    pub fn new(pairs: usize, weight: f64, layout: PairLayout) -> Self {
        GroupL2 { pairs, weight, layout }
    }

    fn index(&self, g: usize) -> (usize, usize) {
        match self.layout {
            PairLayout::Interleaved => (2 * g, 2 * g + 1),
            PairLayout::Halves => (g, self.pairs + g),
        }
    }
}

impl ProxFunction for GroupL2 {
    fn dim(&self) -> usize {
        2 * self.pairs
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        let mut out = vec![0.0; u.len()];
        for g in 0..self.pairs {
            let (a, b) = self.index(g);
            let lam = step.at(a);
            if step.at(b) != lam {
                return Err(Error::NonConstantBlockStep { block: g, step: b });
            }
            let len = u[a].hypot(u[b]);
            if len == 0.0 {
                continue;
            }
            let shrink = (1.0 - self.weight * lam / len).max(0.0);
            out[a] = shrink * u[a];
            out[b] = shrink * u[b];
        }
        Ok(out)
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        Some(
            self.weight
                * (0..self.pairs)
                    .map(|g| {
                        let (a, b) = self.index(g);
                        x[a].hypot(x[b])
                    })
                    .sum::<f64>(),
        )
    }
}

/// `Σ_j weight · log(1 + exp(−labels_j · t_j))`
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLoss {
    labels: Vec<f64>,
    weight: f64,
}

impl LogisticLoss {
    pub fn new(labels: Vec<f64>, weight: f64) -> Result<Self> {
        if let Some(j) = labels.iter().position(|y| *y != 1.0 && *y != -1.0) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: format!("label {j} is {}, expected -1 or +1", labels[j]),
            });
        }
        if !(weight > 0.0) {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: format!("must be positive, got {weight}"),
            });
        }
        Ok(LogisticLoss { labels, weight })
    }
}

impl ProxFunction for LogisticLoss {
    fn dim(&self) -> usize {
        self.labels.len()
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        Ok(u.iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(j, (x, y))| logistic_solve(step.at(j) * self.weight, *x, *y).value)
            .collect())
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        Some(
            self.weight
                * x.iter()
                    .zip(&self.labels)
                    .map(|(t, y)| log1p_exp_neg(y * t))
                    .sum::<f64>(),
        )
    }
}

/// `factor · f`
#[derive(Debug, Clone)]
pub struct Scaled {
    inner: SharedProx,
    factor: f64,
}

impl Scaled {
    pub fn new(inner: SharedProx, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "factor",
                reason: format!("must be positive, got {factor}"),
            });
        }
        Ok(Scaled { inner, factor })
    }
}

impl ProxFunction for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        let s = step.scaled(self.factor);
        self.inner.prox_unchecked(s.as_step(), u)
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        self.inner.eval(x).map(|v| self.factor * v)
    }
}

/// The Legendre–Fenchel conjugate `f*`, with its prox from the Moreau identity.
#[derive(Debug, Clone)]
pub struct Conjugate {
    inner: SharedProx,
}

impl Conjugate {
    pub fn new(inner: SharedProx) -> Self {
        Conjugate { inner }
    }
}

impl ProxFunction for Conjugate {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        moreau(self.inner.as_ref(), step, u)
    }
}

/// `f(x) = Σ_i f_i(x_{R_i})` over consecutive coordinate ranges.
#[derive(Debug, Clone)]
pub struct SeparableSum {
    parts: Vec<SharedProx>,
    offsets: Vec<usize>,
}

impl SeparableSum {
    pub fn new(parts: Vec<SharedProx>) -> Self {
        let mut offsets = vec![0];
        for p in &parts {
            offsets.push(offsets.last().unwrap() + p.dim());
        }
        SeparableSum { parts, offsets }
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

impl ProxFunction for SeparableSum {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }
    fn prox_unchecked(&self, step: Step<'_>, u: &[f64]) -> Result<DenseVector> {
        let mut out = Vec::with_capacity(u.len());
        for (i, part) in self.parts.iter().enumerate() {
            let r = self.range(i);
            out.extend(part.prox_unchecked(step.slice(r.clone()), &u[r])?);
        }
        Ok(out)
    }
    fn eval(&self, x: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for (i, part) in self.parts.iter().enumerate() {
            total += part.eval(&x[self.range(i)])?;
        }
        Some(total)
    }
}
