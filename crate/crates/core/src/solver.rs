//! Inertial primal-dual fixed point iterations.
//!
//! Two update boxes share one state layout:
//!
//! * [`ipdfp_step`] for `min F(Kx) + Ḡ(x) + H(x)`;
//! * [`sipdfp_step`] for `min Σᵢ Fᵢ(Kᵢx) + G(x)`, the consensus-split form in
//!   which `H` is the indicator of the consensus set and the primal update
//!   reduces to an average over blocks.
//!
//! Both accept scalar or diagonal step metrics; the scalar case is the
//! diagonal case with constant entries, evaluated through the same
//! arithmetic. [`run`] drives either box with the two-value inertial schedule
//! (`α₁ = 0`, then a constant `α`) and a constant relaxation `ρ`.

use std::sync::Arc;
use std::time::Instant;

use crate::error::{check_dim, Error, Result};
use crate::linop::{LinearMap, StackedMap};
use crate::precond::{metric_diagonal_energy, metric_inner, metric_norm, ValidatedMetric};
use crate::problems::CompositeProblem;
use crate::prox::{Conjugate, ProxFunction, Scaled, SeparableSum, SharedProx, Step, Zero};
use crate::vector::{extrapolate, norm, relax, sub, DenseVector};

/// Primal point `x`, dual `y` for the `G` term and dual blocks `v` for the
/// composite terms.
#[derive(Debug, Clone, PartialEq)]
pub struct IterTriple {
    pub x: DenseVector,
    pub y: DenseVector,
    pub v: Vec<DenseVector>,
}

impl IterTriple {
    pub fn new(x: DenseVector, y: DenseVector, v: Vec<DenseVector>) -> Self {
        IterTriple { x, y, v }
    }

    pub fn zeros(primal_dim: usize, dual_dims: &[usize]) -> Self {
        IterTriple {
            x: vec![0.0; primal_dim],
            y: vec![0.0; primal_dim],
            v: dual_dims.iter().map(|d| vec![0.0; *d]).collect(),
        }
    }

    pub fn difference(&self, other: &IterTriple) -> IterTriple {
        IterTriple {
            x: sub(&self.x, &other.x),
            y: sub(&self.y, &other.y),
            v: self.v.iter().zip(&other.v).map(|(a, b)| sub(a, b)).collect(),
        }
    }

    fn check_shape(&self, primal_dim: usize, dual_dims: &[usize]) -> Result<()> {
        check_dim("state x", primal_dim, self.x.len())?;
        check_dim("state y", primal_dim, self.y.len())?;
        if self.v.len() != dual_dims.len() {
            return Err(Error::BlockCount {
                expected: dual_dims.len(),
                actual: self.v.len(),
            });
        }
        for (v, d) in self.v.iter().zip(dual_dims) {
            check_dim("state v", *d, v.len())?;
        }
        Ok(())
    }

    fn extrapolate(&self, lag: &IterTriple, alpha: f64) -> IterTriple {
        IterTriple {
            x: extrapolate(&self.x, &lag.x, alpha),
            y: extrapolate(&self.y, &lag.y, alpha),
            v: self
                .v
                .iter()
                .zip(&lag.v)
                .map(|(a, b)| extrapolate(a, b, alpha))
                .collect(),
        }
    }

    fn relax_toward(&self, tilde: &IterTriple, rho: f64) -> IterTriple {
        IterTriple {
            x: relax(rho, &tilde.x, &self.x),
            y: relax(rho, &tilde.y, &self.y),
            v: tilde
                .v
                .iter()
                .zip(&self.v)
                .map(|(a, b)| relax(rho, a, b))
                .collect(),
        }
    }
}

/// How the primal point enters the two dual updates.
///
/// `AsWritten` uses `ỹ = prox(η + Υξ)` and `ṽ = prox(ν + T̃K(2x̃ − η))`.
/// `Condat` uses the reflected primal point in both, `ỹ = prox(η + Υ(2x̃ − ξ))`
/// and `ṽ = prox(ν + T̃K(2x̃ − ξ))`, which makes the step an exact resolvent
/// step in the metric `P`. Both rules share the same fixed points in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualUpdateRule {
    AsWritten,
    #[default]
    Condat,
}

impl std::str::FromStr for DualUpdateRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_written" | "as-written" => Ok(DualUpdateRule::AsWritten),
            "condat" => Ok(DualUpdateRule::Condat),
            other => Err(Error::InvalidParameter {
                name: "rule",
                reason: format!("expected `as_written` or `condat`, got `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for DualUpdateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DualUpdateRule::AsWritten => "as_written",
            DualUpdateRule::Condat => "condat",
        })
    }
}

/// `(α²(1+α) + αθ) / (1 − α²)`, the strict lower bound on `δ̂`.
pub fn delta_hat_lower_bound(alpha: f64, theta: f64) -> f64 {
    (alpha * alpha * (1.0 + alpha) + alpha * theta) / (1.0 - alpha * alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must lie in [0, 1), got {alpha}"),
        })
    }
}

/// Strict upper bound on a constant relaxation parameter `ρ`:
/// `(δ̂ − α[α(1+α) + αδ̂ + θ]) / (δ̂[1 + α(1+α) + αδ̂ + θ])`.
pub fn rho_upper_bound(alpha: f64, theta: f64, delta_hat: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("must be positive, got {theta}"),
        });
    }
    let min = delta_hat_lower_bound(alpha, theta);
    if !(delta_hat > min && delta_hat > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta_hat",
            reason: format!("must exceed {min} (and 0), got {delta_hat}"),
        });
    }
    let bracket = alpha * (1.0 + alpha) + alpha * delta_hat + theta;
    Ok((delta_hat - alpha * bracket) / (delta_hat * (1.0 + bracket)))
}

pub const DEFAULT_THETA: f64 = 0.01;

/// Inertia cap `α` with the constant relaxation `ρ` it admits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialSchedule {
    alpha: f64,
    theta: f64,
    delta_hat: f64,
    rho: f64,
}

impl InertialSchedule {
    pub fn new(alpha: f64, theta: f64, delta_hat: f64, rho: f64) -> Result<Self> {
        let bound = rho_upper_bound(alpha, theta, delta_hat)?;
        if !(rho > 0.0 && rho < bound) {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("must lie in (0, {bound}), got {rho}"),
            });
        }
        Ok(InertialSchedule {
            alpha,
            theta,
            delta_hat,
            rho,
        })
    }

    /// `α = 0`, `ρ = 1`: the plain (non-inertial, unrelaxed) iteration.
    ///
    /// Outside the relaxation bound above, but a valid resolvent iteration.
    pub fn plain() -> Self {
        InertialSchedule {
            alpha: 0.0,
            theta: DEFAULT_THETA,
            delta_hat: 1.0,
            rho: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn delta_hat(&self) -> f64 {
        self.delta_hat
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `α_k` for the 0-based iteration `k`: zero on the first step.
    pub fn alpha_at(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.alpha
        }
    }
}

/// `δ̂` at twice its lower bound (at least `1e-6`) and `ρ` at 99% of its bound.
pub fn suggest_schedule(alpha: f64, theta: f64) -> Result<InertialSchedule> {
    check_alpha(alpha)?;
    let delta_hat = (2.0 * delta_hat_lower_bound(alpha, theta)).max(1e-6);
    let rho = 0.99 * rho_upper_bound(alpha, theta, delta_hat)?;
    InertialSchedule::new(alpha, theta, delta_hat, rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop once `‖z^{k+1} − z^k‖_P / (1 + ‖z⁰‖_P) ≤ tol`.
    pub tol: f64,
    pub rule: DualUpdateRule,
    pub record_every: usize,
    /// Record wall-clock time in the trace; disable for reproducible traces.
    pub timing: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 10_000,
            tol: 1e-10,
            rule: DualUpdateRule::default(),
            record_every: 1,
            timing: true,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                reason: "must be at least 1".into(),
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("must be positive, got {}", self.tol),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub iter: usize,
    pub objective: f64,
    pub km_residual_p: f64,
    pub primal_change: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The residual grew past `1e6` times its first value.
    Diverged,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    /// Single stacked dual block, optional `H`.
    Ipdfp,
    /// One dual block per composite term, consensus-split primal.
    #[default]
    Sipdfp,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipdfp" => Ok(Algorithm::Ipdfp),
            "sipdfp" => Ok(Algorithm::Sipdfp),
            other => Err(Error::InvalidParameter {
                name: "algorithm",
                reason: format!("expected `ipdfp` or `sipdfp`, got `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ipdfp => "ipdfp",
            Algorithm::Sipdfp => "sipdfp",
        })
    }
}

/// Relaxed next state and the un-relaxed resolvent point `z̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub next: IterTriple,
    pub tilde: IterTriple,
}

/// `ν + T̃ K(2x̃ − w)` followed by the dual prox.
fn dual_update(
    op: &dyn LinearMap,
    f_conj: &dyn ProxFunction,
    tau: Step<'_>,
    nu: &[f64],
    x_tilde: &[f64],
    w: &[f64],
) -> Result<DenseVector> {
    let reflected: Vec<f64> = x_tilde.iter().zip(w).map(|(a, b)| 2.0 * a - b).collect();
    let mut k_ref = vec![0.0; op.out_dim()];
    op.apply_into(&reflected, &mut k_ref);
    let arg: Vec<f64> = nu
        .iter()
        .zip(&k_ref)
        .enumerate()
        .map(|(j, (n, k))| n + tau.at(j) * k)
        .collect();
    f_conj.prox_unchecked(tau, &arg)
}

/// `η + Υ ξ` (as written) or `η + Υ(2x̃ − ξ)` (Condat) followed by the `Ḡ*` prox.
fn y_update(
    g_conj: &dyn ProxFunction,
    gamma: Step<'_>,
    eta: &[f64],
    xi: &[f64],
    x_tilde: &[f64],
    rule: DualUpdateRule,
) -> Result<DenseVector> {
    let arg: Vec<f64> = match rule {
        DualUpdateRule::AsWritten => (0..eta.len()).map(|j| eta[j] + gamma.at(j) * xi[j]).collect(),
        DualUpdateRule::Condat => (0..eta.len())
            .map(|j| eta[j] + gamma.at(j) * (2.0 * x_tilde[j] - xi[j]))
            .collect(),
    };
    g_conj.prox_unchecked(gamma, &arg)
}

/// One inertial primal-dual fixed point step for `min F(Kx) + Ḡ(x) + H(x)`.
///
/// `g_conj` and `f_conj` are the conjugates `Ḡ*` and `F*` (see
/// [`Conjugate`]); `h` is `H` itself.
#[allow(clippy::too_many_arguments)]
pub fn ipdfp_step(
    state: &IterTriple,
    lag: &IterTriple,
    op: &dyn LinearMap,
    h: &dyn ProxFunction,
    g_conj: &dyn ProxFunction,
    f_conj: &dyn ProxFunction,
    metric: &ValidatedMetric,
    alpha: f64,
    rho: f64,
    rule: DualUpdateRule,
) -> Result<StepOutput> {
    let n = op.in_dim();
    let dual = [op.out_dim()];
    check_dim("metric primal", metric.primal_dim(), n)?;
    check_dim("metric dual", metric.dual_dims().iter().sum(), op.out_dim())?;
    check_dim("H", n, h.dim())?;
    check_dim("G*", n, g_conj.dim())?;
    check_dim("F*", op.out_dim(), f_conj.dim())?;
    state.check_shape(n, &dual)?;
    lag.check_shape(n, &dual)?;

    let m = metric.metric();
    let (sigma, gamma, tau) = (m.sigma(), m.gamma(), m.tau());
    let inertial = state.extrapolate(lag, alpha);
    let (xi, eta, nu) = (&inertial.x, &inertial.y, &inertial.v[0]);

    let mut kt_nu = vec![0.0; n];
    op.adjoint_into(nu, &mut kt_nu);
    let arg: Vec<f64> = (0..n)
        .map(|j| xi[j] - sigma.at(j) * eta[j] - sigma.at(j) * kt_nu[j])
        .collect();
    let x_tilde = h.prox_unchecked(sigma, &arg)?;
    let y_tilde = y_update(g_conj, gamma, eta, xi, &x_tilde, rule)?;
    let w = match rule {
        DualUpdateRule::AsWritten => eta,
        DualUpdateRule::Condat => xi,
    };
    let v_tilde = dual_update(op, f_conj, tau, nu, &x_tilde, w)?;

    let tilde = IterTriple::new(x_tilde, y_tilde, vec![v_tilde]);
    Ok(StepOutput {
        next: state.relax_toward(&tilde, rho),
        tilde,
    })
}

/// One splitting step for `min Σᵢ Fᵢ(Kᵢx) + G(x)` over `m` dual blocks.
///
/// `g_conj` is the conjugate of the per-copy term `G/m` in the consensus
/// lifting; `f_conjs[i]` is `Fᵢ*`.
#[allow(clippy::too_many_arguments)]
pub fn sipdfp_step(
    state: &IterTriple,
    lag: &IterTriple,
    ops: &[&dyn LinearMap],
    g_conj: &dyn ProxFunction,
    f_conjs: &[&dyn ProxFunction],
    metric: &ValidatedMetric,
    alpha: f64,
    rho: f64,
    rule: DualUpdateRule,
) -> Result<StepOutput> {
    let blocks = ops.len();
    if blocks == 0 || f_conjs.len() != blocks || metric.dual_dims().len() != blocks {
        return Err(Error::BlockCount {
            expected: blocks,
            actual: if f_conjs.len() != blocks {
                f_conjs.len()
            } else {
                metric.dual_dims().len()
            },
        });
    }
    let n = ops[0].in_dim();
    let dual: Vec<usize> = ops.iter().map(|op| op.out_dim()).collect();
    check_dim("metric primal", metric.primal_dim(), n)?;
    for (i, (op, f)) in ops.iter().zip(f_conjs).enumerate() {
        check_dim("block domain", n, op.in_dim())?;
        check_dim("metric dual block", metric.dual_dims()[i], op.out_dim())?;
        check_dim("F_i*", op.out_dim(), f.dim())?;
    }
    check_dim("G*", n, g_conj.dim())?;
    state.check_shape(n, &dual)?;
    lag.check_shape(n, &dual)?;

    let m = metric.metric();
    let (sigma, gamma) = (m.sigma(), m.gamma());
    let inertial = state.extrapolate(lag, alpha);
    let (xi, eta) = (&inertial.x, &inertial.y);

    // Σᵢ Kᵢ* νᵢ
    let mut kt_sum = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for (op, nu) in ops.iter().zip(&inertial.v) {
        op.adjoint_into(nu, &mut tmp);
        for (a, b) in kt_sum.iter_mut().zip(&tmp) {
            *a += b;
        }
    }
    let inv_m = 1.0 / blocks as f64;
    let x_tilde: Vec<f64> = (0..n)
        .map(|j| xi[j] - sigma.at(j) * eta[j] - inv_m * sigma.at(j) * kt_sum[j])
        .collect();
    let y_tilde = y_update(g_conj, gamma, eta, xi, &x_tilde, rule)?;
    let w = match rule {
        DualUpdateRule::AsWritten => eta,
        DualUpdateRule::Condat => xi,
    };
    let v_tilde = ops
        .iter()
        .zip(f_conjs)
        .zip(&inertial.v)
        .enumerate()
        .map(|(i, ((op, f), nu))| dual_update(*op, *f, metric.tau_block(i), nu, &x_tilde, w))
        .collect::<Result<Vec<_>>>()?;

    let tilde = IterTriple::new(x_tilde, y_tilde, v_tilde);
    Ok(StepOutput {
        next: state.relax_toward(&tilde, rho),
        tilde,
    })
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: DenseVector,
    pub state: IterTriple,
    pub records: Vec<ConvergenceRecord>,
    pub termination: Termination,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_objective: f64,
}

/// Problem pieces rearranged for one of the two update boxes.
struct Assembled {
    ops: Vec<Arc<dyn LinearMap>>,
    h: SharedProx,
    g_conj: SharedProx,
    f_conjs: Vec<SharedProx>,
}

fn assemble(problem: &CompositeProblem, algorithm: Algorithm) -> Result<Assembled> {
    let n = problem.primal_dim();
    match algorithm {
        Algorithm::Ipdfp => {
            let blocks = problem.blocks();
            let (op, f): (Arc<dyn LinearMap>, SharedProx) = if blocks.len() == 1 {
                (blocks[0].op.clone(), blocks[0].f.clone())
            } else {
                (
                    Arc::new(StackedMap::new(blocks.iter().map(|b| b.op.clone()).collect())?),
                    Arc::new(SeparableSum::new(blocks.iter().map(|b| b.f.clone()).collect())),
                )
            };
            Ok(Assembled {
                ops: vec![op],
                h: problem
                    .h()
                    .cloned()
                    .unwrap_or_else(|| Arc::new(Zero::new(n)) as SharedProx),
                g_conj: Arc::new(Conjugate::new(problem.g().clone())),
                f_conjs: vec![Arc::new(Conjugate::new(f))],
            })
        }
        Algorithm::Sipdfp => {
            if problem.h().is_some() {
                return Err(Error::Unsupported(
                    "the splitting iteration reserves H for the consensus constraint".into(),
                ));
            }
            let m = problem.blocks().len() as f64;
            let per_copy: SharedProx = Arc::new(Scaled::new(problem.g().clone(), 1.0 / m)?);
            Ok(Assembled {
                ops: problem.blocks().iter().map(|b| b.op.clone()).collect(),
                h: Arc::new(Zero::new(n)),
                g_conj: Arc::new(Conjugate::new(per_copy)),
                f_conjs: problem
                    .blocks()
                    .iter()
                    .map(|b| Arc::new(Conjugate::new(b.f.clone())) as SharedProx)
                    .collect(),
            })
        }
    }
}

/// Dual operators the metric must be validated against for `algorithm`.
pub fn metric_operators(
    problem: &CompositeProblem,
    algorithm: Algorithm,
) -> Result<Vec<Arc<dyn LinearMap>>> {
    Ok(assemble(problem, algorithm)?.ops)
}

/// Validate `metric` for `problem` under `algorithm`.
pub fn validate_for(
    problem: &CompositeProblem,
    algorithm: Algorithm,
    metric: crate::precond::StepMetric,
) -> Result<ValidatedMetric> {
    let ops = metric_operators(problem, algorithm)?;
    let refs: Vec<&dyn LinearMap> = ops.iter().map(|o| o.as_ref()).collect();
    ValidatedMetric::new(metric, &refs)
}

/// Iterate from the zero state until the relative P-norm residual drops
/// below `options.tol` or `options.max_iter` steps have run.
pub fn run(
    problem: &CompositeProblem,
    algorithm: Algorithm,
    metric: &ValidatedMetric,
    schedule: &InertialSchedule,
    options: &SolveOptions,
) -> Result<SolveResult> {
    let parts = assemble(problem, algorithm)?;
    let dual: Vec<usize> = parts.ops.iter().map(|o| o.out_dim()).collect();
    run_from(
        problem,
        algorithm,
        metric,
        schedule,
        options,
        IterTriple::zeros(problem.primal_dim(), &dual),
    )
}

/// [`run`] from a given initial state (used as both `z⁰` and `z⁻¹`).
pub fn run_from(
    problem: &CompositeProblem,
    algorithm: Algorithm,
    metric: &ValidatedMetric,
    schedule: &InertialSchedule,
    options: &SolveOptions,
    initial: IterTriple,
) -> Result<SolveResult> {
    options.validate()?;
    let parts = assemble(problem, algorithm)?;
    let ops: Vec<&dyn LinearMap> = parts.ops.iter().map(|o| o.as_ref()).collect();
    let f_conjs: Vec<&dyn ProxFunction> = parts.f_conjs.iter().map(|f| f.as_ref()).collect();
    let dual: Vec<usize> = ops.iter().map(|o| o.out_dim()).collect();
    if metric.dual_dims() != dual.as_slice() || metric.primal_dim() != problem.primal_dim() {
        return Err(Error::MetricRejected(format!(
            "metric was validated for blocks {:?}, problem has {:?}",
            metric.dual_dims(),
            dual
        )));
    }
    initial.check_shape(problem.primal_dim(), &dual)?;

    let start = Instant::now();
    let scale = 1.0 + metric_norm(metric, &ops, &initial)?;
    let mut state = initial.clone();
    let mut lag = initial;
    let mut records = Vec::new();
    let mut first_residual = None;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut residual = 0.0;

    for k in 0..options.max_iter {
        let alpha = schedule.alpha_at(k);
        let out = match algorithm {
            Algorithm::Ipdfp => ipdfp_step(
                &state,
                &lag,
                ops[0],
                parts.h.as_ref(),
                parts.g_conj.as_ref(),
                f_conjs[0],
                metric,
                alpha,
                schedule.rho(),
                options.rule,
            )?,
            Algorithm::Sipdfp => sipdfp_step(
                &state,
                &lag,
                &ops,
                parts.g_conj.as_ref(),
                &f_conjs,
                metric,
                alpha,
                schedule.rho(),
                options.rule,
            )?,
        };
        let delta = out.next.difference(&state);
        let sq = metric_inner(metric, &ops, &delta, &delta)?;
        if sq < -1e-10 * metric_diagonal_energy(metric, &delta) {
            return Err(Error::MetricRejected(format!(
                "metric is indefinite on this problem: <dz, P dz> = {sq} at iteration {}",
                k + 1
            )));
        }
        residual = sq.max(0.0).sqrt();
        let primal_change = norm(&delta.x);
        iterations = k + 1;
        lag = std::mem::replace(&mut state, out.next);

        let first = *first_residual.get_or_insert(residual);
        let done = if !residual.is_finite() || (first > 0.0 && residual > 1e6 * first) {
            termination = Termination::Diverged;
            true
        } else if residual / scale <= options.tol {
            termination = Termination::Converged;
            true
        } else {
            false
        };
        if done || iterations % options.record_every == 0 || iterations == options.max_iter {
            records.push(ConvergenceRecord {
                iter: iterations,
                objective: problem.objective(&state.x)?,
                km_residual_p: residual,
                primal_change,
                elapsed_ms: if options.timing {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                },
            });
        }
        if done {
            break;
        }
    }
    let final_objective = match records.last() {
        Some(r) if r.iter == iterations => r.objective,
        _ => problem.objective(&state.x)?,
    };
    Ok(SolveResult {
        x: state.x.clone(),
        state,
        records,
        termination,
        iterations,
        final_residual: residual,
        final_objective,
    })
}
