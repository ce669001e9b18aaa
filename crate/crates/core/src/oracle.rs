//! Brute-force references for testing: grid-search prox, a standalone
//! Chambolle–Pock stepper and a slow, conservative reference solver.
//!
//! Nothing here calls into [`crate::solver`]; only the prox catalog and the
//! linear operators are shared.

use crate::error::{check_dim, Error, Result};
use crate::linop::{estimate_norm, LinearMap};
use crate::problems::{CompositeProblem, LogRegDataset};
use crate::prox::{log1p_exp_neg, soft_threshold, Conjugate, ProxFunction, Step, Zero};
use crate::vector::{max_abs_diff, DenseVector};

/// Uniform grid `lo, lo + pitch, …` up to `hi` on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lo: f64,
    hi: f64,
    pitch: f64,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, pitch: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("need lo < hi, got [{lo}, {hi}]"),
            });
        }
        if !(pitch > 0.0 && pitch <= hi - lo) {
            return Err(Error::InvalidParameter {
                name: "pitch",
                reason: format!("need 0 < pitch <= {}, got {pitch}", hi - lo),
            });
        }
        Ok(GridSpec { lo, hi, pitch })
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Index of the last grid point.
    fn last(&self) -> usize {
        ((self.hi - self.lo) / self.pitch + 1e-9).floor() as usize
    }

    fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.pitch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub point: DenseVector,
    pub value: f64,
    /// The minimizer sits on the edge of the grid, so the true prox may lie outside.
    pub on_boundary: bool,
}

/// Grid argmin of `λ f(y) + ½‖u − y‖²` for `u` of dimension 1 or 2.
///
/// One-dimensional grids are searched exhaustively. Two-dimensional grids are
/// searched exhaustively when small and otherwise by nested windows of
/// decreasing stride, which finds the grid minimizer for strongly convex
/// objectives. Ties go to the lexicographically smallest point.
pub fn prox_oracle(
    f: &dyn Fn(&[f64]) -> f64,
    lambda: f64,
    u: &[f64],
    grid: &GridSpec,
) -> Result<OracleResult> {
    if u.is_empty() || u.len() > 2 {
        return Err(Error::Unsupported(format!(
            "grid oracle needs dimension 1 or 2, got {}",
            u.len()
        )));
    }
    let objective = |y: &[f64]| {
        let fy = f(y);
        let fy = if lambda == 0.0 && fy.is_finite() { 0.0 } else { lambda * fy };
        fy + 0.5 * y.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    let last = grid.last();
    let (idx, value) = if u.len() == 1 {
        let mut best = (0usize, f64::INFINITY);
        for i in 0..=last {
            let v = objective(&[grid.point(i)]);
            if v < best.1 {
                best = (i, v);
            }
        }
        (vec![best.0], best.1)
    } else {
        let search = |lo: [usize; 2], hi: [usize; 2], stride: usize| {
            let mut best = ([lo[0], lo[1]], f64::INFINITY);
            let mut i = lo[0];
            while i <= hi[0] {
                let mut j = lo[1];
                while j <= hi[1] {
                    let v = objective(&[grid.point(i), grid.point(j)]);
                    if v < best.1 {
                        best = ([i, j], v);
                    }
                    j += stride;
                }
                i += stride;
            }
            best
        };
        let mut stride = last.div_ceil(1000).max(1);
        let mut best = search([0, 0], [last, last], stride);
        while stride > 1 {
            let next = (stride / 8).max(1);
            let lo = best.0.map(|c| c.saturating_sub(3 * stride) / next * next);
            let hi = best.0.map(|c| (c + 3 * stride).min(last));
            best = search(lo, hi, next);
            stride = next;
        }
        (best.0.to_vec(), best.1)
    };
    if !value.is_finite() {
        return Err(Error::InvalidParameter {
            name: "f",
            reason: "objective is infinite on the whole grid".into(),
        });
    }
    Ok(OracleResult {
        point: idx.iter().map(|i| grid.point(*i)).collect(),
        value,
        on_boundary: idx.iter().any(|i| *i == 0 || *i == last),
    })
}

/// One Chambolle–Pock step
/// `x' = prox_{σH}(x − σK*v)`, `v' = prox_{τF*}(v + τK(2x' − x))`.
#[allow(clippy::too_many_arguments)]
pub fn cp_reference_step(
    x: &[f64],
    v: &[f64],
    k: &dyn LinearMap,
    h: &dyn ProxFunction,
    f_conj: &dyn ProxFunction,
    sigma: f64,
    tau: f64,
) -> Result<(DenseVector, DenseVector)> {
    check_dim("cp x", k.in_dim(), x.len())?;
    check_dim("cp v", k.out_dim(), v.len())?;
    let ktv = k.adjoint_apply(v)?;
    let arg: Vec<f64> = x.iter().zip(&ktv).map(|(a, b)| a - sigma * b).collect();
    let x_new = h.prox(Step::Scalar(sigma), &arg)?;
    let bar: Vec<f64> = x_new.iter().zip(x).map(|(a, b)| 2.0 * a - b).collect();
    let kbar = k.apply(&bar)?;
    let arg: Vec<f64> = v.iter().zip(&kbar).map(|(a, b)| a + tau * b).collect();
    let v_new = f_conj.prox(Step::Scalar(tau), &arg)?;
    Ok((x_new, v_new))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    pub budget: usize,
    /// Ratio `σ/τ`; the product `στ‖[K; I]‖²` is fixed at one half.
    pub primal_scale: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            budget: 200_000,
            primal_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: DenseVector,
    pub objective: f64,
    pub iterations: usize,
    /// Last max-norm change of the primal-dual pair.
    pub residual: f64,
    /// The budget ran out before the residual fell below `1e-10`.
    pub low_confidence: bool,
}

/// Operator `[K₁; …; K_m; I]` held as one dense row-major matrix.
struct Stacked {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Stacked {
    fn new(problem: &CompositeProblem) -> Self {
        let cols = problem.primal_dim();
        let mut data = Vec::new();
        let mut e = vec![0.0; cols];
        let mut rows = 0;
        for b in problem.blocks() {
            let mut cols_major = Vec::with_capacity(cols);
            for j in 0..cols {
                e[j] = 1.0;
                cols_major.push(b.op.apply(&e).expect("block domain matches problem"));
                e[j] = 0.0;
            }
            for i in 0..b.op.out_dim() {
                data.extend(cols_major.iter().map(|c| c[i]));
            }
            rows += b.op.out_dim();
        }
        for i in 0..cols {
            data.extend((0..cols).map(|j| if i == j { 1.0 } else { 0.0 }));
        }
        rows += cols;
        Stacked { rows, cols, data }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.cols)
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, yi) in self.data.chunks(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(r) {
                *o += a * yi;
            }
        }
        out
    }

    fn norm(&self) -> f64 {
        let mut x = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        for (j, v) in x.iter_mut().enumerate() {
            *v += 0.1 * ((j * 7919) % 13) as f64;
        }
        let mut est = 0.0;
        for _ in 0..100_000 {
            let y = self.adjoint(&self.apply(&x));
            let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return 0.0;
            }
            x = y.iter().map(|v| v / n).collect();
            if (n - est).abs() <= 1e-12 * n {
                est = n;
                break;
            }
            est = n;
        }
        est.sqrt()
    }
}

/// Solve `problem` with Chambolle–Pock on `[K₁; …; K_m; I]` against
/// `(F₁, …, F_m, G)` and primal prox `H`, returning the best-objective iterate.
pub fn reference_solve(
    problem: &CompositeProblem,
    options: &ReferenceOptions,
) -> Result<ReferenceSolution> {
    if !(options.primal_scale > 0.0 && options.primal_scale.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "primal_scale",
            reason: format!("must be positive, got {}", options.primal_scale),
        });
    }
    let n = problem.primal_dim();
    let stacked = Stacked::new(problem);
    let l = stacked.norm() * 1.01;
    let base = (0.5f64).sqrt() / l;
    let sigma = base * options.primal_scale.sqrt();
    let tau = base / options.primal_scale.sqrt();

    let conj: Vec<Conjugate> = problem
        .blocks()
        .iter()
        .map(|b| Conjugate::new(b.f.clone()))
        .chain(std::iter::once(Conjugate::new(problem.g().clone())))
        .collect();
    let zero = Zero::new(n);
    let h: &dyn ProxFunction = match problem.h() {
        Some(h) => h.as_ref(),
        None => &zero,
    };

    let mut x = vec![0.0; n];
    let mut v = vec![0.0; stacked.rows];
    let mut best_x = x.clone();
    let mut best = problem.objective(&x)?;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for k in 0..options.budget {
        let ktv = stacked.adjoint(&v);
        let arg: Vec<f64> = x.iter().zip(&ktv).map(|(a, b)| a - sigma * b).collect();
        let x_new = h.prox(Step::Scalar(sigma), &arg)?;
        let bar: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| 2.0 * a - b).collect();
        let kbar = stacked.apply(&bar);
        let mut v_new = Vec::with_capacity(v.len());
        let mut start = 0;
        for c in &conj {
            let end = start + c.dim();
            let arg: Vec<f64> = (start..end).map(|i| v[i] + tau * kbar[i]).collect();
            v_new.extend(c.prox(Step::Scalar(tau), &arg)?);
            start = end;
        }
        residual = max_abs_diff(&x_new, &x).max(max_abs_diff(&v_new, &v));
        x = x_new;
        v = v_new;
        iterations = k + 1;
        let obj = problem.objective(&x)?;
        if obj < best {
            best = obj;
            best_x.clone_from(&x);
        }
        if residual <= 1e-13 {
            break;
        }
    }
    Ok(ReferenceSolution {
        x: best_x,
        objective: best,
        iterations,
        residual,
        low_confidence: residual > 1e-10,
    })
}

/// Accelerated proximal gradient for
/// `(1/m) Σᵢ log(1 + e^{−yᵢ aᵢᵀx}) + τ‖x‖₁`, returning `(x, objective)`.
pub fn fista_logreg(data: &LogRegDataset, tau: f64, iterations: usize) -> Result<(DenseVector, f64)> {
    let a = data.features();
    let y = data.labels();
    let m = data.len() as f64;
    let q = data.dim();
    let lip = estimate_norm(a, 1e-12, 100_000)?.powi(2) / (4.0 * m) * 1.01;
    let step = 1.0 / lip.max(f64::MIN_POSITIVE);
    let objective = |x: &[f64]| {
        let loss: f64 = (0..data.len())
            .map(|i| log1p_exp_neg(y[i] * a.row(i).iter().zip(x).map(|(p, q)| p * q).sum::<f64>()))
            .sum();
        loss / m + tau * x.iter().map(|v| v.abs()).sum::<f64>()
    };
    let gradient = |x: &[f64]| {
        let mut g = vec![0.0; q];
        for i in 0..data.len() {
            let margin = y[i] * a.row(i).iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
            // d/dz log(1 + e^{-z}) = −1 / (1 + e^{z})
            let w = -y[i] / (1.0 + margin.exp()) / m;
            for (gj, aij) in g.iter_mut().zip(a.row(i)) {
                *gj += w * aij;
            }
        }
        g
    };
    let mut x = vec![0.0; q];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let g = gradient(&z);
        let x_new: Vec<f64> = z
            .iter()
            .zip(&g)
            .map(|(zj, gj)| soft_threshold(zj - step * gj, step * tau))
            .collect();
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        z = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        // restart when the objective goes up
        if objective(&x_new) > objective(&x) {
            z.clone_from(&x_new);
            t = 1.0;
        } else {
            t = t_new;
        }
        x = x_new;
    }
    let obj = objective(&x);
    Ok((x, obj))
}
