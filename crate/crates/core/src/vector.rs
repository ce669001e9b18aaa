//! Small dense-vector kernels shared by every module.
//!
//! State is carried as plain `Vec<f64>`; these helpers keep the loops in one
//! place so the solver and the oracle read the same way.

/// A finite-dimensional real vector.
pub type DenseVector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_l1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// `a - b`
pub fn sub(a: &[f64], b: &[f64]) -> DenseVector {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + b`
pub fn add(a: &[f64], b: &[f64]) -> DenseVector {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(c: f64, a: &[f64]) -> DenseVector {
    a.iter().map(|x| c * x).collect()
}

/// Inertial extrapolation `x + alpha (x - x_prev)`.
pub fn extrapolate(x: &[f64], x_prev: &[f64], alpha: f64) -> DenseVector {
    debug_assert_eq!(x.len(), x_prev.len());
    x.iter()
        .zip(x_prev)
        .map(|(a, b)| a + alpha * (a - b))
        .collect()
}

/// Relaxation `rho a + (1 - rho) b`.
pub fn relax(rho: f64, a: &[f64], b: &[f64]) -> DenseVector {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| rho * p + (1.0 - rho) * q)
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
