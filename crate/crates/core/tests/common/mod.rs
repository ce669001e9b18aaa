#![allow(dead_code)]

use std::sync::Arc;

use ipdfp_core::linop::{DenseMatrix, Identity};
use ipdfp_core::problems::{Block, CompositeProblem, LogRegDataset};
use ipdfp_core::prox::{
    BoxIndicator, Conjugate, GroupL2, L1Norm, LInfBall, LogisticLoss, PairLayout, ProxFunction,
    Scaled, ShiftedL1, SharedProx, SquaredDistance, Zero,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

/// Sparse matrix with roughly `density` nonzeros and at least one per row and column.
pub fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if rng.gen_bool(density) {
                m.set(i, j, rng.gen_range(-3.0..3.0));
            }
        }
        let j = rng.gen_range(0..cols);
        m.set(i, j, rng.gen_range(0.5..3.0));
    }
    for j in 0..cols {
        if (0..rows).all(|i| m.get(i, j) == 0.0) {
            let i = rng.gen_range(0..rows);
            m.set(i, j, rng.gen_range(-3.0..-0.5));
        }
    }
    m
}

/// Four separable observations in the plane.
pub fn logistic_toy() -> LogRegDataset {
    LogRegDataset::from_rows(
        &[
            vec![1.0, 2.0],
            vec![2.0, 0.5],
            vec![-1.0, -1.5],
            vec![-2.0, -0.3],
        ],
        vec![1.0, 1.0, -1.0, -1.0],
    )
    .unwrap()
}

pub const LOGISTIC_TAU: f64 = 1e-6;

pub const LS_DATA: [f64; 5] = [3.0, -0.5, 0.05, -2.0, 1.2];
pub const LS_TAU: f64 = 0.4;

/// `½‖x − b‖² + τ‖x‖₁` with the quadratic as `H` and `K = I`.
pub fn l1_least_squares() -> CompositeProblem {
    CompositeProblem::new(
        5,
        vec![Block::new(Arc::new(Identity::new(5)), Arc::new(L1Norm::new(5, LS_TAU))).unwrap()],
        Arc::new(Zero::new(5)),
        Some(Arc::new(SquaredDistance::new(LS_DATA.to_vec(), 1.0))),
    )
    .unwrap()
}

pub const IMAGE_SIDE: usize = 16;

/// Piecewise constant 16×16 scene with deterministic salt-and-pepper noise on
/// about 12% of the pixels.
pub fn impulse_image() -> Vec<f64> {
    let n = IMAGE_SIDE;
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = if (4..12).contains(&i) && (4..12).contains(&j) {
                180.0
            } else if j >= 13 {
                120.0
            } else {
                60.0
            };
        }
    }
    for (k, px) in b.iter_mut().enumerate() {
        let r = (k * 37 + 11) % 101;
        if r < 6 {
            *px = 0.0;
        } else if r < 12 {
            *px = 255.0;
        }
    }
    b
}

/// A catalog entry with an independently written function for the grid oracle.
pub struct Entry {
    pub name: &'static str,
    pub prox: SharedProx,
    pub f: Box<dyn Fn(&[f64]) -> f64>,
}

fn indicator(ok: bool) -> f64 {
    if ok {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Separable catalog entries of dimension one, plus the group-l2 pair.
pub fn catalog() -> Vec<Entry> {
    let quad = |c: f64, w: f64| move |y: &[f64]| 0.5 * w * (y[0] - c) * (y[0] - c);
    vec![
        Entry {
            name: "zero",
            prox: Arc::new(Zero::new(1)),
            f: Box::new(|_| 0.0),
        },
        Entry {
            name: "l1",
            prox: Arc::new(L1Norm::new(1, 0.7)),
            f: Box::new(|y| 0.7 * y[0].abs()),
        },
        Entry {
            name: "shifted_l1",
            prox: Arc::new(ShiftedL1::new(vec![1.3], 1.0)),
            f: Box::new(|y| (y[0] - 1.3).abs()),
        },
        Entry {
            name: "squared_distance",
            prox: Arc::new(SquaredDistance::new(vec![-0.8], 2.0)),
            f: Box::new(quad(-0.8, 2.0)),
        },
        Entry {
            name: "box",
            prox: Arc::new(BoxIndicator::new(1, -1.0, 2.0).unwrap()),
            f: Box::new(|y| indicator((-1.0..=2.0).contains(&y[0]))),
        },
        Entry {
            name: "linf_ball",
            prox: Arc::new(LInfBall::new(1, 1.5)),
            f: Box::new(|y| indicator(y[0].abs() <= 1.5)),
        },
        Entry {
            name: "logistic",
            prox: Arc::new(LogisticLoss::new(vec![1.0], 0.8).unwrap()),
            f: Box::new(|y| 0.8 * (1.0 + (-y[0]).exp()).ln()),
        },
        Entry {
            name: "logistic_negative_label",
            prox: Arc::new(LogisticLoss::new(vec![-1.0], 1.0).unwrap()),
            f: Box::new(|y| (1.0 + y[0].exp()).ln()),
        },
        Entry {
            name: "scaled_l1",
            prox: Arc::new(Scaled::new(Arc::new(L1Norm::new(1, 1.0)), 2.5).unwrap()),
            f: Box::new(|y| 2.5 * y[0].abs()),
        },
        Entry {
            name: "conjugate_l1",
            prox: Arc::new(Conjugate::new(Arc::new(L1Norm::new(1, 1.0)))),
            f: Box::new(|y| indicator(y[0].abs() <= 1.0)),
        },
        Entry {
            // (½(· − c)²)* (s) = ½s² + cs
            name: "conjugate_quadratic",
            prox: Arc::new(Conjugate::new(Arc::new(SquaredDistance::new(vec![0.6], 1.0)))),
            f: Box::new(|s| 0.5 * s[0] * s[0] + 0.6 * s[0]),
        },
        Entry {
            // (w·‖· − b‖₁)*(s) = ⟨b, s⟩ + δ{|s| ≤ w}
            name: "conjugate_shifted_l1",
            prox: Arc::new(Conjugate::new(Arc::new(ShiftedL1::new(vec![-0.4], 2.0)))),
            f: Box::new(|s| -0.4 * s[0] + indicator(s[0].abs() <= 2.0)),
        },
        Entry {
            name: "group_l2",
            prox: Arc::new(GroupL2::new(1, 1.2, PairLayout::Interleaved)),
            f: Box::new(|g| 1.2 * g[0].hypot(g[1])),
        },
    ]
}

pub fn as_dyn(p: &SharedProx) -> &dyn ProxFunction {
    p.as_ref()
}
