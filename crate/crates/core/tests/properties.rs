mod common;

use std::sync::Arc;

use common::*;
use ipdfp_core::linop::{
    estimate_norm, DenseMatrix, Diagonal, FirstDifference1d, FirstDifference2d, Identity,
    LinearMap, SharedMap, StackedMap,
};
use ipdfp_core::precond::{metric_inner, metric_norm, StepMetric, ValidatedMetric};
use ipdfp_core::problems::{build_l1tv, build_logreg, CompositeProblem, PixelRange};
use ipdfp_core::prox::{
    log1p_exp_neg, BoxIndicator, Conjugate, L1Norm, LInfBall, ProxFunction, SharedProx,
    SquaredDistance, Step,
};
use ipdfp_core::solver::{
    ipdfp_step, run, sipdfp_step, suggest_schedule, validate_for, Algorithm, DualUpdateRule,
    IterTriple, SolveOptions,
};
use ipdfp_core::vector::{dot, max_abs_diff, norm};
use proptest::prelude::*;

fn operators(rng: &mut rand_chacha::ChaCha8Rng) -> Vec<SharedMap> {
    vec![
        Arc::new(Identity::new(4)),
        Arc::new(Diagonal::new(random_vec(rng, 5, 3.0))),
        Arc::new(random_matrix(rng, 3, 6)),
        Arc::new(FirstDifference1d::new(7).unwrap()),
        Arc::new(FirstDifference2d::new(4, 5).unwrap()),
        Arc::new(
            StackedMap::new(vec![
                Arc::new(Identity::new(3)),
                Arc::new(random_matrix(rng, 2, 3)),
            ])
            .unwrap(),
        ),
    ]
}

#[test]
fn adjoint_identity_holds_for_every_operator() {
    let mut rng = rng(10);
    for op in operators(&mut rng) {
        for _ in 0..100 {
            let u = random_vec(&mut rng, op.in_dim(), 2.0);
            let w = random_vec(&mut rng, op.out_dim(), 2.0);
            let lhs = dot(&op.apply(&u).unwrap(), &w);
            let rhs = dot(&u, &op.adjoint_apply(&w).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + norm(&u) * norm(&w)), "{op:?}");
        }
    }
}

#[test]
fn norm_estimate_is_an_upper_envelope() {
    let mut rng = rng(11);
    for op in operators(&mut rng) {
        let tol = 1e-8;
        let est = estimate_norm(op.as_ref(), tol, 100_000).unwrap();
        for _ in 0..100 {
            let u = random_vec(&mut rng, op.in_dim(), 1.0);
            let ratio = norm(&op.apply(&u).unwrap()) / norm(&u);
            assert!(ratio <= est + tol * est.max(1.0), "{ratio} > {est} for {op:?}");
        }
    }
}

#[test]
fn stacked_blocks_slice_back() {
    let mut rng = rng(12);
    let blocks: Vec<SharedMap> = vec![
        Arc::new(random_matrix(&mut rng, 2, 4)),
        Arc::new(FirstDifference1d::new(4).unwrap()),
        Arc::new(Identity::new(4)),
    ];
    let stacked = StackedMap::new(blocks.clone()).unwrap();
    for _ in 0..20 {
        let x = random_vec(&mut rng, 4, 1.0);
        let y = stacked.apply(&x).unwrap();
        for (i, b) in blocks.iter().enumerate() {
            assert_eq!(y[stacked.block_range(i)].to_vec(), b.apply(&x).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn moreau_decomposition(
        u in prop::collection::vec(-10.0f64..10.0, 3),
        lambda in 0.05f64..5.0,
    ) {
        let fs: Vec<SharedProx> = vec![
            Arc::new(L1Norm::new(3, 1.0)),
            Arc::new(SquaredDistance::new(vec![0.0; 3], 1.0)),
        ];
        for f in fs {
            let conj = Conjugate::new(f.clone());
            let p = f.prox(Step::Scalar(lambda), &u).unwrap();
            let scaled: Vec<f64> = u.iter().map(|v| v / lambda).collect();
            let q = conj.prox(Step::Scalar(1.0 / lambda), &scaled).unwrap();
            for j in 0..3 {
                prop_assert!((u[j] - p[j] - lambda * q[j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn indicator_prox_is_idempotent_and_step_free(
        u in prop::collection::vec(-10.0f64..10.0, 4),
        a in 0.01f64..10.0,
        b in 0.01f64..10.0,
    ) {
        let sets: Vec<Box<dyn ProxFunction>> = vec![
            Box::new(BoxIndicator::new(4, -1.0, 3.0).unwrap()),
            Box::new(LInfBall::new(4, 2.0)),
        ];
        for set in sets {
            let p = set.prox(Step::Scalar(a), &u).unwrap();
            prop_assert_eq!(&p, &set.prox(Step::Scalar(b), &u).unwrap());
            prop_assert_eq!(&p, &set.prox(Step::Scalar(b), &p).unwrap());
        }
    }

    #[test]
    fn diagonal_step_prox_is_firmly_nonexpansive_in_its_metric(
        u in prop::collection::vec(-10.0f64..10.0, 3),
        w in prop::collection::vec(-10.0f64..10.0, 3),
        d in prop::collection::vec(0.05f64..5.0, 3),
    ) {
        // in the metric Λ⁻¹: ‖Tu − Tw‖²_{Λ⁻¹} ≤ ⟨Tu − Tw, u − w⟩_{Λ⁻¹}
        for entry in catalog().into_iter().filter(|e| e.prox.dim() == 1) {
            let f: SharedProx = entry.prox.clone();
            let parts = ipdfp_core::prox::SeparableSum::new(vec![f.clone(), f.clone(), f]);
            let pu = parts.prox(Step::Diagonal(&d), &u).unwrap();
            let pw = parts.prox(Step::Diagonal(&d), &w).unwrap();
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for j in 0..3 {
                let t = pu[j] - pw[j];
                lhs += t * t / d[j];
                rhs += t * (u[j] - w[j]) / d[j];
            }
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "{}", entry.name);
        }
    }
}

fn random_triple(rng: &mut rand_chacha::ChaCha8Rng, n: usize, dual: &[usize]) -> IterTriple {
    IterTriple::new(
        random_vec(rng, n, 1.0),
        random_vec(rng, n, 1.0),
        dual.iter().map(|d| random_vec(rng, *d, 1.0)).collect(),
    )
}

#[test]
fn metric_is_symmetric_and_a_norm() {
    let mut rng = rng(13);
    let k1 = random_matrix(&mut rng, 3, 4);
    let k2 = random_sparse(&mut rng, 2, 4, 0.5);
    let ops: [&dyn LinearMap; 2] = [&k1, &k2];
    let norm_sq: f64 = ops.iter().map(|o| ipdfp_core::linop::safe_norm(*o).unwrap().powi(2)).sum();
    let metric = ValidatedMetric::new(StepMetric::scalar(0.3, 0.4, 1.5 / norm_sq), &ops).unwrap();
    for _ in 0..100 {
        let z = random_triple(&mut rng, 4, &[3, 2]);
        let w = random_triple(&mut rng, 4, &[3, 2]);
        let zw = metric_inner(&metric, &ops, &z, &w).unwrap();
        let wz = metric_inner(&metric, &ops, &w, &z).unwrap();
        assert!((zw - wz).abs() <= 1e-12 * (1.0 + zw.abs()));

        let nz = metric_norm(&metric, &ops, &z).unwrap();
        let nw = metric_norm(&metric, &ops, &w).unwrap();
        let sum = IterTriple::new(
            z.x.iter().zip(&w.x).map(|(a, b)| a + b).collect(),
            z.y.iter().zip(&w.y).map(|(a, b)| a + b).collect(),
            z.v.iter()
                .zip(&w.v)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
                .collect(),
        );
        assert!(metric_norm(&metric, &ops, &sum).unwrap() <= nz + nw + 1e-10);
        let c = -2.5;
        let scaled = IterTriple::new(
            z.x.iter().map(|a| c * a).collect(),
            z.y.iter().map(|a| c * a).collect(),
            z.v.iter().map(|v| v.iter().map(|a| c * a).collect()).collect(),
        );
        assert!((metric_norm(&metric, &ops, &scaled).unwrap() - c.abs() * nz).abs() <= 1e-10);
    }
}

fn convex_along_segments(p: &CompositeProblem, rng: &mut rand_chacha::ChaCha8Rng, scale: f64, shift: f64) {
    for _ in 0..100 {
        let u: Vec<f64> = random_vec(rng, p.primal_dim(), scale).iter().map(|v| v + shift).collect();
        let w: Vec<f64> = random_vec(rng, p.primal_dim(), scale).iter().map(|v| v + shift).collect();
        let mid: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fu, fw, fm) = (
            p.objective(&u).unwrap(),
            p.objective(&w).unwrap(),
            p.objective(&mid).unwrap(),
        );
        assert!(fm <= 0.5 * (fu + fw) + 1e-10 * (1.0 + fu.abs() + fw.abs()));
    }
}

#[test]
fn objectives_are_convex_along_segments() {
    let mut rng = rng(14);
    let b = impulse_image();
    for isotropic in [false, true] {
        let p = build_l1tv(&b, IMAGE_SIDE, IMAGE_SIDE, 2.0, isotropic, PixelRange::default()).unwrap();
        convex_along_segments(&p, &mut rng, 100.0, 127.5);
    }
    convex_along_segments(&build_logreg(&logistic_toy(), 0.1, 2).unwrap(), &mut rng, 5.0, 0.0);
    convex_along_segments(&l1_least_squares(), &mut rng, 5.0, 0.0);
}

#[test]
fn logreg_objective_matches_direct_evaluation() {
    let mut rng = rng(15);
    let rows: Vec<Vec<f64>> = (0..9).map(|_| random_vec(&mut rng, 3, 2.0)).collect();
    let labels: Vec<f64> = (0..9).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
    let data = ipdfp_core::LogRegDataset::from_rows(&rows, labels.clone()).unwrap();
    let tau = 0.03;
    for batches in [1, 2, 4, 9] {
        let p = build_logreg(&data, tau, batches).unwrap();
        for _ in 0..20 {
            let x = random_vec(&mut rng, 3, 3.0);
            let direct = rows
                .iter()
                .zip(&labels)
                .map(|(a, y)| (1.0 + (-y * dot(a, &x)).exp()).ln())
                .sum::<f64>()
                / 9.0
                + tau * x.iter().map(|v| v.abs()).sum::<f64>();
            assert!((p.objective(&x).unwrap() - direct).abs() <= 1e-12);
        }
    }
    assert!((log1p_exp_neg(0.0) - 2f64.ln()).abs() < 1e-16);
}

struct Pieces {
    ops: Vec<DenseMatrix>,
    f_conj: Vec<Conjugate>,
    g_conj: Conjugate,
}

fn pieces(rng: &mut rand_chacha::ChaCha8Rng, blocks: usize, n: usize) -> Pieces {
    Pieces {
        ops: (0..blocks).map(|_| random_matrix(rng, 3, n)).collect(),
        f_conj: (0..blocks)
            .map(|i| Conjugate::new(Arc::new(SquaredDistance::new(random_vec(rng, 3, 1.0), 1.0 + i as f64))))
            .collect(),
        g_conj: Conjugate::new(Arc::new(L1Norm::new(n, 0.2))),
    }
}

#[test]
fn single_block_split_equals_unsplit_step() {
    let mut rng = rng(16);
    let p = pieces(&mut rng, 1, 4);
    let ops: Vec<&dyn LinearMap> = p.ops.iter().map(|o| o as &dyn LinearMap).collect();
    let f_conj: Vec<&dyn ProxFunction> = p.f_conj.iter().map(|f| f as &dyn ProxFunction).collect();
    let metric = ValidatedMetric::new(StepMetric::scalar(0.3, 0.3, 0.3), &ops).unwrap();
    let zero = ipdfp_core::prox::Zero::new(4);
    let schedule = suggest_schedule(0.2, 0.01).unwrap();
    for rule in [DualUpdateRule::Condat, DualUpdateRule::AsWritten] {
        let init = random_triple(&mut rng, 4, &[3]);
        let (mut a, mut la) = (init.clone(), init.clone());
        let (mut b, mut lb) = (init.clone(), init);
        for k in 0..50 {
            let alpha = schedule.alpha_at(k);
            let sa = ipdfp_step(&a, &la, ops[0], &zero, &p.g_conj, f_conj[0], &metric, alpha, schedule.rho(), rule)
                .unwrap();
            let sb = sipdfp_step(&b, &lb, &ops, &p.g_conj, &f_conj, &metric, alpha, schedule.rho(), rule).unwrap();
            assert!(max_abs_diff(&sa.next.x, &sb.next.x) < 1e-12);
            assert!(max_abs_diff(&sa.next.y, &sb.next.y) < 1e-12);
            assert!(max_abs_diff(&sa.next.v[0], &sb.next.v[0]) < 1e-12);
            la = std::mem::replace(&mut a, sa.next);
            lb = std::mem::replace(&mut b, sb.next);
        }
    }
}

#[test]
fn block_order_only_permutes_duals() {
    let mut rng = rng(17);
    let p = pieces(&mut rng, 3, 4);
    let order = [2, 0, 1];
    let ops: Vec<&dyn LinearMap> = p.ops.iter().map(|o| o as &dyn LinearMap).collect();
    let f: Vec<&dyn ProxFunction> = p.f_conj.iter().map(|f| f as &dyn ProxFunction).collect();
    let ops_p: Vec<&dyn LinearMap> = order.iter().map(|i| ops[*i]).collect();
    let f_p: Vec<&dyn ProxFunction> = order.iter().map(|i| f[*i]).collect();
    let metric = ValidatedMetric::new(StepMetric::scalar(0.2, 0.3, 0.2), &ops).unwrap();
    let metric_p = ValidatedMetric::new(StepMetric::scalar(0.2, 0.3, 0.2), &ops_p).unwrap();
    let init = random_triple(&mut rng, 4, &[3, 3, 3]);
    let init_p = IterTriple::new(init.x.clone(), init.y.clone(), order.iter().map(|i| init.v[*i].clone()).collect());
    let (mut a, mut la) = (init.clone(), init);
    let (mut b, mut lb) = (init_p.clone(), init_p);
    for k in 0..50 {
        let alpha = if k == 0 { 0.0 } else { 0.25 };
        let sa = sipdfp_step(&a, &la, &ops, &p.g_conj, &f, &metric, alpha, 0.5, DualUpdateRule::Condat).unwrap();
        let sb = sipdfp_step(&b, &lb, &ops_p, &p.g_conj, &f_p, &metric_p, alpha, 0.5, DualUpdateRule::Condat).unwrap();
        assert!(max_abs_diff(&sa.next.x, &sb.next.x) < 1e-12);
        for (j, i) in order.iter().enumerate() {
            assert!(max_abs_diff(&sa.next.v[*i], &sb.next.v[j]) < 1e-12);
        }
        la = std::mem::replace(&mut a, sa.next);
        lb = std::mem::replace(&mut b, sb.next);
    }
}

#[test]
fn solutions_are_stationary_under_any_admissible_schedule() {
    // converge first, then restart from the limit with several schedules
    let problem = l1_least_squares();
    let metric = validate_for(&problem, Algorithm::Ipdfp, StepMetric::scalar(0.5, 0.5, 0.5)).unwrap();
    let opts = SolveOptions {
        tol: 1e-15,
        max_iter: 100_000,
        timing: false,
        ..SolveOptions::default()
    };
    let limit = run(&problem, Algorithm::Ipdfp, &metric, &suggest_schedule(0.0, 0.01).unwrap(), &opts)
        .unwrap()
        .state;
    let op = Identity::new(5);
    let h = SquaredDistance::new(LS_DATA.to_vec(), 1.0);
    let g_conj = Conjugate::new(Arc::new(ipdfp_core::prox::Zero::new(5)));
    let f_conj = Conjugate::new(Arc::new(L1Norm::new(5, LS_TAU)));
    for alpha in [0.0, 0.2, 0.5, 0.9] {
        let s = suggest_schedule(alpha, 0.01).unwrap();
        let out = ipdfp_step(&limit, &limit, &op, &h, &g_conj, &f_conj, &metric, alpha, s.rho(), DualUpdateRule::Condat)
            .unwrap();
        let d = out.next.difference(&limit);
        assert!(d.x.iter().chain(&d.y).chain(&d.v[0]).all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn residual_squares_are_summable_on_the_least_squares_toy() {
    let problem = l1_least_squares();
    let metric = validate_for(&problem, Algorithm::Ipdfp, StepMetric::scalar(0.5, 0.5, 0.5)).unwrap();
    let opts = SolveOptions {
        tol: 1e-300,
        max_iter: 10_000,
        timing: false,
        ..SolveOptions::default()
    };
    let r = run(&problem, Algorithm::Ipdfp, &metric, &suggest_schedule(0.3, 0.01).unwrap(), &opts).unwrap();
    let partial: Vec<f64> = r
        .records
        .iter()
        .scan(0.0, |acc, rec| {
            *acc += rec.km_residual_p * rec.km_residual_p;
            Some(*acc)
        })
        .collect();
    assert!(partial.last().unwrap().is_finite());
    let (half, last) = (partial[partial.len() / 2], *partial.last().unwrap());
    assert!(r.iterations > 100);
    assert!((last - half).abs() <= 1e-12 * last);
    assert!(r.records.last().unwrap().km_residual_p < 1e-6);
    let closed: Vec<f64> = LS_DATA.iter().map(|b| ipdfp_core::prox::soft_threshold(*b, LS_TAU)).collect();
    assert!(max_abs_diff(&r.x, &closed) < 1e-8);
}

#[test]
fn runs_are_deterministic() {
    let problem = build_logreg(&logistic_toy(), 0.01, 2).unwrap();
    let metric = validate_for(&problem, Algorithm::Sipdfp, StepMetric::scalar(1.0, 0.3, 0.03)).unwrap();
    let opts = SolveOptions {
        max_iter: 500,
        timing: false,
        ..SolveOptions::default()
    };
    let s = suggest_schedule(0.3, 0.01).unwrap();
    let a = run(&problem, Algorithm::Sipdfp, &metric, &s, &opts).unwrap();
    let b = run(&problem, Algorithm::Sipdfp, &metric, &s, &opts).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.state, b.state);
}

#[test]
fn solver_never_beats_reference_by_more_than_tolerance() {
    let b = impulse_image();
    let problem = build_l1tv(&b, IMAGE_SIDE, IMAGE_SIDE, 0.5, true, PixelRange::default()).unwrap();
    let reference = ipdfp_core::oracle::reference_solve(
        &problem,
        &ipdfp_core::oracle::ReferenceOptions { budget: 200_000, primal_scale: 100.0 },
    )
    .unwrap();
    let metric = validate_for(&problem, Algorithm::Ipdfp, StepMetric::scalar(1.0, 0.2, 0.07)).unwrap();
    let opts = SolveOptions { max_iter: 100_000, tol: 1e-12, timing: false, ..SolveOptions::default() };
    let r = run(&problem, Algorithm::Ipdfp, &metric, &suggest_schedule(0.1, 0.01).unwrap(), &opts).unwrap();
    assert!(reference.objective <= r.final_objective + 1e-9 * r.final_objective.abs().max(1.0));
    assert!((r.final_objective - reference.objective).abs() <= 1e-6 * reference.objective);
}
