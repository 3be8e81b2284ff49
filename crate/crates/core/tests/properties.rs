//! Randomized invariants of the public API.

use koopeig::boundary::{optimal_boundary_from_targets, BoundaryMatrix, LMatrix, OutputPartition};
use koopeig::dynamics::{generate_dataset, GenerateOptions, InputPolicy, Sampler};
use koopeig::eigfun::propagate_values;
use koopeig::mpc::{AdmmSettings, QpSolver, WarmStart};
use koopeig::numerics::{jordan_exp, pinv_solve, JordanBlock};
use koopeig::predictor::{b_from_bd, bd_from_b};
use koopeig::spectrum::{optimize_eigenvalues, LambdaObjective, OptimizeOptions};
use koopeig::{CMat, Mat, VectorField, C64};
use proptest::prelude::*;

const TS: f64 = 0.1;

fn c64(range: std::ops::Range<f64>) -> impl Strategy<Value = C64> {
    (range.clone(), range).prop_map(|(re, im)| C64::new(re, im))
}

/// `k` eigenvalues with imaginary parts at least 0.5 apart, keeping the Vandermonde
/// blocks well conditioned.
fn spread_eigenvalues(k: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..0.3f64, -0.2..0.2f64), k).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (re, jitter))| C64::new(re, i as f64 - 1.0 + jitter))
            .collect()
    })
}

fn targets(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(-1.0..1.0f64, len)
        .prop_map(|v| v.into_iter().map(|x| C64::new(x, 0.0)).collect())
}

fn max_diff(a: &CMat, b: &CMat) -> f64 {
    a.sub(b).unwrap().max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jordan_exponential_is_a_semigroup(lam in c64(-1.0..0.5), size in 1usize..5, t1 in -2.0..2.0f64, t2 in -2.0..2.0f64) {
        let block = JordanBlock::new(lam, size).unwrap();
        let whole = jordan_exp(&block, t1 + t2).unwrap();
        let split = jordan_exp(&block, t1).unwrap().matmul(&jordan_exp(&block, t2).unwrap()).unwrap();
        prop_assert!(max_diff(&whole, &split) <= 1e-10 * whole.max_abs().max(1.0));
    }

    #[test]
    fn objective_is_the_monolithic_projection_residual(
        (lambdas, mt, ms, h) in (2usize..4, 1usize..4, 8usize..20)
            .prop_flat_map(|(k, mt, ms)| (spread_eigenvalues(k), Just(mt), Just(ms), targets(mt * (ms + 1))))
    ) {
        let obj = LambdaObjective::new(TS, mt, ms, h.clone()).unwrap();
        let l = LMatrix::new(&lambdas, mt, ms, TS).unwrap().to_dense();
        let hcol = CMat::col_vec(&h);
        let x = pinv_solve(&l, &hcol).unwrap();
        let residual = hcol.sub(&l.matmul(&x).unwrap()).unwrap().norm_fro().powi(2);
        let h2: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        let value = obj.value(&lambdas).unwrap();
        prop_assert!((value - residual).abs() <= 1e-8 * h2.max(1e-300), "{value} vs {residual}");
        let parts: f64 = obj.per_trajectory(&lambdas).unwrap().iter().sum();
        prop_assert!((parts - value).abs() <= 1e-9 * value.max(1e-12 * h2));
    }

    #[test]
    fn boundary_values_are_linear_in_targets(
        (lambdas, h1, h2) in spread_eigenvalues(3).prop_flat_map(|l| (Just(l), targets(2 * 16), targets(2 * 16))),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let (mt, ms) = (2, 15);
        let part = OutputPartition::new(vec![3]).unwrap();
        let solve = |h: &[C64]| optimal_boundary_from_targets(TS, mt, ms, &[h.to_vec()], &part, std::slice::from_ref(&lambdas), None).unwrap().g;
        let mix: Vec<C64> = h1.iter().zip(&h2).map(|(x, y)| x * a + y * b).collect();
        let lhs = solve(&mix);
        let rhs = solve(&h1).scale(C64::new(a, 0.0)).add(&solve(&h2).scale(C64::new(b, 0.0))).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-9 * rhs.max_abs().max(1.0));
    }

    #[test]
    fn propagated_values_obey_the_defining_relation(
        lambdas in spread_eigenvalues(4),
        g in prop::collection::vec(c64(-1.0..1.0), 4 * 3),
        ms in 1usize..60,
    ) {
        let bm = BoundaryMatrix {
            g: CMat::from_vec(4, 3, g).unwrap(),
            partition: OutputPartition::new(vec![4]).unwrap(),
            eigenvalues: lambdas,
        };
        let set = propagate_values(&bm, TS, ms).unwrap();
        prop_assert!(set.defining_property_ulps().unwrap() <= 10.0);
    }

    #[test]
    fn zoh_conversion_round_trips(
        mut lambdas in prop::collection::vec(c64(-3.0..1.0), 1..6),
        zero in any::<bool>(),
        m in 1usize..3,
        seed in prop::collection::vec(c64(-1.0..1.0), 12),
    ) {
        if zero {
            lambdas[0] = C64::new(0.0, 0.0);
        }
        let n = lambdas.len();
        let bd = CMat::from_fn(n, m, |i, j| seed[(i * m + j) % seed.len()]);
        let back = bd_from_b(&lambdas, &b_from_bd(&lambdas, &bd, TS).unwrap(), TS).unwrap();
        prop_assert!(max_diff(&back, &bd) <= 1e-10 * bd.max_abs().max(1.0));
    }

    #[test]
    fn dataset_generation_is_reproducible(seed in any::<u64>(), n_traj in 1usize..6) {
        let vf = VectorField::vanderpol();
        let sampler = Sampler::Disk { radius: 1.0 };
        let opts = GenerateOptions { n_traj, duration: 0.5, ts: 0.05, policy: InputPolicy::None, seed };
        let a = generate_dataset(&vf, &sampler, &opts).unwrap();
        let b = generate_dataset(&vf, &sampler, &opts).unwrap();
        prop_assert_eq!(a.samples().collect::<Vec<_>>(), b.samples().collect::<Vec<_>>());
    }
}

/// Positive definite `n × n` matrix `MᵀM + 0.1 I` and a constraint set feasible at `u0`.
fn qp_instance() -> impl Strategy<Value = (Mat, Vec<f64>, Mat, Vec<f64>)> {
    (2usize..5, 1usize..7).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0..1.0f64, n * n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, m * n),
            prop::collection::vec(-0.5..0.5f64, n),
            prop::collection::vec(0.0..0.5f64, m),
        )
            .prop_map(move |(mm, g, a, u0, slack)| {
                let mm = Mat::from_vec(n, n, mm).unwrap();
                let h = mm.transpose().matmul(&mm).add(&Mat::identity(n).scale(0.1));
                let a = Mat::from_vec(m, n, a).unwrap();
                let b = a
                    .mul_vec(&u0)
                    .iter()
                    .zip(&slack)
                    .map(|(x, s)| x + s)
                    .collect();
                (h, g, a, b)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qp_solutions_carry_a_kkt_certificate_and_ignore_warm_starts((h, g, a, b) in qp_instance()) {
        let mut solver = QpSolver::new(&h, &a, AdmmSettings::default()).unwrap();
        let cold = solver.solve(&g, &b, None).unwrap();
        prop_assert!(cold.converged);
        prop_assert!(cold.kkt.stationarity <= 1e-5, "{:?}", cold.kkt);
        prop_assert!(cold.kkt.primal <= 1e-6, "{:?}", cold.kkt);
        prop_assert!(cold.kkt.complementarity <= 1e-6, "{:?}", cold.kkt);
        let shifted: Vec<f64> = cold.u.iter().map(|v| v + 0.3).collect();
        let warm = solver.solve(&g, &b, Some(&WarmStart { u: shifted, y: None })).unwrap();
        let gap = cold.u.iter().zip(&warm.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(gap <= 1e-5, "cold {:?} warm {:?}", cold.u, warm.u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimization_never_increases_the_objective(seed in any::<u64>(), re in -0.5..0.0f64, im in 0.3..1.5f64) {
        let vf = VectorField::duffing();
        let ds = generate_dataset(&vf, &Sampler::Circle { radius: 1.0 }, &GenerateOptions { n_traj: 4, duration: 2.0, ts: 0.05, policy: InputPolicy::None, seed }).unwrap();
        let obj = LambdaObjective::state_component(&ds, 0).unwrap();
        let init = [C64::new(re, im), C64::new(re, -im), C64::new(2.0 * re, 0.0)];
        let opts = OptimizeOptions { restarts: 1, max_iter: 30, seed, ..Default::default() };
        let r = optimize_eigenvalues(&obj, &init, &opts).unwrap();
        prop_assert!(r.objective <= r.initial_objective);
        prop_assert!((obj.value(&r.lambdas).unwrap() - r.objective).abs() <= 1e-9 * r.initial_objective.max(1e-300));
    }
}
