use gama::generalized::{solve_box, solve_linear_penalty, BoundSpec, LinearMapPair};
use gama::io::{parse_dense, write_dense};
use gama::matrix::{cholesky, extreme_eigenvalues, max_abs, SymMatrix};
use gama::portfolio::{backtest, GamaEstimator, LambdaRule, RebalancePlan};
use gama::problem::{generate_synthetic, sample_covariance, sample_gaussian, Divisor};
use gama::solver::{duality_gap, kkt_residual};
use gama::{solve, InitStrategy, SolverConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn cov(p: usize, n: usize, seed: u64) -> SymMatrix {
    let prob = generate_synthetic(p, 25.0, seed).unwrap();
    sample_covariance(&sample_gaussian(&prob, n, seed).unwrap(), Divisor::N).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solution_is_certified(p in 2usize..9, n in 3usize..30, seed in 0u64..1000, lambda in 0.02f64..0.8) {
        let s = cov(p, n, seed);
        let r = solve(&s, &SolverConfig::new(lambda)).unwrap();
        prop_assert!(r.converged);
        prop_assert!(max_abs(&r.y_star.sub(&s)) <= lambda + 1e-12);
        prop_assert!(cholesky(&r.z_star).is_ok());
        let gap = duality_gap(&r.y_star, &r.z_star, &s, lambda).unwrap();
        prop_assert!((-1e-10..=1e-8).contains(&gap));
        prop_assert!(r.trace.iter().all(|t| t.tau > 0.0));
    }

    #[test]
    fn tight_solution_meets_kkt(p in 2usize..7, seed in 0u64..1000, lambda in 0.05f64..0.5) {
        let s = cov(p, 3 * p, seed);
        let r = solve(&s, &SolverConfig::new(lambda).with_eps_opt(1e-13)).unwrap();
        let inv = cholesky(&r.z_star).unwrap().inverse();
        prop_assert!(kkt_residual(&r.z_star, &inv, &s, lambda) <= 1e-5);
    }

    #[test]
    fn init_strategies_agree(p in 2usize..7, seed in 0u64..1000, lambda in 0.05f64..0.5) {
        let s = cov(p, 2 * p, seed);
        let a = solve(&s, &SolverConfig::new(lambda).with_eps_opt(1e-13)).unwrap();
        let b = solve(&s, &SolverConfig::new(lambda).with_eps_opt(1e-13).with_init(InitStrategy::DiagSPlusLambdaI)).unwrap();
        prop_assert!(max_abs(&a.y_star.sub(&b.y_star)) <= 1e-5);
    }

    #[test]
    fn box_solution_respects_bounds(p in 2usize..7, seed in 0u64..1000, width in 0.05f64..0.6) {
        let s = cov(p, 4 * p, seed);
        let lower = s.map(|v| v - width);
        let upper = s.map(|v| v + 0.5 * width);
        let bounds = BoundSpec::new(lower.clone(), upper.clone()).unwrap();
        let r = solve_box(&bounds, &SolverConfig::new(0.0)).unwrap();
        prop_assert!(r.converged);
        for i in 0..p {
            for j in 0..p {
                prop_assert!(r.y_star[(i, j)] >= lower[(i, j)] - 1e-12);
                prop_assert!(r.y_star[(i, j)] <= upper[(i, j)] + 1e-12);
            }
        }
        prop_assert!(extreme_eigenvalues(&r.y_star).0 > 0.0);
    }

    #[test]
    fn linear_penalty_dual_stays_feasible(p in 2usize..6, q in 1usize..4, seed in 0u64..1000, lambda in 0.01f64..1.0) {
        let s = cov(p, 3 * p, seed);
        let a = DMatrix::from_fn(p, q, |i, j| ((i + 2 * j + seed as usize) % 5) as f64 / 4.0 - 0.5);
        let b = DMatrix::from_fn(p, q, |i, j| ((3 * i + j) % 4) as f64 / 3.0 - 0.5);
        let maps = LinearMapPair::new(a, b).unwrap();
        let r = solve_linear_penalty(&s, &maps, lambda, &SolverConfig::new(lambda)).unwrap();
        prop_assert!(r.y_star.iter().all(|v| v.abs() <= lambda + 1e-12));
        prop_assert!(cholesky(&r.x_star).is_ok());
        prop_assert!(r.gap >= -1e-9);
    }

    #[test]
    fn dense_csv_round_trips(rows in 1usize..6, cols in 1usize..6, vals in proptest::collection::vec(-1e20f64..1e20, 36)) {
        let m = DMatrix::from_fn(rows, cols, |i, j| vals[i * 6 + j] * 10f64.powi((i as i32 - j as i32) * 7));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_dense(&path, &m).unwrap();
        let back = parse_dense(&std::fs::read_to_string(&path).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn generator_meets_contract(p in 2usize..40, sp in 1f64..60.0, seed in 0u64..10_000) {
        let prob = generate_synthetic(p, sp, seed).unwrap();
        prop_assert!((extreme_eigenvalues(&prob.omega).0 - 1.0).abs() <= 1e-8);
        let again = generate_synthetic(p, sp, seed).unwrap();
        prop_assert_eq!(prob.omega, again.omega);
    }
}

fn market(p: usize, rows: usize, seed: u64) -> DMatrix<f64> {
    let prob = generate_synthetic(p, 20.0, seed).unwrap();
    sample_gaussian(&prob, rows, seed).unwrap().map(|v| 0.001 + 0.01 * v)
}

#[test]
fn higher_costs_never_raise_wealth() {
    let (p, n_estim, l, k) = (5, 40, 8, 5);
    let returns = market(p, n_estim + k * l, 3);
    let est = GamaEstimator { config: SolverConfig::new(0.0).with_eps_opt(1e-10) };
    let mut last = f64::INFINITY;
    for eta in [0.0, 0.001, 0.01, 0.05] {
        let plan = RebalancePlan {
            costs: vec![eta; p],
            ..RebalancePlan::new(n_estim, l, k, p, LambdaRule::SpectralFraction(0.1))
        };
        let w = *backtest(&returns, &plan, &est).unwrap().wealth_curve.last().unwrap();
        assert!(w <= last, "wealth {w} rose above {last} at cost {eta}");
        last = w;
    }
}

#[test]
fn metrics_match_direct_computation() {
    let (p, n_estim, l, k) = (4, 30, 6, 4);
    let returns = market(p, n_estim + k * l, 11);
    let est = GamaEstimator { config: SolverConfig::new(0.0).with_eps_opt(1e-10) };
    let plan = RebalancePlan {
        risk_free: 0.0005,
        ..RebalancePlan::new(n_estim, l, k, p, LambdaRule::Fixed(0.01))
    };
    let rep = backtest(&returns, &plan, &est).unwrap();

    let mut rets = Vec::new();
    for (j, w) in rep.weights_per_block.iter().enumerate() {
        for t in 0..l {
            let row = n_estim + j * l + t;
            rets.push((0..p).map(|i| returns[(row, i)] * w[i]).sum::<f64>());
        }
    }
    let mean = rets.iter().sum::<f64>() / rets.len() as f64;
    let var = rets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rets.len() as f64;
    assert!((rep.realized_return - mean).abs() <= 1e-15);
    assert!((rep.realized_risk - var.sqrt()).abs() <= 1e-12);
    assert!((rep.sharpe - (mean - 0.0005) / var.sqrt()).abs() <= 1e-9);

    let mut wealth = 1.0;
    for r in &rets {
        wealth *= 1.0 + r;
    }
    assert!((rep.wealth_curve.last().unwrap() - wealth).abs() <= 1e-12);
    assert_eq!(rep.wealth_curve.len(), k * l + 1);
}

#[test]
fn large_penalty_gives_inverse_variance_weights() {
    let (p, n_estim, l, k) = (4, 50, 5, 2);
    let returns = market(p, n_estim + k * l, 5);
    let est = GamaEstimator { config: SolverConfig::new(0.0).with_eps_opt(1e-13) };
    let rep = backtest(&returns, &RebalancePlan::new(n_estim, l, k, p, LambdaRule::Fixed(10.0)), &est).unwrap();
    for (j, w) in rep.weights_per_block.iter().enumerate() {
        let window = returns.rows(j * l, n_estim).into_owned();
        let s = sample_covariance(&window, Divisor::N).unwrap();
        let inv: Vec<f64> = (0..p).map(|i| 1.0 / (s[(i, i)] + 10.0)).collect();
        let total: f64 = inv.iter().sum();
        for i in 0..p {
            assert!((w[i] - inv[i] / total).abs() <= 1e-10, "block {j}, asset {i}");
        }
    }
}
