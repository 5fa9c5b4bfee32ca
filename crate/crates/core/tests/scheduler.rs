mod common;

use adelfl::cost::{theorem1_bound, AnalysisParams, LrSchedule, TRUNCATION_MARGIN};
use adelfl::gamma::regularized_upper_gamma;
use adelfl::rng::{stream, Domain};
use adelfl::scheduler::{
    numeric_gradient, optimize_schedule, Parameterization, ScheduleSearchSpec,
};
use adelfl::system::{ClientProfile, Schedule};
use common::random_spec;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn clients() -> Vec<ClientProfile> {
    vec![
        ClientProfile::new(0, 30.0, 0.4, 1.5).unwrap(),
        ClientProfile::new(1, 12.0, 0.9, 0.8).unwrap(),
        ClientProfile::new(2, 45.0, 0.1, 2.0).unwrap(),
        ClientProfile::new(3, 8.0, 0.6, 1.0).unwrap(),
    ]
}

fn params(layers: usize) -> AnalysisParams {
    AnalysisParams {
        rho_c: 0.4,
        rho_s: 1.0,
        grad_bound_sq: 0.2,
        het_gap: 0.05,
        delta_1: 5.0,
        lr: LrSchedule::InverseDecay { eta0: 0.4 },
        num_layers: layers,
        num_users: 4,
    }
}

#[test]
fn parameterization_is_feasible_on_random_inputs() {
    let mut draws = 0;
    for k in 0..40 {
        let problem = random_spec(k);
        let p = Parameterization::new(&problem.spec, &problem.clients, &problem.params).unwrap();
        let mut rng = stream(k, Domain::Verify, 901, 0);
        for _ in 0..250 {
            let g: Vec<f64> = (0..p.dim())
                .map(|_| 8.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let s = p.schedule(&g);
            s.validate(problem.spec.t_max, &problem.clients).unwrap();
            assert!(s.total_time() <= problem.spec.t_max * (1.0 + 1e-9));
            let last = *s.deadlines.last().unwrap();
            let q = regularized_upper_gamma(problem.params.num_layers as u32, last / s.batch_scale)
                .unwrap()
                .powi(problem.clients.len() as u32)
                .value();
            assert!(5.0 * q <= 1.0 - TRUNCATION_MARGIN);
            draws += 1;
        }
    }
    assert_eq!(draws, 10_000);
}

proptest! {
    #[test]
    fn numeric_gradient_matches_analytic(
        x in prop::collection::vec(-3.0f64..3.0, 1..6),
        a in prop::collection::vec(0.2f64..2.0, 6),
    ) {
        // f(x) = Σ sin(a_i x_i) + ½ (Σ x_i)² + exp(x_0 / 4)
        let f = |p: &[f64]| {
            let s: f64 = p.iter().sum();
            p.iter().zip(&a).map(|(v, ai)| (ai * v).sin()).sum::<f64>() + 0.5 * s * s + (p[0] / 4.0).exp()
        };
        let s: f64 = x.iter().sum();
        let exact: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| a[i] * (a[i] * v).cos() + s + if i == 0 { (x[0] / 4.0).exp() / 4.0 } else { 0.0 })
            .collect();
        let g = numeric_gradient(f, &x, 1e-5).unwrap();
        for (gi, ei) in g.iter().zip(&exact) {
            prop_assert!((gi - ei).abs() <= 1e-6, "{gi} vs {ei}");
        }
    }
}

#[test]
fn numeric_gradient_on_exact_cases() {
    let g = numeric_gradient(|p| 0.5 * (p[0] * p[0] + p[1] * p[1]), &[1.0, 2.0], 1e-5).unwrap();
    assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    let g = numeric_gradient(|_| 3.5, &[0.3, -7.0, 2.0], 1e-5).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn single_round_uses_whole_budget_and_grid_optimal_m() {
    let cs = clients();
    let p = params(3);
    let t_max = 20.0;
    let spec = ScheduleSearchSpec::new(t_max, 1);
    let sol = optimize_schedule(&spec, &cs, &p, 3).unwrap();
    assert!((sol.schedule.deadlines[0] - t_max).abs() <= 1e-6 * t_max);

    let param = Parameterization::new(&spec, &cs, &p).unwrap();
    let (lo, hi) = param.m_range(t_max);
    let n = 10_000;
    let best = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .filter_map(|m| theorem1_bound(&Schedule { deadlines: vec![t_max], batch_scale: m }, &cs, &p).ok())
        .fold(f64::INFINITY, f64::min);
    assert!(sol.cost <= best * 1.01, "solver {} vs grid {}", sol.cost, best);
}

#[test]
fn delta_only_objective_is_pure_contraction() {
    let cs: Vec<ClientProfile> = clients()
        .into_iter()
        .map(|c| ClientProfile::new(c.id, c.compute_rate, c.comm_time, 0.0).unwrap())
        .collect();
    let mut p = params(3);
    p.grad_bound_sq = 0.0;
    p.het_gap = 0.0;
    let spec = ScheduleSearchSpec::new(40.0, 5);
    let sol = optimize_schedule(&spec, &cs, &p, 1).unwrap();
    sol.schedule.validate(40.0, &cs).unwrap();
    let expected: f64 = (1..=5).map(|t| 1.0 - p.lr.eta(t) * p.rho_c).product::<f64>() * p.delta_1;
    assert!((sol.cost - expected).abs() <= 1e-12 * expected);
}

#[test]
fn restarts_are_deterministic() {
    let problem = random_spec(3);
    let a = optimize_schedule(&problem.spec, &problem.clients, &problem.params, 42).unwrap();
    let b = optimize_schedule(&problem.spec, &problem.clients, &problem.params, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn optimized_schedules_dominate_and_stay_feasible() {
    for k in 0..6 {
        let problem = random_spec(100 + k);
        let sol = optimize_schedule(&problem.spec, &problem.clients, &problem.params, k).unwrap();
        sol.schedule.validate(problem.spec.t_max, &problem.clients).unwrap();
        assert!(sol.cost <= sol.baseline_cost + 1e-9);
        assert!(sol.diagnostics.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((sol.schedule.total_time() - problem.spec.t_max).abs() <= 1e-9 * problem.spec.t_max
            || sol.schedule.total_time() < problem.spec.t_max);
    }
}

#[test]
fn inverse_decay_gives_front_loaded_deadlines() {
    let cs = clients();
    let spec = ScheduleSearchSpec::new(60.0, 8);
    let sol = optimize_schedule(&spec, &cs, &params(3), 0).unwrap();
    let d = &sol.schedule.deadlines;
    assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(d[0] >= 60.0 / 8.0 - 1e-9);
}
