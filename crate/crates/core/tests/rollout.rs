use lawbound::ensemble::Ensemble;
use lawbound::euler::{self, EulerConfig};
use lawbound::fields::{self, Grid, GridField};
use lawbound::rollout::*;
use lawbound::sampler::{self, KernelKind, KernelSpec};
use lawbound::transport;
use proptest::prelude::*;

fn recursion(delta0: f64, l: &[f64], eps: &[f64]) -> Vec<f64> {
    let mut d = vec![delta0];
    for n in 0..l.len() {
        let next = l[n] * d[n] + eps[n];
        d.push(next);
    }
    d
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn closed_form_equals_recursion(
        delta0 in 0.0..10.0f64,
        l in prop::collection::vec(0.0..3.0f64, 10),
        eps in prop::collection::vec(0.0..1.0f64, 10),
    ) {
        let c = gronwall_closed_form(delta0, &l, &eps).unwrap();
        let r = recursion(delta0, &l, &eps);
        for (x, y) in c.iter().zip(&r) {
            prop_assert!(rel(*x, *y) <= 1e-12);
        }
    }

    #[test]
    fn exponential_bound_is_the_recursion_with_exp_coefficients(
        delta0 in 0.0..10.0f64,
        alpha in prop::collection::vec(-1.0..1.0f64, 1..12),
        e in 0.0..1.0f64,
    ) {
        let eps = vec![e; alpha.len()];
        let l: Vec<f64> = alpha.iter().map(|a| a.exp()).collect();
        let b = rollout_bound(delta0, &alpha, &eps).unwrap();
        let r = recursion(delta0, &l, &eps);
        for (x, y) in b.iter().zip(&r) {
            prop_assert!(rel(*x, *y) <= 1e-12);
        }
    }

    #[test]
    fn constant_inputs_match_geometric_sum(
        delta0 in 0.0..10.0f64, a in -0.5..0.5f64, e in 0.0..1.0f64, n in 1usize..20,
    ) {
        let g = rollout_bound(delta0, &vec![a; n], &vec![e; n]).unwrap();
        let c = constant_coefficient_bound(delta0, a, e, n);
        prop_assert!(rel(g[n], c) <= 1e-12);
    }

    #[test]
    fn bound_is_monotone_in_each_input(
        delta0 in 0.0..5.0f64,
        alpha in prop::collection::vec(0.0..0.5f64, 6),
        eps in prop::collection::vec(0.0..0.5f64, 6),
        j in 0usize..6, bump in 1e-6..0.1f64,
    ) {
        let base = rollout_bound(delta0, &alpha, &eps).unwrap()[6];
        let mut a2 = alpha.clone();
        a2[j] += bump;
        let mut e2 = eps.clone();
        e2[j] += bump;
        prop_assert!(rollout_bound(delta0, &a2, &eps).unwrap()[6] >= base);
        prop_assert!(rollout_bound(delta0, &alpha, &e2).unwrap()[6] >= base);
    }
}

#[test]
fn zero_defects_give_pure_products() {
    let l = [1.5, 0.5, 2.0];
    let c = gronwall_closed_form(3.0, &l, &[0.0; 3]).unwrap();
    assert_eq!(c[3], 3.0 * 1.5 * 0.5 * 2.0);
}

#[test]
fn constant_case_with_zero_exponent_is_exact() {
    let g = rollout_bound(0.3, &[0.0; 7], &[0.125; 7]).unwrap();
    assert_eq!(g[7], 0.3 + 7.0 * 0.125);
    assert_eq!(constant_coefficient_bound(0.3, 0.0, 0.125, 7), 0.3 + 7.0 * 0.125);
}

fn setup(n: usize, members: usize, kind: KernelKind, noise: f64) -> (Ensemble, Ensemble, RolloutConfig) {
    let g = Grid::new(2, n).unwrap();
    let a =
        Ensemble::new((0..members as u64).map(|i| fields::random_divfree(g, 3.0, 4, i).unwrap()).collect()).unwrap();
    let b = Ensemble::new((0..members as u64).map(|i| fields::random_divfree(g, 3.0, 4, 50 + i).unwrap()).collect())
        .unwrap();
    let model = KernelSpec {
        kind,
        internal_steps: 2,
        noise_scale: noise,
        noise_k_max: 4,
        step_dt: 0.05,
        euler: EulerConfig::new(g, 0.01),
    };
    (a, b, RolloutConfig { model, steps: 3, checkpoints: 8, coverage_k: None })
}

#[test]
fn exact_model_from_same_law_stays_at_zero() {
    let (a, _, cfg) = setup(16, 4, KernelKind::DeterministicMap, 0.0);
    let r = run_rollout_experiment(&a, &a, &cfg, 1).unwrap();
    assert!(r.satisfied());
    for row in &r.ledger.rows {
        assert!(row.delta < 1e-12 && row.eps < 1e-12);
    }
}

#[test]
fn exact_model_uses_only_the_stability_route() {
    let (a, b, cfg) = setup(16, 4, KernelKind::DeterministicMap, 0.0);
    let r = run_rollout_experiment(&a, &b, &cfg, 1).unwrap();
    assert!(r.satisfied());
    let alpha: f64 = r.ledger.rows.iter().map(|x| x.alpha).sum();
    let last = r.ledger.rows.last().unwrap();
    assert!(r.max_eps < 1e-10);
    assert!(last.delta <= (alpha.exp() * r.ledger.rows[0].delta) * (1.0 + ROLLOUT_TOL));
}

#[test]
fn measured_defect_is_the_one_step_defect() {
    let kind = KernelKind::PerturbedReference { bias: 0.05, shift: [1, 0] };
    let (a, b, mut cfg) = setup(16, 5, kind, 0.05);
    cfg.steps = 1;
    let r = run_rollout_experiment(&a, &b, &cfg, 9).unwrap();
    let spec = cfg.model.clone();
    let eta = transport::one_step_defect(
        &b,
        |u| euler::evolve(u, &spec.euler, spec.step_dt).unwrap(),
        |u, s| sampler::sample_step(u, &spec, s).unwrap().output,
        step_seed(9, 0),
    )
    .unwrap();
    assert!(rel(r.ledger.rows[1].eps, eta) <= 1e-12, "{} vs {eta}", r.ledger.rows[1].eps);
}

#[test]
fn ledger_is_consistent() {
    let kind = KernelKind::PerturbedReference { bias: 0.02, shift: [1, 0] };
    let (a, b, mut cfg) = setup(16, 4, kind, 0.02);
    cfg.coverage_k = Some(3);
    let r = run_rollout_experiment(&a, &b, &cfg, 4).unwrap();
    assert_eq!(r.ledger.rows.len(), cfg.steps + 1);
    for row in &r.ledger.rows {
        assert!([row.alpha, row.eps, row.delta, row.bound].iter().all(|x| x.is_finite() && *x >= 0.0));
    }
    for row in &r.ledger.rows[1..] {
        assert!(row.eps <= row.eps_coverage.unwrap() + 1e-9);
    }
    let csv = r.ledger.to_csv();
    assert!(csv.starts_with("n,alpha,eps,delta,bound\n"));
    assert_eq!(csv.lines().count(), cfg.steps + 2);
}

#[test]
fn cfl_guard_is_reported() {
    let (a, b, mut cfg) = setup(16, 3, KernelKind::DeterministicMap, 0.0);
    let big = a.map(|u| u.scaled(1e4));
    cfg.model.euler.dt = 0.05;
    let r = run_rollout_experiment(&big, &b.map(|u: &GridField| u.scaled(1e4)), &cfg, 0).unwrap();
    assert!(r.guard.is_some());
    assert!(!r.satisfied());
    assert_eq!(r.steps_completed, 0);
}
