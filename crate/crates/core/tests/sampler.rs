use lawbound::ensemble::Ensemble;
use lawbound::euler::{self, EulerConfig};
use lawbound::fields::{self, Grid, GridField};
use lawbound::sampler::*;

fn grid() -> Grid {
    Grid::new(2, 32).unwrap()
}

fn base(g: Grid, n: usize) -> Ensemble {
    Ensemble::new((0..n as u64).map(|i| fields::random_divfree(g, 3.0, 4, i).unwrap()).collect()).unwrap()
}

fn spec(g: Grid, kind: KernelKind, internal_steps: usize, noise: f64) -> KernelSpec {
    KernelSpec {
        kind,
        internal_steps,
        noise_scale: noise,
        noise_k_max: 4,
        step_dt: 0.05,
        euler: EulerConfig::new(g, 0.01),
    }
}

fn curved(g: Grid) -> KernelSpec {
    spec(g, KernelKind::RectifiedFlow { perturbation: 2.0, shift: [3, 1] }, 128, 0.3)
}

fn uniform(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

fn observables(g: Grid) -> Vec<Cylindrical> {
    let t: Vec<GridField> = (0..2).map(|i| fields::random_divfree(g, 0.0, 3, 900 + i).unwrap()).collect();
    vec![
        Cylindrical { tests: t.clone(), profile: Profile::Linear(vec![1.0, -0.5]) },
        Cylindrical { tests: t, profile: Profile::Product },
    ]
}

#[test]
fn continuity_residual_is_second_order_in_dtau() {
    let g = grid();
    let e = base(g, 4);
    let s = curved(g);
    for phi in observables(g) {
        let coarse = continuity_equation_check(&e, &s, &phi, &uniform(16), 5).unwrap();
        let fine = continuity_equation_check(&e, &s, &phi, &uniform(32), 5).unwrap();
        let ratio = coarse.residual / fine.residual;
        assert!((3.5..=4.5).contains(&ratio), "{:?}: {ratio} ({coarse:?} {fine:?})", phi.profile);
    }
}

#[test]
fn mixture_interpolation_ends_at_the_kernel_draws() {
    let g = grid();
    let e = base(g, 4);
    let s = curved(g);
    let curve = mixture_interpolation(&e, &s, &uniform(16), 5).unwrap();
    assert_eq!(curve.times().len(), 17);
    let last = &curve.ensembles()[16];
    for (i, u) in e.members().iter().enumerate() {
        let draw = sample_step(u, &s, lawbound::stream::stream_seed(5, i as u64, 0)).unwrap();
        assert!(last.members()[i].dist(&draw.output) <= 1e-12 * draw.output.norm());
    }
}

#[test]
fn deterministic_map_path_is_the_reference_trajectory() {
    let g = grid();
    let s = spec(g, KernelKind::DeterministicMap, 8, 0.0);
    let u = fields::random_divfree(g, 3.0, 4, 1).unwrap();
    let out = sample_step(&u, &s, 0).unwrap();
    let reference = euler::evolve(&u, &s.euler, s.step_dt).unwrap();
    assert!(out.output.dist(&reference) <= 1e-12 * reference.norm());
    assert_eq!(out.path.len(), out.taus.len());
    assert_eq!(out.path[0], u);
}

#[test]
fn straight_flow_is_resolution_independent() {
    let g = grid();
    let u = fields::random_divfree(g, 3.0, 4, 1).unwrap();
    let kind = KernelKind::RectifiedFlow { perturbation: 0.0, shift: [1, 0] };
    let a = sample_step(&u, &spec(g, kind.clone(), 1, 0.0), 3).unwrap().output;
    let b = sample_step(&u, &spec(g, kind, 64, 0.0), 3).unwrap().output;
    assert!(a.dist(&b) <= 1e-10 * a.norm());
}

#[test]
fn rollout_paths_are_continuous_and_regular() {
    let g = grid();
    let e = base(g, 4);
    let s = spec(g, KernelKind::PerturbedReference { bias: 0.05, shift: [1, 0] }, 8, 0.05);
    let (bundle, laws) = rollout_paths(&e, &s, 3, 11).unwrap();
    assert_eq!(laws.len(), 4);
    assert_eq!(bundle.steps(), 3);
    assert!(bundle.junction_continuity());
    let r = time_regularity_report(&bundle, 200, 1).unwrap();
    assert!(r.increment_satisfied && r.chain_satisfied, "{r:?}");
    assert!(r.c_spd <= (r.c_ch + r.c_str.sqrt()) * (1.0 + REGULARITY_TOL));
    let h = holder_from_action_check(&bundle, 2.0).unwrap();
    assert!(h.satisfied, "{h:?}");
    let (again, _) = rollout_paths(&e, &s, 3, 11).unwrap();
    assert_eq!(again.path(2), bundle.path(2));
}

#[test]
fn curved_paths_are_regular() {
    let g = grid();
    let e = base(g, 3);
    let s = spec(g, KernelKind::RectifiedFlow { perturbation: 2.0, shift: [3, 1] }, 16, 0.0);
    let (bundle, _) = rollout_paths(&e, &s, 2, 4).unwrap();
    let r = time_regularity_report(&bundle, 200, 2).unwrap();
    assert!(r.increment_satisfied && r.chain_satisfied, "{r:?}");
    assert!(holder_from_action_check(&bundle, 2.0).unwrap().satisfied);
    let noisy = spec(g, KernelKind::RectifiedFlow { perturbation: 2.0, shift: [3, 1] }, 16, 0.3);
    let (bundle, _) = rollout_paths(&e, &noisy, 2, 4).unwrap();
    assert!(!bundle.junction_continuity());
    assert!(time_regularity_report(&bundle, 10, 2).is_err());
}

#[test]
fn pf_ode_kernel_runs() {
    let g = grid();
    let s = spec(g, KernelKind::PfOde { data_scale: 0.1, sigma: 2.0 }, 32, 0.0);
    let u = fields::random_divfree(g, 3.0, 4, 1).unwrap();
    let a = sample_step(&u, &s, 9).unwrap();
    let b = sample_step(&u, &s, 9).unwrap();
    assert_eq!(a.output, b.output);
    assert!(a.output.is_finite());
    assert!(!s.starts_at_input());
}

#[test]
fn invalid_specs_are_rejected() {
    let g = grid();
    let mut s = spec(g, KernelKind::DeterministicMap, 0, 0.0);
    assert!(s.validate().is_err());
    s.internal_steps = 4;
    s.step_dt = 0.0;
    assert!(s.validate().is_err());
    let json = r#"{"kind":{"kind":"deterministic-map"},"internal_steps":4,"noise_k_max":2,"step_dt":0.1,
        "euler":{"grid":{"d":2,"n":16},"dt":0.01,"k_init":4},"surprise":1}"#;
    assert!(serde_json::from_str::<KernelSpec>(json).is_err());
}
