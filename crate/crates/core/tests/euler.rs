use lawbound::ensemble::Ensemble;
use lawbound::euler::*;
use lawbound::fields::{self, Grid, GridField};
use lawbound::transport;
use proptest::prelude::*;

fn smooth(g: Grid, k: usize, amp: f64, seed: u64) -> GridField {
    fields::random_divfree(g, 3.0, k, seed).unwrap().scaled(amp)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn taylor_green_is_steady() {
    let g = Grid::new(2, 32).unwrap();
    let u0 = taylor_green(g);
    let u1 = evolve(&u0, &EulerConfig::new(g, 0.01), 1.0).unwrap();
    assert!(u1.dist(&u0) <= 1e-6 * u0.norm());
    assert!(drift(&u0).unwrap().norm() <= 1e-10 * u0.norm());
}

#[test]
fn conservation_and_divergence_over_half_unit() {
    let g = Grid::new(2, 64).unwrap();
    let cfg = EulerConfig::new(g, 0.005);
    for seed in 0..3 {
        let u0 = smooth(g, 8, 1.0, seed);
        let times: Vec<f64> = (0..=5).map(|i| 0.1 * i as f64).collect();
        let traj = evolve_checkpoints(&u0, &cfg, &times).unwrap();
        let log = conservation_log(&times, &traj).unwrap();
        for row in &log {
            assert!(rel(row.energy, log[0].energy) <= 1e-6, "{row:?}");
            assert!(rel(row.enstrophy, log[0].enstrophy) <= 1e-6, "{row:?}");
            assert!(row.divergence <= 1e-8);
        }
        let csv = conservation_csv(&log);
        assert!(csv.starts_with("t,energy,enstrophy,divergence\n"));
    }
}

#[test]
fn identity_decays_under_refinement() {
    let g = Grid::new(2, 32).unwrap();
    let v0 = taylor_green(g);
    let mut u0 = v0.clone();
    u0.add_scaled(1e-2, &smooth(g, 4, 1.0, 3).scaled(1.0 / smooth(g, 4, 1.0, 3).norm() * v0.norm()));
    let r = identity_refinement(&u0, &v0, &EulerConfig::new(g, 0.05), 0.5, 3).unwrap();
    assert!(r.satisfied, "{r:?}");
    assert!(r.residuals.iter().all(|x| *x <= IDENTITY_FLOOR.max(r.c * 0.05 * 0.05)));
}

#[test]
fn identity_is_trivial_for_equal_data() {
    let g = Grid::new(2, 16).unwrap();
    let u = smooth(g, 3, 1.0, 1);
    let r = l2_difference_identity_check(&u, &u, &EulerConfig::new(g, 0.01), 0.1).unwrap();
    assert_eq!(r.residual, 0.0);
}

#[test]
fn antisymmetric_part_drops_out() {
    let g = Grid::new(2, 32).unwrap();
    for seed in 0..5 {
        let w = smooth(g, 8, 1.0, seed);
        let v = smooth(g, 8, 1.0, seed + 50);
        let a = strain_pairing(&w, &v);
        let b = gradient_pairing(&w, &v);
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        assert!(strain(&v).trace_sup() <= 1e-8);
    }
}

#[test]
fn lambda_conventions() {
    let g = Grid::new(2, 16).unwrap();
    let u = smooth(g, 3, 1.0, 1);
    let zero = GridField::zeros(g, 2);
    assert_eq!(lambda_pointwise(&u, &u), 0.0);
    assert_eq!(lambda_pointwise(&u, &zero), 0.0);
    let v = smooth(g, 3, 1.0, 2);
    let l = lambda_pointwise(&u, &v);
    assert!(l >= 0.0 && l <= max_strain(&v) * (1.0 + 1e-12));
}

#[test]
fn strain_bound_holds_on_small_ensembles() {
    let g = Grid::new(2, 32).unwrap();
    let cfg = EulerConfig::new(g, 0.01);
    for seed in 0..3 {
        let a = Ensemble::new((0..6).map(|i| smooth(g, 6, 1.0, seed * 100 + i)).collect()).unwrap();
        let b = a.map(|u| {
            let mut v = u.clone();
            v.add_scaled(0.05, &fields::increment(u, &[1, 0]));
            v
        });
        let r = w2_strain_bound_check(&a, &b, &cfg, 0.25, 8).unwrap();
        assert!(r.satisfied(), "{r:?}");
        assert!(r.lambda_below_max_strain && r.pointwise_satisfied);
        assert!(r.integral_lambda <= r.integral_max_strain * (1.0 + 1e-12));
    }
    let a = Ensemble::new((0..3).map(|i| smooth(g, 6, 1.0, i)).collect()).unwrap();
    let same = w2_strain_bound_check(&a, &a, &cfg, 0.25, 8).unwrap();
    assert!(same.w2_t < 1e-12 && same.satisfied());
}

#[test]
fn coupled_lambda_matches_pairwise_average() {
    let g = Grid::new(2, 16).unwrap();
    let a = Ensemble::new((0..4).map(|i| smooth(g, 4, 1.0, i)).collect()).unwrap();
    let b = Ensemble::new((0..4).map(|i| smooth(g, 4, 1.0, 10 + i)).collect()).unwrap();
    let (_, plan) = transport::wasserstein_exact(&a, &b, 2).unwrap();
    let perm = plan.permutation().unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        let (n, d) = strain_weighted(&a.members()[i], &b.members()[j]);
        num += n;
        den += d;
    }
    assert!(rel(lambda_coupled(&plan, &a, &b).unwrap(), num / den) < 1e-12);
}

#[test]
fn cfl_violation_is_an_error() {
    let g = Grid::new(2, 16).unwrap();
    let u = smooth(g, 3, 1e3, 1);
    assert!(evolve(&u, &EulerConfig::new(g, 0.1), 0.2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_is_deterministic_and_divergence_free(seed in 0u64..1000) {
        let g = Grid::new(2, 16).unwrap();
        let cfg = EulerConfig::new(g, 0.01);
        let u = smooth(g, 4, 1.0, seed);
        let a = evolve(&u, &cfg, 0.1).unwrap();
        let b = evolve(&u, &cfg, 0.1).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(fields::divergence_sup(&a).unwrap() <= 1e-8);
    }
}
