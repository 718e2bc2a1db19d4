use lawbound::ensemble::{Ensemble, LawCurve};
use lawbound::euler::{self, EulerConfig};
use lawbound::fields::{self, Grid, GridField};
use lawbound::scores::*;
use lawbound::transport;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(rng: &mut ChaCha8Rng, n: usize, loc: f64, scale: f64) -> Vec<f64> {
    (0..n).map(|_| loc + scale * rng.random_range(-1.0..1.0f64).powi(3)).collect()
}

/// CRPS through the integrated squared CDF difference, an independent route.
fn crps_cdf(p: &[f64], q: &[f64]) -> f64 {
    let mut pts: Vec<f64> = p.iter().chain(q).cloned().collect();
    pts.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    pts.windows(2).map(|w| (cdf(p, w[0]) - cdf(q, w[0])).powi(2) * (w[1] - w[0])).sum()
}

#[test]
fn crps_w1_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let draw = |rng: &mut ChaCha8Rng| {
            let (loc, scale) = (rng.random_range(-2.0..2.0), rng.random_range(0.1..3.0));
            samples(rng, n, loc, scale)
        };
        let (p, q, p2) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let r = crps_w1_check(&p, &q, &p2).unwrap();
        assert!(r.satisfied, "{r:?}");
        assert!((r.crps - crps_cdf(&p, &q)).abs() <= 1e-10 * r.crps.max(1.0));
        let w1 = transport::wasserstein_from_distances(
            &p.iter().flat_map(|x| q.iter().map(move |y| (x - y).abs())).collect::<Vec<_>>(),
            n,
            1,
        )
        .unwrap()
        .0;
        assert!((w1 - r.w1).abs() <= 1e-12 * w1.max(1.0));
    }
}

#[test]
fn energy_score_matches_crps_in_one_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let p = samples(&mut rng, 9, 0.0, 1.0);
        let q = samples(&mut rng, 7, 0.5, 2.0);
        let pv: Vec<Vec<f64>> = p.iter().map(|&x| vec![x]).collect();
        let qv: Vec<Vec<f64>> = q.iter().map(|&x| vec![x]).collect();
        assert!((energy_score_law(&pv, &qv).unwrap() - crps_law(&p, &q).unwrap()).abs() <= 1e-12);
        assert!((energy_score(&pv, &[q[0]]).unwrap() - crps(&p, q[0]).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn energy_score_is_controlled_by_euclidean_w1() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let p: Vec<Vec<f64>> = (0..8).map(|_| samples(&mut rng, 3, 0.0, 1.0)).collect();
        let q: Vec<Vec<f64>> = (0..8).map(|_| samples(&mut rng, 3, 0.3, 1.5)).collect();
        assert!(energy_score_law(&p, &q).unwrap() <= 2.0 * w1_euclidean(&p, &q).unwrap() + SCORE_TOL);
    }
}

fn curve(g: Grid, seed: u64, amp: f64) -> LawCurve {
    let e =
        Ensemble::new((0..6).map(|i| fields::random_divfree(g, 3.0, 4, seed * 100 + i).unwrap().scaled(amp)).collect())
            .unwrap();
    let cfg = EulerConfig::new(g, 0.01);
    let times = vec![0.0, 0.05, 0.1, 0.2];
    let traj: Vec<Vec<GridField>> =
        e.members().iter().map(|u| euler::evolve_checkpoints(u, &cfg, &times).unwrap()).collect();
    let ens = (0..times.len()).map(|j| Ensemble::new(traj.iter().map(|p| p[j].clone()).collect()).unwrap()).collect();
    LawCurve::new(times, ens).unwrap()
}

#[test]
fn integrated_crps_below_lipschitz_times_d_t() {
    let g = Grid::new(2, 16).unwrap();
    for seed in 0..5 {
        let (a, b) = (curve(g, seed, 1.0), curve(g, seed + 50, 1.2));
        for obs in [
            ResolvedObservable::mollified(g, 2, 0, 17 * seed as usize, 0.4).unwrap(),
            ResolvedObservable::inner(fields::random_divfree(g, 0.0, 3, 900 + seed).unwrap()).unwrap(),
        ] {
            let r = crps_dt_check(&a, &b, &obs).unwrap();
            assert!(r.satisfied, "{r:?}");
            assert!((r.d_t - transport::d_t(&a, &b).unwrap()).abs() <= 1e-12 * r.d_t);
            assert!(r.to_csv().starts_with("t,crps,w1_pushforward,bound\n"));
        }
    }
}

#[test]
fn xnll_quadratic_equality_and_inequality() {
    let g = Grid::new(2, 16).unwrap();
    let mk = |s: u64, a: f64| {
        Ensemble::new((0..5).map(|i| fields::random_divfree(g, 2.0, 5, s * 10 + i).unwrap().scaled(a)).collect())
            .unwrap()
    };
    let (inputs, truth, model) = (mk(1, 1.0), mk(2, 1.0), mk(3, 0.5));
    let id = QuadraticCertificate { lambda: 2.5, clip: 1e12, reconstruction: Reconstruction::Identity };
    let r = xnll_check(&inputs, &truth, &model, &id).unwrap();
    assert!(r.equality_gap <= 1e-10 && r.satisfied, "{r:?}");
    assert!((r.expected_clipped_xnll - r.expected_xnll).abs() <= 1e-12 * r.expected_xnll);
    let du = QuadraticCertificate { reconstruction: Reconstruction::DownUp, clip: 1e-3, ..id };
    let r = xnll_check(&inputs, &truth, &model, &du).unwrap();
    assert!(r.satisfied, "{r:?}");
    assert!((r.c_r - 1.0).abs() < 1e-12);
    assert!(r.expected_clipped_xnll <= r.expected_xnll);
}

#[test]
fn chebyshev_tail_bound_holds() {
    let g = Grid::new(2, 16).unwrap();
    let a = Ensemble::new((0..4).map(|i| fields::random_divfree(g, 2.0, 5, i).unwrap()).collect()).unwrap();
    let b = Ensemble::new((0..4).map(|i| fields::random_divfree(g, 2.0, 5, 40 + i).unwrap()).collect()).unwrap();
    let r = tail_bound_report(&a, &b, &[0.1, 0.5, 1.0, 2.0, 4.0]).unwrap();
    assert!(r.satisfied, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crps_is_symmetric_nonnegative_and_zero_on_equal_laws(seed in 0u64..100_000, n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = samples(&mut rng, n, 0.0, 1.0);
        let q = samples(&mut rng, n, 1.0, 0.5);
        let pq = crps_law(&p, &q).unwrap();
        prop_assert!((pq - crps_law(&q, &p).unwrap()).abs() <= 1e-12);
        prop_assert!(pq >= -1e-12);
        prop_assert!(crps_law(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn clipping_is_bounded_and_monotone(v in proptest::collection::vec(-10.0f64..10.0, 1..20), m in 0.1f64..5.0) {
        let c = clipped_certificate(&v, m).unwrap();
        for (x, y) in v.iter().zip(&c) {
            prop_assert!(y.abs() <= m);
            prop_assert!((x - y).abs() <= (x.abs() - m).max(0.0) + 1e-15);
        }
    }
}
