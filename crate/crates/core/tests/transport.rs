use lawbound::ensemble::{self, Ensemble, LawCurve};
use lawbound::fields::{self, Grid, GridField};
use lawbound::transport::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(g: Grid, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..g.d() * g.points()).map(|_| rng.random_range(-1.0..1.0)).collect();
    GridField::from_values(g, g.d(), v).unwrap()
}

fn ens(g: Grid, n: usize, seed: u64) -> Ensemble {
    Ensemble::new((0..n as u64).map(|i| random_field(g, seed * 10_000 + i)).collect()).unwrap()
}

fn divfree_ens(g: Grid, n: usize, p: f64, seed: u64) -> Ensemble {
    Ensemble::new(
        (0..n as u64).map(|i| fields::random_divfree(g, p, g.n() / 2 - 1, seed * 10_000 + i).unwrap()).collect(),
    )
    .unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force(a: &Ensemble, b: &Ensemble, p: i32) -> f64 {
    let n = a.len();
    permutations(n)
        .iter()
        .map(|perm| (0..n).map(|i| a.members()[i].dist(&b.members()[perm[i]]).powi(p)).sum::<f64>() / n as f64)
        .fold(f64::INFINITY, f64::min)
        .powf(1.0 / p as f64)
}

#[test]
fn exact_matches_permutation_enumeration() {
    let g = Grid::new(2, 8).unwrap();
    for seed in 0..20 {
        let (a, b) = (ens(g, 4, seed), ens(g, 4, seed + 100));
        for p in [1u32, 2] {
            let (w, plan) = wasserstein_exact(&a, &b, p).unwrap();
            assert!((w - brute_force(&a, &b, p as i32)).abs() <= 1e-12 * w);
            assert!(plan.certified);
            assert_eq!(plan.marginal_error(), 0.0);
        }
    }
}

#[test]
fn sinkhorn_approaches_exact() {
    let g = Grid::new(2, 16).unwrap();
    let mk = |s: u64| {
        Ensemble::new((0..64).map(|i| fields::random_divfree(g, 2.0, 3, s * 1000 + i).unwrap()).collect()).unwrap()
    };
    let (a, b) = (mk(1), mk(2));
    let (w, _) = wasserstein_exact(&a, &b, 2).unwrap();
    let cost: Vec<f64> = distance_matrix(a.members(), b.members()).iter().map(|d| d * d).collect();
    let spread = cost.iter().cloned().fold(0.0, f64::max) - cost.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps = 0.01 * spread;
    let (s, plan) = sinkhorn(&a, &b, eps, 20_000).unwrap();
    assert!(s >= w * (1.0 - 1e-9) && s <= 1.05 * w, "{s} vs {w}");
    assert!(plan.marginal_error() < 1e-6);
    let (same, _) = sinkhorn(&a, &a, eps, 20_000).unwrap();
    assert!(same * same <= 10.0 * eps, "{same} vs eps {eps}");
    assert!(sinkhorn(&a, &b, 0.0, 10).is_err());
}

#[test]
fn d_t_examples() {
    let g = Grid::new(2, 8).unwrap();
    let (u, v) = (random_field(g, 1), random_field(g, 2));
    let cu = LawCurve::new(vec![0.0, 0.3, 1.2], vec![Ensemble::new(vec![u.clone()]).unwrap(); 3]).unwrap();
    let cv = LawCurve::new(vec![0.0, 0.3, 1.2], vec![Ensemble::new(vec![v.clone()]).unwrap(); 3]).unwrap();
    assert!((d_t(&cu, &cv).unwrap() - 1.2 * u.dist(&v)).abs() < 1e-12);
    assert_eq!(d_t(&cu, &cu).unwrap(), 0.0);
    let times = vec![0.0, 0.5, 1.0];
    let a: Vec<Ensemble> = (0..3).map(|i| ens(g, 4, 10 + i)).collect();
    let b: Vec<Ensemble> = (0..3).map(|i| ens(g, 4, 20 + i)).collect();
    let oracle: Vec<f64> = a.iter().zip(&b).map(|(x, y)| brute_force(x, y, 1)).collect();
    let ca = LawCurve::new(times.clone(), a).unwrap();
    let cb = LawCurve::new(times.clone(), b).unwrap();
    let expect = ensemble::trapezoid(&times, &oracle);
    assert!((d_t(&ca, &cb).unwrap() - expect).abs() <= 1e-12 * expect);
}

#[test]
fn capacity_coverage_on_random_pairs() {
    let g = Grid::new(2, 32).unwrap();
    for seed in 0..20 {
        let a = divfree_ens(g, 32, 2.0, seed);
        let b = divfree_ens(g, 32, 3.0, seed + 500);
        for k in [2, 4, 8] {
            let r = capacity_coverage(&a, &b, k).unwrap();
            assert!(r.satisfied, "{r:?}");
            assert!(r.w1 <= r.w2 + 1e-9);
            assert!(r.band_limited.is_none());
        }
    }
}

#[test]
fn projected_model_hits_band_limited_bound() {
    let g = Grid::new(2, 32).unwrap();
    let a = divfree_ens(g, 16, 2.0, 1);
    let b = ensemble::project_ensemble(&divfree_ens(g, 16, 2.0, 2), 4);
    let r = capacity_coverage(&a, &b, 4).unwrap();
    let bl = r.band_limited.expect("band-limited model");
    assert!(bl.satisfied);
    assert!(r.tail_b < 1e-12);
    let pa = ensemble::project_ensemble(&a, 4);
    let (w, plan) = wasserstein_exact(&a, &pa, 2).unwrap();
    assert!(w <= ensemble::tail(&a, 4) * (1.0 + 1e-12));
    assert_eq!(plan.permutation().unwrap(), (0..16).collect::<Vec<_>>().as_slice());
    let same = capacity_coverage(&a, &a, 4).unwrap();
    assert!(same.w2 < 1e-12 && same.train_k < 1e-12);
}

#[test]
fn defect_examples() {
    let g = Grid::new(2, 16).unwrap();
    let rho = ens(g, 6, 3);
    let id = |u: &GridField| u.clone();
    assert_eq!(one_step_defect(&rho, id, |u, _| u.clone(), 1).unwrap(), 0.0);
    let shift = GridField::from_fn(g, 2, |_, c| if c == 0 { 0.3 } else { -0.1 });
    let eta = one_step_defect(
        &rho,
        id,
        |u, _| {
            let mut v = u.clone();
            v.add_scaled(1.0, &shift);
            v
        },
        1,
    )
    .unwrap();
    assert!((eta - shift.norm()).abs() < 1e-12);
    let eps = 1e-3;
    let pert = |u: &GridField| {
        let mut v = u.clone();
        v.add_scaled(eps, &fields::increment(u, &[1, 0]));
        v
    };
    let eta = one_step_defect(&rho, id, |u, _| pert(u), 1).unwrap();
    let identity = (rho.members().iter().map(|u| pert(u).dist_sq(u)).sum::<f64>() / 6.0).sqrt();
    assert!(eta <= identity * (1.0 + 1e-12));
    assert!(eta >= 0.9 * identity);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn metric_axioms(seed in 0u64..100_000, p in 1u32..=2) {
        let g = Grid::new(2, 8).unwrap();
        let (a, b, c) = (ens(g, 5, seed), ens(g, 5, seed + 1), ens(g, 5, seed + 2));
        let ab = wasserstein_exact(&a, &b, p).unwrap().0;
        let ba = wasserstein_exact(&b, &a, p).unwrap().0;
        let bc = wasserstein_exact(&b, &c, p).unwrap().0;
        let ac = wasserstein_exact(&a, &c, p).unwrap().0;
        prop_assert!((ab - ba).abs() <= 1e-12 * ab);
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn projection_is_a_contraction_and_w1_below_w2(seed in 0u64..100_000, k in 1usize..6) {
        let g = Grid::new(2, 16).unwrap();
        let (a, b) = (ens(g, 6, seed), ens(g, 6, seed + 7));
        let w2 = wasserstein_exact(&a, &b, 2).unwrap().0;
        let w1 = wasserstein_exact(&a, &b, 1).unwrap().0;
        let pw = wasserstein_exact(&ensemble::project_ensemble(&a, k), &ensemble::project_ensemble(&b, k), 2).unwrap().0;
        prop_assert!(pw <= w2 + 1e-9);
        prop_assert!(w1 <= w2 + 1e-9);
    }
}
