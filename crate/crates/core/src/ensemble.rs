//! Empirical laws on field space: ensembles, law curves, moments, spectral
//! tails, structure functions and k-point marginals.

use crate::error::{Error, Result};
use crate::fields::{self, Grid, GridField};
use crate::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

/// Uniformly weighted finite set of fields on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: Vec<GridField>,
}

impl Ensemble {
    pub fn new(members: Vec<GridField>) -> Result<Ensemble> {
        let first =
            members.first().ok_or_else(|| Error::InvalidArgument("ensemble needs at least one member".into()))?;
        for u in &members[1..] {
            first.same_shape(u)?;
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[GridField] {
        &self.members
    }

    pub fn into_members(self) -> Vec<GridField> {
        self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn grid(&self) -> Grid {
        self.members[0].grid()
    }

    pub fn m(&self) -> usize {
        self.members[0].m()
    }

    /// Apply `f` to every member in parallel, preserving order.
    pub fn map(&self, f: impl Fn(&GridField) -> GridField + Sync + Send) -> Ensemble {
        Ensemble { members: par::map(&self.members, f) }
    }

    pub fn same_shape(&self, other: &Ensemble) -> Result<()> {
        self.members[0].same_shape(&other.members[0])
    }
}

/// Time-indexed sequence of ensembles on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LawCurve {
    times: Vec<f64>,
    ensembles: Vec<Ensemble>,
}

impl LawCurve {
    pub fn new(times: Vec<f64>, ensembles: Vec<Ensemble>) -> Result<LawCurve> {
        if times.len() != ensembles.len() || times.len() < 2 {
            return Err(Error::InvalidArgument("law curve needs matching times and ensembles, at least two".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument("law curve must start at t=0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        for e in &ensembles[1..] {
            ensembles[0].same_shape(e)?;
        }
        Ok(LawCurve { times, ensembles })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn ensembles(&self) -> &[Ensemble] {
        &self.ensembles
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn grid(&self) -> Grid {
        self.ensembles[0].grid()
    }
}

/// Trapezoidal weights for a strictly increasing grid of nodes.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = times[i + 1] - times[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Trapezoidal integral of samples `y` on nodes `t`.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    trapezoid_weights(t).iter().zip(y).map(|(w, v)| w * v).sum()
}

/// `(1/N) Σ ‖uᵢ‖₂ᵖ` for even `p ≥ 2`.
pub fn moment(e: &Ensemble, p: u32) -> Result<f64> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("moment order {p} must be even and ≥ 2")));
    }
    let norms = par::map(e.members(), |u| u.norm_sq().powi(p as i32 / 2));
    Ok(par::ordered_sum(&norms) / e.len() as f64)
}

/// Per-member unresolved energies `‖P>K uᵢ‖₂²`.
pub fn tail_energies(members: &[GridField], k: usize) -> Vec<f64> {
    par::map(members, |u| fields::project_gt(&fields::forward(u), k).norm_sq())
}

/// Coverage tail `(N⁻¹ Σ ‖P>K uᵢ‖₂²)^{1/2}`.
pub fn tail(e: &Ensemble, k: usize) -> f64 {
    let t = tail_energies(e.members(), k);
    (par::ordered_sum(&t) / e.len() as f64).sqrt()
}

/// Ensemble with every member replaced by `P≤K uᵢ`.
pub fn project_ensemble(e: &Ensemble, k: usize) -> Ensemble {
    e.map(|u| fields::band_limit(u, k))
}

/// Which average a structure curve represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructureKind {
    Pointwise,
    TimeAveraged,
}

/// Structure function values against physical radius.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureCurve {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: StructureKind,
}

impl StructureCurve {
    /// CSV with header `r,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value\n");
        for (r, v) in self.radii.iter().zip(&self.values) {
            s.push_str(&format!("{r},{v}\n"));
        }
        s
    }

    /// True when values never drop by more than `slack` relative to the running maximum.
    pub fn is_monotone(&self, slack: f64) -> bool {
        let mut best: f64 = 0.0;
        for &v in &self.values {
            if v < best * (1.0 - slack) {
                return false;
            }
            best = best.max(v);
        }
        true
    }
}

/// Ensemble mean of `‖δ_h u‖₂²` for every lattice offset `h`, indexed like grid points.
///
/// Uses `‖δ_h u‖² = 2(2π)ᵈ Σ_k (1 − cos(k·hΔx)) |û(k)|²`, summed with one inverse FFT.
pub fn increment_energy_map(e: &Ensemble) -> Vec<f64> {
    let g = e.grid();
    let np = g.points();
    let spectra = par::map(e.members(), |u| {
        let s = fields::forward(u);
        let mut p = vec![0.0; np];
        for c in 0..s.m() {
            for (pi, z) in p.iter_mut().zip(s.component(c)) {
                *pi += z.norm_sqr();
            }
        }
        p
    });
    let mut power = vec![0.0; np];
    for sp in &spectra {
        for (a, b) in power.iter_mut().zip(sp) {
            *a += b;
        }
    }
    let inv_n = 1.0 / e.len() as f64;
    let total: f64 = power.iter().sum::<f64>() * inv_n;
    let mut buf: Vec<Complex64> = power.iter().map(|&p| Complex64::new(p * inv_n, 0.0)).collect();
    fields::fft_in_place(g, &mut buf, true);
    let vol = g.volume();
    buf.iter().map(|z| (2.0 * vol * (total - z.re)).max(0.0)).collect()
}

/// Lattice offsets (as flat indices) with `0 < |h|Δx ≤ r`.
pub fn ball_offsets(g: Grid, r: f64) -> Vec<usize> {
    let dx = g.dx();
    let lim = (r / dx).powi(2) * (1.0 + 1e-12);
    (1..g.points()).filter(|&idx| g.mode_norm_sq(idx) <= lim).collect()
}

fn ball_average(map: &[f64], g: Grid, r: f64) -> Result<f64> {
    if r > std::f64::consts::PI * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("radius {r} exceeds π")));
    }
    let offs = ball_offsets(g, r);
    if offs.is_empty() {
        return Err(Error::InvalidArgument(format!("radius {r} is below the lattice spacing; no offsets")));
    }
    Ok(offs.iter().map(|&i| map[i]).sum::<f64>() / offs.len() as f64)
}

/// `ω(r)`: root of the x-, ball- and ensemble-averaged squared increment.
pub fn pointwise_modulus(e: &Ensemble, radii: &[f64]) -> Result<StructureCurve> {
    let map = increment_energy_map(e);
    let values = radii.iter().map(|&r| ball_average(&map, e.grid(), r).map(f64::sqrt)).collect::<Result<Vec<_>>>()?;
    Ok(StructureCurve { radii: radii.to_vec(), values, kind: StructureKind::Pointwise })
}

/// Time-averaged structure function `(∫₀ᵀ ω_t(r)² dt)^{1/2}` with trapezoidal quadrature.
pub fn structure_function(c: &LawCurve, radii: &[f64]) -> Result<StructureCurve> {
    let per_time = c.ensembles().iter().map(|e| pointwise_modulus(e, radii)).collect::<Result<Vec<_>>>()?;
    let values = (0..radii.len())
        .map(|j| {
            let y: Vec<f64> = per_time.iter().map(|s| s.values[j].powi(2)).collect();
            trapezoid(c.times(), &y).sqrt()
        })
        .collect();
    Ok(StructureCurve { radii: radii.to_vec(), values, kind: StructureKind::TimeAveraged })
}

/// Per radius: the time-averaged value and `√T · max_t ω_t(r)`.
pub fn pointwise_to_timeavg(c: &LawCurve, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let sf = structure_function(c, radii)?;
    let mut bounds = vec![0.0f64; radii.len()];
    for e in c.ensembles() {
        let w = pointwise_modulus(e, radii)?;
        for (b, v) in bounds.iter_mut().zip(&w.values) {
            *b = b.max(*v);
        }
    }
    let st = c.horizon().sqrt();
    Ok(sf.values.iter().zip(&bounds).map(|(s, b)| (*s, st * b)).collect())
}

/// Least-squares fit `log ω² = log C₀ + 2s log r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerFit {
    pub c0: f64,
    pub s: f64,
    pub residual: f64,
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    (a, b, (rss / n).sqrt())
}

pub fn fit_power_modulus(s: &StructureCurve, r_min: f64, r_max: f64) -> Result<PowerFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = s
        .radii
        .iter()
        .zip(&s.values)
        .filter(|(r, v)| **r >= r_min && **r <= r_max && **v > 0.0)
        .map(|(r, v)| (r.ln(), (v * v).ln()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::InvalidArgument("fit needs at least 3 radii in range".into()));
    }
    let (a, b, res) = linear_fit(&x, &y);
    Ok(PowerFit { c0: a.exp(), s: b / 2.0, residual: res })
}

/// Default fit window `[4Δx, π/4]`.
pub fn default_fit_range(g: Grid) -> (f64, f64) {
    (4.0 * g.dx(), std::f64::consts::FRAC_PI_4)
}

/// Both sides of the k-point marginal identity, with the Monte-Carlo standard error of the left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalEstimate {
    pub lhs: f64,
    pub rhs: f64,
    pub sigma: f64,
}

impl MarginalEstimate {
    pub fn within(&self, nsigma: f64) -> bool {
        (self.lhs - self.rhs).abs() <= nsigma * self.sigma + 1e-12 * self.rhs.abs()
    }
}

fn marginal_rhs(e: &Ensemble, k: usize, psi: &dyn Fn(&[f64]) -> f64) -> f64 {
    let g = e.grid();
    let w = g.cell_volume();
    let mut acc = 0.0;
    for u in e.members() {
        for idx in 0..g.points() {
            acc += psi(&u.point(idx));
        }
    }
    g.volume().powi(k as i32 - 1) * w * acc / e.len() as f64
}

fn check_marginal_args(k: usize, i: usize) -> Result<()> {
    if k == 0 || k > 3 || i >= k {
        return Err(Error::InvalidArgument(format!("need 1 ≤ k ≤ 3 and coordinate i < k (k={k}, i={i})")));
    }
    Ok(())
}

/// Full lattice enumeration of `∫_{Dᵏ} ⟨ν^k_x, ψ(ξᵢ)⟩ dx` against `|D|^{k−1} ∫_D ⟨ν¹_y, ψ⟩ dy`.
pub fn kpoint_marginal_exact(
    e: &Ensemble,
    k: usize,
    i: usize,
    psi: &dyn Fn(&[f64]) -> f64,
) -> Result<MarginalEstimate> {
    check_marginal_args(k, i)?;
    let g = e.grid();
    let np = g.points();
    let tuples = np.pow(k as u32);
    if tuples > 20_000_000 {
        return Err(Error::InvalidArgument("enumeration too large".into()));
    }
    let w = g.cell_volume().powi(k as i32);
    let mut acc = 0.0;
    let mut x = vec![0usize; k];
    for t in 0..tuples {
        let mut r = t;
        for xi in x.iter_mut() {
            *xi = r % np;
            r /= np;
        }
        let mut inner = 0.0;
        for u in e.members() {
            inner += psi(&u.point(x[i]));
        }
        acc += w * inner / e.len() as f64;
    }
    Ok(MarginalEstimate { lhs: acc, rhs: marginal_rhs(e, k, psi), sigma: 0.0 })
}

/// Monte-Carlo estimate of the k-point side from uniformly drawn tuples and members.
pub fn kpoint_marginal_check(
    e: &Ensemble,
    k: usize,
    i: usize,
    psi: &dyn Fn(&[f64]) -> f64,
    samples: usize,
    seed: u64,
) -> Result<MarginalEstimate> {
    check_marginal_args(k, i)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let g = e.grid();
    let np = g.points();
    let vol_k = g.volume().powi(k as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let m = rng.random_range(0..e.len());
        let x: Vec<usize> = (0..k).map(|_| rng.random_range(0..np)).collect();
        let v = vol_k * psi(&e.members()[m].point(x[i]));
        sum += v;
        sum_sq += v * v;
    }
    let s = samples as f64;
    let mean = sum / s;
    let var = ((sum_sq / s - mean * mean) * s / (s - 1.0)).max(0.0);
    Ok(MarginalEstimate { lhs: mean, rhs: marginal_rhs(e, k, psi), sigma: (var / s).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cos_ensemble(freq: f64, n: usize, copies: usize) -> Ensemble {
        let g = Grid::new(1, n).unwrap();
        let f = GridField::from_fn(g, 1, |x, _| (freq * x[0]).cos());
        Ensemble::new(vec![f; copies]).unwrap()
    }

    #[test]
    fn moment_examples() {
        let g = Grid::new(1, 16).unwrap();
        let z = Ensemble::new(vec![GridField::zeros(g, 1)]).unwrap();
        assert_eq!(moment(&z, 2).unwrap(), 0.0);
        let c = cos_ensemble(1.0, 16, 1);
        assert!((moment(&c, 2).unwrap() - PI).abs() < 1e-13);
        assert!(moment(&c, 3).is_err());
    }

    #[test]
    fn tail_examples() {
        let e = cos_ensemble(5.0, 32, 3);
        assert!(tail(&e, 8) < 1e-13);
        assert!((tail(&e, 4) - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_fields_have_zero_structure() {
        let g = Grid::new(2, 16).unwrap();
        let f = GridField::from_fn(g, 2, |_, c| 1.0 + c as f64);
        let e = Ensemble::new(vec![f]).unwrap();
        let s = pointwise_modulus(&e, &[0.5, 1.0, PI]).unwrap();
        assert!(s.values.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn radius_below_spacing_is_rejected() {
        let e = cos_ensemble(1.0, 16, 1);
        assert!(pointwise_modulus(&e, &[0.1]).is_err());
        assert!(pointwise_modulus(&e, &[4.0]).is_err());
    }

    #[test]
    fn exact_power_law_fit() {
        let radii: Vec<f64> = (1..10).map(|i| 0.1 * i as f64).collect();
        let values = radii.iter().map(|r| 2.0 * r.powf(0.7)).collect();
        let s = StructureCurve { radii, values, kind: StructureKind::Pointwise };
        let fit = fit_power_modulus(&s, 0.0, 1.0).unwrap();
        assert!((fit.c0 - 4.0).abs() < 1e-10);
        assert!((fit.s - 0.7).abs() < 1e-10);
        let flat = StructureCurve { values: vec![3.0; 9], ..s };
        assert!(fit_power_modulus(&flat, 0.0, 1.0).unwrap().s.abs() < 1e-12);
    }

    #[test]
    fn marginal_trivial_cases() {
        let e = cos_ensemble(2.0, 8, 2);
        let one = |_: &[f64]| 1.0;
        for k in 1..=2 {
            let m = kpoint_marginal_exact(&e, k, k - 1, &one).unwrap();
            let want = (2.0 * PI).powi(k as i32);
            assert!((m.lhs - want).abs() < 1e-12 * want);
            assert!((m.rhs - want).abs() < 1e-12 * want);
        }
        assert!(kpoint_marginal_exact(&e, 4, 0, &one).is_err());
    }

    #[test]
    fn law_curve_validation() {
        let e = cos_ensemble(1.0, 8, 1);
        assert!(LawCurve::new(vec![0.0], vec![e.clone()]).is_err());
        assert!(LawCurve::new(vec![0.1, 0.2], vec![e.clone(), e.clone()]).is_err());
        assert!(LawCurve::new(vec![0.0, 0.0], vec![e.clone(), e.clone()]).is_err());
        assert!(LawCurve::new(vec![0.0, 0.5], vec![e.clone(), e]).is_ok());
    }
}
