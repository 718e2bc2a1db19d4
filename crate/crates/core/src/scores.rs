//! Population CRPS and energy scores, resolved observables, `W₁` control of scores,
//! excess-NLL certificates and their clipped tails.

use crate::assignment;
use crate::ensemble::{self, Ensemble, LawCurve};
use crate::error::{Error, Result};
use crate::fields::{self, Grid, GridField, SpecField, TWO_PI};
use crate::transport;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

fn mean_abs_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += (x - y).abs();
        }
    }
    s / (a.len() * b.len()) as f64
}

fn require_samples(a: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("at least one sample".into()));
    }
    Ok(())
}

/// `CRPS(P, y) = E|X − y| − ½E|X − X′|` with the population (all-pairs) estimator.
pub fn crps(samples: &[f64], y: f64) -> Result<f64> {
    require_samples(samples)?;
    Ok(mean_abs_pairs(samples, &[y]) - 0.5 * mean_abs_pairs(samples, samples))
}

/// `CRPS(P, Q) = E|X − Y| − ½E|X − X′| − ½E|Y − Y′|`.
pub fn crps_law(p: &[f64], q: &[f64]) -> Result<f64> {
    require_samples(p)?;
    require_samples(q)?;
    Ok(mean_abs_pairs(p, q) - 0.5 * mean_abs_pairs(p, p) - 0.5 * mean_abs_pairs(q, q))
}

/// Exact `W₁` between equal-size empirical laws on ℝ via sorted samples.
pub fn w1_sorted(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Mismatch("sorted W1 needs equal non-empty sample sets".into()));
    }
    let mut a = p.to_vec();
    let mut b = q.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Slack on every score-versus-`W₁` inequality.
pub const SCORE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrpsW1Report {
    pub crps: f64,
    pub w1: f64,
    /// `|CRPS(P,Q) − CRPS(P′,Q)|`.
    pub lip_lhs: f64,
    /// `2 W₁(P, P′)`.
    pub lip_rhs: f64,
    pub satisfied: bool,
    pub tolerance: f64,
}

/// `CRPS(P,Q) ≤ 2W₁(P,Q)` and `|CRPS(P,Q) − CRPS(P′,Q)| ≤ 2W₁(P,P′)`.
pub fn crps_w1_check(p: &[f64], q: &[f64], p2: &[f64]) -> Result<CrpsW1Report> {
    let c = crps_law(p, q)?;
    let w1 = w1_sorted(p, q)?;
    let lip_lhs = (c - crps_law(p2, q)?).abs();
    let lip_rhs = 2.0 * w1_sorted(p, p2)?;
    Ok(CrpsW1Report {
        crps: c,
        w1,
        lip_lhs,
        lip_rhs,
        satisfied: c <= 2.0 * w1 + SCORE_TOL && lip_lhs <= lip_rhs + SCORE_TOL,
        tolerance: SCORE_TOL,
    })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_norm_pairs(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += euclid(x, y);
        }
    }
    s / (a.len() * b.len()) as f64
}

fn require_vectors(a: &[Vec<f64>]) -> Result<usize> {
    let m = a.first().map(|v| v.len()).ok_or_else(|| Error::InvalidArgument("at least one sample".into()))?;
    if m == 0 || a.iter().any(|v| v.len() != m) {
        return Err(Error::Mismatch("sample vectors must share a positive length".into()));
    }
    Ok(m)
}

/// `ES(P, y) = E‖X − y‖ − ½E‖X − X′‖`.
pub fn energy_score(samples: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let m = require_vectors(samples)?;
    if y.len() != m {
        return Err(Error::Mismatch("observation length".into()));
    }
    Ok(mean_norm_pairs(samples, &[y.to_vec()]) - 0.5 * mean_norm_pairs(samples, samples))
}

/// `ES(P, Q) = E‖X − Y‖ − ½E‖X − X′‖ − ½E‖Y − Y′‖`.
pub fn energy_score_law(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    if require_vectors(p)? != require_vectors(q)? {
        return Err(Error::Mismatch("sample dimensions differ".into()));
    }
    Ok(mean_norm_pairs(p, q) - 0.5 * mean_norm_pairs(p, p) - 0.5 * mean_norm_pairs(q, q))
}

/// Exact Euclidean `W₁` between equal-size empirical laws on ℝᵐ by assignment.
pub fn w1_euclidean(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    if p.len() != q.len() || require_vectors(p)? != require_vectors(q)? {
        return Err(Error::Mismatch("W1 needs equal sizes and dimensions".into()));
    }
    let n = p.len();
    let cost: Vec<f64> = p.iter().flat_map(|x| q.iter().map(move |y| euclid(x, y))).collect();
    Ok(assignment::solve(&cost, n).cost / n as f64)
}

/// Scalar observable `ℓ(u) = ⟨u, ψ⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedObservable {
    pub psi: GridField,
    pub lipschitz: f64,
}

impl ResolvedObservable {
    pub fn inner(psi: GridField) -> Result<ResolvedObservable> {
        let lipschitz = psi.norm();
        if !(lipschitz > 0.0) {
            return Err(Error::InvalidArgument("observable field must be nonzero".into()));
        }
        Ok(ResolvedObservable { psi, lipschitz })
    }

    /// Periodic Gaussian of width `eps` centred at lattice point `at`, on component `comp` of an `m`-field.
    pub fn mollified(grid: Grid, m: usize, comp: usize, at: usize, eps: f64) -> Result<ResolvedObservable> {
        if comp >= m || at >= grid.points() || !(eps > 0.0) {
            return Err(Error::InvalidArgument("mollifier component, location or width".into()));
        }
        let x = grid.coords(at);
        let norm = TWO_PI.powi(grid.d() as i32);
        let mut spec = SpecField::zeros(grid, m);
        let mut energy = 0.0;
        for (idx, c) in spec.component_mut(comp).iter_mut().enumerate() {
            let k = grid.mode(idx);
            let kx = k[0] as f64 * x[0] + k[1] as f64 * x[1];
            let amp = (-0.5 * eps * eps * grid.mode_norm_sq(idx)).exp() / norm;
            *c = Complex64::from_polar(amp, -kx);
            energy += amp * amp;
        }
        let psi = fields::inverse(&spec);
        Ok(ResolvedObservable { psi, lipschitz: (norm * energy).sqrt() })
    }

    pub fn eval(&self, u: &GridField) -> f64 {
        u.inner(&self.psi)
    }

    pub fn pushforward(&self, e: &Ensemble) -> Vec<f64> {
        e.members().iter().map(|u| self.eval(u)).collect()
    }
}

/// Per-time CRPS chain for one observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrpsTimeRow {
    pub t: f64,
    pub crps: f64,
    pub w1_pushforward: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrpsDtReport {
    pub rows: Vec<CrpsTimeRow>,
    pub integrated_crps: f64,
    pub lipschitz: f64,
    pub d_t: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub tolerance: f64,
}

impl CrpsDtReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,crps,w1_pushforward,bound\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.t, r.crps, r.w1_pushforward, r.bound));
        }
        s
    }
}

/// Slack on the time-integrated CRPS bound.
pub const CRPS_DT_TOL: f64 = 1e-9;

/// `∫CRPS(ℓ#μₜ, ℓ#νₜ) ≤ 2Lip(ℓ)d_T(μ,ν)` with the per-time chain `CRPS ≤ 2W₁(ℓ#μ,ℓ#ν) ≤ 2Lip(ℓ)W₁(μ,ν)`.
pub fn crps_dt_check(a: &LawCurve, b: &LawCurve, obs: &ResolvedObservable) -> Result<CrpsDtReport> {
    let w1 = transport::w1_per_time(a, b)?;
    let mut rows = Vec::with_capacity(w1.len());
    let mut chain = true;
    for (j, (ea, eb)) in a.ensembles().iter().zip(b.ensembles()).enumerate() {
        let pa = obs.pushforward(ea);
        let pb = obs.pushforward(eb);
        let c = crps_law(&pa, &pb)?;
        let wp = w1_sorted(&pa, &pb)?;
        let bound = 2.0 * obs.lipschitz * w1[j];
        chain &= c <= 2.0 * wp + CRPS_DT_TOL && 2.0 * wp <= bound * (1.0 + CRPS_DT_TOL) + CRPS_DT_TOL;
        rows.push(CrpsTimeRow { t: a.times()[j], crps: c, w1_pushforward: wp, bound });
    }
    let integrated = ensemble::trapezoid(a.times(), &rows.iter().map(|r| r.crps).collect::<Vec<_>>());
    let d_t = ensemble::trapezoid(a.times(), &w1);
    let bound = 2.0 * obs.lipschitz * d_t;
    Ok(CrpsDtReport {
        rows,
        integrated_crps: integrated,
        lipschitz: obs.lipschitz,
        d_t,
        bound,
        satisfied: chain && integrated <= bound * (1.0 + CRPS_DT_TOL) + CRPS_DT_TOL,
        tolerance: CRPS_DT_TOL,
    })
}

/// Map from pipeline fields to the discrete state space and back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    Identity,
    /// Restriction to every other lattice point, then bilinear interpolation.
    DownUp,
}

impl Reconstruction {
    pub fn restrict(&self, u: &GridField) -> Result<GridField> {
        match self {
            Reconstruction::Identity => Ok(u.clone()),
            Reconstruction::DownUp => {
                let g = u.grid();
                let coarse = Grid::new(g.d(), g.n() / 2)?;
                let (n, nc) = (g.n(), coarse.n());
                let mut z = GridField::zeros(coarse, u.m());
                for c in 0..u.m() {
                    let src = u.component(c);
                    let dst = z.component_mut(c);
                    if g.d() == 1 {
                        for i in 0..nc {
                            dst[i] = src[2 * i];
                        }
                    } else {
                        for i in 0..nc {
                            for j in 0..nc {
                                dst[i * nc + j] = src[2 * i * n + 2 * j];
                            }
                        }
                    }
                }
                Ok(z)
            }
        }
    }

    pub fn reconstruct(&self, z: &GridField) -> Result<GridField> {
        match self {
            Reconstruction::Identity => Ok(z.clone()),
            Reconstruction::DownUp => {
                let gc = z.grid();
                let nc = gc.n();
                let fine = Grid::new(gc.d(), 2 * nc)?;
                let n = fine.n();
                let mut out = GridField::zeros(fine, z.m());
                let lin = |v: &dyn Fn(usize) -> f64, i: usize| -> f64 {
                    if i.is_multiple_of(2) {
                        v(i / 2)
                    } else {
                        0.5 * (v(i / 2) + v((i / 2 + 1) % nc))
                    }
                };
                for c in 0..z.m() {
                    let src = z.component(c);
                    let dst = out.component_mut(c);
                    if gc.d() == 1 {
                        for i in 0..n {
                            dst[i] = lin(&|a| src[a], i);
                        }
                    } else {
                        for i in 0..n {
                            for j in 0..n {
                                let row = |a: usize| lin(&|b| src[a * nc + b], j);
                                dst[i * n + j] = lin(&row, i);
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// `C_R = sup ‖Rz‖/‖z‖`, the largest ratio over discrete Fourier modes of the state space.
    pub fn stability_constant(&self, grid: Grid) -> Result<f64> {
        match self {
            Reconstruction::Identity => Ok(1.0),
            Reconstruction::DownUp => {
                let coarse = Grid::new(grid.d(), grid.n() / 2)?;
                let mut best: f64 = 0.0;
                for idx in 0..coarse.points() {
                    let k = coarse.mode(idx);
                    let mode = |f: fn(f64) -> f64| {
                        GridField::from_fn(coarse, 1, |x, _| f(k[0] as f64 * x[0] + k[1] as f64 * x[1]))
                    };
                    let (re, im) = (mode(f64::cos), mode(f64::sin));
                    let num = self.reconstruct(&re)?.norm_sq() + self.reconstruct(&im)?.norm_sq();
                    let den = re.norm_sq() + im.norm_sq();
                    best = best.max(num / den);
                }
                Ok(best.sqrt())
            }
        }
    }
}

/// Quadratic conditional NLL `V(a,b) = ½λ|b − b_true(a)|²` with a clip level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCertificate {
    pub lambda: f64,
    pub clip: f64,
    pub reconstruction: Reconstruction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XnllReport {
    pub mse: f64,
    pub expected_xnll: f64,
    pub expected_clipped_xnll: f64,
    pub c_r: f64,
    pub bound: f64,
    /// `|MSE − bound| / max(MSE, bound)`; zero in the quadratic identity configuration.
    pub equality_gap: f64,
    pub satisfied: bool,
    pub tolerance: f64,
}

/// Slack on the excess-NLL bound.
pub const XNLL_TOL: f64 = 1e-12;

pub fn clip(r: f64, m: f64) -> f64 {
    r.clamp(-m, m)
}

pub fn clipped_certificate(values: &[f64], m: f64) -> Result<Vec<f64>> {
    if !(m > 0.0) {
        return Err(Error::InvalidArgument("clip level must be positive".into()));
    }
    Ok(values.iter().map(|&v| clip(v, m)).collect())
}

/// Coupled MSE of reconstructed pipeline outputs against `(2C_R²/λ) E∫XNLL`, members coupled by index.
pub fn xnll_check(
    inputs: &Ensemble,
    truth: &Ensemble,
    model: &Ensemble,
    cert: &QuadraticCertificate,
) -> Result<XnllReport> {
    if !(cert.lambda > 0.0 && cert.clip > 0.0) {
        return Err(Error::InvalidArgument("λ and the clip level must be positive".into()));
    }
    truth.same_shape(model)?;
    if inputs.len() != truth.len() {
        return Err(Error::Mismatch("pipeline coupling needs one output pair per input".into()));
    }
    let n = truth.len() as f64;
    let (mut mse, mut xnll, mut clipped) = (0.0, 0.0, 0.0);
    for (u, v) in truth.members().iter().zip(model.members()) {
        let zu = cert.reconstruction.restrict(u)?;
        let zv = cert.reconstruction.restrict(v)?;
        mse += cert.reconstruction.reconstruct(&zu)?.dist_sq(&cert.reconstruction.reconstruct(&zv)?);
        let g = zu.grid();
        for x in 0..g.points() {
            let diff: f64 = (0..zu.m()).map(|c| (zv.component(c)[x] - zu.component(c)[x]).powi(2)).sum();
            let pointwise = 0.5 * cert.lambda * diff;
            xnll += pointwise * g.cell_volume();
            clipped += clip(pointwise, cert.clip) * g.cell_volume();
        }
    }
    mse /= n;
    xnll /= n;
    clipped /= n;
    let c_r = cert.reconstruction.stability_constant(truth.grid())?;
    let bound = 2.0 * c_r * c_r / cert.lambda * xnll;
    let scale = mse.max(bound);
    Ok(XnllReport {
        mse,
        expected_xnll: xnll,
        expected_clipped_xnll: clipped,
        c_r,
        bound,
        equality_gap: if scale > 0.0 { (mse - bound).abs() / scale } else { 0.0 },
        satisfied: mse <= bound * (1.0 + XNLL_TOL),
        tolerance: XNLL_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub radius: f64,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
    pub satisfied: bool,
    pub tolerance: f64,
}

/// Fraction of (member, point) pairs with `|ξ⁰(x)| + |ξ^diff(x)| > R` against `2(E|ξ⁰|² + E|ξ^diff|²)/R²`.
pub fn tail_bound_report(inputs: &Ensemble, model: &Ensemble, radii: &[f64]) -> Result<TailReport> {
    inputs.same_shape(model)?;
    let g = inputs.grid();
    let m = inputs.m();
    let mut sums = Vec::with_capacity(inputs.len() * g.points());
    let (mut a2, mut b2) = (0.0, 0.0);
    for (u, v) in inputs.members().iter().zip(model.members()) {
        for x in 0..g.points() {
            let a: f64 = (0..m).map(|c| u.component(c)[x].powi(2)).sum();
            let b: f64 = (0..m).map(|c| v.component(c)[x].powi(2)).sum();
            a2 += a;
            b2 += b;
            sums.push(a.sqrt() + b.sqrt());
        }
    }
    let total = sums.len() as f64;
    let moments = 2.0 * (a2 + b2) / total;
    let rows: Vec<TailRow> = radii
        .iter()
        .map(|&r| TailRow {
            radius: r,
            empirical: sums.iter().filter(|&&s| s > r).count() as f64 / total,
            bound: moments / (r * r),
        })
        .collect();
    Ok(TailReport { satisfied: rows.iter().all(|r| r.empirical <= r.bound * (1.0 + 1e-9)), rows, tolerance: 1e-9 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crps_examples() {
        assert_eq!(crps(&[2.0], 5.0).unwrap(), 3.0);
        assert_eq!(crps(&[0.0, 1.0], 0.0).unwrap(), 0.25);
        assert_eq!(crps_law(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 0.0);
        let r = crps_w1_check(&[0.0], &[1.0], &[0.0]).unwrap();
        assert_eq!((r.crps, r.w1), (1.0, 1.0));
    }

    #[test]
    fn energy_score_reduces_to_crps() {
        let p = [0.3, -1.2, 2.5, 0.0];
        let q = [1.0, 0.5, -0.25];
        let pv: Vec<Vec<f64>> = p.iter().map(|&x| vec![x]).collect();
        let qv: Vec<Vec<f64>> = q.iter().map(|&x| vec![x]).collect();
        let a = energy_score_law(&pv, &qv).unwrap();
        let b = crps_law(&p, &q).unwrap();
        assert!((a - b).abs() <= 1e-12);
        assert_eq!(energy_score(&[vec![0.0, 0.0]], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn mollifier_lipschitz_is_its_norm() {
        let g = Grid::new(2, 32).unwrap();
        let o = ResolvedObservable::mollified(g, 2, 1, 37, 0.3).unwrap();
        assert!((o.lipschitz - o.psi.norm()).abs() <= 1e-12 * o.lipschitz);
        let integral: f64 = o.psi.component(1).iter().sum::<f64>() * g.cell_volume();
        assert!((integral - 1.0).abs() < 1e-12);
        assert_eq!(o.psi.component(0).iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn down_up_stability_constant_is_one() {
        let g = Grid::new(2, 16).unwrap();
        let c = Reconstruction::DownUp.stability_constant(g).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_xnll_equality() {
        let g = Grid::new(1, 8).unwrap();
        let u = GridField::zeros(g, 1);
        let v = GridField::from_fn(g, 1, |_, _| 0.5);
        let e = |f: &GridField| Ensemble::new(vec![f.clone()]).unwrap();
        let cert = QuadraticCertificate { lambda: 3.0, clip: 10.0, reconstruction: Reconstruction::Identity };
        let r = xnll_check(&e(&u), &e(&u), &e(&v), &cert).unwrap();
        let c2 = v.norm_sq();
        assert!((r.mse - c2).abs() < 1e-15);
        assert!((r.expected_xnll - 0.5 * 3.0 * c2).abs() < 1e-14);
        assert!(r.equality_gap < 1e-15);
    }
}
