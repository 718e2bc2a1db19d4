//! Pseudo-spectral 2D incompressible Euler in vorticity–streamfunction form,
//! strain diagnostics, and the L² difference and average-strain checks.

use crate::ensemble::{self, Ensemble};
use crate::error::{Error, Result};
use crate::fields::{self, fft_in_place, Grid, GridField, SpecField};
use crate::par;
use crate::transport;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Solver settings for the reference dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerConfig {
    pub grid: Grid,
    pub dt: f64,
    #[serde(default = "default_dealias")]
    pub dealias: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Band limit of admissible initial data.
    pub k_init: usize,
}

fn default_dealias() -> f64 {
    2.0 / 3.0
}

fn default_cfl() -> f64 {
    0.5
}

impl EulerConfig {
    pub fn new(grid: Grid, dt: f64) -> EulerConfig {
        EulerConfig { grid, dt, dealias: default_dealias(), cfl: default_cfl(), k_init: grid.n() / 4 }
    }

    /// Largest retained wavenumber per axis.
    pub fn dealias_cutoff(&self) -> usize {
        ((self.grid.n() as f64 / 2.0) * self.dealias + 1e-9).floor() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.grid.d() != 2 {
            return Err(Error::Unsupported("Euler solver needs d=2".into()));
        }
        if !(self.dt > 0.0) || !(self.dealias > 0.0 && self.dealias <= 1.0) || !(self.cfl > 0.0) {
            return Err(Error::InvalidArgument("dt, dealias and cfl must be positive".into()));
        }
        Ok(())
    }
}

struct Solver {
    grid: Grid,
    kx: Vec<f64>,
    ky: Vec<f64>,
    inv_lap: Vec<f64>,
    mask: Vec<f64>,
}

impl Solver {
    fn new(cfg: &EulerConfig) -> Solver {
        let g = cfg.grid;
        let np = g.points();
        let cut = cfg.dealias_cutoff() as i64;
        let mut kx = vec![0.0; np];
        let mut ky = vec![0.0; np];
        let mut inv_lap = vec![0.0; np];
        let mut mask = vec![0.0; np];
        for idx in 0..np {
            let k = g.deriv_mode(idx);
            kx[idx] = k[0];
            ky[idx] = k[1];
            let k2 = k[0] * k[0] + k[1] * k[1];
            inv_lap[idx] = if k2 > 0.0 { 1.0 / k2 } else { 0.0 };
            let m = g.mode(idx);
            mask[idx] = if m[0].abs() <= cut && m[1].abs() <= cut && !g.is_nyquist(idx) { 1.0 } else { 0.0 };
        }
        Solver { grid: g, kx, ky, inv_lap, mask }
    }

    fn vorticity_hat(&self, u: &SpecField) -> Vec<Complex64> {
        let (u0, u1) = (u.component(0), u.component(1));
        (0..self.grid.points())
            .map(|i| {
                let iw = Complex64::new(0.0, 1.0);
                (iw * self.kx[i] * u1[i] - iw * self.ky[i] * u0[i]) * self.mask[i]
            })
            .collect()
    }

    fn velocity_hat(&self, w: &[Complex64], mean: [f64; 2]) -> (Vec<Complex64>, Vec<Complex64>) {
        let np = self.grid.points();
        let mut u0 = vec![Complex64::new(0.0, 0.0); np];
        let mut u1 = vec![Complex64::new(0.0, 0.0); np];
        for i in 0..np {
            let psi = w[i] * self.inv_lap[i];
            u0[i] = Complex64::new(0.0, self.ky[i]) * psi;
            u1[i] = Complex64::new(0.0, -self.kx[i]) * psi;
        }
        u0[0] = Complex64::new(mean[0], 0.0);
        u1[0] = Complex64::new(mean[1], 0.0);
        (u0, u1)
    }

    fn to_velocity(&self, w: &[Complex64], mean: [f64; 2]) -> GridField {
        let (u0, u1) = self.velocity_hat(w, mean);
        let mut coeffs = u0;
        coeffs.extend(u1);
        fields::inverse(&SpecField::from_coeffs(self.grid, 2, coeffs).expect("shape"))
    }

    /// Right-hand side `−P(u·∇ω)` and the velocity sup norm at the input state.
    fn rhs(&self, w: &[Complex64], mean: [f64; 2]) -> (Vec<Complex64>, f64) {
        let g = self.grid;
        let np = g.points();
        let (mut u0, mut u1) = self.velocity_hat(w, mean);
        let mut wx: Vec<Complex64> = (0..np).map(|i| Complex64::new(0.0, self.kx[i]) * w[i]).collect();
        let mut wy: Vec<Complex64> = (0..np).map(|i| Complex64::new(0.0, self.ky[i]) * w[i]).collect();
        for b in [&mut u0, &mut u1, &mut wx, &mut wy] {
            fft_in_place(g, b, true);
        }
        let mut umax: f64 = 0.0;
        let mut prod: Vec<Complex64> = (0..np)
            .map(|i| {
                umax = umax.max((u0[i].re * u0[i].re + u1[i].re * u1[i].re).sqrt());
                Complex64::new(-(u0[i].re * wx[i].re + u1[i].re * wy[i].re), 0.0)
            })
            .collect();
        fft_in_place(g, &mut prod, false);
        let scale = 1.0 / np as f64;
        for i in 0..np {
            prod[i] *= scale * self.mask[i];
        }
        (prod, umax)
    }

    fn rk4(&self, w: &mut [Complex64], mean: [f64; 2], h: f64, cfl: f64) -> Result<()> {
        let np = w.len();
        let (k1, umax) = self.rhs(w, mean);
        let limit = cfl * self.grid.dx() / umax.max(f64::MIN_POSITIVE);
        if h > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt: h, limit });
        }
        let stage = |k: &[Complex64], a: f64| -> Vec<Complex64> { (0..np).map(|i| w[i] + k[i] * a).collect() };
        let (k2, _) = self.rhs(&stage(&k1, 0.5 * h), mean);
        let (k3, _) = self.rhs(&stage(&k2, 0.5 * h), mean);
        let (k4, _) = self.rhs(&stage(&k3, h), mean);
        for i in 0..np {
            w[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("Euler step".into()));
        }
        Ok(())
    }
}

fn check_input(u: &GridField, cfg: &EulerConfig) -> Result<()> {
    cfg.validate()?;
    if u.grid() != cfg.grid || u.m() != 2 {
        return Err(Error::Mismatch("Euler state must be a 2-component field on cfg.grid".into()));
    }
    let div = fields::divergence_sup(u)?;
    let scale = fields::grad_sup(u).max(1.0);
    if div > 1e-8 * scale {
        return Err(Error::InvalidArgument(format!("initial data not divergence-free (max |div u| = {div:e})")));
    }
    Ok(())
}

/// States at each requested time (nondecreasing, starting at or after 0).
///
/// Each interval is split into `⌈Δ/dt⌉` equal RK4 steps.
pub fn evolve_checkpoints(u: &GridField, cfg: &EulerConfig, times: &[f64]) -> Result<Vec<GridField>> {
    check_input(u, cfg)?;
    let solver = Solver::new(cfg);
    let s = fields::forward(u);
    let mean = [s.component(0)[0].re, s.component(1)[0].re];
    let mut w = solver.vorticity_hat(&s);
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        if t < now - 1e-12 {
            return Err(Error::InvalidArgument("checkpoint times must be nondecreasing".into()));
        }
        let span = t - now;
        let steps = (span / cfg.dt - 1e-9).ceil().max(0.0) as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for _ in 0..steps {
                solver.rk4(&mut w, mean, h, cfg.cfl)?;
            }
        }
        now = t;
        out.push(solver.to_velocity(&w, mean));
    }
    Ok(out)
}

/// Solution at time `t`.
pub fn evolve(u: &GridField, cfg: &EulerConfig, t: f64) -> Result<GridField> {
    Ok(evolve_checkpoints(u, cfg, &[t])?.pop().unwrap())
}

/// One step of size `cfg.dt`.
pub fn step(u: &GridField, cfg: &EulerConfig) -> Result<GridField> {
    evolve(u, cfg, cfg.dt)
}

/// Evolve every member in parallel to each checkpoint; result is `[member][checkpoint]`.
pub fn evolve_members(members: &[GridField], cfg: &EulerConfig, times: &[f64]) -> Result<Vec<Vec<GridField>>> {
    par::map(members, |u| evolve_checkpoints(u, cfg, times)).into_iter().collect()
}

/// Euler drift `Leray(−∇·(u⊗u))` with the product dealiased by the 2/3 rule.
pub fn drift(u: &GridField) -> Result<GridField> {
    let g = u.grid();
    if g.d() != 2 || u.m() != 2 {
        return Err(Error::Unsupported("Euler drift needs a 2D velocity field".into()));
    }
    let np = g.points();
    let (u0, u1) = (u.component(0), u.component(1));
    let prods = [
        u0.iter().map(|a| a * a).collect::<Vec<f64>>(),
        u0.iter().zip(u1).map(|(a, b)| a * b).collect(),
        u1.iter().map(|b| b * b).collect(),
    ];
    let spec: Vec<SpecField> =
        prods.into_iter().map(|v| fields::forward(&GridField::from_values(g, 1, v).expect("shape"))).collect();
    let cut = (g.n() / 3) as i64;
    let mut out = SpecField::zeros(g, 2);
    for idx in 0..np {
        let m = g.mode(idx);
        if m[0].abs() > cut || m[1].abs() > cut {
            continue;
        }
        let k = g.deriv_mode(idx);
        let i = Complex64::new(0.0, 1.0);
        let (p00, p01, p11) = (spec[0].coeffs()[idx], spec[1].coeffs()[idx], spec[2].coeffs()[idx]);
        out.component_mut(0)[idx] = -(i * k[0] * p00 + i * k[1] * p01);
        out.component_mut(1)[idx] = -(i * k[0] * p01 + i * k[1] * p11);
    }
    Ok(fields::inverse(&fields::leray_project(&out)?))
}

/// Scalar vorticity `ω = ∂₀u₁ − ∂₁u₀`.
pub fn vorticity(u: &GridField) -> GridField {
    let s = fields::forward(u);
    let g = u.grid();
    let np = g.points();
    let mut w = SpecField::zeros(g, 1);
    for idx in 0..np {
        let k = g.deriv_mode(idx);
        w.coeffs_mut()[idx] =
            Complex64::new(0.0, k[0]) * s.component(1)[idx] - Complex64::new(0.0, k[1]) * s.component(0)[idx];
    }
    fields::inverse(&w)
}

pub fn energy(u: &GridField) -> f64 {
    u.norm_sq()
}

pub fn enstrophy(u: &GridField) -> f64 {
    vorticity(u).norm_sq()
}

/// Pointwise symmetric rate-of-strain tensor `S(v) = ½(∇v + ∇vᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrainField {
    pub s00: Vec<f64>,
    pub s01: Vec<f64>,
    pub s11: Vec<f64>,
}

impl StrainField {
    /// Operator norm of the 2×2 symmetric tensor at each point.
    pub fn norm(&self) -> Vec<f64> {
        (0..self.s00.len())
            .map(|i| {
                let (a, b, c) = (self.s00[i], self.s01[i], self.s11[i]);
                let mid = 0.5 * (a + c);
                let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                mid.abs() + rad
            })
            .collect()
    }

    pub fn trace_sup(&self) -> f64 {
        self.s00.iter().zip(&self.s11).fold(0.0, |m, (a, c)| m.max((a + c).abs()))
    }
}

/// `(∂ⱼvᵢ)` as four arrays `[∂₀v₀, ∂₁v₀, ∂₀v₁, ∂₁v₁]`.
fn jacobian(v: &GridField) -> [Vec<f64>; 4] {
    let j = fields::gradient(v);
    [j.component(0).to_vec(), j.component(1).to_vec(), j.component(2).to_vec(), j.component(3).to_vec()]
}

pub fn strain(v: &GridField) -> StrainField {
    let [a, b, c, d] = jacobian(v);
    StrainField { s00: a, s01: b.iter().zip(&c).map(|(x, y)| 0.5 * (x + y)).collect(), s11: d }
}

/// `∫ (w⊗w) : S(v)`.
pub fn strain_pairing(w: &GridField, v: &GridField) -> f64 {
    let s = strain(v);
    let (w0, w1) = (w.component(0), w.component(1));
    let acc: f64 = (0..w0.len())
        .map(|i| w0[i] * w0[i] * s.s00[i] + 2.0 * w0[i] * w1[i] * s.s01[i] + w1[i] * w1[i] * s.s11[i])
        .sum();
    acc * w.grid().cell_volume()
}

/// `∫ (w⊗w) : ∇v = ∫ wᵢ wⱼ ∂ⱼvᵢ`.
pub fn gradient_pairing(w: &GridField, v: &GridField) -> f64 {
    let [a, b, c, d] = jacobian(v);
    let (w0, w1) = (w.component(0), w.component(1));
    let acc: f64 = (0..w0.len())
        .map(|i| w0[i] * w0[i] * a[i] + w0[i] * w1[i] * b[i] + w1[i] * w0[i] * c[i] + w1[i] * w1[i] * d[i])
        .sum();
    acc * w.grid().cell_volume()
}

/// `(∫ |S(v)| |w|², ‖w‖²)` for `w = u − v`.
pub fn strain_weighted(u: &GridField, v: &GridField) -> (f64, f64) {
    let sn = strain(v).norm();
    let w = u - v;
    let np = u.grid().points();
    let (w0, w1) = (w.component(0), w.component(1));
    let num: f64 = (0..np).map(|i| sn[i] * (w0[i] * w0[i] + w1[i] * w1[i])).sum::<f64>() * u.grid().cell_volume();
    (num, w.norm_sq())
}

/// `Λ(u, v) = ∫|S(v)||u−v|² / ‖u−v‖²`, and 0 when `u = v`.
pub fn lambda_pointwise(u: &GridField, v: &GridField) -> f64 {
    let (num, den) = strain_weighted(u, v);
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Distance-weighted average strain over a permutation coupling of `a` and `b`.
pub fn lambda_coupled(plan: &transport::TransportPlan, a: &Ensemble, b: &Ensemble) -> Result<f64> {
    let perm =
        plan.permutation().ok_or_else(|| Error::InvalidArgument("coupled strain needs a permutation plan".into()))?;
    let pairs: Vec<(usize, usize)> = perm.iter().copied().enumerate().collect();
    let parts = par::map(&pairs, |&(i, j)| strain_weighted(&a.members()[i], &b.members()[j]));
    Ok(coupled_ratio(&parts))
}

fn coupled_ratio(parts: &[(f64, f64)]) -> f64 {
    let num: f64 = parts.iter().map(|p| p.0).sum();
    let den: f64 = parts.iter().map(|p| p.1).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Largest pointwise strain norm of `v`.
pub fn max_strain(v: &GridField) -> f64 {
    strain(v).norm().into_iter().fold(0.0, f64::max)
}

/// Outcome of the L² difference identity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `max |d/dt ½‖w‖² + ∫(w⊗w):S(v)| / max |∫(w⊗w):S(v)|` over interior checkpoints.
    pub residual: f64,
    pub max_rhs: f64,
    pub step: f64,
    pub checkpoints: usize,
}

/// Compare a 4th-order central difference of `½‖w(t)‖²` with `−∫(w⊗w):S(v)`.
pub fn l2_difference_identity_check(
    u0: &GridField,
    v0: &GridField,
    cfg: &EulerConfig,
    t: f64,
) -> Result<IdentityCheck> {
    let steps = (t / cfg.dt - 1e-9).ceil() as usize;
    if steps < 4 {
        return Err(Error::InvalidArgument("identity check needs at least 4 steps".into()));
    }
    let h = t / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let traj = evolve_members(&[u0.clone(), v0.clone()], cfg, &times)?;
    let (us, vs) = (&traj[0], &traj[1]);
    let half_energy: Vec<f64> = us.iter().zip(vs).map(|(u, v)| 0.5 * u.dist_sq(v)).collect();
    let interior: Vec<usize> = (2..=steps - 2).collect();
    let pairs = par::map(&interior, |&j| {
        let lhs = (-half_energy[j + 2] + 8.0 * half_energy[j + 1] - 8.0 * half_energy[j - 1] + half_energy[j - 2])
            / (12.0 * h);
        let w = &us[j] - &vs[j];
        (lhs, -strain_pairing(&w, &vs[j]))
    });
    let max_rhs = pairs.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    let max_err = pairs.iter().fold(0.0f64, |m, p| m.max((p.0 - p.1).abs()));
    let residual = if max_rhs > 0.0 {
        max_err / max_rhs
    } else if max_err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(IdentityCheck { residual, max_rhs, step: h, checkpoints: interior.len() })
}

/// Floor below which the identity residual counts as resolved.
pub const IDENTITY_FLOOR: f64 = 1e-4;
/// Smallest observed convergence order accepted under dt halving.
pub const IDENTITY_MIN_ORDER: f64 = 1.8;

/// Identity residuals on a sequence of halved time steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRefinement {
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `log₂(rᵢ / rᵢ₊₁)` for each halving.
    pub orders: Vec<f64>,
    /// `C` in `r ≤ C·dt²`, fitted on the coarsest step.
    pub c: f64,
    pub satisfied: bool,
}

/// Run the identity check at `dt`, `dt/2`, … (`levels` steps) and verify the decay.
///
/// A halving passes when its observed order is at least [`IDENTITY_MIN_ORDER`] or both
/// residuals already sit below [`IDENTITY_FLOOR`]; every residual must satisfy
/// `r ≤ max(IDENTITY_FLOOR, C·dt²)`.
pub fn identity_refinement(
    u0: &GridField,
    v0: &GridField,
    cfg: &EulerConfig,
    t: f64,
    levels: usize,
) -> Result<IdentityRefinement> {
    if levels < 2 {
        return Err(Error::InvalidArgument("refinement needs at least two levels".into()));
    }
    let mut steps = Vec::with_capacity(levels);
    let mut residuals = Vec::with_capacity(levels);
    for l in 0..levels {
        let mut c = *cfg;
        c.dt = cfg.dt / 2f64.powi(l as i32);
        let r = l2_difference_identity_check(u0, v0, &c, t)?;
        steps.push(r.step);
        residuals.push(r.residual);
    }
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let c = residuals[0] / steps[0].powi(2);
    let decays = residuals
        .windows(2)
        .zip(&orders)
        .all(|(w, o)| *o >= IDENTITY_MIN_ORDER || (w[0] <= IDENTITY_FLOOR && w[1] <= IDENTITY_FLOOR));
    let bounded = residuals.iter().zip(&steps).all(|(r, h)| *r <= IDENTITY_FLOOR.max(c * h * h) * (1.0 + 1e-12));
    Ok(IdentityRefinement { steps, residuals, orders, c, satisfied: decays && bounded })
}

/// One row of a conservation log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub t: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub divergence: f64,
}

/// Energy, enstrophy and spectral divergence along a trajectory.
pub fn conservation_log(times: &[f64], traj: &[GridField]) -> Result<Vec<ConservationRow>> {
    times
        .iter()
        .zip(traj)
        .map(|(&t, u)| {
            Ok(ConservationRow {
                t,
                energy: energy(u),
                enstrophy: enstrophy(u),
                divergence: fields::divergence_sup(u)?,
            })
        })
        .collect()
}

/// CSV with header `t,energy,enstrophy,divergence`.
pub fn conservation_csv(rows: &[ConservationRow]) -> String {
    let mut s = String::from("t,energy,enstrophy,divergence\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.t, r.energy, r.enstrophy, r.divergence));
    }
    s
}

/// Coupled pairs pushed through one window of the flow.
#[derive(Clone, Debug)]
pub struct WindowResult {
    pub times: Vec<f64>,
    /// `Λ̄` at each checkpoint.
    pub lambda: Vec<f64>,
    /// `max_x |S(v)|` over all second-ensemble members at each checkpoint.
    pub max_strain: Vec<f64>,
    /// Per-pair `Λ` at each checkpoint, `[pair][checkpoint]`.
    pub lambda_pairs: Vec<Vec<f64>>,
    /// Per-pair `‖w‖²` at each checkpoint.
    pub dist_sq: Vec<Vec<f64>>,
    pub end_a: Vec<GridField>,
    pub end_b: Vec<GridField>,
}

impl WindowResult {
    /// `∫ Λ̄` by the trapezoidal rule.
    pub fn alpha(&self) -> f64 {
        ensemble::trapezoid(&self.times, &self.lambda)
    }

    pub fn max_strain_integral(&self) -> f64 {
        ensemble::trapezoid(&self.times, &self.max_strain)
    }

    /// Coupled second moment `M = N⁻¹ Σ ‖wᵢ‖²` at each checkpoint.
    pub fn moment(&self) -> Vec<f64> {
        let n = self.dist_sq.len() as f64;
        (0..self.times.len()).map(|c| self.dist_sq.iter().map(|d| d[c]).sum::<f64>() / n).collect()
    }
}

/// Push paired members `(aᵢ, bᵢ)` through `[0, span]` with `checkpoints` equal intervals.
pub fn coupled_window(
    a: &[GridField],
    b: &[GridField],
    cfg: &EulerConfig,
    span: f64,
    checkpoints: usize,
) -> Result<WindowResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Mismatch("coupled window needs equal nonempty pairings".into()));
    }
    if checkpoints < 1 {
        return Err(Error::InvalidArgument("need at least one interval".into()));
    }
    let times: Vec<f64> = (0..=checkpoints).map(|c| span * c as f64 / checkpoints as f64).collect();
    let ta = evolve_members(a, cfg, &times)?;
    let tb = evolve_members(b, cfg, &times)?;
    let nc = times.len();
    let mut lambda = Vec::with_capacity(nc);
    let mut max_s = Vec::with_capacity(nc);
    let mut lambda_pairs = vec![Vec::with_capacity(nc); a.len()];
    let mut dist_sq = vec![Vec::with_capacity(nc); a.len()];
    let idx: Vec<usize> = (0..a.len()).collect();
    for c in 0..nc {
        let parts = par::map(&idx, |&i| {
            let (num, den) = strain_weighted(&ta[i][c], &tb[i][c]);
            (num, den, max_strain(&tb[i][c]))
        });
        let sums: Vec<(f64, f64)> = parts.iter().map(|p| (p.0, p.1)).collect();
        lambda.push(coupled_ratio(&sums));
        max_s.push(parts.iter().fold(0.0f64, |m, p| m.max(p.2)));
        for (i, p) in parts.iter().enumerate() {
            lambda_pairs[i].push(if p.1 > 0.0 { p.0 / p.1 } else { 0.0 });
            dist_sq[i].push(p.1);
        }
    }
    Ok(WindowResult {
        times,
        lambda,
        max_strain: max_s,
        lambda_pairs,
        dist_sq,
        end_a: ta.iter().map(|t| t[nc - 1].clone()).collect(),
        end_b: tb.iter().map(|t| t[nc - 1].clone()).collect(),
    })
}

/// Relative slack of the average-strain bounds.
pub const STRAIN_BOUND_TOL: f64 = 1e-3;

/// Outcome of the W₂ average-strain check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainBoundReport {
    pub w2_0: f64,
    pub w2_t: f64,
    pub moment_0: f64,
    pub moment_t: f64,
    pub integral_lambda: f64,
    pub integral_max_strain: f64,
    pub w2_bound: f64,
    pub moment_bound: f64,
    pub w2_satisfied: bool,
    pub moment_satisfied: bool,
    pub pointwise_satisfied: bool,
    pub lambda_below_max_strain: bool,
    pub tolerance: f64,
}

impl StrainBoundReport {
    pub fn satisfied(&self) -> bool {
        self.w2_satisfied && self.moment_satisfied && self.pointwise_satisfied && self.lambda_below_max_strain
    }
}

/// Optimal W₂ coupling at time 0, pushed through the flow; checks
/// `W₂(μ_t,ν_t) ≤ e^{∫Λ̄} W₂(μ₀,ν₀)` and `M(t) ≤ e^{2∫Λ̄} M(0)`.
pub fn w2_strain_bound_check(
    a: &Ensemble,
    b: &Ensemble,
    cfg: &EulerConfig,
    t: f64,
    checkpoints: usize,
) -> Result<StrainBoundReport> {
    if checkpoints < 8 {
        return Err(Error::InvalidArgument("need at least 8 checkpoints".into()));
    }
    let (w2_0, plan) = transport::wasserstein_exact(a, b, 2)?;
    let perm = plan.permutation().unwrap();
    let pa: Vec<GridField> = a.members().to_vec();
    let pb: Vec<GridField> = perm.iter().map(|&j| b.members()[j].clone()).collect();
    let win = coupled_window(&pa, &pb, cfg, t, checkpoints)?;
    let (w2_t, _) =
        transport::wasserstein_exact(&Ensemble::new(win.end_a.clone())?, &Ensemble::new(win.end_b.clone())?, 2)?;
    let m = win.moment();
    let integral = win.alpha();
    let tol = STRAIN_BOUND_TOL;
    let w2_bound = integral.exp() * w2_0;
    let moment_bound = (2.0 * integral).exp() * m[0];
    let pointwise_satisfied = (0..pa.len()).all(|i| {
        let li = ensemble::trapezoid(&win.times, &win.lambda_pairs[i]);
        let d = &win.dist_sq[i];
        d[d.len() - 1].sqrt() <= li.exp() * d[0].sqrt() * (1.0 + tol)
    });
    let lambda_below_max_strain = win.lambda.iter().zip(&win.max_strain).all(|(l, s)| *l <= s * (1.0 + 1e-12));
    Ok(StrainBoundReport {
        w2_0,
        w2_t,
        moment_0: m[0],
        moment_t: m[m.len() - 1],
        integral_lambda: integral,
        integral_max_strain: win.max_strain_integral(),
        w2_bound,
        moment_bound,
        w2_satisfied: w2_t <= w2_bound * (1.0 + tol),
        moment_satisfied: m[m.len() - 1] <= moment_bound * (1.0 + tol),
        pointwise_satisfied,
        lambda_below_max_strain,
        tolerance: tol,
    })
}

/// Divergence-free Taylor–Green field with vorticity `cos x + cos y`.
pub fn taylor_green(grid: Grid) -> GridField {
    GridField::from_fn(grid, 2, |x, c| if c == 0 { -x[1].sin() } else { x[0].sin() })
}
