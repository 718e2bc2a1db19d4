//! Hierarchy-residual certification through product observables, the resolved
//! Euler drift and the drift-defect identity, plus the Gaussian probability-flow testbed.

use crate::ensemble::{self, Ensemble, LawCurve};
use crate::error::{Error, Result};
use crate::euler;
use crate::fields::{self, Grid, GridField};
use crate::par;
use crate::stream;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// `B*_K(u) = P≤K Leray(−∇·(u⊗u))`.
pub fn euler_drift_resolved(u: &GridField, k: usize) -> Result<GridField> {
    Ok(fields::band_limit(&euler::drift(u)?, k))
}

/// `∫(u⊗u):∇φ` by direct grid quadrature, the weak form of the Euler drift against a divergence-free `φ`.
pub fn drift_pairing_quadrature(u: &GridField, phi: &GridField) -> Result<f64> {
    u.same_shape(phi)?;
    let g = u.grid();
    let d = g.d();
    let grad = fields::gradient(phi);
    let np = g.points();
    let mut acc = 0.0;
    for x in 0..np {
        for i in 0..d {
            for j in 0..d {
                acc += u.component(i)[x] * u.component(j)[x] * grad.component(j * d + i)[x];
            }
        }
    }
    Ok(acc * g.cell_volume())
}

/// Divergence-free space tests with the profile `θ(t) = (1 − t/T)³`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestTuple {
    pub tests: Vec<GridField>,
    pub horizon: f64,
}

impl TestTuple {
    pub fn new(tests: Vec<GridField>, horizon: f64) -> Result<TestTuple> {
        if tests.is_empty() || tests.len() > 3 {
            return Err(Error::InvalidArgument("between 1 and 3 tests".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        for t in &tests {
            t.same_shape(&tests[0])?;
            let div = fields::divergence_sup(t)?;
            if div > 1e-12 * fields::grad_sup(t).max(1.0) {
                return Err(Error::InvalidArgument(format!("test divergence {div:e}")));
            }
        }
        Ok(TestTuple { tests, horizon })
    }

    /// `k` unit-norm random tests band-limited to `k_test`.
    pub fn random(grid: Grid, k: usize, k_test: usize, horizon: f64, seed: u64) -> Result<TestTuple> {
        let tests = (0..k)
            .map(|j| {
                let f = fields::random_divfree(grid, 0.0, k_test, stream::stream_seed(seed, j as u64, 0))?;
                let nrm = f.norm();
                Ok(f.scaled(1.0 / nrm))
            })
            .collect::<Result<Vec<_>>>()?;
        TestTuple::new(tests, horizon)
    }

    pub fn k(&self) -> usize {
        self.tests.len()
    }

    pub fn theta(&self, t: f64) -> f64 {
        (1.0 - t / self.horizon).powi(3)
    }

    pub fn theta_dot(&self, t: f64) -> f64 {
        -3.0 * (1.0 - t / self.horizon).powi(2) / self.horizon
    }

    fn pairings(&self, u: &GridField) -> Vec<f64> {
        self.tests.iter().map(|p| u.inner(p)).collect()
    }

    /// `Π_{j≠i} θ⟨u,φⱼ⟩`.
    fn others(&self, t: f64, psi: &[f64], i: usize) -> f64 {
        let th = self.theta(t);
        (0..psi.len()).filter(|&j| j != i).map(|j| th * psi[j]).product()
    }

    /// `F(t,u) = Πⱼ θ(t)⟨u,φⱼ⟩`.
    pub fn value(&self, t: f64, u: &GridField) -> f64 {
        let th = self.theta(t);
        self.pairings(u).iter().map(|p| th * p).product()
    }

    /// `∂ₜF(t,u) = Σᵢ θ'⟨u,φᵢ⟩ Π_{j≠i} θ⟨u,φⱼ⟩`.
    pub fn time_derivative(&self, t: f64, u: &GridField) -> f64 {
        let psi = self.pairings(u);
        let dth = self.theta_dot(t);
        (0..psi.len()).map(|i| dth * psi[i] * self.others(t, &psi, i)).sum()
    }

    /// `D_uF(t,u)[w] = Σᵢ θ⟨w,φᵢ⟩ Π_{j≠i} θ⟨u,φⱼ⟩`.
    pub fn directional(&self, t: f64, u: &GridField, w: &GridField) -> f64 {
        let psi = self.pairings(u);
        let th = self.theta(t);
        (0..psi.len()).map(|i| th * w.inner(&self.tests[i]) * self.others(t, &psi, i)).sum()
    }

    /// `Σᵢ ‖φᵢ‖ Π_{j≠i} ‖φⱼ‖` with `L^∞_t L²_x` norms.
    pub fn norm_factor(&self) -> f64 {
        let n: Vec<f64> = self.tests.iter().map(|p| p.norm()).collect();
        (0..n.len()).map(|i| n[i] * (0..n.len()).filter(|&j| j != i).map(|j| n[j]).product::<f64>()).sum()
    }
}

/// Learned drift `B^Δ(u) = B*_K(u) + ε·(f + δ_h u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSpec {
    pub k: usize,
    pub epsilon: f64,
    pub forcing: GridField,
    pub shift: [i64; 2],
}

impl DriftSpec {
    pub fn new(k: usize, epsilon: f64, forcing: GridField, shift: [i64; 2]) -> Result<DriftSpec> {
        if !fields::is_band_limited(&forcing, k, 1e-12) {
            return Err(Error::NotBandLimited(k));
        }
        Ok(DriftSpec { k, epsilon, forcing, shift })
    }

    /// Defect direction `G(u)`.
    pub fn perturbation(&self, u: &GridField) -> GridField {
        let mut g = fields::increment(u, &self.shift);
        g.add_scaled(1.0, &self.forcing);
        g
    }

    pub fn target(&self, u: &GridField) -> Result<GridField> {
        euler_drift_resolved(u, self.k)
    }

    pub fn learned(&self, u: &GridField) -> Result<GridField> {
        let mut b = self.target(u)?;
        if self.epsilon != 0.0 {
            b.add_scaled(self.epsilon, &self.perturbation(u));
        }
        Ok(b)
    }
}

/// Law curve driven by `drift`: per-member RK4 with step `dt` for `steps` steps, every step stored.
pub fn drift_driven_curve(
    e0: &Ensemble,
    drift: impl Fn(&GridField) -> Result<GridField> + Sync,
    dt: f64,
    steps: usize,
) -> Result<LawCurve> {
    if !(dt > 0.0) || steps == 0 {
        return Err(Error::InvalidArgument("dt > 0 and at least one step".into()));
    }
    let paths = par::map(e0.members(), |u| -> Result<Vec<GridField>> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut x = u.clone();
        out.push(x.clone());
        for _ in 0..steps {
            let k1 = drift(&x)?;
            let mut y = x.clone();
            y.add_scaled(0.5 * dt, &k1);
            let k2 = drift(&y)?;
            let mut y = x.clone();
            y.add_scaled(0.5 * dt, &k2);
            let k3 = drift(&y)?;
            let mut y = x.clone();
            y.add_scaled(dt, &k3);
            let k4 = drift(&y)?;
            x.add_scaled(dt / 6.0, &k1);
            x.add_scaled(dt / 3.0, &k2);
            x.add_scaled(dt / 3.0, &k3);
            x.add_scaled(dt / 6.0, &k4);
            if !x.is_finite() {
                return Err(Error::NonFinite("drift-driven curve".into()));
            }
            out.push(x.clone());
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let times = (0..=steps).map(|j| j as f64 * dt).collect();
    let ensembles =
        (0..=steps).map(|j| Ensemble::new(paths.iter().map(|p| p[j].clone()).collect())).collect::<Result<Vec<_>>>()?;
    LawCurve::new(times, ensembles)
}

/// Composite Simpson weights on uniform grids with an even number of intervals, trapezoid otherwise.
pub fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 3 || !(n - 1).is_multiple_of(2) {
        return ensemble::trapezoid_weights(times);
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return ensemble::trapezoid_weights(times);
    }
    (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

/// Time quadrature of `E[g(t,u)]`.
fn time_integral(curve: &LawCurve, g: impl Fn(f64, &GridField) -> Result<f64> + Sync) -> Result<f64> {
    let w = time_weights(curve.times());
    let mut total = 0.0;
    for (j, (&t, e)) in curve.times().iter().zip(curve.ensembles()).enumerate() {
        let vals = par::map(e.members(), |u| g(t, u)).into_iter().collect::<Result<Vec<_>>>()?;
        total += w[j] * par::ordered_sum(&vals) / e.len() as f64;
    }
    Ok(total)
}

fn initial_term(curve: &LawCurve, tt: &TestTuple) -> f64 {
    let e = &curve.ensembles()[0];
    let v: Vec<f64> = e.members().iter().map(|u| tt.value(0.0, u)).collect();
    par::ordered_sum(&v) / e.len() as f64
}

fn check_horizon(curve: &LawCurve, tt: &TestTuple) -> Result<()> {
    if (curve.horizon() - tt.horizon).abs() > 1e-12 * tt.horizon {
        return Err(Error::Mismatch(format!(
            "curve horizon {} differs from test horizon {}",
            curve.horizon(),
            tt.horizon
        )));
    }
    Ok(())
}

/// `∫ E[∂ₜF + D_uF[b(u)]] dt + E[F(0)]` for an arbitrary target drift `b`.
pub fn residual_direct_with(
    curve: &LawCurve,
    tt: &TestTuple,
    target: impl Fn(&GridField) -> Result<GridField> + Sync,
) -> Result<f64> {
    check_horizon(curve, tt)?;
    let body = time_integral(curve, |t, u| Ok(tt.time_derivative(t, u) + tt.directional(t, u, &target(u)?)))?;
    Ok(body + initial_term(curve, tt))
}

/// Resolved hierarchy residual evaluated directly from the law curve.
pub fn residual_direct(curve: &LawCurve, tt: &TestTuple, k: usize) -> Result<f64> {
    residual_direct_with(curve, tt, |u| euler_drift_resolved(u, k))
}

/// `∫ E[D_uF[b(u) − b̂(u)]] dt` for target `b` and learned `b̂`.
pub fn residual_defect_with(
    curve: &LawCurve,
    tt: &TestTuple,
    target: impl Fn(&GridField) -> Result<GridField> + Sync,
    learned: impl Fn(&GridField) -> Result<GridField> + Sync,
) -> Result<f64> {
    check_horizon(curve, tt)?;
    time_integral(curve, |t, u| {
        let d = &target(u)? - &learned(u)?;
        Ok(tt.directional(t, u, &d))
    })
}

/// Resolved residual through the drift defect `B*_K − B^Δ`.
pub fn residual_via_defect(curve: &LawCurve, tt: &TestTuple, drift: &DriftSpec) -> Result<f64> {
    residual_defect_with(curve, tt, |u| drift.target(u), |u| drift.learned(u))
}

/// Relative slack on the regression bound.
pub const RESIDUAL_BOUND_TOL: f64 = 1e-9;

/// Drift-regression bound components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual_direct: f64,
    pub residual_defect: f64,
    pub rel_gap: f64,
    #[serde(rename = "L_drift")]
    pub l_drift: f64,
    #[serde(rename = "M_2k")]
    pub m_2k: f64,
    pub norm_factor: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub tolerance: f64,
}

/// Both residual routes, the drift loss, the moment and the regression bound checked on the defect route.
pub fn residual_bound_check(curve: &LawCurve, tt: &TestTuple, drift: &DriftSpec) -> Result<ResidualReport> {
    check_horizon(curve, tt)?;
    let k = tt.k() as i32;
    let w = time_weights(curve.times());
    let (mut direct, mut defect, mut l_drift, mut m_2k) = (0.0, 0.0, 0.0, 0.0f64);
    for (j, (&t, e)) in curve.times().iter().zip(curve.ensembles()).enumerate() {
        let terms = par::map(e.members(), |u| -> Result<[f64; 4]> {
            let b = drift.target(u)?;
            let mut learned = b.clone();
            learned.add_scaled(drift.epsilon, &drift.perturbation(u));
            let d = &b - &learned;
            Ok([
                tt.time_derivative(t, u) + tt.directional(t, u, &b),
                tt.directional(t, u, &d),
                d.norm_sq(),
                u.norm_sq().powi(k),
            ])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mean = |c: usize| par::ordered_sum(&terms.iter().map(|r| r[c]).collect::<Vec<_>>()) / e.len() as f64;
        direct += w[j] * mean(0);
        defect += w[j] * mean(1);
        l_drift += w[j] * mean(2);
        m_2k = m_2k.max(mean(3));
    }
    direct += initial_term(curve, tt);
    let factor = tt.norm_factor();
    let kf = k as f64;
    let bound = curve.horizon().sqrt() * m_2k.powf((kf - 1.0) / (2.0 * kf)) * factor * l_drift.sqrt();
    let e0 = &curve.ensembles()[0];
    let f0: f64 = e0.members().iter().map(|u| tt.value(0.0, u).abs()).sum::<f64>() / e0.len() as f64;
    let scale = direct.abs().max(defect.abs()).max(f0);
    let rel_gap = if scale > 0.0 { (direct - defect).abs() / scale } else { 0.0 };
    Ok(ResidualReport {
        residual_direct: direct,
        residual_defect: defect,
        rel_gap,
        l_drift,
        m_2k,
        norm_factor: factor,
        bound,
        satisfied: defect.abs() <= bound * (1.0 + RESIDUAL_BOUND_TOL),
        tolerance: RESIDUAL_BOUND_TOL,
    })
}

/// Noise schedule of the forward diffusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    /// `a = 0`, constant `σ`.
    VarianceExploding { sigma: f64 },
    /// `a = −½β(τ)x`, `σ² = β(τ)`, `β` linear from `beta_min` to `beta_max`.
    VariancePreserving { beta_min: f64, beta_max: f64 },
}

impl Schedule {
    pub fn sigma(&self, tau: f64) -> f64 {
        match *self {
            Schedule::VarianceExploding { sigma } => sigma,
            Schedule::VariancePreserving { .. } => self.beta(tau).sqrt(),
        }
    }

    fn beta(&self, tau: f64) -> f64 {
        match *self {
            Schedule::VarianceExploding { .. } => 0.0,
            Schedule::VariancePreserving { beta_min, beta_max } => beta_min + (beta_max - beta_min) * tau,
        }
    }

    /// Mean decay `α(τ)` and added variance `v(τ)` of the marginal `α x₀ + √v Z`.
    pub fn marginal_coefficients(&self, tau: f64) -> (f64, f64) {
        match *self {
            Schedule::VarianceExploding { sigma } => (1.0, sigma * sigma * tau),
            Schedule::VariancePreserving { beta_min, beta_max } => {
                let b = beta_min * tau + 0.5 * (beta_max - beta_min) * tau * tau;
                let a = (-0.5 * b).exp();
                (a, 1.0 - a * a)
            }
        }
    }

    /// Forward drift coefficient: `a(x,τ) = −c(τ)·x`.
    fn drift_rate(&self, tau: f64) -> f64 {
        0.5 * self.beta(tau)
    }
}

/// Affine map `x ↦ Mx + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl Affine {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    fn sub(&self, o: &Affine) -> Affine {
        Affine { matrix: &self.matrix - &o.matrix, offset: &self.offset - &o.offset }
    }

    /// `E‖MX + c‖²` for `X ~ N(m, Σ)`.
    pub fn mean_square(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let shifted = &self.matrix * mean + &self.offset;
        (&self.matrix * cov * self.matrix.transpose()).trace() + shifted.norm_squared()
    }
}

/// Gaussian data pushed through a linear forward diffusion with a perturbed learned score
/// `s_θ = s_τ + c(Ax + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDiffusion {
    pub mean0: DVector<f64>,
    pub cov0: DMatrix<f64>,
    pub schedule: Schedule,
    pub score_matrix: DMatrix<f64>,
    pub score_offset: DVector<f64>,
}

impl GaussianDiffusion {
    pub fn new(
        mean0: DVector<f64>,
        cov0: DMatrix<f64>,
        schedule: Schedule,
        score_matrix: DMatrix<f64>,
        score_offset: DVector<f64>,
    ) -> Result<GaussianDiffusion> {
        let n = mean0.len();
        if cov0.shape() != (n, n) || score_matrix.shape() != (n, n) || score_offset.len() != n {
            return Err(Error::Mismatch("diffusion dimensions".into()));
        }
        if (&cov0 - cov0.transpose()).amax() > 1e-14 * cov0.amax() || cov0.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("covariance must be symmetric positive definite".into()));
        }
        Ok(GaussianDiffusion { mean0, cov0, schedule, score_matrix, score_offset })
    }

    pub fn dim(&self) -> usize {
        self.mean0.len()
    }

    /// Mean and covariance of `p_τ`.
    pub fn marginal(&self, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let (a, v) = self.schedule.marginal_coefficients(tau);
        let n = self.dim();
        (&self.mean0 * a, &self.cov0 * (a * a) + DMatrix::identity(n, n) * v)
    }

    /// `s_τ(x) = −Σ_τ⁻¹(x − m_τ)`.
    pub fn score(&self, tau: f64) -> Affine {
        let (m, c) = self.marginal(tau);
        let inv = c.cholesky().expect("marginal covariance is positive definite").inverse();
        Affine { offset: &inv * &m, matrix: -inv }
    }

    pub fn learned_score(&self, tau: f64, c: f64) -> Affine {
        let s = self.score(tau);
        Affine { matrix: s.matrix + &self.score_matrix * c, offset: s.offset + &self.score_offset * c }
    }

    fn forward_drift(&self, tau: f64) -> Affine {
        let n = self.dim();
        Affine { matrix: DMatrix::identity(n, n) * -self.schedule.drift_rate(tau), offset: DVector::zeros(n) }
    }

    /// `b = a − ½σ² s` for the given score.
    pub fn pf_drift(&self, tau: f64, score: &Affine) -> Affine {
        let s2 = self.schedule.sigma(tau).powi(2);
        let a = self.forward_drift(tau);
        Affine { matrix: a.matrix - &score.matrix * (0.5 * s2), offset: a.offset - &score.offset * (0.5 * s2) }
    }
}

/// One τ of the score-to-drift identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfTauGap {
    pub tau: f64,
    pub drift_side: f64,
    pub score_side: f64,
    pub gap: f64,
}

/// Moment comparison of the PF-ODE ensemble against `p_τ`, in standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub tau: f64,
    pub mean_z: f64,
    pub cov_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfReport {
    pub per_tau: Vec<PfTauGap>,
    pub integrated_drift: f64,
    pub integrated_score: f64,
    pub integrated_gap: f64,
    pub moments: Vec<MomentCheck>,
    pub max_gap: f64,
    pub satisfied: bool,
    pub identity_tolerance: f64,
    pub sigma_tolerance: f64,
}

/// Relative tolerance on the score-to-drift identity.
pub const PF_IDENTITY_TOL: f64 = 1e-10;
/// Standard errors allowed on Monte-Carlo moments.
pub const PF_SIGMA_TOL: f64 = 3.0;

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Score-to-drift identity per τ and integrated, plus moments of `samples` PF-ODE trajectories
/// started from `p_0` and integrated with `rk4_steps` RK4 steps per τ interval.
pub fn pf_identities(
    gd: &GaussianDiffusion,
    taus: &[f64],
    c: f64,
    samples: usize,
    rk4_steps: usize,
    seed: u64,
) -> Result<PfReport> {
    if taus.len() < 2 || taus.windows(2).any(|w| w[1] <= w[0]) || taus[0] < 0.0 || taus[taus.len() - 1] > 1.0 {
        return Err(Error::InvalidArgument("τ grid must increase within [0,1]".into()));
    }
    let mut per_tau = Vec::with_capacity(taus.len());
    for &tau in taus {
        let (m, cov) = gd.marginal(tau);
        let exact = gd.pf_drift(tau, &gd.score(tau));
        let learned = gd.pf_drift(tau, &gd.learned_score(tau, c));
        let drift_side = learned.sub(&exact).mean_square(&m, &cov);
        let score_diff = gd.learned_score(tau, c).sub(&gd.score(tau));
        let score_side = 0.25 * gd.schedule.sigma(tau).powi(4) * score_diff.mean_square(&m, &cov);
        per_tau.push(PfTauGap { tau, drift_side, score_side, gap: rel(drift_side, score_side) });
    }
    let integrated_drift = ensemble::trapezoid(taus, &per_tau.iter().map(|p| p.drift_side).collect::<Vec<_>>());
    let integrated_score = ensemble::trapezoid(taus, &per_tau.iter().map(|p| p.score_side).collect::<Vec<_>>());
    let integrated_gap = rel(integrated_drift, integrated_score);
    let moments = if samples > 1 { pf_moment_checks(gd, taus, samples, rk4_steps, seed)? } else { vec![] };
    let max_gap = per_tau.iter().map(|p| p.gap).fold(integrated_gap, f64::max);
    let satisfied =
        max_gap <= PF_IDENTITY_TOL && moments.iter().all(|m| m.mean_z <= PF_SIGMA_TOL && m.cov_z <= PF_SIGMA_TOL);
    Ok(PfReport {
        per_tau,
        integrated_drift,
        integrated_score,
        integrated_gap,
        moments,
        max_gap,
        satisfied,
        identity_tolerance: PF_IDENTITY_TOL,
        sigma_tolerance: PF_SIGMA_TOL,
    })
}

fn pf_moment_checks(
    gd: &GaussianDiffusion,
    taus: &[f64],
    samples: usize,
    rk4_steps: usize,
    seed: u64,
) -> Result<Vec<MomentCheck>> {
    let n = gd.dim();
    let (m0, c0) = gd.marginal(taus[0]);
    let chol = c0.cholesky().expect("positive definite").l();
    let idx: Vec<usize> = (0..samples).collect();
    let paths: Vec<Vec<DVector<f64>>> = par::map(&idx, |&i| {
        let mut rng = stream::stream_rng(seed, i as u64, 0);
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let mut x = &m0 + &chol * z;
        let mut out = vec![x.clone()];
        let field = |tau: f64, x: &DVector<f64>| gd.pf_drift(tau, &gd.score(tau)).apply(x);
        for w in taus.windows(2) {
            let h = (w[1] - w[0]) / rk4_steps as f64;
            for s in 0..rk4_steps {
                let t = w[0] + s as f64 * h;
                let k1 = field(t, &x);
                let k2 = field(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
                let k3 = field(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
                let k4 = field(t + h, &(&x + &k3 * h));
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            out.push(x.clone());
        }
        out
    });
    let nn = samples as f64;
    let mut checks = Vec::with_capacity(taus.len());
    for (j, &tau) in taus.iter().enumerate() {
        let (m, cov) = gd.marginal(tau);
        let mut mean = DVector::zeros(n);
        for p in &paths {
            mean += &p[j];
        }
        mean /= nn;
        let mut emp = DMatrix::zeros(n, n);
        for p in &paths {
            let d = &p[j] - &m;
            emp += &d * d.transpose();
        }
        emp /= nn;
        let mut mean_z: f64 = 0.0;
        let mut cov_z: f64 = 0.0;
        for a in 0..n {
            mean_z = mean_z.max((mean[a] - m[a]).abs() / (cov[(a, a)] / nn).sqrt());
            for b in 0..n {
                let sd = ((cov[(a, a)] * cov[(b, b)] + cov[(a, b)].powi(2)) / nn).sqrt();
                cov_z = cov_z.max((emp[(a, b)] - cov[(a, b)]).abs() / sd);
            }
        }
        checks.push(MomentCheck { tau, mean_z, cov_z });
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(2, 16).unwrap()
    }

    #[test]
    fn zero_field_has_zero_drift() {
        let z = GridField::zeros(grid(), 2);
        assert_eq!(euler_drift_resolved(&z, 4).unwrap().norm(), 0.0);
    }

    #[test]
    fn drift_pairing_matches_quadrature() {
        let g = Grid::new(2, 32).unwrap();
        let u = fields::random_divfree(g, 2.0, 4, 3).unwrap();
        let b = euler_drift_resolved(&u, 5).unwrap();
        for s in 0..5 {
            let phi = fields::random_divfree(g, 0.0, 5, 40 + s).unwrap();
            let q = drift_pairing_quadrature(&u, &phi).unwrap();
            assert!((b.inner(&phi) - q).abs() <= 1e-10 * q.abs().max(1.0), "{} {}", b.inner(&phi), q);
        }
    }

    #[test]
    fn product_derivative_matches_finite_difference() {
        let tt = TestTuple::random(grid(), 2, 4, 1.0, 5).unwrap();
        let u = fields::random_divfree(grid(), 1.0, 4, 6).unwrap();
        let w = fields::random_divfree(grid(), 1.0, 4, 7).unwrap();
        let h = 1e-5;
        let mut up = u.clone();
        up.add_scaled(h, &w);
        let mut um = u.clone();
        um.add_scaled(-h, &w);
        let fd = (tt.value(0.3, &up) - tt.value(0.3, &um)) / (2.0 * h);
        let an = tt.directional(0.3, &u, &w);
        assert!((fd - an).abs() <= 1e-7 * an.abs().max(1e-3));
        let ft = (tt.value(0.3 + h, &u) - tt.value(0.3 - h, &u)) / (2.0 * h);
        assert!((ft - tt.time_derivative(0.3, &u)).abs() <= 1e-7);
    }

    #[test]
    fn one_dimensional_gaussian_closed_form() {
        let sigma = 0.7;
        let c = 0.3;
        let gd = GaussianDiffusion::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            Schedule::VarianceExploding { sigma },
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        let r = pf_identities(&gd, &[0.0, 0.5, 1.0], c, 0, 1, 0).unwrap();
        for p in &r.per_tau {
            let var = 1.0 + sigma * sigma * p.tau;
            let oracle = 0.25 * sigma.powi(4) * c * c * var;
            assert!((p.drift_side - oracle).abs() <= 1e-14);
            assert!((p.score_side - oracle).abs() <= 1e-14);
        }
    }
}
