//! Built-in one-step generative kernels with internal-time paths, mixture
//! interpolation, continuity-equation checks and path-regularity diagnostics.

use crate::ensemble::{Ensemble, LawCurve};
use crate::error::{Error, Result};
use crate::euler::{self, EulerConfig};
use crate::fields::{self, GridField, SpecField};
use crate::par;
use crate::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which one-step kernel to sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelKind {
    /// `δ_{S_Δt(u)}`; the path is the reference trajectory.
    DeterministicMap,
    /// Straight-line drift toward `S_Δt(u)` plus `a·sin(πτ)·δ_h U`.
    RectifiedFlow {
        #[serde(default)]
        perturbation: f64,
        #[serde(default = "default_shift")]
        shift: [i64; 2],
    },
    /// Exact probability-flow ODE of a Gaussian diffusion centred at `S_Δt(u)`.
    PfOde { data_scale: f64, sigma: f64 },
    /// `S_Δt(u) + b·δ_h S_Δt(u) + noise`, reached along a straight line from `u`.
    PerturbedReference {
        #[serde(default)]
        bias: f64,
        #[serde(default = "default_shift")]
        shift: [i64; 2],
    },
}

fn default_shift() -> [i64; 2] {
    [1, 0]
}

/// Full description of a one-step kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub internal_steps: usize,
    /// Amplitude of the Gaussian reference law (rectified flow) or of the added noise.
    #[serde(default)]
    pub noise_scale: f64,
    /// Band limit of the divergence-free noise fields.
    pub noise_k_max: usize,
    /// Physical step `Δt`.
    pub step_dt: f64,
    pub euler: EulerConfig,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.internal_steps < 1 {
            return Err(Error::InvalidArgument("internal steps must be ≥ 1".into()));
        }
        if !(self.noise_scale >= 0.0) || !(self.step_dt > 0.0) {
            return Err(Error::InvalidArgument("noise scale must be ≥ 0 and the step positive".into()));
        }
        if let KernelKind::PfOde { data_scale, sigma } = self.kind {
            if !(data_scale > 0.0 && sigma > 0.0) {
                return Err(Error::InvalidArgument("pf-ode scales must be positive".into()));
            }
        }
        Ok(())
    }

    /// True when every segment starts at its input state.
    pub fn starts_at_input(&self) -> bool {
        match self.kind {
            KernelKind::DeterministicMap | KernelKind::PerturbedReference { .. } => true,
            KernelKind::RectifiedFlow { .. } => self.noise_scale == 0.0,
            KernelKind::PfOde { .. } => false,
        }
    }
}

/// Unit Gaussian divergence-free field with `E‖ξ‖₂² = 1` and flat spectrum up to `k_max`.
pub fn unit_noise<R: Rng + ?Sized>(u: &GridField, k_max: usize, rng: &mut R) -> Result<GridField> {
    fields::random_divfree_with(u.grid(), 0.0, k_max, rng)
}

/// Per-member data shared by every internal-time evaluation.
struct Segment {
    input: GridField,
    start: GridField,
    target: GridField,
}

fn drift(spec: &KernelSpec, seg: &Segment, x: &GridField, tau: f64) -> Result<GridField> {
    match spec.kind {
        KernelKind::DeterministicMap => Ok(euler::drift(x)?.scaled(spec.step_dt)),
        KernelKind::RectifiedFlow { perturbation, shift } => {
            let mut v = &seg.target - &seg.start;
            if perturbation != 0.0 {
                v.add_scaled(perturbation * (PI * tau).sin(), &fields::increment(x, &shift));
            }
            Ok(v)
        }
        KernelKind::PfOde { data_scale, sigma } => {
            let s2 = sigma * sigma;
            let var = data_scale * data_scale + s2 * (1.0 - tau);
            Ok((x - &seg.target).scaled(-0.5 * s2 / var))
        }
        KernelKind::PerturbedReference { .. } => Ok(&seg.target - &seg.start),
    }
}

fn rk4_step(spec: &KernelSpec, seg: &Segment, x: &GridField, tau: f64, h: f64) -> Result<GridField> {
    let k1 = drift(spec, seg, x, tau)?;
    let mut y = x.clone();
    y.add_scaled(0.5 * h, &k1);
    let k2 = drift(spec, seg, &y, tau + 0.5 * h)?;
    let mut y = x.clone();
    y.add_scaled(0.5 * h, &k2);
    let k3 = drift(spec, seg, &y, tau + 0.5 * h)?;
    let mut y = x.clone();
    y.add_scaled(h, &k3);
    let k4 = drift(spec, seg, &y, tau + h)?;
    let mut out = x.clone();
    out.add_scaled(h / 6.0, &k1);
    out.add_scaled(h / 3.0, &k2);
    out.add_scaled(h / 3.0, &k3);
    out.add_scaled(h / 6.0, &k4);
    if !out.is_finite() {
        return Err(Error::NonFinite("sampler path".into()));
    }
    Ok(out)
}

fn prepare(u: &GridField, spec: &KernelSpec, seed: u64) -> Result<Segment> {
    spec.validate()?;
    let mut rng = stream::stream_rng(seed, 0, 0);
    let reference = euler::evolve(u, &spec.euler, spec.step_dt)?;
    let (start, target) = match spec.kind {
        KernelKind::DeterministicMap => (u.clone(), reference),
        KernelKind::RectifiedFlow { .. } => {
            let start = if spec.noise_scale > 0.0 {
                let mut s = u.clone();
                s.add_scaled(spec.noise_scale, &unit_noise(u, spec.noise_k_max, &mut rng)?);
                s
            } else {
                u.clone()
            };
            (start, reference)
        }
        KernelKind::PfOde { data_scale, sigma } => {
            let spread = (data_scale * data_scale + sigma * sigma).sqrt();
            let mut s = reference.clone();
            s.add_scaled(spread, &unit_noise(u, spec.noise_k_max, &mut rng)?);
            (s, reference)
        }
        KernelKind::PerturbedReference { bias, shift } => {
            let mut t = reference.clone();
            if bias != 0.0 {
                t.add_scaled(bias, &fields::increment(&reference, &shift));
            }
            if spec.noise_scale > 0.0 {
                t.add_scaled(spec.noise_scale, &unit_noise(u, spec.noise_k_max, &mut rng)?);
            }
            (u.clone(), t)
        }
    };
    Ok(Segment { input: u.clone(), start, target })
}

/// Integrate the internal ODE through the nodes `taus` (first node must be 0).
///
/// Each interval is split into `⌈Δτ · internal_steps⌉` RK4 substeps. With
/// `record_substeps` every substep state is returned, otherwise one state per node.
fn integrate(
    spec: &KernelSpec,
    seg: &Segment,
    taus: &[f64],
    record_substeps: bool,
) -> Result<(Vec<f64>, Vec<GridField>)> {
    if taus.first() != Some(&0.0) || taus.windows(2).any(|w| w[1] <= w[0]) || taus[taus.len() - 1] > 1.0 {
        return Err(Error::InvalidArgument("τ nodes must start at 0, increase, and stay ≤ 1".into()));
    }
    let mut x = seg.start.clone();
    let mut nodes = vec![0.0];
    let mut states = vec![x.clone()];
    if matches!(spec.kind, KernelKind::DeterministicMap) {
        let times: Vec<f64> = if record_substeps {
            let mut t = vec![];
            for w in taus.windows(2) {
                let k = substeps(spec, w[1] - w[0]);
                let h = (w[1] - w[0]) / k as f64;
                for s in 1..=k {
                    t.push(w[0] + s as f64 * h);
                }
            }
            t
        } else {
            taus[1..].to_vec()
        };
        let phys: Vec<f64> = times.iter().map(|t| t * spec.step_dt).collect();
        let traj = euler::evolve_checkpoints(&seg.input, &spec.euler, &phys)?;
        nodes.extend(times);
        states.extend(traj);
        return Ok((nodes, states));
    }
    for w in taus.windows(2) {
        let k = substeps(spec, w[1] - w[0]);
        let h = (w[1] - w[0]) / k as f64;
        for s in 0..k {
            let tau = w[0] + s as f64 * h;
            x = rk4_step(spec, seg, &x, tau, h)?;
            if record_substeps {
                nodes.push(w[0] + (s + 1) as f64 * h);
                states.push(x.clone());
            }
        }
        if !record_substeps {
            nodes.push(w[1]);
            states.push(x.clone());
        }
    }
    Ok((nodes, states))
}

fn substeps(spec: &KernelSpec, span: f64) -> usize {
    ((span * spec.internal_steps as f64) - 1e-9).ceil().max(1.0) as usize
}

/// One draw from the kernel with its internal path.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSample {
    pub output: GridField,
    /// Internal-time nodes in `[0, 1]`.
    pub taus: Vec<f64>,
    pub path: Vec<GridField>,
}

/// Sample one step from `u`; `seed` selects the member's stream.
pub fn sample_step(u: &GridField, spec: &KernelSpec, seed: u64) -> Result<StepSample> {
    let seg = prepare(u, spec, seed)?;
    let (taus, path) = integrate(spec, &seg, &[0.0, 1.0], true)?;
    Ok(StepSample { output: path[path.len() - 1].clone(), taus, path })
}

/// Law curve of internal states at each `τ`, member `i` using stream `(seed, i, step)`.
pub fn mixture_interpolation_at_step(
    e: &Ensemble,
    spec: &KernelSpec,
    taus: &[f64],
    seed: u64,
    step: u64,
) -> Result<LawCurve> {
    let idx: Vec<usize> = (0..e.len()).collect();
    let paths = par::map(&idx, |&i| {
        let seg = prepare(&e.members()[i], spec, stream::stream_seed(seed, i as u64, step))?;
        integrate(spec, &seg, taus, false).map(|r| r.1)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let ensembles = (0..taus.len())
        .map(|j| Ensemble::new(paths.iter().map(|p| p[j].clone()).collect()))
        .collect::<Result<Vec<_>>>()?;
    LawCurve::new(taus.to_vec(), ensembles)
}

pub fn mixture_interpolation(e: &Ensemble, spec: &KernelSpec, taus: &[f64], seed: u64) -> Result<LawCurve> {
    mixture_interpolation_at_step(e, spec, taus, seed, 0)
}

/// Stored internal paths of a multi-step rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle {
    pub step_dt: f64,
    /// Internal nodes shared by every segment.
    pub taus: Vec<f64>,
    /// `segments[member][step][node]`.
    pub segments: Vec<Vec<Vec<GridField>>>,
}

impl PathBundle {
    pub fn members(&self) -> usize {
        self.segments.len()
    }

    pub fn steps(&self) -> usize {
        self.segments.first().map_or(0, |s| s.len())
    }

    /// Physical times of the concatenated path.
    pub fn times(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        for n in 0..self.steps() {
            for tau in &self.taus[1..] {
                t.push((n as f64 + tau) * self.step_dt);
            }
        }
        t
    }

    /// Concatenated path of one member; each junction is taken from the earlier segment.
    pub fn path(&self, member: usize) -> Vec<&GridField> {
        let segs = &self.segments[member];
        let mut p = vec![&segs[0][0]];
        for s in segs {
            p.extend(s[1..].iter());
        }
        p
    }

    /// Segment `n` ends exactly where segment `n+1` starts, for every member.
    pub fn junction_continuity(&self) -> bool {
        self.segments.iter().all(|segs| {
            segs.windows(2).all(|w| {
                let a = w[0][w[0].len() - 1].values();
                let b = w[1][0].values();
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
        })
    }
}

/// Roll the kernel forward `steps` times; member `i` at step `n` uses stream `(seed, i, n)`.
pub fn rollout_paths(e: &Ensemble, spec: &KernelSpec, steps: usize, seed: u64) -> Result<(PathBundle, Vec<Ensemble>)> {
    let mut current = e.clone();
    let mut laws = vec![e.clone()];
    let mut segments: Vec<Vec<Vec<GridField>>> = vec![Vec::with_capacity(steps); e.len()];
    let mut taus = vec![];
    for n in 0..steps {
        let idx: Vec<usize> = (0..current.len()).collect();
        let draws = par::map(&idx, |&i| {
            sample_step(&current.members()[i], spec, stream::stream_seed(seed, i as u64, n as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        taus = draws[0].taus.clone();
        let next: Vec<GridField> = draws.iter().map(|d| d.output.clone()).collect();
        for (i, d) in draws.into_iter().enumerate() {
            segments[i].push(d.path);
        }
        current = Ensemble::new(next)?;
        laws.push(current.clone());
    }
    Ok((PathBundle { step_dt: spec.step_dt, taus, segments }, laws))
}

/// Smooth profile of a cylindrical observable.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// `Σ cⱼ yⱼ`.
    Linear(Vec<f64>),
    /// `Π yⱼ`.
    Product,
}

/// `Φ(x) = φ(⟨x,φ₁⟩, …, ⟨x,φ_m⟩)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylindrical {
    pub tests: Vec<GridField>,
    pub profile: Profile,
}

impl Cylindrical {
    fn coords(&self, x: &GridField) -> Vec<f64> {
        self.tests.iter().map(|t| x.inner(t)).collect()
    }

    pub fn value(&self, x: &GridField) -> f64 {
        let y = self.coords(x);
        match &self.profile {
            Profile::Constant(c) => *c,
            Profile::Linear(c) => c.iter().zip(&y).map(|(a, b)| a * b).sum(),
            Profile::Product => y.iter().product(),
        }
    }

    /// `DΦ(x)[w] = Σⱼ ∂ⱼφ(y) ⟨w, φⱼ⟩`.
    pub fn derivative(&self, x: &GridField, w: &GridField) -> f64 {
        let y = self.coords(x);
        let dw: Vec<f64> = self.tests.iter().map(|t| w.inner(t)).collect();
        match &self.profile {
            Profile::Constant(_) => 0.0,
            Profile::Linear(c) => c.iter().zip(&dw).map(|(a, b)| a * b).sum(),
            Profile::Product => (0..y.len())
                .map(|j| {
                    let others: f64 = (0..y.len()).filter(|&i| i != j).map(|i| y[i]).product();
                    others * dw[j]
                })
                .sum(),
        }
    }
}

/// Finite-difference `d/dτ E[Φ]` against `E[DΦ·v]` on a uniform τ grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityCheck {
    pub residual: f64,
    pub scale: f64,
    pub dtau: f64,
}

/// Conditional continuity equation along per-member internal paths.
///
/// `taus` must be uniform; member `i` uses stream `(seed, i, 0)`.
pub fn continuity_equation_check(
    e: &Ensemble,
    spec: &KernelSpec,
    phi: &Cylindrical,
    taus: &[f64],
    seed: u64,
) -> Result<ContinuityCheck> {
    if taus.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 τ nodes".into()));
    }
    let dtau = taus[1] - taus[0];
    if taus.windows(2).any(|w| ((w[1] - w[0]) - dtau).abs() > 1e-12) {
        return Err(Error::InvalidArgument("τ nodes must be uniform".into()));
    }
    let idx: Vec<usize> = (0..e.len()).collect();
    let per_member = par::map(&idx, |&i| -> Result<(Vec<f64>, Vec<f64>)> {
        let seg = prepare(&e.members()[i], spec, stream::stream_seed(seed, i as u64, 0))?;
        let (_, states) = integrate(spec, &seg, taus, false)?;
        let mut vals = Vec::with_capacity(states.len());
        let mut ders = Vec::with_capacity(states.len());
        for (x, &tau) in states.iter().zip(taus) {
            vals.push(phi.value(x));
            ders.push(phi.derivative(x, &drift(spec, &seg, x, tau)?));
        }
        Ok((vals, ders))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = e.len() as f64;
    let mean = |j: usize, which: usize| -> f64 {
        per_member.iter().map(|p| if which == 0 { p.0[j] } else { p.1[j] }).sum::<f64>() / n
    };
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 1..taus.len() - 1 {
        let fd = (mean(j + 1, 0) - mean(j - 1, 0)) / (2.0 * dtau);
        let rhs = mean(j, 1);
        residual = residual.max((fd - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    Ok(ContinuityCheck { residual, scale, dtau })
}

/// Speed, chord and straightness constants of stored paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub c_spd: f64,
    pub c_ch: f64,
    pub c_str: f64,
    /// Largest `E‖γ(t)−γ(s)‖_{H⁻¹} / (C_spd |t−s|)` over the sampled pairs.
    pub max_increment_ratio: f64,
    pub pairs: usize,
    pub increment_satisfied: bool,
    pub chain_satisfied: bool,
    pub tolerance: f64,
}

/// H⁻¹ norm of `a − b` from precomputed spectra.
fn hminus1_dist(a: &SpecField, b: &SpecField) -> f64 {
    let g = a.grid();
    let np = g.points();
    let mut acc = 0.0;
    for c in 0..a.m() {
        let (x, y) = (a.component(c), b.component(c));
        for idx in 0..np {
            acc += (x[idx] - y[idx]).norm_sqr() / (1.0 + g.mode_norm_sq(idx));
        }
    }
    (g.volume() * acc).sqrt()
}

/// Relative slack on the regularity inequalities.
pub const REGULARITY_TOL: f64 = 1e-2;

/// Expected-speed constant and the increment and chord/straightness checks.
pub fn time_regularity_report(b: &PathBundle, pairs: usize, seed: u64) -> Result<RegularityReport> {
    if b.taus.len() < 9 || b.members() == 0 {
        return Err(Error::InvalidArgument("need at least 8 internal intervals per step".into()));
    }
    if !b.junction_continuity() {
        return Err(Error::InvalidArgument("segments must start where the previous one ends".into()));
    }
    let times = b.times();
    let nn = b.members() as f64;
    let dt = b.step_dt;
    let paths: Vec<Vec<&GridField>> = (0..b.members()).map(|i| b.path(i)).collect();
    let mut c_spd: f64 = 0.0;
    for j in 0..times.len() - 1 {
        let h = times[j + 1] - times[j];
        let s: f64 = paths.iter().map(|p| p[j + 1].dist(p[j])).sum::<f64>() / nn;
        c_spd = c_spd.max(s / h);
    }
    let mut c_ch: f64 = 0.0;
    let mut c_str: f64 = 0.0;
    for n in 0..b.steps() {
        let chords: Vec<GridField> = b.segments.iter().map(|s| &s[n][s[n].len() - 1] - &s[n][0]).collect();
        c_ch = c_ch.max(chords.iter().map(|d| d.norm()).sum::<f64>() / nn / dt);
        for j in 0..b.taus.len() - 1 {
            let dtau = b.taus[j + 1] - b.taus[j];
            let r: f64 = b
                .segments
                .iter()
                .zip(&chords)
                .map(|(s, d)| {
                    let mut v = (&s[n][j + 1] - &s[n][j]).scaled(1.0 / dtau);
                    v.add_scaled(-1.0, d);
                    v.norm_sq()
                })
                .sum::<f64>()
                / nn;
            c_str = c_str.max(r / (dt * dt));
        }
    }
    let spectra: Vec<Vec<SpecField>> = paths.iter().map(|p| par::map(p, |x| fields::forward(x))).collect();
    let mut rng = stream::stream_rng(seed, 0, 0);
    let mut max_ratio: f64 = 0.0;
    let mut ok = true;
    for _ in 0..pairs {
        let mut s = rng.random_range(0..times.len());
        let mut t = rng.random_range(0..times.len());
        if s > t {
            std::mem::swap(&mut s, &mut t);
        }
        let inc: f64 = spectra.iter().map(|sp| hminus1_dist(&sp[t], &sp[s])).sum::<f64>() / nn;
        let bound = c_spd * (times[t] - times[s]);
        if inc > bound * (1.0 + REGULARITY_TOL) {
            ok = false;
        }
        if bound > 0.0 {
            max_ratio = max_ratio.max(inc / bound);
        }
    }
    Ok(RegularityReport {
        c_spd,
        c_ch,
        c_str,
        max_increment_ratio: max_ratio,
        pairs,
        increment_satisfied: ok,
        chain_satisfied: c_spd <= (c_ch + c_str.sqrt()) * (1.0 + REGULARITY_TOL),
        tolerance: REGULARITY_TOL,
    })
}

/// Worst pathwise ratio in the Hölder-from-action bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub p: f64,
    pub max_ratio: f64,
    pub pairs: usize,
    pub satisfied: bool,
    pub tolerance: f64,
}

/// `‖γ(t)−γ(s)‖_{H⁻¹} ≤ |t−s|^{1−1/p} (∫ₛᵗ ‖γ̇‖₂ᵖ)^{1/p}` for every pair of nodes of every path,
/// with `γ̇` the piecewise-constant finite-difference velocity.
pub fn holder_from_action_check(b: &PathBundle, p: f64) -> Result<HolderReport> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument("p must exceed 1".into()));
    }
    let times = b.times();
    let idx: Vec<usize> = (0..b.members()).collect();
    let per = par::map(&idx, |&i| {
        let path = b.path(i);
        let spectra: Vec<SpecField> = path.iter().map(|x| fields::forward(x)).collect();
        let mut cum = vec![0.0];
        for j in 0..path.len() - 1 {
            let h = times[j + 1] - times[j];
            let speed = path[j + 1].dist(path[j]) / h;
            cum.push(cum[j] + speed.powf(p) * h);
        }
        let mut worst: f64 = 0.0;
        let mut ok = true;
        let mut count = 0usize;
        for s in 0..path.len() {
            for t in s + 1..path.len() {
                let lhs = hminus1_dist(&spectra[t], &spectra[s]);
                let rhs = (times[t] - times[s]).powf(1.0 - 1.0 / p) * (cum[t] - cum[s]).powf(1.0 / p);
                if lhs > rhs * (1.0 + REGULARITY_TOL) {
                    ok = false;
                }
                if rhs > 0.0 {
                    worst = worst.max(lhs / rhs);
                }
                count += 1;
            }
        }
        (worst, ok, count)
    });
    Ok(HolderReport {
        p,
        max_ratio: per.iter().fold(0.0, |m, r| m.max(r.0)),
        pairs: per.iter().map(|r| r.2).sum(),
        satisfied: per.iter().all(|r| r.1),
        tolerance: REGULARITY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    fn spec(kind: KernelKind, steps: usize, noise: f64) -> KernelSpec {
        let g = Grid::new(2, 16).unwrap();
        KernelSpec {
            kind,
            internal_steps: steps,
            noise_scale: noise,
            noise_k_max: 4,
            step_dt: 0.05,
            euler: EulerConfig::new(g, 0.01),
        }
    }

    fn rf(a: f64) -> KernelKind {
        KernelKind::RectifiedFlow { perturbation: a, shift: [1, 0] }
    }

    fn input() -> GridField {
        fields::random_divfree(Grid::new(2, 16).unwrap(), 3.0, 4, 11).unwrap()
    }

    #[test]
    fn straight_drift_lands_on_reference() {
        let u = input();
        let sp = spec(rf(0.0), 8, 0.0);
        let s = sample_step(&u, &sp, 1).unwrap();
        let r = euler::evolve(&u, &sp.euler, sp.step_dt).unwrap();
        assert!(s.output.dist(&r) <= 1e-12 * r.norm());
        assert_eq!(s.path[0], u);
        let one = sample_step(&u, &spec(rf(0.0), 1, 0.0), 1).unwrap();
        let many = sample_step(&u, &spec(rf(0.0), 64, 0.0), 1).unwrap();
        assert!(one.output.dist(&many.output) <= 1e-12 * r.norm());
    }

    #[test]
    fn mixture_endpoints_and_midpoint() {
        let u = input();
        let e = Ensemble::new(vec![u.clone(), u.scaled(0.5)]).unwrap();
        let sp = spec(rf(0.0), 4, 0.0);
        let c = mixture_interpolation(&e, &sp, &[0.0, 0.5, 1.0], 3).unwrap();
        assert_eq!(c.ensembles()[0], e);
        for (i, m) in e.members().iter().enumerate() {
            let r = euler::evolve(m, &sp.euler, sp.step_dt).unwrap();
            let mid = (0.5 * &(m + &r)).clone();
            assert!(c.ensembles()[1].members()[i].dist(&mid) < 1e-12);
            assert!(c.ensembles()[2].members()[i].dist(&r) < 1e-12);
        }
    }

    #[test]
    fn constant_observable_has_zero_residual() {
        let e = Ensemble::new(vec![input()]).unwrap();
        let phi = Cylindrical { tests: vec![input()], profile: Profile::Constant(2.0) };
        let taus: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let r = continuity_equation_check(&e, &spec(rf(0.3), 16, 0.0), &phi, &taus, 1).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn junctions_are_bitwise_continuous() {
        let e = Ensemble::new(vec![input(), input().scaled(-1.0)]).unwrap();
        let sp = spec(KernelKind::PerturbedReference { bias: 0.1, shift: [1, 0] }, 8, 0.01);
        let (b, laws) = rollout_paths(&e, &sp, 3, 9).unwrap();
        assert!(b.junction_continuity());
        assert_eq!(laws.len(), 4);
        assert_eq!(b.times().len(), 3 * 8 + 1);
    }
}
