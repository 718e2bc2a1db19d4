//! Discrete Grönwall bounds and end-to-end rollout experiments.

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::euler;
use crate::fields::GridField;
use crate::par;
use crate::sampler::{self, KernelSpec};
use crate::stream;
use crate::transport;
use serde::{Deserialize, Serialize};

fn check_inputs(delta0: f64, l: &[f64], eps: &[f64]) -> Result<()> {
    if l.len() != eps.len() {
        return Err(Error::Mismatch("one coefficient and one defect per step".into()));
    }
    if delta0 < 0.0 || l.iter().chain(eps).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument("Grönwall inputs must be finite and nonnegative".into()));
    }
    Ok(())
}

/// `δ_N = (Π L_m) δ₀ + Σⱼ εⱼ Π_{m≥j} L_m` for every `N = 0..len`, with `eps[j-1] = εⱼ`.
pub fn gronwall_closed_form(delta0: f64, l: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    check_inputs(delta0, l, eps)?;
    let prod = |a: usize, b: usize| -> f64 { (a..b).map(|m| l[m]).product() };
    Ok((0..=l.len()).map(|n| prod(0, n) * delta0 + (1..=n).map(|j| eps[j - 1] * prod(j, n)).sum::<f64>()).collect())
}

/// Rollout bound `exp(Σα)δ₀ + Σⱼ εⱼ exp(Σ_{m≥j} α_m)` for every horizon.
pub fn rollout_bound(delta0: f64, alpha: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != eps.len() || alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Mismatch("one finite exponent and one defect per step".into()));
    }
    check_inputs(delta0, &vec![0.0; alpha.len()], eps)?;
    let sum = |a: usize, b: usize| -> f64 { (a..b).map(|m| alpha[m]).sum() };
    Ok((0..=alpha.len())
        .map(|n| sum(0, n).exp() * delta0 + (1..=n).map(|j| eps[j - 1] * sum(j, n).exp()).sum::<f64>())
        .collect())
}

/// `e^{Nᾱ}δ₀ + ε̄ (e^{Nᾱ} − 1)/(e^{ᾱ} − 1)`, and `δ₀ + Nε̄` when `ᾱ = 0`.
pub fn constant_coefficient_bound(delta0: f64, alpha_bar: f64, eps_bar: f64, n: usize) -> f64 {
    let nf = n as f64;
    if alpha_bar == 0.0 {
        delta0 + nf * eps_bar
    } else {
        (nf * alpha_bar).exp() * delta0 + eps_bar * (nf * alpha_bar).exp_m1() / alpha_bar.exp_m1()
    }
}

/// One row of the rollout ledger; `eps` and `delta` refer to step `n`, `alpha` to the window leaving it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub n: usize,
    pub alpha: f64,
    pub eps: f64,
    pub delta: f64,
    pub bound: f64,
    /// `Tail_K + Train_K + Tail_K` bound on `eps` when a coverage resolution is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutLedger {
    pub rows: Vec<LedgerRow>,
}

impl RolloutLedger {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,alpha,eps,delta,bound\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.n, r.alpha, r.eps, r.delta, r.bound));
        }
        s
    }
}

/// Relative slack on the per-step recursion and the final bound.
pub const ROLLOUT_TOL: f64 = 5e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub ledger: RolloutLedger,
    pub steps_completed: usize,
    pub per_step_satisfied: bool,
    pub final_satisfied: bool,
    /// Largest defect along the run, standing in for the supremum over the rollout class.
    pub max_eps: f64,
    /// Largest window exponent along the run.
    pub max_alpha: f64,
    /// Set when a CFL or band-limit guard stops the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    pub tolerance: f64,
}

impl RolloutReport {
    pub fn satisfied(&self) -> bool {
        self.guard.is_none() && self.per_step_satisfied && self.final_satisfied
    }
}

/// Settings of a rollout experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    pub model: KernelSpec,
    pub steps: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default)]
    pub coverage_k: Option<usize>,
}

fn default_checkpoints() -> usize {
    8
}

/// Seed handed to the one-step defect and the model kernel at step `n`.
pub fn step_seed(seed: u64, n: usize) -> u64 {
    stream::stream_seed(seed, 0, n as u64)
}

fn is_guard(e: &Error) -> bool {
    matches!(e, Error::Cfl { .. } | Error::NotBandLimited(_) | Error::NonFinite(_))
}

/// Evolve the reference law from `a` and the model law from `b`, measuring `δ_n`, `α_n` and `ε_n`
/// and comparing them with the rollout bound. Step `n` draws its model samples exactly as
/// [`transport::one_step_defect`] does with seed [`step_seed`]`(seed, n)`, so `ε_{n+1}` is that defect.
pub fn run_rollout_experiment(a: &Ensemble, b: &Ensemble, cfg: &RolloutConfig, seed: u64) -> Result<RolloutReport> {
    a.same_shape(b)?;
    if a.len() != b.len() {
        return Err(Error::Mismatch("reference and model laws need equal member counts".into()));
    }
    cfg.model.validate()?;
    let dt = cfg.model.step_dt;
    let mut mu = a.clone();
    let mut hat = b.clone();
    let (delta0, _) = transport::wasserstein_exact(&mu, &hat, 2)?;
    let mut deltas = vec![delta0];
    let mut alphas = Vec::with_capacity(cfg.steps);
    let mut epss = Vec::with_capacity(cfg.steps);
    let mut coverage = vec![None];
    let mut guard = None;
    for n in 0..cfg.steps {
        let step = (|| -> Result<(f64, f64, Option<f64>, Ensemble, Ensemble)> {
            let (_, plan) = transport::wasserstein_exact(&mu, &hat, 2)?;
            let perm = plan.permutation().expect("equal sizes give a permutation");
            let paired: Vec<GridField> = perm.iter().map(|&j| hat.members()[j].clone()).collect();
            let win = euler::coupled_window(mu.members(), &paired, &cfg.model.euler, dt, cfg.checkpoints)?;
            let idx: Vec<usize> = (0..hat.len()).collect();
            let next_hat = par::map(&idx, |&i| {
                sampler::sample_step(
                    &hat.members()[i],
                    &cfg.model,
                    stream::stream_seed(step_seed(seed, n), i as u64, 0),
                )
                .map(|s| s.output)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut pushed = win.end_b.clone();
            for (k, &j) in perm.iter().enumerate() {
                pushed[j] = win.end_b[k].clone();
            }
            let pushed = Ensemble::new(pushed)?;
            let next_hat = Ensemble::new(next_hat)?;
            let (eps, _) = transport::wasserstein_exact(&pushed, &next_hat, 2)?;
            let cov = match cfg.coverage_k {
                Some(k) => {
                    let r = transport::capacity_coverage(&pushed, &next_hat, k)?;
                    Some(r.bound)
                }
                None => None,
            };
            Ok((win.alpha(), eps, cov, Ensemble::new(win.end_a)?, next_hat))
        })();
        match step {
            Ok((alpha, eps, cov, next_mu, next_hat)) => {
                mu = next_mu;
                hat = next_hat;
                alphas.push(alpha);
                epss.push(eps);
                coverage.push(cov);
                deltas.push(transport::wasserstein_exact(&mu, &hat, 2)?.0);
            }
            Err(e) if is_guard(&e) => {
                guard = Some(format!("step {n}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let done = alphas.len();
    let bounds = rollout_bound(delta0, &alphas, &epss)?;
    let per_step = (0..done).all(|n| deltas[n + 1] <= (alphas[n].exp() * deltas[n] + epss[n]) * (1.0 + ROLLOUT_TOL));
    let rows = (0..=done)
        .map(|n| LedgerRow {
            n,
            alpha: if n < done { alphas[n] } else { 0.0 },
            eps: if n > 0 { epss[n - 1] } else { 0.0 },
            delta: deltas[n],
            bound: bounds[n],
            eps_coverage: coverage[n],
        })
        .collect();
    Ok(RolloutReport {
        ledger: RolloutLedger { rows },
        steps_completed: done,
        per_step_satisfied: per_step,
        final_satisfied: deltas[done] <= bounds[done] * (1.0 + ROLLOUT_TOL),
        max_eps: epss.iter().cloned().fold(0.0, f64::max),
        max_alpha: alphas.iter().cloned().fold(0.0, f64::max),
        guard,
        tolerance: ROLLOUT_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_coefficients_add_defects() {
        let r = gronwall_closed_form(0.5, &[1.0; 4], &[0.25; 4]).unwrap();
        assert_eq!(r[4], 1.5);
        assert_eq!(constant_coefficient_bound(0.5, 0.0, 0.25, 4), 1.5);
    }

    #[test]
    fn base_case() {
        let r = rollout_bound(2.0, &[0.3], &[0.1]).unwrap();
        assert!((r[1] - (0.3f64.exp() * 2.0 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn constant_form_matches_general() {
        let g = rollout_bound(0.7, &[0.2; 6], &[0.05; 6]).unwrap();
        let c = constant_coefficient_bound(0.7, 0.2, 0.05, 6);
        assert!((g[6] - c).abs() <= 1e-12 * c);
    }

    #[test]
    fn rejects_negative_defects() {
        assert!(gronwall_closed_form(1.0, &[1.0], &[-1.0]).is_err());
    }
}
