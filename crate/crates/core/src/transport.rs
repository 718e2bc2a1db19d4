//! Wasserstein distances between field ensembles, the time-integrated metric
//! `d_T`, the capacity–coverage decomposition and one-step defects.

use crate::assignment;
use crate::ensemble::{self, Ensemble, LawCurve};
use crate::error::{Error, Result};
use crate::fields::GridField;
use crate::par;
use crate::stream;
use serde::{Deserialize, Serialize};

/// How a coupling is stored.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanMode {
    /// Row `i` is matched to column `perm[i]`, each with mass `1/N`.
    Permutation(Vec<usize>),
    /// Row-major `rows × cols` matrix of masses.
    Dense { rows: usize, cols: usize, weights: Vec<f64> },
}

/// Coupling between two ensembles with its transport cost.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub mode: PlanMode,
    /// `∫ |u − v|ᵖ dπ`.
    pub cost: f64,
    pub order: u32,
    /// Dual certificate verified (exact solver only).
    pub certified: bool,
}

impl TransportPlan {
    /// Permutation of an exact plan.
    pub fn permutation(&self) -> Option<&[usize]> {
        match &self.mode {
            PlanMode::Permutation(p) => Some(p),
            PlanMode::Dense { .. } => None,
        }
    }

    /// Largest deviation of row and column sums from uniform marginals.
    pub fn marginal_error(&self) -> f64 {
        match &self.mode {
            PlanMode::Permutation(p) => {
                let mut seen = vec![false; p.len()];
                for &j in p {
                    if j >= p.len() || seen[j] {
                        return f64::INFINITY;
                    }
                    seen[j] = true;
                }
                0.0
            }
            PlanMode::Dense { rows, cols, weights } => {
                let mut err: f64 = 0.0;
                for i in 0..*rows {
                    let s: f64 = weights[i * cols..(i + 1) * cols].iter().sum();
                    err = err.max((s - 1.0 / *rows as f64).abs());
                }
                for j in 0..*cols {
                    let s: f64 = (0..*rows).map(|i| weights[i * cols + j]).sum();
                    err = err.max((s - 1.0 / *cols as f64).abs());
                }
                err
            }
        }
    }
}

/// Pairwise L² distances `‖aᵢ − bⱼ‖₂`, row-major.
pub fn distance_matrix(a: &[GridField], b: &[GridField]) -> Vec<f64> {
    let rows = par::map(a, |u| b.iter().map(|v| u.dist(v)).collect::<Vec<f64>>());
    rows.into_iter().flatten().collect()
}

fn check_order(p: u32) -> Result<()> {
    if p != 1 && p != 2 {
        return Err(Error::InvalidArgument(format!("order p={p} must be 1 or 2")));
    }
    Ok(())
}

/// Exact `W_p` between uniform empirical measures from a distance matrix.
pub fn wasserstein_from_distances(dist: &[f64], n: usize, p: u32) -> Result<(f64, TransportPlan)> {
    check_order(p)?;
    if dist.len() != n * n || n == 0 {
        return Err(Error::Mismatch("distance matrix must be n×n with n ≥ 1".into()));
    }
    let cost: Vec<f64> = dist.iter().map(|d| d.powi(p as i32)).collect();
    let sol = assignment::solve(&cost, n);
    let certified = sol.is_certified(&cost, 1e-9);
    let mean = (sol.cost / n as f64).max(0.0);
    let value = mean.powf(1.0 / p as f64);
    Ok((value, TransportPlan { mode: PlanMode::Permutation(sol.perm), cost: mean, order: p, certified }))
}

/// Exact `W_p(a, b)`, `p ∈ {1, 2}`, by optimal assignment on the L² cost matrix.
pub fn wasserstein_exact(a: &Ensemble, b: &Ensemble, p: u32) -> Result<(f64, TransportPlan)> {
    a.same_shape(b)?;
    if a.len() != b.len() {
        return Err(Error::Mismatch(format!("exact solver needs equal member counts ({} vs {})", a.len(), b.len())));
    }
    if a.len() > 1024 {
        return Err(Error::InvalidArgument("exact solver limited to N ≤ 1024".into()));
    }
    let d = distance_matrix(a.members(), b.members());
    wasserstein_from_distances(&d, a.len(), p)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Entropic surrogate for `W₂` (log-domain Sinkhorn, no debiasing).
///
/// Returns `(⟨P, C⟩)^{1/2}` for the entropic plan `P` with squared-distance cost.
pub fn sinkhorn(a: &Ensemble, b: &Ensemble, epsilon: f64, max_iter: usize) -> Result<(f64, TransportPlan)> {
    a.same_shape(b)?;
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let (n, m) = (a.len(), b.len());
    let cost: Vec<f64> = distance_matrix(a.members(), b.members()).into_iter().map(|d| d * d).collect();
    let (la, lb) = (-(n as f64).ln(), -(m as f64).ln());
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let plan = |f: &[f64], g: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                w[i * m + j] = (la + lb + (f[i] + g[j] - cost[i * m + j]) / epsilon).exp();
            }
        }
        w
    };
    for _ in 0..max_iter {
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            f[i] = -epsilon * log_sum_exp((0..m).map(|j| lb + (g[j] - row[j]) / epsilon));
        }
        for j in 0..m {
            g[j] = -epsilon * log_sum_exp((0..n).map(|i| la + (f[i] - cost[i * m + j]) / epsilon));
        }
        let w = plan(&f, &g);
        let viol: f64 = (0..n).map(|i| (w[i * m..(i + 1) * m].iter().sum::<f64>() - 1.0 / n as f64).abs()).sum();
        if viol < 1e-6 {
            let transport: f64 = w.iter().zip(&cost).map(|(p, c)| p * c).sum();
            return Ok((
                transport.max(0.0).sqrt(),
                TransportPlan {
                    mode: PlanMode::Dense { rows: n, cols: m, weights: w },
                    cost: transport,
                    order: 2,
                    certified: false,
                },
            ));
        }
    }
    Err(Error::NonConvergence(max_iter))
}

/// `d_T(a, b) = ∫₀ᵀ W₁(a_t, b_t) dt` with trapezoidal quadrature.
pub fn d_t(a: &LawCurve, b: &LawCurve) -> Result<f64> {
    Ok(ensemble::trapezoid(a.times(), &w1_per_time(a, b)?))
}

/// Exact `W₁` at every node of a shared time grid.
pub fn w1_per_time(a: &LawCurve, b: &LawCurve) -> Result<Vec<f64>> {
    if a.times().len() != b.times().len() || a.times().iter().zip(b.times()).any(|(s, t)| (s - t).abs() > 1e-12) {
        return Err(Error::Mismatch("law curves need a shared time grid".into()));
    }
    a.ensembles().iter().zip(b.ensembles()).map(|(x, y)| wasserstein_exact(x, y, 1).map(|r| r.0)).collect()
}

/// Band-limited specialization: when the model is band-limited, `W₂ ≤ Tail_K(a) + Train_K`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandLimitedBound {
    pub bound: f64,
    pub satisfied: bool,
}

/// Capacity–coverage decomposition of `W₂(a, b)` at resolution `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    #[serde(rename = "W1")]
    pub w1: f64,
    #[serde(rename = "W2")]
    pub w2: f64,
    pub tail_a: f64,
    pub tail_b: f64,
    #[serde(rename = "train_K")]
    pub train_k: f64,
    pub bound: f64,
    pub satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub band_limited: Option<BandLimitedBound>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d_t: Option<f64>,
}

/// Slack added to the capacity–coverage bound.
pub const COVERAGE_SLACK: f64 = 1e-9;

/// `W₂(a,b) ≤ Tail_K(a) + Train_K + Tail_K(b)`, with `Train_K` the exact
/// `W₂` between the projected ensembles.
pub fn capacity_coverage(a: &Ensemble, b: &Ensemble, k: usize) -> Result<MetricReport> {
    let (w2, _) = wasserstein_exact(a, b, 2)?;
    let (w1, _) = wasserstein_exact(a, b, 1)?;
    let tail_a = ensemble::tail(a, k);
    let tail_b = ensemble::tail(b, k);
    let (train_k, _) = wasserstein_exact(&ensemble::project_ensemble(a, k), &ensemble::project_ensemble(b, k), 2)?;
    let bound = tail_a + train_k + tail_b;
    let satisfied = w2 <= bound + COVERAGE_SLACK;
    let scale = ensemble::moment(b, 2)?.sqrt().max(1.0);
    let band_limited = (tail_b <= 1e-12 * scale).then(|| {
        let bl = tail_a + train_k;
        BandLimitedBound { bound: bl, satisfied: w2 <= bl + COVERAGE_SLACK }
    });
    Ok(MetricReport { k, w1, w2, tail_a, tail_b, train_k, bound, satisfied, band_limited, d_t: None })
}

/// `η(ρ) = W₂(S#ρ, Tρ)`: reference pushforward against one model draw per member.
///
/// Member `i` calls the model with the stream seed derived from `(seed, i, 0)`.
pub fn one_step_defect<R, M>(rho: &Ensemble, reference_map: R, model_kernel: M, seed: u64) -> Result<f64>
where
    R: Fn(&GridField) -> GridField + Sync + Send,
    M: Fn(&GridField, u64) -> GridField + Sync + Send,
{
    let idx: Vec<usize> = (0..rho.len()).collect();
    let refs = par::map(&idx, |&i| reference_map(&rho.members()[i]));
    let models = par::map(&idx, |&i| model_kernel(&rho.members()[i], stream::stream_seed(seed, i as u64, 0)));
    let (w2, _) = wasserstein_exact(&Ensemble::new(refs)?, &Ensemble::new(models)?, 2)?;
    Ok(w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    fn scalar(g: Grid, a: f64, k: f64) -> GridField {
        GridField::from_fn(g, 1, |x, _| a * (k * x[0]).cos())
    }

    #[test]
    fn identical_ensembles_are_at_zero_distance() {
        let g = Grid::new(1, 16).unwrap();
        let e = Ensemble::new(vec![scalar(g, 1.0, 1.0), scalar(g, 2.0, 3.0), scalar(g, -1.0, 2.0)]).unwrap();
        let (w, plan) = wasserstein_exact(&e, &e, 2).unwrap();
        assert!(w < 1e-12);
        assert_eq!(plan.permutation().unwrap(), &[0, 1, 2]);
        assert!(plan.certified);
    }

    #[test]
    fn singletons() {
        let g = Grid::new(1, 16).unwrap();
        let u = scalar(g, 1.0, 1.0);
        let v = scalar(g, 0.5, 2.0);
        let a = Ensemble::new(vec![u.clone()]).unwrap();
        let b = Ensemble::new(vec![v.clone()]).unwrap();
        for p in [1, 2] {
            assert!((wasserstein_exact(&a, &b, p).unwrap().0 - u.dist(&v)).abs() < 1e-12);
        }
        assert!((sinkhorn(&a, &b, 0.1, 100).unwrap().0 - u.dist(&v)).abs() < 1e-6);
    }

    #[test]
    fn unequal_sizes_rejected() {
        let g = Grid::new(1, 8).unwrap();
        let a = Ensemble::new(vec![scalar(g, 1.0, 1.0)]).unwrap();
        let b = Ensemble::new(vec![scalar(g, 1.0, 1.0); 2]).unwrap();
        assert!(wasserstein_exact(&a, &b, 2).is_err());
        assert!(wasserstein_exact(&a, &a, 3).is_err());
    }

    #[test]
    fn constant_shift_defect() {
        let g = Grid::new(2, 8).unwrap();
        let e = Ensemble::new(
            (0..4).map(|i| GridField::from_fn(g, 2, move |x, c| ((i + c) as f64 * x[0]).sin() + x[1].cos())).collect(),
        )
        .unwrap();
        let shift = GridField::from_fn(g, 2, |_, c| 0.3 * (c as f64 + 1.0));
        let id = |u: &GridField| u.clone();
        assert!(one_step_defect(&e, id, |u: &GridField, _| u.clone(), 1).unwrap() < 1e-12);
        let d = one_step_defect(&e, id, |u: &GridField, _| u + &shift, 1).unwrap();
        assert!((d - shift.norm()).abs() < 1e-12);
    }
}
