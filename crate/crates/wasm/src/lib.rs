//! Browser demo: random divergence-free fields, their spectral tails, Euler flow and the rollout bound.

use lawbound::euler::{self, EulerConfig};
use lawbound::{fields, rollout, stream, Grid, GridField};
use wasm_bindgen::prelude::*;

/// Vorticity of the first member and the ensemble tail curve `K ↦ (E‖P_{>K}u‖²)^{1/2}`.
#[wasm_bindgen]
pub struct FieldView {
    n: usize,
    vorticity: Vec<f64>,
    ks: Vec<f64>,
    tails: Vec<f64>,
    slope: f64,
    energy: f64,
    enstrophy: f64,
}

#[wasm_bindgen]
impl FieldView {
    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major `n × n` vorticity.
    pub fn vorticity(&self) -> Vec<f64> {
        self.vorticity.clone()
    }

    pub fn ks(&self) -> Vec<f64> {
        self.ks.clone()
    }

    pub fn tails(&self) -> Vec<f64> {
        self.tails.clone()
    }

    /// Least-squares slope of `log tail` against `log K` on `2 ≤ K ≤ k_max/2`.
    #[wasm_bindgen(getter)]
    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Mean energy `E‖u‖²`.
    #[wasm_bindgen(getter)]
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Mean enstrophy `E‖ω‖²`.
    #[wasm_bindgen(getter)]
    pub fn enstrophy(&self) -> f64 {
        self.enstrophy
    }
}

fn members(n: usize, s: f64, k_max: usize, count: usize, seed: u64) -> Result<Vec<GridField>, String> {
    let g = Grid::new(2, n).map_err(|e| e.to_string())?;
    if count == 0 || k_max < 4 || k_max >= n / 2 {
        return Err(format!("need at least one member and 4 ≤ k_max < {}", n / 2));
    }
    let p = fields::spectrum_exponent(s, 2);
    (0..count)
        .map(|i| fields::random_divfree(g, p, k_max, stream::stream_seed(seed, i as u64, 0)).map_err(|e| e.to_string()))
        .collect()
}

fn view(us: &[GridField], k_max: usize) -> FieldView {
    let m = us.len() as f64;
    let specs: Vec<_> = us.iter().map(fields::forward).collect();
    let ks: Vec<usize> = (1..=k_max).collect();
    let tails: Vec<f64> = ks
        .iter()
        .map(|&k| (specs.iter().map(|s| fields::project_gt(s, k).norm_sq()).sum::<f64>() / m).sqrt())
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = ks
        .iter()
        .zip(&tails)
        .filter(|(&k, &t)| k >= 2 && 2 * k <= k_max && t > 0.0)
        .map(|(&k, &t)| ((k as f64).ln(), t.ln()))
        .unzip();
    let slope = if lx.len() >= 2 { lawbound::ensemble::linear_fit(&lx, &ly).1 } else { f64::NAN };
    FieldView {
        n: us[0].grid().n(),
        vorticity: euler::vorticity(&us[0]).into_values(),
        ks: ks.iter().map(|&k| k as f64).collect(),
        tails,
        slope,
        energy: us.iter().map(euler::energy).sum::<f64>() / m,
        enstrophy: us.iter().map(euler::enstrophy).sum::<f64>() / m,
    }
}

/// Gaussian ensemble with structure exponent `s`, band-limited to `k_max`.
pub fn synthesize_view(n: usize, s: f64, k_max: usize, count: usize, seed: u64) -> Result<FieldView, String> {
    Ok(view(&members(n, s, k_max, count, seed)?, k_max))
}

/// The same ensemble pushed to time `t` by the Euler flow with step `dt`.
pub fn evolve_view(
    n: usize,
    s: f64,
    k_max: usize,
    count: usize,
    seed: u64,
    t: f64,
    dt: f64,
) -> Result<FieldView, String> {
    let us = members(n, s, k_max, count, seed)?;
    let cfg = EulerConfig::new(us[0].grid(), dt);
    let out = us.iter().map(|u| euler::evolve(u, &cfg, t).map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
    Ok(view(&out, n / 2 - 1))
}

/// Rollout bound `δ_N` for `N = 0..=steps` with constant exponent and defect.
pub fn bound_curve(delta0: f64, alpha: f64, eps: f64, steps: usize) -> Result<Vec<f64>, String> {
    rollout::rollout_bound(delta0, &vec![alpha; steps], &vec![eps; steps]).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn synthesize(n: usize, s: f64, k_max: usize, count: usize, seed: u64) -> Result<FieldView, JsError> {
    synthesize_view(n, s, k_max, count, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn evolve(n: usize, s: f64, k_max: usize, count: usize, seed: u64, t: f64, dt: f64) -> Result<FieldView, JsError> {
    evolve_view(n, s, k_max, count, seed, t, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rollout_bound(delta0: f64, alpha: f64, eps: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    bound_curve(delta0, alpha, eps, steps).map_err(|e| JsError::new(&e))
}
