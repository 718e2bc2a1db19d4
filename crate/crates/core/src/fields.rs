//! Periodic fields on the flat torus of side 2π and their Fourier algebra.
//!
//! Coefficients are normalized as `û(k) = DFT(u)(k) / nᵈ`, so that
//! `u(x) = Σ û(k) e^{ik·x}` and `‖u‖₂² = (2π)ᵈ Σ |û(k)|²`.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

pub const TWO_PI: f64 = 2.0 * PI;

/// Uniform lattice on the d-torus with `n` samples per dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    d: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    d: usize,
    n: usize,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Grid> {
        Grid::new(r.d, r.n)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> GridRepr {
        GridRepr { d: g.d, n: g.n }
    }
}

impl Grid {
    pub fn new(d: usize, n: usize) -> Result<Grid> {
        if d != 1 && d != 2 {
            return Err(Error::InvalidGrid(format!("d={d} must be 1 or 2")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n={n} must be a power of two and at least 8")));
        }
        Ok(Grid { d, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of lattice points, `nᵈ`.
    pub fn points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Lattice spacing `2π/n`.
    pub fn dx(&self) -> f64 {
        TWO_PI / self.n as f64
    }

    /// Quadrature weight of one lattice point, `Δxᵈ`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Volume of the torus, `(2π)ᵈ`.
    pub fn volume(&self) -> f64 {
        TWO_PI.powi(self.d as i32)
    }

    /// Signed wavenumber of FFT index `i`; the Nyquist index maps to `+n/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber used by derivative multipliers, with the Nyquist mode zeroed.
    pub fn deriv_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i) as f64
        }
    }

    /// Integer wavevector of flat index `idx` (second entry 0 when d=1).
    pub fn mode(&self, idx: usize) -> [i64; 2] {
        if self.d == 1 {
            [self.wavenumber(idx), 0]
        } else {
            [self.wavenumber(idx / self.n), self.wavenumber(idx % self.n)]
        }
    }

    pub fn deriv_mode(&self, idx: usize) -> [f64; 2] {
        if self.d == 1 {
            [self.deriv_wavenumber(idx), 0.0]
        } else {
            [self.deriv_wavenumber(idx / self.n), self.deriv_wavenumber(idx % self.n)]
        }
    }

    pub fn mode_norm_sq(&self, idx: usize) -> f64 {
        let k = self.mode(idx);
        (k[0] * k[0] + k[1] * k[1]) as f64
    }

    /// True if any coordinate of the mode sits on the Nyquist index.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let h = self.n / 2;
        if self.d == 1 {
            idx == h
        } else {
            idx / self.n == h || idx % self.n == h
        }
    }

    /// Physical coordinates of lattice point `idx`.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let dx = self.dx();
        if self.d == 1 {
            [idx as f64 * dx, 0.0]
        } else {
            [(idx / self.n) as f64 * dx, (idx % self.n) as f64 * dx]
        }
    }

    /// Flat index of the point reached from `idx` by the lattice offset `h`.
    pub fn shift_index(&self, idx: usize, h: &[i64]) -> usize {
        let n = self.n as i64;
        if self.d == 1 {
            ((idx as i64 + h[0]).rem_euclid(n)) as usize
        } else {
            let i0 = ((idx / self.n) as i64 + h[0]).rem_euclid(n);
            let i1 = ((idx % self.n) as i64 + h[1]).rem_euclid(n);
            (i0 * n + i1) as usize
        }
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::Mismatch(format!("grid {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Real field with `m` components sampled on a grid, component-major, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    m: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Grid, m: usize) -> GridField {
        GridField { grid, m, values: vec![0.0; m * grid.points()] }
    }

    pub fn from_values(grid: Grid, m: usize, values: Vec<f64>) -> Result<GridField> {
        if m == 0 || values.len() != m * grid.points() {
            return Err(Error::Mismatch(format!(
                "expected {} values for m={m}, got {}",
                m * grid.points(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(GridField { grid, m, values })
    }

    /// Sample `f(x, component)` at every lattice point.
    pub fn from_fn(grid: Grid, m: usize, f: impl Fn([f64; 2], usize) -> f64) -> GridField {
        let np = grid.points();
        let mut values = Vec::with_capacity(m * np);
        for c in 0..m {
            for idx in 0..np {
                values.push(f(grid.coords(idx), c));
            }
        }
        GridField { grid, m, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let np = self.grid.points();
        &self.values[c * np..(c + 1) * np]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let np = self.grid.points();
        &mut self.values[c * np..(c + 1) * np]
    }

    pub fn same_shape(&self, other: &GridField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.m != other.m {
            return Err(Error::Mismatch(format!("m={} vs m={}", self.m, other.m)));
        }
        Ok(())
    }

    /// L² inner product with grid quadrature.
    pub fn inner(&self, other: &GridField) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// L² distance `‖self − other‖₂`.
    pub fn dist(&self, other: &GridField) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &GridField) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        s * self.grid.cell_volume()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest pointwise Euclidean norm of the vector value.
    pub fn sup_vector(&self) -> f64 {
        let np = self.grid.points();
        (0..np).map(|i| (0..self.m).map(|c| self.values[c * np + i].powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// In place `self += a · other`.
    pub fn add_scaled(&mut self, a: f64, other: &GridField) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> GridField {
        GridField { grid: self.grid, m: self.m, values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Vector value at lattice point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let np = self.grid.points();
        (0..self.m).map(|c| self.values[c * np + idx]).collect()
    }
}

impl Add for &GridField {
    type Output = GridField;
    fn add(self, rhs: &GridField) -> GridField {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Sub for &GridField {
    type Output = GridField;
    fn sub(self, rhs: &GridField) -> GridField {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl Mul<&GridField> for f64 {
    type Output = GridField;
    fn mul(self, rhs: &GridField) -> GridField {
        rhs.scaled(self)
    }
}

/// Fourier coefficients of a GridField, stored in FFT index order per component.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecField {
    grid: Grid,
    m: usize,
    coeffs: Vec<Complex64>,
}

impl SpecField {
    pub fn zeros(grid: Grid, m: usize) -> SpecField {
        SpecField { grid, m, coeffs: vec![Complex64::new(0.0, 0.0); m * grid.points()] }
    }

    pub fn from_coeffs(grid: Grid, m: usize, coeffs: Vec<Complex64>) -> Result<SpecField> {
        if m == 0 || coeffs.len() != m * grid.points() {
            return Err(Error::Mismatch("coefficient count".into()));
        }
        Ok(SpecField { grid, m, coeffs })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let np = self.grid.points();
        &self.coeffs[c * np..(c + 1) * np]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let np = self.grid.points();
        &mut self.coeffs[c * np..(c + 1) * np]
    }

    /// Coefficient of component `c` at integer wavevector `k` (second entry ignored when d=1).
    pub fn at(&self, c: usize, k: [i64; 2]) -> Complex64 {
        let n = self.grid.n as i64;
        let i0 = k[0].rem_euclid(n) as usize;
        let idx = if self.grid.d == 1 { i0 } else { i0 * self.grid.n + k[1].rem_euclid(n) as usize };
        self.component(c)[idx]
    }

    /// `‖u‖₂²` through Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Multiply every coefficient by a real factor depending on the flat mode index.
    pub fn apply_multiplier(&self, f: impl Fn(usize) -> f64) -> SpecField {
        let np = self.grid.points();
        let mut out = self.clone();
        for c in 0..self.m {
            for idx in 0..np {
                out.coeffs[c * np + idx] *= f(idx);
            }
        }
        out
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Unnormalized in-place d-dimensional DFT of one component.
pub fn fft_in_place(grid: Grid, buf: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    let (fwd, inv) = plans(n);
    let plan = if inverse { inv } else { fwd };
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(buf, &mut scratch);
    if grid.d == 2 {
        transpose_square(buf, n);
        plan.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, n);
    }
}

/// Fourier coefficients `û(k) = DFT(u)/nᵈ`.
pub fn forward(f: &GridField) -> SpecField {
    let grid = f.grid;
    let np = grid.points();
    let scale = 1.0 / np as f64;
    let mut coeffs = Vec::with_capacity(f.m * np);
    for c in 0..f.m {
        let mut buf: Vec<Complex64> = f.component(c).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_in_place(grid, &mut buf, false);
        coeffs.extend(buf.into_iter().map(|z| z * scale));
    }
    SpecField { grid, m: f.m, coeffs }
}

/// Real field `u(x) = Σ û(k) e^{ik·x}`.
pub fn inverse(s: &SpecField) -> GridField {
    let grid = s.grid;
    let mut values = Vec::with_capacity(s.m * grid.points());
    for c in 0..s.m {
        let mut buf = s.component(c).to_vec();
        fft_in_place(grid, &mut buf, true);
        values.extend(buf.into_iter().map(|z| z.re));
    }
    GridField { grid, m: s.m, values }
}

/// Sharp projector onto modes with Euclidean `|k| ≤ K`.
pub fn project_leq(s: &SpecField, k: usize) -> SpecField {
    let k2 = (k * k) as f64;
    let g = s.grid;
    s.apply_multiplier(|idx| if g.mode_norm_sq(idx) <= k2 { 1.0 } else { 0.0 })
}

/// Complementary projector `Id − P≤K`.
pub fn project_gt(s: &SpecField, k: usize) -> SpecField {
    let k2 = (k * k) as f64;
    let g = s.grid;
    s.apply_multiplier(|idx| if g.mode_norm_sq(idx) > k2 { 1.0 } else { 0.0 })
}

/// `P≤K` applied to a physical field.
pub fn band_limit(f: &GridField, k: usize) -> GridField {
    inverse(&project_leq(&forward(f), k))
}

/// True when the energy above `K` is at most `tol` times the total energy.
pub fn is_band_limited(f: &GridField, k: usize, tol: f64) -> bool {
    let s = forward(f);
    let hi = project_gt(&s, k).norm_sq();
    hi <= tol * tol * s.norm_sq().max(f64::MIN_POSITIVE)
}

/// Quintic smoothstep `S(t) = 6t⁵ − 15t⁴ + 10t³` clamped to [0,1].
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Littlewood–Paley cutoffs and their measured finite-overlap constants.
#[derive(Clone, Debug)]
pub struct DyadicCutoffs {
    grid: Grid,
    max_block: i32,
    c_lower: f64,
    c_upper: f64,
}

impl DyadicCutoffs {
    /// Radial profile: 1 on `[0,1]`, 0 on `[2,∞)`, quintic transition between.
    pub fn chi(r: f64) -> f64 {
        1.0 - smoothstep(r - 1.0)
    }

    /// `φ(ξ) = χ(ξ) − χ(2ξ)`, supported in `1/2 ≤ |ξ| ≤ 2`.
    pub fn phi(r: f64) -> f64 {
        Self::chi(r) - Self::chi(2.0 * r)
    }

    pub fn new(grid: Grid) -> DyadicCutoffs {
        let rmax = {
            let h = (grid.n / 2) as f64;
            (grid.d as f64).sqrt() * h
        };
        let max_block = rmax.log2().ceil() as i32 + 1;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for idx in 1..grid.points() {
            let r = grid.mode_norm_sq(idx).sqrt();
            let s: f64 = (0..=max_block).map(|j| Self::phi(r / 2f64.powi(j)).powi(2)).sum();
            lo = lo.min(s);
            hi = hi.max(s);
        }
        DyadicCutoffs { grid, max_block, c_lower: lo, c_upper: hi }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Largest block index with a nonzero multiplier on this grid.
    pub fn max_block(&self) -> i32 {
        self.max_block
    }

    /// `(c*, C*)`: min and max of `Σ_{j≥0} φ(2⁻ʲk)²` over nonzero lattice modes.
    pub fn overlap_constants(&self) -> (f64, f64) {
        (self.c_lower, self.c_upper)
    }

    /// Multiplier of block `j` at mode radius `r`. Block −1 keeps only the mean.
    pub fn multiplier(&self, j: i32, r: f64) -> f64 {
        if j < 0 {
            if r == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            Self::phi(r / 2f64.powi(j))
        }
    }

    /// Apply the block `Δⱼ`.
    pub fn block(&self, s: &SpecField, j: i32) -> SpecField {
        let g = s.grid;
        s.apply_multiplier(|idx| self.multiplier(j, g.mode_norm_sq(idx).sqrt()))
    }
}

/// `Δⱼ u` for `j ≥ −1`.
pub fn dyadic_block(cut: &DyadicCutoffs, s: &SpecField, j: i32) -> SpecField {
    cut.block(s, j)
}

fn increment_integrand(d: usize, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let one_minus = if d == 1 {
        1.0 - y.cos()
    } else {
        let m = 128;
        let j0 = (0..m).map(|i| (y * (PI * (i as f64 + 0.5) / m as f64).sin()).cos()).sum::<f64>() / m as f64;
        1.0 - j0
    };
    one_minus / y
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, max_h: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = (((b - a) / max_h).ceil() as usize).max(1) * 2;
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h)).sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// `∫_{|r|≤ρ} |e^{ik·r} − 1|² |r|^{−d} dr` for each `x = |k|ρ` in `xs`.
pub fn increment_kernels(d: usize, xs: &[f64]) -> Vec<f64> {
    let c = if d == 1 { 4.0 } else { 4.0 * PI };
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let (mut at, mut acc) = (0.0, 0.0);
    for i in order {
        acc += simpson(|y| increment_integrand(d, y), at, xs[i], 5e-3);
        at = xs[i].max(at);
        out[i] = c * acc;
    }
    out
}

pub fn increment_kernel(d: usize, x: f64) -> f64 {
    increment_kernels(d, &[x])[0]
}

/// Ratio `‖Δⱼu‖² / ∫_{|r|≤c2⁻ʲ} ‖δ_r u‖² |r|^{−d} dr`, the empirical constant of the increment
/// control of dyadic blocks. The integral is evaluated mode by mode.
pub fn increment_dyadic_ratio(cut: &DyadicCutoffs, u: &GridField, j: i32, c: f64) -> Result<f64> {
    if j < 0 || !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidArgument("need j ≥ 0 and 0 < c < 1".into()));
    }
    let g = u.grid;
    let s = forward(u);
    let rho = c / 2f64.powi(j);
    let np = g.points();
    let mut shells: HashMap<u64, (f64, f64)> = HashMap::new();
    for idx in 0..np {
        let e: f64 = (0..u.m).map(|c| s.coeffs[c * np + idx].norm_sqr()).sum();
        shells.entry(g.mode_norm_sq(idx) as u64).or_insert((0.0, 0.0)).1 += e;
    }
    let mut keys: Vec<u64> = shells.keys().copied().collect();
    keys.sort_unstable();
    let xs: Vec<f64> = keys.iter().map(|&k2| (k2 as f64).sqrt() * rho).collect();
    let kern = increment_kernels(g.d, &xs);
    let (mut block, mut integral) = (0.0, 0.0);
    for (i, k2) in keys.iter().enumerate() {
        let e = shells[k2].1;
        block += cut.multiplier(j, (*k2 as f64).sqrt()).powi(2) * e;
        integral += kern[i] * e;
    }
    if integral == 0.0 {
        return Err(Error::InvalidArgument("field has no nonconstant modes".into()));
    }
    Ok(block / integral)
}

/// Periodic increment `δ_h u(x) = u(x + hΔx) − u(x)` for a lattice offset `h`.
pub fn increment(f: &GridField, h: &[i64]) -> GridField {
    let g = f.grid;
    let np = g.points();
    let mut out = GridField::zeros(g, f.m);
    for c in 0..f.m {
        let src = f.component(c);
        let dst = out.component_mut(c);
        for (idx, d) in dst.iter_mut().enumerate().take(np) {
            *d = src[g.shift_index(idx, h)] - src[idx];
        }
    }
    out
}

/// `((2π)ᵈ Σ (1+|k|²)ˢ |û(k)|²)^{1/2}`.
pub fn sobolev_norm(f: &GridField, s: f64) -> f64 {
    sobolev_norm_spec(&forward(f), s)
}

pub fn sobolev_norm_spec(sp: &SpecField, s: f64) -> f64 {
    let g = sp.grid;
    let np = g.points();
    let mut acc = 0.0;
    for c in 0..sp.m {
        for idx in 0..np {
            acc += (1.0 + g.mode_norm_sq(idx)).powf(s) * sp.coeffs[c * np + idx].norm_sqr();
        }
    }
    (g.volume() * acc).sqrt()
}

/// Spectral partial derivative `∂_axis` of every component.
pub fn derivative(s: &SpecField, axis: usize) -> SpecField {
    let g = s.grid;
    let np = g.points();
    let mut out = s.clone();
    for c in 0..s.m {
        for idx in 0..np {
            let k = g.deriv_mode(idx)[axis];
            out.coeffs[c * np + idx] *= Complex64::new(0.0, k);
        }
    }
    out
}

/// Gradient of a scalar or Jacobian of a vector field, as `m·d` components ordered `(c, axis)`.
pub fn gradient(f: &GridField) -> GridField {
    let s = forward(f);
    let g = f.grid;
    let mut values = Vec::with_capacity(f.m * g.d * g.points());
    let parts: Vec<GridField> = (0..g.d).map(|a| inverse(&derivative(&s, a))).collect();
    for c in 0..f.m {
        for p in &parts {
            values.extend_from_slice(p.component(c));
        }
    }
    GridField { grid: g, m: f.m * g.d, values }
}

/// `‖∇f‖_∞`: the largest pointwise Frobenius norm of the Jacobian.
pub fn grad_sup(f: &GridField) -> f64 {
    gradient(f).sup_vector()
}

/// `‖∇f‖_∞ / (K^{1+d/2} ‖f‖₂)` for `f = P≤K f`.
pub fn bernstein_ratio(f: &GridField, k: usize) -> Result<f64> {
    if !is_band_limited(f, k, 1e-10) {
        return Err(Error::NotBandLimited(k));
    }
    let norm = f.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let d = f.grid.d as f64;
    Ok(grad_sup(f) / ((k as f64).powf(1.0 + d / 2.0) * norm))
}

/// Spectral divergence of a vector field with `m = d`.
pub fn divergence(s: &SpecField) -> Result<SpecField> {
    let g = s.grid;
    if s.m != g.d {
        return Err(Error::Mismatch("divergence needs m = d".into()));
    }
    let np = g.points();
    let mut out = SpecField::zeros(g, 1);
    for idx in 0..np {
        let k = g.deriv_mode(idx);
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..g.d {
            acc += Complex64::new(0.0, k[a]) * s.coeffs[a * np + idx];
        }
        out.coeffs[idx] = acc;
    }
    Ok(out)
}

/// Largest pointwise value of the spectral divergence.
pub fn divergence_sup(f: &GridField) -> Result<f64> {
    Ok(inverse(&divergence(&forward(f))?).sup())
}

/// Leray projector `û(k) ← (I − kkᵀ/|k|²) û(k)`, built from derivative wavevectors.
pub fn leray_project(s: &SpecField) -> Result<SpecField> {
    let g = s.grid;
    if s.m != g.d {
        return Err(Error::Mismatch("leray projection needs m = d".into()));
    }
    let np = g.points();
    let mut out = s.clone();
    for idx in 0..np {
        let k = g.deriv_mode(idx);
        let k2: f64 = k[..g.d].iter().map(|v| v * v).sum();
        if k2 == 0.0 {
            continue;
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for a in 0..g.d {
            dot += s.coeffs[a * np + idx] * k[a];
        }
        for a in 0..g.d {
            out.coeffs[a * np + idx] -= dot * (k[a] / k2);
        }
    }
    Ok(out)
}

/// Exponent `p` of `E|û(k)|² ∝ |k|^{−p}` that yields structure exponent `s`.
pub fn spectrum_exponent(s: f64, d: usize) -> f64 {
    2.0 * s + d as f64
}

/// Gaussian divergence-free field `u = ∇⊥ψ` with `E|û(k)|² ∝ |k|^{−p}` on `1 ≤ |k| ≤ K_max`.
///
/// Nyquist modes are left empty and the amplitude is set so that `E‖u‖₂² = 1`.
pub fn random_divfree(grid: Grid, p: f64, k_max: usize, seed: u64) -> Result<GridField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_divfree_with(grid, p, k_max, &mut rng)
}

pub fn random_divfree_with<R: rand::Rng + ?Sized>(grid: Grid, p: f64, k_max: usize, rng: &mut R) -> Result<GridField> {
    if grid.d != 2 {
        return Err(Error::Unsupported(
            "divergence-free synthesis needs d=2; 1D divergence-free fields are constant".into(),
        ));
    }
    if k_max < 1 {
        return Err(Error::InvalidArgument("K_max must be at least 1".into()));
    }
    let np = grid.points();
    let kmax2 = (k_max * k_max) as f64;
    let keep = |idx: usize| {
        let k2 = grid.mode_norm_sq(idx);
        k2 >= 1.0 && k2 <= kmax2 && !grid.is_nyquist(idx)
    };
    let total: f64 = (0..np).filter(|&i| keep(i)).map(|i| grid.mode_norm_sq(i).powf(-p / 2.0)).sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("no admissible modes".into()));
    }
    let amp = (np as f64 / (grid.volume() * total)).sqrt();
    let mut buf: Vec<Complex64> = (0..np).map(|_| Complex64::new(StandardNormal.sample(rng), 0.0)).collect();
    fft_in_place(grid, &mut buf, false);
    let inv_np = 1.0 / np as f64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * np];
    for idx in 0..np {
        if !keep(idx) {
            continue;
        }
        let k2 = grid.mode_norm_sq(idx);
        let psi = buf[idx] * (inv_np * amp * k2.powf(-(p + 2.0) / 4.0));
        let k = grid.mode(idx);
        coeffs[idx] = Complex64::new(0.0, k[1] as f64) * psi;
        coeffs[np + idx] = Complex64::new(0.0, -(k[0] as f64)) * psi;
    }
    Ok(inverse(&SpecField { grid, m: 2, coeffs }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(n: usize) -> Grid {
        Grid::new(1, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(2, 12).is_err());
        assert!(Grid::new(2, 4).is_err());
        assert!(Grid::new(3, 16).is_err());
    }

    #[test]
    fn single_cosine_mode() {
        let g = g1(16);
        let f = GridField::from_fn(g, 1, |x, _| (3.0 * x[0]).cos());
        let s = forward(&f);
        for idx in 0..16 {
            let k = g.wavenumber(idx);
            let want = if k.abs() == 3 { 0.5 } else { 0.0 };
            assert!((s.coeffs()[idx].re - want).abs() < 1e-14);
            assert!(s.coeffs()[idx].im.abs() < 1e-14);
        }
    }

    #[test]
    fn constant_field_has_only_mean() {
        let g = Grid::new(2, 8).unwrap();
        let f = GridField::from_fn(g, 1, |_, _| 2.5);
        let s = forward(&f);
        assert!((s.coeffs()[0].re - 2.5).abs() < 1e-14);
        assert!(s.coeffs()[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn projector_examples() {
        let g = g1(32);
        let f3 = GridField::from_fn(g, 1, |x, _| (3.0 * x[0]).cos());
        let f5 = GridField::from_fn(g, 1, |x, _| (5.0 * x[0]).cos());
        assert!(inverse(&project_leq(&forward(&f3), 4)).dist(&f3) < 1e-13);
        assert!(inverse(&project_leq(&forward(&f5), 4)).norm() < 1e-13);
    }

    #[test]
    fn increment_antipodal_shift() {
        let g = g1(32);
        let f = GridField::from_fn(g, 1, |x, _| x[0].cos());
        let d = increment(&f, &[16]);
        let want = f.scaled(-2.0);
        assert!(d.dist(&want) < 1e-13);
        assert!((d.norm_sq() - 4.0 * f.norm_sq()).abs() < 1e-12);
        assert_eq!(increment(&f, &[0]).norm(), 0.0);
    }

    #[test]
    fn sobolev_examples() {
        let g = g1(32);
        let c = GridField::from_fn(g, 1, |_, _| -1.5);
        assert!((sobolev_norm(&c, -1.0) - 1.5 * TWO_PI.sqrt()).abs() < 1e-12);
        let f = GridField::from_fn(g, 1, |x, _| (4.0 * x[0]).cos());
        assert!((sobolev_norm(&f, -1.0) - f.norm() / 17f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bernstein_single_mode() {
        let g = g1(64);
        let f = GridField::from_fn(g, 1, |x, _| (4.0 * x[0]).cos());
        assert!((grad_sup(&f) - 4.0 * f.sup()).abs() < 1e-12);
        let c = GridField::from_fn(g, 1, |_, _| 1.0);
        assert_eq!(bernstein_ratio(&c, 4).unwrap(), 0.0);
        let hi = GridField::from_fn(g, 1, |x, _| (9.0 * x[0]).cos());
        assert!(bernstein_ratio(&hi, 4).is_err());
    }

    #[test]
    fn divfree_rejects_1d_and_shell_one() {
        assert!(random_divfree(g1(16), 2.0, 4, 1).is_err());
        let g = Grid::new(2, 16).unwrap();
        let u = random_divfree(g, 2.0, 1, 7).unwrap();
        let s = forward(&u);
        for c in 0..2 {
            for idx in 0..g.points() {
                if g.mode_norm_sq(idx) != 1.0 {
                    assert!(s.component(c)[idx].norm() < 1e-14);
                }
            }
        }
        assert!(divergence_sup(&u).unwrap() < 1e-12);
        assert_eq!(u, random_divfree(g, 2.0, 1, 7).unwrap());
    }

    #[test]
    fn leray_kills_gradients_and_keeps_divfree() {
        let g = Grid::new(2, 16).unwrap();
        let grad =
            GridField::from_fn(
                g,
                2,
                |x, c| {
                    if c == 0 {
                        2.0 * (2.0 * x[0] + x[1]).cos()
                    } else {
                        (2.0 * x[0] + x[1]).cos()
                    }
                },
            );
        let p = inverse(&leray_project(&forward(&grad)).unwrap());
        assert!(p.norm() < 1e-13);
        let u = random_divfree(g, 3.0, 6, 3).unwrap();
        let pu = inverse(&leray_project(&forward(&u)).unwrap());
        assert!(pu.dist(&u) < 1e-13 * u.norm().max(1.0));
    }
}
