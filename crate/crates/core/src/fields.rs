//! Uniform periodic grids, scalar and spinor wave fields, and their
//! spectral (Fourier) representation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub const MIN_NODES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid node count {0} must be a power of two >= {MIN_NODES}")]
    NodeCount(usize),
    #[error("grid bounds must satisfy x_max > x_min (got x_min={x_min}, x_max={x_max})")]
    Bounds { x_min: f64, x_max: f64 },
    #[error("component length {len} does not match grid size {n}")]
    Length { len: usize, n: usize },
    #[error("cannot normalize a zero state")]
    ZeroNorm,
    #[error("momentum analysis needs a scalar state")]
    SpinorTransform,
}

/// Uniform periodic lattice: node `k` sits at `x_min + k*dx` and node `n` is node 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self, FieldError> {
        if !(n >= MIN_NODES && n.is_power_of_two()) {
            return Err(FieldError::NodeCount(n));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(FieldError::Bounds { x_min, x_max });
        }
        Ok(Self {
            x_min,
            x_max,
            n,
            dx: (x_max - x_min) / n as f64,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn position(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.position(k))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x < self.x_max
    }

    /// Maps any position into `[x_min, x_max)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let len = self.length();
        let mut y = (x - self.x_min).rem_euclid(len) + self.x_min;
        // rem_euclid can round up to exactly `len`
        if y >= self.x_max {
            y -= len;
        }
        y
    }

    /// Index of the node nearest to `x` (periodic).
    pub fn nearest_node(&self, x: f64) -> usize {
        let s = (self.wrap(x) - self.x_min) / self.dx;
        (s.round() as usize) % self.n
    }

    /// Angular wavenumbers in FFT storage order: 0, 1, ..., n/2-1, -n/2, ..., -1
    /// times `2π/L`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = 2.0 * PI / self.length();
        let half = self.n / 2;
        (0..self.n)
            .map(|j| {
                let m = if j < half { j as f64 } else { j as f64 - self.n as f64 };
                m * dk
            })
            .collect()
    }

    /// Mirror node of `k` under `x -> -x`, if the grid is symmetric about zero.
    pub fn mirror_node(&self, k: usize) -> Option<usize> {
        if (self.x_min + self.x_max).abs() > 1e-12 * self.length() {
            return None;
        }
        Some((self.n - k) % self.n)
    }
}

/// FFT plans for one grid size, shared by everything that needs spectral work.
#[derive(Clone)]
pub struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
    n: usize,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(grid.len()),
            inverse: planner.plan_fft_inverse(grid.len()),
            wavenumbers: grid.wavenumbers(),
            n: grid.len(),
        }
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse DFT in place (caller divides by n).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// Spectral first derivative of a real periodic sequence.
    ///
    /// The Nyquist mode is dropped so the operator maps real data to real data.
    /// An all-zero input yields an exactly zero output.
    pub fn derivative_real(&self, values: &[f64]) -> Vec<f64> {
        if values.iter().all(|&v| v == 0.0) {
            return vec![0.0; values.len()];
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        let scale = 1.0 / self.n as f64;
        let nyquist = self.n / 2;
        for (j, (c, &k)) in buf.iter_mut().zip(&self.wavenumbers).enumerate() {
            *c = if j == nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-c.im * k, c.re * k) * scale
            };
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Scalar,
    Spinor,
}

/// A scalar field Ψ or a two-component spinor (Ψ↑, Ψ↓) on a grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    grid: Grid1D,
    components: Vec<Vec<Complex64>>,
    time: f64,
}

impl WaveState {
    pub fn scalar(grid: Grid1D, values: Vec<Complex64>) -> Result<Self, FieldError> {
        check_len(&grid, &values)?;
        Ok(Self {
            grid,
            components: vec![values],
            time: 0.0,
        })
    }

    pub fn spinor(grid: Grid1D, up: Vec<Complex64>, down: Vec<Complex64>) -> Result<Self, FieldError> {
        check_len(&grid, &up)?;
        check_len(&grid, &down)?;
        Ok(Self {
            grid,
            components: vec![up, down],
            time: 0.0,
        })
    }

    /// Scalar state sampled from `f` at the grid nodes.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.positions().map(f).collect();
        Self {
            grid,
            components: vec![values],
            time: 0.0,
        }
    }

    /// Spinor `(c_up·Ψ, c_down·Ψ)` built from a scalar state.
    pub fn spin_split(&self, c_up: Complex64, c_down: Complex64) -> Result<Self, FieldError> {
        if self.kind() != StateKind::Scalar {
            return Err(FieldError::SpinorTransform);
        }
        let psi = &self.components[0];
        Ok(Self {
            grid: self.grid,
            components: vec![
                psi.iter().map(|&v| c_up * v).collect(),
                psi.iter().map(|&v| c_down * v).collect(),
            ],
            time: self.time,
        })
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn kind(&self) -> StateKind {
        if self.components.len() == 1 {
            StateKind::Scalar
        } else {
            StateKind::Spinor
        }
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.components
    }

    pub(crate) fn components_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.components
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    /// Σ_c Σ_k |Ψ_c(x_k)|² dx.
    pub fn norm_squared(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            * self.grid.dx
    }

    pub fn normalized(mut self) -> Result<Self, FieldError> {
        let norm = self.norm_squared();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(FieldError::ZeroNorm);
        }
        let scale = 1.0 / norm.sqrt();
        for c in &mut self.components {
            for v in c.iter_mut() {
                *v *= scale;
            }
        }
        Ok(self)
    }

    /// ρ(x_k) = Σ_c |Ψ_c(x_k)|².
    pub fn density(&self) -> Vec<f64> {
        let mut rho: Vec<f64> = self.components[0].iter().map(|v| v.norm_sqr()).collect();
        for c in &self.components[1..] {
            for (r, v) in rho.iter_mut().zip(c) {
                *r += v.norm_sqr();
            }
        }
        rho
    }

    /// Polar amplitude R = |Ψ| per node (scalar: |Ψ|; spinor: √ρ).
    pub fn magnitude(&self) -> Vec<f64> {
        self.density().into_iter().map(f64::sqrt).collect()
    }

    /// Polar phase S = arg Ψ per node of one component.
    pub fn phase(&self, component: usize) -> Vec<f64> {
        self.components[component].iter().map(|v| v.arg()).collect()
    }

    /// Unitary transform onto the momentum lattice `p_j = 2πj/L`, `j ∈ [-n/2, n/2)`.
    pub fn fourier_transform(&self) -> Result<MomentumField, FieldError> {
        if self.kind() != StateKind::Scalar {
            return Err(FieldError::SpinorTransform);
        }
        let spectral = Spectral::new(&self.grid);
        let mut buf = self.components[0].clone();
        spectral.forward(&mut buf);

        let n = self.grid.n;
        let half = n / 2;
        let dp = 2.0 * PI / self.grid.length();
        let scale = self.grid.dx / (2.0 * PI).sqrt();
        let mut momenta = Vec::with_capacity(n);
        let mut amplitudes = Vec::with_capacity(n);
        // reorder from FFT storage to ascending momentum
        for idx in 0..n {
            let j = idx as i64 - half as i64;
            let slot = j.rem_euclid(n as i64) as usize;
            let p = j as f64 * dp;
            let shift = Complex64::from_polar(1.0, -p * self.grid.x_min);
            momenta.push(p);
            amplitudes.push(buf[slot] * shift * scale);
        }
        Ok(MomentumField {
            grid: self.grid,
            time: self.time,
            momenta,
            amplitudes,
        })
    }
}

fn check_len(grid: &Grid1D, values: &[Complex64]) -> Result<(), FieldError> {
    if values.len() != grid.n {
        return Err(FieldError::Length {
            len: values.len(),
            n: grid.n,
        });
    }
    Ok(())
}

/// Scalar field on the momentum lattice, ascending in p.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumField {
    grid: Grid1D,
    time: f64,
    momenta: Vec<f64>,
    amplitudes: Vec<Complex64>,
}

impl MomentumField {
    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI / self.grid.length()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.dp()
    }

    pub fn inverse(&self) -> WaveState {
        let n = self.grid.n;
        let half = n / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = (2.0 * PI).sqrt() / (self.grid.dx * n as f64);
        for (idx, (&p, &a)) in self.momenta.iter().zip(&self.amplitudes).enumerate() {
            let j = idx as i64 - half as i64;
            let slot = j.rem_euclid(n as i64) as usize;
            buf[slot] = a * Complex64::from_polar(1.0, p * self.grid.x_min) * scale;
        }
        Spectral::new(&self.grid).inverse(&mut buf);
        WaveState {
            grid: self.grid,
            components: vec![buf],
            time: self.time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground(x: f64) -> Complex64 {
        Complex64::new(PI.powf(-0.25) * (-x * x / 2.0).exp(), 0.0)
    }

    #[test]
    fn grid_spacing_and_nodes() {
        let g = Grid1D::new(-30.0, 30.0, 2048).unwrap();
        assert!((g.dx() - 0.029296875).abs() < 1e-15);
        let g = Grid1D::new(0.0, 1.0, 16).unwrap();
        assert_eq!(g.position(0), 0.0);
        assert_eq!(g.position(15), 0.9375);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert_eq!(Grid1D::new(-1.0, 1.0, 100), Err(FieldError::NodeCount(100)));
        assert_eq!(Grid1D::new(-1.0, 1.0, 8), Err(FieldError::NodeCount(8)));
        assert!(matches!(Grid1D::new(1.0, 1.0, 16), Err(FieldError::Bounds { .. })));
        assert!(matches!(Grid1D::new(2.0, 1.0, 16), Err(FieldError::Bounds { .. })));
    }

    #[test]
    fn wrap_is_periodic() {
        let g = Grid1D::new(-2.0, 2.0, 16).unwrap();
        assert_eq!(g.wrap(2.0), -2.0);
        assert!((g.wrap(2.5) - -1.5).abs() < 1e-15);
        assert!((g.wrap(-2.5) - 1.5).abs() < 1e-15);
        assert_eq!(g.nearest_node(1.99), 0);
        assert_eq!(g.mirror_node(4), Some(12));
        assert_eq!(g.mirror_node(0), Some(0));
    }

    #[test]
    fn gaussian_norm_is_one() {
        let g = Grid1D::new(-30.0, 30.0, 2048).unwrap();
        let s = WaveState::from_fn(g, ground);
        assert!((s.norm_squared() - 1.0).abs() < 1e-9);
        let zero = WaveState::from_fn(g, |_| Complex64::new(0.0, 0.0));
        assert_eq!(zero.norm_squared(), 0.0);
        assert_eq!(zero.normalized(), Err(FieldError::ZeroNorm));
    }

    #[test]
    fn spinor_norm_and_density() {
        let g = Grid1D::new(-30.0, 30.0, 2048).unwrap();
        let s = WaveState::from_fn(g, ground);
        let c1 = Complex64::new(0.6, 0.0);
        let c2 = Complex64::new(0.0, 0.8);
        let sp = s.spin_split(c1, c2).unwrap();
        assert_eq!(sp.kind(), StateKind::Spinor);
        assert!((sp.norm_squared() - 1.0).abs() < 1e-9);

        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let eq = s.spin_split(h, h).unwrap();
        for (a, b) in eq.density().iter().zip(s.density()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn plane_wave_density_is_flat() {
        let g = Grid1D::new(-10.0, 10.0, 64).unwrap();
        let k0 = 2.0 * PI * 3.0 / g.length();
        let amp = 1.0 / g.length().sqrt();
        let s = WaveState::from_fn(g, |x| Complex64::from_polar(amp, k0 * x));
        for r in s.density() {
            assert!((r - 1.0 / 20.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_transform_matches_closed_form() {
        let g = Grid1D::new(-30.0, 30.0, 2048).unwrap();
        let s = WaveState::from_fn(g, ground);
        let ft = s.fourier_transform().unwrap();
        for (&p, a) in ft.momenta().iter().zip(ft.amplitudes()) {
            let want = PI.powf(-0.5) * (-p * p).exp();
            assert!((a.norm_sqr() - want).abs() < 1e-6, "p={p}");
        }
        assert!((ft.norm_squared() - s.norm_squared()).abs() < 1e-10);
        assert_eq!(ft.momenta()[0], -(1024.0) * 2.0 * PI / 60.0);
    }

    #[test]
    fn plane_wave_transform_is_a_single_spike() {
        let g = Grid1D::new(-8.0, 8.0, 128).unwrap();
        let k0 = 2.0 * PI * 5.0 / g.length();
        let s = WaveState::from_fn(g, |x| Complex64::from_polar(1.0 / 4.0, k0 * x));
        let ft = s.fourier_transform().unwrap();
        let peak = ft
            .amplitudes()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .unwrap()
            .0;
        assert!((ft.momenta()[peak] - k0).abs() < 1e-12);
        let off: f64 = ft
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != peak)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!(off < 1e-24);
    }

    #[test]
    fn transform_rejects_spinor() {
        let g = Grid1D::new(-4.0, 4.0, 16).unwrap();
        let s = WaveState::from_fn(g, ground);
        let one = Complex64::new(1.0, 0.0);
        let sp = s.spin_split(one, Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(sp.fourier_transform(), Err(FieldError::SpinorTransform));
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid1D::new(0.0, 2.0 * PI, 64).unwrap();
        let sp = Spectral::new(&g);
        let vals: Vec<f64> = g.positions().map(|x| (3.0 * x).sin()).collect();
        let d = sp.derivative_real(&vals);
        for (x, v) in g.positions().zip(d) {
            assert!((v - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
        }
        assert!(sp.derivative_real(&[0.0; 64]).iter().all(|&v| v == 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn transform_roundtrip(
                center in -5.0f64..5.0,
                width in 0.5f64..2.0,
                k0 in -3.0f64..3.0,
            ) {
                let g = Grid1D::new(-30.0, 30.0, 1024).unwrap();
                let s = WaveState::from_fn(g, |x| {
                    Complex64::from_polar((-(x - center).powi(2) / (4.0 * width * width)).exp(), k0 * x)
                });
                let back = s.fourier_transform().unwrap().inverse();
                for (a, b) in s.components()[0].iter().zip(&back.components()[0]) {
                    prop_assert!((a - b).norm() < 1e-12);
                }
                prop_assert!(s.density().iter().all(|&r| r >= 0.0));
            }
        }
    }
}
