//! Guiding-equation layer: probability current, Bohmian velocity fields and
//! trajectory integration through a stored evolution.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{Grid1D, Spectral, WaveState};
use crate::propagator::EvolutionRecord;

/// Relative density below which the guiding velocity is not evaluated directly.
pub const DENSITY_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("evolution record holds no states")]
    EmptyEvolution,
    #[error("initial position {0} lies outside the grid domain")]
    OutOfDomain(f64),
}

/// `J = Im(Ψ*·∂xΨ)` summed over components.
///
/// Computed as `Re Ψ · ∂(Im Ψ) − Im Ψ · ∂(Re Ψ)` with real spectral
/// derivatives, so an everywhere-real state gives exactly zero current.
pub fn current(state: &WaveState) -> Vec<f64> {
    let spectral = Spectral::new(state.grid());
    current_with(&spectral, state)
}

fn current_with(spectral: &Spectral, state: &WaveState) -> Vec<f64> {
    let per_component: Vec<Vec<f64>> = state
        .components()
        .iter()
        .map(|psi| {
            let re: Vec<f64> = psi.iter().map(|v| v.re).collect();
            let im: Vec<f64> = psi.iter().map(|v| v.im).collect();
            let d_re = spectral.derivative_real(&re);
            let d_im = spectral.derivative_real(&im);
            (0..psi.len()).map(|k| re[k] * d_im[k] - im[k] * d_re[k]).collect()
        })
        .collect();
    // summed component-wise so swapping spinor components is bit-exact
    let mut j = per_component[0].clone();
    for c in &per_component[1..] {
        for (a, b) in j.iter_mut().zip(c) {
            *a += b;
        }
    }
    j
}

/// Bohmian velocity `v = J/ρ` sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl VelocityField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid1D, v: f64) -> Self {
        Self::new(grid, vec![v; grid.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Periodic four-point cubic interpolation.
    pub fn at(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let s = (self.grid.wrap(x) - self.grid.x_min()) / self.grid.dx();
        let base = s.floor();
        let f = s - base;
        let i = base as usize % n;
        let im1 = (i + n - 1) % n;
        let ip1 = (i + 1) % n;
        let ip2 = (i + 2) % n;
        let (v0, v1, v2, v3) = (self.values[im1], self.values[i], self.values[ip1], self.values[ip2]);
        // Lagrange weights on nodes -1, 0, 1, 2
        let w0 = -f * (f - 1.0) * (f - 2.0) / 6.0;
        let w1 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
        let w2 = -(f + 1.0) * f * (f - 2.0) / 2.0;
        let w3 = (f + 1.0) * f * (f - 1.0) / 6.0;
        w0 * v0 + w1 * v1 + w2 * v2 + w3 * v3
    }
}

/// Guiding velocity `Im(Ψ*·∂xΨ)/(Ψ*·Ψ)` per node.
///
/// Nodes with `ρ < DENSITY_FLOOR·max ρ` take the value of the nearest node
/// above the floor; a zero state yields a zero field.
pub fn velocity_field(state: &WaveState) -> VelocityField {
    let spectral = Spectral::new(state.grid());
    velocity_field_with(&spectral, state)
}

fn velocity_field_with(spectral: &Spectral, state: &WaveState) -> VelocityField {
    let rho = state.density();
    let j = current_with(spectral, state);
    let grid = *state.grid();
    let peak = rho.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return VelocityField::constant(grid, 0.0);
    }
    let floor = DENSITY_FLOOR * peak;
    let valid: Vec<bool> = rho.iter().map(|&r| r >= floor).collect();
    let mut v: Vec<f64> = j.iter().zip(&rho).map(|(j, r)| j / r).collect();
    fill_from_nearest_valid(&mut v, &valid);
    VelocityField::new(grid, v)
}

/// Replaces entries where `valid` is false by the nearest valid entry
/// (periodic distance, ties go left).
fn fill_from_nearest_valid(values: &mut [f64], valid: &[bool]) {
    let n = values.len();
    let Some(first) = valid.iter().position(|&ok| ok) else {
        return;
    };
    if valid.iter().all(|&ok| ok) {
        return;
    }
    // distance to nearest valid node on the left and on the right
    let mut left = vec![(usize::MAX, 0usize); n];
    let mut last = first;
    for step in 1..=n {
        let k = (first + step) % n;
        if valid[k] {
            last = k;
        }
        left[k] = ((k + n - last) % n, last);
    }
    let last_valid = (0..n).rev().map(|s| (first + s) % n).find(|&k| valid[k]).unwrap();
    let mut right = vec![(usize::MAX, 0usize); n];
    let mut next = last_valid;
    for step in 1..=n {
        let k = (last_valid + n - step) % n;
        if valid[k] {
            next = k;
        }
        right[k] = ((next + n - k) % n, next);
    }
    let source: Vec<usize> = (0..n)
        .map(|k| {
            if valid[k] {
                k
            } else if left[k].0 <= right[k].0 {
                left[k].1
            } else {
                right[k].1
            }
        })
        .collect();
    let snapshot = values.to_vec();
    for (k, v) in values.iter_mut().enumerate() {
        *v = snapshot[source[k]];
    }
}

/// One RK4 step of `dX/dt = v(X, t)` between two velocity snapshots `dt`
/// apart, linear in time between them; the result is wrapped into the domain.
pub fn advance_trajectory(x: f64, now: &VelocityField, next: &VelocityField, dt: f64) -> f64 {
    let mid = |y: f64| 0.5 * (now.at(y) + next.at(y));
    let k1 = now.at(x);
    let k2 = mid(x + 0.5 * dt * k1);
    let k3 = mid(x + 0.5 * dt * k2);
    let k4 = next.at(x + dt * k3);
    now.grid().wrap(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Particle positions on the stored time lattice of an evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Arc<[f64]>,
    positions: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: Arc<[f64]>, positions: Vec<f64>) -> Self {
        assert_eq!(times.len(), positions.len());
        Self { times, positions }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn initial(&self) -> f64 {
        self.positions[0]
    }

    pub fn last(&self) -> f64 {
        *self.positions.last().unwrap()
    }

    /// Number of sign changes of X(t) along the trajectory.
    pub fn sign_changes(&self) -> usize {
        self.positions
            .windows(2)
            .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub master_seed: Option<u64>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Positions of every trajectory at stored index `k`.
    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.positions[k]).collect()
    }

    pub fn final_positions(&self) -> Vec<f64> {
        self.trajectories.iter().map(Trajectory::last).collect()
    }
}

/// Integrates every initial position through the stored evolution.
///
/// Velocity fields are built one stored time ahead of the particles; each
/// particle is advanced independently so the result does not depend on how
/// the work is scheduled.
pub fn run_trajectories(initial_positions: &[f64], evolution: &EvolutionRecord) -> Result<Ensemble, GuidanceError> {
    let grid = *evolution.grid().ok_or(GuidanceError::EmptyEvolution)?;
    if let Some(&x) = initial_positions.iter().find(|&&x| !grid.contains(x)) {
        return Err(GuidanceError::OutOfDomain(x));
    }
    let times: Arc<[f64]> = evolution.times.clone().into();
    let spectral = Spectral::new(&grid);
    let steps = evolution.len();

    let mut paths: Vec<Vec<f64>> = initial_positions
        .iter()
        .map(|&x| {
            let mut p = Vec::with_capacity(steps);
            p.push(x);
            p
        })
        .collect();

    let mut now = velocity_field_with(&spectral, &evolution.states[0]);
    for k in 1..steps {
        let next = velocity_field_with(&spectral, &evolution.states[k]);
        let h = evolution.times[k] - evolution.times[k - 1];
        paths.par_iter_mut().for_each(|p| {
            let x = *p.last().unwrap();
            p.push(advance_trajectory(x, &now, &next, h));
        });
        now = next;
    }

    Ok(Ensemble {
        trajectories: paths
            .into_iter()
            .map(|positions| Trajectory {
                times: Arc::clone(&times),
                positions,
            })
            .collect(),
        master_seed: None,
    })
}
