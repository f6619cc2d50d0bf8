//! Born-rule sampling of initial positions and Kolmogorov–Smirnov checks that
//! an ensemble stays distributed as `|Ψ(·,t)|²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{Grid1D, WaveState};
use crate::guidance::{run_trajectories, Ensemble, GuidanceError};
use crate::propagator::EvolutionRecord;

/// Smallest ensemble accepted by [`verify_equivariance`].
pub const MIN_VERIFY_COUNT: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("state has zero norm; nothing to sample")]
    ZeroNorm,
    #[error("sample count must be at least {min} (got {got})")]
    Count { min: usize, got: usize },
    #[error("check time {0} is not a stored time of the evolution")]
    CheckTime(f64),
    #[error("significance level must lie in (0, 1) (got {0})")]
    Alpha(f64),
    #[error("ensemble does not share the evolution's time lattice")]
    Lattice,
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

/// CDF of the piecewise-linear density through the node values of a periodic
/// grid; cell `k` runs from node `k` to node `k+1` (node `n` is node 0).
#[derive(Debug, Clone)]
pub struct GridDensityCdf {
    grid: Grid1D,
    rho: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GridDensityCdf {
    pub fn new(grid: Grid1D, rho: Vec<f64>) -> Result<Self, EquilibriumError> {
        let n = grid.len();
        let dx = grid.dx();
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..n {
            acc += 0.5 * (rho[k] + rho[(k + 1) % n]) * dx;
            cumulative.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(EquilibriumError::ZeroNorm);
        }
        Ok(Self { grid, rho, cumulative })
    }

    pub fn from_state(state: &WaveState) -> Result<Self, EquilibriumError> {
        Self::new(*state.grid(), state.density())
    }

    pub fn total(&self) -> f64 {
        self.cumulative[self.grid.len()]
    }

    /// Probability mass of grid cell `k`.
    pub fn cell_mass(&self, k: usize) -> f64 {
        (self.cumulative[k + 1] - self.cumulative[k]) / self.total()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.grid.x_min() {
            return 0.0;
        }
        if x >= self.grid.x_max() {
            return 1.0;
        }
        let n = self.grid.len();
        let dx = self.grid.dx();
        let k = (((x - self.grid.x_min()) / dx).floor() as usize).min(n - 1);
        let s = x - self.grid.position(k);
        let (r0, r1) = (self.rho[k], self.rho[(k + 1) % n]);
        let partial = r0 * s + (r1 - r0) * s * s / (2.0 * dx);
        ((self.cumulative[k] + partial) / self.total()).clamp(0.0, 1.0)
    }

    /// Exact inverse of [`cdf`](Self::cdf) for `u ∈ [0, 1)`.
    pub fn inverse(&self, u: f64) -> f64 {
        let n = self.grid.len();
        let dx = self.grid.dx();
        let target = u * self.total();
        // last cell whose left cumulative is <= target, skipping empty cells
        let mut k = self.cumulative.partition_point(|&c| c <= target).saturating_sub(1).min(n - 1);
        while k > 0 && self.cumulative[k + 1] <= self.cumulative[k] {
            k -= 1;
        }
        while self.cumulative[k + 1] <= self.cumulative[k] && k + 1 < n {
            k += 1;
        }
        let r = (target - self.cumulative[k]).max(0.0);
        let (r0, r1) = (self.rho[k], self.rho[(k + 1) % n]);
        let slope = (r1 - r0) / dx;
        // root of r0·s + slope·s²/2 = r in cancellation-free form
        let disc = (r0 * r0 + 2.0 * slope * r).max(0.0);
        let denom = r0 + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.grid.wrap(self.grid.position(k) + s.clamp(0.0, dx))
    }
}

/// Draws `count` positions from `|Ψ|²` by inverse-CDF transform of a seeded
/// ChaCha8 stream.
pub fn sample_born(state: &WaveState, count: usize, seed: u64) -> Result<Vec<f64>, EquilibriumError> {
    if count == 0 {
        return Err(EquilibriumError::Count { min: 1, got: 0 });
    }
    let cdf = GridDensityCdf::from_state(state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| cdf.inverse(rng.random::<f64>())).collect())
}

/// Kolmogorov–Smirnov statistic `sup |F_n(x) − F(x)|`.
///
/// # Panics
///
/// Panics if `samples` is empty.
pub fn ks_distance(samples: &[f64], reference_cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!samples.is_empty(), "KS distance needs at least one sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = reference_cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value `sqrt(-ln(α/2)/2)/√n`.
pub fn ks_critical_value(alpha: f64, count: usize) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (count as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub check_times: Vec<f64>,
    pub ks_statistics: Vec<f64>,
    pub sample_count: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Compares an existing ensemble against `|Ψ(·,t)|²` at each check time.
pub fn check_equivariance(
    ensemble: &Ensemble,
    evolution: &EvolutionRecord,
    check_times: &[f64],
    alpha: f64,
) -> Result<EquivarianceReport, EquilibriumError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EquilibriumError::Alpha(alpha));
    }
    if ensemble.is_empty() {
        return Err(EquilibriumError::Count { min: 1, got: 0 });
    }
    if ensemble.trajectories[0].times().len() != evolution.len() {
        return Err(EquilibriumError::Lattice);
    }
    let indices = check_times
        .iter()
        .map(|&t| evolution.index_of_time(t).ok_or(EquilibriumError::CheckTime(t)))
        .collect::<Result<Vec<_>, _>>()?;
    let ks_statistics = indices
        .par_iter()
        .map(|&k| {
            let cdf = GridDensityCdf::from_state(&evolution.states[k])?;
            Ok(ks_distance(&ensemble.positions_at(k), |x| cdf.cdf(x)))
        })
        .collect::<Result<Vec<f64>, EquilibriumError>>()?;
    let sample_count = ensemble.len();
    let threshold = ks_critical_value(alpha, sample_count);
    let passed = ks_statistics.iter().all(|&d| d < threshold);
    Ok(EquivarianceReport {
        check_times: check_times.to_vec(),
        ks_statistics,
        sample_count,
        alpha,
        threshold,
        passed,
    })
}

/// Samples the first stored state, carries the sample along the guiding flow
/// and KS-tests it against the evolved density at each check time.
pub fn verify_equivariance(
    evolution: &EvolutionRecord,
    count: usize,
    seed: u64,
    check_times: &[f64],
    alpha: f64,
) -> Result<EquivarianceReport, EquilibriumError> {
    if count < MIN_VERIFY_COUNT {
        return Err(EquilibriumError::Count {
            min: MIN_VERIFY_COUNT,
            got: count,
        });
    }
    let first = evolution.states.first().ok_or(GuidanceError::EmptyEvolution)?;
    let start = sample_born(first, count, seed)?;
    let mut ensemble = run_trajectories(&start, evolution)?;
    ensemble.master_seed = Some(seed);
    check_equivariance(&ensemble, evolution, check_times, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::{analytic_free_gaussian, split_step_evolve, Potential};
    use num_complex::Complex64;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn gaussian(grid: Grid1D) -> WaveState {
        WaveState::from_fn(grid, |x| analytic_free_gaussian(x, 0.0))
    }

    fn default_grid() -> Grid1D {
        Grid1D::new(-30.0, 30.0, 2048).unwrap()
    }

    #[test]
    fn delta_density_samples_stay_at_the_node() {
        let g = Grid1D::new(-4.0, 4.0, 64).unwrap();
        let spike = 20;
        let mut vals = vec![Complex64::new(0.0, 0.0); 64];
        vals[spike] = Complex64::new(1.0, 0.0);
        let s = WaveState::scalar(g, vals).unwrap();
        let xs = sample_born(&s, 500, 3).unwrap();
        let x0 = g.position(spike);
        assert!(xs.iter().all(|x| (x - x0).abs() <= g.dx()));
    }

    #[test]
    fn gaussian_sample_moments() {
        let xs = sample_born(&gaussian(default_grid()), 100_000, 11).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((0.49..0.51).contains(&var), "var {var}");
    }

    #[test]
    fn sampling_is_seeded() {
        let s = gaussian(default_grid());
        assert_eq!(sample_born(&s, 100, 5).unwrap(), sample_born(&s, 100, 5).unwrap());
        assert_ne!(sample_born(&s, 100, 5).unwrap(), sample_born(&s, 100, 6).unwrap());
    }

    #[test]
    fn sampling_rejects_degenerate_input() {
        let g = Grid1D::new(-4.0, 4.0, 16).unwrap();
        let zero = WaveState::from_fn(g, |_| Complex64::new(0.0, 0.0));
        assert_eq!(sample_born(&zero, 10, 0), Err(EquilibriumError::ZeroNorm));
        assert!(sample_born(&gaussian(g), 0, 0).is_err());
    }

    #[test]
    fn cdf_inverse_roundtrip() {
        let g = Grid1D::new(-6.0, 6.0, 128).unwrap();
        let cdf = GridDensityCdf::from_state(&gaussian(g)).unwrap();
        for &u in &[1e-9, 0.01, 0.2, 0.5, 0.73, 0.999] {
            let x = cdf.inverse(u);
            assert!((cdf.cdf(x) - u).abs() < 1e-12, "u={u}");
        }
        assert_eq!(cdf.cdf(-7.0), 0.0);
        assert_eq!(cdf.cdf(6.0), 1.0);
    }

    #[test]
    fn ks_definition_cases() {
        let phi = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / 2f64.sqrt()));
        assert!((ks_distance(&[0.0], phi) - 0.5).abs() < 1e-15);
        let uniform = |x: f64| x.clamp(0.0, 1.0);
        assert_eq!(ks_distance(&[-3.0, -2.0, -1.0], uniform), 1.0);
        assert!((ks_critical_value(0.01, 10_000) - 0.016276).abs() < 1e-6);
    }

    #[test]
    fn ks_of_matching_samples_is_below_critical_value() {
        let g = default_grid();
        let s = gaussian(g);
        let cdf = GridDensityCdf::from_state(&s).unwrap();
        let xs = sample_born(&s, 10_000, 2024).unwrap();
        assert!(ks_distance(&xs, |x| cdf.cdf(x)) < ks_critical_value(0.01, 10_000));
    }

    #[test]
    fn chi_square_on_grid_cells() {
        let g = Grid1D::new(-8.0, 8.0, 64).unwrap();
        let s = gaussian(g);
        let cdf = GridDensityCdf::from_state(&s).unwrap();
        let count = 50_000;
        let xs = sample_born(&s, count, 99).unwrap();
        let mut observed = vec![0usize; g.len()];
        for x in xs {
            let k = (((x - g.x_min()) / g.dx()).floor() as usize).min(g.len() - 1);
            observed[k] += 1;
        }
        // merge sparse cells so every bin expects at least five draws
        let mut bins: Vec<(f64, f64)> = vec![];
        let (mut e, mut o) = (0.0, 0.0);
        for (k, &hits) in observed.iter().enumerate() {
            e += cdf.cell_mass(k) * count as f64;
            o += hits as f64;
            if e >= 5.0 {
                bins.push((e, o));
                e = 0.0;
                o = 0.0;
            }
        }
        if let Some(last) = bins.last_mut() {
            last.0 += e;
            last.1 += o;
        }
        let stat: f64 = bins.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
        let crit = ChiSquared::new((bins.len() - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "chi2 {stat} vs {crit}");
    }

    #[test]
    fn sampling_is_stable_under_grid_refinement() {
        let coarse = sample_born(&gaussian(default_grid()), 10_000, 1).unwrap();
        let fine_grid = Grid1D::new(-30.0, 30.0, 4096).unwrap();
        let fine_cdf = GridDensityCdf::from_state(&gaussian(fine_grid)).unwrap();
        let d = ks_distance(&coarse, |x| fine_cdf.cdf(x));
        assert!(d < 2.0 * ks_critical_value(0.01, 10_000));
    }

    #[test]
    fn free_gaussian_is_equivariant() {
        let rec = split_step_evolve(&gaussian(default_grid()), &Potential::Free, 1e-3, 2000, 50).unwrap();
        let report = verify_equivariance(&rec, 10_000, 7, &[0.5, 1.0, 2.0], 0.01).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.ks_statistics.len(), 3);
        assert!(report.ks_statistics.iter().all(|d| (0.0..=1.0).contains(d)));
    }

    #[test]
    fn zero_step_evolution_only_sees_sampling_noise() {
        let rec = split_step_evolve(&gaussian(default_grid()), &Potential::Free, 1e-3, 0, 1).unwrap();
        let report = verify_equivariance(&rec, 10_000, 8, &[0.0], 0.01).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn shifted_ensemble_fails() {
        let rec = split_step_evolve(&gaussian(default_grid()), &Potential::Free, 1e-3, 2000, 50).unwrap();
        let start: Vec<f64> = sample_born(&rec.states[0], 10_000, 7)
            .unwrap()
            .into_iter()
            .map(|x| x + 1.0)
            .collect();
        let ens = run_trajectories(&start, &rec).unwrap();
        let report = check_equivariance(&ens, &rec, &[0.5, 1.0, 2.0], 0.01).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn verify_rejects_bad_requests() {
        let rec = split_step_evolve(&gaussian(default_grid()), &Potential::Free, 1e-3, 10, 1).unwrap();
        assert!(matches!(
            verify_equivariance(&rec, 10, 0, &[0.0], 0.01),
            Err(EquilibriumError::Count { .. })
        ));
        assert_eq!(
            verify_equivariance(&rec, 1000, 0, &[0.0005], 0.01),
            Err(EquilibriumError::CheckTime(0.0005))
        );
        assert_eq!(
            verify_equivariance(&rec, 1000, 0, &[0.0], 1.5),
            Err(EquilibriumError::Alpha(1.5))
        );
    }
}
