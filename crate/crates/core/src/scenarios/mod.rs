//! The two-slit, Stern–Gerlach and time-of-flight momentum experiments as
//! runnable scenarios.
//!
//! Every scenario follows the same pipeline: build the initial state, evolve
//! it, Born-sample `trajectories` starting points with the configured seed,
//! integrate them through the evolution, then compute scenario metrics and an
//! equivariance report on the same ensemble.

mod config;
mod output;

use std::collections::BTreeMap;

use num_complex::Complex64;
use statrs::function::erf::erf;
use thiserror::Error;

pub use config::{parse_config, parse_config_for, ConfigError, ScenarioConfig, ScenarioKind, ScenarioParams};
pub use output::{read_summary, verify_outputs, write_outputs, OutputError, Summary, Verification, SCHEMA_VERSION};

use crate::equilibrium::{check_equivariance, ks_critical_value, ks_distance, sample_born, EquilibriumError, EquivarianceReport, GridDensityCdf};
use crate::fields::{FieldError, Grid1D, WaveState};
use crate::guidance::{run_trajectories, velocity_field, Ensemble, GuidanceError, Trajectory};
use crate::propagator::{
    analytic_free_gaussian, analytic_free_packet, split_step_evolve, EvolutionRecord, Orientation, Potential,
    PropagationError,
};

/// Norm drift allowed over a scenario run.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;
/// Largest endpoint fraction allowed in a one-cell window at an interference minimum.
pub const FRINGE_WINDOW_LIMIT: f64 = 0.005;
/// Largest endpoint ratio (unit window at a minimum / unit window at the peak).
pub const FRINGE_CONTRAST_LIMIT: f64 = 0.2;
/// Trajectories used in the spreading-law metric start at least this far from 0.
pub const LAW_MIN_START: f64 = 0.1;
/// Spreading-law metric is evaluated up to this time.
pub const LAW_HORIZON: f64 = 5.0;
pub const LAW_TOLERANCE: f64 = 1e-3;
pub const INITIAL_SPEED_LIMIT: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("scenario `{found}` cannot run as `{expected}`")]
    WrongScenario { expected: ScenarioKind, found: ScenarioKind },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// Which packet a particle followed, relative to the field orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinOutcome {
    Up,
    Down,
}

impl SpinOutcome {
    /// Spin-up iff the particle exits on the side the ↑ packet moves toward.
    pub fn label(final_z: f64, orientation: Orientation) -> Self {
        let upper = final_z > 0.0;
        match (upper, orientation) {
            (true, Orientation::Up) | (false, Orientation::Down) => SpinOutcome::Up,
            _ => SpinOutcome::Down,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpinOutcome::Up => "up",
            SpinOutcome::Down => "down",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub grid: Grid1D,
    pub ensemble: Ensemble,
    pub check_times: Vec<f64>,
    /// `|Ψ(·,t)|²` at each check time.
    pub densities: Vec<Vec<f64>>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    pub equivariance: EquivarianceReport,
    /// Per-trajectory labels; spin scenario only.
    pub outcomes: Option<Vec<SpinOutcome>>,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.checks.values().all(|&ok| ok)
    }

    pub fn metric(&self, name: &str) -> f64 {
        self.metrics[name]
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, &ok)| !ok).map(|(k, _)| k.as_str()).collect()
    }
}

/// Runs whichever scenario the config names.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    match config.scenario {
        ScenarioKind::DoubleSlit => scenario_double_slit(config),
        ScenarioKind::SpinMeasurement => scenario_spin_measurement(config),
        ScenarioKind::MomentumMeasurement => scenario_momentum_measurement(config),
    }
}

fn expect(config: &ScenarioConfig, kind: ScenarioKind) -> Result<Grid1D, ScenarioError> {
    if config.scenario != kind {
        return Err(ScenarioError::WrongScenario {
            expected: kind,
            found: config.scenario,
        });
    }
    config.validate()?;
    Ok(config.grid()?)
}

/// Evolution, ensemble and shared bookkeeping common to all scenarios.
struct Run {
    evolution: EvolutionRecord,
    ensemble: Ensemble,
    check_indices: Vec<usize>,
    equivariance: EquivarianceReport,
}

fn execute(
    config: &ScenarioConfig,
    initial: &WaveState,
    potential: &Potential,
    starts: Option<Vec<f64>>,
) -> Result<Run, ScenarioError> {
    let evolution = split_step_evolve(initial, potential, config.dt, config.steps(), config.store_every)?;
    let starts = match starts {
        Some(s) => s,
        None => sample_born(initial, config.trajectories, config.seed)?,
    };
    let mut ensemble = run_trajectories(&starts, &evolution)?;
    ensemble.master_seed = Some(config.seed);

    let last = evolution.len() - 1;
    let mut check_indices: Vec<usize> = (0..=4).map(|j| (j * last + 2) / 4).collect();
    check_indices.dedup();
    let check_times: Vec<f64> = check_indices.iter().map(|&k| evolution.times[k]).collect();
    let equivariance = check_equivariance(&ensemble, &evolution, &check_times, config.alpha)?;
    Ok(Run {
        evolution,
        ensemble,
        check_indices,
        equivariance,
    })
}

fn finish(
    config: &ScenarioConfig,
    grid: Grid1D,
    run: Run,
    mut metrics: BTreeMap<String, f64>,
    mut checks: BTreeMap<String, bool>,
    outcomes: Option<Vec<SpinOutcome>>,
) -> ScenarioResult {
    let drift = run.evolution.norm_drift();
    metrics.insert("norm_drift".into(), drift);
    checks.insert("norm_conserved".into(), drift < NORM_DRIFT_LIMIT);
    let max_ks = run.equivariance.ks_statistics.iter().copied().fold(0.0, f64::max);
    metrics.insert("equivariance_max_ks".into(), max_ks);
    metrics.insert("equivariance_threshold".into(), run.equivariance.threshold);
    checks.insert("equivariance".into(), run.equivariance.passed);
    ScenarioResult {
        config: config.clone(),
        grid,
        check_times: run.check_indices.iter().map(|&k| run.evolution.times[k]).collect(),
        densities: run.check_indices.iter().map(|&k| run.evolution.states[k].density()).collect(),
        ensemble: run.ensemble,
        metrics,
        checks,
        equivariance: run.equivariance,
        outcomes,
    }
}

pub fn double_slit_initial_state(grid: Grid1D, half_separation: f64, slit_width: f64) -> Result<WaveState, FieldError> {
    WaveState::from_fn(grid, |x| {
        analytic_free_packet(x, 0.0, half_separation, slit_width, 0.0)
            + analytic_free_packet(x, 0.0, -half_separation, slit_width, 0.0)
    })
    .normalized()
}

/// Two symmetric Gaussian slits evolving freely in the transverse coordinate.
pub fn scenario_double_slit(config: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    double_slit_with_starts(config, None)
}

/// Two-slit run from given starting positions instead of Born samples.
pub fn double_slit_with_starts(config: &ScenarioConfig, starts: Option<Vec<f64>>) -> Result<ScenarioResult, ScenarioError> {
    let grid = expect(config, ScenarioKind::DoubleSlit)?;
    let ScenarioParams::DoubleSlit {
        half_separation,
        slit_width,
    } = config.params
    else {
        unreachable!("validated scenario kind")
    };
    let initial = double_slit_initial_state(grid, half_separation, slit_width)?;
    let run = execute(config, &initial, &Potential::Free, starts)?;

    let mut metrics = BTreeMap::new();
    let mut checks = BTreeMap::new();

    let crossings: usize = run.ensemble.trajectories.iter().map(Trajectory::sign_changes).sum();
    metrics.insert("midline_crossings".into(), crossings as f64);
    checks.insert("no_midline_crossings".into(), crossings == 0);

    let final_state = run.evolution.final_state().expect("non-empty evolution");
    let rho = final_state.density();
    let ends = run.ensemble.final_positions();
    let fringes = fringe_statistics(&grid, &rho, &ends);
    metrics.insert("fringe_minima".into(), fringes.minima as f64);
    metrics.insert("fringe_alignment".into(), fringes.window_fraction);
    metrics.insert("fringe_contrast".into(), fringes.contrast);
    checks.insert("fringes_present".into(), fringes.minima > 0);
    checks.insert("fringe_alignment".into(), fringes.window_fraction < FRINGE_WINDOW_LIMIT);
    checks.insert("fringe_contrast".into(), fringes.contrast < FRINGE_CONTRAST_LIMIT);

    let cdf = GridDensityCdf::from_state(final_state)?;
    let endpoint_ks = ks_distance(&ends, |x| cdf.cdf(x));
    let threshold = ks_critical_value(config.alpha, ends.len());
    metrics.insert("endpoint_ks".into(), endpoint_ks);
    checks.insert("endpoint_ks".into(), endpoint_ks < threshold);

    Ok(finish(config, grid, run, metrics, checks, None))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeStatistics {
    /// Interference minima of the final density.
    pub minima: usize,
    /// Largest endpoint fraction in a one-cell window centred on a minimum.
    pub window_fraction: f64,
    /// Largest ratio of endpoints within ±0.5 of a minimum to those within
    /// ±0.5 of the density peak.
    pub contrast: f64,
}

/// Locates the interference minima of `rho` and measures how many endpoints
/// land near them.
pub fn fringe_statistics(grid: &Grid1D, rho: &[f64], endpoints: &[f64]) -> FringeStatistics {
    let n = rho.len();
    let peak_idx = (0..n).max_by(|&a, &b| rho[a].total_cmp(&rho[b])).unwrap_or(0);
    let peak = rho[peak_idx];
    // tails hold no genuine minima, only round-off ripples far below this
    let floor = 1e-8 * peak;
    let minima: Vec<usize> = (0..n)
        .filter(|&k| {
            let (l, r) = (rho[(k + n - 1) % n], rho[(k + 1) % n]);
            rho[k] >= floor && rho[k] < l && rho[k] <= r
        })
        .collect();
    let len = grid.length();
    let count_near = |x0: f64, half: f64| {
        endpoints
            .iter()
            .filter(|&&x| ((x - x0 + 0.5 * len).rem_euclid(len) - 0.5 * len).abs() <= half)
            .count() as f64
    };
    let total = endpoints.len().max(1) as f64;
    let at_peak = count_near(grid.position(peak_idx), 0.5).max(1.0);
    let mut window_fraction: f64 = 0.0;
    let mut contrast: f64 = 0.0;
    for &k in &minima {
        let x0 = grid.position(k);
        window_fraction = window_fraction.max(count_near(x0, 0.5 * grid.dx()) / total);
        contrast = contrast.max(count_near(x0, 0.5) / at_peak);
    }
    FringeStatistics {
        minima: minima.len(),
        window_fraction,
        contrast,
    }
}

pub fn spin_initial_state(
    grid: Grid1D,
    packet_width: f64,
    c_up: Complex64,
    c_down: Complex64,
) -> Result<WaveState, FieldError> {
    WaveState::from_fn(grid, |x| analytic_free_packet(x, 0.0, 0.0, packet_width, 0.0))
        .normalized()?
        .spin_split(c_up, c_down)
}

/// Spinor `(c1·Ψ, c2·Ψ)` in a linear Stern–Gerlach field.
pub fn scenario_spin_measurement(config: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    spin_with_starts(config, None)
}

/// Spin run from given starting positions instead of Born samples.
pub fn spin_with_starts(config: &ScenarioConfig, starts: Option<Vec<f64>>) -> Result<ScenarioResult, ScenarioError> {
    let grid = expect(config, ScenarioKind::SpinMeasurement)?;
    let ScenarioParams::Spin {
        c_up,
        c_down,
        packet_width,
        field_gradient,
        orientation,
        ..
    } = config.params
    else {
        unreachable!("validated scenario kind")
    };
    let initial = spin_initial_state(grid, packet_width, c_up, c_down)?;
    let potential = Potential::linear_sg(field_gradient, orientation)?;
    let run = execute(config, &initial, &potential, starts)?;

    let ends = run.ensemble.final_positions();
    let outcomes: Vec<SpinOutcome> = ends.iter().map(|&z| SpinOutcome::label(z, orientation)).collect();
    let n = ends.len() as f64;
    let ups = outcomes.iter().filter(|&&o| o == SpinOutcome::Up).count() as f64;
    let upper = ends.iter().filter(|&&z| z > 0.0).count() as f64;
    let crossings: usize = run.ensemble.trajectories.iter().map(Trajectory::sign_changes).sum();

    let expected = c_up.norm_sqr();
    let sigma = (expected * (1.0 - expected) / n).sqrt();
    let up_fraction = ups / n;

    let mut metrics = BTreeMap::new();
    let mut checks = BTreeMap::new();
    metrics.insert("up_fraction".into(), up_fraction);
    metrics.insert("upper_exit_fraction".into(), upper / n);
    metrics.insert("expected_up_fraction".into(), expected);
    metrics.insert("up_fraction_sigma".into(), sigma);
    metrics.insert("nodal_crossings".into(), crossings as f64);
    metrics.insert("packet_separation".into(), field_gradient * config.t_final * config.t_final);
    checks.insert("born_rule".into(), (up_fraction - expected).abs() <= 3.0 * sigma);
    if (c_up.norm() - c_down.norm()).abs() < 1e-12 {
        checks.insert("no_nodal_crossings".into(), crossings == 0);
    }
    Ok(finish(config, grid, run, metrics, checks, Some(outcomes)))
}

/// `p̂ = X(t_last)/t_last`, or `None` when the trajectory ends at t = 0.
pub fn extract_asymptotic_momentum(trajectory: &Trajectory) -> Option<f64> {
    let t = *trajectory.times().last()?;
    (t != 0.0).then(|| trajectory.last() / t)
}

/// CDF of the momentum density `π^{-1/2} e^{-p²}` of the ground-state Gaussian.
pub fn gaussian_momentum_cdf(p: f64) -> f64 {
    0.5 * (1.0 + erf(p))
}

/// Free spreading of `π^{-1/4} e^{-x²/2}` with momentum read off as X(t)/t.
pub fn scenario_momentum_measurement(config: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    let grid = expect(config, ScenarioKind::MomentumMeasurement)?;
    let initial = WaveState::from_fn(grid, |x| analytic_free_gaussian(x, 0.0)).normalized()?;
    let run = execute(config, &initial, &Potential::Free, None)?;

    let v0 = velocity_field(&initial);
    let initial_velocity_max = run
        .ensemble
        .trajectories
        .iter()
        .map(|t| v0.at(t.initial()).abs())
        .fold(0.0, f64::max);

    let momenta: Vec<f64> = run
        .ensemble
        .trajectories
        .iter()
        .map(|t| extract_asymptotic_momentum(t).unwrap_or(0.0))
        .collect();
    let ks_momentum = ks_distance(&momenta, gaussian_momentum_cdf);
    let threshold = ks_critical_value(config.alpha, momenta.len());

    let mut law_error: f64 = 0.0;
    for tr in &run.ensemble.trajectories {
        let x0 = tr.initial();
        if x0.abs() <= LAW_MIN_START {
            continue;
        }
        for (&t, &x) in tr.times().iter().zip(tr.positions()) {
            if t > 0.0 && t <= LAW_HORIZON + 1e-12 {
                law_error = law_error.max((x / (x0 * (1.0 + t * t).sqrt()) - 1.0).abs());
            }
        }
    }

    let mut metrics = BTreeMap::new();
    let mut checks = BTreeMap::new();
    metrics.insert("initial_velocity_max".into(), initial_velocity_max);
    metrics.insert("ks_momentum".into(), ks_momentum);
    metrics.insert("ks_threshold".into(), threshold);
    metrics.insert("trajectory_law_error".into(), law_error);
    checks.insert("initial_velocity".into(), initial_velocity_max < INITIAL_SPEED_LIMIT);
    checks.insert("momentum_distribution".into(), ks_momentum < threshold);
    checks.insert("trajectory_law".into(), law_error < LAW_TOLERANCE);
    Ok(finish(config, grid, run, metrics, checks, None))
}

/// Two-proportion z statistic for `k1/n1` versus `k2/n2` with pooled variance.
pub fn two_proportion_z(k1: usize, n1: usize, k2: usize, n2: usize) -> f64 {
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return if p1 == p2 { 0.0 } else { f64::INFINITY };
    }
    (p1 - p2) / se
}
