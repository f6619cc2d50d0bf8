//! Flat `key=value` scenario configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Complex amplitudes are written as `_re`/`_im` pairs. Keys that a scenario
//! does not use are rejected, missing keys take the scenario's defaults.
//!
//! | key | scenarios | default |
//! |-----|-----------|---------|
//! | `scenario` | all | — |
//! | `x_min`, `x_max`, `n` | all | (-40, 40, 4096); momentum: (-120, 120, 8192) |
//! | `dt`, `t_final`, `store_every` | all | 0.001; 6 / 4 / 25; 10 / 10 / 25 |
//! | `trajectories`, `seed`, `alpha` | all | 10000, 1, 0.01 |
//! | `slit_half_separation`, `slit_width` | double_slit | 3, 0.7 |
//! | `c1_re`, `c1_im`, `c2_re`, `c2_im` | spin_measurement | 1/√2, 0, 1/√2, 0 |
//! | `packet_width`, `packet_center` | spin_measurement | 1, 0 |
//! | `field_gradient`, `orientation` | spin_measurement | 2, +1 |

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::fields::Grid1D;
use crate::propagator::Orientation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, found `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("no scenario given")]
    MissingScenario,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("config is for `{found}` but `{requested}` was requested")]
    ScenarioMismatch { requested: ScenarioKind, found: ScenarioKind },
    #[error("{field}: {message}")]
    Invariant { field: &'static str, message: String },
}

fn invariant(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invariant {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    DoubleSlit,
    SpinMeasurement,
    MomentumMeasurement,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::DoubleSlit,
        ScenarioKind::SpinMeasurement,
        ScenarioKind::MomentumMeasurement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::DoubleSlit => "double_slit",
            ScenarioKind::SpinMeasurement => "spin_measurement",
            ScenarioKind::MomentumMeasurement => "momentum_measurement",
        }
    }

    fn own_keys(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::DoubleSlit => &["slit_half_separation", "slit_width"],
            ScenarioKind::SpinMeasurement => &[
                "c1_re",
                "c1_im",
                "c2_re",
                "c2_im",
                "packet_width",
                "packet_center",
                "field_gradient",
                "orientation",
            ],
            ScenarioKind::MomentumMeasurement => &[],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownScenario(s.to_string()))
    }
}

const COMMON_KEYS: [&str; 10] = [
    "scenario",
    "x_min",
    "x_max",
    "n",
    "dt",
    "t_final",
    "store_every",
    "trajectories",
    "seed",
    "alpha",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioParams {
    DoubleSlit {
        /// Half the slit separation, `a`.
        half_separation: f64,
        /// r.m.s. width σ of each slit's Gaussian density.
        slit_width: f64,
    },
    Spin {
        c_up: Complex64,
        c_down: Complex64,
        packet_width: f64,
        packet_center: f64,
        field_gradient: f64,
        orientation: Orientation,
    },
    Momentum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub store_every: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub alpha: f64,
    pub params: ScenarioParams,
}

impl ScenarioConfig {
    pub fn defaults(scenario: ScenarioKind) -> Self {
        let base = ScenarioConfig {
            scenario,
            x_min: -40.0,
            x_max: 40.0,
            n: 4096,
            dt: 1e-3,
            t_final: 6.0,
            store_every: 10,
            trajectories: 10_000,
            seed: 1,
            alpha: 0.01,
            params: ScenarioParams::Momentum,
        };
        match scenario {
            ScenarioKind::DoubleSlit => ScenarioConfig {
                params: ScenarioParams::DoubleSlit {
                    half_separation: 3.0,
                    slit_width: 0.7,
                },
                ..base
            },
            ScenarioKind::SpinMeasurement => ScenarioConfig {
                t_final: 4.0,
                params: ScenarioParams::Spin {
                    c_up: Complex64::new(FRAC_1_SQRT_2, 0.0),
                    c_down: Complex64::new(FRAC_1_SQRT_2, 0.0),
                    packet_width: 1.0,
                    packet_center: 0.0,
                    field_gradient: 2.0,
                    orientation: Orientation::Up,
                },
                ..base
            },
            ScenarioKind::MomentumMeasurement => ScenarioConfig {
                x_min: -120.0,
                x_max: 120.0,
                n: 8192,
                t_final: 25.0,
                store_every: 25,
                ..base
            },
        }
    }

    pub fn grid(&self) -> Result<Grid1D, ConfigError> {
        Grid1D::new(self.x_min, self.x_max, self.n).map_err(|e| match e {
            crate::fields::FieldError::NodeCount(_) => invariant("n", e.to_string()),
            _ => invariant("x_min/x_max", e.to_string()),
        })
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Checks every invariant; `parse_config` calls this before returning.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invariant("dt", "must be positive"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(invariant("t_final", "must be positive"));
        }
        let steps = self.steps();
        if steps == 0 || (steps as f64 * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(invariant("t_final", "t_final/dt must be an integer"));
        }
        if self.store_every == 0 || !steps.is_multiple_of(self.store_every) {
            return Err(invariant("store_every", format!("must divide the step count {steps}")));
        }
        if self.trajectories == 0 {
            return Err(invariant("trajectories", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invariant("alpha", "must lie in (0, 1)"));
        }
        match self.params {
            ScenarioParams::DoubleSlit {
                half_separation,
                slit_width,
            } => {
                if !(slit_width > 0.0) {
                    return Err(invariant("slit_width", "must be positive"));
                }
                if !(half_separation > 2.0 * slit_width) {
                    return Err(invariant(
                        "slit_half_separation",
                        "slits must be resolvable: need a > 2σ",
                    ));
                }
            }
            ScenarioParams::Spin {
                c_up,
                c_down,
                packet_width,
                packet_center,
                field_gradient,
                ..
            } => {
                let norm = c_up.norm_sqr() + c_down.norm_sqr();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(invariant("c1/c2", format!("|c1|² + |c2|² = {norm}, expected 1")));
                }
                if !(packet_width > 0.0) {
                    return Err(invariant("packet_width", "must be positive"));
                }
                if packet_center != 0.0 {
                    return Err(invariant("packet_center", "asymmetric packet: Ψ(z) must equal Ψ(-z)"));
                }
                if grid.mirror_node(1).is_none() {
                    return Err(invariant("x_min/x_max", "asymmetric packet: the grid must satisfy x_min = -x_max"));
                }
                if !(field_gradient > 0.0) {
                    return Err(invariant("field_gradient", "must be positive"));
                }
                if field_gradient * self.t_final * self.t_final < 6.0 * packet_width {
                    return Err(invariant(
                        "t_final",
                        "packets do not separate by six widths; raise t_final or field_gradient",
                    ));
                }
                let far = grid.x_min().abs().max(grid.position(grid.len() - 1).abs());
                if self.dt * field_gradient * far > PI {
                    return Err(invariant("dt", "dt·max|V| exceeds π"));
                }
            }
            ScenarioParams::Momentum => {}
        }
        Ok(())
    }

    /// Canonical `key=value` pairs, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("scenario".to_string(), self.scenario.to_string()),
            ("x_min".into(), fmt_f64(self.x_min)),
            ("x_max".into(), fmt_f64(self.x_max)),
            ("n".into(), self.n.to_string()),
            ("dt".into(), fmt_f64(self.dt)),
            ("t_final".into(), fmt_f64(self.t_final)),
            ("store_every".into(), self.store_every.to_string()),
            ("trajectories".into(), self.trajectories.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("alpha".into(), fmt_f64(self.alpha)),
        ];
        match &self.params {
            ScenarioParams::DoubleSlit {
                half_separation,
                slit_width,
            } => {
                out.push(("slit_half_separation".into(), fmt_f64(*half_separation)));
                out.push(("slit_width".into(), fmt_f64(*slit_width)));
            }
            ScenarioParams::Spin {
                c_up,
                c_down,
                packet_width,
                packet_center,
                field_gradient,
                orientation,
            } => {
                out.push(("c1_re".into(), fmt_f64(c_up.re)));
                out.push(("c1_im".into(), fmt_f64(c_up.im)));
                out.push(("c2_re".into(), fmt_f64(c_down.re)));
                out.push(("c2_im".into(), fmt_f64(c_down.im)));
                out.push(("packet_width".into(), fmt_f64(*packet_width)));
                out.push(("packet_center".into(), fmt_f64(*packet_center)));
                out.push(("field_gradient".into(), fmt_f64(*field_gradient)));
                let o = match orientation {
                    Orientation::Up => "+1",
                    Orientation::Down => "-1",
                };
                out.push(("orientation".into(), o.into()));
            }
            ScenarioParams::Momentum => {}
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{v:?}")
}

/// Parses a config whose `scenario` key is mandatory.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    parse_config_for(text, None)
}

/// Parses a config, using `requested` when the text has no `scenario` key.
/// A `scenario` key that disagrees with `requested` is an error.
pub fn parse_config_for(text: &str, requested: Option<ScenarioKind>) -> Result<ScenarioConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: raw.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Malformed {
                line,
                text: raw.to_string(),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        entries.push((line, key.to_string(), value.to_string()));
    }

    let declared = entries
        .iter()
        .find(|(_, k, _)| k == "scenario")
        .map(|(line, k, v)| {
            v.parse::<ScenarioKind>().map_err(|_| ConfigError::InvalidValue {
                line: *line,
                key: k.clone(),
                value: v.clone(),
            })
        })
        .transpose()?;
    let scenario = match (declared, requested) {
        (Some(found), Some(requested)) if found != requested => {
            return Err(ConfigError::ScenarioMismatch { requested, found })
        }
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(ConfigError::MissingScenario),
    };

    let mut cfg = ScenarioConfig::defaults(scenario);
    for (line, key, value) in &entries {
        if !COMMON_KEYS.contains(&key.as_str()) && !scenario.own_keys().contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line: *line,
                key: key.clone(),
            });
        }
        apply(&mut cfg, *line, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut ScenarioConfig, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    };
    let real = || value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let count = || value.parse::<usize>().map_err(|_| bad());

    match key {
        "scenario" => {}
        "x_min" => cfg.x_min = real()?,
        "x_max" => cfg.x_max = real()?,
        "n" => cfg.n = count()?,
        "dt" => cfg.dt = real()?,
        "t_final" => cfg.t_final = real()?,
        "store_every" => cfg.store_every = count()?,
        "trajectories" => cfg.trajectories = count()?,
        "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
        "alpha" => cfg.alpha = real()?,
        _ => match &mut cfg.params {
            ScenarioParams::DoubleSlit {
                half_separation,
                slit_width,
            } => match key {
                "slit_half_separation" => *half_separation = real()?,
                "slit_width" => *slit_width = real()?,
                _ => unreachable!("key filtered by own_keys"),
            },
            ScenarioParams::Spin {
                c_up,
                c_down,
                packet_width,
                packet_center,
                field_gradient,
                orientation,
            } => match key {
                "c1_re" => c_up.re = real()?,
                "c1_im" => c_up.im = real()?,
                "c2_re" => c_down.re = real()?,
                "c2_im" => c_down.im = real()?,
                "packet_width" => *packet_width = real()?,
                "packet_center" => *packet_center = real()?,
                "field_gradient" => *field_gradient = real()?,
                "orientation" => {
                    *orientation = match value {
                        "+1" | "1" | "up" => Orientation::Up,
                        "-1" | "down" => Orientation::Down,
                        _ => return Err(bad()),
                    }
                }
                _ => unreachable!("key filtered by own_keys"),
            },
            ScenarioParams::Momentum => unreachable!("momentum scenario has no own keys"),
        },
    }
    Ok(())
}
