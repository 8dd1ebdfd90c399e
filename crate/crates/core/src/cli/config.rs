//! JSON run configuration and its cross-field validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::epsilon_rule_checked;
use crate::charfn::FrequencyGrid;
use crate::error::{Error, Result};
use crate::model::{CoefficientModel, LocalWindow, Piece, PieceKind, PiecewiseFunction};
use crate::oracle::{OuStart, ReferenceModel};
use crate::pipeline::{LocalProblem, DEFAULT_BLOCK};
use crate::simulate::SimConfig;

/// One piece of a coefficient; a missing or `null` bound is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceSpec {
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(flatten)]
    pub kind: PieceKind,
}

impl PieceSpec {
    pub fn everywhere(kind: PieceKind) -> Self {
        PieceSpec { lo: None, hi: None, kind }
    }

    pub fn on(lo: Option<f64>, hi: Option<f64>, kind: PieceKind) -> Self {
        PieceSpec { lo, hi, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Drift pieces; taken from `reference` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<PieceSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<PieceSpec>>,
    pub x0: f64,
}

/// Closed-form reference law used for oracle checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    BrownianDrift { mu0: f64, sigma0: f64 },
    OrnsteinUhlenbeck { theta: f64, sigma0: f64 },
    GeometricBm { mu0: f64, sigma0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub shoulder_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub t: f64,
    pub h: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Times for densities and Hölder norms; defaults to `[t]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t_list: Vec<f64>,
    /// Paths simulated per block (memory knob, does not affect results).
    #[serde(default = "default_block")]
    pub block: usize,
}

fn default_block() -> usize {
    DEFAULT_BLOCK
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpec {
    pub y_max: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSpec {
    /// Points of the uniform state grid spanning the cutoff support.
    pub x_points: usize,
    /// Frequency cutoff used for inversion; defaults to `frequency.y_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<f64>,
    /// Sup-error tolerance against the reference density.
    #[serde(default = "default_oracle_tolerance")]
    pub oracle_tolerance: f64,
}

fn default_oracle_tolerance() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub gammas: Vec<f64>,
    #[serde(default = "default_y_min")]
    pub y_min: f64,
    pub y_max: f64,
    /// Required fraction of frequencies satisfying the fitted bound.
    #[serde(default = "default_pass_fraction")]
    pub pass_fraction: f64,
}

fn default_y_min() -> f64 {
    std::f64::consts::E
}

fn default_pass_fraction() -> f64 {
    0.95
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoelderSpec {
    /// Largest allowed norm ratio between the doubled and the base x-grid.
    #[serde(default = "default_grid_ratio")]
    pub grid_ratio_tolerance: f64,
    /// Largest allowed max/min norm ratio over `t_list`; `null` disables.
    #[serde(default = "default_time_spread")]
    pub time_spread_tolerance: Option<f64>,
    /// Whether `certify` runs the joint continuity scan.
    #[serde(default = "default_true")]
    pub joint_scan: bool,
}

impl Default for HoelderSpec {
    fn default() -> Self {
        HoelderSpec {
            grid_ratio_tolerance: default_grid_ratio(),
            time_spread_tolerance: default_time_spread(),
            joint_scan: true,
        }
    }
}

fn default_grid_ratio() -> f64 {
    1.1
}

fn default_time_spread() -> Option<f64> {
    Some(2.0)
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    pub window: LocalWindow,
    pub cutoff: CutoffSpec,
    pub simulation: SimulationSpec,
    pub frequency: FrequencySpec,
    pub inversion: InversionSpec,
    pub bound: BoundSpec,
    #[serde(default)]
    pub hoelder: HoelderSpec,
    /// Where artifacts go. Not serialized, so neither `config.json` nor
    /// the config hash depends on the output location.
    #[serde(default = "default_output", skip_serializing)]
    pub output: PathBuf,
}

/// A checked configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: RunConfig,
    pub problem: LocalProblem,
    pub reference: Option<ReferenceModel>,
    pub sim: SimConfig,
    pub grid: FrequencyGrid,
    /// The part of `grid` used for inversion.
    pub inversion_grid: FrequencyGrid,
    /// Sorted, deduplicated `t_list`.
    pub times: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub config_hash: String,
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { path, message } => Error::Config {
            path: format!("{prefix}.{path}"),
            message,
        },
        other => other,
    }
}

fn pieces(specs: &[PieceSpec], path: &str) -> Result<PiecewiseFunction> {
    let pieces = specs
        .iter()
        .map(|p| {
            Piece::new(
                p.lo.unwrap_or(f64::NEG_INFINITY),
                p.hi.unwrap_or(f64::INFINITY),
                p.kind.clone(),
            )
        })
        .collect();
    PiecewiseFunction::new(pieces).map_err(|e| prefixed(path, e))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form (which omits the output
    /// directory).
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }

    fn reference_model(&self) -> Option<ReferenceModel> {
        let x0 = self.model.x0;
        self.reference.map(|r| match r {
            ReferenceSpec::BrownianDrift { mu0, sigma0 } => ReferenceModel::brownian_drift(mu0, sigma0, x0),
            ReferenceSpec::OrnsteinUhlenbeck { theta, sigma0 } => {
                ReferenceModel::ornstein_uhlenbeck(theta, sigma0, x0, OuStart::Point)
            }
            ReferenceSpec::GeometricBm { mu0, sigma0 } => ReferenceModel::geometric_bm(mu0, sigma0, x0),
        })
    }

    fn coefficient_model(&self, reference: Option<&ReferenceModel>) -> Result<CoefficientModel> {
        let from_ref = reference.map(|r| r.coefficient_model()).transpose()?;
        let drift = match (&self.model.drift, &from_ref) {
            (Some(d), _) => pieces(d, "model.drift")?,
            (None, Some(m)) => m.drift.clone(),
            (None, None) => return Err(Error::config("model.drift", "required without a reference")),
        };
        let diffusion = match (&self.model.diffusion, &from_ref) {
            (Some(d), _) => pieces(d, "model.diffusion")?,
            (None, Some(m)) => m.diffusion.clone(),
            (None, None) => return Err(Error::config("model.diffusion", "required without a reference")),
        };
        CoefficientModel::new(drift, diffusion)
    }

    /// Checks every field and the cross-field constraints: grid alignment
    /// of all times, Nyquist for the inversion grid, and `ε_y < t` over the
    /// checked frequency range.
    pub fn validate(&self) -> Result<Validated> {
        let reference = self.reference_model();
        let model = self.coefficient_model(reference.as_ref())?;
        LocalWindow::new(self.window.xi, self.window.delta, self.window.delta0, self.window.l_sigma)?;
        let problem = LocalProblem::with_bump(model, self.window, self.cutoff.shoulder_fraction)?;

        let s = &self.simulation;
        let sim = SimConfig::new(self.model.x0, s.t, s.h, s.n_paths, s.seed)?;
        if s.block == 0 {
            return Err(Error::config("simulation.block", "must be at least 1"));
        }
        let mut times = if s.t_list.is_empty() { vec![s.t] } else { s.t_list.clone() };
        for (k, &t) in times.iter().enumerate() {
            let path = format!("simulation.t_list[{k}]");
            if !(t > 0.0 && t <= s.t) {
                return Err(Error::config(path, format!("{t} must lie in (0, t = {}]", s.t)));
            }
            sim.step_of(t).map_err(|e| Error::config(path, e.to_string()))?;
        }
        times.sort_by(f64::total_cmp);
        times.dedup();

        let grid = FrequencyGrid::uniform(self.frequency.y_max, self.frequency.spacing)?;
        let (ya, yb) = problem.lamperti_support()?;
        let limit = std::f64::consts::PI / grid.spacing;
        if !(yb - ya < limit) {
            return Err(Error::config(
                "frequency.spacing",
                format!(
                    "Lamperti support diameter {} must be below pi/spacing = {limit}",
                    yb - ya
                ),
            ));
        }
        if self.inversion.x_points < 2 {
            return Err(Error::config("inversion.x_points", "must be at least 2"));
        }
        if !(self.inversion.oracle_tolerance > 0.0) {
            return Err(Error::config("inversion.oracle_tolerance", "must be positive"));
        }
        let x_grid = problem.state_grid(self.inversion.x_points);
        let inversion_grid = match self.inversion.y_max {
            None => grid.clone(),
            Some(y) => {
                if !(y > 0.0 && y <= grid.y_max) {
                    return Err(Error::config("inversion.y_max", "must lie in (0, frequency.y_max]"));
                }
                FrequencyGrid::uniform(y, grid.spacing).map_err(|e| match e {
                    Error::Config { message, .. } => Error::config("inversion.y_max", message),
                    other => other,
                })?
            }
        };

        let b = &self.bound;
        if b.gammas.is_empty() {
            return Err(Error::config("bound.gammas", "at least one exponent is required"));
        }
        for (k, &g) in b.gammas.iter().enumerate() {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::config(format!("bound.gammas[{k}]"), "must lie in (0, 1)"));
            }
        }
        if !(b.y_min >= 1.0) {
            return Err(Error::config("bound.y_min", "must be at least 1"));
        }
        if !(b.y_max > b.y_min) {
            return Err(Error::config("bound.y_max", "must exceed bound.y_min"));
        }
        if b.y_max > grid.y_max + 1e-12 {
            return Err(Error::config("bound.y_max", "must not exceed frequency.y_max"));
        }
        if !(b.pass_fraction > 0.0 && b.pass_fraction <= 1.0) {
            return Err(Error::config("bound.pass_fraction", "must lie in (0, 1]"));
        }
        let checked: Vec<f64> = grid
            .nonnegative()
            .iter()
            .copied()
            .filter(|&y| y > b.y_min && y <= b.y_max)
            .collect();
        if checked.is_empty() {
            return Err(Error::config("bound.y_max", "no grid frequency lies in (y_min, y_max]"));
        }
        for &y in &checked {
            epsilon_rule_checked(y, s.t).map_err(|e| Error::config("bound.y_max", e.to_string()))?;
        }

        let h = &self.hoelder;
        if !(h.grid_ratio_tolerance >= 1.0) {
            return Err(Error::config("hoelder.grid_ratio_tolerance", "must be at least 1"));
        }
        if let Some(s) = h.time_spread_tolerance {
            if !(s >= 1.0) {
                return Err(Error::config("hoelder.time_spread_tolerance", "must be at least 1"));
            }
        }

        Ok(Validated {
            config: self.clone(),
            problem,
            reference,
            sim,
            grid,
            inversion_grid,
            times,
            x_grid,
            config_hash: self.hash()?,
        })
    }
}
