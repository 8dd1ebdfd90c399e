//! Shipped configurations. `localdens config --preset NAME` prints them as
//! editable JSON.

use std::path::PathBuf;

use super::config::*;
use crate::error::{Error, Result};
use crate::model::{LocalWindow, PieceKind};

pub const PRESETS: [&str; 4] = ["gaussian", "ou", "gbm", "sign_drift"];

fn window(xi: f64, delta: f64, delta0: f64, l_sigma: f64) -> LocalWindow {
    LocalWindow {
        xi,
        delta,
        delta0,
        l_sigma,
    }
}

fn quarters() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

fn bound(y_max: f64) -> BoundSpec {
    BoundSpec {
        gammas: vec![0.25, 0.5, 0.75],
        y_min: std::f64::consts::E,
        y_max,
        pass_fraction: 0.95,
    }
}

fn simulation(h: f64, n_paths: usize, t_list: Vec<f64>) -> SimulationSpec {
    SimulationSpec {
        t: 1.0,
        h,
        n_paths,
        seed: 1,
        t_list,
        block: 1 << 16,
    }
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let cfg = match name {
        "gaussian" => RunConfig {
            model: ModelSpec {
                drift: None,
                diffusion: None,
                x0: 0.0,
            },
            reference: Some(ReferenceSpec::BrownianDrift { mu0: 0.0, sigma0: 1.0 }),
            window: window(0.0, 6.0, 1.0, 0.5),
            cutoff: CutoffSpec { shoulder_fraction: 0.1 },
            simulation: simulation(1.0 / 16.0, 200_000, vec![0.5, 0.75, 1.0]),
            frequency: FrequencySpec {
                y_max: 8.0,
                spacing: 1.0 / 16.0,
            },
            inversion: InversionSpec {
                x_points: 401,
                y_max: None,
                oracle_tolerance: 5e-3,
            },
            bound: bound(8.0),
            hoelder: HoelderSpec::default(),
            output: PathBuf::from("out/gaussian"),
        },
        "ou" => RunConfig {
            model: ModelSpec {
                drift: None,
                diffusion: None,
                x0: 0.5,
            },
            reference: Some(ReferenceSpec::OrnsteinUhlenbeck { theta: 1.0, sigma0: 1.0 }),
            window: window(0.0, 4.0, 1.0, 0.5),
            cutoff: CutoffSpec { shoulder_fraction: 0.25 },
            simulation: simulation(1.0 / 256.0, 200_000, vec![0.5, 0.75, 1.0]),
            frequency: FrequencySpec {
                y_max: 8.0,
                spacing: 1.0 / 16.0,
            },
            inversion: InversionSpec {
                x_points: 401,
                y_max: None,
                oracle_tolerance: 1e-2,
            },
            bound: bound(8.0),
            hoelder: HoelderSpec::default(),
            output: PathBuf::from("out/ou"),
        },
        "gbm" => RunConfig {
            // One million paths: the lognormal peak amplifies MC noise by 1/σ*.
            model: ModelSpec {
                drift: None,
                diffusion: None,
                x0: 2.0,
            },
            reference: Some(ReferenceSpec::GeometricBm { mu0: 0.1, sigma0: 0.2 }),
            window: window(2.0, 1.0, 0.05, 0.18),
            cutoff: CutoffSpec { shoulder_fraction: 0.45 },
            simulation: simulation(1.0 / 256.0, 1_000_000, vec![0.5, 1.0]),
            frequency: FrequencySpec {
                y_max: 8.0,
                spacing: 1.0 / 16.0,
            },
            inversion: InversionSpec {
                x_points: 401,
                y_max: None,
                oracle_tolerance: 1e-2,
            },
            bound: bound(8.0),
            hoelder: HoelderSpec::default(),
            output: PathBuf::from("out/gbm"),
        },
        "sign_drift" => RunConfig {
            model: ModelSpec {
                drift: Some(vec![
                    PieceSpec::on(None, Some(0.0), PieceKind::Constant { value: 1.0 }),
                    PieceSpec::on(Some(0.0), None, PieceKind::Constant { value: -1.0 }),
                ]),
                diffusion: Some(vec![PieceSpec::everywhere(PieceKind::Constant { value: 1.0 })]),
                x0: 0.0,
            },
            reference: None,
            window: window(0.0, 2.0, 0.5, 0.5),
            cutoff: CutoffSpec { shoulder_fraction: 0.25 },
            simulation: simulation(1.0 / 1024.0, 100_000, quarters()),
            frequency: FrequencySpec {
                y_max: 128.0,
                spacing: 0.25,
            },
            inversion: InversionSpec {
                x_points: 512,
                // The bound report needs frequencies up to 128; inversion
                // beyond 32 only adds MC noise.
                y_max: Some(32.0),
                oracle_tolerance: 1e-2,
            },
            bound: bound(128.0),
            hoelder: HoelderSpec::default(),
            output: PathBuf::from("out/sign_drift"),
        },
        other => {
            return Err(Error::config(
                "--preset",
                format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
            ))
        }
    };
    Ok(cfg)
}
