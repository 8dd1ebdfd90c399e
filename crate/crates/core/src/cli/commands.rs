//! The CLI commands. Each writes its CSV artifacts into the output
//! directory and returns the checks it evaluated.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use super::config::Validated;
use crate::bounds::{fit_decay, fit_decay_with_threshold};
use crate::charfn::CharFnEstimate;
use crate::error::Result;
use crate::invert::{d_gamma, holder_parts, invert, joint_continuity_scan};
use crate::numeric::linspace;
use crate::oracle::exact_density;
use crate::simulate::{simulate_range, write_ensemble, RecordPlan};

/// Factor allowed above `d_γ·c` in the Hölder-norm contract.
pub const CONTRACT_SLACK: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(value: f64, tolerance: f64) -> Self {
        Check {
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    pub fn at_least(value: f64, tolerance: f64) -> Self {
        Check {
            value,
            tolerance,
            pass: value >= tolerance,
        }
    }
}

pub type Checks = BTreeMap<String, Check>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub n_paths: usize,
    pub checks: Checks,
    pub all_pass: bool,
}

impl RunSummary {
    pub fn new(command: &str, v: &Validated, checks: Checks) -> Self {
        let all_pass = checks.values().all(|c| c.pass);
        RunSummary {
            command: command.into(),
            config_sha256: v.config_hash.clone(),
            seed: v.sim.seed,
            n_paths: v.sim.n_paths,
            checks,
            all_pass,
        }
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn tag(t: f64) -> String {
    format!("t{t}")
}

/// Simulates the ensemble at the times of `t_list` (and `t`) and dumps it
/// to `ensemble.bin`.
pub fn cmd_simulate(v: &Validated, out: &Path) -> Result<Checks> {
    let mut times = v.times.clone();
    times.push(v.sim.t_final);
    let plan = RecordPlan::times(&v.sim, &times)?;
    let ens = simulate_range(&v.problem.model, &v.sim, &plan, 0..v.sim.n_paths)?;
    let cols = ens.recorded_steps().len();
    let nonfinite = (0..ens.n_paths())
        .flat_map(|i| (0..cols).map(move |c| (i, c)))
        .filter(|&(i, c)| !ens.state(i, c).is_finite())
        .count();
    write_ensemble(&ens, create(out, "ensemble.bin")?)?;
    let mut checks = Checks::new();
    checks.insert("simulate.nonfinite_states".into(), Check::at_most(nonfinite as f64, 0.0));
    Ok(checks)
}

/// Lamperti-coordinate CF estimates at every time of `t_list`.
pub fn compute_cfs(v: &Validated) -> Result<Vec<CharFnEstimate>> {
    v.problem
        .lamperti_cfs(&v.sim, &v.times, &v.grid, v.config.simulation.block)
}

/// Writes `cf_t{t}.csv` and checks `|cf| ≤ 1 + 3 SE` and exact conjugate
/// symmetry.
pub fn cmd_cf(cfs: &[CharFnEstimate], out: &Path) -> Result<Checks> {
    let mut excess = f64::NEG_INFINITY;
    let mut asym = 0.0f64;
    for cf in cfs {
        cf.write_csv(create(out, &format!("cf_{}.csv", tag(cf.t)))?)?;
        for (z, se) in cf.values.iter().zip(&cf.std_errors) {
            excess = excess.max(z.norm() - 1.0 - 3.0 * se);
        }
        let n = cf.values.len();
        for j in 0..n {
            asym = asym.max((cf.values[n - 1 - j] - cf.values[j].conj()).norm());
        }
    }
    let mut checks = Checks::new();
    checks.insert("cf.modulus_excess".into(), Check::at_most(excess, 0.0));
    checks.insert("cf.conjugate_asymmetry".into(), Check::at_most(asym, 0.0));
    Ok(checks)
}

fn inversion_cf(v: &Validated, cf: &CharFnEstimate) -> CharFnEstimate {
    cf.truncated(v.inversion_grid.y_max)
}

/// Writes `density_t{t}.csv` (state coordinate) and, with a reference
/// model, checks the sup error against `φ·p_t`.
pub fn cmd_density(v: &Validated, cfs: &[CharFnEstimate], out: &Path) -> Result<Checks> {
    let mut checks = Checks::new();
    for cf in cfs {
        let q = v.problem.state_density(&inversion_cf(v, cf), &v.x_grid)?;
        q.write_csv(create(out, &format!("density_{}.csv", tag(cf.t)))?)?;
        if let Some(rm) = &v.reference {
            let mut err = 0.0f64;
            for (&x, &val) in q.x_grid.iter().zip(&q.values) {
                let exact = v.problem.cutoff.value(x) * exact_density(rm, cf.t, x).unwrap_or(0.0);
                err = err.max((val - exact).abs());
            }
            checks.insert(
                format!("density.{}.oracle_sup_error", tag(cf.t)),
                Check::at_most(err, v.config.inversion.oracle_tolerance),
            );
        }
    }
    Ok(checks)
}

#[derive(Debug, Clone, Copy, Serialize)]
struct HoelderRow {
    t: f64,
    gamma: f64,
    sup: f64,
    seminorm: f64,
    norm: f64,
    norm_refined: f64,
    grid_ratio: f64,
    lamperti_norm: f64,
    decay_constant: f64,
    contract_ratio: f64,
}

/// Discrete `C^γ` norms of `q_t` over `t_list × gammas`, with the
/// grid-halving and time-spread checks and the inversion contract
/// `‖p_t‖ ≤ 1.05·d_γ·c` in Lamperti coordinates.
pub fn cmd_hoelder(v: &Validated, cfs: &[CharFnEstimate], out: &Path) -> Result<Checks> {
    let (a, b) = v.problem.state_support();
    let refined = linspace(a, b, 2 * v.x_grid.len() - 1);
    let lgrid = v.problem.lamperti_grid(v.x_grid.len())?;
    let hs = v.config.hoelder;
    let mut rows = Vec::new();
    let mut checks = Checks::new();
    for &gamma in &v.config.bound.gammas {
        let dg = d_gamma(gamma)?;
        let mut norms = Vec::new();
        let mut worst_grid = 0.0f64;
        let mut worst_contract = 0.0f64;
        for cf in cfs {
            let cf = &inversion_cf(v, cf);
            let q = v.problem.state_density(cf, &v.x_grid)?;
            let qr = v.problem.state_density(cf, &refined)?;
            let base = holder_parts(&q.x_grid, &q.values, gamma)?;
            let fine = holder_parts(&qr.x_grid, &qr.values, gamma)?;
            let p = invert(cf, &lgrid)?;
            let pn = holder_parts(&p.x_grid, &p.values, gamma)?.norm;
            let c = fit_decay_with_threshold(cf, gamma, 0.0)?.c_fit;
            let contract = if c > 0.0 { pn / (dg * c) } else { f64::INFINITY };
            let row = HoelderRow {
                t: cf.t,
                gamma,
                sup: base.sup,
                seminorm: base.seminorm,
                norm: base.norm,
                norm_refined: fine.norm,
                grid_ratio: fine.norm / base.norm,
                lamperti_norm: pn,
                decay_constant: c,
                contract_ratio: contract,
            };
            worst_grid = worst_grid.max(row.grid_ratio);
            worst_contract = worst_contract.max(contract);
            norms.push(base.norm);
            rows.push(row);
        }
        let key = format!("hoelder.gamma{gamma}");
        checks.insert(format!("{key}.grid_ratio"), Check::at_most(worst_grid, hs.grid_ratio_tolerance));
        checks.insert(format!("{key}.contract_ratio"), Check::at_most(worst_contract, CONTRACT_SLACK));
        if let (Some(tol), true) = (hs.time_spread_tolerance, norms.len() >= 2) {
            let hi = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.insert(format!("{key}.time_spread"), Check::at_most(hi / lo, tol));
        }
    }
    let mut w = csv::Writer::from_writer(create(out, "hoelder.csv")?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(checks)
}

#[derive(Debug, Clone, Copy, Serialize)]
struct DecayRow {
    gamma: f64,
    c_fit: f64,
    pass_fraction: f64,
}

/// Writes `bound_report.csv`, the CF it was computed from
/// (`bound_cf.csv`) and fitted decay constants (`decay_fit.csv`).
pub fn cmd_bound(v: &Validated, out: &Path) -> Result<Checks> {
    let b = &v.config.bound;
    let (cf, report) = v.problem.bound_report(
        &v.sim,
        v.sim.t_final,
        &v.grid,
        b.y_min,
        b.y_max,
        v.config.simulation.block,
    )?;
    report.write_csv(create(out, "bound_report.csv")?)?;
    cf.write_csv(create(out, "bound_cf.csv")?)?;
    let mut w = csv::Writer::from_writer(create(out, "decay_fit.csv")?);
    for &gamma in &b.gammas {
        let fit = fit_decay(&cf, gamma)?;
        w.serialize(DecayRow {
            gamma,
            c_fit: fit.c_fit,
            pass_fraction: fit.pass_fraction,
        })?;
    }
    w.flush()?;
    let mut checks = Checks::new();
    checks.insert(
        "bound.pass_fraction".into(),
        Check::at_least(report.pass_fraction, b.pass_fraction),
    );
    Ok(checks)
}

/// Joint `(t, x)` scan over `t_list` and its midpoints (`joint_scan.csv`).
pub fn cmd_joint_scan(v: &Validated, out: &Path) -> Result<Checks> {
    let mut checks = Checks::new();
    if v.times.len() < 2 {
        return Ok(checks);
    }
    let scan = joint_continuity_scan(
        &v.problem,
        &v.sim,
        &v.times,
        &v.x_grid,
        &v.inversion_grid,
        v.config.simulation.block,
    )?;
    scan.write_csv(create(out, "joint_scan.csv")?)?;
    checks.insert(
        "joint_scan.mean_halving_ratio".into(),
        Check::at_most(scan.mean_halving_ratio, scan.threshold),
    );
    Ok(checks)
}

/// Every check: CF sanity, densities (and oracles), Hölder norms, the
/// bound report and, if enabled, the joint continuity scan.
pub fn cmd_certify(v: &Validated, out: &Path) -> Result<Checks> {
    let cfs = compute_cfs(v)?;
    let mut checks = cmd_cf(&cfs, out)?;
    checks.extend(cmd_density(v, &cfs, out)?);
    checks.extend(cmd_hoelder(v, &cfs, out)?);
    checks.extend(cmd_bound(v, out)?);
    if v.config.hoelder.joint_scan {
        checks.extend(cmd_joint_scan(v, out)?);
    }
    Ok(checks)
}
