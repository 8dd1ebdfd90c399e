//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one PASS/FAIL line; the test fails if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use localdens::bounds::remainder_profile_summaries;
use localdens::charfn::{CharFnEstimate, FrequencyGrid};
use localdens::cli::{commands::compute_cfs, preset, PRESETS};
use localdens::cutoff::make_plateau_sequence;
use localdens::invert::{d_gamma, holder_parts, invert};
use localdens::model::PiecewiseFunction;
use localdens::numeric::Summary;
use localdens::oracle::{exact_density, localized_cf_lamperti, sign_drift_model, ReferenceModel};
use localdens::pipeline::LocalProblem;
use localdens::simulate::{for_each_block, stopped_increment_summary, RecordPlan, SimConfig};

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Sup error of `q` against `φ·p_t` on the grid.
fn sup_error(p: &LocalProblem, rm: &ReferenceModel, t: f64, xs: &[f64], q: &[f64]) -> f64 {
    xs.iter()
        .zip(q)
        .map(|(&x, v)| (v - p.cutoff.value(x) * exact_density(rm, t, x).unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rm = ReferenceModel::brownian_drift(0.0, 1.0, 0.0);
    let w = common::window(0.0, 6.0, 1.0, 0.5);
    let p = LocalProblem::new(rm.coefficient_model().map_err(err)?, w, make_plateau_sequence(4).map_err(err)?)
        .map_err(err)?;
    let xs = p.state_grid(801);
    let grid = FrequencyGrid::uniform(8.0, 1.0 / 16.0).map_err(err)?;
    let sim = SimConfig::new(0.0, 1.0, 1.0 / 16.0, 1_000_000, 20240101).map_err(err)?;
    let cf = p.lamperti_cf(&sim, 1.0, &grid).map_err(err)?;
    let q = p.state_density(&cf, &xs).map_err(err)?;
    let mc = sup_error(&p, &rm, 1.0, &xs, &q.values);
    let elapsed = start.elapsed().as_secs_f64();

    let agrid = FrequencyGrid::uniform(16.0, 1.0 / 32.0).map_err(err)?;
    let exact = CharFnEstimate::analytic(&agrid, 1.0, |y| {
        localized_cf_lamperti(&rm, &p.cutoff, &p.lamperti, 1.0, y).unwrap()
    });
    let qa = p.state_density(&exact, &xs).map_err(err)?;
    let analytic = sup_error(&p, &rm, 1.0, &xs, &qa.values);
    let pass = mc <= 5e-3 && analytic <= 1e-5 && elapsed <= 120.0;
    Ok((
        pass,
        format!("MC sup error {mc:.3e} (tol 5e-3), analytic-CF sup error {analytic:.3e} (tol 1e-5), MC pipeline {elapsed:.1} s (limit 120 s)"),
    ))
}

fn criterion_2() -> Outcome {
    let rm = ReferenceModel::geometric_bm(0.1, 0.2, 2.0);
    let w = common::window(2.0, 1.0, 0.05, 0.18);
    let p = LocalProblem::with_bump(rm.coefficient_model().map_err(err)?, w, 0.45).map_err(err)?;
    let xs = p.state_grid(401);
    let grid = FrequencyGrid::uniform(8.0, 1.0 / 16.0).map_err(err)?;
    let sim = SimConfig::new(2.0, 1.0, 1.0 / 256.0, 1_000_000, 7).map_err(err)?;
    let cf = p.lamperti_cf(&sim, 1.0, &grid).map_err(err)?;
    let q = p.state_density(&cf, &xs).map_err(err)?;
    let e = sup_error(&p, &rm, 1.0, &xs, &q.values);
    Ok((e <= 1e-2, format!("lognormal sup error {e:.3e} on [{:.3}, {:.3}] (tol 1e-2)", xs[0], xs[xs.len() - 1])))
}

fn criterion_3() -> Outcome {
    let t = 0.25;
    let model = sign_drift_model(-1.0).map_err(err)?;
    let w = common::window(0.0, 2.0, 0.5, 0.5);
    let sim = SimConfig::new(0.0, t, 2f64.powi(-14), 20_000, 11).map_err(err)?;
    let plan = RecordPlan::trailing(&sim, t, 1.0 / 16.0).map_err(err)?;
    let eps: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
    let ps = [1.0, 2.0, 4.0];
    let mut sums = vec![vec![Summary::new(); eps.len()]; ps.len()];
    for_each_block(&model, &sim, &plan, 4096, |ens| {
        for (row, &p) in sums.iter_mut().zip(&ps) {
            for (s, &e) in row.iter_mut().zip(&eps) {
                s.merge(&stopped_increment_summary(ens, &w, e, t, p)?);
            }
        }
        Ok(())
    })
    .map_err(err)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (row, &p) in sums.iter().zip(&ps) {
        let vals: Vec<f64> = row.iter().map(|s| s.mean()).collect();
        let s = common::slope(&eps, &vals);
        pass &= (s - p / 2.0).abs() <= 0.15;
        parts.push(format!("p={p}: slope {s:.3} (target {})", p / 2.0));
    }
    Ok((pass, format!("{} (tol ±0.15)", parts.join(", "))))
}

fn criterion_4() -> Outcome {
    let t = 1.0;
    let h = 2f64.powi(-12);
    let w = common::window(0.0, 2.0, 0.5, 0.5);
    let ks: Vec<usize> = (4..=9).map(|k| (2f64.powi(-k) / h).round() as usize).collect();
    let eps: Vec<f64> = ks.iter().map(|&k| k as f64 * h).collect();
    let sim = SimConfig::new(0.0, t, h, 100_000, 5).map_err(err)?;
    let plan = RecordPlan::trailing(&sim, t, 1.0 / 16.0).map_err(err)?;
    let profile = |drift: PiecewiseFunction| -> Result<Vec<f64>, String> {
        let p = LocalProblem::with_bump(common::unit_diffusion(drift), w, 0.25).map_err(err)?;
        let mut sums = vec![Summary::new(); ks.len()];
        for_each_block(&p.model, &sim, &plan, 8192, |ens| {
            let part = remainder_profile_summaries(ens, &p.drift_functional, &w, t, &ks)?;
            for (a, b) in sums.iter_mut().zip(&part) {
                a.merge(b);
            }
            Ok(())
        })
        .map_err(err)?;
        Ok(sums.iter().map(|s| s.mean()).collect())
    };
    let lipschitz = profile(common::clipped_identity(2.0))?;
    let s = common::slope(&eps, &lipschitz);
    let constant = profile(PiecewiseFunction::constant(0.7))?;
    let zero = constant.iter().all(|&v| v == 0.0);
    Ok((
        (s - 1.5).abs() <= 0.2 && zero,
        format!("clipped-identity drift slope {s:.3} (target 1.5 ± 0.2); constant drift remainder identically zero: {zero}"),
    ))
}

fn criterion_5() -> Outcome {
    let model = sign_drift_model(-1.0).map_err(err)?;
    let w = common::window(0.0, 2.0, 0.5, 0.5);
    let p = LocalProblem::with_bump(model, w, 0.25).map_err(err)?;
    let grid = FrequencyGrid::uniform(128.0, 0.25).map_err(err)?;
    let mut fits = Vec::new();
    for n in [100_000, 200_000] {
        let sim = SimConfig::new(0.0, 1.0, 2f64.powi(-10), n, 3).map_err(err)?;
        let (_, report) = p.bound_report(&sim, 1.0, &grid, E, 128.0, 1 << 15).map_err(err)?;
        fits.push((n, report.c_fit, report.pass_fraction, report.rows.len()));
    }
    let ratio = fits[0].1.max(fits[1].1) / fits[0].1.min(fits[1].1);
    let pass = fits.iter().all(|f| f.2 >= 0.95) && ratio <= 1.5;
    let desc: Vec<String> = fits
        .iter()
        .map(|(n, c, f, rows)| format!("N={n}: c_fit {c:.4}, {:.1}% of {rows} frequencies pass", 100.0 * f))
        .collect();
    Ok((pass, format!("{}; c_fit ratio {ratio:.3} (tol 1.5)", desc.join("; "))))
}

fn criterion_6() -> Outcome {
    let model = sign_drift_model(-1.0).map_err(err)?;
    let w = common::window(0.0, 2.0, 0.5, 0.5);
    let p = LocalProblem::with_bump(model, w, 0.25).map_err(err)?;
    let sim = SimConfig::new(0.0, 1.0, 2f64.powi(-10), 100_000, 3).map_err(err)?;
    let grid = FrequencyGrid::uniform(32.0, 0.25).map_err(err)?;
    let times = [0.25, 0.5, 0.75, 1.0];
    let cfs = p.lamperti_cfs(&sim, &times, &grid, 1 << 16).map_err(err)?;
    let (coarse, fine) = (p.state_grid(512), p.state_grid(1024));
    let mut norms = Vec::new();
    let mut worst_growth = 0.0f64;
    for cf in &cfs {
        let a = holder_parts(&coarse, &p.state_density(cf, &coarse).map_err(err)?.values, 0.5).map_err(err)?;
        let b = holder_parts(&fine, &p.state_density(cf, &fine).map_err(err)?.values, 0.5).map_err(err)?;
        worst_growth = worst_growth.max(b.norm / a.norm);
        norms.push(a.norm);
    }
    let finite = norms.iter().all(|n| n.is_finite() && *n > 0.0);
    let spread = norms.iter().cloned().fold(0.0, f64::max) / norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = finite && worst_growth <= 1.1 && spread <= 2.0;
    let list: Vec<String> = norms.iter().map(|n| format!("{n:.3}")).collect();
    Ok((
        pass,
        format!(
            "C^0.5 norms at t=0.25..1: [{}]; grid-halving growth {worst_growth:.4} (tol 1.1); time spread {spread:.3} (tol 2)",
            list.join(", ")
        ),
    ))
}

fn criterion_7() -> Outcome {
    let gammas = [0.25, 0.5, 0.75, 0.9];
    let grid = FrequencyGrid::uniform(64.0, 0.125).map_err(err)?;
    let xs: Vec<f64> = (0..=600).map(|k| -3.0 + 0.01 * k as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (gi, &gamma) in gammas.iter().enumerate() {
        let dg = d_gamma(gamma).map_err(err)?;
        let c = 0.5 + gi as f64;
        let cap = move |y: f64| c * (1.0 + y.abs()).powf(-1.0 - gamma);
        // Random tables for the odd phase and the amplitude, indexed by |y|.
        let half = grid.nonnegative().len();
        let phases: Vec<f64> = (0..half).map(|_| rng.random_range(-PI..PI)).collect();
        let amps: Vec<f64> = (0..half).map(|_| rng.random_range(0.0..1.0)).collect();
        let spacing = grid.spacing;
        let idx = move |y: f64| (y.abs() / spacing).round() as usize;
        let families: [Box<dyn Fn(f64) -> Complex64 + Sync>; 5] = [
            Box::new(move |y| Complex64::new(cap(y), 0.0)),
            Box::new(move |y| Complex64::from_polar(cap(y), 0.7 * y)),
            Box::new(move |y| Complex64::new(cap(y) * (2.0 * y).cos(), 0.0)),
            Box::new({
                let phases = phases.clone();
                move |y| Complex64::from_polar(cap(y), y.signum() * phases[idx(y)])
            }),
            Box::new(move |y| Complex64::from_polar(cap(y) * amps[idx(y)], y.signum() * phases[idx(y)])),
        ];
        for f in &families {
            let cf = CharFnEstimate::analytic(&grid, 1.0, |y| if y == 0.0 { Complex64::new(f(y).re, 0.0) } else { f(y) });
            let d = invert(&cf, &xs).map_err(err)?;
            let n = holder_parts(&xs, &d.values, gamma).map_err(err)?.norm;
            worst = worst.max(n / (dg * c));
            cases += 1;
        }
    }
    let mut oracle_worst = 0.0f64;
    for g in [0.25, 0.5, 0.75] {
        let q = d_gamma(g).map_err(err)?;
        let o = common::d_gamma_series(g);
        oracle_worst = oracle_worst.max((q - o).abs() / o);
    }
    Ok((
        cases == 20 && worst <= 1.05 && oracle_worst <= 1e-4,
        format!("{cases} synthetic CFs: max ‖invert‖/(d_γ·c) = {worst:.4} (tol 1.05); d_γ vs series oracle max rel diff {oracle_worst:.2e} (tol 1e-4)"),
    ))
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_localdens");
    let dir = tempfile::tempdir().map_err(err)?;
    let mut configs = Vec::new();
    for (name, n_paths) in [("gaussian", 30_000), ("sign_drift", 12_000)] {
        let mut v: Value = serde_json::from_str(&preset(name).map_err(err)?.to_json().map_err(err)?).map_err(err)?;
        v["simulation"]["n_paths"] = json!(n_paths);
        // Several blocks per run, so block merging is exercised.
        v["simulation"]["block"] = json!(5_000);
        let path = dir.path().join(format!("{name}.json"));
        fs::write(&path, v.to_string()).map_err(err)?;
        configs.push((name, path));
    }
    let commands = ["simulate", "cf", "bound", "density", "hoelder", "certify"];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (name, cfg) in &configs {
        for cmd in commands {
            let mut outputs = Vec::new();
            for (run, threads) in [(0, "1"), (1, "1"), (2, "8")] {
                let out = dir.path().join(format!("{name}-{cmd}-{run}"));
                let o = Command::new(bin)
                    .args([cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads])
                    .output()
                    .map_err(err)?;
                if o.status.code() == Some(2) {
                    return Err(format!("{name} {cmd}: {}", String::from_utf8_lossy(&o.stderr)));
                }
                outputs.push((o.status.code(), o.stdout, read_dir_bytes(&out)));
            }
            for other in &outputs[1..] {
                compared += other.2.len();
                if other != &outputs[0] {
                    mismatches.push(format!("{name}/{cmd}"));
                }
            }
        }
    }
    Ok((
        mismatches.is_empty(),
        format!(
            "{} commands × 2 configs, threads 1/1/8: {compared} file comparisons, mismatches: {:?}",
            commands.len(),
            mismatches
        ),
    ))
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let v = preset(name).map_err(err)?.validate().map_err(err)?;
        let cfs = compute_cfs(&v).map_err(err)?;
        let mut excess = f64::NEG_INFINITY;
        let mut symmetric = true;
        for cf in &cfs {
            let n = cf.values.len();
            for j in 0..n {
                excess = excess.max(cf.values[j].norm() - 1.0 - 3.0 * cf.std_errors[j]);
                let (a, b) = (cf.values[n - 1 - j], cf.values[j].conj());
                // Exact equality (±0 compare equal at y = 0).
                symmetric &= a == b;
                symmetric &= cf.std_errors[n - 1 - j] == cf.std_errors[j];
            }
        }
        pass &= excess <= 0.0 && symmetric;
        parts.push(format!("{name}: max(|cf|−1−3SE) {excess:.3e}, conjugate-symmetric {symmetric}"));
    }
    Ok((pass, parts.join("; ")))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Gaussian end-to-end oracle", criterion_1),
        ("GBM/Lamperti oracle", criterion_2),
        ("moment scaling", criterion_3),
        ("remainder scaling", criterion_4),
        ("bound satisfaction", criterion_5),
        ("Hölder certification", criterion_6),
        ("inversion Hölder contract", criterion_7),
        ("CLI determinism", criterion_8),
        ("CF sanity", criterion_9),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok, d),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {} [{name}]: {} — {detail} ({secs:.1} s)",
            k + 1,
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
