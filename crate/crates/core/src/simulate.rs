//! Euler–Maruyama path ensembles with per-path random streams, the
//! Euler-type approximation `Z_{t,ε}`, localization indicators and the
//! stopped-increment / exit diagnostics.
//!
//! Memory is the binding constraint for large ensembles, so an ensemble
//! stores only the grid columns named in a [`RecordPlan`]. Operations that
//! need an unrecorded column fail with an alignment error. Large runs are
//! streamed in blocks of paths with [`simulate_range`]; block results are
//! merged in block order, which keeps them independent of scheduling.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CoefficientModel, LocalWindow};
use crate::numeric::{par_summarize, McEstimate, Summary};

const ALIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub x0: f64,
    pub t_final: f64,
    pub h: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(x0: f64, t_final: f64, h: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            x0,
            t_final,
            h,
            n_paths,
            seed,
            scheme: Scheme::Euler,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() {
            return Err(Error::config("simulation.x0", "must be finite"));
        }
        if !(self.t_final > 0.0 && self.t_final <= 1.0) {
            return Err(Error::config("simulation.t", "must lie in (0, 1]"));
        }
        if !(self.h > 0.0 && self.h <= self.t_final) {
            return Err(Error::config("simulation.h", "must lie in (0, t]"));
        }
        let k = (self.t_final / self.h).round();
        if (k * self.h - self.t_final).abs() > ALIGN_TOL {
            return Err(Error::config("simulation.h", "step must divide t"));
        }
        if self.n_paths == 0 {
            return Err(Error::config("simulation.n_paths", "must be at least 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.h).round() as usize
    }

    /// Grid index of time `t`, or an alignment error.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.h).round();
        if !(t >= 0.0) || (k * self.h - t).abs() > ALIGN_TOL || k as usize > self.n_steps() {
            return Err(Error::Alignment(format!("{t} (step {})", self.h)));
        }
        Ok(k as usize)
    }
}

/// Which grid columns to keep, and whether to keep the Brownian increments
/// that arrive at them.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordPlan {
    indices: Vec<usize>,
    pub brownian: bool,
}

impl RecordPlan {
    /// Every grid column, with increments.
    pub fn all(cfg: &SimConfig) -> Self {
        RecordPlan {
            indices: (0..=cfg.n_steps()).collect(),
            brownian: true,
        }
    }

    /// The given step indices (index 0 is always added).
    pub fn steps(steps: impl IntoIterator<Item = usize>) -> Self {
        let mut indices: Vec<usize> = steps.into_iter().chain([0]).collect();
        indices.sort_unstable();
        indices.dedup();
        RecordPlan {
            indices,
            brownian: false,
        }
    }

    /// The grid columns at the given times.
    pub fn times(cfg: &SimConfig, times: &[f64]) -> Result<Self> {
        let steps = times.iter().map(|&t| cfg.step_of(t)).collect::<Result<Vec<_>>>()?;
        Ok(Self::steps(steps))
    }

    /// The contiguous run of columns covering `[t − lookback, t]`.
    pub fn trailing(cfg: &SimConfig, t: f64, lookback: f64) -> Result<Self> {
        let end = cfg.step_of(t)?;
        let start = cfg.step_of(t - lookback)?;
        Ok(Self::steps(start..=end))
    }

    pub fn with_brownian(mut self, yes: bool) -> Self {
        self.brownian = yes;
        self
    }

    pub fn union(mut self, other: &RecordPlan) -> Self {
        self.indices.extend_from_slice(&other.indices);
        self.indices.sort_unstable();
        self.indices.dedup();
        self.brownian |= other.brownian;
        self
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

type FlagKey = (u64, u64, usize, usize);

/// Simulated paths restricted to the recorded grid columns.
#[derive(Debug)]
pub struct PathEnsemble {
    pub cfg: SimConfig,
    path_offset: usize,
    n_paths: usize,
    recorded: Vec<usize>,
    states: Vec<f64>,
    increments: Option<Vec<f64>>,
    window_flags: Mutex<HashMap<FlagKey, Arc<Vec<bool>>>>,
}

impl Clone for PathEnsemble {
    fn clone(&self) -> Self {
        PathEnsemble {
            cfg: self.cfg,
            path_offset: self.path_offset,
            n_paths: self.n_paths,
            recorded: self.recorded.clone(),
            states: self.states.clone(),
            increments: self.increments.clone(),
            window_flags: Mutex::new(HashMap::new()),
        }
    }
}

impl PartialEq for PathEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.path_offset == other.path_offset
            && self.n_paths == other.n_paths
            && self.recorded == other.recorded
            && self.states.iter().map(|v| v.to_bits()).eq(other.states.iter().map(|v| v.to_bits()))
            && self.increments.as_ref().map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
                == other.increments.as_ref().map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
    }
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Stream id (global path index) of local path `i`.
    pub fn stream_id(&self, i: usize) -> u64 {
        (self.path_offset + i) as u64
    }

    pub fn path_offset(&self) -> usize {
        self.path_offset
    }

    pub fn recorded_steps(&self) -> &[usize] {
        &self.recorded
    }

    pub fn time_grid(&self) -> Vec<f64> {
        self.recorded.iter().map(|&k| k as f64 * self.cfg.h).collect()
    }

    pub fn has_brownian(&self) -> bool {
        self.increments.is_some()
    }

    fn width(&self) -> usize {
        self.recorded.len()
    }

    /// Column of grid step `k`, or an alignment error if not recorded.
    pub fn column_of_step(&self, k: usize) -> Result<usize> {
        self.recorded
            .binary_search(&k)
            .map_err(|_| Error::Alignment(format!("{} (step index {k} was not recorded)", k as f64 * self.cfg.h)))
    }

    pub fn column_of_time(&self, t: f64) -> Result<usize> {
        self.column_of_step(self.cfg.step_of(t)?)
    }

    #[inline]
    pub fn state(&self, path: usize, col: usize) -> f64 {
        self.states[path * self.width() + col]
    }

    pub fn row(&self, path: usize) -> &[f64] {
        &self.states[path * self.width()..(path + 1) * self.width()]
    }

    /// States of all paths at time `t`.
    pub fn states_at(&self, t: f64) -> Result<Vec<f64>> {
        let c = self.column_of_time(t)?;
        Ok((0..self.n_paths).map(|i| self.state(i, c)).collect())
    }

    /// Columns covering `[t−ε, t]` contiguously, as `(first, last)`.
    pub fn lookback_columns(&self, eps: f64, t: f64) -> Result<(usize, usize)> {
        let st = self.cfg.step_of(t)?;
        let s0 = self.cfg.step_of(t - eps)?;
        if !(eps > 0.0) || s0 >= st {
            return Err(Error::Alignment(format!("lookback {eps} must cover at least one step")));
        }
        let c0 = self.column_of_step(s0)?;
        let c1 = self.column_of_step(st)?;
        if c1 - c0 != st - s0 {
            return Err(Error::Alignment(format!(
                "[{}, {t}] is not recorded contiguously",
                t - eps
            )));
        }
        Ok((c0, c1))
    }

    /// Recorded Brownian increment arriving at column `col` of `path`.
    pub fn increment(&self, path: usize, col: usize) -> Option<f64> {
        self.increments.as_ref().map(|inc| inc[path * self.width() + col])
    }
}

/// Simulates every path of `cfg`, recording every grid column.
pub fn simulate(model: &CoefficientModel, cfg: &SimConfig) -> Result<PathEnsemble> {
    simulate_range(model, cfg, &RecordPlan::all(cfg), 0..cfg.n_paths)
}

/// Simulates paths `paths` (global indices, used as stream ids), keeping
/// the columns in `plan`. Integration stops at the last recorded column.
pub fn simulate_range(
    model: &CoefficientModel,
    cfg: &SimConfig,
    plan: &RecordPlan,
    paths: Range<usize>,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    if let Some(&last) = plan.indices.last() {
        if last > n_steps {
            return Err(Error::Alignment(format!("step index {last} exceeds the grid")));
        }
    }
    if paths.end > cfg.n_paths || paths.start > paths.end {
        return Err(Error::config("simulation.n_paths", "path range exceeds the ensemble"));
    }
    let recorded = plan.indices.clone();
    let width = recorded.len();
    let last = *recorded.last().unwrap_or(&0);
    let n = paths.len();
    let mut states = vec![0.0; n * width];
    let mut increments = plan.brownian.then(|| vec![0.0; n * width]);
    let sqrt_h = cfg.h.sqrt();
    let h = cfg.h;

    let run = |i: usize, row: &mut [f64], inc: Option<&mut [f64]>| -> Result<()> {
        let stream = (paths.start + i) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let mut x = cfg.x0;
        row[0] = x;
        let mut inc = inc;
        if let Some(inc) = inc.as_deref_mut() {
            inc[0] = 0.0;
        }
        let mut col = 1;
        for k in 0..last {
            let g: f64 = rng.sample(StandardNormal);
            let dw = sqrt_h * g;
            x = x + model.mu(x) * h + model.sigma(x) * dw;
            if !x.is_finite() {
                return Err(Error::Simulation {
                    path: paths.start + i,
                    step: k + 1,
                });
            }
            if col < width && recorded[col] == k + 1 {
                row[col] = x;
                if let Some(inc) = inc.as_deref_mut() {
                    inc[col] = dw;
                }
                col += 1;
            }
        }
        Ok(())
    };

    let results: Vec<Result<()>> = match increments.as_mut() {
        Some(inc) => states
            .par_chunks_mut(width)
            .zip(inc.par_chunks_mut(width))
            .enumerate()
            .map(|(i, (row, inc))| run(i, row, Some(inc)))
            .collect(),
        None => states
            .par_chunks_mut(width)
            .enumerate()
            .map(|(i, row)| run(i, row, None))
            .collect(),
    };
    results.into_iter().collect::<Result<Vec<()>>>()?;

    Ok(PathEnsemble {
        cfg: *cfg,
        path_offset: paths.start,
        n_paths: n,
        recorded,
        states,
        increments,
        window_flags: Mutex::new(HashMap::new()),
    })
}

/// Runs `f` on consecutive blocks of at most `block` paths, in path order.
pub fn for_each_block<F>(
    model: &CoefficientModel,
    cfg: &SimConfig,
    plan: &RecordPlan,
    block: usize,
    mut f: F,
) -> Result<()>
where
    F: FnMut(&PathEnsemble) -> Result<()>,
{
    let block = block.max(1);
    let mut start = 0;
    while start < cfg.n_paths {
        let end = (start + block).min(cfg.n_paths);
        let ens = simulate_range(model, cfg, plan, start..end)?;
        f(&ens)?;
        start = end;
    }
    Ok(())
}

/// `Z_{t,ε} = X_{t−ε} + εμ(X_{t−ε}) + σ(X_{t−ε})(W_t − W_{t−ε})`, using the
/// recorded increments that drove the simulation.
pub fn euler_z(ens: &PathEnsemble, model: &CoefficientModel, eps: f64, t: f64) -> Result<Vec<f64>> {
    let (c0, c1) = ens.lookback_columns(eps, t)?;
    if !ens.has_brownian() {
        return Err(Error::Alignment(
            "Brownian increments were not recorded for this ensemble".into(),
        ));
    }
    let eps = (c1 - c0) as f64 * ens.cfg.h;
    Ok((0..ens.n_paths)
        .into_par_iter()
        .map(|i| {
            let x = ens.state(i, c0);
            let s = model.sigma(x);
            // Summed increment by increment, in simulation order.
            let mut z = x + model.mu(x) * eps;
            for c in c0 + 1..=c1 {
                z = z + s * ens.increment(i, c).unwrap_or(0.0);
            }
            z
        })
        .collect())
}

/// Per path: all grid states in `[t−ε, t]` lie in the closed window.
pub fn localization_indicator(ens: &PathEnsemble, w: &LocalWindow, eps: f64, t: f64) -> Result<Vec<bool>> {
    Ok(localization_flags(ens, w, eps, t)?.as_ref().clone())
}

fn localization_flags(ens: &PathEnsemble, w: &LocalWindow, eps: f64, t: f64) -> Result<Arc<Vec<bool>>> {
    let (c0, c1) = ens.lookback_columns(eps, t)?;
    let key = (w.xi.to_bits(), w.delta.to_bits(), c0, c1);
    if let Some(hit) = ens.window_flags.lock().expect("flag cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let flags: Vec<bool> = (0..ens.n_paths)
        .into_par_iter()
        .map(|i| ens.row(i)[c0..=c1].iter().all(|&x| w.contains(x)))
        .collect();
    let flags = Arc::new(flags);
    ens.window_flags
        .lock()
        .expect("flag cache poisoned")
        .insert(key, flags.clone());
    Ok(flags)
}

#[inline]
fn in_open_window(w: &LocalWindow, x: f64) -> bool {
    (x - w.xi).abs() < w.delta
}

/// Estimate of `E[sup_{s∈[t−ε,t]} |X^τ_s − X^τ_{t−ε}|^p]`, with `τ` the
/// first grid time at or after `t−ε` outside the open window.
pub fn stopped_increment_moment(
    ens: &PathEnsemble,
    w: &LocalWindow,
    eps: f64,
    t: f64,
    p: f64,
) -> Result<McEstimate> {
    Ok(stopped_increment_summary(ens, w, eps, t, p)?.estimate())
}

/// Mergeable form of [`stopped_increment_moment`].
pub fn stopped_increment_summary(
    ens: &PathEnsemble,
    w: &LocalWindow,
    eps: f64,
    t: f64,
    p: f64,
) -> Result<Summary> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("moment order p = {p} must be at least 1")));
    }
    let (c0, c1) = ens.lookback_columns(eps, t)?;
    let s = par_summarize(ens.n_paths, |i| {
        let row = ens.row(i);
        let start = row[c0];
        if !in_open_window(w, start) {
            return 0.0;
        }
        let mut sup = 0.0f64;
        for &x in &row[c0 + 1..=c1] {
            sup = sup.max((x - start).abs());
            if !in_open_window(w, x) {
                break;
            }
        }
        sup.powf(p)
    });
    Ok(s)
}

/// Estimate of `P(|X_{t−ε} − ξ| < δ − δ₀/2 and the path leaves the open
/// window at a grid time in (t−ε, t])`.
pub fn exit_probability(ens: &PathEnsemble, w: &LocalWindow, eps: f64, t: f64) -> Result<McEstimate> {
    Ok(exit_summary(ens, w, eps, t)?.estimate())
}

/// Mergeable form of [`exit_probability`].
pub fn exit_summary(ens: &PathEnsemble, w: &LocalWindow, eps: f64, t: f64) -> Result<Summary> {
    let (c0, c1) = ens.lookback_columns(eps, t)?;
    let inner = w.delta - 0.5 * w.delta0;
    let s = par_summarize(ens.n_paths, |i| {
        let row = ens.row(i);
        if (row[c0] - w.xi).abs() >= inner {
            return 0.0;
        }
        if row[c0 + 1..=c1].iter().any(|&x| !in_open_window(w, x)) {
            1.0
        } else {
            0.0
        }
    });
    Ok(s)
}

const MAGIC: &[u8; 8] = b"SDEPATHS";
const FORMAT_VERSION: u32 = 1;

/// Writes the ensemble in the little-endian binary dump format:
/// magic, version, flags, path count and offset, seed, `h`, `t_final`,
/// `x0`, recorded step indices, then row-major states (and increments when
/// flag bit 0 is set).
pub fn write_ensemble<W: Write>(ens: &PathEnsemble, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let flags: u32 = u32::from(ens.has_brownian());
    out.write_all(&flags.to_le_bytes())?;
    out.write_all(&(ens.n_paths as u64).to_le_bytes())?;
    out.write_all(&(ens.path_offset as u64).to_le_bytes())?;
    out.write_all(&ens.cfg.seed.to_le_bytes())?;
    out.write_all(&ens.cfg.h.to_le_bytes())?;
    out.write_all(&ens.cfg.t_final.to_le_bytes())?;
    out.write_all(&ens.cfg.x0.to_le_bytes())?;
    out.write_all(&(ens.cfg.n_paths as u64).to_le_bytes())?;
    out.write_all(&(ens.recorded.len() as u64).to_le_bytes())?;
    for &k in &ens.recorded {
        out.write_all(&(k as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(ens.states.len() * 8);
    for v in &ens.states {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(inc) = &ens.increments {
        for v in inc {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_ensemble<R: Read>(mut r: R) -> Result<PathEnsemble> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let flags = read_u32(&mut r)?;
    let n_paths = read_u64(&mut r)? as usize;
    let path_offset = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let h = read_f64(&mut r)?;
    let t_final = read_f64(&mut r)?;
    let x0 = read_f64(&mut r)?;
    let total_paths = read_u64(&mut r)? as usize;
    let width = read_u64(&mut r)? as usize;
    let recorded = (0..width)
        .map(|_| read_u64(&mut r).map(|k| k as usize))
        .collect::<Result<Vec<_>>>()?;
    let cfg = SimConfig {
        x0,
        t_final,
        h,
        n_paths: total_paths,
        seed,
        scheme: Scheme::Euler,
    };
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    let read_matrix = |r: &mut R| -> Result<Vec<f64>> {
        let mut raw = vec![0u8; n_paths * width * 8];
        r.read_exact(&mut raw)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    };
    let states = read_matrix(&mut r)?;
    let increments = if flags & 1 == 1 { Some(read_matrix(&mut r)?) } else { None };
    Ok(PathEnsemble {
        cfg,
        path_offset,
        n_paths,
        recorded,
        states,
        increments,
        window_flags: Mutex::new(HashMap::new()),
    })
}
