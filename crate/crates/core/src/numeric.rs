//! Small numerical helpers shared by the estimators: compensated sums,
//! mergeable Monte-Carlo summaries, adaptive Simpson quadrature and a
//! least-squares slope fit.

use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mergeable first/second moment accumulator for one scalar Monte-Carlo
/// quantity. Merging in a fixed order gives bitwise-reproducible results.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    n: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Summary) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    /// Records `k` zero observations.
    pub fn push_zeros(&mut self, k: u64) {
        self.n += k;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.n as f64
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.mean();
        ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self) -> McEstimate {
        let se = if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        McEstimate {
            value: self.mean(),
            std_error: se,
            n: self.n,
        }
    }
}

/// Paths per reduction chunk. Chunk boundaries are fixed, so results do
/// not depend on how chunks are scheduled.
pub const REDUCTION_CHUNK: usize = 4096;

/// Summarizes `f(0), …, f(n−1)` in parallel with a deterministic merge.
pub fn par_summarize<F>(n: usize, f: F) -> Summary
where
    F: Fn(usize) -> f64 + Sync,
{
    use rayon::prelude::*;
    let parts: Vec<Summary> = (0..n.div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = Summary::new();
            for i in c * REDUCTION_CHUNK..n.min((c + 1) * REDUCTION_CHUNK) {
                s.push(f(i));
            }
            s
        })
        .collect();
    parts.iter().fold(Summary::new(), |mut acc, s| {
        acc.merge(s);
        acc
    })
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
}

/// Adaptive Simpson quadrature with Richardson correction.
///
/// Fails with a numeric error when the recursion depth is exhausted before
/// the local error estimate meets its share of `tol`.
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut worst = 0.0f64;
    let value = simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth, &mut worst)?;
    if !value.is_finite() {
        return Err(Error::numeric(
            "quadrature",
            format!("non-finite integral on [{a}, {b}]"),
        ));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    worst: &mut f64,
) -> Result<f64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        *worst = worst.max(delta.abs());
        return Err(Error::numeric(
            "quadrature",
            format!(
                "adaptive Simpson did not converge on [{a}, {b}] (local error {:.3e}, tolerance {:.3e})",
                delta.abs() / 15.0,
                tol
            ),
        ));
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst)?;
    Ok(l + r)
}

/// Integrates `f` over `[a, b]` by adaptive Simpson on `pieces` equal
/// sub-intervals, each receiving an equal share of the tolerance.
pub fn composite_adaptive_simpson<F>(f: &F, a: f64, b: f64, pieces: usize, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    let pieces = pieces.max(1);
    let width = (b - a) / pieces as f64;
    let share = tol / pieces as f64;
    let mut total = CompensatedSum::new();
    for k in 0..pieces {
        let lo = a + k as f64 * width;
        let hi = if k + 1 == pieces { b } else { lo + width };
        total.add(adaptive_simpson(f, lo, hi, share, 40)?);
    }
    Ok(total.value())
}

/// Trapezoid rule over tabulated, possibly non-uniform, abscissae.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let mut acc = CompensatedSum::new();
    for k in 1..xs.len() {
        acc.add(0.5 * (xs[k] - xs[k - 1]) * (ys[k] + ys[k - 1]));
    }
    acc.value()
}

/// `n` equally spaced points covering `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let step = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|k| if k + 1 == n { b } else { a + k as f64 * step })
                .collect()
        }
    }
}

/// Ordinary least-squares slope and intercept of `ys` against `xs`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log(values)` against `log(scales)`.
pub fn log_log_slope(scales: &[f64], values: &[f64]) -> f64 {
    let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly).0
}
