//! Monte-Carlo estimates of the localized characteristic function
//! `E[e^{iyX_t} φ(X_t)]`, and the closed-form conditional identities.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cutoff::CutoffFunction;
use crate::error::{Error, Result};
use crate::lamperti::LampertiMap;
use crate::model::{CoefficientModel, ScalarFn};
use crate::numeric::Summary;
use crate::simulate::PathEnsemble;

/// Uniform frequency grid `{−n·Δ, …, 0, …, n·Δ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub values: Vec<f64>,
    pub y_max: f64,
    pub spacing: f64,
}

impl FrequencyGrid {
    pub fn uniform(y_max: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::config("frequency.spacing", "must be positive"));
        }
        if !(y_max >= spacing && y_max.is_finite()) {
            return Err(Error::config("frequency.y_max", "must be at least one spacing"));
        }
        let n = (y_max / spacing).round();
        if (n * spacing - y_max).abs() > 1e-9 * y_max {
            return Err(Error::config("frequency.y_max", "must be a multiple of the spacing"));
        }
        let n = n as i64;
        Ok(FrequencyGrid {
            values: (-n..=n).map(|k| k as f64 * spacing).collect(),
            y_max: n as f64 * spacing,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of `y = 0`.
    pub fn zero_index(&self) -> usize {
        self.values.len() / 2
    }

    /// Nonnegative frequencies, from 0 upwards.
    pub fn nonnegative(&self) -> &[f64] {
        &self.values[self.zero_index()..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharFnEstimate {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
    pub std_errors: Vec<f64>,
    pub n_paths: u64,
    pub t: f64,
}

impl CharFnEstimate {
    /// Deterministic CF on a grid (zero standard errors), e.g. to feed a
    /// closed-form transform to the inverter.
    pub fn analytic<F>(grid: &FrequencyGrid, t: f64, f: F) -> Self
    where
        F: Fn(f64) -> Complex64 + Sync,
    {
        let values = grid.values.par_iter().map(|&y| f(y)).collect();
        CharFnEstimate {
            grid: grid.clone(),
            values,
            std_errors: vec![0.0; grid.len()],
            n_paths: 0,
            t,
        }
    }

    /// The estimate restricted to `|y| ≤ y_max`.
    pub fn truncated(&self, y_max: f64) -> Self {
        let keep: Vec<usize> = (0..self.grid.len())
            .filter(|&j| self.grid.values[j].abs() <= y_max + 1e-9 * self.grid.spacing)
            .collect();
        let values: Vec<f64> = keep.iter().map(|&j| self.grid.values[j]).collect();
        CharFnEstimate {
            grid: FrequencyGrid {
                y_max: values.last().copied().unwrap_or(0.0),
                values,
                spacing: self.grid.spacing,
            },
            values: keep.iter().map(|&j| self.values[j]).collect(),
            std_errors: keep.iter().map(|&j| self.std_errors[j]).collect(),
            n_paths: self.n_paths,
            t: self.t,
        }
    }

    pub fn value_at_zero(&self) -> Complex64 {
        self.values[self.grid.zero_index()]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "re", "im", "se"])?;
        for ((y, v), se) in self.grid.values.iter().zip(&self.values).zip(&self.std_errors) {
            w.write_record([y.to_string(), v.re.to_string(), v.im.to_string(), se.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mergeable per-frequency accumulator; feed sample blocks in a fixed
/// order for reproducible results.
#[derive(Debug, Clone)]
pub struct CfAccumulator {
    grid: FrequencyGrid,
    re: Vec<Summary>,
    im: Vec<Summary>,
}

impl CfAccumulator {
    pub fn new(grid: &FrequencyGrid) -> Self {
        let m = grid.nonnegative().len();
        CfAccumulator {
            grid: grid.clone(),
            re: vec![Summary::new(); m],
            im: vec![Summary::new(); m],
        }
    }

    /// Adds samples `e^{iy·point}·weight`.
    pub fn add(&mut self, points: &[f64], weights: &[f64]) {
        debug_assert_eq!(points.len(), weights.len());
        let active: Vec<(f64, f64)> = points
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(&p, &w)| (p, w))
            .collect();
        let zeros = (points.len() - active.len()) as u64;
        let ys = self.grid.nonnegative();
        let updates: Vec<(Summary, Summary)> = ys
            .par_iter()
            .map(|&y| {
                let (mut re, mut im) = (Summary::new(), Summary::new());
                for &(p, w) in &active {
                    let (s, c) = (y * p).sin_cos();
                    re.push(w * c);
                    im.push(w * s);
                }
                re.push_zeros(zeros);
                im.push_zeros(zeros);
                (re, im)
            })
            .collect();
        for (k, (re, im)) in updates.iter().enumerate() {
            self.re[k].merge(re);
            self.im[k].merge(im);
        }
    }

    pub fn merge(&mut self, other: &CfAccumulator) {
        for k in 0..self.re.len() {
            self.re[k].merge(&other.re[k]);
            self.im[k].merge(&other.im[k]);
        }
    }

    pub fn finish(&self, t: f64) -> CharFnEstimate {
        let m = self.re.len();
        let mut values = vec![Complex64::new(0.0, 0.0); 2 * m - 1];
        let mut ses = vec![0.0; 2 * m - 1];
        let z = m - 1;
        for k in 0..m {
            let (re, im) = (self.re[k].estimate(), self.im[k].estimate());
            let v = Complex64::new(re.value, if k == 0 { 0.0 } else { im.value });
            let se = re.std_error.max(im.std_error);
            values[z + k] = v;
            values[z - k] = v.conj();
            ses[z + k] = se;
            ses[z - k] = se;
        }
        CharFnEstimate {
            grid: self.grid.clone(),
            values,
            std_errors: ses,
            n_paths: self.re[0].count(),
            t,
        }
    }
}

/// `E[e^{iyX_t} φ(X_t)]` in the state coordinate.
pub fn estimate(ens: &PathEnsemble, phi: &dyn ScalarFn, grid: &FrequencyGrid, t: f64) -> Result<CharFnEstimate> {
    let xs = ens.states_at(t)?;
    let weights: Vec<f64> = xs.iter().map(|&x| phi.eval(x)).collect();
    let mut acc = CfAccumulator::new(grid);
    acc.add(&xs, &weights);
    Ok(acc.finish(t))
}

/// Samples `(H(X_t), φ(X_t))` for the Lamperti-coordinate estimate. Paths
/// outside the support of `φ` carry zero weight and skip the map.
pub fn lamperti_samples(
    ens: &PathEnsemble,
    phi: &CutoffFunction,
    map: &LampertiMap,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let xs = ens.states_at(t)?;
    let pairs: Vec<Result<(f64, f64)>> = xs
        .par_iter()
        .map(|&x| {
            let w = phi.value(x);
            if w == 0.0 {
                Ok((0.0, 0.0))
            } else {
                Ok((map.forward(x)?, w))
            }
        })
        .collect();
    let mut points = Vec::with_capacity(xs.len());
    let mut weights = Vec::with_capacity(xs.len());
    for p in pairs {
        let (y, w) = p?;
        points.push(y);
        weights.push(w);
    }
    Ok((points, weights))
}

/// `E[e^{iyY_t} (φ∘H⁻¹)(Y_t)]` with `Y = H(X)`; since `(φ∘H⁻¹)(H(x)) = φ(x)`
/// the weight is evaluated in the state coordinate.
pub fn estimate_lamperti(
    ens: &PathEnsemble,
    phi: &CutoffFunction,
    map: &LampertiMap,
    grid: &FrequencyGrid,
    t: f64,
) -> Result<CharFnEstimate> {
    let (points, weights) = lamperti_samples(ens, phi, map, t)?;
    let mut acc = CfAccumulator::new(grid);
    acc.add(&points, &weights);
    Ok(acc.finish(t))
}

/// Conditional CF of `Z_{t,ε}` given `X_{t−ε} = x`.
pub fn analytic_conditional_cf(x: f64, y: f64, eps: f64, model: &CoefficientModel) -> Complex64 {
    let (mu, sigma) = (model.mu(x), model.sigma(x));
    Complex64::from_polar((-0.5 * y * y * sigma * sigma * eps).exp(), y * (x + eps * mu))
}

/// `E[N e^{iŷN}] = iεŷ e^{−ŷ²ε/2}` for `N ~ N(0, ε)`.
pub fn analytic_weighted_gaussian(yhat: f64, eps: f64) -> Complex64 {
    Complex64::new(0.0, eps * yhat * (-0.5 * yhat * yhat * eps).exp())
}
