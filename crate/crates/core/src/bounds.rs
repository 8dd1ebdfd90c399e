//! Fourier-decay bounds on the localized CF, the Monte-Carlo remainder term
//! and fitted decay constants.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::charfn::CharFnEstimate;
use crate::error::{Error, Result};
use crate::model::{DriftFunctional, LocalWindow};
use crate::numeric::{par_summarize, McEstimate, Summary, REDUCTION_CHUNK};
use crate::simulate::PathEnsemble;

/// Standard errors allowed above a bound.
pub const SE_TOLERANCE: f64 = 3.0;
/// Frequencies whose modulus exceeds this many standard errors determine
/// the fitted constant of a bound report.
pub const SIGNIFICANCE: f64 = 5.0;

/// `E[1_A |∫_{t−ε}^t g(X_s) − g(X_{t−ε}) ds|]`, `A` the event that every
/// grid state in `[t−ε, t]` lies in the window, integral by trapezoid.
pub fn remainder(
    ens: &PathEnsemble,
    g: &DriftFunctional,
    w: &LocalWindow,
    eps: f64,
    t: f64,
) -> Result<McEstimate> {
    let (c0, c1) = ens.lookback_columns(eps, t)?;
    let h = ens.cfg.h;
    let s = par_summarize(ens.n_paths(), |i| {
        let row = &ens.row(i)[c0..=c1];
        if !row.iter().all(|&x| w.contains(x)) {
            return 0.0;
        }
        let g0 = g.value(row[0]);
        let last = row.len() - 1;
        let mut acc = 0.0;
        for (k, &x) in row.iter().enumerate() {
            let d = g.value(x) - g0;
            acc += if k == 0 || k == last { 0.5 * d } else { d };
        }
        (acc * h).abs()
    });
    Ok(s.estimate())
}

/// [`remainder`] for lookbacks of `ks[j]` grid steps, in one pass over each
/// path. Integrands are taken relative to `g(X_t)`, so a constant `g` gives
/// exactly zero.
pub fn remainder_profile(
    ens: &PathEnsemble,
    g: &DriftFunctional,
    w: &LocalWindow,
    t: f64,
    ks: &[usize],
) -> Result<Vec<McEstimate>> {
    Ok(remainder_profile_summaries(ens, g, w, t, ks)?
        .iter()
        .map(Summary::estimate)
        .collect())
}

/// Mergeable form of [`remainder_profile`], for ensembles streamed in
/// blocks.
pub fn remainder_profile_summaries(
    ens: &PathEnsemble,
    g: &DriftFunctional,
    w: &LocalWindow,
    t: f64,
    ks: &[usize],
) -> Result<Vec<Summary>> {
    let kmax = *ks.iter().max().ok_or_else(|| Error::Domain("empty lookback list".into()))?;
    if ks.contains(&0) {
        return Err(Error::Alignment("lookback must cover at least one step".into()));
    }
    let h = ens.cfg.h;
    let (c0, c1) = ens.lookback_columns(kmax as f64 * h, t)?;
    debug_assert_eq!(c1 - c0, kmax);
    let n = ens.n_paths();
    // Position of each k in `ks` (duplicates allowed).
    let mut wanted: Vec<Vec<usize>> = vec![Vec::new(); kmax + 1];
    for (j, &k) in ks.iter().enumerate() {
        wanted[k].push(j);
    }
    let chunks: Vec<Vec<Summary>> = (0..n.div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = vec![Summary::new(); ks.len()];
            let mut vals = vec![0.0; ks.len()];
            for i in c * REDUCTION_CHUNK..n.min((c + 1) * REDUCTION_CHUNK) {
                vals.iter_mut().for_each(|v| *v = 0.0);
                let row = &ens.row(i)[c0..=c1];
                let xt = row[kmax];
                if w.contains(xt) {
                    let gt = g.value(xt);
                    let mut prev = 0.0; // g(X_{t−(k−1)h}) − g(X_t)
                    let mut integral = 0.0;
                    for k in 1..=kmax {
                        let x = row[kmax - k];
                        if !w.contains(x) {
                            break;
                        }
                        let d = g.value(x) - gt;
                        integral += 0.5 * (prev + d);
                        prev = d;
                        for &j in &wanted[k] {
                            vals[j] = ((integral - k as f64 * d) * h).abs();
                        }
                    }
                }
                for (s, &v) in out.iter_mut().zip(&vals) {
                    s.push(v);
                }
            }
            out
        })
        .collect();
    let mut total = vec![Summary::new(); ks.len()];
    for chunk in &chunks {
        for (acc, s) in total.iter_mut().zip(chunk) {
            acc.merge(s);
        }
    }
    Ok(total)
}

/// `(1+ε|y|)e^{−εy²/2} + ε + (1+|y|)·remainder`.
pub fn theorem1_bound(y: f64, eps: f64, remainder: f64) -> f64 {
    let a = y.abs();
    (1.0 + eps * a) * (-0.5 * eps * y * y).exp() + eps + (1.0 + a) * remainder
}

/// `ε_y = log²|y| / y²`.
pub fn epsilon_rule(y: f64) -> Result<f64> {
    let a = y.abs();
    if !(a > 1.0) {
        return Err(Error::Domain(format!("epsilon rule needs |y| > 1, got {y}")));
    }
    let l = a.ln();
    Ok(l * l / (a * a))
}

/// `ε_y`, rejected unless `ε_y < t`.
pub fn epsilon_rule_checked(y: f64, t: f64) -> Result<f64> {
    let e = epsilon_rule(y)?;
    if !(e < t) {
        return Err(Error::Domain(format!(
            "lookback eps_y = {e} at y = {y} is not below t = {t}"
        )));
    }
    Ok(e)
}

/// Terms of the refined bound: `(|y|^{−log|y|/2}, ε_y, |y|·remainder)`.
pub fn refined_bound_terms(y: f64, remainder_at_eps_y: f64) -> Result<(f64, f64, f64)> {
    let e = epsilon_rule(y)?;
    let a = y.abs();
    Ok((a.powf(-0.5 * a.ln()), e, a * remainder_at_eps_y))
}

/// `|y|^{−log|y|/2} + log²|y|/y² + |y|·remainder`.
pub fn corollary1_bound(y: f64, remainder_at_eps_y: f64) -> Result<f64> {
    let (g, e, r) = refined_bound_terms(y, remainder_at_eps_y)?;
    Ok(g + e + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub c_fit: f64,
    pub pass_fraction: f64,
}

/// Smallest `c` with `|cf(y)| − k·SE ≤ c(1+|y|)^{−(1+γ)}` on the grid.
pub fn fit_decay_with_threshold(cf: &CharFnEstimate, gamma: f64, k_se: f64) -> Result<DecayFit> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    let c_fit = cf
        .grid
        .values
        .iter()
        .zip(&cf.values)
        .zip(&cf.std_errors)
        .map(|((y, v), se)| (v.norm() - k_se * se).max(0.0) * (1.0 + y.abs()).powf(1.0 + gamma))
        .fold(0.0, f64::max);
    Ok(DecayFit {
        c_fit,
        pass_fraction: decay_pass_fraction(cf, gamma, c_fit, k_se),
    })
}

/// [`fit_decay_with_threshold`] with the default 3-SE tolerance.
pub fn fit_decay(cf: &CharFnEstimate, gamma: f64) -> Result<DecayFit> {
    fit_decay_with_threshold(cf, gamma, SE_TOLERANCE)
}

/// Fraction of frequencies with `|cf(y)| ≤ c(1+|y|)^{−(1+γ)} + k·SE`.
pub fn decay_pass_fraction(cf: &CharFnEstimate, gamma: f64, c: f64, k_se: f64) -> f64 {
    let n = cf.values.len();
    let ok = cf
        .grid
        .values
        .iter()
        .zip(&cf.values)
        .zip(&cf.std_errors)
        .filter(|((y, v), se)| v.norm() <= c * (1.0 + y.abs()).powf(-1.0 - gamma) + k_se * *se)
        .count();
    ok as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub y: f64,
    pub empirical: f64,
    pub se: f64,
    /// Lookback actually used (ε_y rounded to the grid).
    pub eps: f64,
    pub gauss_term: f64,
    pub eps_term: f64,
    pub remainder_term: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub c_fit: f64,
    pub pass_fraction: f64,
    pub t: f64,
    pub eps_rule: String,
}

impl BoundReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "y",
            "empirical",
            "se",
            "gauss_term",
            "eps_term",
            "remainder_term",
            "bound",
            "pass",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.y.to_string(),
                r.empirical.to_string(),
                r.se.to_string(),
                r.gauss_term.to_string(),
                r.eps_term.to_string(),
                r.remainder_term.to_string(),
                r.bound.to_string(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Lookback in grid steps for frequency `y`: `ε_y / h` rounded, at least 1.
pub fn lookback_steps(y: f64, t: f64, h: f64) -> Result<usize> {
    let e = epsilon_rule_checked(y, t)?;
    Ok(((e / h).round() as usize).max(1))
}

/// Frequencies `y_min < y ≤ y_max` of `cf` (positive side) with their
/// lookbacks in grid steps, as `(grid index, steps)`.
pub fn bound_lookbacks(cf: &CharFnEstimate, y_min: f64, y_max: f64, h: f64) -> Result<Vec<(usize, usize)>> {
    let picked: Vec<usize> = (0..cf.grid.len())
        .filter(|&j| {
            let y = cf.grid.values[j];
            y > y_min && y <= y_max
        })
        .collect();
    if picked.is_empty() {
        return Err(Error::config("bound", "no frequencies in the checked range"));
    }
    picked
        .into_iter()
        .map(|j| Ok((j, lookback_steps(cf.grid.values[j], cf.t, h)?)))
        .collect()
}

/// Distinct lookbacks of a [`bound_lookbacks`] list, ascending.
pub fn distinct_steps(picks: &[(usize, usize)]) -> Vec<usize> {
    let mut ks: Vec<usize> = picks.iter().map(|p| p.1).collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Refined bound report from precomputed remainders: `remainders[i]` is
/// the remainder at lookback `ks[i]` steps. `c_fit` is the largest ratio
/// empirical/bound over frequencies whose modulus exceeds
/// [`SIGNIFICANCE`] standard errors.
pub fn bound_report_with(
    cf: &CharFnEstimate,
    picks: &[(usize, usize)],
    ks: &[usize],
    remainders: &[f64],
    h: f64,
) -> Result<BoundReport> {
    let mut rows = Vec::with_capacity(picks.len());
    for &(j, k) in picks {
        let y = cf.grid.values[j];
        let idx = ks
            .binary_search(&k)
            .map_err(|_| Error::Domain(format!("no remainder for lookback {k}")))?;
        let (gauss, eps_term, rem_term) = refined_bound_terms(y, remainders[idx])?;
        rows.push(BoundRow {
            y,
            empirical: cf.values[j].norm(),
            se: cf.std_errors[j],
            eps: k as f64 * h,
            gauss_term: gauss,
            eps_term,
            remainder_term: rem_term,
            bound: gauss + eps_term + rem_term,
            pass: false,
        });
    }
    let c_fit = rows
        .iter()
        .filter(|r| r.empirical >= SIGNIFICANCE * r.se)
        .map(|r| r.empirical / r.bound)
        .fold(0.0, f64::max);
    Ok(finish_report(rows, c_fit, cf.t))
}

/// Refined bound report on the positive frequencies `y_min < y ≤ y_max`
/// of `cf`, with remainders estimated on `ens` at `ε_y` rounded to the grid.
pub fn bound_report_for(
    cf: &CharFnEstimate,
    ens: &PathEnsemble,
    g: &DriftFunctional,
    w: &LocalWindow,
    y_min: f64,
    y_max: f64,
) -> Result<BoundReport> {
    let h = ens.cfg.h;
    let picks = bound_lookbacks(cf, y_min, y_max, h)?;
    let ks = distinct_steps(&picks);
    let rems: Vec<f64> = remainder_profile(ens, g, w, cf.t, &ks)?.iter().map(|m| m.value).collect();
    bound_report_with(cf, &picks, &ks, &rems, h)
}

/// Sets the pass flags of `rows` for constant `c` and assembles the report.
pub fn finish_report(mut rows: Vec<BoundRow>, c: f64, t: f64) -> BoundReport {
    for r in rows.iter_mut() {
        r.pass = r.empirical <= c * r.bound + SE_TOLERANCE * r.se;
    }
    let pass_fraction = rows.iter().filter(|r| r.pass).count() as f64 / rows.len().max(1) as f64;
    BoundReport {
        rows,
        c_fit: c,
        pass_fraction,
        t,
        eps_rule: "eps_y = log^2|y| / y^2, rounded to the simulation grid".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charfn::FrequencyGrid;
    use crate::model::{build_sigma_star, drift_functional, CoefficientModel, PiecewiseFunction};
    use crate::simulate::{simulate, SimConfig};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn basic_bound_examples() {
        assert!((theorem1_bound(0.0, 0.1, 0.0) - 1.1).abs() < 1e-15);
        assert!((theorem1_bound(1e4, 0.1, 0.0) - 0.1).abs() < 1e-15);
        let v = theorem1_bound(1.0, 1.0, 0.5);
        assert!((v - (2.0 * (-0.5f64).exp() + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn epsilon_rule_examples() {
        assert!((epsilon_rule(E).unwrap() - E.powi(-2)).abs() < 1e-16);
        assert!((epsilon_rule(E * E).unwrap() - 4.0 * E.powi(-4)).abs() < 1e-16);
        assert!(matches!(epsilon_rule(1.0), Err(Error::Domain(_))));
        assert!(matches!(epsilon_rule_checked(E, 0.05), Err(Error::Domain(_))));
        assert!(epsilon_rule_checked(E, 0.5).is_ok());
    }

    #[test]
    fn refined_bound_examples() {
        let v = corollary1_bound(E, 0.0).unwrap();
        assert!((v - ((-0.5f64).exp() + E.powi(-2))).abs() < 1e-15);
        let (g, _, _) = refined_bound_terms(E.powi(4), 0.0).unwrap();
        assert!((g - (-8.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn refined_gaussian_term_dominates_basic_form() {
        let mut y = E;
        while y <= 1e3 {
            let e = epsilon_rule(y).unwrap();
            let lhs = (1.0 + e * y) * (-0.5 * e * y * y).exp();
            let rhs = 2.0 * y.powf(-0.5 * y.ln());
            assert!(lhs <= rhs * (1.0 + 1e-12), "y = {y}");
            y *= 1.01;
        }
    }

    #[test]
    fn fit_decay_gaussian_matches_dense_search() {
        let grid = FrequencyGrid::uniform(16.0, 1.0 / 64.0).unwrap();
        let cf = CharFnEstimate::analytic(&grid, 1.0, |y| Complex64::new((-0.5 * y * y).exp(), 0.0));
        let fit = fit_decay(&cf, 0.5).unwrap();
        let dense = (0..=1_000_000)
            .map(|k| {
                let y = 4.0 * k as f64 / 1e6;
                (-0.5 * y * y).exp() * (1.0 + y).powf(1.5)
            })
            .fold(0.0, f64::max);
        assert!((fit.c_fit - dense).abs() / dense < 1e-4);
        assert_eq!(fit.pass_fraction, 1.0);
    }

    #[test]
    fn fit_decay_white_noise_does_not_decay() {
        for y_max in [16.0, 32.0] {
            let grid = FrequencyGrid::uniform(y_max, 0.25).unwrap();
            let cf = CharFnEstimate::analytic(&grid, 1.0, |_| Complex64::new(1.0, 0.0));
            let fit = fit_decay(&cf, 0.5).unwrap();
            assert!((fit.c_fit - (1.0f64 + y_max).powf(1.5)).abs() < 1e-9);
        }
        let grid = FrequencyGrid::uniform(4.0, 0.25).unwrap();
        let cf = CharFnEstimate::analytic(&grid, 1.0, |_| Complex64::new(1.0, 0.0));
        assert!(fit_decay(&cf, 1.0).is_err());
        assert!(decay_pass_fraction(&cf, 0.5, 1.0, 3.0) < 0.1);
    }

    fn sign_setup(drift: PiecewiseFunction) -> (PathEnsemble, DriftFunctional, LocalWindow) {
        let w = LocalWindow::new(0.0, 2.0, 0.5, 0.5).unwrap();
        let sigma = PiecewiseFunction::constant(1.0);
        let s = build_sigma_star(&sigma, &w).unwrap();
        let g = drift_functional(&drift, &s, &s.weak_derivative()).unwrap();
        let model = CoefficientModel::new(drift, sigma).unwrap();
        let ens = simulate(&model, &SimConfig::new(0.0, 0.5, 1.0 / 256.0, 3000, 5).unwrap()).unwrap();
        (ens, g, w)
    }

    #[test]
    fn remainder_vanishes_for_constant_g() {
        let (ens, g, w) = sign_setup(PiecewiseFunction::constant(0.7));
        assert_eq!(remainder(&ens, &g, &w, 0.125, 0.5).unwrap().value, 0.0);
        let prof = remainder_profile(&ens, &g, &w, 0.5, &[1, 7, 32]).unwrap();
        assert!(prof.iter().all(|m| m.value == 0.0));
        assert!(matches!(remainder(&ens, &g, &w, 0.001, 0.5), Err(Error::Alignment(_))));
    }

    #[test]
    fn profile_agrees_with_direct_remainder() {
        let (ens, g, w) = sign_setup(PiecewiseFunction::affine(1.0, 0.0));
        let ks = [1usize, 4, 16, 64];
        let prof = remainder_profile(&ens, &g, &w, 0.5, &ks).unwrap();
        for (k, p) in ks.iter().zip(&prof) {
            let d = remainder(&ens, &g, &w, *k as f64 / 256.0, 0.5).unwrap();
            assert!((d.value - p.value).abs() <= 1e-12 * (1.0 + d.value), "k = {k}");
        }
    }

    proptest! {
        #[test]
        fn basic_bound_monotone(y in -100.0f64..100.0, eps in 1e-4f64..1.0, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
            let (lo, hi) = (r1.min(r2), r1.max(r2));
            prop_assert!(theorem1_bound(y, eps, lo) <= theorem1_bound(y, eps, hi));
            prop_assert!(theorem1_bound(y, eps, lo) >= 0.0);
            prop_assert!(theorem1_bound(y, eps, lo) - eps >= 0.0);
        }
    }
}
