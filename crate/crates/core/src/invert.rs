//! Fourier inversion of CF estimates, pushforward to the state coordinate,
//! discrete Hölder norms, the Hölder constant `d_γ` and the joint (t, x)
//! continuity scan.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::charfn::{CharFnEstimate, FrequencyGrid};
use crate::error::{Error, Result};
use crate::lamperti::LampertiMap;
use crate::model::SigmaStar;
use crate::numeric::{adaptive_simpson, CompensatedSum};
use crate::pipeline::LocalProblem;
use crate::simulate::SimConfig;

/// Imaginary residues may exceed the propagated standard error by this
/// factor before inversion fails.
pub const IMAG_RESIDUE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    Lamperti,
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub x_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub y_max: f64,
    pub quad_spacing: f64,
    pub t: f64,
    pub coordinate: Coordinate,
    /// Largest discarded imaginary part.
    pub max_imag_residue: f64,
    /// Largest propagated standard error of the real part.
    pub max_std_error: f64,
}

impl DensityEstimate {
    /// Trapezoid mass over the grid.
    pub fn mass(&self) -> f64 {
        crate::numeric::trapezoid(&self.x_grid, &self.values)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "q"])?;
        for (x, v) in self.x_grid.iter().zip(&self.values) {
            w.write_record([x.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `p(x) = (1/2π) Σ_j w_j Δ e^{−ixy_j} cf(y_j)` (trapezoid weights) at each
/// point of `x_grid`.
pub fn invert(cf: &CharFnEstimate, x_grid: &[f64]) -> Result<DensityEstimate> {
    let grid = &cf.grid;
    if x_grid.is_empty() {
        return Err(Error::config("inversion.x_points", "grid is empty"));
    }
    let (lo, hi) = x_grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(hi - lo < PI / grid.spacing) {
        return Err(Error::config(
            "frequency.spacing",
            format!(
                "x-grid diameter {} violates the Nyquist limit pi/spacing = {}",
                hi - lo,
                PI / grid.spacing
            ),
        ));
    }
    let n = grid.len();
    let weight = |j: usize| if j == 0 || j + 1 == n { 0.5 } else { 1.0 } * grid.spacing;
    let scale = 1.0 / (2.0 * PI);
    let results: Vec<(f64, f64, f64, f64)> = x_grid
        .par_iter()
        .map(|&x| {
            let (mut re, mut im) = (CompensatedSum::new(), CompensatedSum::new());
            let mut var = 0.0;
            let mut mag = 0.0;
            for j in 0..n {
                let wj = weight(j);
                let v = cf.values[j];
                let (s, c) = (x * grid.values[j]).sin_cos();
                re.add(wj * (v.re * c + v.im * s));
                im.add(wj * (v.im * c - v.re * s));
                var += (wj * cf.std_errors[j]).powi(2);
                mag += wj * v.norm();
            }
            (scale * re.value(), scale * im.value(), scale * var.sqrt(), scale * mag)
        })
        .collect();
    let mut values = Vec::with_capacity(x_grid.len());
    let mut max_imag = 0.0f64;
    let mut max_se = 0.0f64;
    for (k, &(re, im, se, mag)) in results.iter().enumerate() {
        let allowed = IMAG_RESIDUE_FACTOR * se + 1e-12 * mag.max(1.0);
        if im.abs() > allowed {
            return Err(Error::numeric(
                "invert",
                format!(
                    "imaginary residue {:.3e} at x = {} exceeds {:.3e}",
                    im.abs(),
                    x_grid[k],
                    allowed
                ),
            ));
        }
        max_imag = max_imag.max(im.abs());
        max_se = max_se.max(se);
        values.push(re);
    }
    Ok(DensityEstimate {
        x_grid: x_grid.to_vec(),
        values,
        y_max: grid.y_max,
        quad_spacing: grid.spacing,
        t: cf.t,
        coordinate: Coordinate::Lamperti,
        max_imag_residue: max_imag,
        max_std_error: max_se,
    })
}

/// `q(x) = p(H(x))/|σ*(x)|` at the state points `x = H⁻¹(y)` of the
/// Lamperti grid of `p`.
pub fn pushforward(p: &DensityEstimate, m: &LampertiMap, s: &SigmaStar) -> Result<DensityEstimate> {
    if p.coordinate != Coordinate::Lamperti {
        return Err(Error::Domain("pushforward expects a Lamperti-coordinate density".into()));
    }
    let mut xs = Vec::with_capacity(p.x_grid.len());
    let mut qs = Vec::with_capacity(p.x_grid.len());
    for (&y, &v) in p.x_grid.iter().zip(&p.values) {
        let x = m.inverse(y)?;
        xs.push(x);
        qs.push(v / s.value(x).abs());
    }
    if !m.is_increasing() {
        xs.reverse();
        qs.reverse();
    }
    Ok(DensityEstimate {
        x_grid: xs,
        values: qs,
        coordinate: Coordinate::State,
        ..p.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderNorm {
    pub sup: f64,
    pub seminorm: f64,
    /// `max(sup, seminorm)`.
    pub norm: f64,
}

/// Sup norm and all-pairs γ-Hölder seminorm of tabulated values.
pub fn holder_parts(x: &[f64], v: &[f64], gamma: f64) -> Result<HolderNorm> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    if x.len() < 2 || x.len() != v.len() {
        return Err(Error::Domain("Hölder norm needs at least two grid points".into()));
    }
    let sup = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let seminorm = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut m = 0.0f64;
            for j in i + 1..x.len() {
                let dx = (x[j] - x[i]).abs();
                if dx > 0.0 {
                    m = m.max((v[j] - v[i]).abs() / dx.powf(gamma));
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(HolderNorm {
        sup,
        seminorm,
        norm: sup.max(seminorm),
    })
}

/// Discrete `C^γ` norm `max(sup|v|, seminorm)` of a density estimate.
pub fn holder_norm(d: &DensityEstimate, gamma: f64) -> Result<f64> {
    Ok(holder_parts(&d.x_grid, &d.values, gamma)?.norm)
}

/// Number of half-periods of `|sin|` integrated before the tail estimate.
const D_GAMMA_PERIODS: usize = 4000;

/// `d_γ = (1/2π) ∫_ℝ 2|sin(z/2)| / |z|^{1+γ} dz`, with an upper bound on the
/// error of the tail approximation.
pub fn d_gamma_with_error(gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    // With z = 2u the integral is 2^{2−γ} ∫_0^∞ |sin u| u^{−1−γ} du.
    // First half-period: u = s^{1/(1−γ)} removes the u^{−γ} singularity.
    let q = 1.0 / (1.0 - gamma);
    let first = |s: f64| {
        if s == 0.0 {
            return q;
        }
        let u = s.powf(q);
        q * u.sin() / u
    };
    let mut total = CompensatedSum::new();
    total.add(adaptive_simpson(&first, 0.0, PI.powf(1.0 - gamma), 1e-13, 50)?);
    let f = |u: f64| u.sin().abs() * u.powf(-1.0 - gamma);
    for m in 1..D_GAMMA_PERIODS {
        let a = m as f64 * PI;
        total.add(adaptive_simpson(&f, a, a + PI, 1e-15, 40)?);
    }
    // Tail: |sin u| averages to 2/π; the fluctuation has a bounded,
    // zero-mean second antiderivative, so the error is O(U^{−2−γ}).
    let u = D_GAMMA_PERIODS as f64 * PI;
    total.add(2.0 / PI * u.powf(-gamma) / gamma);
    let tail_error = (1.0 + gamma) * u.powf(-2.0 - gamma);
    let factor = 2f64.powf(2.0 - gamma) / (2.0 * PI);
    Ok((factor * total.value(), factor * tail_error))
}

pub fn d_gamma(gamma: f64) -> Result<f64> {
    Ok(d_gamma_with_error(gamma)?.0)
}

/// Output of [`joint_continuity_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointScan {
    /// Scanned times: the requested list plus all midpoints, sorted.
    pub times: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `q[k][j] = q_{times[k]}(x_grid[j])`.
    pub q: Vec<Vec<f64>>,
    /// `max_x |q_{t_{k+1}} − q_{t_k}|` over consecutive requested times.
    pub coarse_increments: Vec<f64>,
    /// Same over the halved steps.
    pub fine_increments: Vec<f64>,
    /// Mean over requested steps of (larger half-step increment)/(full).
    pub mean_halving_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl JointScan {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "q"])?;
        for (t, row) in self.times.iter().zip(&self.q) {
            for (x, q) in self.x_grid.iter().zip(row) {
                w.write_record([t.to_string(), x.to_string(), q.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Halving ratio threshold for the continuity surrogate.
pub const HALVING_THRESHOLD: f64 = 0.75;

/// Computes `q_t(x)` over `t_list` and its midpoints from one ensemble
/// (common random numbers across times) and checks that time increments
/// shrink when the time step is halved.
pub fn joint_continuity_scan(
    problem: &LocalProblem,
    sim: &SimConfig,
    t_list: &[f64],
    x_grid: &[f64],
    grid: &FrequencyGrid,
    block: usize,
) -> Result<JointScan> {
    if t_list.len() < 2 {
        return Err(Error::config("simulation.t_list", "needs at least two times"));
    }
    let mut coarse = t_list.to_vec();
    coarse.sort_by(f64::total_cmp);
    let mut times = coarse.clone();
    for w in coarse.windows(2) {
        times.push(0.5 * (w[0] + w[1]));
    }
    times.sort_by(f64::total_cmp);
    for &t in &times {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config("simulation.t_list", "times must lie in (0, 1]"));
        }
        sim.step_of(t)?;
    }
    let cfs = problem.lamperti_cfs(sim, &times, grid, block)?;
    let q = cfs
        .iter()
        .map(|cf| Ok(problem.state_density(cf, x_grid)?.values))
        .collect::<Result<Vec<_>>>()?;
    let sup_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let mut coarse_inc = Vec::new();
    let mut fine_inc = Vec::new();
    let mut ratios = Vec::new();
    for k in 0..coarse.len() - 1 {
        let (a, mid, b) = (2 * k, 2 * k + 1, 2 * k + 2);
        let full = sup_diff(&q[a], &q[b]);
        let h1 = sup_diff(&q[a], &q[mid]);
        let h2 = sup_diff(&q[mid], &q[b]);
        coarse_inc.push(full);
        fine_inc.push(h1);
        fine_inc.push(h2);
        ratios.push(if full > 0.0 { h1.max(h2) / full } else { 0.0 });
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(JointScan {
        times,
        x_grid: x_grid.to_vec(),
        q,
        coarse_increments: coarse_inc,
        fine_increments: fine_inc,
        mean_halving_ratio: mean_ratio,
        threshold: HALVING_THRESHOLD,
        pass: mean_ratio <= HALVING_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_sigma_star, LocalWindow, PiecewiseFunction};
    use crate::numeric::linspace;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn gaussian_cf(y_max: f64, spacing: f64) -> CharFnEstimate {
        let grid = FrequencyGrid::uniform(y_max, spacing).unwrap();
        CharFnEstimate::analytic(&grid, 1.0, |y| Complex64::new((-0.5 * y * y).exp(), 0.0))
    }

    #[test]
    fn gaussian_pair() {
        let d = invert(&gaussian_cf(16.0, 1.0 / 32.0), &[0.0]).unwrap();
        assert!((d.values[0] - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-6);

        let xs = linspace(-6.0, 6.0, 241);
        let d = invert(&gaussian_cf(32.0, 1.0 / 32.0), &xs).unwrap();
        for (x, v) in xs.iter().zip(&d.values) {
            let exact = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            assert!((v - exact).abs() <= 1e-5);
        }
    }

    #[test]
    fn nyquist_violation_rejected() {
        let cf = gaussian_cf(8.0, 0.5);
        let xs = linspace(-4.0, 4.0, 11);
        assert!(matches!(invert(&cf, &xs), Err(Error::Config { .. })));
    }

    #[test]
    fn point_mass_gives_dirichlet_spike() {
        let grid = FrequencyGrid::uniform(20.0, 0.05).unwrap();
        let cf = CharFnEstimate::analytic(&grid, 1.0, |y| Complex64::from_polar(1.0, 0.7 * y));
        let xs = linspace(-2.0, 3.0, 501);
        let d = invert(&cf, &xs).unwrap();
        let (k, peak) = d
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) });
        assert!((xs[k] - 0.7).abs() < 1e-9);
        assert!((peak - 20.0 / PI).abs() < 0.01);
    }

    #[test]
    fn imaginary_residue_is_checked() {
        let grid = FrequencyGrid::uniform(4.0, 0.25).unwrap();
        let cf = CharFnEstimate::analytic(&grid, 1.0, |y| Complex64::new(0.0, (y + 1.0).abs()));
        assert!(matches!(invert(&cf, &[0.3]), Err(Error::Numeric { .. })));
    }

    #[test]
    fn pushforward_examples() {
        let w = LocalWindow::new(0.0, 3.0, 1.0, 0.5).unwrap();
        let ys = linspace(0.5, 5.5, 101);
        let p = invert(&gaussian_cf(32.0, 1.0 / 16.0), &ys).unwrap();

        let s1 = build_sigma_star(&PiecewiseFunction::constant(1.0), &w).unwrap();
        let m1 = LampertiMap::new(&s1).unwrap();
        let q = pushforward(&p, &m1, &s1).unwrap();
        for (k, (x, v)) in q.x_grid.iter().zip(&q.values).enumerate() {
            assert!((x - (ys[k] + w.lo())).abs() < 1e-12);
            assert_eq!(*v, p.values[k]);
        }

        let s2 = build_sigma_star(&PiecewiseFunction::constant(2.0), &w).unwrap();
        let m2 = LampertiMap::new(&s2).unwrap();
        let q = pushforward(&p, &m2, &s2).unwrap();
        for (k, v) in q.values.iter().enumerate() {
            assert_eq!(*v, p.values[k] / 2.0);
        }
        // Change of variables: the trapezoid masses agree.
        assert!((q.mass() - p.mass()).abs() < 1e-12);
    }

    #[test]
    fn holder_examples() {
        let xs = linspace(-1.0, 1.0, 201);
        let c = vec![-0.4; xs.len()];
        assert_eq!(holder_parts(&xs, &c, 0.5).unwrap().norm, 0.4);
        let abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        // Brute-force pair scan as an independent reference.
        let mut brute = 0.0f64;
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if i != j {
                    brute = brute.max((abs[i] - abs[j]).abs() / (xs[i] - xs[j]).abs().sqrt());
                }
            }
        }
        let h = holder_parts(&xs, &abs, 0.5).unwrap();
        assert!((h.seminorm - 1.0).abs() < 1e-12);
        assert_eq!(h.seminorm, brute);
        assert!((h.sup + h.seminorm - 2.0).abs() < 1e-12);
        assert!(holder_parts(&xs[..1], &abs[..1], 0.5).is_err());
    }

    #[test]
    fn holder_norm_of_gaussian_is_grid_stable() {
        let norm_at = |n: usize| {
            let xs = linspace(-5.0, 5.0, n);
            let v: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt()).collect();
            holder_parts(&xs, &v, 0.5).unwrap().norm
        };
        let (a, b) = (norm_at(513), norm_at(1025));
        assert!(b / a <= 1.05 && b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn d_gamma_is_finite_and_dominates_sup_factor() {
        for g in [0.1, 0.5, 0.9] {
            let (d, err) = d_gamma_with_error(g).unwrap();
            assert!(d.is_finite() && d > 0.0);
            assert!(err < 1e-8 * d);
            assert!(d >= 1.0 / (PI * g), "gamma = {g}");
        }
        assert!(d_gamma(1.0).is_err());
        assert!(d_gamma(0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn inversion_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, shift in -1.0f64..1.0) {
            let grid = FrequencyGrid::uniform(12.0, 0.125).unwrap();
            let f1 = |y: f64| Complex64::new((-0.5 * y * y).exp(), 0.0);
            let f2 = move |y: f64| Complex64::from_polar((-y * y).exp(), shift * y);
            let c1 = CharFnEstimate::analytic(&grid, 1.0, f1);
            let c2 = CharFnEstimate::analytic(&grid, 1.0, f2);
            let mix = CharFnEstimate::analytic(&grid, 1.0, |y| f1(y) * a + f2(y) * b);
            let xs = linspace(-3.0, 3.0, 31);
            let (p1, p2, pm) = (invert(&c1, &xs).unwrap(), invert(&c2, &xs).unwrap(), invert(&mix, &xs).unwrap());
            for k in 0..xs.len() {
                prop_assert!((pm.values[k] - (a * p1.values[k] + b * p2.values[k])).abs() < 1e-12);
            }
        }

        #[test]
        fn holder_seminorm_grid_monotone(n in 5usize..60, gamma in 0.1f64..1.0) {
            let f = |x: f64| (3.0 * x).sin() + x.abs().sqrt();
            let coarse = linspace(-1.0, 1.0, n);
            let fine = linspace(-1.0, 1.0, 2 * n - 1);
            let vc: Vec<f64> = coarse.iter().map(|&x| f(x)).collect();
            let vf: Vec<f64> = fine.iter().map(|&x| f(x)).collect();
            let hc = holder_parts(&coarse, &vc, gamma).unwrap();
            let hf = holder_parts(&fine, &vf, gamma).unwrap();
            prop_assert!(hf.seminorm >= hc.seminorm * (1.0 - 1e-12));
        }
    }
}
