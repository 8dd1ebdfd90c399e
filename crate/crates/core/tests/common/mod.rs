//! Shared helpers and independent reference computations for the
//! integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use localdens::model::{CoefficientModel, LocalWindow, Piece, PieceKind, PiecewiseFunction};
use statrs::function::gamma::gamma;

/// `d_γ` from the Fourier series of `|sin u|`:
/// `∫_0^∞ |sin u| u^{−1−γ} du = (4/π) C_γ Σ_{m≥1} (2m)^γ / (4m² − 1)` with
/// `C_γ = Γ(1−γ) cos(πγ/2) / γ`. The series tail beyond `M` is replaced by
/// its midpoint-rule integral, accurate to `O(M^{γ−3})`.
pub fn d_gamma_series(gamma_: f64) -> f64 {
    const M: usize = 2_000_000;
    let c = gamma(1.0 - gamma_) * (PI * gamma_ / 2.0).cos() / gamma_;
    let term = |m: f64| (2.0 * m).powf(gamma_) / (4.0 * m * m - 1.0);
    let mut s = 0.0;
    // Smallest terms first.
    for m in (1..=M).rev() {
        s += term(m as f64);
    }
    // ∫_{M+½}^∞ 2^{γ−2} m^{γ−2} (1 + 1/(4m²)) dm.
    let a = M as f64 + 0.5;
    let k = 2f64.powf(gamma_ - 2.0);
    s += k * (a.powf(gamma_ - 1.0) / (1.0 - gamma_) + a.powf(gamma_ - 3.0) / (4.0 * (3.0 - gamma_)));
    let integral = 4.0 / PI * c * s;
    2f64.powf(2.0 - gamma_) * integral / (2.0 * PI)
}

/// `E|Z|^p` for `Z ~ N(0, 1)`.
pub fn normal_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt()
}

/// `μ(x) = clamp(x, −r, r)`.
pub fn clipped_identity(r: f64) -> PiecewiseFunction {
    PiecewiseFunction::new(vec![
        Piece::new(f64::NEG_INFINITY, -r, PieceKind::Constant { value: -r }),
        Piece::new(-r, r, PieceKind::Affine { slope: 1.0, intercept: 0.0 }),
        Piece::new(r, f64::INFINITY, PieceKind::Constant { value: r }),
    ])
    .unwrap()
}

pub fn unit_diffusion(drift: PiecewiseFunction) -> CoefficientModel {
    CoefficientModel::new(drift, PiecewiseFunction::constant(1.0)).unwrap()
}

pub fn window(xi: f64, delta: f64, delta0: f64, l_sigma: f64) -> LocalWindow {
    LocalWindow::new(xi, delta, delta0, l_sigma).unwrap()
}

/// Least-squares slope of `log v` against `log x`, computed directly.
pub fn slope(x: &[f64], v: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|a| a.ln()).collect();
    let lv: Vec<f64> = v.iter().map(|a| a.ln()).collect();
    let n = lx.len() as f64;
    let (mx, mv) = (lx.iter().sum::<f64>() / n, lv.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&lv).map(|(a, b)| (a - mx) * (b - mv)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
