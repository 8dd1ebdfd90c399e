//! Reference models with closed-form marginals, quadrature references for
//! localized characteristic functions, and the sign-drift example model.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::cutoff::CutoffFunction;
use crate::error::{Error, Result};
use crate::lamperti::LampertiMap;
use crate::model::{CoefficientModel, Piece, PieceKind, PiecewiseFunction};
use crate::numeric::adaptive_simpson;

/// Tolerance of the quadrature references.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuStart {
    /// Deterministic start at `x0`.
    Point,
    /// Start drawn from the stationary law `N(0, σ₀²/(2θ))`.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceKind {
    /// `dX = μ₀ dt + σ₀ dW`.
    BrownianDrift { mu0: f64, sigma0: f64 },
    /// `dX = −θX dt + σ₀ dW`.
    OrnsteinUhlenbeck { theta: f64, sigma0: f64, start: OuStart },
    /// `dX = μ₀X dt + σ₀X dW`.
    GeometricBm { mu0: f64, sigma0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceModel {
    pub kind: ReferenceKind,
    pub x0: f64,
}

/// Gaussian law of `X_t` (or of `log X_t` for GBM).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}

impl ReferenceModel {
    pub fn brownian_drift(mu0: f64, sigma0: f64, x0: f64) -> Self {
        ReferenceModel {
            kind: ReferenceKind::BrownianDrift { mu0, sigma0 },
            x0,
        }
    }

    pub fn ornstein_uhlenbeck(theta: f64, sigma0: f64, x0: f64, start: OuStart) -> Self {
        ReferenceModel {
            kind: ReferenceKind::OrnsteinUhlenbeck { theta, sigma0, start },
            x0,
        }
    }

    pub fn geometric_bm(mu0: f64, sigma0: f64, x0: f64) -> Self {
        ReferenceModel {
            kind: ReferenceKind::GeometricBm { mu0, sigma0 },
            x0,
        }
    }

    /// Gaussian law of `X_t`, or of `log X_t` for GBM.
    pub fn gaussian_law(&self, t: f64) -> Result<GaussianLaw> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time t = {t} must be positive")));
        }
        Ok(match self.kind {
            ReferenceKind::BrownianDrift { mu0, sigma0 } => GaussianLaw {
                mean: self.x0 + mu0 * t,
                variance: sigma0 * sigma0 * t,
            },
            ReferenceKind::OrnsteinUhlenbeck { theta, sigma0, start } => {
                let stat = sigma0 * sigma0 / (2.0 * theta);
                match start {
                    OuStart::Point => GaussianLaw {
                        mean: self.x0 * (-theta * t).exp(),
                        variance: stat * (1.0 - (-2.0 * theta * t).exp()),
                    },
                    OuStart::Stationary => GaussianLaw {
                        mean: 0.0,
                        variance: stat,
                    },
                }
            }
            ReferenceKind::GeometricBm { mu0, sigma0 } => {
                if !(self.x0 > 0.0) {
                    return Err(Error::Domain("GBM needs x0 > 0".into()));
                }
                GaussianLaw {
                    mean: self.x0.ln() + (mu0 - 0.5 * sigma0 * sigma0) * t,
                    variance: sigma0 * sigma0 * t,
                }
            }
        })
    }

    /// Support of the marginal law.
    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            ReferenceKind::GeometricBm { .. } => (0.0, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn coefficient_model(&self) -> Result<CoefficientModel> {
        let (drift, diffusion) = match self.kind {
            ReferenceKind::BrownianDrift { mu0, sigma0 } => {
                (PiecewiseFunction::constant(mu0), PiecewiseFunction::constant(sigma0))
            }
            ReferenceKind::OrnsteinUhlenbeck { theta, sigma0, .. } => {
                (PiecewiseFunction::affine(-theta, 0.0), PiecewiseFunction::constant(sigma0))
            }
            ReferenceKind::GeometricBm { mu0, sigma0 } => {
                (PiecewiseFunction::affine(mu0, 0.0), PiecewiseFunction::affine(sigma0, 0.0))
            }
        };
        CoefficientModel::new(drift, diffusion)
    }
}

/// Closed-form marginal density of `X_t` at `x`.
pub fn exact_density(rm: &ReferenceModel, t: f64, x: f64) -> Result<f64> {
    let law = rm.gaussian_law(t)?;
    match rm.kind {
        ReferenceKind::GeometricBm { .. } => {
            if !(x > 0.0) {
                return Err(Error::Domain(format!("GBM density needs x > 0, got {x}")));
            }
            Ok(normal_pdf(x.ln(), law.mean, law.variance) / x)
        }
        _ => Ok(normal_pdf(x, law.mean, law.variance)),
    }
}

/// `∫ g(x) dx` over `[a, b]` split into `pieces` adaptive Simpson panels.
fn panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, pieces: usize) -> Result<f64> {
    crate::numeric::composite_adaptive_simpson(f, a, b, pieces, ORACLE_TOLERANCE)
}

/// `∫ e^{iyx} φ(x) p_t(x) dx` by adaptive quadrature.
pub fn localized_cf(rm: &ReferenceModel, phi: &CutoffFunction, t: f64, y: f64) -> Result<Complex64> {
    let (a, b) = phi.support();
    let (lo, hi) = rm.domain();
    let (a, b) = (a.max(lo), b.min(hi));
    if !(a < b) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let pieces = 16 + ((b - a) * y.abs() / PI).ceil() as usize;
    let dens = |x: f64| if x > lo { exact_density(rm, t, x).unwrap_or(0.0) } else { 0.0 };
    let re = panels(&|x: f64| (y * x).cos() * phi.value(x) * dens(x), a, b, pieces)?;
    let im = panels(&|x: f64| (y * x).sin() * phi.value(x) * dens(x), a, b, pieces)?;
    Ok(Complex64::new(re, im))
}

/// `∫ e^{iyH(x)} φ(x) p_t(x) dx`, the localized CF of `Y = H(X)`.
pub fn localized_cf_lamperti(
    rm: &ReferenceModel,
    phi: &CutoffFunction,
    map: &LampertiMap,
    t: f64,
    y: f64,
) -> Result<Complex64> {
    let (a, b) = phi.support();
    let (lo, hi) = rm.domain();
    let (a, b) = (a.max(lo), b.min(hi));
    if !(a < b) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let span = (map.forward(b)? - map.forward(a)?).abs();
    let pieces = 16 + (span * y.abs() / PI).ceil() as usize;
    let weight = |x: f64| phi.value(x) * exact_density(rm, t, x).unwrap_or(0.0);
    let re = panels(&|x: f64| (y * map.forward_value(x)).cos() * weight(x), a, b, pieces)?;
    let im = panels(&|x: f64| (y * map.forward_value(x)).sin() * weight(x), a, b, pieces)?;
    Ok(Complex64::new(re, im))
}

/// `∫ φ(x) p_t(x) dx`.
pub fn localized_mass(rm: &ReferenceModel, phi: &CutoffFunction, t: f64) -> Result<f64> {
    let (a, b) = phi.support();
    let (lo, hi) = rm.domain();
    let (a, b) = (a.max(lo), b.min(hi));
    if !(a < b) {
        return Ok(0.0);
    }
    let f = |x: f64| phi.value(x) * exact_density(rm, t, x).unwrap_or(0.0);
    adaptive_simpson(&f, a, b, ORACLE_TOLERANCE, 50)
}

/// `μ(x) = a·sign(x − ξ)` (with `μ(ξ) = a`) and `σ ≡ 1`.
pub fn sign_drift_model_at(a: f64, xi: f64) -> Result<CoefficientModel> {
    let drift = PiecewiseFunction::new(vec![
        Piece::new(f64::NEG_INFINITY, xi, PieceKind::Constant { value: -a }),
        Piece::new(xi, f64::INFINITY, PieceKind::Constant { value: a }),
    ])?;
    CoefficientModel::new(drift, PiecewiseFunction::constant(1.0))
}

/// [`sign_drift_model_at`] with `ξ = 0`.
pub fn sign_drift_model(a: f64) -> Result<CoefficientModel> {
    sign_drift_model_at(a, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::{make_bump, make_plateau_sequence};
    use crate::model::{build_sigma_star, drift_functional, LocalWindow};

    #[test]
    fn density_examples() {
        let bm = ReferenceModel::brownian_drift(0.0, 1.0, 0.0);
        assert!((exact_density(&bm, 1.0, 0.0).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-16);
        assert!(exact_density(&bm, 0.0, 0.0).is_err());

        let ou = ReferenceModel::ornstein_uhlenbeck(1.0, 2f64.sqrt(), 5.0, OuStart::Stationary);
        for x in [-1.0, 0.0, 0.8] {
            assert!((exact_density(&ou, 0.3, x).unwrap() - normal_pdf(x, 0.0, 1.0)).abs() < 1e-15);
        }
        let gbm = ReferenceModel::geometric_bm(0.1, 0.3, 2.0);
        assert!(exact_density(&gbm, 1.0, -1.0).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases = [
            ReferenceModel::brownian_drift(0.3, 0.7, 1.0),
            ReferenceModel::ornstein_uhlenbeck(1.0, 2f64.sqrt(), 0.5, OuStart::Point),
            ReferenceModel::geometric_bm(0.1, 0.4, 2.0),
        ];
        for rm in cases {
            let law = rm.gaussian_law(0.8).unwrap();
            let (lo, hi) = match rm.kind {
                ReferenceKind::GeometricBm { .. } => (1e-9, (law.mean + 14.0 * law.variance.sqrt()).exp()),
                _ => (law.mean - 14.0 * law.variance.sqrt(), law.mean + 14.0 * law.variance.sqrt()),
            };
            let f = |x: f64| exact_density(&rm, 0.8, x).unwrap();
            let mass = crate::numeric::composite_adaptive_simpson(&f, lo, hi, 400, 1e-11).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "{rm:?}: {mass}");
        }
    }

    #[test]
    fn localized_cf_examples() {
        let bm = ReferenceModel::brownian_drift(0.0, 1.0, 0.0);
        let phi = make_plateau_sequence(10).unwrap();
        let v = localized_cf(&bm, &phi, 1.0, 1.3).unwrap();
        assert!((v - Complex64::new((-0.5f64 * 1.69).exp(), 0.0)).norm() < 1e-9);

        let w = LocalWindow::new(0.0, 3.0, 1.0, 0.5).unwrap();
        let bump = make_bump(&w, 0.3).unwrap();
        let z = localized_cf(&bm, &bump, 0.7, 0.0).unwrap();
        assert!((z.re - localized_mass(&bm, &bump, 0.7).unwrap()).abs() < 1e-9);
        // Symmetric weight about 0: the transform is real.
        assert!(localized_cf(&bm, &bump, 0.7, 2.1).unwrap().im.abs() < 1e-9);
    }

    #[test]
    fn gbm_is_lamperti_image_of_brownian_motion() {
        let (mu0, s0, x0, t) = (0.1, 0.4, 2.0, 0.5);
        let gbm = ReferenceModel::geometric_bm(mu0, s0, x0);
        let w = LocalWindow::new(2.0, 1.0, 0.25, s0).unwrap();
        let sigma = PiecewiseFunction::affine(s0, 0.0);
        let s = build_sigma_star(&sigma, &w).unwrap();
        let map = LampertiMap::new(&s).unwrap();
        // On the window H(x) = log(x)/σ₀ and Y = H(X) is Gaussian.
        let law = gbm.gaussian_law(t).unwrap();
        for x in [1.2, 1.7, 2.0, 2.6, 2.95] {
            let y = map.forward(x).unwrap();
            let p_y = normal_pdf(y, law.mean / s0, law.variance / (s0 * s0));
            let q = p_y / s.value(x).abs();
            assert!((q - exact_density(&gbm, t, x).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn sign_drift_examples() {
        let m = sign_drift_model_at(0.7, 0.5).unwrap();
        assert_eq!(m.mu(-0.5), -0.7);
        assert_eq!(m.mu(1.5), 0.7);
        let w = LocalWindow::new(0.5, 1.0, 0.25, 0.5).unwrap();
        let s = build_sigma_star(&m.diffusion, &w).unwrap();
        let g = drift_functional(&m.drift, &s, &s.weak_derivative()).unwrap();
        for x in [-0.2, 0.3, 0.9, 1.4] {
            assert_eq!(g.value(x), 0.7 * (x - 0.5f64).signum());
        }
    }
}
