//! C² cutoff functions with quintic-smoothstep shoulders.

use crate::error::{Error, Result};
use crate::lamperti::LampertiMap;
use crate::model::LocalWindow;

/// Safety margin by which supports are shrunk.
pub const SUPPORT_MARGIN: f64 = 1e-6;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Plateau of ones on `[a+w, b−w]`, smoothstep shoulders of width `w`,
/// zero outside `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffFunction {
    pub a: f64,
    pub b: f64,
    pub shoulder_width: f64,
    pub c0: f64,
    pub c1: f64,
    pub lip1: f64,
}

#[inline]
fn smoothstep(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

#[inline]
fn smoothstep_d1(u: f64) -> f64 {
    let v = u * (1.0 - u);
    30.0 * v * v
}

#[inline]
fn smoothstep_d2(u: f64) -> f64 {
    60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
}

impl CutoffFunction {
    fn from_support(a: f64, b: f64, w: f64) -> Self {
        CutoffFunction {
            a,
            b,
            shoulder_width: w,
            c0: 1.0,
            c1: 1.875 / w,
            lip1: 10.0 / SQRT3 / (w * w),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn plateau(&self) -> (f64, f64) {
        (self.a + self.shoulder_width, self.b - self.shoulder_width)
    }

    /// `c0 + c1 + lip1`, the C² norm bound.
    pub fn c2_norm(&self) -> f64 {
        self.c0 + self.c1 + self.lip1
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if !(x > self.a && x < self.b) {
            return 0.0;
        }
        let w = self.shoulder_width;
        let (pl, pr) = self.plateau();
        if x < pl {
            smoothstep((x - self.a) / w)
        } else if x > pr {
            smoothstep((self.b - x) / w)
        } else {
            1.0
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if !(x > self.a && x < self.b) {
            return 0.0;
        }
        let w = self.shoulder_width;
        let (pl, pr) = self.plateau();
        if x < pl {
            smoothstep_d1((x - self.a) / w) / w
        } else if x > pr {
            -smoothstep_d1((self.b - x) / w) / w
        } else {
            0.0
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        if !(x > self.a && x < self.b) {
            return 0.0;
        }
        let w = self.shoulder_width;
        let (pl, pr) = self.plateau();
        if x < pl {
            smoothstep_d2((x - self.a) / w) / (w * w)
        } else if x > pr {
            smoothstep_d2((self.b - x) / w) / (w * w)
        } else {
            0.0
        }
    }
}

impl crate::model::ScalarFn for CutoffFunction {
    fn eval(&self, x: f64) -> f64 {
        self.value(x)
    }
}

/// Bump supported in `B_{δ−δ₀}(ξ)` with shoulders of width
/// `shoulder_fraction` times the support length.
pub fn make_bump(w: &LocalWindow, shoulder_fraction: f64) -> Result<CutoffFunction> {
    if !(shoulder_fraction > 0.0 && shoulder_fraction < 0.5) {
        return Err(Error::config(
            "cutoff.shoulder_fraction",
            "must lie in (0, 1/2)",
        ));
    }
    let r = w.delta - w.delta0;
    let (a, b) = (w.xi - r + SUPPORT_MARGIN, w.xi + r - SUPPORT_MARGIN);
    Ok(CutoffFunction::from_support(a, b, shoulder_fraction * (b - a)))
}

/// `φ_k`: equal to one on `[−k, k]` with shoulders of width `1 − 10⁻⁶`, so
/// its C² data do not depend on `k`.
pub fn make_plateau_sequence(k: u32) -> Result<CutoffFunction> {
    if k == 0 {
        return Err(Error::config("cutoff.k", "must be at least 1"));
    }
    let w = 1.0 - SUPPORT_MARGIN;
    let k = k as f64;
    Ok(CutoffFunction::from_support(-k - w, k + w, w))
}

/// `φ∘H⁻¹`, the cutoff in Lamperti coordinates.
#[derive(Debug, Clone)]
pub struct ComposedCutoff<'a> {
    pub phi: CutoffFunction,
    pub map: &'a LampertiMap,
    support: (f64, f64),
}

impl ComposedCutoff<'_> {
    /// `H(supp φ)`, ordered.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn value(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.support;
        if !(y > lo && y < hi) {
            return Ok(0.0);
        }
        Ok(self.phi.value(self.map.inverse(y)?))
    }
}

pub fn compose_with_inverse<'a>(phi: &CutoffFunction, m: &'a LampertiMap) -> Result<ComposedCutoff<'a>> {
    let (x_min, x_max) = m.domain_box();
    if phi.a < x_min || phi.b > x_max {
        return Err(Error::config(
            "cutoff",
            "support of the cutoff leaves the Lamperti inversion box",
        ));
    }
    let ha = m.forward(phi.a)?;
    let hb = m.forward(phi.b)?;
    Ok(ComposedCutoff {
        phi: *phi,
        map: m,
        support: (ha.min(hb), ha.max(hb)),
    })
}
