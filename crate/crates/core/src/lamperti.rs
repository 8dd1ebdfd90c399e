//! The Lamperti-type map `H(x) = ∫_{ξ−δ}^x dz/σ*(z)`, its inverse, the
//! transformed coefficients and the image of the window.

use crate::error::{Error, Result};
use crate::model::{LocalWindow, PiecewiseFunction, SigmaStar, WeakDerivative};
use crate::numeric::{adaptive_simpson, CompensatedSum};

/// Default absolute tolerance for `H`.
pub const DEFAULT_QUAD_TOLERANCE: f64 = 1e-10;
/// Number of knots in the inversion table.
pub const KNOTS: usize = 4096;
/// Default half-width of the inversion box, in units of `δ`.
pub const DEFAULT_BOX_RADII: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct LampertiMap {
    pub sigma_star: SigmaStar,
    pub anchor: f64,
    pub quad_tolerance: f64,
    x_min: f64,
    x_max: f64,
    knot_x: Vec<f64>,
    knot_h: Vec<f64>,
    increasing: bool,
}

/// Image of the window under `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageWindow {
    pub xi_h: f64,
    pub delta_h: f64,
}

impl ImageWindow {
    pub fn lo(&self) -> f64 {
        self.xi_h - self.delta_h
    }

    pub fn hi(&self) -> f64 {
        self.xi_h + self.delta_h
    }

    pub fn contains(&self, y: f64) -> bool {
        (y - self.xi_h).abs() <= self.delta_h
    }
}

impl LampertiMap {
    /// Builds `H` with the default tolerance and inversion box
    /// `[ξ−3δ, ξ+3δ]`.
    pub fn new(sigma_star: &SigmaStar) -> Result<Self> {
        let w = sigma_star.window;
        Self::with_box(
            sigma_star,
            w.xi - DEFAULT_BOX_RADII * w.delta,
            w.xi + DEFAULT_BOX_RADII * w.delta,
            DEFAULT_QUAD_TOLERANCE,
        )
    }

    /// Builds `H` with an explicit inversion box, which must contain the
    /// window.
    pub fn with_box(sigma_star: &SigmaStar, x_min: f64, x_max: f64, quad_tolerance: f64) -> Result<Self> {
        let w = sigma_star.window;
        if !(x_min <= w.lo() && x_max >= w.hi()) {
            return Err(Error::config(
                "lamperti.box",
                format!("box [{x_min}, {x_max}] must contain the window [{}, {}]", w.lo(), w.hi()),
            ));
        }
        if !(quad_tolerance > 0.0) {
            return Err(Error::config("lamperti.quad_tolerance", "must be positive"));
        }
        let mut map = LampertiMap {
            sigma_star: sigma_star.clone(),
            anchor: w.lo(),
            quad_tolerance,
            x_min,
            x_max,
            knot_x: crate::numeric::linspace(x_min, x_max, KNOTS),
            knot_h: Vec::with_capacity(KNOTS),
            increasing: sigma_star.orientation() > 0.0,
        };
        let seg_tol = quad_tolerance / KNOTS as f64;
        let mut acc = CompensatedSum::new();
        acc.add(map.integral(map.anchor, map.knot_x[0], seg_tol)?);
        map.knot_h.push(acc.value());
        for k in 1..KNOTS {
            acc.add(map.integral(map.knot_x[k - 1], map.knot_x[k], seg_tol)?);
            map.knot_h.push(acc.value());
        }
        Ok(map)
    }

    pub fn domain_box(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub fn is_increasing(&self) -> bool {
        self.increasing
    }

    /// `∫_a^b dz/σ*(z)` split at the window edges and the breakpoints of σ.
    fn integral(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        if a > b {
            return Ok(-self.integral(b, a, tol)?);
        }
        let s = &self.sigma_star;
        let (lo, hi) = (s.window.lo(), s.window.hi());
        let mut total = 0.0;
        if a < lo {
            total += (b.min(lo) - a) / s.left_value;
        }
        if b > hi {
            total += (b - a.max(hi)) / s.right_value;
        }
        let (ia, ib) = (a.max(lo), b.min(hi));
        if ia < ib {
            let mut cuts = vec![ia];
            cuts.extend(s.base.breakpoints().iter().copied().filter(|&c| c > ia && c < ib));
            cuts.push(ib);
            for seg in cuts.windows(2) {
                total += self.piece_integral(&s.base, seg[0], seg[1], tol)?;
            }
        }
        Ok(total)
    }

    fn piece_integral(&self, sigma: &PiecewiseFunction, a: f64, b: f64, tol: f64) -> Result<f64> {
        let mid = 0.5 * (a + b);
        let piece = sigma
            .piece_at(mid)
            .ok_or_else(|| Error::numeric("lamperti", format!("sigma undefined at {mid}")))?;
        use crate::model::PieceKind;
        match piece.kind {
            PieceKind::Constant { value } => Ok((b - a) / value),
            PieceKind::Affine { slope, intercept } => {
                let base = slope * a + intercept;
                if slope == 0.0 {
                    Ok((b - a) / base)
                } else {
                    Ok((slope * (b - a) / base).ln_1p() / slope)
                }
            }
            _ => {
                let f = |z: f64| 1.0 / piece.kind.value(z);
                adaptive_simpson(&f, a, b, tol, 50).map_err(|e| match e {
                    Error::Numeric { message, .. } => Error::numeric("lamperti", message),
                    other => other,
                })
            }
        }
    }

    /// `H(x)`; outside the inversion box `H` is continued linearly, which
    /// is exact because `σ*` is constant there.
    pub fn forward(&self, x: f64) -> Result<f64> {
        let s = &self.sigma_star;
        if x <= self.x_min {
            return Ok(self.knot_h[0] + (x - self.x_min) / s.left_value);
        }
        if x >= self.x_max {
            return Ok(self.knot_h[KNOTS - 1] + (x - self.x_max) / s.right_value);
        }
        let k = self.knot_index(x);
        Ok(self.knot_h[k] + self.integral(self.knot_x[k], x, self.quad_tolerance / 8.0)?)
    }

    /// Infallible variant of [`forward`](Self::forward) returning NaN on
    /// quadrature failure; used on hot paths.
    #[inline]
    pub fn forward_value(&self, x: f64) -> f64 {
        self.forward(x).unwrap_or(f64::NAN)
    }

    fn knot_index(&self, x: f64) -> usize {
        let step = (self.x_max - self.x_min) / (KNOTS - 1) as f64;
        let k = ((x - self.x_min) / step).floor();
        (k.max(0.0) as usize).min(KNOTS - 2)
    }

    /// Range of `H` over the inversion box.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.knot_h[0], self.knot_h[KNOTS - 1]);
        (a.min(b), a.max(b))
    }

    /// `H⁻¹(y)` for `y` in the image of the inversion box.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (rlo, rhi) = self.range();
        if !(y >= rlo && y <= rhi) {
            return Err(Error::Range {
                value: y,
                lo: rlo,
                hi: rhi,
            });
        }
        // Locate the knot cell; H is monotone so a binary search applies.
        let k = if self.increasing {
            self.knot_h.partition_point(|&h| h <= y)
        } else {
            self.knot_h.partition_point(|&h| h >= y)
        };
        let k = k.saturating_sub(1).min(KNOTS - 2);
        let (mut a, mut b) = (self.knot_x[k], self.knot_x[k + 1]);
        let (ha, hb) = (self.knot_h[k], self.knot_h[k + 1]);
        let mut x = if hb != ha {
            a + (y - ha) / (hb - ha) * (b - a)
        } else {
            a
        };
        let sign = if self.increasing { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let r = self.forward(x)? - y;
            if r == 0.0 {
                return Ok(x);
            }
            // Keep a bracket [a, b] with sign·(H − y) < 0 at a and > 0 at b.
            if sign * r > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let newton = x - r * self.sigma_star.value(x);
            let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || b - a <= f64::EPSILON * x.abs() {
                return Ok(next);
            }
            x = next;
        }
        let r = (self.forward(x)? - y).abs();
        if r <= self.quad_tolerance {
            Ok(x)
        } else {
            Err(Error::numeric(
                "lamperti",
                format!("inverse did not converge at y = {y} (residual {r:.3e})"),
            ))
        }
    }

    pub fn image_window(&self, w: &LocalWindow) -> Result<ImageWindow> {
        image_window(self, w)
    }
}

pub fn forward(m: &LampertiMap, x: f64) -> Result<f64> {
    m.forward(x)
}

pub fn inverse(m: &LampertiMap, y: f64) -> Result<f64> {
    m.inverse(y)
}

pub fn image_window(m: &LampertiMap, w: &LocalWindow) -> Result<ImageWindow> {
    let a = m.forward(w.lo())?;
    let b = m.forward(w.hi())?;
    let (lo, hi) = (a.min(b), a.max(b));
    Ok(ImageWindow {
        xi_h: 0.5 * (lo + hi),
        delta_h: 0.5 * (hi - lo),
    })
}

/// `μ^H` and `σ^H`, the coefficients of `Y = H(X)`.
#[derive(Debug, Clone)]
pub struct TransformedCoefficients<'a> {
    mu: &'a PiecewiseFunction,
    map: &'a LampertiMap,
    weak: WeakDerivative,
}

impl TransformedCoefficients<'_> {
    /// `μ^H(y) = (μ/σ* − σ²δ_{σ*}/(2σ*²))(H⁻¹(y))`.
    pub fn mu_h(&self, y: f64) -> Result<f64> {
        let x = self.map.inverse(y)?;
        let s = self.map.sigma_star.value(x);
        let sigma = self.map.sigma_star.base.value(x);
        Ok(self.mu.value(x) / s - sigma * sigma * self.weak.value(x) / (2.0 * s * s))
    }

    /// `σ^H(y) = (σ/σ*)(H⁻¹(y))`.
    pub fn sigma_h(&self, y: f64) -> Result<f64> {
        let x = self.map.inverse(y)?;
        Ok(self.map.sigma_star.base.value(x) / self.map.sigma_star.value(x))
    }
}

pub fn transform_coefficients<'a>(
    mu: &'a PiecewiseFunction,
    s: &SigmaStar,
    m: &'a LampertiMap,
) -> Result<TransformedCoefficients<'a>> {
    if s.window != m.sigma_star.window {
        return Err(Error::Validation("sigma* and Lamperti map use different windows".into()));
    }
    Ok(TransformedCoefficients {
        mu,
        map: m,
        weak: s.weak_derivative(),
    })
}
