//! SDE coefficients as piecewise closed-form functions, the localization
//! window, the constant continuation `σ*` of the diffusion and its weak
//! derivative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can be evaluated pointwise on the real line.
pub trait ScalarFn: Send + Sync {
    fn eval(&self, x: f64) -> f64;
}

impl<F> ScalarFn for F
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

const CONTINUITY_TOL: f64 = 1e-12;

/// Closed-form description of one piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceKind {
    Constant {
        value: f64,
    },
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// Coefficients in ascending powers of `x`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `offset + amplitude * sin(frequency * x + phase)`.
    Sinusoid {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `offset + scale * |x - center|^exponent`.
    HolderPower {
        center: f64,
        exponent: f64,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl PieceKind {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            PieceKind::Constant { value } => value,
            PieceKind::Affine { slope, intercept } => slope * x + intercept,
            PieceKind::Polynomial { ref coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            PieceKind::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (frequency * x + phase).sin(),
            PieceKind::HolderPower {
                center,
                exponent,
                scale,
                offset,
            } => offset + scale * (x - center).abs().powf(exponent),
        }
    }

    /// Classical derivative, `None` where it does not exist.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match *self {
            PieceKind::Constant { .. } => Some(0.0),
            PieceKind::Affine { slope, .. } => Some(slope),
            PieceKind::Polynomial { ref coeffs } => Some(
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c),
            ),
            PieceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
                ..
            } => Some(amplitude * frequency * (frequency * x + phase).cos()),
            PieceKind::HolderPower {
                center,
                exponent,
                scale,
                ..
            } => {
                let d = x - center;
                if d == 0.0 {
                    if exponent > 1.0 {
                        Some(0.0)
                    } else {
                        None
                    }
                } else {
                    Some(scale * exponent * d.abs().powf(exponent - 1.0) * d.signum())
                }
            }
        }
    }

    /// Points in the open interval `(lo, hi)` where the piece is not
    /// differentiable.
    pub fn kinks_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        match *self {
            PieceKind::HolderPower {
                center, exponent, scale, ..
            } if exponent <= 1.0 && scale != 0.0 && center > lo && center < hi => vec![center],
            _ => Vec::new(),
        }
    }

    /// Upper bound on the Lipschitz constant over `[lo, hi]` from the
    /// closed form; `None` when the piece is not Lipschitz there.
    pub fn lipschitz_bound(&self, lo: f64, hi: f64) -> Option<f64> {
        match *self {
            PieceKind::Constant { .. } => Some(0.0),
            PieceKind::Affine { slope, .. } => Some(slope.abs()),
            PieceKind::Polynomial { ref coeffs } => {
                let m = lo.abs().max(hi.abs());
                if !m.is_finite() && coeffs.len() > 2 {
                    return None;
                }
                Some(
                    coeffs
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, c)| k as f64 * c.abs() * m.powi(k as i32 - 1))
                        .sum(),
                )
            }
            PieceKind::Sinusoid {
                amplitude,
                frequency,
                ..
            } => Some((amplitude * frequency).abs()),
            PieceKind::HolderPower {
                center,
                exponent,
                scale,
                ..
            } => {
                if scale == 0.0 {
                    return Some(0.0);
                }
                let far = (lo - center).abs().max((hi - center).abs());
                if exponent >= 1.0 {
                    if exponent > 1.0 && !far.is_finite() {
                        return None;
                    }
                    Some(scale.abs() * exponent * far.powf(exponent - 1.0))
                } else if center >= lo && center <= hi {
                    None
                } else {
                    let near = (lo - center).abs().min((hi - center).abs());
                    Some(scale.abs() * exponent * near.powf(exponent - 1.0))
                }
            }
        }
    }

    /// Hölder exponent (capped at 1) of the piece over `[lo, hi]`.
    pub fn holder_exponent(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            PieceKind::HolderPower {
                center, exponent, ..
            } if center >= lo && center <= hi => exponent.min(1.0),
            _ => 1.0,
        }
    }
}

/// One piece on the closed interval `[lo, hi]` (infinite ends allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub kind: PieceKind,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, kind: PieceKind) -> Self {
        Piece { lo, hi, kind }
    }
}

/// Piecewise closed-form scalar function. Evaluation at a breakpoint uses
/// the piece to its right; points covered by no piece are gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFunction {
    pieces: Vec<Piece>,
    breakpoints: Vec<f64>,
}

impl PiecewiseFunction {
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::config("pieces", "at least one piece is required"));
        }
        for (k, p) in pieces.iter().enumerate() {
            if p.lo.is_nan() || p.hi.is_nan() || p.lo >= p.hi {
                return Err(Error::config(
                    format!("pieces[{k}]"),
                    format!("interval [{}, {}] is empty or malformed", p.lo, p.hi),
                ));
            }
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for k in 1..pieces.len() {
            if pieces[k].lo < pieces[k - 1].hi {
                return Err(Error::config(
                    format!("pieces[{k}]"),
                    format!(
                        "interval starting at {} overlaps the previous piece ending at {}",
                        pieces[k].lo,
                        pieces[k - 1].hi
                    ),
                ));
            }
        }
        let mut breakpoints: Vec<f64> = pieces
            .iter()
            .flat_map(|p| [p.lo, p.hi])
            .filter(|b| b.is_finite())
            .collect();
        breakpoints.dedup();
        Ok(PiecewiseFunction { pieces, breakpoints })
    }

    pub fn single(kind: PieceKind) -> Self {
        PiecewiseFunction {
            pieces: vec![Piece::new(f64::NEG_INFINITY, f64::INFINITY, kind)],
            breakpoints: Vec::new(),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::single(PieceKind::Constant { value })
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self::single(PieceKind::Affine { slope, intercept })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// True when the pieces cover the whole real line without gaps.
    pub fn is_total(&self) -> bool {
        self.pieces[0].lo == f64::NEG_INFINITY
            && self.pieces[self.pieces.len() - 1].hi == f64::INFINITY
            && self.pieces.windows(2).all(|w| w[0].hi == w[1].lo)
    }

    fn piece_index(&self, x: f64) -> Option<usize> {
        let idx = self.pieces.partition_point(|p| p.lo <= x);
        if idx == 0 {
            return None;
        }
        let p = &self.pieces[idx - 1];
        if x < p.hi || x == p.hi {
            Some(idx - 1)
        } else {
            None
        }
    }

    fn left_piece_index(&self, x: f64) -> Option<usize> {
        let idx = self.pieces.partition_point(|p| p.lo < x);
        if idx == 0 {
            return None;
        }
        (x <= self.pieces[idx - 1].hi).then_some(idx - 1)
    }

    pub fn piece_at(&self, x: f64) -> Option<&Piece> {
        self.piece_index(x).map(|k| &self.pieces[k])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.piece_at(x)
            .map(|p| p.kind.value(x))
            .ok_or_else(|| Error::config("pieces", format!("no piece is defined at x = {x}")))
    }

    /// Evaluation that yields NaN in gaps.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.piece_index(x) {
            Some(k) => self.pieces[k].kind.value(x),
            None => f64::NAN,
        }
    }

    /// Limit from the left at `x`.
    pub fn left_limit(&self, x: f64) -> Option<f64> {
        self.left_piece_index(x).map(|k| self.pieces[k].kind.value(x))
    }

    pub fn right_limit(&self, x: f64) -> Option<f64> {
        self.piece_at(x).filter(|p| x < p.hi).map(|p| p.kind.value(x))
    }

    /// One-sided derivatives at `x` (left piece, right piece).
    pub fn one_sided_derivatives(&self, x: f64) -> (Option<f64>, Option<f64>) {
        let left = self
            .left_piece_index(x)
            .and_then(|k| one_sided(&self.pieces[k].kind, x, -1.0));
        let right = self
            .piece_at(x)
            .filter(|p| x < p.hi)
            .and_then(|p| one_sided(&p.kind, x, 1.0));
        (left, right)
    }

    /// Largest Hölder exponent (≤ 1) valid on each piece intersecting
    /// `[lo, hi]`; jumps at breakpoints are not counted.
    pub fn holder_exponent_on(&self, lo: f64, hi: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.hi >= lo && p.lo <= hi)
            .map(|p| p.kind.holder_exponent(p.lo.max(lo), p.hi.min(hi)))
            .fold(1.0, f64::min)
    }
}

fn one_sided(kind: &PieceKind, x: f64, side: f64) -> Option<f64> {
    match kind.derivative(x) {
        Some(d) => Some(d),
        None => match *kind {
            // |x - c| with exponent 1 has finite one-sided slopes.
            PieceKind::HolderPower {
                exponent, scale, ..
            } if exponent == 1.0 => Some(side * scale),
            _ => None,
        },
    }
}

impl ScalarFn for PiecewiseFunction {
    fn eval(&self, x: f64) -> f64 {
        self.value(x)
    }
}

/// Drift and diffusion of the autonomous scalar SDE.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientModel {
    pub drift: PiecewiseFunction,
    pub diffusion: PiecewiseFunction,
}

impl CoefficientModel {
    pub fn new(drift: PiecewiseFunction, diffusion: PiecewiseFunction) -> Result<Self> {
        if !drift.is_total() {
            return Err(Error::config("model.drift", "pieces must cover the whole real line"));
        }
        if !diffusion.is_total() {
            return Err(Error::config("model.diffusion", "pieces must cover the whole real line"));
        }
        Ok(CoefficientModel { drift, diffusion })
    }

    #[inline]
    pub fn mu(&self, x: f64) -> f64 {
        self.drift.value(x)
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.diffusion.value(x)
    }
}

/// Localization data: centre, radius, inner margin and ellipticity floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalWindow {
    pub xi: f64,
    pub delta: f64,
    pub delta0: f64,
    pub l_sigma: f64,
}

/// Default number of validation grid points on the window.
pub const DEFAULT_VALIDATION_POINTS: usize = 10_000;

impl LocalWindow {
    pub fn new(xi: f64, delta: f64, delta0: f64, l_sigma: f64) -> Result<Self> {
        let w = LocalWindow {
            xi,
            delta,
            delta0,
            l_sigma,
        };
        w.check_shape()?;
        Ok(w)
    }

    fn check_shape(&self) -> Result<()> {
        if !self.xi.is_finite() {
            return Err(Error::config("window.xi", "must be finite"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config("window.delta", "must be positive"));
        }
        if !(self.delta0 > 0.0 && self.delta0 < self.delta) {
            return Err(Error::config("window.delta0", "must satisfy 0 < delta0 < delta"));
        }
        if !(self.l_sigma > 0.0) {
            return Err(Error::config("window.l_sigma", "must be positive"));
        }
        Ok(())
    }

    pub fn lo(&self) -> f64 {
        self.xi - self.delta
    }

    pub fn hi(&self) -> f64 {
        self.xi + self.delta
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        (x - self.xi).abs() <= self.delta
    }

    pub fn grid(&self, n: usize) -> Vec<f64> {
        crate::numeric::linspace(self.lo(), self.hi(), n.max(2))
    }

    /// Grid-based check of ellipticity and local boundedness of the drift.
    pub fn validate(&self, model: &CoefficientModel, grid_points: usize) -> Result<()> {
        self.check_shape()?;
        for x in self.grid(grid_points) {
            let s = model.sigma(x);
            if !(s.abs() >= self.l_sigma) {
                return Err(Error::Validation(format!(
                    "|sigma({x})| = {} is below the ellipticity floor {}",
                    s.abs(),
                    self.l_sigma
                )));
            }
            if !model.mu(x).is_finite() {
                return Err(Error::Validation(format!("drift is unbounded at x = {x}")));
            }
        }
        Ok(())
    }
}

/// Constant continuation of `σ` outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaStar {
    pub base: PiecewiseFunction,
    pub left_value: f64,
    pub right_value: f64,
    pub window: LocalWindow,
    lipschitz: f64,
    sup_abs: f64,
}

impl SigmaStar {
    pub fn build(sigma: &PiecewiseFunction, window: &LocalWindow) -> Result<Self> {
        Self::build_with_grid(sigma, window, DEFAULT_VALIDATION_POINTS)
    }

    pub fn build_with_grid(
        sigma: &PiecewiseFunction,
        window: &LocalWindow,
        grid_points: usize,
    ) -> Result<Self> {
        window.check_shape()?;
        let (lo, hi) = (window.lo(), window.hi());
        let grid = window.grid(grid_points);

        let mut sign = 0.0;
        let mut sup_grid = 0.0f64;
        for &x in &grid {
            let s = sigma.eval(x)?;
            if !(s.abs() >= window.l_sigma) {
                return Err(Error::Validation(format!(
                    "|sigma({x})| = {} is below the ellipticity floor {}",
                    s.abs(),
                    window.l_sigma
                )));
            }
            if sign == 0.0 {
                sign = s.signum();
            } else if s.signum() != sign {
                return Err(Error::Validation("sigma changes sign on the window".into()));
            }
            sup_grid = sup_grid.max(s.abs());
        }

        // Lipschitz on the closed window requires continuity at interior
        // breakpoints and at the right edge (whose value is taken from the
        // right-hand piece).
        for &b in sigma.breakpoints().iter().filter(|&&b| b > lo && b <= hi) {
            let left = sigma.left_limit(b);
            let at = sigma.eval(b)?;
            match left {
                Some(l) if (l - at).abs() <= CONTINUITY_TOL * (1.0 + at.abs()) => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "sigma is discontinuous at x = {b} inside the window"
                    )))
                }
            }
        }

        let mut lipschitz = Some(0.0f64);
        for p in sigma.pieces().iter().filter(|p| p.hi > lo && p.lo < hi) {
            let bound = p.kind.lipschitz_bound(p.lo.max(lo), p.hi.min(hi));
            lipschitz = match (lipschitz, bound) {
                (Some(acc), Some(b)) => Some(acc.max(b)),
                _ => None,
            };
        }
        let lipschitz = match lipschitz {
            Some(l) => l,
            None => {
                // Pieces without a closed-form bound: difference quotients on
                // the grid, inflated by 10%.
                let mut q = 0.0f64;
                for w in grid.windows(2) {
                    let d = (sigma.value(w[1]) - sigma.value(w[0])).abs() / (w[1] - w[0]);
                    q = q.max(d);
                }
                if !q.is_finite() {
                    return Err(Error::Validation("sigma is not Lipschitz on the window".into()));
                }
                1.1 * q
            }
        };
        let spacing = (hi - lo) / (grid.len() - 1) as f64;
        Ok(SigmaStar {
            base: sigma.clone(),
            left_value: sigma.eval(lo)?,
            right_value: sigma.eval(hi)?,
            window: *window,
            lipschitz,
            sup_abs: sup_grid + 0.5 * lipschitz * spacing,
        })
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if x <= self.window.lo() {
            self.left_value
        } else if x >= self.window.hi() {
            self.right_value
        } else {
            self.base.value(x)
        }
    }

    /// Global Lipschitz constant (that of `σ` on the window).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Upper bound on `sup |σ*|`.
    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// +1 if `σ* > 0`, −1 if `σ* < 0`.
    pub fn orientation(&self) -> f64 {
        self.left_value.signum()
    }

    pub fn weak_derivative(&self) -> WeakDerivative {
        WeakDerivative::new(self)
    }
}

impl ScalarFn for SigmaStar {
    fn eval(&self, x: f64) -> f64 {
        self.value(x)
    }
}

/// Classical derivative of `σ*` where it exists and zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakDerivative {
    pub source: SigmaStar,
    pub nondifferentiable_points: Vec<f64>,
}

impl WeakDerivative {
    pub fn new(source: &SigmaStar) -> Self {
        let w = source.window;
        let (lo, hi) = (w.lo(), w.hi());
        let base = &source.base;
        let mut points = Vec::new();

        for &b in base.breakpoints().iter().filter(|&&b| b > lo && b < hi) {
            let (l, r) = base.one_sided_derivatives(b);
            let differs = match (l, r) {
                (Some(l), Some(r)) => (l - r).abs() > CONTINUITY_TOL * (1.0 + l.abs()),
                _ => true,
            };
            if differs {
                points.push(b);
            }
        }
        for p in base.pieces() {
            points.extend(p.kind.kinks_in(p.lo.max(lo), p.hi.min(hi)));
        }
        // Outside the window σ* is constant, so the edges are kinks unless
        // the inside slope vanishes.
        let inner_left = base.one_sided_derivatives(lo).1;
        if inner_left.map_or(true, |d| d.abs() > CONTINUITY_TOL) {
            points.push(lo);
        }
        let inner_right = base.one_sided_derivatives(hi).0;
        if inner_right.map_or(true, |d| d.abs() > CONTINUITY_TOL) {
            points.push(hi);
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        WeakDerivative {
            source: source.clone(),
            nondifferentiable_points: points,
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let w = &self.source.window;
        if !(x >= w.lo() && x <= w.hi()) {
            return 0.0;
        }
        if self.nondifferentiable_points.binary_search_by(|p| p.total_cmp(&x)).is_ok() {
            return 0.0;
        }
        self.source
            .base
            .piece_at(x)
            .and_then(|p| p.kind.derivative(x))
            .unwrap_or(0.0)
    }
}

impl ScalarFn for WeakDerivative {
    fn eval(&self, x: f64) -> f64 {
        self.value(x)
    }
}

/// `g = μ/σ* − δ_{σ*}/2`, the drift of the unit-diffusion reduction up to
/// composition with the Lamperti map.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftFunctional {
    pub mu: PiecewiseFunction,
    pub sigma_star: SigmaStar,
    pub weak: WeakDerivative,
}

impl DriftFunctional {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.mu.value(x) / self.sigma_star.value(x) - 0.5 * self.weak.value(x)
    }
}

impl ScalarFn for DriftFunctional {
    fn eval(&self, x: f64) -> f64 {
        self.value(x)
    }
}

pub fn build_sigma_star(sigma: &PiecewiseFunction, window: &LocalWindow) -> Result<SigmaStar> {
    SigmaStar::build(sigma, window)
}

pub fn weak_derivative(s: &SigmaStar) -> WeakDerivative {
    WeakDerivative::new(s)
}

pub fn drift_functional(
    mu: &PiecewiseFunction,
    s: &SigmaStar,
    d: &WeakDerivative,
) -> Result<DriftFunctional> {
    if d.source.window != s.window {
        return Err(Error::Validation(
            "weak derivative and sigma* use different windows".into(),
        ));
    }
    Ok(DriftFunctional {
        mu: mu.clone(),
        sigma_star: s.clone(),
        weak: d.clone(),
    })
}
