//! Half-return and full return maps on the switching plane.
//!
//! Two independent routes are available. [`ReturnMode::Numeric`] integrates
//! each smooth field until it comes back to `z = 0`. [`ReturnMode::SemiAnalytic`]
//! uses the structure of the families instead: the upper arc is the
//! parabola `z = y₀² − y²`, so it lands at `−y₀` after time `2y₀` while
//! `x` follows the scalar drift; the lower arc is a vertical translate of
//! the graph `G(y) = y² + ξ(y)` and lands where `G` takes its starting
//! value again. For a start at `y > 0` the radial return `w = φ²(y)` solves
//!
//! ```text
//! y² − w² − ξ(w) = 0
//! ```
//!
//! and at a fixed point its slope is `2y / (2y + ξ′(y))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{BumpSpec, PlaneDrift};
use crate::flow::{first_sigma_crossing, scalar_flow, IntegratorConfig};
use crate::psvf::{Psvf, SmoothField, State3};

/// Residual bound for accepting a point as a fixed point of `φ²`.
pub const FIXED_POINT_RESIDUAL: f64 = 1e-12;

/// A point `(x, y, 0)` of the switching plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub x: f64,
    pub y: f64,
}

impl SigmaPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        SigmaPoint { x, y }
    }

    pub fn lift(self) -> State3 {
        State3::new(self.x, self.y, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReturnMode {
    Numeric,
    SemiAnalytic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Fallback bracket is `[|y| / f, f·|y|]`.
    pub bracket_expansion: f64,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig { newton_tol: 1e-14, max_iter: 50, bracket_expansion: 2.0 }
    }
}

/// `G(y)` with `G′ = 2y + ξ′(y)` and `G(0) = 0`.
pub fn primitive_graph(bump: Option<&BumpSpec>, y: f64) -> f64 {
    y * y + bump.map_or(0.0, |b| b.eval(y))
}

/// `y² − w² − ξ(w)`; vanishes exactly when `w = φ²(y)`.
pub fn phi2_implicit_residual(bump: Option<&BumpSpec>, y: f64, w: f64) -> f64 {
    (y - w) * (y + w) - bump.map_or(0.0, |b| b.eval(w))
}

/// Slope of `φ²` at `y` given its image `w`: `2y / (2w + ξ′(w))`.
pub fn phi2_slope(bump: Option<&BumpSpec>, y: f64, w: f64) -> Result<f64> {
    let den = 2.0 * w + bump.map_or(0.0, |b| b.prime(w));
    if den.abs() < 1e-300 {
        return Err(Error::SingularDenominator { y });
    }
    Ok(2.0 * y / den)
}

/// Slope of `φ²` at a fixed point `y⋆`.
pub fn phi2_derivative(bump: Option<&BumpSpec>, y_star: f64) -> Result<f64> {
    if !(y_star > 0.0) {
        return Err(Error::InvalidInput(format!("fixed point must be positive, got {y_star}")));
    }
    let residual = phi2_implicit_residual(bump, y_star, y_star);
    if residual.abs() >= FIXED_POINT_RESIDUAL {
        return Err(Error::NotFixedPoint { y: y_star, residual });
    }
    phi2_slope(bump, y_star, y_star)
}

/// `ln φ²′(y⋆)` computed without cancellation for tiny `ξ′`.
pub fn phi2_log_derivative(bump: Option<&BumpSpec>, y_star: f64) -> f64 {
    let d = bump.map_or(0.0, |b| b.prime(y_star));
    -(d / (2.0 * y_star)).ln_1p()
}

/// Return maps of one piecewise field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnEngine {
    psvf: Psvf,
    mode: ReturnMode,
    cfg: IntegratorConfig,
    root: RootConfig,
}

impl ReturnEngine {
    pub fn new(psvf: Psvf, mode: ReturnMode, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        if mode == ReturnMode::SemiAnalytic && (psvf.upper.is_reversed() || psvf.lower.is_reversed()) {
            return Err(Error::InvalidParams("semi-analytic maps need forward-time fields".into()));
        }
        Ok(ReturnEngine { psvf, mode, cfg, root: RootConfig::default() })
    }

    pub fn numeric(psvf: Psvf) -> Result<Self> {
        Self::new(psvf, ReturnMode::Numeric, IntegratorConfig::default())
    }

    pub fn semi_analytic(psvf: Psvf) -> Result<Self> {
        Self::new(psvf, ReturnMode::SemiAnalytic, IntegratorConfig::default())
    }

    pub fn with_root_config(mut self, root: RootConfig) -> Self {
        self.root = root;
        self
    }

    /// Same field and settings, other route.
    pub fn with_mode(&self, mode: ReturnMode) -> Result<Self> {
        Self::new(self.psvf, mode, self.cfg).map(|e| e.with_root_config(self.root))
    }

    pub fn psvf(&self) -> &Psvf {
        &self.psvf
    }

    pub fn mode(&self) -> ReturnMode {
        self.mode
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn bump(&self) -> Option<&BumpSpec> {
        self.psvf.lower.bump()
    }

    pub fn drift(&self) -> Option<&PlaneDrift> {
        self.psvf.upper.drift()
    }

    fn numeric_hit(&self, w: &SmoothField, p: SigmaPoint) -> Result<SigmaPoint> {
        let hit = first_sigma_crossing(w, p.lift(), &self.cfg)?;
        Ok(SigmaPoint::new(hit.point.x, hit.point.y))
    }

    /// `x` after drifting for `time` under the upper field (negative time runs backwards).
    fn drift_x(&self, x: f64, time: f64) -> Result<f64> {
        match self.drift() {
            Some(d) if d.lambda != 0.0 => {
                if time >= 0.0 {
                    scalar_flow(d, x, time, &self.cfg)
                } else {
                    let back = PlaneDrift { lambda: -d.lambda, ..*d };
                    scalar_flow(&back, x, -time, &self.cfg)
                }
            }
            _ => Ok(x),
        }
    }

    /// Positive `w` with `G(w) = target`, by Newton from `guess` with a bisection fallback.
    fn solve_graph(&self, guess: f64, target: f64) -> Result<f64> {
        let bump = self.bump();
        let a = guess;
        // F(w) = G(w) − target written around the unperturbed root to avoid cancellation
        let root_sq = target.sqrt();
        let f = |w: f64| (w - root_sq) * (w + root_sq) + bump.map_or(0.0, |b| b.eval(w));
        let df = |w: f64| 2.0 * w + bump.map_or(0.0, |b| b.prime(w));
        let lo = a / self.root.bracket_expansion;
        let hi = a * self.root.bracket_expansion;

        let mut w = a;
        for _ in 0..self.root.max_iter {
            let d = df(w);
            if !(d > 0.0) {
                break;
            }
            let step = f(w) / d;
            let next = w - step;
            if !(next > lo && next < hi) {
                break;
            }
            w = next;
            if step.abs() <= self.root.newton_tol * w {
                return Ok(w);
            }
        }

        let (mut l, mut h) = (lo, hi);
        let (fl, fh) = (f(l), f(h));
        if fl == 0.0 {
            return Ok(l);
        }
        if fh == 0.0 {
            return Ok(h);
        }
        if fl.signum() == fh.signum() {
            return Err(Error::RootNotBracketed { y: a });
        }
        while h - l > self.root.newton_tol * a {
            let m = 0.5 * (l + h);
            let fm = f(m);
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fl.signum() {
                l = m;
            } else {
                h = m;
            }
            if m == l && m == h {
                break;
            }
        }
        Ok(0.5 * (l + h))
    }

    /// Positive half-return: the upper arc from `(x, y)` with `y > 0`.
    pub fn half_return_upper(&self, p: SigmaPoint) -> Result<SigmaPoint> {
        if !(p.y > 0.0) || !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::InvalidInput(format!("upper half-return needs y > 0, got {p:?}")));
        }
        match self.mode {
            ReturnMode::Numeric => self.numeric_hit(&self.psvf.upper, p),
            ReturnMode::SemiAnalytic => Ok(SigmaPoint::new(self.drift_x(p.x, 2.0 * p.y)?, -p.y)),
        }
    }

    /// Negative half-return: the lower arc from `(x, y)` with `y < 0`.
    pub fn half_return_lower(&self, p: SigmaPoint) -> Result<SigmaPoint> {
        if !(p.y < 0.0) || !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::InvalidInput(format!("lower half-return needs y < 0, got {p:?}")));
        }
        match self.mode {
            ReturnMode::Numeric => self.numeric_hit(&self.psvf.lower, p),
            ReturnMode::SemiAnalytic => {
                let target = primitive_graph(self.bump(), p.y);
                Ok(SigmaPoint::new(p.x, self.solve_graph(-p.y, target)?))
            }
        }
    }

    /// Full return `φ_Z = φ_Y ∘ φ_X` from `(x, y)` with `y > 0`.
    pub fn full_return(&self, p: SigmaPoint) -> Result<SigmaPoint> {
        self.half_return_lower(self.half_return_upper(p)?)
    }

    /// Radial component `φ²(y)`; it does not depend on `x`.
    pub fn phi2(&self, y: f64) -> Result<f64> {
        Ok(self.full_return(SigmaPoint::new(0.0, y))?.y)
    }

    /// `φ²(y) − y`. The semi-analytic route evaluates it as `−ξ(w)/(w + y)`
    /// so that its sign survives far below the resolution of `y` itself.
    pub fn displacement(&self, y: f64) -> Result<f64> {
        let w = self.phi2(y)?;
        match self.mode {
            ReturnMode::Numeric => Ok(w - y),
            ReturnMode::SemiAnalytic => Ok(-self.bump().map_or(0.0, |b| b.eval(w)) / (w + y)),
        }
    }

    /// `x`-component `φ¹(x; y)` of the full return.
    pub fn x_map(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.full_return(SigmaPoint::new(x, y))?.x)
    }

    pub fn phi2_implicit_residual(&self, y: f64, w: f64) -> f64 {
        phi2_implicit_residual(self.bump(), y, w)
    }

    pub fn phi2_derivative(&self, y_star: f64) -> Result<f64> {
        phi2_derivative(self.bump(), y_star)
    }

    /// Slope of `φ²` at an arbitrary `y > 0`.
    pub fn phi2_slope(&self, y: f64) -> Result<f64> {
        let w = self.phi2(y)?;
        phi2_slope(self.bump(), y, w)
    }

    /// The involution pairing the two ends of each upper arc.
    pub fn upper_involution(&self, p: SigmaPoint) -> Result<SigmaPoint> {
        if p.y > 0.0 {
            return self.half_return_upper(p);
        }
        if !(p.y < 0.0) {
            return Err(Error::InvalidInput(format!("fold line point {p:?} is its own image")));
        }
        match self.mode {
            ReturnMode::Numeric => self.numeric_hit(&self.psvf.upper.reversed(), p),
            ReturnMode::SemiAnalytic => Ok(SigmaPoint::new(self.drift_x(p.x, 2.0 * p.y)?, -p.y)),
        }
    }

    /// The involution pairing the two ends of each lower arc.
    pub fn lower_involution(&self, p: SigmaPoint) -> Result<SigmaPoint> {
        if p.y < 0.0 {
            return self.half_return_lower(p);
        }
        if !(p.y > 0.0) {
            return Err(Error::InvalidInput(format!("fold line point {p:?} is its own image")));
        }
        match self.mode {
            ReturnMode::Numeric => self.numeric_hit(&self.psvf.lower.reversed(), p),
            ReturnMode::SemiAnalytic => {
                // ξ vanishes on y ≤ 0, so the far end sits at −√G(y).
                let g = primitive_graph(self.bump(), p.y);
                if !(g > 0.0) {
                    return Err(Error::RootNotBracketed { y: p.y });
                }
                Ok(SigmaPoint::new(p.x, -g.sqrt()))
            }
        }
    }
}
