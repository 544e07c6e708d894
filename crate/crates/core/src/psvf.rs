//! States, smooth fields, the piecewise pair glued along `z = 0`, and
//! classification of switching-plane points by Lie derivatives of `f = z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{BumpSpec, PlaneDrift};

/// Absolute tolerance below which a Lie derivative counts as vanishing.
pub const FOLD_TOL: f64 = 1e-10;

/// Distance from `z = 0` still treated as lying on the switching plane.
pub const SIGMA_TOL: f64 = 1e-12;

pub type Vec3 = [f64; 3];

/// A point of phase space. The switching function is `f(x, y, z) = z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        State3 { x, y, z }
    }

    pub fn from_array([x, y, z]: Vec3) -> Self {
        State3 { x, y, z }
    }

    pub fn to_array(self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn on_sigma(&self) -> bool {
        self.z.abs() <= SIGMA_TOL
    }
}

impl std::ops::Neg for State3 {
    type Output = State3;

    fn neg(self) -> State3 {
        State3::new(-self.x, -self.y, -self.z)
    }
}

/// Closed half-space a smooth field is defined on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfSpace {
    Upper,
    Lower,
}

impl HalfSpace {
    /// `+1` above the plane, `−1` below.
    pub fn sign(self) -> f64 {
        match self {
            HalfSpace::Upper => 1.0,
            HalfSpace::Lower => -1.0,
        }
    }
}

/// The concrete smooth families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldFamily {
    /// `(0, −1, 2y)`
    X0,
    /// `(0, 1, 2y)`
    Y0,
    /// `(λ·Π(x − iμ), −1, 2y)`
    XL(PlaneDrift),
    /// `(0, 1, 2y + ξ′(y))`
    YRhoEps(BumpSpec),
}

/// One smooth field, optionally with time reversed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothField {
    family: FieldFamily,
    reversed: bool,
}

impl SmoothField {
    pub fn new(family: FieldFamily) -> Self {
        SmoothField { family, reversed: false }
    }

    pub fn x0() -> Self {
        Self::new(FieldFamily::X0)
    }

    pub fn y0() -> Self {
        Self::new(FieldFamily::Y0)
    }

    pub fn x_planes(drift: PlaneDrift) -> Self {
        Self::new(FieldFamily::XL(drift))
    }

    pub fn y_bump(bump: BumpSpec) -> Self {
        Self::new(FieldFamily::YRhoEps(bump))
    }

    pub fn family(&self) -> &FieldFamily {
        &self.family
    }

    /// Same orbits traversed backwards.
    pub fn reversed(&self) -> Self {
        SmoothField { family: self.family, reversed: !self.reversed }
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn half_space(&self) -> HalfSpace {
        match self.family {
            FieldFamily::X0 | FieldFamily::XL(_) => HalfSpace::Upper,
            FieldFamily::Y0 | FieldFamily::YRhoEps(_) => HalfSpace::Lower,
        }
    }

    pub fn drift(&self) -> Option<&PlaneDrift> {
        match &self.family {
            FieldFamily::XL(d) => Some(d),
            _ => None,
        }
    }

    pub fn bump(&self) -> Option<&BumpSpec> {
        match &self.family {
            FieldFamily::YRhoEps(b) => Some(b),
            _ => None,
        }
    }

    fn time_sign(&self) -> f64 {
        if self.reversed {
            -1.0
        } else {
            1.0
        }
    }

    /// `ẏ` before time reversal: −1 above, +1 below.
    fn y_speed(&self) -> f64 {
        -self.half_space().sign()
    }

    /// `(ż, ∂ż/∂y)`; the vertical component depends on `y` alone.
    fn vertical(&self, y: f64) -> (f64, f64) {
        match &self.family {
            FieldFamily::YRhoEps(b) => {
                let [_, d1, d2] = b.jet(y);
                (2.0 * y + d1, 2.0 + d2)
            }
            _ => (2.0 * y, 2.0),
        }
    }

    pub fn eval(&self, p: &State3) -> Vec3 {
        let dx = match &self.family {
            FieldFamily::XL(d) => d.rate(p.x),
            _ => 0.0,
        };
        let s = self.time_sign();
        [s * dx, s * self.y_speed(), s * self.vertical(p.y).0]
    }
}

/// `W.f(p) = ⟨∇f, W⟩`, the vertical component of `W` at `p`.
pub fn lie_derivative(w: &SmoothField, p: &State3) -> f64 {
    w.eval(p)[2]
}

/// `W².f(p)`, the derivative of `W.f` along `W`.
///
/// `W.f` depends on `y` only, so this is `∂_y(W.f) · ẏ`.
pub fn second_lie_derivative(w: &SmoothField, p: &State3) -> f64 {
    let (_, slope) = w.vertical(p.y);
    // reversal flips both factors
    slope * w.y_speed()
}

/// A piecewise-smooth field: `upper` on `z ≥ 0`, `lower` on `z ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psvf {
    pub upper: SmoothField,
    pub lower: SmoothField,
}

/// Value of a piecewise field; multi-valued on the switching plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsvfValue {
    Upper(Vec3),
    Lower(Vec3),
    Both { upper: Vec3, lower: Vec3 },
}

impl Psvf {
    pub fn new(upper: SmoothField, lower: SmoothField) -> Result<Self> {
        if upper.half_space() != HalfSpace::Upper || lower.half_space() != HalfSpace::Lower {
            return Err(Error::InvalidParams("upper field must live on z >= 0 and lower field on z <= 0".into()));
        }
        Ok(Psvf { upper, lower })
    }

    pub fn eval(&self, p: &State3) -> PsvfValue {
        eval_psvf(self, p)
    }

    pub fn classify(&self, p: &State3) -> Result<SigmaClass> {
        classify_sigma_point(self, p, FOLD_TOL)
    }
}

/// Dispatches on the side of the switching plane.
pub fn eval_psvf(z: &Psvf, p: &State3) -> PsvfValue {
    if p.on_sigma() {
        PsvfValue::Both { upper: z.upper.eval(p), lower: z.lower.eval(p) }
    } else if p.z > 0.0 {
        PsvfValue::Upper(z.upper.eval(p))
    } else {
        PsvfValue::Lower(z.lower.eval(p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaKind {
    CrossingUp,
    CrossingDown,
    Sliding,
    Escaping,
    FoldUpper,
    FoldLower,
    TwoFold,
}

/// Visibility of a fold. A visible tangency arc lies in the field's own
/// half-space; an invisible one lies on the other side, so nearby orbits
/// leave the switching plane and come back to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Visible,
    Invisible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaClass {
    pub kind: SigmaKind,
    pub upper: Option<Visibility>,
    pub lower: Option<Visibility>,
}

fn fold_visibility(w: &SmoothField, p: &State3, tol: f64) -> Result<Visibility> {
    let curvature = second_lie_derivative(w, p);
    if curvature.abs() < tol {
        return Err(Error::DegenerateTangency { point: p.to_array() });
    }
    // z(t) ≈ ½·W².f·t² near the tangency.
    if curvature * w.half_space().sign() > 0.0 {
        Ok(Visibility::Visible)
    } else {
        Ok(Visibility::Invisible)
    }
}

/// Classifies a switching-plane point by the signs of `X.f`, `Y.f` and,
/// at tangencies, `X².f`, `Y².f`.
pub fn classify_sigma_point(z: &Psvf, p: &State3, tol: f64) -> Result<SigmaClass> {
    if !p.on_sigma() {
        return Err(Error::NotOnSigma(p.to_array()));
    }
    let xf = lie_derivative(&z.upper, p);
    let yf = lie_derivative(&z.lower, p);
    let upper_fold = xf.abs() < tol;
    let lower_fold = yf.abs() < tol;
    let upper = if upper_fold { Some(fold_visibility(&z.upper, p, tol)?) } else { None };
    let lower = if lower_fold { Some(fold_visibility(&z.lower, p, tol)?) } else { None };
    let kind = match (upper_fold, lower_fold) {
        (true, true) => SigmaKind::TwoFold,
        (true, false) => SigmaKind::FoldUpper,
        (false, true) => SigmaKind::FoldLower,
        (false, false) if xf * yf > 0.0 => {
            if xf > 0.0 {
                SigmaKind::CrossingUp
            } else {
                SigmaKind::CrossingDown
            }
        }
        (false, false) if xf < 0.0 => SigmaKind::Sliding,
        (false, false) => SigmaKind::Escaping,
    };
    Ok(SigmaClass { kind, upper, lower })
}
