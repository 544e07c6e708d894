//! Concrete field families, the flat bump and its perturbation profiles,
//! and the first integrals of the unperturbed model.
//!
//! Every family shares the same skeleton. The upper field is
//! `(λ·Π(x − iμ), −1, 2y)` on `z ≥ 0` and the lower field is
//! `(0, 1, 2y + ξ′(y))` on `z ≤ 0`, where `Π` runs over `i = 0..L−1` and
//! `ξ` is one of the two bump profiles below. Switching both perturbations
//! off gives the symmetric normal form whose orbits are all closed.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::psvf::{Psvf, SmoothField, State3};

/// Flat bump: `0` for `y ≤ 0`, `exp(−1/y)` for `y > 0`.
pub fn bump_h(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        (-1.0 / y).exp()
    }
}

/// `(h, h′, h″)` at `y`. All three vanish together once `h` underflows.
fn bump_jet(y: f64) -> [f64; 3] {
    let h = bump_h(y);
    if h == 0.0 {
        return [0.0; 3];
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    [h, h * inv2, h * (1.0 - 2.0 * y) * inv2 * inv2]
}

/// Which perturbation profile the lower field carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rho {
    /// `ξ(y) = ε·h(y)·Π_{m=1..k}(mε − y)`: `k` isolated roots.
    #[serde(rename = "f")]
    Finite,
    /// `ξ(y) = −h(y)·sin(πε²/y)`: roots `ε²/j` accumulating at 0.
    #[serde(rename = "i")]
    Infinite,
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rho::Finite => "f",
            Rho::Infinite => "i",
        })
    }
}

impl FromStr for Rho {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f" | "finite" => Ok(Rho::Finite),
            "i" | "infinite" => Ok(Rho::Infinite),
            other => Err(Error::InvalidParams(format!("unknown rho '{other}' (expected f or i)"))),
        }
    }
}

/// Parameters of the bump profile `ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub rho: Rho,
    pub eps: f64,
    /// Number of roots for the finite profile; ignored otherwise.
    pub k: usize,
}

/// A root of `ξ` on `(0, ∞)` together with the closed-form slope there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiRoot {
    pub j: usize,
    pub root: f64,
    pub derivative: f64,
}

impl BumpSpec {
    pub fn finite(eps: f64, k: usize) -> Self {
        BumpSpec { rho: Rho::Finite, eps, k }
    }

    pub fn infinite(eps: f64) -> Self {
        BumpSpec { rho: Rho::Infinite, eps, k: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eps.is_finite() {
            return Err(Error::InvalidParams(format!("eps must be finite, got {}", self.eps)));
        }
        if self.rho == Rho::Finite && self.k < 1 {
            return Err(Error::InvalidParams("k must be at least 1 for the finite profile".into()));
        }
        Ok(())
    }

    /// `true` when `ξ ≡ 0`.
    pub fn is_trivial(&self) -> bool {
        self.eps == 0.0
    }

    /// `ξ(y)`.
    pub fn eval(&self, y: f64) -> f64 {
        xi_eval(self, y)
    }

    /// `ξ′(y)`.
    pub fn prime(&self, y: f64) -> f64 {
        xi_prime(self, y)
    }

    /// `(ξ, ξ′, ξ″)` at `y`, all from closed forms.
    pub fn jet(&self, y: f64) -> [f64; 3] {
        let [h, h1, h2] = bump_jet(y);
        if h == 0.0 || self.eps == 0.0 {
            return [0.0; 3];
        }
        match self.rho {
            Rho::Finite => {
                // Jet of Π_{m=1..k}(mε − y); each factor has slope −1.
                let (mut p, mut p1, mut p2) = (1.0, 0.0, 0.0);
                for m in 1..=self.k {
                    let a = m as f64 * self.eps - y;
                    p2 = p2 * a - 2.0 * p1;
                    p1 = p1 * a - p;
                    p *= a;
                }
                let e = self.eps;
                [e * h * p, e * (h1 * p + h * p1), e * (h2 * p + 2.0 * h1 * p1 + h * p2)]
            }
            Rho::Infinite => {
                let c0 = PI * self.eps * self.eps;
                let u = c0 / y;
                let (s, c) = u.sin_cos();
                let du = -c0 / (y * y);
                let ddu = 2.0 * c0 / (y * y * y);
                let s1 = c * du;
                let s2 = -s * du * du + c * ddu;
                [-h * s, -(h1 * s + h * s1), -(h2 * s + 2.0 * h1 * s1 + h * s2)]
            }
        }
    }

    /// Positive roots of `ξ` with their closed-form slopes, up to `j_max`.
    ///
    /// The finite profile has roots `jε` (`j ≤ k`) only for `ε > 0`; the
    /// infinite profile has roots `ε²/j` for every `ε ≠ 0`.
    pub fn roots(&self, j_max: usize) -> Vec<XiRoot> {
        xi_root_list(self, j_max)
    }

    /// Every root whose bump factor `h` is still representable in doubles.
    pub fn representable_roots(&self) -> Vec<XiRoot> {
        match self.rho {
            Rho::Finite => self.roots(self.k),
            Rho::Infinite => {
                let mut out = Vec::new();
                if self.eps == 0.0 {
                    return out;
                }
                for j in 1.. {
                    let r = infinite_root(self.eps, j);
                    if r.derivative == 0.0 {
                        break;
                    }
                    out.push(r);
                }
                out
            }
        }
    }

    /// The root index a point most plausibly belongs to.
    pub fn nearest_root_index(&self, y: f64) -> usize {
        let j = match self.rho {
            Rho::Finite => (y / self.eps).round(),
            Rho::Infinite => (self.eps * self.eps / y).round(),
        };
        j.max(1.0) as usize
    }
}

/// `ξ(y)` for the given profile; exactly 0 for `y ≤ 0` and under underflow.
pub fn xi_eval(spec: &BumpSpec, y: f64) -> f64 {
    let h = bump_h(y);
    if h == 0.0 || spec.eps == 0.0 {
        return 0.0;
    }
    match spec.rho {
        Rho::Finite => {
            let p: f64 = (1..=spec.k).map(|m| m as f64 * spec.eps - y).product();
            spec.eps * h * p
        }
        Rho::Infinite => -h * (PI * spec.eps * spec.eps / y).sin(),
    }
}

/// `ξ′(y)` in closed form; 0 for `y ≤ 0`.
pub fn xi_prime(spec: &BumpSpec, y: f64) -> f64 {
    spec.jet(y)[1]
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn finite_root(eps: f64, k: usize, j: usize) -> XiRoot {
    let root = j as f64 * eps;
    let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    let derivative = sign * eps.powi(k as i32) * bump_h(root) * factorial(k - j) * factorial(j - 1);
    XiRoot { j, root, derivative }
}

fn infinite_root(eps: f64, j: usize) -> XiRoot {
    let e2 = eps * eps;
    let root = e2 / j as f64;
    let sign = if j.is_multiple_of(2) { -1.0 } else { 1.0 };
    let jf = j as f64;
    let derivative = sign * (-PI * jf * jf / e2) * bump_h(root);
    XiRoot { j, root, derivative }
}

/// Positive roots of `ξ` and the closed-form slope at each.
///
/// For the finite profile `j_max` is clamped to `k`.
pub fn xi_root_list(spec: &BumpSpec, j_max: usize) -> Vec<XiRoot> {
    match spec.rho {
        Rho::Finite => {
            if spec.eps <= 0.0 {
                return Vec::new();
            }
            (1..=j_max.min(spec.k)).map(|j| finite_root(spec.eps, spec.k, j)).collect()
        }
        Rho::Infinite => {
            if spec.eps == 0.0 {
                return Vec::new();
            }
            (1..=j_max).map(|j| infinite_root(spec.eps, j)).collect()
        }
    }
}

/// `Π_{i=0..L−1}(x − iμ)` and its derivative in `x`.
pub fn product_poly(x: f64, mu: f64, planes: usize) -> (f64, f64) {
    let (mut p, mut dp) = (1.0, 0.0);
    for i in 0..planes {
        let a = x - i as f64 * mu;
        dp = dp * a + p;
        p *= a;
    }
    (p, dp)
}

/// The `x`-drift `λ·Π(x − iμ)` of the perturbed upper field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneDrift {
    pub lambda: f64,
    pub mu: f64,
    pub planes: usize,
}

impl PlaneDrift {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be positive, got {}", self.mu)));
        }
        if self.planes < 1 {
            return Err(Error::InvalidParams("L must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParams(format!("lambda must be finite, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn rate(&self, x: f64) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        self.lambda * product_poly(x, self.mu, self.planes).0
    }

    /// `λ·Π′(x)`.
    pub fn rate_slope(&self, x: f64) -> f64 {
        self.lambda * product_poly(x, self.mu, self.planes).1
    }

    /// Location `iμ` of plane `i`.
    pub fn plane(&self, i: usize) -> f64 {
        i as f64 * self.mu
    }
}

/// Full parameter set shared by every family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub lambda: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub planes: usize,
    pub eps: f64,
    pub k: usize,
    pub rho: Rho,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams { lambda: 0.5, mu: 0.3, planes: 2, eps: 0.2, k: 2, rho: Rho::Finite }
    }
}

impl FieldParams {
    pub fn drift(&self) -> PlaneDrift {
        PlaneDrift { lambda: self.lambda, mu: self.mu, planes: self.planes }
    }

    pub fn bump(&self) -> BumpSpec {
        BumpSpec { rho: self.rho, eps: self.eps, k: self.k }
    }
}

/// The four vector-field families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Unperturbed normal form: a continuum of nested cylinders of closed orbits.
    Z0,
    /// `x`-perturbation only: `L` invariant planes.
    Zl,
    /// Lower-field bump only: isolated invariant cylinders.
    Zrho,
    /// Both perturbations: limit cycles at plane/cylinder intersections.
    Zkl,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Z0 => "z0",
            Family::Zl => "zl",
            Family::Zrho => "zrho",
            Family::Zkl => "zkl",
        }
    }

    pub fn has_planes(&self) -> bool {
        matches!(self, Family::Zl | Family::Zkl)
    }

    pub fn has_bump(&self) -> bool {
        matches!(self, Family::Zrho | Family::Zkl)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z0" => Ok(Family::Z0),
            "zl" | "z_l" => Ok(Family::Zl),
            "zrho" | "z_rho" => Ok(Family::Zrho),
            "zkl" | "z_kl" => Ok(Family::Zkl),
            other => Err(Error::InvalidParams(format!("unknown family '{other}' (expected z0, zl, zrho or zkl)"))),
        }
    }
}

/// Builds the piecewise field of `family` from `params`.
///
/// Parameters a family does not use are ignored; `z0` ignores all of them.
pub fn make_family(family: Family, params: &FieldParams) -> Result<Psvf> {
    let upper = if family.has_planes() {
        let drift = params.drift();
        drift.validate()?;
        SmoothField::x_planes(drift)
    } else {
        SmoothField::x0()
    };
    let lower = if family.has_bump() {
        let bump = params.bump();
        bump.validate()?;
        SmoothField::y_bump(bump)
    } else {
        SmoothField::y0()
    };
    Psvf::new(upper, lower)
}

/// First integrals of the unperturbed fields and the piecewise pair gluing them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstIntegral {
    H1,
    H2,
    L1,
    L2,
    M1,
    M2,
}

impl FirstIntegral {
    pub fn eval(&self, p: &State3) -> f64 {
        first_integral_eval(*self, p)
    }
}

pub fn first_integral_eval(f: FirstIntegral, p: &State3) -> f64 {
    match f {
        FirstIntegral::H1 | FirstIntegral::L1 | FirstIntegral::M1 => p.x,
        FirstIntegral::H2 => p.z + p.y * p.y,
        FirstIntegral::L2 => p.z - p.y * p.y,
        FirstIntegral::M2 => {
            if p.z >= 0.0 {
                p.z + p.y * p.y
            } else {
                p.z - p.y * p.y
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, y: f64, step: f64) -> f64 {
        (f(y + step) - f(y - step)) / (2.0 * step)
    }

    #[test]
    fn bump_values() {
        assert_eq!(bump_h(-1.0), 0.0);
        assert_eq!(bump_h(0.0), 0.0);
        assert!((bump_h(0.5) - 0.1353352832366127).abs() < 1e-16);
    }

    #[test]
    fn xi_at_roots_and_off_roots() {
        let f = BumpSpec::finite(0.1, 2);
        assert_eq!(xi_eval(&f, 0.1), 0.0);
        // term by term: 0.1 · e^{−20} · (0.1 − 0.05)(0.2 − 0.05)
        let expected = 0.1 * (-20.0f64).exp() * 0.05 * 0.15;
        assert!((xi_eval(&f, 0.05) - expected).abs() <= 1e-15 * expected.abs());
        assert!((expected - 7.5e-4 * (-20.0f64).exp()).abs() < 1e-20);

        let i = BumpSpec::infinite(0.5);
        assert!(xi_eval(&i, 0.25).abs() < 1e-16);
        assert_eq!(xi_eval(&i, 0.0), 0.0);
        assert_eq!(xi_eval(&i, -3.0), 0.0);
    }

    #[test]
    fn xi_prime_matches_lemma_values() {
        let f = BumpSpec::finite(0.1, 2);
        let d1 = xi_prime(&f, 0.1);
        let expected1 = -0.01 * (-10.0f64).exp();
        assert!((d1 - expected1).abs() < 1e-12 * expected1.abs());
        assert!((d1 + 4.54e-7).abs() < 1e-9);
        let fd = central(|y| xi_eval(&f, y), 0.1, 1e-6 * 0.1);
        assert!((fd - d1).abs() < 1e-5 * d1.abs());

        let d2 = xi_prime(&f, 0.2);
        assert!(d2 > 0.0);
        assert!((d2 - 0.01 * (-5.0f64).exp()).abs() < 1e-15);
        assert!((d2 - 6.738e-5).abs() < 1e-8);

        let i = BumpSpec::infinite(0.5);
        let di = xi_prime(&i, 0.25);
        let expected = -4.0 * PI * (-4.0f64).exp();
        assert!((di - expected).abs() < 1e-12);
        assert!((di + 0.2301).abs() < 1e-4);
        let fd = central(|y| xi_eval(&i, y), 0.25, 1e-7);
        assert!((fd - di).abs() < 1e-6 * di.abs());
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        for spec in [BumpSpec::finite(0.2, 3), BumpSpec::infinite(0.5)] {
            for &y in &[0.07, 0.13, 0.3, 0.55, 0.9] {
                let d2 = spec.jet(y)[2];
                let fd = central(|t| xi_prime(&spec, t), y, 1e-6 * y);
                assert!((fd - d2).abs() <= 1e-5 * d2.abs().max(1e-9), "{spec:?} y={y}: {fd} vs {d2}");
            }
            // flat at the origin
            assert_eq!(spec.jet(0.0), [0.0; 3]);
        }
    }

    #[test]
    fn root_lists() {
        let roots: Vec<f64> = xi_root_list(&BumpSpec::finite(0.2, 3), 3).iter().map(|r| r.root).collect();
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip([0.2, 0.4, 0.6]) {
            assert!((r - e).abs() < 1e-15);
        }
        assert!(xi_root_list(&BumpSpec::finite(-0.2, 3), 3).is_empty());
        assert!(xi_root_list(&BumpSpec::finite(0.2, 3), 9).len() == 3);

        let inf = xi_root_list(&BumpSpec::infinite(0.5), 3);
        let expected = [0.25, 0.125, 0.25 / 3.0];
        for (r, e) in inf.iter().zip(expected) {
            assert!((r.root - e).abs() < 1e-16);
        }
        // j = 1 slope: −4π e^{−4}
        assert!((inf[0].derivative + 4.0 * PI * (-4.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn root_list_slopes_match_closed_form_derivative() {
        for spec in [BumpSpec::finite(0.2, 3), BumpSpec::finite(0.15, 5), BumpSpec::infinite(0.5)] {
            for r in spec.roots(5) {
                assert!(xi_eval(&spec, r.root).abs() < 1e-15);
                let d = xi_prime(&spec, r.root);
                assert!((d - r.derivative).abs() <= 1e-9 * r.derivative.abs(), "{spec:?} {r:?} {d}");
                let even = r.j % 2 == 0;
                match spec.rho {
                    Rho::Finite => assert_eq!(r.derivative > 0.0, even),
                    Rho::Infinite => assert_eq!(r.derivative > 0.0, even),
                }
            }
        }
    }

    #[test]
    fn representable_roots_stop_at_underflow() {
        let roots = BumpSpec::infinite(0.5).representable_roots();
        let last = roots.last().unwrap();
        assert!(bump_h(last.root) > 0.0);
        assert_eq!(bump_h(0.25 / (last.j + 1) as f64), 0.0);
        assert!(last.root > 1.0 / 746.0);
    }

    #[test]
    fn product_polynomial() {
        assert_eq!(product_poly(0.0, 0.7, 3).0, 0.0);
        let (v, _) = product_poly(0.15, 0.3, 2);
        assert!((v + 0.0225).abs() < 1e-16);
        for planes in 1..=6 {
            for i in 0..planes {
                let (_, d) = product_poly(i as f64 * 0.3, 0.3, planes);
                // sign of Π′ at the i-th plane is (−1)^(L−1−i)
                let expected_positive = (planes - 1 - i) % 2 == 0;
                assert_eq!(d > 0.0, expected_positive, "L={planes} i={i}");
            }
        }
        // L = 2: Π′(x) = 2x − μ
        assert!((product_poly(0.3, 0.3, 2).1 - 0.3).abs() < 1e-15);
        assert!((product_poly(0.0, 0.3, 2).1 + 0.3).abs() < 1e-15);
    }

    #[test]
    fn families() {
        let z0 = make_family(Family::Z0, &FieldParams::default()).unwrap();
        assert_eq!(z0.upper.eval(&State3::new(1.0, 2.0, 3.0)), [0.0, -1.0, 4.0]);

        let p = FieldParams { lambda: 0.5, mu: 0.3, planes: 2, eps: 0.2, rho: Rho::Finite, k: 2 };
        let zkl = make_family(Family::Zkl, &p).unwrap();
        assert_eq!(zkl.upper.eval(&State3::new(0.3, 0.7, 0.2))[0], 0.0);

        let flat = FieldParams { eps: 0.0, ..p };
        let zr = make_family(Family::Zrho, &flat).unwrap();
        for &y in &[-1.0, 0.1, 0.5] {
            assert_eq!(zr.lower.eval(&State3::new(0.0, y, -1.0))[2], 2.0 * y);
        }

        let bad_mu = FieldParams { mu: 0.0, ..p };
        assert!(matches!(make_family(Family::Zl, &bad_mu), Err(Error::InvalidParams(_))));
        let bad_k = FieldParams { k: 0, ..p };
        assert!(matches!(make_family(Family::Zkl, &bad_k), Err(Error::InvalidParams(_))));
        // z0 ignores the perturbation parameters entirely
        assert!(make_family(Family::Z0, &bad_mu).is_ok());
    }

    #[test]
    fn first_integrals() {
        assert_eq!(first_integral_eval(FirstIntegral::H2, &State3::new(0.0, 2.0, 1.0)), 5.0);
        assert_eq!(first_integral_eval(FirstIntegral::M2, &State3::new(0.0, 2.0, -1.0)), -5.0);
        assert_eq!(first_integral_eval(FirstIntegral::M1, &State3::new(3.7, 9.0, -2.0)), 3.7);
        // the two pieces of M2 disagree on the switching plane
        let on = State3::new(0.0, 1.3, 0.0);
        assert_eq!(FirstIntegral::H2.eval(&on), 1.3 * 1.3);
        assert_eq!(FirstIntegral::L2.eval(&on), -1.3 * 1.3);
    }

    #[test]
    fn parse_tags() {
        assert_eq!("zkl".parse::<Family>().unwrap(), Family::Zkl);
        assert_eq!("i".parse::<Rho>().unwrap(), Rho::Infinite);
        assert!("zz".parse::<Family>().is_err());
    }
}
