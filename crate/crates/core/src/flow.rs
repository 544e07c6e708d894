//! Adaptive integration of one smooth field, with detection of the next
//! arrival at the switching plane `z = 0`.
//!
//! The stepper is Dormand–Prince 5(4) with the usual mixed
//! absolute/relative error norm. Events are bracketed by accepted steps and
//! then polished by re-taking a single step of shorter length from the
//! bracket's left end, alternating Illinois secant updates with bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::PlaneDrift;
use crate::psvf::{lie_derivative, HalfSpace, SmoothField, State3, FOLD_TOL};

/// Smallest step the controller may take before giving up.
const MIN_STEP: f64 = 1e-14;

/// Fixed advance taken from a tangency start before monitoring `z`.
pub const FOLD_ESCAPE_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub event_tol: f64,
    pub max_flight_time: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, max_step: 0.01, event_tol: 1e-12, max_flight_time: 100.0 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rel_tol, self.abs_tol, self.max_step, self.event_tol, self.max_flight_time];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(format!("integrator settings must be positive: {self:?}")));
        }
        if self.event_tol > 10.0 * self.abs_tol {
            return Err(Error::InvalidParams(format!(
                "event_tol {} exceeds 10 x abs_tol {}",
                self.event_tol, self.abs_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: State3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    FromAbove,
    FromBelow,
}

/// Arrival at the switching plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaHit {
    pub point: State3,
    pub time: f64,
    pub side: Side,
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let s: f64 = terms.iter().map(|(c, k)| c * k[i]).sum();
        *o += h * s;
    }
    out
}

struct StepResult<const N: usize> {
    y: [f64; N],
    err: [f64; N],
    k7: [f64; N],
}

fn dopri_step<const N: usize, F>(f: &F, y: &[f64; N], k1: &[f64; N], h: f64) -> StepResult<N>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let k2 = f(&combine(y, h, &[(A21, k1)]));
    let k3 = f(&combine(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(&combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(&combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(&combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y5 = combine(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(&y5);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    StepResult { y: y5, err, k7 }
}

/// Left end of an accepted step, kept so events can be polished inside it.
#[derive(Clone, Copy)]
struct StepStart<const N: usize> {
    t: f64,
    y: [f64; N],
    k1: [f64; N],
}

struct Stepper<'a, const N: usize, F> {
    f: &'a F,
    cfg: &'a IntegratorConfig,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
}

impl<'a, const N: usize, F> Stepper<'a, N, F>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    fn new(f: &'a F, cfg: &'a IntegratorConfig, y0: [f64; N]) -> Self {
        let k1 = f(&y0);
        Stepper { f, cfg, t: 0.0, y: y0, k1, h: cfg.max_step.min(1e-3) }
    }

    fn error_norm(&self, y_new: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let scale = self.cfg.abs_tol + self.cfg.rel_tol * self.y[i].abs().max(y_new[i].abs());
            acc += (err[i] / scale).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    /// Takes one accepted step no longer than `limit`.
    fn advance(&mut self, limit: f64) -> Result<StepStart<N>> {
        loop {
            let h = self.h.min(self.cfg.max_step).min(limit);
            let trial = dopri_step(self.f, &self.y, &self.k1, h);
            let norm = self.error_norm(&trial.y, &trial.err);
            if !norm.is_finite() || trial.y.iter().any(|v| !v.is_finite()) {
                self.h = h * 0.2;
            } else if norm <= 1.0 {
                let start = StepStart { t: self.t, y: self.y, k1: self.k1 };
                self.t += h;
                self.y = trial.y;
                self.k1 = trial.k7;
                let grow = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                // Do not let a short final step shrink the controller's guess.
                if h >= self.h.min(self.cfg.max_step) * 0.999 || grow < 1.0 {
                    self.h = h * grow;
                }
                return Ok(start);
            } else {
                self.h = h * (0.9 * norm.powf(-0.2)).max(0.2);
            }
            if self.h < MIN_STEP {
                return Err(Error::StepFailure { time: self.t, step: self.h });
            }
        }
    }

    /// State a distance `tau` into the step that began at `start`.
    fn substep(&self, start: &StepStart<N>, tau: f64) -> [f64; N] {
        if tau == 0.0 {
            return start.y;
        }
        dopri_step(self.f, &start.y, &start.k1, tau).y
    }
}

fn field_fn(w: &SmoothField) -> impl Fn(&[f64; 3]) -> [f64; 3] + '_ {
    move |y: &[f64; 3]| w.eval(&State3::from_array(*y))
}

/// Samples the flow of `w` from `p0` over `[0, t_end]` at every accepted step.
///
/// Negative `t_end` integrates the time-reversed field and reports negative times.
pub fn integrate(w: &SmoothField, p0: State3, t_end: f64, cfg: &IntegratorConfig) -> Result<Vec<Sample>> {
    if !t_end.is_finite() || !p0.is_finite() {
        return Err(Error::InvalidInput(format!("integrate needs finite inputs, got T={t_end} p0={p0:?}")));
    }
    if t_end < 0.0 {
        let back = integrate(&w.reversed(), p0, -t_end, cfg)?;
        return Ok(back.into_iter().map(|s| Sample { t: -s.t, state: s.state }).collect());
    }
    let f = field_fn(w);
    let mut stepper = Stepper::new(&f, cfg, p0.to_array());
    let mut out = vec![Sample { t: 0.0, state: p0 }];
    while stepper.t < t_end {
        let remaining = t_end - stepper.t;
        if remaining <= 4.0 * f64::EPSILON * t_end {
            break;
        }
        stepper.advance(remaining)?;
        out.push(Sample { t: stepper.t, state: State3::from_array(stepper.y) });
    }
    if let Some(last) = out.last_mut() {
        last.t = t_end;
    }
    Ok(out)
}

/// An arc of one field from its start to the switching plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Arc {
    pub samples: Vec<Sample>,
    pub hit: SigmaHit,
}

/// Polishes a sign change of `g` on `(0, h]`, where `g > 0` just right of 0
/// and `g(h) ≤ 0`. Returns the parameter with the smallest `|g|` found.
fn refine_crossing(g: impl Fn(f64) -> f64, g0: f64, h: f64, tol: f64) -> f64 {
    let (mut a, mut fa) = (0.0, g0);
    let (mut b, mut fb) = (h, g(h));
    if fb == 0.0 {
        return b;
    }
    let mut best = (b, fb.abs());
    let mut retained = 0i32;
    for _ in 0..200 {
        let secant = if fa > 0.0 { b - fb * (b - a) / (fb - fa) } else { f64::NAN };
        let c = if secant > a && secant < b { secant } else { 0.5 * (a + b) };
        let fc = g(c);
        if fc.abs() < best.1 {
            best = (c, fc.abs());
        }
        if fc.abs() <= tol || fc == 0.0 {
            return c;
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if retained == 1 {
                fb *= 0.5;
            }
            retained = 1;
        } else {
            b = c;
            fb = fc;
            if retained == -1 {
                fa *= 0.5;
            }
            retained = -1;
        }
        if b - a <= 4.0 * f64::EPSILON * b.max(1e-300) {
            break;
        }
    }
    best.0
}

/// Integrates `w` from `p0` until it reaches `z = 0`, recording samples.
///
/// `p0` must lie in the field's half-space. Starts on the plane need the
/// field to point into that half-space, or a tangency whose arc enters it;
/// tangency starts advance by [`FOLD_ESCAPE_STEP`] before monitoring.
pub fn flow_to_sigma(w: &SmoothField, p0: State3, cfg: &IntegratorConfig) -> Result<Arc> {
    if !p0.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite start {p0:?}")));
    }
    let side = w.half_space();
    let s = side.sign();
    let f = field_fn(w);
    let mut stepper = Stepper::new(&f, cfg, p0.to_array());
    let mut samples = vec![Sample { t: 0.0, state: p0 }];

    if s * p0.z < -cfg.event_tol {
        return Err(Error::InvalidInput(format!("start {p0:?} is outside the field's half-space")));
    }
    if s * p0.z <= cfg.event_tol {
        let wf = s * lie_derivative(w, &p0);
        if wf < -FOLD_TOL {
            return Err(Error::InvalidInput(format!("field leaves its half-space at {p0:?}")));
        }
        if wf <= FOLD_TOL {
            stepper.advance(FOLD_ESCAPE_STEP)?;
            if s * stepper.y[2] <= 0.0 {
                return Err(Error::InvalidInput(format!("tangency at {p0:?} does not enter the field's half-space")));
            }
            samples.push(Sample { t: stepper.t, state: State3::from_array(stepper.y) });
        }
    }

    let refine_tol = cfg.event_tol * 1e-3;
    loop {
        if stepper.t >= cfg.max_flight_time {
            return Err(Error::NoReturn { start: p0.to_array(), max_time: cfg.max_flight_time });
        }
        let start = stepper.advance(cfg.max_flight_time - stepper.t)?;
        if s * stepper.y[2] > 0.0 {
            samples.push(Sample { t: stepper.t, state: State3::from_array(stepper.y) });
            continue;
        }
        let h = stepper.t - start.t;
        let g0 = s * start.y[2];
        let tau = refine_crossing(|tau| s * stepper.substep(&start, tau)[2], g0, h, refine_tol);
        let point = State3::from_array(stepper.substep(&start, tau));
        let hit = SigmaHit {
            point,
            time: start.t + tau,
            side: match side {
                HalfSpace::Upper => Side::FromAbove,
                HalfSpace::Lower => Side::FromBelow,
            },
        };
        samples.push(Sample { t: hit.time, state: point });
        return Ok(Arc { samples, hit });
    }
}

/// First return of `w` to the switching plane from a point on it.
pub fn first_sigma_crossing(w: &SmoothField, p0: State3, cfg: &IntegratorConfig) -> Result<SigmaHit> {
    if p0.z.abs() > cfg.event_tol {
        return Err(Error::NotOnSigma(p0.to_array()));
    }
    flow_to_sigma(w, p0, cfg).map(|arc| arc.hit)
}

/// Value at time `t_end` of `ẋ = λ·Π(x − iμ)` started at `x0`.
pub fn scalar_flow(drift: &PlaneDrift, x0: f64, t_end: f64, cfg: &IntegratorConfig) -> Result<f64> {
    if !(t_end >= 0.0) || !t_end.is_finite() || !x0.is_finite() {
        return Err(Error::InvalidInput(format!("scalar flow needs finite T >= 0, got {t_end}")));
    }
    let bound = 10.0 * drift.planes as f64 * drift.mu;
    if x0.abs() > bound {
        return Err(Error::Blowup { value: x0.abs(), bound });
    }
    if t_end == 0.0 || drift.lambda == 0.0 || drift.rate(x0) == 0.0 {
        return Ok(x0);
    }
    let f = |x: &[f64; 1]| [drift.rate(x[0])];
    let mut stepper = Stepper::new(&f, cfg, [x0]);
    while stepper.t < t_end {
        let remaining = t_end - stepper.t;
        if remaining <= 4.0 * f64::EPSILON * t_end {
            break;
        }
        stepper.advance(remaining)?;
        if stepper.y[0].abs() > bound {
            return Err(Error::Blowup { value: stepper.y[0].abs(), bound });
        }
    }
    Ok(stepper.y[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::BumpSpec;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn zero_time_is_identity() {
        let p = State3::new(0.3, -0.2, 0.1);
        let s = integrate(&SmoothField::x0(), p, 0.0, &cfg()).unwrap();
        assert_eq!(s, vec![Sample { t: 0.0, state: p }]);
    }

    #[test]
    fn unperturbed_arcs_match_parametrizations() {
        let (x0, y0) = (0.7, 0.45);
        for s in integrate(&SmoothField::x0(), State3::new(x0, y0, 0.0), 2.0, &cfg()).unwrap() {
            let t = s.t;
            let e = [x0, -t + y0, -t * t + 2.0 * t * y0];
            let d = (s.state.x - e[0]).abs().max((s.state.y - e[1]).abs()).max((s.state.z - e[2]).abs());
            assert!(d < 1e-9, "t={t} d={d}");
        }
        let (x1, y1) = (-0.2, -0.8);
        for s in integrate(&SmoothField::y0(), State3::new(x1, y1, 0.0), 2.0, &cfg()).unwrap() {
            let t = s.t;
            let e = [x1, t + y1, t * t + 2.0 * t * y1];
            let d = (s.state.x - e[0]).abs().max((s.state.y - e[1]).abs()).max((s.state.z - e[2]).abs());
            assert!(d < 1e-9, "t={t} d={d}");
        }
    }

    #[test]
    fn backward_integration_retraces() {
        let p = State3::new(0.1, 0.4, 0.05);
        let fwd = integrate(&SmoothField::x0(), p, 1.3, &cfg()).unwrap();
        let end = fwd.last().unwrap().state;
        let back = integrate(&SmoothField::x0(), end, -1.3, &cfg()).unwrap();
        let last = back.last().unwrap();
        assert_eq!(last.t, -1.3);
        assert!((last.state.y - p.y).abs() < 1e-12 && (last.state.z - p.z).abs() < 1e-12);
    }

    #[test]
    fn upper_and_lower_half_returns() {
        let hit = first_sigma_crossing(&SmoothField::x0(), State3::new(0.0, 0.5, 0.0), &cfg()).unwrap();
        assert!((hit.time - 1.0).abs() < 1e-10);
        assert!((hit.point.y + 0.5).abs() < 1e-10 && hit.point.x == 0.0);
        assert_eq!(hit.side, Side::FromAbove);
        assert!(hit.point.z.abs() <= cfg().event_tol);

        let hit = first_sigma_crossing(&SmoothField::y0(), State3::new(0.0, -0.5, 0.0), &cfg()).unwrap();
        assert!((hit.time - 1.0).abs() < 1e-10);
        assert!((hit.point.y - 0.5).abs() < 1e-10);
        assert_eq!(hit.side, Side::FromBelow);
    }

    #[test]
    fn bump_root_return_is_symmetric() {
        // y = 0.2 is a root of ξ, so the graph y² + ξ(y) takes the same value at ±0.2.
        let w = SmoothField::y_bump(BumpSpec::finite(0.2, 3));
        let hit = first_sigma_crossing(&w, State3::new(0.0, -0.2, 0.0), &cfg()).unwrap();
        assert!((hit.point.y - 0.2).abs() < 1e-8, "{hit:?}");
    }

    #[test]
    fn invalid_starts() {
        let c = cfg();
        // X₀ points down at y < 0, out of its own half-space.
        assert!(matches!(
            first_sigma_crossing(&SmoothField::x0(), State3::new(0.0, -0.5, 0.0), &c),
            Err(Error::InvalidInput(_))
        ));
        // invisible tangency of X₀: the arc dips below the plane
        assert!(matches!(
            first_sigma_crossing(&SmoothField::x0(), State3::new(0.0, 0.0, 0.0), &c),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            first_sigma_crossing(&SmoothField::x0(), State3::new(0.0, 0.5, 0.1), &c),
            Err(Error::NotOnSigma(_))
        ));
    }

    #[test]
    fn reversed_field_retraces_arcs() {
        // Reversal keeps the tangency invisible.
        let w = SmoothField::x0().reversed();
        let short = IntegratorConfig { max_flight_time: 3.0, ..cfg() };
        let r = first_sigma_crossing(&w, State3::new(0.0, 0.0, 0.0), &short);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        // reversed X₀ from (0, -0.5, 0) retraces the arc back to y = +0.5
        let hit = first_sigma_crossing(&w, State3::new(0.0, -0.5, 0.0), &short).unwrap();
        assert!((hit.point.y - 0.5).abs() < 1e-10);
    }

    #[test]
    fn no_return_when_flight_time_is_too_short() {
        let short = IntegratorConfig { max_flight_time: 0.5, ..cfg() };
        let r = first_sigma_crossing(&SmoothField::x0(), State3::new(0.0, 0.5, 0.0), &short);
        assert!(matches!(r, Err(Error::NoReturn { .. })));
    }

    #[test]
    fn scalar_flow_cases() {
        let d = PlaneDrift { lambda: 0.1, mu: 1.0, planes: 1 };
        let v = scalar_flow(&d, 0.2, 3.0, &cfg()).unwrap();
        assert!((v - 0.2 * (0.3f64).exp()).abs() < 1e-9);

        let d2 = PlaneDrift { lambda: 0.5, mu: 0.3, planes: 2 };
        assert_eq!(scalar_flow(&d2, 0.3, 5.0, &cfg()).unwrap(), 0.3);
        let v = scalar_flow(&d2, 0.15, 1.0, &cfg()).unwrap();
        assert!(v > 0.0 && v < 0.15);
        // Bernoulli closed form of ẋ = λx(x − μ)
        let exact = 0.3 * 0.15 / (0.15 + (0.3 - 0.15) * (0.5f64 * 0.3).exp());
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");

        assert!(matches!(scalar_flow(&d2, 7.0, 1.0, &cfg()), Err(Error::Blowup { .. })));
        // ẋ = λx(x − μ) with x > μ blows up in finite time
        assert!(matches!(scalar_flow(&d2, 0.5, 50.0, &cfg()), Err(Error::Blowup { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = IntegratorConfig { event_tol: 1e-9, ..cfg() };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig { max_step: 0.0, ..cfg() };
        assert!(bad.validate().is_err());
    }
}
