//! Invariant planes, isolated invariant cylinders and the limit cycles at
//! their intersections.
//!
//! Planes come from the zeros of the drift `λΠ(x − iμ)`. Each one is an
//! equilibrium of the `x`-map, and its multiplier over one return at radius
//! `y⋆` is `exp(2y⋆·λΠ′(iμ))`. Cylinders are fixed points of the radial
//! return `φ²`. A cycle sits where a plane meets a cylinder, and the
//! Jacobian of the full return there is triangular with diagonal
//! `(x-multiplier, y-multiplier)`.
//!
//! Stability is read off the logarithms of the multipliers. These are known
//! in closed form, so the classification stays exact even when a multiplier
//! rounds to 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{make_family, BumpSpec, Family, FieldParams, PlaneDrift, Rho};
use crate::returns::{phi2_derivative, phi2_log_derivative, ReturnEngine, ReturnMode, SigmaPoint};

/// Multipliers closer to 1 than this cannot be told apart from a center.
pub const HYPERBOLICITY_FLOOR: f64 = 1e-12;
/// Finite-difference step for [`verify_hyperbolicity`].
pub const FD_STEP: f64 = 1e-5;
/// Relative agreement required between finite-difference and closed-form multipliers.
pub const FD_REL_TOL: f64 = 1e-4;
/// Multipliers within this of 1 are too flat for the finite-difference comparison.
pub const FD_SKIP: f64 = 1e-7;
/// Displacement bound under which every probe counts as sitting on a continuum.
pub const CONTINUUM_TOL: f64 = 1e-13;
pub const CONTINUUM_PROBES: usize = 10;
const PROBE_SEED: u64 = 0x5eed_c11d;
/// Bisection stops once the bracket is this narrow.
pub const BISECTION_WIDTH: f64 = 1e-12;
pub const DEFAULT_GRID: usize = 2000;
/// Noise floor for scans on the integrated return map.
pub const NUMERIC_NOISE_FLOOR: f64 = 1e-10;
/// Numeric and analytic roots closer than this are the same cylinder.
const ROOT_MATCH_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneStability {
    Repelling,
    Attracting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CylinderStability {
    Attractor,
    Repeller,
}

impl CylinderStability {
    fn from_log(log_multiplier: f64) -> Self {
        if log_multiplier < 0.0 {
            CylinderStability::Attractor
        } else {
            CylinderStability::Repeller
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleStability {
    Attractor,
    Repeller,
    SaddleType,
}

impl CycleStability {
    pub fn from_logs(x_log: f64, y_log: f64) -> Self {
        if x_log < 0.0 && y_log < 0.0 {
            CycleStability::Attractor
        } else if x_log > 0.0 && y_log > 0.0 {
            CycleStability::Repeller
        } else {
            CycleStability::SaddleType
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CycleStability::Attractor => "attractor",
            CycleStability::Repeller => "repeller",
            CycleStability::SaddleType => "saddle-type",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detection {
    Numeric,
    AnalyticOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneRecord {
    pub index: usize,
    pub location: f64,
    pub x_multiplier: f64,
    pub x_log_multiplier: f64,
    pub reference_radius: f64,
    pub stability: PlaneStability,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderRecord {
    pub index: usize,
    pub radius: f64,
    pub y_multiplier: f64,
    pub y_log_multiplier: f64,
    pub stability: CylinderStability,
    pub detection: Detection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub plane: usize,
    pub cylinder: usize,
    pub base: SigmaPoint,
    pub x_multiplier: f64,
    pub y_multiplier: f64,
    pub x_log_multiplier: f64,
    pub y_log_multiplier: f64,
    pub stability: CycleStability,
    pub detection: Detection,
}

fn require_drift(drift: &PlaneDrift) -> Result<()> {
    drift.validate()?;
    if drift.lambda == 0.0 {
        return Err(Error::InvalidParams("lambda must be nonzero for isolated planes".into()));
    }
    Ok(())
}

/// `ln` of the `x`-multiplier of plane `i` over one return at radius `y_star`.
pub fn plane_log_multiplier(drift: &PlaneDrift, i: usize, y_star: f64) -> f64 {
    2.0 * y_star * drift.rate_slope(drift.plane(i))
}

/// The `L` planes `x = iμ`, with multipliers taken at `reference_radius`.
pub fn find_invariant_planes(drift: &PlaneDrift, reference_radius: f64) -> Result<Vec<PlaneRecord>> {
    require_drift(drift)?;
    if !(reference_radius > 0.0 && reference_radius.is_finite()) {
        return Err(Error::InvalidInput(format!("reference radius must be positive, got {reference_radius}")));
    }
    Ok((0..drift.planes)
        .map(|i| {
            let log = plane_log_multiplier(drift, i, reference_radius);
            PlaneRecord {
                index: i,
                location: drift.plane(i),
                x_multiplier: log.exp(),
                x_log_multiplier: log,
                reference_radius,
                stability: if log > 0.0 { PlaneStability::Repelling } else { PlaneStability::Attracting },
            }
        })
        .collect())
}

/// Grid and window for [`find_cylinders`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderSearch {
    pub y_min: f64,
    pub y_max: f64,
    pub grid: usize,
    /// Displacements at or below this are treated as unresolved; `None` picks by engine mode.
    pub noise_floor: Option<f64>,
}

impl CylinderSearch {
    pub fn new(y_min: f64, y_max: f64, grid: usize) -> Self {
        CylinderSearch { y_min, y_max, grid, noise_floor: None }
    }

    /// Window covering the analytic roots of `bump` with margin on both sides.
    pub fn for_bump(bump: &BumpSpec) -> Self {
        let e = bump.eps.abs();
        let (lo, hi) = match bump.rho {
            _ if e == 0.0 => (0.05, 1.0),
            Rho::Finite => (0.05 * e, 1.5 * bump.k as f64 * e),
            Rho::Infinite => (0.15 * e * e, 1.5 * e * e),
        };
        CylinderSearch::new(lo, hi, DEFAULT_GRID)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y_min > 0.0 && self.y_min < self.y_max && self.y_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "y-range must satisfy 0 < a < b, got ({}, {})",
                self.y_min, self.y_max
            )));
        }
        if self.grid < 100 {
            return Err(Error::InvalidInput(format!("grid must have at least 100 nodes, got {}", self.grid)));
        }
        Ok(())
    }

    fn node(&self, i: usize) -> f64 {
        let t = i as f64 / (self.grid - 1) as f64;
        self.y_min + (self.y_max - self.y_min) * t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderScan {
    pub records: Vec<CylinderRecord>,
    /// `φ²` is the identity on the window: a continuum of cylinders, none isolated.
    pub continuum: bool,
}

fn cylinder_record(bump: Option<&BumpSpec>, j: usize, radius: f64, detection: Detection) -> CylinderRecord {
    let log = phi2_log_derivative(bump, radius);
    CylinderRecord {
        index: j,
        radius,
        y_multiplier: log.exp(),
        y_log_multiplier: log,
        stability: CylinderStability::from_log(log),
        detection,
    }
}

fn bisect(engine: &ReturnEngine, mut a: f64, mut b: f64, mut da: f64) -> Result<f64> {
    while b - a > BISECTION_WIDTH {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let dm = engine.displacement(m)?;
        if dm == 0.0 {
            return Ok(m);
        }
        if dm.signum() == da.signum() {
            a = m;
            da = dm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Sign changes of `φ²(y) − y` on `window`, refined by bisection.
pub fn sign_change_roots(engine: &ReturnEngine, window: &CylinderSearch) -> Result<Vec<f64>> {
    window.validate()?;
    let floor = window.noise_floor.unwrap_or(match engine.mode() {
        ReturnMode::SemiAnalytic => 0.0,
        ReturnMode::Numeric => NUMERIC_NOISE_FLOOR,
    });
    let values: Vec<f64> =
        (0..window.grid).into_par_iter().map(|i| engine.displacement(window.node(i))).collect::<Result<_>>()?;
    let resolved: Vec<usize> = (0..window.grid).filter(|&i| values[i].abs() > floor).collect();
    let mut roots = Vec::new();
    for pair in resolved.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a <= 2 && values[a].signum() != values[b].signum() {
            roots.push(bisect(engine, window.node(a), window.node(b), values[a])?);
        }
    }
    Ok(roots)
}

fn is_continuum(engine: &ReturnEngine, window: &CylinderSearch) -> Result<bool> {
    if engine.bump().is_some_and(|b| !b.representable_roots().is_empty()) {
        return Ok(false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for _ in 0..CONTINUUM_PROBES {
        let y = rng.gen_range(window.y_min..window.y_max);
        if engine.displacement(y)?.abs() >= CONTINUUM_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Isolated invariant cylinders, i.e. fixed points of `φ²`, found on `window`.
///
/// Analytic roots the scan cannot see are appended as analytic-only. These
/// are the roots below the window, down to the last one with representable
/// `h`, plus any in-window root that no bracket caught.
pub fn find_cylinders(engine: &ReturnEngine, window: &CylinderSearch) -> Result<CylinderScan> {
    window.validate()?;
    if is_continuum(engine, window)? {
        return Ok(CylinderScan { records: Vec::new(), continuum: true });
    }
    let bump = engine.bump();
    let mut records: Vec<CylinderRecord> = sign_change_roots(engine, window)?
        .into_iter()
        .map(|y| {
            let j = bump.map_or(0, |b| b.nearest_root_index(y));
            cylinder_record(bump, j, y, Detection::Numeric)
        })
        .collect();
    if let Some(b) = bump {
        for r in b.representable_roots() {
            if r.root >= window.y_max {
                continue;
            }
            let seen = records.iter().any(|c| (c.radius - r.root).abs() < ROOT_MATCH_TOL && c.index == r.j);
            if !seen {
                records.push(cylinder_record(bump, r.j, r.root, Detection::AnalyticOnly));
            }
        }
    }
    records.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    Ok(CylinderScan { records, continuum: false })
}

/// Every cycle `π_i ∩ C_j` of `Z_{k𝓛}`.
///
/// The infinite profile has infinitely many cylinders, so it needs `j_cutoff`.
pub fn enumerate_limit_cycles(params: &FieldParams, j_cutoff: Option<usize>) -> Result<Vec<CycleRecord>> {
    let drift = params.drift();
    require_drift(&drift)?;
    let bump = params.bump();
    bump.validate()?;
    let roots = match (bump.rho, j_cutoff) {
        (Rho::Finite, None) => bump.roots(bump.k),
        (_, Some(n)) => bump.roots(n),
        (Rho::Infinite, None) => {
            return Err(Error::InvalidInput("the infinite profile needs a cylinder cutoff".into()))
        }
    };
    let mut out = Vec::with_capacity(drift.planes * roots.len());
    for i in 0..drift.planes {
        for r in &roots {
            let y_multiplier = phi2_derivative(Some(&bump), r.root)?;
            let y_log = phi2_log_derivative(Some(&bump), r.root);
            let x_log = plane_log_multiplier(&drift, i, r.root);
            let x_multiplier = x_log.exp();
            let flat = |m: f64| (m - 1.0).abs() <= HYPERBOLICITY_FLOOR;
            out.push(CycleRecord {
                plane: i,
                cylinder: r.j,
                base: SigmaPoint::new(drift.plane(i), r.root),
                x_multiplier,
                y_multiplier,
                x_log_multiplier: x_log,
                y_log_multiplier: y_log,
                stability: CycleStability::from_logs(x_log, y_log),
                detection: if flat(x_multiplier) || flat(y_multiplier) {
                    Detection::AnalyticOnly
                } else {
                    Detection::Numeric
                },
            });
        }
    }
    Ok(out)
}

/// The parity rule: attractor iff `i` odd and `j` even, repeller iff `i` even and `j` odd.
///
/// It agrees with the computed stability only when `λ(−1)^{L−1} > 0`;
/// see [`parity_rule_applies`].
pub fn parity_grid_label(i: usize, j: usize) -> CycleStability {
    match (i % 2, j % 2) {
        (1, 0) => CycleStability::Attractor,
        (0, 1) => CycleStability::Repeller,
        _ => CycleStability::SaddleType,
    }
}

/// Whether even-indexed planes repel, the case in which [`parity_grid_label`] is exact.
pub fn parity_rule_applies(drift: &PlaneDrift) -> bool {
    let sign = if drift.planes % 2 == 1 { 1.0 } else { -1.0 };
    drift.lambda * sign > 0.0
}

/// Cylinder stability by root parity: odd `j` repels, even `j` attracts (for `ε > 0`).
pub fn cylinder_parity_label(j: usize) -> CylinderStability {
    if j % 2 == 1 {
        CylinderStability::Repeller
    } else {
        CylinderStability::Attractor
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub fd_x_multiplier: f64,
    pub fd_y_multiplier: f64,
    /// `None` when the multiplier is too close to 1 for the comparison.
    pub x_rel_error: Option<f64>,
    pub y_rel_error: Option<f64>,
    pub stability: CycleStability,
    /// Finite differences agree with the record and give the same stability.
    pub confirmed: bool,
}

fn rel_error(fd: f64, exact: f64) -> Option<f64> {
    ((exact - 1.0).abs() > FD_SKIP).then(|| ((fd - exact) / exact).abs())
}

/// Central differences of the return map at a cycle, compared with the record.
pub fn verify_hyperbolicity(record: &CycleRecord, engine: &ReturnEngine) -> Result<HyperbolicityReport> {
    for m in [record.x_multiplier, record.y_multiplier] {
        if (m - 1.0).abs() <= HYPERBOLICITY_FLOOR {
            return Err(Error::NotHyperbolicNumerically { multiplier: m });
        }
    }
    if record.detection == Detection::AnalyticOnly {
        return Err(Error::InvalidInput("analytic-only cycles cannot be checked numerically".into()));
    }
    let SigmaPoint { x, y } = record.base;
    let h = FD_STEP;
    let fd_x = (engine.x_map(x + h, y)? - engine.x_map(x - h, y)?) / (2.0 * h);
    let fd_y = (engine.phi2(y + h)? - engine.phi2(y - h)?) / (2.0 * h);
    for m in [fd_x, fd_y] {
        if (m - 1.0).abs() <= HYPERBOLICITY_FLOOR {
            return Err(Error::NotHyperbolicNumerically { multiplier: m });
        }
    }
    let x_rel_error = rel_error(fd_x, record.x_multiplier);
    let y_rel_error = rel_error(fd_y, record.y_multiplier);
    let stability = CycleStability::from_logs(fd_x.ln(), fd_y.ln());
    let agrees = [x_rel_error, y_rel_error].iter().all(|e| e.is_none_or(|e| e <= FD_REL_TOL));
    Ok(HyperbolicityReport {
        fd_x_multiplier: fd_x,
        fd_y_multiplier: fd_y,
        x_rel_error,
        y_rel_error,
        stability,
        confirmed: agrees && stability == record.stability,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub eps: f64,
    pub continuum: bool,
    pub cylinders: Vec<CylinderRecord>,
}

/// Cylinders of `Z^ρ_ε` for each `ε`, using the semi-analytic map.
///
/// `window` overrides the per-`ε` default search window.
pub fn scan_epsilon(params: &FieldParams, eps_list: &[f64], window: Option<CylinderSearch>) -> Result<Vec<ScanRow>> {
    if let Some(&bad) = eps_list.iter().find(|e| !(e.abs() <= 0.5)) {
        return Err(Error::InvalidInput(format!("eps values must lie in [-0.5, 0.5], got {bad}")));
    }
    let mut rows: Vec<ScanRow> = eps_list
        .par_iter()
        .map(|&eps| {
            let p = FieldParams { eps, ..*params };
            let engine = ReturnEngine::semi_analytic(make_family(Family::Zrho, &p)?)?;
            let w = window.unwrap_or_else(|| CylinderSearch::for_bump(&p.bump()));
            let scan = find_cylinders(&engine, &w)?;
            Ok(ScanRow { eps, continuum: scan.continuum, cylinders: scan.records })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    Ok(rows)
}
