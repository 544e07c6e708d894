use psvf::analysis::{
    enumerate_limit_cycles, find_cylinders, find_invariant_planes, scan_epsilon, verify_hyperbolicity, CylinderSearch,
    CylinderStability, Detection, PlaneStability,
};
use psvf::fields::make_family;
use psvf::flow::{flow_to_sigma, integrate, Sample};
use psvf::psvf::{Psvf, SigmaKind, SmoothField, State3};
use psvf::returns::ReturnEngine;
use psvf::Error;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{float, Cell, Table};

pub const SIMULATE_COLUMNS: [&str; 6] = ["t", "x", "y", "z", "segment", "side"];
pub const POINCARE_COLUMNS: [&str; 4] = ["y", "phi2", "displacement", "slope"];
pub const POINCARE_VERIFY_COLUMNS: [&str; 2] = ["phi2_numeric", "numeric_minus_semi"];
pub const ANALYZE_COLUMNS: [&str; 9] =
    ["kind", "i", "j", "x", "y", "x_multiplier", "y_multiplier", "stability", "detection"];
pub const ANALYZE_VERIFY_COLUMNS: [&str; 3] = ["fd_x_multiplier", "fd_y_multiplier", "confirmed"];
pub const SCAN_COLUMNS: [&str; 6] = ["eps", "j", "radius", "multiplier", "stability", "detection"];

fn plane_label(s: PlaneStability) -> &'static str {
    match s {
        PlaneStability::Repelling => "repelling",
        PlaneStability::Attracting => "attracting",
    }
}

fn cylinder_label(s: CylinderStability) -> &'static str {
    match s {
        CylinderStability::Attractor => "attractor",
        CylinderStability::Repeller => "repeller",
    }
}

fn detection_label(d: Detection) -> &'static str {
    match d {
        Detection::Numeric => "numeric",
        Detection::AnalyticOnly => "analytic-only",
    }
}

fn build(cfg: &RunConfig) -> Result<Psvf, CliError> {
    Ok(make_family(cfg.family, &cfg.params)?)
}

fn window(cfg: &RunConfig, engine: &ReturnEngine) -> CylinderSearch {
    let mut w = match (cfg.y_range, engine.bump()) {
        (Some((a, b)), _) => CylinderSearch::new(a, b, cfg.grid),
        (None, Some(bump)) => CylinderSearch::for_bump(bump),
        (None, None) => CylinderSearch::new(0.05, 1.0, cfg.grid),
    };
    w.grid = cfg.grid;
    w
}

/// Field to start with from `p`, and `p` snapped onto the plane if it lies on it.
fn initial_field(z: &Psvf, p: State3, tol: f64) -> Result<(SmoothField, State3), CliError> {
    if p.z > tol {
        return Ok((z.upper, p));
    }
    if p.z < -tol {
        return Ok((z.lower, p));
    }
    let q = State3::new(p.x, p.y, 0.0);
    match z.classify(&q)?.kind {
        SigmaKind::CrossingUp => Ok((z.upper, q)),
        SigmaKind::CrossingDown => Ok((z.lower, q)),
        kind => Err(CliError::Config(format!("start {q:?} is a {kind:?} point, not a crossing point"))),
    }
}

/// Piecewise orbit split into one segment per arc between switching-plane hits.
pub fn simulate(cfg: &RunConfig) -> Result<Table, CliError> {
    let start = cfg.start.ok_or_else(|| CliError::Config("simulate needs --start x,y,z".into()))?;
    let (arcs, horizon) = match (cfg.returns, cfg.time) {
        (Some(n), None) => (Some(2 * n), None),
        (None, Some(t)) if t >= 0.0 && t.is_finite() => (None, Some(t)),
        (None, Some(t)) => return Err(CliError::Config(format!("time must be non-negative, got {t}"))),
        _ => return Err(CliError::Config("simulate needs exactly one of --returns or --time".into())),
    };
    let z = build(cfg)?;
    let ic = &cfg.integrator;
    let (mut field, mut p) = initial_field(&z, State3::from_array(start), ic.event_tol)?;
    let mut table = Table::new(&SIMULATE_COLUMNS);
    let mut t0 = 0.0;
    let mut segment = 0usize;
    let emit = |table: &mut Table, samples: &[Sample], t0: f64, segment: usize, field: &SmoothField| {
        let side = if field.half_space().sign() > 0.0 { "upper" } else { "lower" };
        for s in samples {
            let st = s.state;
            table.push(vec![(t0 + s.t).into(), st.x.into(), st.y.into(), st.z.into(), segment.into(), side.into()]);
        }
    };
    loop {
        if arcs == Some(segment) || horizon.is_some_and(|t| t0 >= t) {
            break;
        }
        let remaining = horizon.map(|t| t - t0);
        let arc = match flow_to_sigma(&field, p, ic) {
            Ok(arc) => Some(arc),
            Err(Error::NoReturn { .. }) if remaining.is_some_and(|r| r <= ic.max_flight_time) => None,
            Err(e) => return Err(e.into()),
        };
        match (arc, remaining) {
            (Some(arc), r) if r.is_none_or(|r| arc.hit.time <= r) => {
                emit(&mut table, &arc.samples, t0, segment, &field);
                t0 += arc.hit.time;
                p = State3::new(arc.hit.point.x, arc.hit.point.y, 0.0);
                field = if field == z.upper { z.lower } else { z.upper };
                segment += 1;
            }
            (_, r) => {
                let samples = integrate(&field, p, r.unwrap_or(0.0), ic)?;
                emit(&mut table, &samples, t0, segment, &field);
                break;
            }
        }
    }
    if let Some(last) = table.rows.last() {
        let end: Vec<String> =
            last[1..4].iter().map(|c| if let Cell::Float(v) = c { float(*v) } else { String::new() }).collect();
        table.summary.push(("end", end.join(",")));
    }
    table.summary.push(("segments", segment.to_string()));
    Ok(table)
}

/// Samples of the radial return `φ²` and its displacement and slope.
pub fn poincare(cfg: &RunConfig) -> Result<Table, CliError> {
    let z = build(cfg)?;
    let semi = ReturnEngine::new(z, psvf::returns::ReturnMode::SemiAnalytic, cfg.integrator)?;
    let (a, b) = match cfg.y_range {
        Some(r) => r,
        None => {
            let w = window(cfg, &semi);
            (w.y_min, w.y_max)
        }
    };
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(CliError::Config(format!("y-range must satisfy 0 < a < b, got {a}:{b}")));
    }
    if cfg.grid < 2 {
        return Err(CliError::Config("poincare needs at least 2 samples".into()));
    }
    let numeric = cfg.verify.then(|| semi.with_mode(psvf::returns::ReturnMode::Numeric)).transpose()?;
    let mut columns = POINCARE_COLUMNS.to_vec();
    if numeric.is_some() {
        columns.extend(POINCARE_VERIFY_COLUMNS);
    }
    let mut table = Table::new(&columns);
    let mut changes = 0usize;
    let mut last_sign = 0.0;
    for n in 0..cfg.grid {
        let y = a + (b - a) * n as f64 / (cfg.grid - 1) as f64;
        let w = semi.phi2(y)?;
        let d = semi.displacement(y)?;
        let slope = semi.phi2_slope(y)?;
        if d != 0.0 {
            if last_sign != 0.0 && d.signum() != last_sign {
                changes += 1;
            }
            last_sign = d.signum();
        }
        let mut row = vec![y.into(), w.into(), d.into(), slope.into()];
        if let Some(e) = &numeric {
            let wn = e.phi2(y)?;
            row.push(wn.into());
            row.push((wn - w).into());
        }
        table.push(row);
    }
    table.summary.push(("sign_changes", changes.to_string()));
    Ok(table)
}

/// Planes, cylinders and cycles of the chosen family.
pub fn analyze(cfg: &RunConfig) -> Result<Table, CliError> {
    let z = build(cfg)?;
    let mut columns = ANALYZE_COLUMNS.to_vec();
    if cfg.verify {
        columns.extend(ANALYZE_VERIFY_COLUMNS);
    }
    let pad = |mut row: Vec<Cell>| {
        row.resize(columns.len(), Cell::Empty);
        row
    };
    let mut table = Table::new(&columns);

    let planes = if cfg.family.has_planes() {
        find_invariant_planes(&cfg.params.drift(), cfg.reference_radius)?
    } else {
        Vec::new()
    };
    for p in &planes {
        table.push(pad(vec![
            "plane".into(),
            p.index.into(),
            Cell::Empty,
            p.location.into(),
            p.reference_radius.into(),
            p.x_multiplier.into(),
            Cell::Empty,
            plane_label(p.stability).into(),
            Cell::Empty,
        ]));
    }

    let semi = ReturnEngine::new(z, psvf::returns::ReturnMode::SemiAnalytic, cfg.integrator)?;
    let scan = find_cylinders(&semi, &window(cfg, &semi))?;
    for c in &scan.records {
        table.push(pad(vec![
            "cylinder".into(),
            Cell::Empty,
            c.index.into(),
            Cell::Empty,
            c.radius.into(),
            Cell::Empty,
            c.y_multiplier.into(),
            cylinder_label(c.stability).into(),
            detection_label(c.detection).into(),
        ]));
    }

    let cycles = if cfg.family.has_planes() && cfg.family.has_bump() {
        enumerate_limit_cycles(&cfg.params, cfg.cutoff)?
    } else {
        Vec::new()
    };
    let numeric = if cfg.verify { Some(semi.with_mode(psvf::returns::ReturnMode::Numeric)?) } else { None };
    for c in &cycles {
        let mut row = vec![
            "cycle".into(),
            c.plane.into(),
            c.cylinder.into(),
            c.base.x.into(),
            c.base.y.into(),
            c.x_multiplier.into(),
            c.y_multiplier.into(),
            c.stability.label().into(),
            detection_label(c.detection).into(),
        ];
        if let Some(e) = &numeric {
            if c.detection == Detection::Numeric {
                let rep = verify_hyperbolicity(c, e)?;
                row.extend([rep.fd_x_multiplier.into(), rep.fd_y_multiplier.into(), rep.confirmed.to_string().into()]);
            }
        }
        table.push(pad(row));
    }

    let mut line = format!("planes={} cylinders={} cycles={}", planes.len(), scan.records.len(), cycles.len());
    if scan.continuum {
        line.push_str(" degenerate-continuum");
    }
    table.summary.extend([
        ("planes", planes.len().to_string()),
        ("cylinders", scan.records.len().to_string()),
        ("cycles", cycles.len().to_string()),
        ("continuum", scan.continuum.to_string()),
        ("summary", line),
    ]);
    Ok(table)
}

/// Long-format table of cylinders for each `ε` in the list.
pub fn scan(cfg: &RunConfig) -> Result<Table, CliError> {
    let eps_list = cfg.eps_list.as_deref().ok_or_else(|| CliError::Config("scan needs --eps-list".into()))?;
    let w = cfg.y_range.map(|(a, b)| CylinderSearch::new(a, b, cfg.grid));
    let rows = scan_epsilon(&cfg.params, eps_list, w)?;
    let mut table = Table::new(&SCAN_COLUMNS);
    let mut count = 0usize;
    for r in &rows {
        if r.continuum {
            table.push(vec![r.eps.into(), Cell::Empty, Cell::Empty, Cell::Empty, "continuum".into(), Cell::Empty]);
        }
        for c in &r.cylinders {
            count += 1;
            table.push(vec![
                r.eps.into(),
                c.index.into(),
                c.radius.into(),
                c.y_multiplier.into(),
                cylinder_label(c.stability).into(),
                detection_label(c.detection).into(),
            ]);
        }
    }
    table.summary.push(("cylinders", count.to_string()));
    Ok(table)
}

/// A gnuplot script for a CSV produced by `command`.
pub fn plot_script(command: &str, data: &str) -> String {
    let body = match command {
        "simulate" => format!("set xlabel 'x'\nset ylabel 'y'\nset zlabel 'z'\nsplot '{data}' using 2:3:4 with lines title 'orbit'\n"),
        "poincare" => format!(
            "set xlabel 'y'\nset ylabel 'phi2(y) - y'\nset xzeroaxis\nplot '{data}' using 1:3 with lines title 'displacement'\n"
        ),
        "scan" => format!("set xlabel 'eps'\nset ylabel 'radius'\nplot '{data}' using 1:3 with points pt 7 title 'cylinders'\n"),
        _ => format!(
            "set xlabel 'x'\nset ylabel 'y'\nplot '{data}' using ($1 eq 'cycle' ? $4 : NaN):5 with points pt 7 title 'cycles'\n"
        ),
    };
    format!("set datafile separator ','\nset key autotitle columnhead\n{body}")
}
