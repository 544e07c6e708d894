//! Run configuration: a flat `key = value` file, overridden by flags.
//!
//! Recognised keys:
//!
//! | key | value |
//! |-----|-------|
//! | `family` | `z0`, `zl`, `zrho`, `zkl` |
//! | `lambda`, `mu`, `L`, `eps`, `rho`, `k` | field parameters |
//! | `rel_tol`, `abs_tol`, `max_step`, `event_tol`, `max_flight_time` | integrator |
//! | `start` | `x,y,z` |
//! | `returns`, `time` | simulation length |
//! | `y_range` | `a:b` |
//! | `grid`, `cutoff`, `reference_radius`, `verify` | analysis |
//! | `eps_list` | `v1,v2,...` |
//! | `format` | `csv` or `json` |

use std::fs;
use std::path::Path;

use psvf::fields::{Family, FieldParams, Rho};
use psvf::flow::IntegratorConfig;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: cannot parse '{value}': {why}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| bad(key, v, e))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"))).collect()
}

pub fn parse_start(s: &str) -> Result<[f64; 3], String> {
    match parse_list(s)?.as_slice() {
        &[x, y, z] => Ok([x, y, z]),
        v => Err(format!("expected x,y,z, got {} values", v.len())),
    }
}

pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got '{s}'"))?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

/// Settings from one source; `None` leaves the value to a later source or the default.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub family: Option<Family>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub planes: Option<usize>,
    pub eps: Option<f64>,
    pub rho: Option<Rho>,
    pub k: Option<usize>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step: Option<f64>,
    pub event_tol: Option<f64>,
    pub max_flight_time: Option<f64>,
    pub start: Option<[f64; 3]>,
    pub returns: Option<usize>,
    pub time: Option<f64>,
    pub y_range: Option<(f64, f64)>,
    pub grid: Option<usize>,
    pub eps_list: Option<Vec<f64>>,
    pub cutoff: Option<usize>,
    pub reference_radius: Option<f64>,
    pub verify: Option<bool>,
    pub format: Option<Format>,
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "family" => self.family = Some(num(key, v)?),
            "lambda" => self.lambda = Some(num(key, v)?),
            "mu" => self.mu = Some(num(key, v)?),
            "L" => self.planes = Some(num(key, v)?),
            "eps" => self.eps = Some(num(key, v)?),
            "rho" => self.rho = Some(num(key, v)?),
            "k" => self.k = Some(num(key, v)?),
            "rel_tol" => self.rel_tol = Some(num(key, v)?),
            "abs_tol" => self.abs_tol = Some(num(key, v)?),
            "max_step" => self.max_step = Some(num(key, v)?),
            "event_tol" => self.event_tol = Some(num(key, v)?),
            "max_flight_time" => self.max_flight_time = Some(num(key, v)?),
            "start" => self.start = Some(parse_start(v).map_err(|e| bad(key, v, e))?),
            "returns" => self.returns = Some(num(key, v)?),
            "time" => self.time = Some(num(key, v)?),
            "y_range" => self.y_range = Some(parse_range(v).map_err(|e| bad(key, v, e))?),
            "grid" => self.grid = Some(num(key, v)?),
            "eps_list" => self.eps_list = Some(parse_list(v).map_err(|e| bad(key, v, e))?),
            "cutoff" => self.cutoff = Some(num(key, v)?),
            "reference_radius" => self.reference_radius = Some(num(key, v)?),
            "verify" => self.verify = Some(parse_bool(v).map_err(|e| bad(key, v, e))?),
            "format" => {
                self.format = Some(match v {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(bad(key, v, "expected csv or json")),
                })
            }
            _ => return Err(CliError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got '{raw}'", n + 1)))?;
            s.set(key.trim(), value)?;
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `other` wins wherever it has a value.
    pub fn overlay(self, other: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            family,
            lambda,
            mu,
            planes,
            eps,
            rho,
            k,
            rel_tol,
            abs_tol,
            max_step,
            event_tol,
            max_flight_time,
            start,
            returns,
            time,
            y_range,
            grid,
            eps_list,
            cutoff,
            reference_radius,
            verify,
            format
        )
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub params: FieldParams,
    pub integrator: IntegratorConfig,
    pub start: Option<[f64; 3]>,
    pub returns: Option<usize>,
    pub time: Option<f64>,
    pub y_range: Option<(f64, f64)>,
    pub grid: usize,
    pub eps_list: Option<Vec<f64>>,
    pub cutoff: Option<usize>,
    pub reference_radius: f64,
    pub verify: bool,
    pub format: Format,
}

pub const DEFAULT_GRID: usize = 2000;
pub const DEFAULT_REFERENCE_RADIUS: f64 = 0.4;

impl RunConfig {
    pub fn resolve(s: Settings) -> Result<Self, CliError> {
        let d = FieldParams::default();
        let di = IntegratorConfig::default();
        let cfg = RunConfig {
            family: s.family.unwrap_or(Family::Zkl),
            params: FieldParams {
                lambda: s.lambda.unwrap_or(d.lambda),
                mu: s.mu.unwrap_or(d.mu),
                planes: s.planes.unwrap_or(d.planes),
                eps: s.eps.unwrap_or(d.eps),
                k: s.k.unwrap_or(d.k),
                rho: s.rho.unwrap_or(d.rho),
            },
            integrator: IntegratorConfig {
                rel_tol: s.rel_tol.unwrap_or(di.rel_tol),
                abs_tol: s.abs_tol.unwrap_or(di.abs_tol),
                max_step: s.max_step.unwrap_or(di.max_step),
                event_tol: s.event_tol.unwrap_or(di.event_tol),
                max_flight_time: s.max_flight_time.unwrap_or(di.max_flight_time),
            },
            start: s.start,
            returns: s.returns,
            time: s.time,
            y_range: s.y_range,
            grid: s.grid.unwrap_or(DEFAULT_GRID),
            eps_list: s.eps_list,
            cutoff: s.cutoff,
            reference_radius: s.reference_radius.unwrap_or(DEFAULT_REFERENCE_RADIUS),
            verify: s.verify.unwrap_or(false),
            format: s.format.unwrap_or_default(),
        };
        cfg.integrator.validate()?;
        Ok(cfg)
    }

    /// Resolved values as `(key, value)` pairs, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let f = |v: f64| format!("{v:?}");
        let p = &self.params;
        let i = &self.integrator;
        let mut out = vec![
            ("family", self.family.to_string()),
            ("lambda", f(p.lambda)),
            ("mu", f(p.mu)),
            ("L", p.planes.to_string()),
            ("eps", f(p.eps)),
            ("rho", p.rho.to_string()),
            ("k", p.k.to_string()),
            ("rel_tol", f(i.rel_tol)),
            ("abs_tol", f(i.abs_tol)),
            ("max_step", f(i.max_step)),
            ("event_tol", f(i.event_tol)),
            ("max_flight_time", f(i.max_flight_time)),
        ];
        if let Some([x, y, z]) = self.start {
            out.push(("start", format!("{},{},{}", f(x), f(y), f(z))));
        }
        if let Some(n) = self.returns {
            out.push(("returns", n.to_string()));
        }
        if let Some(t) = self.time {
            out.push(("time", f(t)));
        }
        if let Some((a, b)) = self.y_range {
            out.push(("y_range", format!("{}:{}", f(a), f(b))));
        }
        out.push(("grid", self.grid.to_string()));
        if let Some(list) = &self.eps_list {
            out.push(("eps_list", list.iter().map(|&v| f(v)).collect::<Vec<_>>().join(",")));
        }
        if let Some(c) = self.cutoff {
            out.push(("cutoff", c.to_string()));
        }
        out.push(("reference_radius", f(self.reference_radius)));
        out.push(("verify", self.verify.to_string()));
        out.push(("format", self.format.name().to_string()));
        out
    }
}
