//! Tables and their CSV / JSON serialisations.
//!
//! Floats are always written as `{:.16e}` (17 significant digits), so the
//! same run produces the same bytes. Both formats carry the resolved config.

use serde_json::{Map, Number, Value};

use crate::config::Format;
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(v) => float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) if v.is_finite() => Value::Number(float(*v).parse::<Number>().expect("formatted float")),
            Cell::Float(_) | Cell::Empty => Value::Null,
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key = value` facts about the run, such as counts.
    pub summary: Vec<(&'static str, String)>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new(), summary: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, config: &[(&'static str, String)], format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.csv(config),
            Format::Json => self.json(config),
        }
    }

    fn csv(&self, config: &[(&'static str, String)]) -> Result<Vec<u8>, CliError> {
        let mut head = String::new();
        for (k, v) in config.iter().chain(&self.summary) {
            head.push_str(&format!("# {k}={v}\n"));
        }
        let mut w = csv::Writer::from_writer(head.into_bytes());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    fn json(&self, config: &[(&'static str, String)]) -> Result<Vec<u8>, CliError> {
        let strings = |pairs: &[(&'static str, String)]| {
            Value::Object(pairs.iter().map(|(k, v)| (k.to_string(), Value::from(v.as_str()))).collect())
        };
        let records: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> =
                    self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                Value::Object(obj)
            })
            .collect();
        let mut doc = Map::new();
        doc.insert("config".into(), strings(config));
        doc.insert("summary".into(), strings(&self.summary));
        doc.insert("records".into(), Value::Array(records));
        let mut out = serde_json::to_vec_pretty(&Value::Object(doc)).map_err(std::io::Error::other)?;
        out.push(b'\n');
        Ok(out)
    }
}
