use serde_json::{Map, Number, Value};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Real)
    }
}

/// Fixed-column table; CSV by default, an array of row objects as JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Real(v) => real(*v),
                    Cell::Int(v) => v.to_string(),
                    Cell::Empty => String::new(),
                })
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (name, c) in self.columns.iter().zip(row) {
                    let v = match c {
                        Cell::Real(v) => Number::from_f64(*v).map_or(Value::Null, Value::Number),
                        Cell::Int(v) => Value::from(*v),
                        Cell::Empty => Value::Null,
                    };
                    obj.insert((*name).to_string(), v);
                }
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

pub enum Document {
    Table(Table),
    Json(Value),
}

impl Document {
    pub fn render(&self, format: Format) -> Result<String, String> {
        match (self, format) {
            (Document::Table(t), Format::Csv) => Ok(t.to_csv()),
            (Document::Table(t), Format::Json) => Ok(pretty(&t.to_json())),
            (Document::Json(v), Format::Json) => Ok(pretty(v)),
            (Document::Json(_), Format::Csv) => Err("this command only produces JSON".into()),
        }
    }

    pub fn default_format(&self) -> Format {
        match self {
            Document::Table(_) => Format::Csv,
            Document::Json(_) => Format::Json,
        }
    }
}

/// Plain decimal in the readable range, exponent form outside it.
fn real(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
