//! Result files: CSV/JSON tables, JSON reports, SVG plots and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) if *v != 0.0 && v.is_finite() && (v.abs() < 1e-4 || v.abs() >= 1e15) => format!("{v:e}"),
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(format!("{v}")),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with a leading `# manifest <hash>` comment line.
    pub fn to_csv(&self, input_hash: &str) -> String {
        let mut out = format!("# manifest {input_hash}\n{}\n", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, input_hash: &str) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (c, v) in self.columns.iter().zip(row) {
                    m.insert((*c).to_string(), v.json());
                }
                Value::Object(m)
            })
            .collect();
        let doc = json!({ "manifest": input_hash, "columns": self.columns, "rows": rows });
        serde_json::to_string_pretty(&doc).expect("table serializes") + "\n"
    }
}

/// Collects the files written by one run so the manifest can list them.
pub struct Writer {
    pub dir: PathBuf,
    pub input_hash: String,
    pub format: Format,
    pub written: Vec<(String, String)>,
}

impl Writer {
    pub fn new(dir: &Path, input_hash: String, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), input_hash, format, written: Vec::new() })
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    /// Writes `stem.csv` or `stem.json` depending on the configured format.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<(), CliError> {
        let (name, text) = match self.format {
            Format::Csv => (format!("{stem}.csv"), table.to_csv(&self.input_hash)),
            Format::Json => (format!("{stem}.json"), table.to_json(&self.input_hash)),
        };
        self.bytes(&name, text.as_bytes())
    }

    /// A JSON report with the manifest hash under the key `manifest`.
    pub fn report<T: Serialize>(&mut self, name: &str, report: &T) -> Result<(), CliError> {
        let mut value = serde_json::to_value(report).map_err(|e| CliError::Assertion(e.to_string()))?;
        if let Value::Object(m) = &mut value {
            m.insert("manifest".into(), json!(self.input_hash));
        }
        let text = serde_json::to_string_pretty(&value).expect("report serializes") + "\n";
        self.bytes(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, plot: &LogLogPlot) -> Result<(), CliError> {
        let text = plot.render(&self.input_hash);
        self.bytes(name, text.as_bytes())
    }
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub slope: Option<f64>,
}

/// Self-contained log-log line plot.
pub struct LogLogPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

impl LogLogPlot {
    pub fn render(&self, input_hash: &str) -> String {
        let (w, h, margin) = (640.0, 420.0, 60.0);
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .map(|(x, y)| (x.log10(), y.log10()))
            .collect();
        let bounds = |f: fn(&(f64, f64)) -> f64| {
            let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 0.5, lo + 0.5)
            } else {
                (0.0, 1.0)
            }
        };
        let (x0, x1) = bounds(|p| p.0);
        let (y0, y1) = bounds(|p| p.1);
        let sx = |x: f64| margin + (x.log10() - x0) / (x1 - x0) * (w - 2.0 * margin);
        let sy = |y: f64| h - margin - (y.log10() - y0) / (y1 - y0) * (h - 2.0 * margin);
        let mut out = String::new();
        let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">");
        let _ = writeln!(out, "<!-- manifest {input_hash} -->");
        let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(out, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>", w / 2.0, escape(&self.title));
        let _ = writeln!(
            out,
            "<line x1=\"{margin}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            h - margin,
            w - margin,
            h - margin
        );
        let _ = writeln!(out, "<line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{}\" stroke=\"black\"/>", h - margin);
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            w / 2.0,
            h - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">{}</text>",
            h / 2.0,
            h / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(out, "<text x=\"{margin}\" y=\"{}\">10^{x0:.2}</text>", h - margin + 15.0);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">10^{x1:.2}</text>", w - margin, h - margin + 15.0);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">10^{y0:.2}</text>", margin - 4.0, h - margin);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">10^{y1:.2}</text>", margin - 4.0, margin + 4.0);
        for (k, s) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", coords.join(" "));
            let label = match s.slope {
                Some(m) => format!("{} (slope {m:.4})", s.label),
                None => s.label.clone(),
            };
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
                margin + 10.0,
                margin + 15.0 * k as f64,
                escape(&label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

/// `sha256` of the canonical JSON of everything that determines the outputs.
pub fn input_hash(inputs: &Value) -> String {
    sha256_hex(serde_json::to_string(inputs).expect("inputs serialize").as_bytes())
}

pub fn versions() -> Value {
    json!({
        "fracheat": env!("CARGO_PKG_VERSION"),
        "fracheat-core": fracheat_core::VERSION,
    })
}
