//! Artifact output: canonical JSON, CSV, atomic writes, config hashes and
//! markdown reports with inline SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::space::fmt_num;

/// Version stamped into every JSON artifact and required on every input.
pub const SCHEMA_VERSION: u32 = 1;

/// Pretty JSON with sorted keys and a trailing newline. Going through
/// `serde_json::Value` sorts object keys, so reading an artifact back and
/// writing it again reproduces the same bytes.
pub fn canonical_json<T: Serialize>(v: &T) -> Result<String> {
    let value = serde_json::to_value(v)?;
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| Error::Io(format!("bad artifact path {}", path.display())))?;
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_atomic(path, canonical_json(v)?.as_bytes())
}

/// CSV with a header row; every row must match the header width.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical config JSON followed by the digests of its inputs.
pub fn config_hash<T: Serialize>(config: &T, inputs: &[Vec<u8>]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&serde_json::to_value(config)?)?.as_bytes());
    for i in inputs {
        h.update(Sha256::digest(i));
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Clone, Debug, Default)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points: points.into_iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect() }
    }
}

const W: f64 = 480.0;
const H: f64 = 260.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f5fa8", "#c0392b", "#2e8b57", "#7d3c98"];

/// Polyline plot with axis ranges and a legend; fixed size and style.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x0, x1) = bounds(all.iter().map(|p| p.0));
    let (y0, y1) = bounds(all.iter().map(|p| p.1).chain([0.0]));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="monospace" font-size="10">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="14" text-anchor="middle">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - PAD, W - PAD, H - PAD);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{}</text>"#, H - PAD + 12.0, fmt_tick(x0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - PAD, H - PAD + 12.0, fmt_tick(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 2.0, H - PAD, fmt_tick(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 2.0, PAD + 4.0, fmt_tick(y1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 8.0, esc(xlabel));
    let _ = writeln!(s, r#"<text x="10" y="{}" transform="rotate(-90 10 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, esc(ylabel));
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, W - PAD - 120.0, PAD + 12.0 * k as f64, esc(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v), a.1.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Markdown report; sections are appended in order.
#[derive(Clone, Debug)]
pub struct Report {
    body: String,
}

impl Report {
    pub fn new(title: &str, config_hash: &str) -> Self {
        Report { body: format!("# {title}\n\nconfig hash: `{config_hash}`\n") }
    }

    pub fn section(&mut self, heading: &str) -> &mut Self {
        let _ = write!(self.body, "\n## {heading}\n\n");
        self
    }

    pub fn para(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.body, "{text}\n");
        self
    }

    pub fn table(&mut self, header: &[&str], rows: &[Vec<String>]) -> &mut Self {
        let _ = writeln!(self.body, "| {} |", header.join(" | "));
        let _ = writeln!(self.body, "|{}", "---|".repeat(header.len()));
        for r in rows {
            let _ = writeln!(self.body, "| {} |", r.join(" | "));
        }
        self.body.push('\n');
        self
    }

    /// Key/value table.
    pub fn facts(&mut self, rows: &[(&str, String)]) -> &mut Self {
        let rows: Vec<Vec<String>> = rows.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
        self.table(&["quantity", "value"], &rows)
    }

    pub fn svg(&mut self, svg: String) -> &mut Self {
        self.body.push_str(&svg);
        self.body.push('\n');
        self
    }

    pub fn render(&self) -> String {
        self.body.clone()
    }
}

pub fn num(v: f64) -> String {
    fmt_num(v)
}

pub fn yes(b: bool) -> String {
    if b { "pass" } else { "FAIL" }.to_string()
}
