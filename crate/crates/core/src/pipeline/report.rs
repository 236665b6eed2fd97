use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::curve::{average_certified_radius, CertCurve, CurvePoint};
use crate::error::{Error, Result};
use crate::numfmt::format_g17;

/// Renders JSON with two-space indentation and every non-integer number
/// printed with 17 significant digits.
pub fn to_json_g17(value: &Value) -> String {
    let mut out = String::new();
    render(value, 0, &mut out);
    out.push('\n');
    out
}

fn render(value: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_g17(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                render(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, v)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                render(v, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn write_json_g17(value: &Value, path: &Path) -> Result<()> {
    fs::write(path, to_json_g17(value)).map_err(|e| Error::io(path, e))
}

/// Writes `rho,certified_accuracy,abstain_rate` rows.
pub fn write_curve_csv(curve: &CertCurve, path: &Path) -> Result<()> {
    let mut body = String::from("rho,certified_accuracy,abstain_rate\n");
    for p in &curve.points {
        let _ = writeln!(
            body,
            "{},{},{}",
            p.rho,
            format_g17(p.certified_accuracy),
            format_g17(p.abstain_rate)
        );
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let field = |j: usize| record.get(j).ok_or_else(|| Error::parse(path, line, "missing column"));
        let num = |j: usize| -> Result<f64> { field(j)?.parse().map_err(|_| Error::parse(path, line, "bad number")) };
        points.push(CurvePoint {
            rho: field(0)?.parse().map_err(|_| Error::parse(path, line, "bad rho"))?,
            certified_accuracy: num(1)?,
            abstain_rate: num(2)?,
        });
    }
    Ok(points)
}

/// Writes one `curve_tau<tau>.csv` per curve and `report.json` holding
/// `metadata` plus clean accuracy and ACR per curve. Returns written paths.
pub fn write_report(curves: &[CertCurve], metadata: &Value, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for curve in curves {
        let name = format!("curve_tau{}.csv", curve.tau);
        let path = out_dir.join(&name);
        write_curve_csv(curve, &path)?;
        written.push(path);
        let mut s = Map::new();
        s.insert("tau".into(), curve.tau.into());
        s.insert("clean_accuracy".into(), curve.clean_accuracy.into());
        s.insert("acr".into(), average_certified_radius(curve).into());
        s.insert("max_rho".into(), curve.points.last().map_or(0, |p| p.rho).into());
        s.insert("csv".into(), name.into());
        summaries.push(Value::Object(s));
    }
    let mut report = Map::new();
    report.insert("metadata".into(), metadata.clone());
    report.insert("curves".into(), Value::Array(summaries));
    let path = out_dir.join("report.json");
    write_json_g17(&Value::Object(report), &path)?;
    written.push(path);
    Ok(written)
}
