//! JSON and CSV emission. Floats are written with 17 significant digits so
//! that a report round-trips every `f64` and reruns compare byte-for-byte.

use crate::error::Result;
use serde::Serialize;
use serde_json::ser::Formatter;
use std::io::{self, Write};
use std::path::Path;

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the JSON report layout; bumped on any schema change.
pub const SCHEMA_VERSION: u32 = 1;

/// Pretty printer writing floats as `d.dddddddddddddddde±x`.
pub struct SigDigits17 {
    indent: usize,
    has_value: bool,
}

impl SigDigits17 {
    pub fn new() -> Self {
        Self { indent: 0, has_value: false }
    }

    fn newline<W: ?Sized + Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Default for SigDigits17 {
    fn default() -> Self {
        Self::new()
    }
}

/// `format!("{:.16e}")`, i.e. 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Formatter for SigDigits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits17::new());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Common header of every report.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    /// 0 certified, 2 hypothesis failure.
    pub status: u8,
    pub notes: Vec<String>,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &str, config_name: &str, config_hash: &str, seed: u64, result: T) -> Self {
        Self {
            tool: "wavegap",
            version: VERSION,
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config_name: config_name.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            status: 0,
            notes: Vec::new(),
            result,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Writes columns of equal length under the given header.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| format_f64(c[i])))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes serializable rows; floats use the shortest round-trip form.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Sample {
        a: f64,
        b: Vec<f64>,
        c: Option<f64>,
        d: &'static str,
        e: (f64, f64),
    }

    #[test]
    fn floats_round_trip_with_17_digits() {
        let s = Sample { a: 0.1, b: vec![1.0 / 3.0, -2.5e-300, 0.0], c: None, d: "x", e: (f64::NAN, 1e300) };
        let text = to_json_string(&s).unwrap();
        assert!(text.contains("\"a\": 1.0000000000000001e-1"), "{text}");
        assert!(text.contains("3.3333333333333331e-1"));
        assert!(text.contains("null"));
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 0.1);
        assert_eq!(back["b"][0].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(back["b"][1].as_f64().unwrap(), -2.5e-300);
        assert_eq!(back["e"][1].as_f64().unwrap(), 1e300);
        assert_eq!(text, to_json_string(&s).unwrap());
    }

    #[test]
    fn empty_containers_stay_compact() {
        let text = to_json_string(&serde_json::json!({"a": [], "b": {}})).unwrap();
        assert!(text.contains("\"a\": []") && text.contains("\"b\": {}"), "{text}");
    }
}
