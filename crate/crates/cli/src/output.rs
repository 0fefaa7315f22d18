//! Report envelopes, JSON with 17 significant digits, and CSV artifacts.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::config::RunConfig;

/// Formats a float with 17 significant digits, which round-trips exactly.
/// Negative zero prints as zero.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v + 0.0)
}

/// Delegates layout to the inner formatter but always writes floats with
/// 17 significant digits.
struct PreciseFormatter<F>(F);

impl<F: Formatter> Formatter for PreciseFormatter<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T, pretty: bool) -> String {
    let mut buf = Vec::new();
    let result = if pretty {
        value.serialize(&mut serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new())))
    } else {
        value.serialize(&mut serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(CompactFormatter)))
    };
    result.expect("reports serialize");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Common wrapper of every report.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub result: T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(command: &'a str, config: &'a RunConfig, result: T) -> Self {
        Self { command, version: env!("CARGO_PKG_VERSION"), seed: config.seed, config, result }
    }
}

/// A CSV table whose first line is `# ` followed by a one-line JSON header.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new<H: Serialize>(header: &H, columns: &[String]) -> Self {
        let mut text = format!("# {}\n", to_json(header, false));
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Int(v) => write!(self.text, "{v}").unwrap(),
                Cell::Float(v) => self.text.push_str(&fmt_f64(*v)),
                Cell::Text(v) => self.text.push_str(v),
            }
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, f64::MIN_POSITIVE, 6.02214076e23] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(-0.0), "0.0000000000000000e0");
    }

    #[test]
    fn compact_and_pretty_agree() {
        let value = serde_json::json!({"a": [1.5, 2], "b": {"c": 0.1}});
        let compact = to_json(&value, false);
        assert_eq!(compact, r#"{"a":[1.5000000000000000e0,2],"b":{"c":1.0000000000000001e-1}}"#);
        let pretty: serde_json::Value = serde_json::from_str(&to_json(&value, true)).unwrap();
        assert_eq!(pretty, value);
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&serde_json::json!({"k": 1}), &["a".to_string(), "b".to_string()]);
        csv.row(&[Cell::Int(3), Cell::Text("x".into())]);
        csv.row(&[Cell::Float(0.5), Cell::Int(0)]);
        assert_eq!(csv.into_string(), "# {\"k\":1}\na,b\n3,x\n5.0000000000000000e-1,0\n");
    }
}
