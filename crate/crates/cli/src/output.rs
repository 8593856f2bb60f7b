//! Deterministic report serialization.
//!
//! Every float in a report is printed with 17 significant digits, which
//! round-trips f64 exactly and makes repeated runs byte-identical.

use serde::Serialize;
use std::io::{self, Write};
use std::path::Path;

struct F17 {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for F17 {
    fn write_f64<W: Write + ?Sized>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: Write + ?Sized>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    // delegate the layout to the pretty formatter
    fn begin_array<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::begin_array(&mut self.inner, w)
    }
    fn end_array<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::end_array(&mut self.inner, w)
    }
    fn begin_array_value<W: Write + ?Sized>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        serde_json::ser::Formatter::begin_array_value(&mut self.inner, w, first)
    }
    fn end_array_value<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::end_array_value(&mut self.inner, w)
    }
    fn begin_object<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::begin_object(&mut self.inner, w)
    }
    fn end_object<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::end_object(&mut self.inner, w)
    }
    fn begin_object_key<W: Write + ?Sized>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        serde_json::ser::Formatter::begin_object_key(&mut self.inner, w, first)
    }
    fn end_object_key<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::end_object_key(&mut self.inner, w)
    }
    fn begin_object_value<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::begin_object_value(&mut self.inner, w)
    }
    fn end_object_value<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        serde_json::ser::Formatter::end_object_value(&mut self.inner, w)
    }
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut out = Vec::new();
    let fmt = F17 { inner: serde_json::ser::PrettyFormatter::new() };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
    value.serialize(&mut ser).expect("report serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("reports are utf-8")
}

pub fn write_report(dir: &Path, name: &str, value: &impl Serialize) -> io::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, to_json(value))?;
    Ok(path)
}

pub fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> io::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut body = String::with_capacity(rows.len() * 64 + header.len() + 1);
    body.push_str(header);
    body.push('\n');
    for r in rows {
        body.push_str(r);
        body.push('\n');
    }
    std::fs::write(&path, body)?;
    Ok(path)
}

/// Fixed-precision float for CSV cells (17 significant digits).
pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}
