use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::args::Format;
use crate::Failure;

/// Bumped whenever a JSON field is renamed or removed.
pub const SCHEMA_VERSION: u32 = 1;

/// A command result in all three output forms.
pub struct Report {
    pub command: &'static str,
    pub json: Value,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Replaces the aligned table in `table` format.
    pub text: Option<String>,
}

impl Report {
    pub fn new(command: &'static str, json: impl Serialize) -> Result<Self, Failure> {
        let json = serde_json::to_value(json).map_err(|e| Failure::internal(e.to_string()))?;
        Ok(Self {
            command,
            json,
            header: Vec::new(),
            rows: Vec::new(),
            text: None,
        })
    }

    pub fn render(&self, format: Format, timestamp: Option<u64>) -> Result<String, Failure> {
        match format {
            Format::Json => {
                let mut doc = serde_json::Map::new();
                doc.insert("schema_version".into(), SCHEMA_VERSION.into());
                doc.insert("command".into(), self.command.into());
                if let Some(t) = timestamp {
                    doc.insert("generated_at_unix".into(), t.into());
                }
                match &self.json {
                    Value::Object(fields) => doc.extend(fields.clone()),
                    other => {
                        doc.insert("data".into(), other.clone());
                    }
                }
                let mut out = serde_json::to_string_pretty(&Value::Object(doc))
                    .map_err(|e| Failure::internal(e.to_string()))?;
                out.push('\n');
                Ok(out)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| Failure::internal(e.to_string());
                w.write_record(&self.header).map_err(io)?;
                for row in &self.rows {
                    w.write_record(row).map_err(io)?;
                }
                let bytes = w.into_inner().map_err(|e| Failure::internal(e.to_string()))?;
                let mut out = String::from_utf8(bytes).map_err(|e| Failure::internal(e.to_string()))?;
                if let Some(t) = timestamp {
                    out.insert_str(0, &format!("# generated_at_unix={t}\n"));
                }
                Ok(out)
            }
            Format::Table => {
                let mut out = String::new();
                if let Some(t) = timestamp {
                    let _ = writeln!(out, "generated_at_unix: {t}");
                }
                match &self.text {
                    Some(text) => out.push_str(text),
                    None => out.push_str(&table(&self.header, &self.rows)),
                }
                Ok(out)
            }
        }
    }
}

/// Right-aligned columns, first column left-aligned.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz   1\n");
    }
}
