//! Output tables and staged writing.
//!
//! Every command renders all of its files in memory first and only then
//! creates the output directory, so a failed command leaves nothing behind.

use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;

/// Version of the CSV/JSON layouts written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Files of one command, in the order they were added.
#[derive(Debug, Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a table as `<stem>.csv` or `<stem>.json`.
    pub fn table<T: Serialize>(&mut self, stem: &str, rows: &[T], format: Format) -> Result<()> {
        let bytes = match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in rows {
                    w.serialize(r)?;
                }
                w.into_inner()
                    .map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?
            }
            Format::Json => pretty_json(rows)?,
        };
        self.files
            .push((format!("{stem}.{}", format.extension()), bytes));
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.files.push((name.to_string(), pretty_json(value)?));
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

fn pretty_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: Option<f64>,
    }

    #[test]
    fn csv_has_header_and_empty_options() {
        let mut b = Bundle::new();
        b.table(
            "t",
            &[Row { a: 1, b: Some(0.5) }, Row { a: 2, b: None }],
            Format::Csv,
        )
        .unwrap();
        assert_eq!(
            std::str::from_utf8(b.get("t.csv").unwrap()).unwrap(),
            "a,b\n1,0.5\n2,\n"
        );
    }

    #[test]
    fn json_tables_are_arrays() {
        let mut b = Bundle::new();
        b.table("t", &[Row { a: 1, b: None }], Format::Json)
            .unwrap();
        let v: serde_json::Value = serde_json::from_slice(b.get("t.json").unwrap()).unwrap();
        assert_eq!(v[0]["a"], 1);
    }
}
