//! Report payloads and artifact writers.
//!
//! `report.json` holds only values that follow from the scenario and seed;
//! wall-clock time, thread count and timestamps go to `provenance.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::Scenario;

/// JSON number, or a string for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// One result record; `op` names the operation that produced every number
/// in `data`.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub op: String,
    pub data: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub warnings: Vec<String>,
    pub records: Vec<Record>,
    pub verdict: Option<String>,
}

impl Report {
    pub fn new(subcommand: &str, seed: u64, scenario: Scenario, warnings: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            seed,
            scenario,
            warnings,
            records: Vec::new(),
            verdict: None,
        }
    }

    pub fn push(&mut self, op: &str, data: Value) {
        self.records.push(Record {
            op: op.to_string(),
            data,
        });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub finished_unix_seconds: u64,
    pub grid: Value,
}

/// Tracks files written into the output directory for the MANIFEST.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    /// CSV with a header row.
    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| io::Error::other(e.to_string()))?;
        self.write(name, &String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// `MANIFEST` listing every artifact; `error` marks the run partial.
    pub fn finish(&mut self, error: Option<&str>) -> io::Result<()> {
        let mut text = String::new();
        match error {
            None => text.push_str("status: complete\n"),
            Some(e) => {
                text.push_str("status: partial\n");
                text.push_str(&format!("error: {}\n", e.replace('\n', " ")));
            }
        }
        for w in &self.written {
            text.push_str(w);
            text.push('\n');
        }
        fs::write(self.dir.join("MANIFEST"), text)
    }
}

/// Formats a float for CSV cells.
pub fn cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
