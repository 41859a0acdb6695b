//! Report structure (`report_v1`) and its three emitters. Every numeric
//! claim carries the tolerance it was judged against; with a fixed stamp the
//! JSON bytes are fully determined by the config and seeds.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const SCHEMA: &str = "report_v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail => write!(f, "fail"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// One scalar claim with its tolerance.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check { name: name.into(), value, tol, pass: value <= tol }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SeriesRow {
    pub n: usize,
    pub value_re: f64,
    pub value_im: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SeriesBlock {
    pub name: String,
    pub rows: Vec<SeriesRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub schema: String,
    pub suite: String,
    pub verdict: Verdict,
    pub inputs: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub series: Vec<SeriesBlock>,
    pub wall_clock_ms: u64,
    pub build: String,
    pub seed_provenance: String,
}

impl Report {
    pub fn new(suite: &str, inputs: BTreeMap<String, serde_json::Value>) -> Self {
        Report {
            schema: SCHEMA.into(),
            suite: suite.into(),
            verdict: Verdict::Inconclusive,
            inputs,
            checks: Vec::new(),
            series: Vec::new(),
            wall_clock_ms: 0,
            build: String::new(),
            seed_provenance: String::new(),
        }
    }

    /// Pass iff every check passed.
    pub fn settle_verdict(&mut self) {
        self.verdict =
            if self.checks.iter().all(|c| c.pass) { Verdict::Pass } else { Verdict::Fail };
    }

    pub fn stamp(&mut self, fixed: bool, elapsed_ms: u64) {
        if fixed {
            self.wall_clock_ms = 0;
            self.build = "fixed".into();
        } else {
            self.wall_clock_ms = elapsed_ms;
            self.build = format!("levylap {}", env!("CARGO_PKG_VERSION"));
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("suite: {}\n", self.suite));
        for c in &self.checks {
            out.push_str(&format!(
                "  {}: {:.6e} (tol {:.2e}) {}\n",
                c.name,
                c.value,
                c.tol,
                if c.pass { "ok" } else { "FAILED" }
            ));
        }
        for s in &self.series {
            out.push_str(&format!("  series {}: {} rows\n", s.name, s.rows.len()));
        }
        out.push_str(&format!("verdict: {}\n", self.verdict));
        out
    }

    fn series_csv(block: &SeriesBlock) -> String {
        let mut out = String::from("n,value_re,value_im,gap\n");
        for r in &block.rows {
            out.push_str(&format!("{},{},{},{}\n", r.n, r.value_re, r.value_im, r.gap));
        }
        out
    }

    /// Write the requested formats; returns the created files.
    pub fn emit(&self, formats: &[String], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("create {}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for f in formats {
            match f.as_str() {
                "json" => {
                    let p = dir.join(format!("{}-report.json", self.suite));
                    write_file(&p, &self.to_json())?;
                    written.push(p);
                }
                "text" => {
                    let p = dir.join(format!("{}-summary.txt", self.suite));
                    write_file(&p, &self.to_text())?;
                    written.push(p);
                }
                "csv" => {
                    for block in &self.series {
                        let p = dir.join(format!("{}-{}.csv", self.suite, block.name));
                        write_file(&p, &Self::series_csv(block))?;
                        written.push(p);
                    }
                }
                other => {
                    return Err(CliError::Config(format!("format: unknown format `{other}`")))
                }
            }
        }
        Ok(written)
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("create {}: {e}", path.display())))?;
    f.write_all(content.as_bytes())
        .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))
}
