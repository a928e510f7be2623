use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, ExperimentKind};

/// A named result. Estimates carry a standard error; deterministic values
/// are flagged exact instead.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scalar {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub exact: bool,
}

impl Scalar {
    pub fn exact(name: impl Into<String>, value: f64) -> Scalar {
        Scalar { name: name.into(), value, stderr: None, exact: true }
    }

    pub fn estimate(name: impl Into<String>, value: f64, stderr: f64) -> Scalar {
        Scalar { name: name.into(), value, stderr: Some(stderr), exact: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub git_revision: String,
    pub config_hash: String,
    pub version: String,
}

/// Summary of one run. Wall time is kept out of it so that repeated runs
/// produce identical files; it goes to `run.log`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub scalars: Vec<Scalar>,
    pub checks: Vec<Check>,
    pub metadata: Metadata,
    pub config: ExperimentConfig,
}

impl ResultRecord {
    pub fn new(config: &ExperimentConfig) -> ResultRecord {
        ResultRecord {
            experiment: config.experiment,
            seed: config.seed,
            scalars: Vec::new(),
            checks: Vec::new(),
            metadata: Metadata {
                git_revision: git_revision(),
                config_hash: config.hash(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config: config.clone(),
        }
    }

    pub fn push(&mut self, s: Scalar) {
        self.scalars.push(s);
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn scalar(&self, name: &str) -> Option<&Scalar> {
        self.scalars.iter().find(|s| s.name == name)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Revision of the source tree, from `TRAPWALK_GIT_REV` or `git`.
pub fn git_revision() -> String {
    if let Ok(rev) = std::env::var("TRAPWALK_GIT_REV") {
        return rev;
    }
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Cell {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Cell {
        Cell::Text(x)
    }
}

/// Output directory of a run; tracks the files written.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        std::fs::create_dir_all(root)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.root.join(name);
        let f = File::create(&p).map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))?;
        self.written.push(p);
        Ok(BufWriter::new(f))
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Cell>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            let fields: Vec<String> = row
                .into_iter()
                .map(|c| match c {
                    Cell::Num(x) => fmt_num(x),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(s) => s,
                })
                .collect();
            w.write_record(&fields).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
