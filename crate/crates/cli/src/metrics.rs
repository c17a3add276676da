//! Newline-delimited JSON metrics: a header record, then one record per
//! epoch in `EpochMetrics` field order. Each line is flushed as written, so
//! an interrupted run leaves a readable prefix.

use std::fs::{self, File};
use std::io::{LineWriter, Write};
use std::path::{Path, PathBuf};

use ega_core::train::EpochMetrics;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub const METRICS_SCHEMA: &str = "ega-epoch-metrics";
pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetricsHeader {
    pub schema: String,
    pub version: u32,
}

pub struct MetricsWriter {
    path: PathBuf,
    out: LineWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: LineWriter::new(file),
        };
        let header = MetricsHeader {
            schema: METRICS_SCHEMA.into(),
            version: METRICS_VERSION,
        };
        w.line(&serde_json::to_string(&header).expect("header serialises"))?;
        Ok(w)
    }

    pub fn write(&mut self, m: &EpochMetrics) -> Result<()> {
        self.line(&serde_json::to_string(m).expect("metrics serialise"))
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}

/// Parses a metrics file, checking its header.
pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let header: MetricsHeader = lines
        .next()
        .ok_or_else(|| bad("empty metrics file".into()))
        .and_then(|l| serde_json::from_str(l).map_err(|e| bad(format!("header: {e}"))))?;
    if header.schema != METRICS_SCHEMA || header.version != METRICS_VERSION {
        return Err(bad(format!(
            "unsupported metrics schema {} v{}",
            header.schema, header.version
        )));
    }
    lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(format!("line {}: {e}", i + 2))))
        .collect()
}
