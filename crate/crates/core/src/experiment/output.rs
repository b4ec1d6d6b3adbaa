use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::Result;

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Header {
    pub fn new(config: &ExperimentConfig) -> Self {
        Header { config_hash: config.hash(), seed: config.seed, version: crate::VERSION.to_string() }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Comma-separated table preceded by `#` provenance lines.
pub fn write_table(path: &Path, header: &Header, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# config_hash={} seed={} version={}", header.config_hash, header.seed, header.version)?;
    writeln!(f, "{}", columns.join(","))?;
    for r in rows {
        writeln!(f, "{}", r.join(","))?;
    }
    f.flush()?;
    Ok(())
}
