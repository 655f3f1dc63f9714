//! CSV and manifest writers.
//!
//! Floats are written with Rust's shortest round-trip formatting, and vector
//! actions as `;`-separated components, so identical traces give identical
//! bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::evaluation::{AggregateSeries, TrialTrace};

/// Bumped whenever a CSV header or the manifest layout changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_HEADER: &str = "trial,episode,agent,variant,x,xhat,cvar_est,cvar_true,n_t,r_t,grad_norm,clamps";
pub const AGGREGATE_HEADER: &str = "episode,variant,metric,mean,std,trials";
pub const SCHEDULE_HEADER: &str = "t,n_t,r_t";
pub const SUMMARY_HEADER: &str = "variant,trial,agent,final_x,terminal_cvar,episodes_to_within,regret";

fn join(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|c| c.to_string()).collect();
    parts.join(";")
}

pub fn trace_csv<'a>(traces: impl IntoIterator<Item = &'a TrialTrace>) -> String {
    let mut s = String::new();
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for tr in traces {
        for e in &tr.episodes {
            for (i, a) in e.agents.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    tr.trial,
                    e.episode,
                    i,
                    tr.variant,
                    join(&a.x),
                    join(&a.xhat),
                    a.cvar_est,
                    a.cvar_true,
                    e.n_t,
                    e.r_t,
                    a.grad_norm,
                    a.clamps
                );
            }
        }
    }
    s
}

pub fn aggregate_csv<'a>(series: impl IntoIterator<Item = &'a AggregateSeries>) -> String {
    let mut s = String::new();
    s.push_str(AGGREGATE_HEADER);
    s.push('\n');
    for a in series {
        for (e, (m, sd)) in a.mean.iter().zip(&a.std).enumerate() {
            let _ = writeln!(s, "{},{},{},{},{},{}", e + 1, a.variant, a.metric, m, sd, a.trials);
        }
    }
    s
}

pub fn schedule_csv(counts: &[usize], radii: &[f64]) -> String {
    let mut s = String::new();
    s.push_str(SCHEDULE_HEADER);
    s.push('\n');
    for (t, (n, r)) in counts.iter().zip(radii).enumerate() {
        let _ = writeln!(s, "{},{},{}", t + 1, n, r);
    }
    s
}

/// One row of the per-trial summary file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub trial: usize,
    /// Agent index, or `None` for the agent-averaged row.
    pub agent: Option<usize>,
    pub final_x: Option<Vec<f64>>,
    pub terminal_cvar: f64,
    pub episodes_to_within: usize,
    pub regret: Option<f64>,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.variant,
            r.trial,
            r.agent.map_or("mean".to_string(), |a| a.to_string()),
            r.final_x.as_deref().map_or(String::new(), join),
            r.terminal_cvar,
            r.episodes_to_within,
            r.regret.map_or(String::new(), |v| v.to_string())
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Lowercase hex SHA-256 of the compact JSON form with object keys sorted.
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    // `serde_json::Value` keeps object keys in a sorted map.
    let v = serde_json::to_value(value)?;
    Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes()))
}

/// Writes through a temporary file and renames into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Writes `contents` to `dir/name` and returns its manifest entry.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<FileEntry> {
    write_atomic(&dir.join(name), contents.as_bytes())?;
    Ok(FileEntry {
        name: name.to_string(),
        bytes: contents.len() as u64,
        sha256: sha256_hex(contents.as_bytes()),
    })
}
