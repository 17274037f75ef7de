//! `stats`: paired tests between two methods over an existing results CSV.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use super::mnist::{compare, compare_methods, BenchRow, Comparison};
use crate::common::{write_json, Method};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub input: PathBuf,
    /// Both set: one comparison; both unset: the standard DREG-vs-BASE/SN set.
    pub treatment: Option<Method>,
    pub control: Option<Method>,
    pub metrics: Vec<String>,
}

impl StatsConfig {
    pub fn read(s: &Settings) -> Result<Self> {
        Ok(StatsConfig {
            input: s.opt("input")?.context("stats needs input=<results.csv>")?,
            treatment: s.opt("treatment")?,
            control: s.opt("control")?,
            metrics: s.list("metrics", vec!["tail_ratio".to_string(), "acc".to_string()])?,
        })
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{}: data row {}", path.display(), i + 1)))
        .collect()
}

pub fn run(cfg: &StatsConfig, out: Option<&Path>) -> Result<Vec<Comparison>> {
    let rows = read_rows(&cfg.input)?;
    let comparisons = match (cfg.treatment, cfg.control) {
        (Some(t), Some(c)) => {
            let mut v = Vec::new();
            for m in &cfg.metrics {
                v.extend(compare(&rows, t, c, m)?);
            }
            v
        }
        (None, None) => compare_methods(&rows),
        _ => anyhow::bail!("set both treatment and control, or neither"),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("paired_tests.json"), &comparisons)?;
    }
    Ok(comparisons)
}
