//! `ordinal`: scalar regression on ratings with DREG, thresholds tuned on
//! the validation split, accuracy and QWK on the test split.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Result};
use dualstream::data::{gen_ordinal_fixture, load_embedding_csv, split, Dataset, Targets};
use dualstream::grad::{LossKind, TrainData};
use dualstream::ordinal::{map_to_class, qwk, threshold_search, DEFAULT_GRID_STEP};
use dualstream::polynet::PolyNetwork;
use dualstream::Real;
use serde::{Deserialize, Serialize};

use super::lambda_sweep::read_split;
use crate::common::{fit, status_name, Act, Hyper, Method, Output, Precision, Reg, DEFAULT_SEEDS};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalConfig {
    /// Embedding CSV (`label,f0,...`); the synthetic fixture when absent.
    pub input: Option<PathBuf>,
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub data_seed: u64,
    pub split: (f64, f64, f64),
    pub hidden: Vec<usize>,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub grid_step: f64,
    pub hyper: Hyper,
    pub precision: Precision,
}

impl Default for OrdinalConfig {
    fn default() -> Self {
        OrdinalConfig {
            input: None,
            n: 2000,
            d: 8,
            noise: 0.3,
            data_seed: 42,
            split: (0.7, 0.15, 0.15),
            hidden: vec![16],
            method: Method::new(Act::Poly, Reg::Dreg),
            seeds: DEFAULT_SEEDS.to_vec(),
            grid_step: DEFAULT_GRID_STEP,
            hyper: Hyper::defaults(100),
            precision: Precision::F64,
        }
    }
}

impl OrdinalConfig {
    pub fn read(s: &Settings) -> Result<Self> {
        let d = OrdinalConfig::default();
        let cfg = OrdinalConfig {
            input: s.opt("input")?.or(d.input),
            n: s.get("n", d.n)?,
            d: s.get("d", d.d)?,
            noise: s.get("noise", d.noise)?,
            data_seed: s.get("data_seed", d.data_seed)?,
            split: read_split(s, d.split)?,
            hidden: s.list("hidden", d.hidden)?,
            method: s.get("method", d.method)?,
            seeds: s.list("seeds", d.seeds)?,
            grid_step: s.get("grid_step", d.grid_step)?,
            hyper: Hyper::read(s, d.hyper)?,
            precision: s.get("precision", d.precision)?,
        };
        ensure!(!cfg.seeds.is_empty(), "seed list is empty");
        Ok(cfg)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Ok(match &self.input {
            Some(p) => load_embedding_csv(p)?,
            None => gen_ordinal_fixture(self.n, self.d, self.noise, self.data_seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalRow {
    pub seed: u64,
    pub status: String,
    pub accuracy: f64,
    pub qwk: f64,
    pub val_qwk: f64,
    /// Sorted cut points joined by `;`.
    pub thresholds: String,
}

fn ratings(ds: &Dataset) -> Result<(Vec<usize>, usize)> {
    match &ds.targets {
        Targets::Ordinal { ratings, levels } => Ok((ratings.clone(), *levels)),
        _ => bail!("ordinal experiment needs rating targets"),
    }
}

fn scores<T: Real>(net: &PolyNetwork<T>, data: &TrainData<T>) -> Result<Vec<f64>> {
    (0..data.x.rows()).map(|i| Ok(net.predict(data.x.row(i))?[0].as_f64())).collect()
}

pub fn run(cfg: &OrdinalConfig, out: Option<&Path>) -> Result<Vec<OrdinalRow>> {
    match cfg.precision {
        Precision::F32 => run_t::<f32>(cfg, out),
        Precision::F64 => run_t::<f64>(cfg, out),
    }
}

fn run_t<T: Real>(cfg: &OrdinalConfig, out_dir: Option<&Path>) -> Result<Vec<OrdinalRow>> {
    let mut out = Output::new(out_dir)?;
    let ds = cfg.dataset()?;
    let s = split(&ds, cfg.split, cfg.data_seed)?;
    let (val_truth, k) = ratings(&s.val)?;
    let (test_truth, _) = ratings(&s.test)?;
    let (tr, va, te): (TrainData<T>, TrainData<T>, TrainData<T>) =
        (s.train.to_train_data(), s.val.to_train_data(), s.test.to_train_data());
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (net, report) = fit(cfg.method, &cfg.hidden, 1, &cfg.hyper, seed, &tr, &va, LossKind::Mse)?;
        let status = status_name(&report.status).to_string();
        if report.diverged() {
            rows.push(OrdinalRow {
                seed,
                status,
                accuracy: f64::NAN,
                qwk: f64::NAN,
                val_qwk: f64::NAN,
                thresholds: String::new(),
            });
            continue;
        }
        let search = threshold_search(&scores(&net, &va)?, &val_truth, k, cfg.grid_step)?;
        let pred: Vec<usize> = scores(&net, &te)?.iter().map(|&y| map_to_class(y, &search.thresholds)).collect();
        let hits = pred.iter().zip(&test_truth).filter(|(p, t)| p == t).count();
        rows.push(OrdinalRow {
            seed,
            status,
            accuracy: hits as f64 / pred.len() as f64,
            qwk: qwk(&pred, &test_truth, k)?,
            val_qwk: search.qwk,
            thresholds: search
                .thresholds
                .as_slice()
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        });
    }
    out.csv("ordinal.csv", &rows)?;
    out.finish("ordinal", cfg.precision, &cfg.seeds, cfg, vec![format!("source: {}", ds.meta.source)])?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_learnable() {
        let cfg = OrdinalConfig {
            n: 600,
            seeds: vec![3],
            hyper: Hyper::defaults(40),
            ..OrdinalConfig::default()
        };
        let rows = run(&cfg, None).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.accuracy > 0.8 && r.qwk > 0.8, "{r:?}");
        let t: Vec<f64> = r.thresholds.split(';').map(|v| v.parse().unwrap()).collect();
        assert_eq!(t.len(), 4);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }
}
