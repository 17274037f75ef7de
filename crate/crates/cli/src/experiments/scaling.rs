//! `scaling-sweep`: test error of a polynomial network and a ReLU MLP as
//! the input dimension or the hidden width grows.

use std::path::Path;

use anyhow::{ensure, Result};
use dualstream::data::{gen_synthetic, split, FamilyKind, SyntheticFamily};
use dualstream::grad::{LossKind, TrainData};
use dualstream::Real;
use serde::{Deserialize, Serialize};

use super::lambda_sweep::{evaluate, read_split};
use crate::common::{fit, status_name, Act, Hyper, Method, Output, Precision, Reg, DEFAULT_SEEDS};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub family: FamilyKind,
    pub d_grid: Vec<usize>,
    pub h_grid: Vec<usize>,
    /// Width used while sweeping `D`.
    pub base_h: usize,
    /// Dimension used while sweeping `H`.
    pub base_d: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub split: (f64, f64, f64),
    pub hyper: Hyper,
    pub precision: Precision,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            family: FamilyKind::Smooth,
            d_grid: vec![16, 32, 64, 128],
            h_grid: vec![4, 8, 16, 32, 64, 128],
            base_h: 16,
            base_d: 10,
            n: 4096,
            seeds: DEFAULT_SEEDS.to_vec(),
            data_seed: 42,
            split: (0.7, 0.15, 0.15),
            hyper: Hyper::defaults(100),
            precision: Precision::F64,
        }
    }
}

impl ScalingConfig {
    pub fn read(s: &Settings) -> Result<Self> {
        let d = ScalingConfig::default();
        let family = match s.opt::<String>("family")? {
            Some(name) => FamilyKind::parse(&name)?,
            None => d.family,
        };
        let cfg = ScalingConfig {
            family,
            d_grid: s.list("d_grid", d.d_grid)?,
            h_grid: s.list("h_grid", d.h_grid)?,
            base_h: s.get("base_h", d.base_h)?,
            base_d: s.get("base_d", d.base_d)?,
            n: s.get("n", d.n)?,
            seeds: s.list("seeds", d.seeds)?,
            data_seed: s.get("data_seed", d.data_seed)?,
            split: read_split(s, d.split)?,
            hyper: Hyper::read(s, d.hyper)?,
            precision: s.get("precision", d.precision)?,
        };
        ensure!(!cfg.seeds.is_empty(), "seed list is empty");
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub axis: String,
    pub value: usize,
    pub model: String,
    pub seed: u64,
    pub test_mse: f64,
    pub status: String,
}

/// The two contenders: polynomial network with DREG and a plain ReLU MLP.
pub const MODELS: [(&str, Method); 2] = [
    ("CR", Method::new(Act::Poly, Reg::Dreg)),
    ("MLP", Method::new(Act::Relu, Reg::Base)),
];

pub fn run(cfg: &ScalingConfig, out: Option<&Path>) -> Result<Vec<ScalingRow>> {
    match cfg.precision {
        Precision::F32 => run_t::<f32>(cfg, out),
        Precision::F64 => run_t::<f64>(cfg, out),
    }
}

fn run_t<T: Real>(cfg: &ScalingConfig, out_dir: Option<&Path>) -> Result<Vec<ScalingRow>> {
    let mut out = Output::new(out_dir)?;
    let mut points: Vec<(&str, usize, usize, usize)> = Vec::new();
    for &d in &cfg.d_grid {
        points.push(("D", d, d, cfg.base_h));
    }
    for &h in &cfg.h_grid {
        points.push(("H", h, cfg.base_d, h));
    }
    let mut rows = Vec::new();
    for (axis, value, d, h) in points {
        let ds = gen_synthetic(&SyntheticFamily::new(cfg.family, d, cfg.n, cfg.data_seed))?;
        let s = split(&ds, cfg.split, cfg.data_seed)?;
        let (tr, va, te): (TrainData<T>, TrainData<T>, TrainData<T>) =
            (s.train.to_train_data(), s.val.to_train_data(), s.test.to_train_data());
        for (name, method) in MODELS {
            for &seed in &cfg.seeds {
                let (net, report) = fit(method, &[h], 1, &cfg.hyper, seed, &tr, &va, LossKind::Mse)?;
                let test_mse = if report.diverged() { f64::NAN } else { evaluate(&net, &te)?.0 };
                rows.push(ScalingRow {
                    axis: axis.into(),
                    value,
                    model: name.into(),
                    seed,
                    test_mse,
                    status: status_name(&report.status).into(),
                });
            }
        }
    }
    out.csv("scaling.csv", &rows)?;
    out.finish("scaling-sweep", cfg.precision, &cfg.seeds, cfg, vec![])?;
    Ok(rows)
}
