//! `fairfight`: polynomial networks against ReLU MLPs at matched parameter
//! budgets on the synthetic suite.

use std::path::Path;

use anyhow::{bail, Result};
use dualstream::data::{gen_synthetic, split, FamilyKind, SyntheticFamily};
use dualstream::grad::{LossKind, TrainData};
use dualstream::polynet::DEFAULT_DEGREE;
use dualstream::Real;
use serde::{Deserialize, Serialize};

use super::lambda_sweep::{evaluate, read_families, read_split};
use crate::common::{fit, mean, status_name, Act, Hyper, Method, Output, Precision, Reg, DEFAULT_SEEDS};
use crate::settings::Settings;

/// Parameters of `D → H → … → H → 1` with `depth` hidden layers of width `h`.
/// Polynomial units carry `G` coefficients each.
pub fn param_count(d: usize, h: usize, depth: usize, act: Act) -> usize {
    let per_unit = match act {
        Act::Poly => DEFAULT_DEGREE,
        Act::Relu => 0,
    };
    let mut total = 0;
    let mut fan_in = d;
    for _ in 0..depth {
        total += fan_in * h + h + h * per_unit;
        fan_in = h;
    }
    total + fan_in + 1
}

/// Width whose count is nearest to `budget` (ties to the smaller width);
/// fails when even the best is more than `tolerance` away.
pub fn solve_width(budget: usize, d: usize, depth: usize, act: Act, tolerance: f64) -> Result<(usize, usize)> {
    let mut best = (1, param_count(d, 1, depth, act));
    let mut h = 1;
    loop {
        let c = param_count(d, h, depth, act);
        if c.abs_diff(budget) < best.1.abs_diff(budget) {
            best = (h, c);
        }
        if c > budget {
            break;
        }
        h += 1;
    }
    let rel = best.1.abs_diff(budget) as f64 / budget as f64;
    if rel > tolerance {
        let below = (1..=h).rev().map(|w| (w, param_count(d, w, depth, act))).find(|(_, c)| *c <= budget);
        let above = (h, param_count(d, h, depth, act));
        bail!(
            "budget {budget} unreachable within {:.0}%: nearest widths {below:?} and {above:?} (width, params)",
            tolerance * 100.0
        );
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairfightConfig {
    pub families: Vec<FamilyKind>,
    pub d: usize,
    pub n: usize,
    pub depth: usize,
    pub cr_budget: usize,
    pub mlp_budgets: Vec<usize>,
    pub tolerance: f64,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub split: (f64, f64, f64),
    pub hyper: Hyper,
    pub precision: Precision,
}

impl Default for FairfightConfig {
    fn default() -> Self {
        FairfightConfig {
            families: FamilyKind::ALL.to_vec(),
            d: 10,
            n: 4096,
            depth: 1,
            cr_budget: 3300,
            mlp_budgets: vec![3300, 51_200],
            tolerance: 0.10,
            seeds: DEFAULT_SEEDS.to_vec(),
            data_seed: 42,
            split: (0.7, 0.15, 0.15),
            hyper: Hyper::defaults(100),
            precision: Precision::F64,
        }
    }
}

impl FairfightConfig {
    pub fn read(s: &Settings) -> Result<Self> {
        let d = FairfightConfig::default();
        Ok(FairfightConfig {
            families: read_families(s, d.families)?,
            d: s.get("d", d.d)?,
            n: s.get("n", d.n)?,
            depth: s.get("depth", d.depth)?,
            cr_budget: s.get("cr_budget", d.cr_budget)?,
            mlp_budgets: s.list("mlp_budgets", d.mlp_budgets)?,
            tolerance: s.get("tolerance", d.tolerance)?,
            seeds: s.list("seeds", d.seeds)?,
            data_seed: s.get("data_seed", d.data_seed)?,
            split: read_split(s, d.split)?,
            hyper: Hyper::read(s, d.hyper)?,
            precision: s.get("precision", d.precision)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairfightRow {
    pub model: String,
    pub family: String,
    pub seed: u64,
    pub width: usize,
    pub params: usize,
    pub test_mse: f64,
    pub status: String,
}

/// Suite average per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub params: usize,
    pub test_mse: f64,
}

pub struct FairfightOutcome {
    pub rows: Vec<FairfightRow>,
    pub summary: Vec<SummaryRow>,
}

impl FairfightOutcome {
    pub fn mse(&self, model: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.model == model).map(|r| r.test_mse)
    }
}

struct Contender {
    name: String,
    method: Method,
    width: usize,
    params: usize,
}

pub fn run(cfg: &FairfightConfig, out: Option<&Path>) -> Result<FairfightOutcome> {
    match cfg.precision {
        Precision::F32 => run_t::<f32>(cfg, out),
        Precision::F64 => run_t::<f64>(cfg, out),
    }
}

fn label(prefix: &str, params: usize) -> String {
    format!("{prefix}({:.1}k)", params as f64 / 1000.0)
}

fn run_t<T: Real>(cfg: &FairfightConfig, out_dir: Option<&Path>) -> Result<FairfightOutcome> {
    let mut out = Output::new(out_dir)?;
    let (cr_w, cr_p) = solve_width(cfg.cr_budget, cfg.d, cfg.depth, Act::Poly, cfg.tolerance)?;
    let mut contenders = vec![
        Contender {
            name: label("CR_DREG", cr_p),
            method: Method::new(Act::Poly, Reg::Dreg),
            width: cr_w,
            params: cr_p,
        },
        Contender {
            name: label("CR_BASE", cr_p),
            method: Method::new(Act::Poly, Reg::Base),
            width: cr_w,
            params: cr_p,
        },
    ];
    for &b in &cfg.mlp_budgets {
        let (w, p) = solve_width(b, cfg.d, cfg.depth, Act::Relu, cfg.tolerance)?;
        contenders.push(Contender {
            name: label("MLP", p),
            method: Method::new(Act::Relu, Reg::Base),
            width: w,
            params: p,
        });
    }

    let mut rows = Vec::new();
    for &family in &cfg.families {
        let ds = gen_synthetic(&SyntheticFamily::new(family, cfg.d, cfg.n, cfg.data_seed))?;
        let s = split(&ds, cfg.split, cfg.data_seed)?;
        let (tr, va, te): (TrainData<T>, TrainData<T>, TrainData<T>) =
            (s.train.to_train_data(), s.val.to_train_data(), s.test.to_train_data());
        for c in &contenders {
            for &seed in &cfg.seeds {
                let hidden = vec![c.width; cfg.depth];
                let (net, report) = fit(c.method, &hidden, 1, &cfg.hyper, seed, &tr, &va, LossKind::Mse)?;
                let test_mse = if report.diverged() { f64::NAN } else { evaluate(&net, &te)?.0 };
                rows.push(FairfightRow {
                    model: c.name.clone(),
                    family: family.name().into(),
                    seed,
                    width: c.width,
                    params: c.params,
                    test_mse,
                    status: status_name(&report.status).into(),
                });
            }
        }
    }
    let summary = contenders
        .iter()
        .map(|c| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.model == c.name && r.status != "diverged")
                .map(|r| r.test_mse)
                .collect();
            SummaryRow {
                model: c.name.clone(),
                params: c.params,
                test_mse: if v.is_empty() { f64::NAN } else { mean(&v) },
            }
        })
        .collect();
    let outcome = FairfightOutcome { rows, summary };
    out.csv("fairfight_runs.csv", &outcome.rows)?;
    out.csv("fairfight.csv", &outcome.summary)?;
    out.finish(
        "fairfight",
        cfg.precision,
        &cfg.seeds,
        cfg,
        vec![format!("widths: CR {cr_w} ({cr_p} params); depth {}", cfg.depth)],
    )?;
    Ok(outcome)
}
