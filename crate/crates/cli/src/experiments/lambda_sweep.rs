//! `lambda-sweep`: penalty strength against test error and gradient-norm
//! p90 on the synthetic families.

use std::path::Path;

use anyhow::Result;
use dualstream::data::{gen_synthetic, split, FamilyKind, SyntheticFamily};
use dualstream::grad::{task_loss, LossKind, TrainData};
use dualstream::sensitivity::{input_gradient_norms, percentile_sorted, IgSource};
use dualstream::Real;
use serde::{Deserialize, Serialize};

use crate::common::{fit, mean, status_name, Act, Hyper, Method, Output, Precision, Reg, DEFAULT_SEEDS};
use crate::settings::Settings;

/// The six-point grid plus `10^-2.5`.
pub const DEFAULT_LAMBDAS: [f64; 7] = [0.0, 1e-4, 3e-4, 1e-3, 0.003_162_277_660_168_379_4, 3e-3, 1e-2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    pub families: Vec<FamilyKind>,
    pub d: usize,
    pub n: usize,
    pub hidden: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub split: (f64, f64, f64),
    pub hyper: Hyper,
    pub precision: Precision,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig {
            families: FamilyKind::ALL.to_vec(),
            d: 10,
            n: 4096,
            hidden: vec![16],
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            data_seed: 42,
            split: (0.7, 0.15, 0.15),
            hyper: Hyper::defaults(100),
            precision: Precision::F64,
        }
    }
}

pub(crate) fn read_families(s: &Settings, default: Vec<FamilyKind>) -> Result<Vec<FamilyKind>> {
    let names: Vec<String> = s.list("families", default.iter().map(|f| f.name().to_string()).collect())?;
    names.iter().map(|n| Ok(FamilyKind::parse(n)?)).collect()
}

pub(crate) fn read_split(s: &Settings, d: (f64, f64, f64)) -> Result<(f64, f64, f64)> {
    let v: Vec<f64> = s.list("split", vec![d.0, d.1, d.2])?;
    anyhow::ensure!(v.len() == 3, "split needs three fractions");
    Ok((v[0], v[1], v[2]))
}

impl LambdaConfig {
    pub fn read(s: &Settings) -> Result<Self> {
        let d = LambdaConfig::default();
        Ok(LambdaConfig {
            families: read_families(s, d.families)?,
            d: s.get("d", d.d)?,
            n: s.get("n", d.n)?,
            hidden: s.list("hidden", d.hidden)?,
            lambdas: s.list("lambdas", d.lambdas)?,
            seeds: s.list("seeds", d.seeds)?,
            data_seed: s.get("data_seed", d.data_seed)?,
            split: read_split(s, d.split)?,
            hyper: Hyper::read(s, d.hyper)?,
            precision: s.get("precision", d.precision)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    pub lambda: f64,
    pub seed: u64,
    pub mse: f64,
    pub grad_p90: f64,
    pub status: String,
}

/// Seed-averaged values per (family, λ) relative to λ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauRow {
    pub family: String,
    pub lambda: f64,
    pub mean_mse: f64,
    pub mean_grad_p90: f64,
    pub grad_p90_reduction_pct: f64,
    pub mse_change_pct: f64,
}

pub struct LambdaOutcome {
    pub rows: Vec<SweepRow>,
    pub plateau: Vec<PlateauRow>,
}

impl LambdaOutcome {
    pub fn plateau_at(&self, family: FamilyKind, lambda: f64) -> Option<&PlateauRow> {
        self.plateau.iter().find(|r| r.family == family.name() && r.lambda == lambda)
    }
}

/// Test MSE and p90 of `‖∂f/∂x‖` for one trained network.
pub(crate) fn evaluate<T: Real>(
    net: &dualstream::polynet::PolyNetwork<T>,
    test: &TrainData<T>,
) -> Result<(f64, f64)> {
    let mse = task_loss(net, &test.batch(), LossKind::Mse)?.as_f64();
    let mut norms = input_gradient_norms(net, &test.x, &test.y, LossKind::Mse, IgSource::OutputJacobianFro)?;
    norms.sort_by(f64::total_cmp);
    Ok((mse, percentile_sorted(&norms, 90.0)))
}

pub fn run(cfg: &LambdaConfig, out: Option<&Path>) -> Result<LambdaOutcome> {
    match cfg.precision {
        Precision::F32 => run_t::<f32>(cfg, out),
        Precision::F64 => run_t::<f64>(cfg, out),
    }
}

fn run_t<T: Real>(cfg: &LambdaConfig, out_dir: Option<&Path>) -> Result<LambdaOutcome> {
    let mut out = Output::new(out_dir)?;
    let method = Method::new(Act::Poly, Reg::Dreg);
    let mut rows = Vec::new();
    for &family in &cfg.families {
        let ds = gen_synthetic(&SyntheticFamily::new(family, cfg.d, cfg.n, cfg.data_seed))?;
        let s = split(&ds, cfg.split, cfg.data_seed)?;
        let (tr, va, te): (TrainData<T>, TrainData<T>, TrainData<T>) =
            (s.train.to_train_data(), s.val.to_train_data(), s.test.to_train_data());
        for &lambda in &cfg.lambdas {
            let hyper = Hyper { lambda, ..cfg.hyper.clone() };
            for &seed in &cfg.seeds {
                let (net, report) = fit(method, &cfg.hidden, 1, &hyper, seed, &tr, &va, LossKind::Mse)?;
                let (mse, grad_p90) = if report.diverged() {
                    (f64::NAN, f64::NAN)
                } else {
                    evaluate(&net, &te)?
                };
                rows.push(SweepRow {
                    family: family.name().into(),
                    lambda,
                    seed,
                    mse,
                    grad_p90,
                    status: status_name(&report.status).into(),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.family
            .cmp(&b.family)
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.seed.cmp(&b.seed))
    });
    let plateau = plateau(&rows);
    out.csv("lambda_sweep.csv", &rows)?;
    out.csv("plateau.csv", &plateau)?;
    out.finish(
        "lambda-sweep",
        cfg.precision,
        &cfg.seeds,
        cfg,
        vec!["grad_p90 = 90th percentile of ||df/dx||_2 on the test split; diverged runs excluded from plateau means".into()],
    )?;
    Ok(LambdaOutcome { rows, plateau })
}

fn plateau(rows: &[SweepRow]) -> Vec<PlateauRow> {
    let mut keys: Vec<(String, f64)> = rows.iter().map(|r| (r.family.clone(), r.lambda)).collect();
    keys.dedup();
    let means = |fam: &str, lambda: f64| {
        let ok: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| r.family == fam && r.lambda == lambda && r.status != "diverged")
            .collect();
        let mse: Vec<f64> = ok.iter().map(|r| r.mse).collect();
        let g: Vec<f64> = ok.iter().map(|r| r.grad_p90).collect();
        if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (mean(&mse), mean(&g))
        }
    };
    keys.into_iter()
        .map(|(fam, lambda)| {
            let (m, g) = means(&fam, lambda);
            let (m0, g0) = means(&fam, 0.0);
            PlateauRow {
                family: fam,
                lambda,
                mean_mse: m,
                mean_grad_p90: g,
                grad_p90_reduction_pct: 100.0 * (g0 - g) / g0,
                mse_change_pct: 100.0 * (m - m0) / m0,
            }
        })
        .collect()
}
