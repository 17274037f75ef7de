//! `mnist-bench`: method × capacity × seed grid on an IDX digit set with
//! accuracy and input-gradient statistics per run.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use dualstream::data::{load_idx, split, Splits, Targets};
use dualstream::grad::{Labels, LossKind, TrainData};
use dualstream::polynet::PolyNetwork;
use dualstream::regularizers::{spectral_norm_estimate, PowerIterState};
use dualstream::robust::accuracy;
use dualstream::sensitivity::{efficiency_kpi, input_gradient_norms, summarize, IgSource, SensitivityReport};
use dualstream::stats::{paired_t_test, sign_test, wilcoxon_signed_rank, TestResult};
use dualstream::Real;
use serde::{Deserialize, Serialize};

use crate::common::{fit, status_name, Act, Hyper, Method, Output, Precision, Reg, DEFAULT_SEEDS};
use crate::settings::Settings;

/// Where the digits come from and how they are split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub limit: Option<usize>,
    pub split: (f64, f64, f64),
    pub split_seed: u64,
}

impl Default for MnistSource {
    fn default() -> Self {
        MnistSource {
            images: "data/mnist/images-idx3-ubyte.gz".into(),
            labels: "data/mnist/labels-idx1-ubyte.gz".into(),
            limit: Some(10_000),
            split: (0.7, 0.1, 0.2),
            split_seed: 7,
        }
    }
}

impl MnistSource {
    pub fn read(s: &Settings) -> Result<Self> {
        let d = MnistSource::default();
        let fr: Vec<f64> = s.list("split", vec![d.split.0, d.split.1, d.split.2])?;
        if fr.len() != 3 {
            return Err(anyhow!("split needs three fractions"));
        }
        Ok(MnistSource {
            images: s.get("images", d.images)?,
            labels: s.get("labels", d.labels)?,
            limit: s.opt("limit")?.or(d.limit),
            split: (fr[0], fr[1], fr[2]),
            split_seed: s.get("split_seed", d.split_seed)?,
        })
    }

    pub fn load(&self) -> Result<Splits> {
        let ds = load_idx(&self.images, &self.labels, self.limit)
            .with_context(|| format!("loading {} / {}", self.images.display(), self.labels.display()))?;
        Ok(split(&ds, self.split, self.split_seed)?)
    }
}

pub fn class_labels(t: &Targets) -> Result<Vec<usize>> {
    match t {
        Targets::Classes { labels, .. } => Ok(labels.clone()),
        _ => Err(anyhow!("expected class labels")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Capacity(pub usize, pub usize);

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

impl FromStr for Capacity {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once('x').ok_or_else(|| anyhow!("capacity '{s}' is not H1xH2"))?;
        Ok(Capacity(a.trim().parse()?, b.trim().parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistConfig {
    pub source: MnistSource,
    pub methods: Vec<Method>,
    pub capacities: Vec<Capacity>,
    pub seeds: Vec<u64>,
    pub hyper: Hyper,
    pub precision: Precision,
    pub save_models: bool,
}

impl Default for MnistConfig {
    fn default() -> Self {
        MnistConfig {
            source: MnistSource::default(),
            methods: Method::all(),
            capacities: vec![Capacity(32, 16)],
            seeds: DEFAULT_SEEDS.to_vec(),
            hyper: Hyper::defaults(30),
            precision: Precision::F64,
            save_models: true,
        }
    }
}

impl MnistConfig {
    pub fn read(s: &Settings) -> Result<Self> {
        let d = MnistConfig::default();
        Ok(MnistConfig {
            source: MnistSource::read(s)?,
            methods: s.list("methods", d.methods)?,
            capacities: s.list("capacities", d.capacities)?,
            seeds: s.list("seeds", d.seeds)?,
            hyper: Hyper::read(s, d.hyper)?,
            precision: s.get("precision", d.precision)?,
            save_models: s.get("save_models", d.save_models)?,
        })
    }
}

/// One results row; columns up to `tail_ratio` are the fixed sensitivity
/// schema, `status` is appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub h1: usize,
    pub h2: usize,
    pub seed: u64,
    pub acc: f64,
    pub ig_mean: f64,
    pub ig_p95: f64,
    pub ig_p99: f64,
    pub ig_max: f64,
    pub tail_ratio: f64,
    pub status: String,
}

impl BenchRow {
    fn new(method: Method, cap: Capacity, seed: u64, acc: f64, r: &SensitivityReport, status: &str) -> Self {
        BenchRow {
            method: method.to_string(),
            h1: cap.0,
            h2: cap.1,
            seed,
            acc,
            ig_mean: r.mean,
            ig_p95: r.p95,
            ig_p99: r.p99,
            ig_max: r.max,
            tail_ratio: r.tail_ratio,
            status: status.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub h1: usize,
    pub h2: usize,
    pub seed: u64,
    pub status: String,
    pub params: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Largest spectral norm over weight matrices of the returned network.
    pub max_sigma: f64,
    pub efficiency_kpi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub h1: usize,
    pub h2: usize,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub capacity: String,
    pub treatment: String,
    pub control: String,
    pub metric: String,
    pub n_pairs: usize,
    pub mean_difference: f64,
    pub tests: Vec<Result<TestResult, String>>,
}

pub struct TrainedModel {
    pub method: Method,
    pub capacity: Capacity,
    pub seed: u64,
    pub net: PolyNetwork<f64>,
}

pub struct MnistOutcome {
    pub rows: Vec<BenchRow>,
    pub jacobian_rows: Vec<BenchRow>,
    pub runs: Vec<RunRow>,
    pub curves: Vec<CurveRow>,
    pub comparisons: Vec<Comparison>,
    pub models: Vec<TrainedModel>,
}

impl MnistOutcome {
    pub fn rows_for(&self, method: Method) -> Vec<&BenchRow> {
        self.rows.iter().filter(|r| r.method == method.to_string()).collect()
    }
}

/// Largest singular value over all weight matrices (fresh power iteration).
pub fn max_sigma<T: Real>(net: &PolyNetwork<T>) -> f64 {
    let net = net.cast::<f64>();
    net.layers
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let mut st = PowerIterState::new(p.w.rows(), p.w.cols(), 0xC0FFEE + l as u64);
            spectral_norm_estimate(&p.w, 500, &mut st)
        })
        .fold(0.0, f64::max)
}

pub fn run(cfg: &MnistConfig, out: Option<&std::path::Path>) -> Result<MnistOutcome> {
    match cfg.precision {
        Precision::F32 => run_t::<f32>(cfg, out),
        Precision::F64 => run_t::<f64>(cfg, out),
    }
}

fn run_t<T: Real>(cfg: &MnistConfig, out_dir: Option<&std::path::Path>) -> Result<MnistOutcome> {
    let mut out = Output::new(out_dir)?;
    let splits = cfg.source.load()?;
    let train_set: TrainData<T> = splits.train.to_train_data();
    let val_set: TrainData<T> = splits.val.to_train_data();
    let test_set: TrainData<T> = splits.test.to_train_data();
    let test_labels = class_labels(&splits.test.targets)?;
    let n_classes = 10;

    let mut outcome = MnistOutcome {
        rows: Vec::new(),
        jacobian_rows: Vec::new(),
        runs: Vec::new(),
        curves: Vec::new(),
        comparisons: Vec::new(),
        models: Vec::new(),
    };
    if cfg.save_models {
        if let Some(d) = out.path("models") {
            std::fs::create_dir_all(d)?;
        }
    }

    for &cap in &cfg.capacities {
        for &method in &cfg.methods {
            for &seed in &cfg.seeds {
                let (net, report) = fit(
                    method,
                    &[cap.0, cap.1],
                    n_classes,
                    &cfg.hyper,
                    seed,
                    &train_set,
                    &val_set,
                    LossKind::CrossEntropy,
                )?;
                let status = status_name(&report.status);
                let acc = accuracy(&net, &test_set.x, &test_labels)?;
                let y = Labels::Classes(test_labels.clone());
                let mut reports = Vec::new();
                for source in [IgSource::LossGrad, IgSource::OutputJacobianFro] {
                    let norms = input_gradient_norms(&net, &test_set.x, &y, LossKind::CrossEntropy, source)?;
                    reports.push(summarize(&norms, source)?);
                }
                outcome.rows.push(BenchRow::new(method, cap, seed, acc, &reports[0], status));
                outcome.jacobian_rows.push(BenchRow::new(method, cap, seed, acc, &reports[1], status));
                outcome.runs.push(RunRow {
                    method: method.to_string(),
                    h1: cap.0,
                    h2: cap.1,
                    seed,
                    status: status.into(),
                    params: net.param_count(),
                    epochs_run: report.epochs.len(),
                    best_epoch: report.best_epoch,
                    best_val_loss: report.best_val_loss,
                    max_sigma: max_sigma(&net),
                    efficiency_kpi: efficiency_kpi(acc * 100.0, net.param_count())?,
                });
                for e in &report.epochs {
                    outcome.curves.push(CurveRow {
                        method: method.to_string(),
                        h1: cap.0,
                        h2: cap.1,
                        seed,
                        epoch: e.epoch,
                        train_loss: e.train_loss,
                        val_loss: e.val_loss,
                    });
                }
                let net64 = net.cast::<f64>();
                if cfg.save_models {
                    let name = format!("models/{method}_{cap}_{seed}.json");
                    if let Some(p) = out.path(&name) {
                        net64.save(&p)?;
                        out.note_written(&name);
                    }
                }
                outcome.models.push(TrainedModel {
                    method,
                    capacity: cap,
                    seed,
                    net: net64,
                });
            }
        }
    }

    outcome.comparisons = compare_methods(&outcome.rows);
    out.csv("results.csv", &outcome.rows)?;
    out.csv("results_jacobian.csv", &outcome.jacobian_rows)?;
    out.csv("runs.csv", &outcome.runs)?;
    out.csv("curves.csv", &outcome.curves)?;
    out.json("paired_tests.json", &outcome.comparisons)?;
    out.finish(
        "mnist-bench",
        cfg.precision,
        &cfg.seeds,
        cfg,
        vec!["input-gradient statistics on the test split; results.csv uses loss_grad, results_jacobian.csv output_jacobian_fro".into()],
    )?;
    Ok(outcome)
}

/// DREG against BASE and SN for each activation and capacity, paired by seed.
pub fn compare_methods(rows: &[BenchRow]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for act in [Act::Poly, Act::Relu] {
        for control in [Reg::Base, Reg::Sn] {
            for metric in ["tail_ratio", "acc"] {
                out.extend(
                    compare(rows, Method::new(act, Reg::Dreg), Method::new(act, control), metric)
                        .expect("known metric"),
                );
            }
        }
    }
    out.sort_by(|a, b| a.capacity.cmp(&b.capacity));
    out
}

pub const METRICS: [&str; 6] = ["acc", "ig_mean", "ig_p95", "ig_p99", "ig_max", "tail_ratio"];

fn metric_value(r: &BenchRow, metric: &str) -> Option<f64> {
    Some(match metric {
        "acc" => r.acc,
        "ig_mean" => r.ig_mean,
        "ig_p95" => r.ig_p95,
        "ig_p99" => r.ig_p99,
        "ig_max" => r.ig_max,
        "tail_ratio" => r.tail_ratio,
        _ => return None,
    })
}

/// Paired tests of `treatment` against `control` on one metric, one entry
/// per capacity that has at least one matched seed. Diverged runs are
/// left out of the pairing.
pub fn compare(rows: &[BenchRow], treatment: Method, control: Method, metric: &str) -> Result<Vec<Comparison>> {
    if !METRICS.contains(&metric) {
        return Err(anyhow!("unknown metric '{metric}' (expected one of {})", METRICS.join(", ")));
    }
    let mut caps: Vec<(usize, usize)> = rows.iter().map(|r| (r.h1, r.h2)).collect();
    caps.sort_unstable();
    caps.dedup();
    let (treat, control) = (treatment.to_string(), control.to_string());
    let mut out = Vec::new();
    for (h1, h2) in caps {
        let pick = |m: &str| {
            let mut v: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.method == m && r.h1 == h1 && r.h2 == h2 && r.status != "diverged")
                .collect();
            v.sort_by_key(|r| r.seed);
            v
        };
        let (a, b) = (pick(&treat), pick(&control));
        let pairs: Vec<(&BenchRow, &BenchRow)> = a
            .iter()
            .filter_map(|ra| b.iter().find(|rb| rb.seed == ra.seed).map(|rb| (*ra, *rb)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let get = |r: &BenchRow| metric_value(r, metric).expect("checked above");
        let xa: Vec<f64> = pairs.iter().map(|(p, _)| get(p)).collect();
        let xb: Vec<f64> = pairs.iter().map(|(_, q)| get(q)).collect();
        let mean_difference = xa.iter().zip(&xb).map(|(p, q)| p - q).sum::<f64>() / xa.len() as f64;
        out.push(Comparison {
            capacity: format!("{h1}x{h2}"),
            treatment: treat.clone(),
            control: control.clone(),
            metric: metric.into(),
            n_pairs: pairs.len(),
            mean_difference,
            tests: vec![
                paired_t_test(&xa, &xb).map_err(|e| e.to_string()),
                wilcoxon_signed_rank(&xa, &xb).map_err(|e| e.to_string()),
                sign_test(&xa, &xb).map_err(|e| e.to_string()),
            ],
        });
    }
    Ok(out)
}
