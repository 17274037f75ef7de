//! `train`: one network on MNIST or a synthetic family, saved with its
//! learning curve.

use std::path::Path;

use anyhow::{Context, Result};
use dualstream::data::{gen_synthetic, split, FamilyKind, Splits, SyntheticFamily};
use dualstream::grad::{LossKind, TrainData};
use dualstream::robust::accuracy;
use dualstream::Real;
use serde::{Deserialize, Serialize};

use super::lambda_sweep::{evaluate, read_split};
use super::mnist::{class_labels, MnistSource};
use crate::common::{fit, status_name, Act, Hyper, Method, Output, Precision, Reg};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainSource {
    Mnist(MnistSource),
    Synthetic {
        family: FamilyKind,
        d: usize,
        n: usize,
        data_seed: u64,
        split: (f64, f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub source: TrainSource,
    pub method: Method,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub hyper: Hyper,
    pub precision: Precision,
}

impl TrainSettings {
    pub fn read(s: &Settings) -> Result<Self> {
        let dataset: String = s.get("dataset", "mnist".to_string())?;
        let mnist = dataset == "mnist";
        let source = if mnist {
            TrainSource::Mnist(MnistSource::read(s)?)
        } else {
            TrainSource::Synthetic {
                family: FamilyKind::parse(&dataset)?,
                d: s.get("d", 10)?,
                n: s.get("n", 4096)?,
                data_seed: s.get("data_seed", 42)?,
                split: read_split(s, (0.7, 0.15, 0.15))?,
            }
        };
        let seeds: Vec<u64> = s.list("seeds", vec![1337])?;
        Ok(TrainSettings {
            source,
            method: s.get("method", Method::new(Act::Poly, Reg::Dreg))?,
            hidden: s.list("hidden", if mnist { vec![32, 16] } else { vec![16] })?,
            seed: s.get("seed", seeds[0])?,
            hyper: Hyper::read(s, Hyper::defaults(if mnist { 30 } else { 100 }))?,
            precision: s.get("precision", Precision::F64)?,
        })
    }
}

/// Summary of the single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub method: String,
    pub seed: u64,
    pub status: String,
    pub params: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Accuracy for classification, MSE for regression.
    pub test_metric: String,
    pub test_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn run(cfg: &TrainSettings, out: Option<&Path>) -> Result<TrainRow> {
    match cfg.precision {
        Precision::F32 => run_t::<f32>(cfg, out),
        Precision::F64 => run_t::<f64>(cfg, out),
    }
}

fn run_t<T: Real>(cfg: &TrainSettings, out_dir: Option<&Path>) -> Result<TrainRow> {
    let mut out = Output::new(out_dir)?;
    let (splits, classes): (Splits, Option<usize>) = match &cfg.source {
        TrainSource::Mnist(src) => (src.load()?, Some(10)),
        TrainSource::Synthetic {
            family,
            d,
            n,
            data_seed,
            split: fr,
        } => (
            split(&gen_synthetic(&SyntheticFamily::new(*family, *d, *n, *data_seed))?, *fr, *data_seed)?,
            None,
        ),
    };
    let (tr, va, te): (TrainData<T>, TrainData<T>, TrainData<T>) =
        (splits.train.to_train_data(), splits.val.to_train_data(), splits.test.to_train_data());
    let (loss, out_dim) = match classes {
        Some(k) => (LossKind::CrossEntropy, k),
        None => (LossKind::Mse, 1),
    };
    let (net, report) = fit(cfg.method, &cfg.hidden, out_dim, &cfg.hyper, cfg.seed, &tr, &va, loss)?;
    let (test_metric, test_value) = if report.diverged() {
        ("none", f64::NAN)
    } else if classes.is_some() {
        ("accuracy", accuracy(&net, &te.x, &class_labels(&splits.test.targets)?)?)
    } else {
        ("mse", evaluate(&net, &te)?.0)
    };
    let row = TrainRow {
        method: cfg.method.to_string(),
        seed: cfg.seed,
        status: status_name(&report.status).into(),
        params: net.param_count(),
        epochs_run: report.epochs.len(),
        best_epoch: report.best_epoch,
        best_val_loss: report.best_val_loss,
        test_metric: test_metric.into(),
        test_value,
    };
    let curve: Vec<EpochRow> = report
        .epochs
        .iter()
        .map(|e| EpochRow {
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
        })
        .collect();
    out.csv("train.csv", std::slice::from_ref(&row))?;
    out.csv("curve.csv", &curve)?;
    if let Some(p) = out.path("model.json") {
        net.cast::<f64>().save(&p).with_context(|| format!("saving {}", p.display()))?;
        out.note_written("model.json");
    }
    out.finish("train", cfg.precision, &[cfg.seed], cfg, vec![])?;
    Ok(row)
}
