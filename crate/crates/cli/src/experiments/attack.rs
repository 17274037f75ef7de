//! `attack`: PGD and corruption probes against a saved classifier on the
//! MNIST test split.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use dualstream::grad::TrainData;
use dualstream::polynet::PolyNetwork;
use dualstream::robust::{robust_accuracy, AttackConfig, CorruptionKind, Probe, RobustRow};
use dualstream::Real;
use serde::{Deserialize, Serialize};

use super::mnist::{class_labels, MnistSource};
use crate::common::{Output, Precision};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSettings {
    pub model: PathBuf,
    pub source: MnistSource,
    /// Budgets in units of 1/255.
    pub eps_255: Vec<f64>,
    pub steps: usize,
    pub corruptions: Vec<CorruptionKind>,
    pub severities: Vec<usize>,
    pub seed: u64,
    /// Evaluate only the first N test rows.
    pub max_samples: Option<usize>,
    pub precision: Precision,
}

impl AttackSettings {
    pub fn new(model: PathBuf) -> Self {
        AttackSettings {
            model,
            source: MnistSource::default(),
            eps_255: vec![0.0, 2.0, 4.0, 8.0],
            steps: 10,
            corruptions: vec![CorruptionKind::GaussianNoise, CorruptionKind::ImpulseNoise],
            severities: vec![1, 2, 3, 4, 5],
            seed: 0,
            max_samples: None,
            precision: Precision::F64,
        }
    }

    pub fn read(s: &Settings) -> Result<Self> {
        let model: PathBuf = s.opt("model")?.context("attack needs model=<checkpoint.json>")?;
        let d = AttackSettings::new(model);
        let kinds: Vec<String> = s.list("corruptions", d.corruptions.iter().map(|k| k.name().to_string()).collect())?;
        let cfg = AttackSettings {
            source: MnistSource::read(s)?,
            eps_255: s.list("eps_255", d.eps_255)?,
            steps: s.get("steps", d.steps)?,
            corruptions: kinds.iter().map(|k| Ok(CorruptionKind::parse(k)?)).collect::<Result<_>>()?,
            severities: s.list("severities", d.severities)?,
            seed: s.get("seed", d.seed)?,
            max_samples: s.opt("max_samples")?.or(d.max_samples),
            precision: s.get("precision", d.precision)?,
            model: d.model,
        };
        ensure!(cfg.steps > 0, "steps must be >= 1");
        Ok(cfg)
    }
}

/// Probes in output order: PGD over the ε grid, then each corruption kind
/// over its severities.
pub fn probes(cfg: &AttackSettings) -> Vec<Probe> {
    let mut v: Vec<Probe> = cfg
        .eps_255
        .iter()
        .map(|e| Probe::Pgd(AttackConfig::new(e / 255.0, cfg.steps, cfg.seed)))
        .collect();
    for &kind in &cfg.corruptions {
        for &severity in &cfg.severities {
            v.push(Probe::Corruption {
                kind,
                severity,
                seed: cfg.seed,
                scale: 1.0,
            });
        }
    }
    v
}

pub fn run(cfg: &AttackSettings, out: Option<&Path>) -> Result<Vec<RobustRow>> {
    let net = PolyNetwork::<f64>::load(&cfg.model).with_context(|| format!("loading {}", cfg.model.display()))?;
    match cfg.precision {
        Precision::F32 => run_net(&net.cast::<f32>(), cfg, out),
        Precision::F64 => run_net(&net, cfg, out),
    }
}

pub fn run_net<T: Real>(net: &PolyNetwork<T>, cfg: &AttackSettings, out_dir: Option<&Path>) -> Result<Vec<RobustRow>> {
    let mut out = Output::new(out_dir)?;
    let mut test = cfg.source.load()?.test;
    if let Some(m) = cfg.max_samples {
        test = test.select(&(0..m.min(test.len())).collect::<Vec<_>>());
    }
    let labels = class_labels(&test.targets)?;
    let data: TrainData<T> = test.to_train_data();
    let rows = probes(cfg)
        .iter()
        .map(|p| {
            Ok(RobustRow {
                probe: p.name().into(),
                param: p.param(),
                accuracy: robust_accuracy(net, &data.x, &labels, p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("robustness.csv", &rows)?;
    out.finish("attack", cfg.precision, &[cfg.seed], cfg, vec!["pgd param is epsilon in pixel units".into()])?;
    Ok(rows)
}
