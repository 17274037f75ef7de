//! Pieces shared by the experiments: methods, training hyperparameters,
//! precision dispatch, CSV and manifest output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dualstream::grad::{train, AdamConfig, JacobianMode, LossKind, TrainConfig, TrainData, TrainReport, TrainStatus};
use dualstream::polynet::{ActivationKind, DregScope, InitConfig, PolyNetwork, RegularizerKind, DEFAULT_DEGREE};
use dualstream::Real;
use serde::{Deserialize, Serialize};

use crate::settings::Settings;

/// Seeds used when none are given.
pub const DEFAULT_SEEDS: [u64; 3] = [1337, 1339, 2024];
/// `10^-2.5`.
pub const LAMBDA_DEFAULT: f64 = 0.003_162_277_660_168_379_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Act {
    Poly,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reg {
    Base,
    Dreg,
    Igpen,
    Sn,
}

/// One of the eight activation × regularizer combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Method {
    pub act: Act,
    pub reg: Reg,
}

impl Method {
    pub const fn new(act: Act, reg: Reg) -> Self {
        Method { act, reg }
    }

    pub fn all() -> Vec<Method> {
        let mut v = Vec::new();
        for act in [Act::Poly, Act::Relu] {
            for reg in [Reg::Base, Reg::Dreg, Reg::Igpen, Reg::Sn] {
                v.push(Method { act, reg });
            }
        }
        v
    }

    pub fn activation(self) -> ActivationKind {
        match self.act {
            Act::Poly => ActivationKind::Poly { degree: DEFAULT_DEGREE },
            Act::Relu => ActivationKind::Relu,
        }
    }

    pub fn regularizer(self, lambda: f64, sn_power_iters: usize) -> RegularizerKind {
        match self.reg {
            Reg::Base => RegularizerKind::None,
            Reg::Dreg => RegularizerKind::Dreg {
                lambda,
                scope: DregScope::AllLayers,
            },
            Reg::Igpen => RegularizerKind::Igpen { lambda },
            Reg::Sn => RegularizerKind::SpectralNorm {
                power_iters: sn_power_iters,
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.act {
            Act::Poly => "POLY",
            Act::Relu => "RELU",
        };
        let r = match self.reg {
            Reg::Base => "BASE",
            Reg::Dreg => "DREG",
            Reg::Igpen => "IGPEN",
            Reg::Sn => "SN",
        };
        write!(f, "{a}_{r}")
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Method::all()
            .into_iter()
            .find(|m| m.to_string() == up)
            .with_context(|| format!("unknown method '{s}' (expected e.g. POLY_DREG, RELU_SN)"))
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

impl FromStr for Precision {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "32" | "f32" => Ok(Precision::F32),
            "64" | "f64" => Ok(Precision::F64),
            _ => bail!("precision must be 32 or 64, got '{s}'"),
        }
    }
}

/// Optimizer and stopping settings shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub clip_norm: Option<f64>,
    pub lambda: f64,
    pub sn_power_iters: usize,
    pub alpha_noise: f64,
}

impl Hyper {
    pub fn defaults(epochs: usize) -> Self {
        Hyper {
            epochs,
            batch_size: 64,
            lr: 1e-3,
            patience: 10,
            clip_norm: None,
            lambda: LAMBDA_DEFAULT,
            sn_power_iters: 20,
            alpha_noise: 0.0,
        }
    }

    pub fn read(s: &Settings, base: Hyper) -> Result<Self> {
        Ok(Hyper {
            epochs: s.get("epochs", base.epochs)?,
            batch_size: s.get("batch_size", base.batch_size)?,
            lr: s.get("lr", base.lr)?,
            patience: s.get("patience", base.patience)?,
            clip_norm: s.opt("clip_norm")?.or(base.clip_norm),
            lambda: s.get("lambda", base.lambda)?,
            sn_power_iters: s.get("sn_power_iters", base.sn_power_iters)?,
            alpha_noise: s.get("alpha_noise", base.alpha_noise)?,
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            seed,
            clip_norm: self.clip_norm,
            jacobian_mode: JacobianMode::Auto,
        }
    }
}

/// Builds, initializes and trains one network.
#[allow(clippy::too_many_arguments)]
pub fn fit<T: Real>(
    method: Method,
    hidden: &[usize],
    output_dim: usize,
    hyper: &Hyper,
    seed: u64,
    train_set: &TrainData<T>,
    val_set: &TrainData<T>,
    loss: LossKind,
) -> Result<(PolyNetwork<T>, TrainReport)> {
    let net = PolyNetwork::<f64>::init(
        train_set.x.cols(),
        hidden,
        output_dim,
        method.activation(),
        method.regularizer(hyper.lambda, hyper.sn_power_iters),
        InitConfig {
            alpha_noise: hyper.alpha_noise,
        },
        seed,
    )?
    .cast::<T>();
    Ok(train(net, train_set, val_set, &hyper.train_config(seed), loss)?)
}

pub fn status_name(s: &TrainStatus) -> &'static str {
    match s {
        TrainStatus::Completed => "completed",
        TrainStatus::EarlyStopped => "early_stopped",
        TrainStatus::Diverged { .. } => "diverged",
    }
}

/// Writes serializable rows as CSV (header from field order) via a
/// temporary file and rename.
pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(value)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub experiment: &'a str,
    pub library_version: &'a str,
    pub precision: u32,
    pub seeds: &'a [u64],
    pub config: &'a C,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub notes: Vec<String>,
}

/// Output directory handling plus the run manifest.
pub struct Output {
    pub dir: Option<PathBuf>,
    started: Instant,
    written: Vec<String>,
}

impl Output {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Output {
            dir: dir.map(Path::to_path_buf),
            started: Instant::now(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        if let Some(p) = self.path(name) {
            write_csv(&p, rows)?;
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn json<V: Serialize>(&mut self, name: &str, value: &V) -> Result<()> {
        if let Some(p) = self.path(name) {
            write_json(&p, value)?;
            self.written.push(name.to_string());
        }
        Ok(())
    }

    /// Records a file written by other means (e.g. a model checkpoint).
    pub fn note_written(&mut self, name: &str) {
        self.written.push(name.to_string());
    }

    pub fn finish<C: Serialize>(
        self,
        experiment: &str,
        precision: Precision,
        seeds: &[u64],
        config: &C,
        notes: Vec<String>,
    ) -> Result<()> {
        if let Some(p) = self.path("manifest.json") {
            let m = Manifest {
                experiment,
                library_version: env!("CARGO_PKG_VERSION"),
                precision: precision.bits(),
                seeds,
                config,
                outputs: self.written.clone(),
                wall_clock_seconds: self.started.elapsed().as_secs_f64(),
                notes,
            };
            write_json(&p, &m)?;
        }
        Ok(())
    }
}

/// Mean of a non-empty slice.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
