//! Command-line surface: subcommands, shared flags, dispatch.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::experiments::{attack, fairfight, lambda_sweep, mnist, ordinal, scaling, stats, train};
use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "dualstream", version, about = "Dual-stream polynomial network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network (dataset=mnist or a synthetic family name).
    Train(Common),
    /// Method × capacity × seed grid on MNIST with sensitivity statistics.
    MnistBench(Common),
    /// Penalty strength sweep on the synthetic families.
    LambdaSweep(Common),
    /// Parameter-matched polynomial network vs. ReLU MLPs.
    Fairfight(Common),
    /// Input-dimension and hidden-width sweeps.
    ScalingSweep(Common),
    /// Ordinal regression with validation-tuned thresholds.
    Ordinal(Common),
    /// PGD and corruption probes against a checkpoint (model=PATH).
    Attack(Common),
    /// Paired tests over a results CSV (input=PATH).
    Stats(Common),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; nothing is written without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Keep only the first N samples of a file dataset.
    #[arg(long)]
    pub limit: Option<usize>,
    /// 32 or 64.
    #[arg(long)]
    pub precision: Option<String>,
    /// Extra `key=value` overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    /// Config file, then `--set` pairs, then the dedicated flags.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        s.apply_overrides(self.set.iter().map(String::as_str))?;
        if let Some(v) = &self.seeds {
            s.set("seeds", v)?;
        }
        if let Some(v) = self.limit {
            s.set("limit", &v.to_string())?;
        }
        if let Some(v) = &self.precision {
            s.set("precision", v)?;
        }
        Ok(s)
    }
}

/// Runs a parsed command and returns a short human-readable summary.
pub fn run(cli: &Cli) -> Result<String> {
    let mut msg = String::new();
    match &cli.command {
        Command::Train(c) => {
            let s = c.settings()?;
            let cfg = train::TrainSettings::read(&s)?;
            s.finish()?;
            let r = train::run(&cfg, c.out.as_deref())?;
            writeln!(msg, "{} seed {}: {} {} = {:.6} ({} params, {})", r.method, r.seed, r.status, r.test_metric, r.test_value, r.params, r.epochs_run)?;
        }
        Command::MnistBench(c) => {
            let s = c.settings()?;
            let cfg = mnist::MnistConfig::read(&s)?;
            s.finish()?;
            let o = mnist::run(&cfg, c.out.as_deref())?;
            writeln!(msg, "method,h1,h2,seed,acc,tail_ratio,status")?;
            for r in &o.rows {
                writeln!(msg, "{},{},{},{},{:.4},{:.3},{}", r.method, r.h1, r.h2, r.seed, r.acc, r.tail_ratio, r.status)?;
            }
        }
        Command::LambdaSweep(c) => {
            let s = c.settings()?;
            let cfg = lambda_sweep::LambdaConfig::read(&s)?;
            s.finish()?;
            let o = lambda_sweep::run(&cfg, c.out.as_deref())?;
            writeln!(msg, "family,lambda,mean_mse,mean_grad_p90,grad_p90_reduction_pct,mse_change_pct")?;
            for p in &o.plateau {
                writeln!(msg, "{},{},{:.5},{:.4},{:.1},{:.1}", p.family, p.lambda, p.mean_mse, p.mean_grad_p90, p.grad_p90_reduction_pct, p.mse_change_pct)?;
            }
        }
        Command::Fairfight(c) => {
            let s = c.settings()?;
            let cfg = fairfight::FairfightConfig::read(&s)?;
            s.finish()?;
            let o = fairfight::run(&cfg, c.out.as_deref())?;
            writeln!(msg, "model,params,test_mse")?;
            for r in &o.summary {
                writeln!(msg, "{},{},{:.5}", r.model, r.params, r.test_mse)?;
            }
        }
        Command::ScalingSweep(c) => {
            let s = c.settings()?;
            let cfg = scaling::ScalingConfig::read(&s)?;
            s.finish()?;
            let rows = scaling::run(&cfg, c.out.as_deref())?;
            writeln!(msg, "axis,value,model,seed,test_mse,status")?;
            for r in &rows {
                writeln!(msg, "{},{},{},{},{:.5},{}", r.axis, r.value, r.model, r.seed, r.test_mse, r.status)?;
            }
        }
        Command::Ordinal(c) => {
            let s = c.settings()?;
            let cfg = ordinal::OrdinalConfig::read(&s)?;
            s.finish()?;
            let rows = ordinal::run(&cfg, c.out.as_deref())?;
            writeln!(msg, "seed,accuracy,qwk,thresholds,status")?;
            for r in &rows {
                writeln!(msg, "{},{:.4},{:.4},{},{}", r.seed, r.accuracy, r.qwk, r.thresholds, r.status)?;
            }
        }
        Command::Attack(c) => {
            let s = c.settings()?;
            let cfg = attack::AttackSettings::read(&s)?;
            s.finish()?;
            let rows = attack::run(&cfg, c.out.as_deref())?;
            writeln!(msg, "probe,param,accuracy")?;
            for r in &rows {
                writeln!(msg, "{},{},{:.4}", r.probe, r.param, r.accuracy)?;
            }
        }
        Command::Stats(c) => {
            let s = c.settings()?;
            let cfg = stats::StatsConfig::read(&s)?;
            s.finish()?;
            let comparisons = stats::run(&cfg, c.out.as_deref())?;
            for cmp in &comparisons {
                write!(msg, "{} {} vs {} on {} (n={}, mean diff {:+.4}):", cmp.capacity, cmp.treatment, cmp.control, cmp.metric, cmp.n_pairs, cmp.mean_difference)?;
                for t in &cmp.tests {
                    match t {
                        Ok(t) => write!(msg, " {} p={:.4e};", t.test_name, t.p_value)?,
                        Err(e) => write!(msg, " [{e}];")?,
                    }
                }
                writeln!(msg)?;
            }
        }
    }
    Ok(msg)
}
