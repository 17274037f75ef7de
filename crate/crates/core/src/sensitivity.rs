//! Input-sensitivity diagnostics: gradient-norm statistics, tail ratio,
//! the layer-wise chain bound, Pareto distance and the efficiency KPI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{input_gradient, Labels, LossKind};
use crate::linalg::{frobenius_norm, norm2, Matrix, Real};
use crate::polynet::forward::{activate, scale_rows};
use crate::polynet::{network_forward, PolyNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IgSource {
    /// `‖∂L_task/∂x‖₂` from the reverse pass.
    LossGrad,
    /// `‖S^(L)‖_F` from the Jacobian stream.
    OutputJacobianFro,
}

impl IgSource {
    pub fn name(self) -> &'static str {
        match self {
            IgSource::LossGrad => "loss_grad",
            IgSource::OutputJacobianFro => "output_jacobian_fro",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub mean: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    /// `p99 / mean`; infinite when the mean is zero and p99 is not.
    pub tail_ratio: f64,
    pub n_samples: usize,
    pub ig_source: IgSource,
}

/// One scalar sensitivity per sample.
pub fn input_gradient_norms<T: Real>(
    net: &PolyNetwork<T>,
    x: &Matrix<T>,
    y: &Labels<T>,
    loss: LossKind,
    source: IgSource,
) -> Result<Vec<f64>> {
    if x.cols() != net.input_dim {
        return Err(Error::Shape {
            op: "input_gradient_norms",
            left: (x.rows(), x.cols()),
            right: (net.input_dim, net.output_dim()),
        });
    }
    (0..x.rows())
        .map(|i| match source {
            IgSource::LossGrad => {
                let (_, g) = input_gradient(net, x.row(i), y, i, loss)?;
                Ok(norm2(&g).as_f64())
            }
            IgSource::OutputJacobianFro => {
                let pass = network_forward(net, x.row(i))?;
                Ok(frobenius_norm(&pass.states.last().expect("depth >= 1").s).as_f64())
            }
        })
        .collect()
}

/// Percentile of sorted data by linear interpolation between closest ranks
/// (inclusive endpoints).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(norms: &[f64], source: IgSource) -> Result<SensitivityReport> {
    if norms.is_empty() {
        return Err(Error::Domain("cannot summarize an empty sample".into()));
    }
    if norms.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sensitivity sample".into()));
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let p99 = percentile_sorted(&sorted, 99.0);
    Ok(SensitivityReport {
        mean,
        p95: percentile_sorted(&sorted, 95.0),
        p99,
        max: *sorted.last().unwrap(),
        tail_ratio: tail_ratio(mean, p99),
        n_samples: sorted.len(),
        ig_source: source,
    })
}

pub fn tail_ratio(mean: f64, p99: f64) -> f64 {
    if mean > 0.0 {
        p99 / mean
    } else if p99 == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// `(‖S^(L)(x)‖_F, Π_l ‖diag(φ′(z_l))·W_l‖_F)`; the first never exceeds the
/// second by submultiplicativity.
pub fn lipschitz_chain_check<T: Real>(net: &PolyNetwork<T>, x: &[T]) -> Result<(f64, f64)> {
    let pass = network_forward(net, x)?;
    let lhs = frobenius_norm(&pass.states.last().expect("depth >= 1").s).as_f64();
    let mut rhs = 1.0;
    for ((p, act), cache) in net.layers.iter().zip(&net.activations).zip(&pass.caches) {
        let d: Vec<T> = cache
            .z
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let alpha = if act.degree() > 0 { p.alpha.row(i) } else { &[] };
                activate(*act, alpha, z).1
            })
            .collect();
        let mut dw = p.w.clone();
        scale_rows(&mut dw, &d);
        rhs *= frobenius_norm(&dw).as_f64();
    }
    Ok((lhs, rhs))
}

/// Distance to the utopian point `(acc = 1, tail = tail_min)`.
pub fn pareto_distance(acc: f64, tail: f64, tail_min: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&acc) {
        return Err(Error::Domain(format!("accuracy {acc} outside [0, 1]")));
    }
    if !(tail >= tail_min) {
        return Err(Error::Domain(format!("tail ratio {tail} below minimum {tail_min}")));
    }
    Ok(((1.0 - acc).powi(2) + (tail - tail_min).powi(2)).sqrt())
}

/// Accuracy (percent) per decade of parameters.
pub fn efficiency_kpi(acc_percent: f64, params: usize) -> Result<f64> {
    if params < 10 {
        return Err(Error::Domain(format!("efficiency KPI needs >= 10 parameters, got {params}")));
    }
    Ok(acc_percent / (params as f64).log10())
}

/// One row of a sensitivity table, in fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
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
}

impl SensitivityRow {
    pub fn new(method: &str, h1: usize, h2: usize, seed: u64, acc: f64, r: &SensitivityReport) -> Self {
        SensitivityRow {
            method: method.into(),
            h1,
            h2,
            seed,
            acc,
            ig_mean: r.mean,
            ig_p95: r.p95,
            ig_p99: r.p99,
            ig_max: r.max,
            tail_ratio: r.tail_ratio,
        }
    }
}
