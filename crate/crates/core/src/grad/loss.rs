use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// Training targets in the network's scalar type.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels<T = f64> {
    /// 0-based class indices, for cross-entropy.
    Classes(Vec<usize>),
    /// One row of real targets per sample, for MSE.
    Values(Matrix<T>),
}

impl<T: Real> Labels<T> {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Labels::Classes(c) => Labels::Classes(idx.iter().map(|&i| c[i]).collect()),
            Labels::Values(m) => Labels::Values(m.select_rows(idx)),
        }
    }

    pub(crate) fn check(&self, kind: LossKind, outputs: usize) -> Result<()> {
        match (kind, self) {
            (LossKind::CrossEntropy, Labels::Classes(c)) => match c.iter().find(|&&k| k >= outputs) {
                Some(k) => Err(Error::Config(format!("class {k} out of range for {outputs} logits"))),
                None => Ok(()),
            },
            (LossKind::Mse, Labels::Values(m)) if m.cols() == outputs => Ok(()),
            (LossKind::Mse, Labels::Values(m)) => Err(Error::Shape {
                op: "mse targets",
                left: (m.rows(), m.cols()),
                right: (1, outputs),
            }),
            (LossKind::CrossEntropy, _) => {
                Err(Error::Config("cross-entropy requires integer class targets".into()))
            }
            (LossKind::Mse, _) => Err(Error::Config("mse requires real-valued targets".into())),
        }
    }
}

/// Loss of one sample and its gradient with respect to the network output.
pub(crate) fn sample_loss<T: Real>(
    kind: LossKind,
    output: &[T],
    labels: &Labels<T>,
    row: usize,
) -> (T, Vec<T>) {
    match (kind, labels) {
        (LossKind::Mse, Labels::Values(m)) => {
            let target = m.row(row);
            let inv = T::one() / T::c(output.len() as f64);
            let mut loss = T::zero();
            let grad = output
                .iter()
                .zip(target)
                .map(|(&y, &t)| {
                    let r = y - t;
                    loss = loss + r * r;
                    T::c(2.0) * r * inv
                })
                .collect();
            (loss * inv, grad)
        }
        (LossKind::CrossEntropy, Labels::Classes(c)) => {
            let target = c[row];
            let max = output.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let exps: Vec<T> = output.iter().map(|&v| (v - max).exp()).collect();
            let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
            let loss = sum.ln() + max - output[target];
            let grad = exps
                .iter()
                .enumerate()
                .map(|(k, &e)| e / sum - if k == target { T::one() } else { T::zero() })
                .collect();
            (loss, grad)
        }
        _ => unreachable!("labels validated against loss kind"),
    }
}
