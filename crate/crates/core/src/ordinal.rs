//! Ordinal readout: thresholds, quadratic weighted kappa, coordinate search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_STEP: f64 = 0.05;
const MAX_CYCLES: usize = 200;

/// `K − 1` strictly increasing cut points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds(Vec<f64>);

impl Thresholds {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("thresholds".into()));
        }
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!("thresholds {t:?} must be strictly increasing")));
        }
        Ok(Thresholds(t))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn levels(&self) -> usize {
        self.0.len() + 1
    }
}

/// `1 +` number of thresholds strictly below `y`; ties map upward.
pub fn map_to_class(y: f64, t: &Thresholds) -> usize {
    1 + t.0.iter().filter(|&&c| c <= y).count()
}

fn classes(scores: &[f64], t: &[f64]) -> Vec<usize> {
    scores.iter().map(|&y| 1 + t.iter().filter(|&&c| c <= y).count()).collect()
}

/// Cohen's kappa with quadratic weights over classes `1..=k`.
///
/// Returns 0 when the expected-disagreement term vanishes.
pub fn qwk(pred: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Domain(format!(
            "qwk needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if k < 2 {
        return Err(Error::Domain("qwk needs K >= 2".into()));
    }
    if let Some(&c) = pred.iter().chain(truth).find(|&&c| c < 1 || c > k) {
        return Err(Error::Domain(format!("class {c} outside 1..={k}")));
    }
    let mut observed = vec![0.0; k * k];
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (&p, &t) in pred.iter().zip(truth) {
        observed[(p - 1) * k + (t - 1)] += 1.0;
        row[p - 1] += 1.0;
        col[t - 1] += 1.0;
    }
    let n = pred.len() as f64;
    let scale = ((k - 1) * (k - 1)) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64) - (j as f64)).powi(2) / scale;
            num += w * observed[i * k + j];
            den += w * row[i] * col[j] / n;
        }
    }
    Ok(if den == 0.0 { 0.0 } else { 1.0 - num / den })
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Equal-quantile initialization. Falls back to quantiles of the distinct
/// values when heavy ties would collapse neighbouring cut points.
pub fn quantile_thresholds(scores: &[f64], k: usize) -> Result<Thresholds> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Degenerate(format!(
            "{} distinct scores cannot separate {k} classes",
            distinct.len()
        )));
    }
    let cut = |s: &[f64]| (1..k).map(|i| quantile_sorted(s, i as f64 / k as f64)).collect::<Vec<_>>();
    Thresholds::new(cut(&sorted)).or_else(|_| Thresholds::new(cut(&distinct)))
}

/// Equal-width cut points over `[min, max]` of the scores.
pub fn equal_width_thresholds(scores: &[f64], k: usize) -> Result<Thresholds> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Thresholds::new((1..k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub thresholds: Thresholds,
    pub qwk: f64,
    pub initial_qwk: f64,
    pub cycles: usize,
}

/// Cyclic coordinate ascent on QWK.
///
/// Each threshold is scanned on a grid anchored at its current value with
/// spacing `grid_step`, strictly between its neighbours (the outer ones are
/// bounded by the score range widened by one step). A threshold moves only
/// on strict improvement; among equally good candidates the smallest wins.
/// Stops when a full cycle moves nothing.
pub fn threshold_search(scores: &[f64], truth: &[usize], k: usize, grid_step: f64) -> Result<SearchResult> {
    if scores.len() != truth.len() || scores.is_empty() {
        return Err(Error::Domain("scores and truth must have equal non-zero length".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("ordinal scores".into()));
    }
    if !(grid_step > 0.0) {
        return Err(Error::Config("grid_step must be > 0".into()));
    }
    let init = quantile_thresholds(scores, k)?;
    let mut t = init.0.clone();
    let initial_qwk = qwk(&classes(scores, &t), truth, k)?;
    let lo_bound = scores.iter().copied().fold(f64::INFINITY, f64::min) - grid_step;
    let hi_bound = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + grid_step;

    let mut best = initial_qwk;
    let mut cycles = 0;
    while cycles < MAX_CYCLES {
        cycles += 1;
        let mut moved = false;
        for i in 0..t.len() {
            let lo = if i == 0 { lo_bound } else { t[i - 1] };
            let hi = if i + 1 == t.len() { hi_bound } else { t[i + 1] };
            let last = i + 1 == t.len();
            let inside = |v: f64| {
                let neighbours = (i == 0 || v > lo) && (last || v < hi);
                neighbours && v >= lo_bound && v <= hi_bound
            };
            let incumbent = t[i];
            let k_min = ((lo.max(lo_bound) - incumbent) / grid_step).floor() as i64;
            let k_max = ((hi.min(hi_bound) - incumbent) / grid_step).ceil() as i64;
            let mut choice: Option<(f64, f64)> = None;
            for step in k_min..=k_max {
                if step == 0 {
                    continue;
                }
                let v = incumbent + step as f64 * grid_step;
                if !inside(v) {
                    continue;
                }
                t[i] = v;
                let q = qwk(&classes(scores, &t), truth, k)?;
                // Ascending scan: `>` keeps the smallest among ties.
                if q > best && choice.is_none_or(|(bq, _)| q > bq) {
                    choice = Some((q, v));
                }
            }
            match choice {
                Some((q, v)) => {
                    t[i] = v;
                    best = q;
                    moved = true;
                }
                None => t[i] = incumbent,
            }
        }
        if !moved {
            break;
        }
    }
    Ok(SearchResult {
        thresholds: Thresholds::new(t)?,
        qwk: best,
        initial_qwk,
        cycles,
    })
}
