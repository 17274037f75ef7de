//! JSON network documents.
//!
//! ```json
//! {
//!   "format": "dualstream-polynet",
//!   "version": 1,
//!   "input_dim": 4,
//!   "regularizer": {"kind": "dreg", "lambda": 0.003, "scope": "all_layers"},
//!   "layers": [
//!     {"rows": 5, "cols": 4, "activation": {"kind": "poly", "degree": 3},
//!      "weights": [...], "bias": [...], "alpha": [...]}
//!   ]
//! }
//! ```
//!
//! `weights` and `alpha` are row-major. Values are written as `f64` in
//! shortest round-trip form, so a 64-bit network reloads bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActivationKind, PolyLayerParams, PolyNetwork, RegularizerKind};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};

pub const FORMAT_NAME: &str = "dualstream-polynet";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub regularizer: RegularizerKind,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub rows: usize,
    pub cols: usize,
    pub activation: ActivationKind,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub alpha: Vec<f64>,
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::c(x)).collect()
}

impl<T: Real> PolyNetwork<T> {
    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            input_dim: self.input_dim,
            regularizer: self.regularizer,
            layers: self
                .layers
                .iter()
                .zip(&self.activations)
                .map(|(p, &act)| LayerDocument {
                    rows: p.w.rows(),
                    cols: p.w.cols(),
                    activation: act,
                    weights: to_f64(p.w.as_slice()),
                    bias: to_f64(&p.b),
                    alpha: to_f64(p.alpha.as_slice()),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self> {
        if doc.format != FORMAT_NAME {
            return Err(Error::Config(format!("unknown network format {:?}", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported network document version {}",
                doc.version
            )));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        let mut activations = Vec::with_capacity(doc.layers.len());
        for l in &doc.layers {
            let g = l.activation.degree();
            let alpha_rows = if g > 0 { l.rows } else { 0 };
            layers.push(PolyLayerParams {
                w: Matrix::new(l.rows, l.cols, from_f64(&l.weights))?,
                b: from_f64(&l.bias),
                alpha: Matrix::new(alpha_rows, g, from_f64(&l.alpha))?,
            });
            activations.push(l.activation);
        }
        Self::from_layers(doc.input_dim, layers, activations, doc.regularizer)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynet::{DregScope, InitConfig};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_roundtrip_is_bit_exact(seed in 0u64..500, d in 1usize..5, h in 1usize..6, relu in any::<bool>()) {
            let act = if relu { ActivationKind::Relu } else { ActivationKind::Poly { degree: 3 } };
            let net = PolyNetwork::<f64>::init(
                d, &[h], 2, act,
                RegularizerKind::Dreg { lambda: 10f64.powf(-2.5), scope: DregScope::AllLayers },
                InitConfig { alpha_noise: 0.01 }, seed,
            ).unwrap();
            let back = PolyNetwork::<f64>::from_json(&net.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn rejects_wrong_version_and_bad_lengths() {
        let net = PolyNetwork::<f64>::init(
            2,
            &[3],
            1,
            ActivationKind::Gelu,
            RegularizerKind::None,
            InitConfig::default(),
            0,
        )
        .unwrap();
        let mut doc = net.to_document();
        doc.version = 99;
        assert!(PolyNetwork::<f64>::from_document(&doc).is_err());
        let mut doc = net.to_document();
        doc.layers[0].weights.pop();
        assert!(PolyNetwork::<f64>::from_document(&doc).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = PolyNetwork::<f64>::init(
            3,
            &[4],
            2,
            ActivationKind::Poly { degree: 2 },
            RegularizerKind::SpectralNorm { power_iters: 2 },
            InitConfig::default(),
            5,
        )
        .unwrap();
        net.save(&path).unwrap();
        assert_eq!(PolyNetwork::<f64>::load(&path).unwrap(), net);
    }
}
