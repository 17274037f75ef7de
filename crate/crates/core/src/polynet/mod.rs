//! Affine + polynomial-activation networks and the dual-stream forward pass.
//!
//! A hidden layer computes `z = W·h + b` and applies a per-neuron polynomial
//! `φ_i(z) = Σ_{k=1..G} α_{i,k} z^k` (no constant term; the bias already
//! supplies the offset). Alongside the value `h`, the forward pass carries the
//! input Jacobian `S = ∂h/∂x`, updated as `S ← diag(φ′(z))·W·S`. The final
//! layer is always a linear readout.
//!
//! ReLU and GELU hidden layers are supported for baselines; they carry an
//! empty `alpha`.

mod activation;
pub(crate) mod forward;
mod serialize;

pub use activation::{gelu, gelu_deriv, gelu_deriv2, poly_deriv, poly_deriv2, poly_eval};
pub use forward::{
    dreg_penalty, dreg_penalty_batch, layer_forward, network_forward, DualState, ForwardPass,
    LayerCache, MAX_ABS_INPUT,
};
pub use serialize::{NetworkDocument, FORMAT_NAME, FORMAT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};

/// Default polynomial degree.
pub const DEFAULT_DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActivationKind {
    Poly { degree: usize },
    Relu,
    Gelu,
    /// Identity; used for the readout layer.
    Linear,
}

impl ActivationKind {
    /// Number of polynomial coefficients per neuron (0 for fixed activations).
    pub fn degree(self) -> usize {
        match self {
            ActivationKind::Poly { degree } => degree,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Poly { .. } => "poly",
            ActivationKind::Relu => "relu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DregScope {
    /// Penalize `Σ_l ‖S^(l)‖_F²` over every layer including the readout.
    AllLayers,
    /// Penalize only the end-to-end Jacobian `‖S^(L)‖_F²`.
    FinalLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RegularizerKind {
    None,
    Dreg { lambda: f64, scope: DregScope },
    /// Input-gradient penalty on `‖∂y/∂x‖_F²`, computed through the same
    /// Jacobian stream as `Dreg { scope: FinalLayer }`.
    Igpen { lambda: f64 },
    SpectralNorm { power_iters: usize },
}

impl RegularizerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizerKind::Dreg { lambda, .. } | RegularizerKind::Igpen { lambda }
                if !(lambda >= 0.0 && lambda.is_finite()) =>
            {
                Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")))
            }
            RegularizerKind::SpectralNorm { power_iters: 0 } => {
                Err(Error::Config("power_iters must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// The Jacobian penalty weight and scope, if this regularizer has one.
    pub fn penalty(&self) -> Option<(f64, DregScope)> {
        match *self {
            RegularizerKind::Dreg { lambda, scope } => Some((lambda, scope)),
            RegularizerKind::Igpen { lambda } => Some((lambda, DregScope::FinalLayer)),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerKind::None => "base",
            RegularizerKind::Dreg { .. } => "dreg",
            RegularizerKind::Igpen { .. } => "igpen",
            RegularizerKind::SpectralNorm { .. } => "sn",
        }
    }
}

/// Parameters of one layer: `W` (out × in), `b` (out), `alpha` (out × G).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyLayerParams<T = f64> {
    pub w: Matrix<T>,
    pub b: Vec<T>,
    pub alpha: Matrix<T>,
}

impl<T: Real> PolyLayerParams<T> {
    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w.rows() * self.w.cols() + self.b.len() + self.alpha.rows() * self.alpha.cols()
    }

    pub fn zeros_like(&self) -> Self {
        PolyLayerParams {
            w: Matrix::zeros(self.w.rows(), self.w.cols()),
            b: vec![T::zero(); self.b.len()],
            alpha: Matrix::zeros(self.alpha.rows(), self.alpha.cols()),
        }
    }

    pub fn cast<U: Real>(&self) -> PolyLayerParams<U> {
        PolyLayerParams {
            w: self.w.cast(),
            b: self.b.iter().map(|&v| U::c(v.as_f64())).collect(),
            alpha: self.alpha.cast(),
        }
    }

    fn check_consistent(&self, act: ActivationKind, layer: usize) -> Result<()> {
        let (rows, _) = self.w.shape();
        let bad = |what: &str| Error::Config(format!("layer {layer}: {what}"));
        if self.b.len() != rows {
            return Err(bad("bias length != W rows"));
        }
        if self.alpha.cols() != act.degree() || (act.degree() > 0 && self.alpha.rows() != rows) {
            return Err(bad("alpha shape inconsistent with activation"));
        }
        if let ActivationKind::Poly { degree: 0 } = act {
            return Err(bad("polynomial degree must be >= 1"));
        }
        Ok(())
    }
}

/// Initialization options for [`PolyNetwork::init`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Uniform noise half-width added to the polynomial coefficients.
    pub alpha_noise: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { alpha_noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyNetwork<T = f64> {
    pub layers: Vec<PolyLayerParams<T>>,
    pub activations: Vec<ActivationKind>,
    pub regularizer: RegularizerKind,
    pub input_dim: usize,
}

impl<T: Real> PolyNetwork<T> {
    /// Assembles a network from explicit parameters, validating shapes.
    pub fn from_layers(
        input_dim: usize,
        layers: Vec<PolyLayerParams<T>>,
        activations: Vec<ActivationKind>,
        regularizer: RegularizerKind,
    ) -> Result<Self> {
        let net = PolyNetwork {
            layers,
            activations,
            regularizer,
            input_dim,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        if self.layers.len() != self.activations.len() {
            return Err(Error::Config("one activation per layer required".into()));
        }
        if *self.activations.last().unwrap() != ActivationKind::Linear {
            return Err(Error::Config("final layer must be linear".into()));
        }
        let mut width = self.input_dim;
        for (l, (p, &act)) in self.layers.iter().zip(&self.activations).enumerate() {
            if p.in_dim() != width {
                return Err(Error::Shape {
                    op: "PolyNetwork layer chain",
                    left: (width, 1),
                    right: p.w.shape(),
                });
            }
            p.check_consistent(act, l)?;
            width = p.out_dim();
        }
        self.regularizer.validate()
    }

    /// Random initialization.
    ///
    /// `W` is Xavier-uniform, divided by `√G` on polynomial layers; `b = 0`;
    /// `α_{i,1} = 1`, higher coefficients 0, each plus `U(±alpha_noise)`.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        hidden_activation: ActivationKind,
        regularizer: RegularizerKind,
        cfg: InitConfig,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        if hidden_activation == ActivationKind::Linear {
            return Err(Error::Config("hidden activation cannot be linear".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);

        let mut layers = Vec::new();
        let mut activations = Vec::new();
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let act = if l + 2 == widths.len() {
                ActivationKind::Linear
            } else {
                hidden_activation
            };
            let g = act.degree();
            let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if g > 0 {
                limit /= (g as f64).sqrt();
            }
            let w = Matrix::from_fn(fan_out, fan_in, |_, _| T::c(rng.random_range(-limit..=limit)));
            let alpha = Matrix::from_fn(if g > 0 { fan_out } else { 0 }, g, |_, k| {
                let base = if k == 0 { 1.0 } else { 0.0 };
                let noise = if cfg.alpha_noise > 0.0 {
                    rng.random_range(-cfg.alpha_noise..=cfg.alpha_noise)
                } else {
                    0.0
                };
                T::c(base + noise)
            });
            layers.push(PolyLayerParams {
                w,
                b: vec![T::zero(); fan_out],
                alpha,
            });
            activations.push(act);
        }
        Self::from_layers(input_dim, layers, activations, regularizer)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(PolyLayerParams::param_count).sum()
    }

    pub fn cast<U: Real>(&self) -> PolyNetwork<U> {
        PolyNetwork {
            layers: self.layers.iter().map(PolyLayerParams::cast).collect(),
            activations: self.activations.clone(),
            regularizer: self.regularizer,
            input_dim: self.input_dim,
        }
    }

    /// Value-only evaluation (no Jacobian stream).
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        forward::predict(self, x)
    }
}

/// Parameter count of a `D → H → 1` network whose hidden layer carries
/// `degree` coefficients per neuron (0 for ReLU/GELU).
pub fn single_hidden_param_count(input_dim: usize, hidden: usize, degree: usize) -> usize {
    input_dim * hidden + hidden + hidden * degree + hidden + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_hand_case() {
        assert_eq!(single_hidden_param_count(4, 3, 3), 28);
        let net = PolyNetwork::<f64>::init(
            4,
            &[3],
            1,
            ActivationKind::Poly { degree: 3 },
            RegularizerKind::None,
            InitConfig::default(),
            1,
        )
        .unwrap();
        assert_eq!(net.param_count(), 28);
    }

    #[test]
    fn init_is_near_linear() {
        let net = PolyNetwork::<f64>::init(
            5,
            &[7, 4],
            2,
            ActivationKind::Poly { degree: 3 },
            RegularizerKind::None,
            InitConfig::default(),
            9,
        )
        .unwrap();
        for (p, act) in net.layers.iter().zip(&net.activations) {
            if act.degree() > 0 {
                for i in 0..p.alpha.rows() {
                    assert_eq!(p.alpha.row(i), &[1.0, 0.0, 0.0]);
                }
                let fan = (p.in_dim() + p.out_dim()) as f64;
                let limit = (6.0 / fan).sqrt() / 3f64.sqrt();
                assert!(p.w.max_abs() <= limit);
            } else {
                assert_eq!(p.alpha.cols(), 0);
            }
            assert!(p.b.iter().all(|&b| b == 0.0));
        }
        assert_eq!(net.activations.last(), Some(&ActivationKind::Linear));
    }

    #[test]
    fn alpha_noise_is_bounded() {
        let net = PolyNetwork::<f64>::init(
            3,
            &[6],
            1,
            ActivationKind::Poly { degree: 3 },
            RegularizerKind::None,
            InitConfig { alpha_noise: 0.01 },
            2,
        )
        .unwrap();
        let a = &net.layers[0].alpha;
        assert!(a.as_slice().iter().any(|&v| v != 0.0 && v != 1.0));
        for i in 0..a.rows() {
            assert!((a[(i, 0)] - 1.0).abs() <= 0.01);
            assert!(a[(i, 1)].abs() <= 0.01 && a[(i, 2)].abs() <= 0.01);
        }
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let good = PolyNetwork::<f64>::init(
            2,
            &[3],
            1,
            ActivationKind::Relu,
            RegularizerKind::None,
            InitConfig::default(),
            0,
        )
        .unwrap();
        let mut bad = good.clone();
        bad.layers[1].w = Matrix::zeros(1, 4);
        assert!(bad.validate().is_err());

        let mut bad = good.clone();
        bad.activations[1] = ActivationKind::Relu;
        assert!(bad.validate().is_err());

        let mut bad = good;
        bad.regularizer = RegularizerKind::Dreg {
            lambda: -1.0,
            scope: DregScope::AllLayers,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn igpen_is_final_layer_penalty() {
        assert_eq!(
            RegularizerKind::Igpen { lambda: 0.5 }.penalty(),
            Some((0.5, DregScope::FinalLayer))
        );
        assert_eq!(RegularizerKind::SpectralNorm { power_iters: 1 }.penalty(), None);
    }
}
