use serde::{Deserialize, Serialize};

use super::backward::ParamGrads;
use crate::linalg::Real;
use crate::polynet::PolyNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f64> {
    pub m: ParamGrads<T>,
    pub v: ParamGrads<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &PolyNetwork<T>) -> Self {
        AdamState {
            m: ParamGrads::zeros_like(net),
            v: ParamGrads::zeros_like(net),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; increments `state.t` first, so the
/// first call uses `t = 1`.
pub fn adam_step<T: Real>(net: &mut PolyNetwork<T>, grads: &ParamGrads<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::c(cfg.beta1);
    let b2 = T::c(cfg.beta2);
    let one = T::one();
    let bc1 = one - T::c(cfg.beta1.powi(t));
    let bc2 = one - T::c(cfg.beta2.powi(t));
    let lr = T::c(cfg.lr);
    let eps = T::c(cfg.eps);

    for (l, layer) in net.layers.iter_mut().enumerate() {
        let g = grads.layers[l].blocks();
        let m = state.m.layers[l].blocks_mut();
        let v = state.v.layers[l].blocks_mut();
        for (((p, g), m), v) in layer.blocks_mut().into_iter().zip(g).zip(m).zip(v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::polynet::{ActivationKind, PolyLayerParams, RegularizerKind};

    fn scalar_net(w: f64) -> PolyNetwork<f64> {
        PolyNetwork::from_layers(
            1,
            vec![PolyLayerParams {
                w: Matrix::new(1, 1, vec![w]).unwrap(),
                b: vec![0.0],
                alpha: Matrix::zeros(0, 0),
            }],
            vec![ActivationKind::Linear],
            RegularizerKind::None,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar_net(0.3);
        let before = net.clone();
        let mut st = AdamState::new(&net);
        let g = ParamGrads::zeros_like(&net);
        for _ in 0..3 {
            adam_step(&mut net, &g, &mut st, &AdamConfig::default());
        }
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(&net);
        let mut g = ParamGrads::zeros_like(&net);
        g.layers[0].w[(0, 0)] = 1.0;
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut net, &g, &mut st, &cfg);
        // m̂ = 1, v̂ = 1 → Δ = 0.1 / (1 + 1e-8)
        let delta = 1.0 - net.layers[0].w[(0, 0)];
        assert!((delta - 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn identical_tensors_stay_identical() {
        let mut net = PolyNetwork::from_layers(
            2,
            vec![PolyLayerParams {
                w: Matrix::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap(),
                b: vec![0.1, 0.1],
                alpha: Matrix::zeros(0, 0),
            }],
            vec![ActivationKind::Linear],
            RegularizerKind::None,
        )
        .unwrap();
        let mut st = AdamState::new(&net);
        let mut g = ParamGrads::zeros_like(&net);
        for v in g.layers[0].w.as_mut_slice() {
            *v = 0.37;
        }
        for _ in 0..5 {
            adam_step(&mut net, &g, &mut st, &AdamConfig::default());
        }
        let w = net.layers[0].w.as_slice();
        assert!(w.iter().all(|&v| v == w[0]));
    }
}
