use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm_sq, matmul_acc, matvec, Matrix, Real};

use super::activation::{gelu, gelu_deriv, gelu_deriv2, poly_deriv, poly_deriv2, poly_eval};
use super::{ActivationKind, DregScope, PolyLayerParams, PolyNetwork};

/// Inputs must satisfy `max |x| ≤ MAX_ABS_INPUT`; cubic activations overflow
/// quickly on unscaled features.
pub const MAX_ABS_INPUT: f64 = 10.0;

/// Value stream `h` and Jacobian stream `S = ∂h/∂x` at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState<T = f64> {
    pub h: Vec<T>,
    /// `h.len() × D`.
    pub s: Matrix<T>,
}

impl<T: Real> DualState<T> {
    /// The input state: `h = x`, `S = I_D`.
    pub fn input(x: &[T]) -> Self {
        DualState {
            h: x.to_vec(),
            s: Matrix::identity(x.len()),
        }
    }
}

/// Per-layer values kept for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache<T = f64> {
    pub z: Vec<T>,
    pub h_in: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass<T = f64> {
    pub output: Vec<T>,
    /// One state per layer; `states.last().s` is the network Jacobian `∂y/∂x`.
    pub states: Vec<DualState<T>>,
    pub caches: Vec<LayerCache<T>>,
}

/// `(φ(z), φ′(z))` for one neuron.
#[inline]
pub(crate) fn activate<T: Real>(act: ActivationKind, alpha: &[T], z: T) -> (T, T) {
    match act {
        ActivationKind::Poly { .. } => (poly_eval(alpha, z), poly_deriv(alpha, z)),
        ActivationKind::Relu => {
            if z > T::zero() {
                (z, T::one())
            } else {
                (T::zero(), T::zero())
            }
        }
        ActivationKind::Gelu => (gelu(z), gelu_deriv(z)),
        ActivationKind::Linear => (z, T::one()),
    }
}

/// `φ″(z)`; zero for ReLU and linear units.
#[inline]
pub(crate) fn activate_deriv2<T: Real>(act: ActivationKind, alpha: &[T], z: T) -> T {
    match act {
        ActivationKind::Poly { .. } => poly_deriv2(alpha, z),
        ActivationKind::Gelu => gelu_deriv2(z),
        ActivationKind::Relu | ActivationKind::Linear => T::zero(),
    }
}

/// Pre-activation, activation and derivative for one layer.
pub(crate) fn layer_values<T: Real>(
    params: &PolyLayerParams<T>,
    act: ActivationKind,
    h_in: &[T],
    layer: usize,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let mut z = matvec(&params.w, h_in)?;
    let n = z.len();
    let mut h = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        z[i] = z[i] + params.b[i];
        let alpha = if act.degree() > 0 {
            params.alpha.row(i)
        } else {
            &[]
        };
        let (hv, dv) = activate(act, alpha, z[i]);
        if !(hv.is_finite() && dv.is_finite()) {
            return Err(Error::Overflow {
                layer,
                neuron: i,
                z: z[i].as_f64(),
            });
        }
        h.push(hv);
        d.push(dv);
    }
    Ok((z, h, d))
}

/// Scales row `i` of `m` by `d[i]`.
pub(crate) fn scale_rows<T: Real>(m: &mut Matrix<T>, d: &[T]) {
    for (i, &di) in d.iter().enumerate() {
        for v in m.row_mut(i) {
            *v = *v * di;
        }
    }
}

/// One dual-stream step: `z = W·h + b`, `h′ = φ(z)`, `S′ = diag(φ′(z))·W·S`.
pub fn layer_forward<T: Real>(
    params: &PolyLayerParams<T>,
    act: ActivationKind,
    state_in: &DualState<T>,
) -> Result<(DualState<T>, LayerCache<T>)> {
    layer_forward_at(params, act, state_in, 0, false)
}

fn layer_forward_at<T: Real>(
    params: &PolyLayerParams<T>,
    act: ActivationKind,
    state_in: &DualState<T>,
    layer: usize,
    input_is_identity: bool,
) -> Result<(DualState<T>, LayerCache<T>)> {
    if state_in.s.rows() != state_in.h.len() {
        return Err(Error::Shape {
            op: "layer_forward (state)",
            left: (state_in.h.len(), 1),
            right: state_in.s.shape(),
        });
    }
    if params.in_dim() != state_in.h.len() {
        return Err(Error::Shape {
            op: "layer_forward",
            left: params.w.shape(),
            right: (state_in.h.len(), 1),
        });
    }
    let (z, h, d) = layer_values(params, act, &state_in.h, layer)?;
    let mut s = if input_is_identity {
        params.w.clone()
    } else {
        let mut s = Matrix::zeros(params.out_dim(), state_in.s.cols());
        matmul_acc(&params.w, &state_in.s, &mut s);
        s
    };
    scale_rows(&mut s, &d);
    s.check_finite("layer_forward Jacobian")?;
    Ok((
        DualState { h, s },
        LayerCache {
            z,
            h_in: state_in.h.clone(),
        },
    ))
}

pub(crate) fn check_input<T: Real>(net: &PolyNetwork<T>, x: &[T]) -> Result<()> {
    if x.len() != net.input_dim {
        return Err(Error::Shape {
            op: "network input",
            left: (net.input_dim, 1),
            right: (x.len(), 1),
        });
    }
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    if !(max_abs <= MAX_ABS_INPUT) {
        return Err(Error::InputRange {
            max_abs,
            limit: MAX_ABS_INPUT,
        });
    }
    Ok(())
}

/// Full dual-stream pass from `h = x`, `S = I`.
pub fn network_forward<T: Real>(net: &PolyNetwork<T>, x: &[T]) -> Result<ForwardPass<T>> {
    check_input(net, x)?;
    let mut states = Vec::with_capacity(net.depth());
    let mut caches = Vec::with_capacity(net.depth());
    let mut current = DualState::input(x);
    for (l, (p, &act)) in net.layers.iter().zip(&net.activations).enumerate() {
        let (next, cache) = layer_forward_at(p, act, &current, l, l == 0)?;
        caches.push(cache);
        states.push(next.clone());
        current = next;
    }
    Ok(ForwardPass {
        output: current.h,
        states,
        caches,
    })
}

pub(crate) fn predict<T: Real>(net: &PolyNetwork<T>, x: &[T]) -> Result<Vec<T>> {
    check_input(net, x)?;
    let mut h = x.to_vec();
    for (l, (p, &act)) in net.layers.iter().zip(&net.activations).enumerate() {
        h = layer_values(p, act, &h, l)?.1;
    }
    Ok(h)
}

/// Jacobian penalty for one sample: `Σ_l ‖S^(l)‖_F²` or `‖S^(L)‖_F²`.
pub fn dreg_penalty<T: Real>(states: &[DualState<T>], scope: DregScope) -> T {
    match scope {
        DregScope::AllLayers => states
            .iter()
            .fold(T::zero(), |acc, st| acc + frobenius_norm_sq(&st.s)),
        DregScope::FinalLayer => states
            .last()
            .map_or(T::zero(), |st| frobenius_norm_sq(&st.s)),
    }
}

/// Batch mean of [`dreg_penalty`].
pub fn dreg_penalty_batch<T: Real>(passes: &[ForwardPass<T>], scope: DregScope) -> T {
    if passes.is_empty() {
        return T::zero();
    }
    let total = passes
        .iter()
        .fold(T::zero(), |acc, p| acc + dreg_penalty(&p.states, scope));
    total / T::c(passes.len() as f64)
}
