//! Reverse pass through the value and Jacobian streams.
//!
//! Per sample the forward tape holds, for every layer `l`, the pre-activation
//! `z_l`, the activation derivative `d_l = φ′(z_l)`, `A_l = W_l·T_{l−1}` and the
//! Jacobian stream `T_l = diag(d_l)·A_l`. The adjoint of `T_l` splits into
//!
//! * `ḡd_i = Σ_j T̄_l[i,j]·A_l[i,j]`, which reaches `z_l` through `φ″` and the
//!   coefficients through `∂φ′/∂α_{i,k} = k·z^{k−1}`,
//! * `Ā_l = diag(d_l)·T̄_l`, giving `W̄_l += Ā_l·T_{l−1}ᵀ` and
//!   `T̄_{l−1} += W_lᵀ·Ā_l`.
//!
//! Two bases are supported for the stream. `Full` carries `T_l = S^(l)`
//! (width × D) from `T_0 = I_D`. `Factored` starts at `T_1 = diag(d_1)` so
//! that `S^(l) = T_l·W_1` and `‖S^(l)‖_F² = tr(T_l Q T_lᵀ)` with
//! `Q = W_1 W_1ᵀ`; the `W_1` dependence through `Q` is folded in once per
//! batch as `W̄_1 += (Q̄ + Q̄ᵀ)·W_1`. Both give the same gradient; the factored
//! basis costs `O(H²)` per layer instead of `O(H²·D)` when `D > H_1`.

use serde::{Deserialize, Serialize};

use super::loss::{sample_loss, Labels, LossKind};
use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, matmul_nt_acc, matmul_tn_acc, matvec_t, Matrix, Real};
use crate::polynet::forward::{activate_deriv2, check_input, layer_values, scale_rows};
use crate::polynet::{DregScope, PolyLayerParams, PolyNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// `Factored` when the input is wider than the first hidden layer.
    #[default]
    Auto,
    Full,
    Factored,
}

#[derive(Debug, Clone, Copy)]
pub enum Rows<'a> {
    All,
    Subset(&'a [usize]),
}

/// A set of samples drawn from `x`/`y`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub x: &'a Matrix<T>,
    pub y: &'a Labels<T>,
    pub rows: Rows<'a>,
}

impl<'a, T: Real> Batch<'a, T> {
    pub fn new(x: &'a Matrix<T>, y: &'a Labels<T>) -> Self {
        Batch {
            x,
            y,
            rows: Rows::All,
        }
    }

    pub fn subset(x: &'a Matrix<T>, y: &'a Labels<T>, rows: &'a [usize]) -> Self {
        Batch {
            x,
            y,
            rows: Rows::Subset(rows),
        }
    }

    pub fn len(&self) -> usize {
        match self.rows {
            Rows::All => self.x.rows(),
            Rows::Subset(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn row_id(&self, k: usize) -> usize {
        match self.rows {
            Rows::All => k,
            Rows::Subset(r) => r[k],
        }
    }
}

/// Batch-mean task loss, batch-mean Jacobian penalty, and `task + λ·penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue<T = f64> {
    pub task: T,
    pub penalty: T,
    pub total: T,
}

/// Gradients laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T = f64> {
    pub layers: Vec<PolyLayerParams<T>>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(net: &PolyNetwork<T>) -> Self {
        ParamGrads {
            layers: net.layers.iter().map(PolyLayerParams::zeros_like).collect(),
        }
    }

    pub fn global_norm(&self) -> T {
        let mut s = T::zero();
        for l in &self.layers {
            for block in l.blocks() {
                for &v in block {
                    s = s + v * v;
                }
            }
        }
        s.sqrt()
    }

    pub fn scale(&mut self, k: T) {
        for l in &mut self.layers {
            for block in l.blocks_mut() {
                for v in block {
                    *v = *v * k;
                }
            }
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (layer, l) in self.layers.iter().enumerate() {
            for (block, name) in l.blocks().into_iter().zip(["W", "b", "alpha"]) {
                if !block.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteGradient { layer, block: name });
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> PolyLayerParams<T> {
    /// `[W, b, alpha]` as flat slices.
    pub fn blocks(&self) -> [&[T]; 3] {
        [self.w.as_slice(), &self.b, self.alpha.as_slice()]
    }

    pub fn blocks_mut(&mut self) -> [&mut [T]; 3] {
        [self.w.as_mut_slice(), &mut self.b, self.alpha.as_mut_slice()]
    }
}

struct Tape<T> {
    hs: Vec<Vec<T>>,
    zs: Vec<Vec<T>>,
    ds: Vec<Vec<T>>,
    /// `A_l`; `None` at layer 0 where it is `W_1` (full) or `I` (factored).
    a: Vec<Option<Matrix<T>>>,
    t: Vec<Matrix<T>>,
    /// `T_l·Q` for penalized layers in the factored basis.
    p: Vec<Option<Matrix<T>>>,
    penalty: T,
}

struct Engine<'n, T> {
    net: &'n PolyNetwork<T>,
    /// `(λ, scope)` when the Jacobian stream is needed.
    penalty: Option<(T, DregScope)>,
    factored: bool,
    q: Option<Matrix<T>>,
}

impl<'n, T: Real> Engine<'n, T> {
    fn new(net: &'n PolyNetwork<T>, mode: JacobianMode) -> Self {
        let penalty = net
            .regularizer
            .penalty()
            .map(|(lambda, scope)| (T::c(lambda), scope));
        let w1 = &net.layers[0].w;
        let factored = match mode {
            JacobianMode::Full => false,
            JacobianMode::Factored => true,
            JacobianMode::Auto => w1.rows() < w1.cols(),
        };
        let q = (penalty.is_some() && factored).then(|| {
            let mut q = Matrix::zeros(w1.rows(), w1.rows());
            matmul_nt_acc(w1, w1, &mut q);
            q
        });
        Engine {
            net,
            penalty,
            factored,
            q,
        }
    }

    fn in_scope(&self, l: usize) -> bool {
        match self.penalty {
            Some((_, DregScope::AllLayers)) => true,
            Some((_, DregScope::FinalLayer)) => l + 1 == self.net.depth(),
            None => false,
        }
    }

    fn forward(&self, x: &[T]) -> Result<Tape<T>> {
        check_input(self.net, x)?;
        let depth = self.net.depth();
        let jac = self.penalty.is_some();
        let mut tape = Tape {
            hs: Vec::with_capacity(depth + 1),
            zs: Vec::with_capacity(depth),
            ds: Vec::with_capacity(depth),
            a: Vec::with_capacity(depth),
            t: Vec::with_capacity(depth),
            p: Vec::with_capacity(depth),
            penalty: T::zero(),
        };
        tape.hs.push(x.to_vec());
        for (l, (params, &act)) in self.net.layers.iter().zip(&self.net.activations).enumerate() {
            let (z, h, d) = layer_values(params, act, &tape.hs[l], l)?;
            if jac {
                let (a, mut t) = if l == 0 {
                    if self.factored {
                        (None, Matrix::identity(params.out_dim()))
                    } else {
                        (None, params.w.clone())
                    }
                } else {
                    let prev = &tape.t[l - 1];
                    let mut a = Matrix::zeros(params.out_dim(), prev.cols());
                    matmul_acc(&params.w, prev, &mut a);
                    let t = a.clone();
                    (Some(a), t)
                };
                scale_rows(&mut t, &d);
                let mut p = None;
                if self.in_scope(l) {
                    let value = if let Some(q) = &self.q {
                        let mut tq = Matrix::zeros(t.rows(), q.cols());
                        matmul_acc(&t, q, &mut tq);
                        let v = tq
                            .as_slice()
                            .iter()
                            .zip(t.as_slice())
                            .fold(T::zero(), |acc, (&u, &w)| acc + u * w);
                        p = Some(tq);
                        v
                    } else {
                        t.as_slice().iter().fold(T::zero(), |acc, &v| acc + v * v)
                    };
                    tape.penalty = tape.penalty + value;
                }
                tape.a.push(a);
                tape.t.push(t);
                tape.p.push(p);
            }
            tape.zs.push(z);
            tape.ds.push(d);
            tape.hs.push(h);
        }
        if !tape.penalty.is_finite() {
            return Err(Error::NonFinite("Jacobian penalty".into()));
        }
        Ok(tape)
    }

    /// Accumulates one sample's gradient; `gh` is `∂(weighted loss)/∂y`.
    /// Returns `∂/∂x` of the task part when `want_input` is set.
    fn backward_sample(
        &self,
        tape: &Tape<T>,
        mut gh: Vec<T>,
        penalty_weight: T,
        grads: &mut ParamGrads<T>,
        gram: Option<&mut Matrix<T>>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let depth = self.net.depth();
        let two_c = T::c(2.0) * penalty_weight;
        let mut gt: Option<Matrix<T>> = None;
        let mut gram = gram;
        let mut input_grad = None;

        for l in (0..depth).rev() {
            let params = &self.net.layers[l];
            let act = self.net.activations[l];
            let z = &tape.zs[l];
            let d = &tape.ds[l];
            let n = z.len();
            let g = &mut grads.layers[l];

            // Adjoint of the Jacobian stream at this layer.
            let mut gd = vec![T::zero(); n];
            let mut ga = None;
            if self.penalty.is_some() {
                let t = &tape.t[l];
                let mut gtl = gt.take().unwrap_or_else(|| Matrix::zeros(t.rows(), t.cols()));
                if self.in_scope(l) {
                    let src = tape.p[l].as_ref().unwrap_or(t);
                    for (o, &s) in gtl.as_mut_slice().iter_mut().zip(src.as_slice()) {
                        *o = *o + two_c * s;
                    }
                    if let Some(gq) = gram.as_deref_mut() {
                        matmul_tn_acc(t, t, gq);
                    }
                }
                for (i, gdi) in gd.iter_mut().enumerate() {
                    let row = gtl.row(i);
                    *gdi = match (&tape.a[l], l, self.factored) {
                        (Some(a), _, _) => crate::linalg::dot(row, a.row(i)),
                        (None, 0, true) => row[i],
                        (None, _, _) => crate::linalg::dot(row, params.w.row(i)),
                    };
                }
                scale_rows(&mut gtl, d);
                ga = Some(gtl);
            }

            // Pre-activation adjoint and coefficient gradients.
            let mut gz = vec![T::zero(); n];
            let degree = act.degree();
            for i in 0..n {
                let alpha = if degree > 0 { params.alpha.row(i) } else { &[] };
                let mut v = gh[i] * d[i];
                if gd[i] != T::zero() {
                    v = v + gd[i] * activate_deriv2(act, alpha, z[i]);
                }
                gz[i] = v;
                if degree > 0 {
                    let grow = g.alpha.row_mut(i);
                    let mut zpow = T::one(); // z^k with k = 0..G-1
                    for (k, ga_k) in grow.iter_mut().enumerate() {
                        let term_d = gd[i] * T::c((k + 1) as f64) * zpow;
                        zpow = zpow * z[i];
                        *ga_k = *ga_k + gh[i] * zpow + term_d;
                    }
                }
            }

            let h_in = &tape.hs[l];
            let cols = h_in.len();
            for (i, &gzi) in gz.iter().enumerate() {
                g.b[i] = g.b[i] + gzi;
                if gzi != T::zero() {
                    let wrow = &mut g.w.as_mut_slice()[i * cols..(i + 1) * cols];
                    for (w, &hv) in wrow.iter_mut().zip(h_in) {
                        *w = *w + gzi * hv;
                    }
                }
            }

            if let Some(ga) = ga {
                if l > 0 {
                    let t_prev = &tape.t[l - 1];
                    matmul_nt_acc(&ga, t_prev, &mut g.w);
                    let mut next = Matrix::zeros(params.in_dim(), t_prev.cols());
                    matmul_tn_acc(&params.w, &ga, &mut next);
                    gt = Some(next);
                } else if !self.factored {
                    for (w, &v) in g.w.as_mut_slice().iter_mut().zip(ga.as_slice()) {
                        *w = *w + v;
                    }
                }
            }

            if l > 0 {
                gh = matvec_t(&params.w, &gz);
            } else if want_input {
                input_grad = Some(matvec_t(&params.w, &gz));
            }
        }
        input_grad
    }

    fn run(&self, batch: &Batch<'_, T>, loss: LossKind, want_grads: bool) -> Result<(LossValue<T>, Option<ParamGrads<T>>)> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        batch.y.check(loss, self.net.output_dim())?;
        let n = batch.len();
        let inv_b = T::one() / T::c(n as f64);
        let lambda = self.penalty.map_or(T::zero(), |(l, _)| l);
        let penalty_weight = lambda * inv_b;

        let mut grads = want_grads.then(|| ParamGrads::zeros_like(self.net));
        let mut gram = (want_grads && self.q.is_some()).then(|| {
            let h1 = self.net.layers[0].out_dim();
            Matrix::zeros(h1, h1)
        });
        let mut task_sum = T::zero();
        let mut pen_sum = T::zero();

        for k in 0..n {
            let row = batch.row_id(k);
            let tape = self.forward(batch.x.row(row))?;
            let (l, gh) = sample_loss(loss, tape.hs.last().unwrap(), batch.y, row);
            task_sum = task_sum + l;
            pen_sum = pen_sum + tape.penalty;
            if let Some(g) = grads.as_mut() {
                let gh = gh.into_iter().map(|v| v * inv_b).collect();
                self.backward_sample(&tape, gh, penalty_weight, g, gram.as_mut(), false);
            }
        }

        if let (Some(g), Some(gq)) = (grads.as_mut(), gram.as_ref()) {
            // W̄_1 += c·(Q̄ + Q̄ᵀ)·W_1 with Q̄ = Σ T_lᵀ T_l (already symmetric).
            let w1 = &self.net.layers[0].w;
            let mut gw = Matrix::zeros(w1.rows(), w1.cols());
            matmul_acc(gq, w1, &mut gw);
            let two_c = T::c(2.0) * penalty_weight;
            for (o, &v) in g.layers[0].w.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *o = *o + two_c * v;
            }
        }

        let task = task_sum * inv_b;
        let penalty = pen_sum * inv_b;
        let value = LossValue {
            task,
            penalty,
            total: task + lambda * penalty,
        };
        if !value.total.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        if let Some(g) = &grads {
            g.check_finite()?;
        }
        Ok((value, grads))
    }
}

/// Mean task loss plus `λ ×` the mean Jacobian penalty of the network's regularizer.
pub fn loss_total<T: Real>(net: &PolyNetwork<T>, batch: &Batch<'_, T>, loss: LossKind) -> Result<LossValue<T>> {
    Engine::new(net, JacobianMode::Auto).run(batch, loss, false).map(|(v, _)| v)
}

/// Exact gradient of [`loss_total`] with respect to every `W`, `b`, `alpha`.
pub fn backward<T: Real>(
    net: &PolyNetwork<T>,
    batch: &Batch<'_, T>,
    loss: LossKind,
) -> Result<(LossValue<T>, ParamGrads<T>)> {
    backward_with_mode(net, batch, loss, JacobianMode::Auto)
}

pub fn backward_with_mode<T: Real>(
    net: &PolyNetwork<T>,
    batch: &Batch<'_, T>,
    loss: LossKind,
    mode: JacobianMode,
) -> Result<(LossValue<T>, ParamGrads<T>)> {
    let (v, g) = Engine::new(net, mode).run(batch, loss, true)?;
    Ok((v, g.expect("gradients requested")))
}

/// Task loss of one sample and its gradient with respect to the input.
pub fn input_gradient<T: Real>(
    net: &PolyNetwork<T>,
    x: &[T],
    labels: &Labels<T>,
    row: usize,
    loss: LossKind,
) -> Result<(T, Vec<T>)> {
    let mut plain = Engine::new(net, JacobianMode::Full);
    plain.penalty = None;
    plain.q = None;
    let tape = plain.forward(x)?;
    let (l, gh) = sample_loss(loss, tape.hs.last().unwrap(), labels, row);
    let mut scratch = ParamGrads::zeros_like(net);
    let g = plain
        .backward_sample(&tape, gh, T::zero(), &mut scratch, None, true)
        .expect("input gradient requested");
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("input gradient".into()));
    }
    Ok((l, g))
}

/// Mean task loss only, skipping the Jacobian stream.
pub fn task_loss<T: Real>(net: &PolyNetwork<T>, batch: &Batch<'_, T>, loss: LossKind) -> Result<T> {
    let mut plain = Engine::new(net, JacobianMode::Full);
    plain.penalty = None;
    plain.q = None;
    plain.run(batch, loss, false).map(|(v, _)| v.task)
}
