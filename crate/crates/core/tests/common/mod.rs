#![allow(dead_code)]

use dualstream::grad::{Labels, LossKind};
use dualstream::polynet::{network_forward, ActivationKind, InitConfig, PolyNetwork, RegularizerKind};
use dualstream::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POLY3: ActivationKind = ActivationKind::Poly { degree: 3 };

/// Random network with perturbed coefficients and biases so every
/// polynomial term and every gradient path is exercised.
pub fn random_net(
    seed: u64,
    d: usize,
    hidden: &[usize],
    out: usize,
    act: ActivationKind,
    reg: RegularizerKind,
) -> PolyNetwork<f64> {
    let mut net = PolyNetwork::init(d, hidden, out, act, reg, InitConfig::default(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919));
    for layer in &mut net.layers {
        for v in layer.w.as_mut_slice() {
            *v *= 1.5;
        }
        for v in layer.alpha.as_mut_slice() {
            *v += rng.random_range(-0.4..0.4);
        }
        for v in &mut layer.b {
            *v = rng.random_range(-0.3..0.3);
        }
    }
    net
}

pub fn random_inputs(seed: u64, n: usize, d: usize) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_labels(seed: u64, n: usize, out: usize, loss: LossKind) -> Labels<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match loss {
        LossKind::Mse => Labels::Values(Matrix::from_fn(n, out, |_, _| rng.random_range(-1.0..1.0))),
        LossKind::CrossEntropy => Labels::Classes((0..n).map(|_| rng.random_range(0..out)).collect()),
    }
}

/// Smallest |z| over all hidden pre-activations; ReLU finite differences
/// are only meaningful away from the kink.
pub fn min_abs_preactivation(net: &PolyNetwork<f64>, x: &Matrix<f64>) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..x.rows() {
        let pass = network_forward(net, x.row(i)).unwrap();
        for c in &pass.caches[..pass.caches.len() - 1] {
            for z in &c.z {
                m = m.min(z.abs());
            }
        }
    }
    m
}

pub fn rel_fro_err(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    let norm: f64 = b.as_slice().iter().map(|y| y * y).sum();
    (diff / norm.max(1e-300)).sqrt()
}

/// Central finite-difference Jacobian of the network output.
pub fn fd_jacobian(net: &PolyNetwork<f64>, x: &[f64], step: f64) -> Matrix<f64> {
    let m = net.output_dim();
    let mut j = Matrix::zeros(m, x.len());
    for c in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += step;
        xm[c] -= step;
        let yp = net.predict(&xp).unwrap();
        let ym = net.predict(&xm).unwrap();
        for r in 0..m {
            j[(r, c)] = (yp[r] - ym[r]) / (2.0 * step);
        }
    }
    j
}

pub fn regularizers(lambda: f64) -> Vec<RegularizerKind> {
    use dualstream::polynet::DregScope;
    vec![
        RegularizerKind::None,
        RegularizerKind::Dreg { lambda, scope: DregScope::AllLayers },
        RegularizerKind::Dreg { lambda, scope: DregScope::FinalLayer },
        RegularizerKind::Igpen { lambda },
        RegularizerKind::SpectralNorm { power_iters: 1 },
    ]
}
