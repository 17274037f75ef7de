//! Spectral-norm projection by power iteration.
//!
//! After every optimizer step each weight matrix is replaced by
//! `W / max(σ̂(W), 1)`, where `σ̂` is a warm-started power-iteration
//! estimate of the largest singular value. Matrices already inside the unit
//! spectral ball are left unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{matvec, matvec_t, norm2, Matrix, Real};
use crate::polynet::PolyNetwork;

/// Singular-vector estimates carried between calls.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIterState<T = f64> {
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub iters: usize,
}

fn normalized<T: Real>(mut x: Vec<T>) -> Option<Vec<T>> {
    let n = norm2(&x);
    if n > T::zero() && n.is_finite() {
        for v in &mut x {
            *v = *v / n;
        }
        Some(x)
    } else {
        None
    }
}

impl<T: Real> PowerIterState<T> {
    /// Random unit vectors for a `rows × cols` matrix.
    pub fn new(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| {
            let raw: Vec<T> = (0..n)
                .map(|_| T::c(StandardNormal.sample(&mut rng)))
                .collect();
            normalized(raw).unwrap_or_else(|| vec![T::one() / T::c((n as f64).sqrt()); n])
        };
        let u = draw(rows);
        let v = draw(cols);
        PowerIterState { u, v, iters: 0 }
    }
}

/// Power-iteration estimate of `σ_max(W)`, refining `state` in place.
///
/// Returns 0 for a zero matrix.
pub fn spectral_norm_estimate<T: Real>(w: &Matrix<T>, iters: usize, state: &mut PowerIterState<T>) -> T {
    let mut sigma = T::zero();
    for _ in 0..iters.max(1) {
        let Some(v) = normalized(matvec_t(w, &state.u)) else {
            return T::zero();
        };
        let wv = matvec(w, &v).expect("shape fixed by state");
        sigma = norm2(&wv);
        let Some(u) = normalized(wv) else {
            return T::zero();
        };
        state.u = u;
        state.v = v;
        state.iters += 1;
    }
    sigma
}

/// `W / max(σ, 1)`.
pub fn apply_spectral_constraint<T: Real>(w: &Matrix<T>, sigma: T) -> Matrix<T> {
    if sigma > T::one() {
        w.scale(T::one() / sigma)
    } else {
        w.clone()
    }
}

/// Per-layer power-iteration states for a network.
#[derive(Debug, Clone)]
pub struct SpectralProjector<T = f64> {
    states: Vec<PowerIterState<T>>,
    power_iters: usize,
}

impl<T: Real> SpectralProjector<T> {
    pub fn new(net: &PolyNetwork<T>, power_iters: usize, seed: u64) -> Self {
        let states = net
            .layers
            .iter()
            .enumerate()
            .map(|(l, p)| PowerIterState::new(p.w.rows(), p.w.cols(), seed.wrapping_add(l as u64)))
            .collect();
        SpectralProjector {
            states,
            power_iters: power_iters.max(1),
        }
    }

    /// Projects every weight matrix; returns the pre-projection estimates.
    pub fn project(&mut self, net: &mut PolyNetwork<T>) -> Vec<T> {
        net.layers
            .iter_mut()
            .zip(&mut self.states)
            .map(|(p, st)| {
                let sigma = spectral_norm_estimate(&p.w, self.power_iters, st);
                if sigma > T::one() {
                    p.w = apply_spectral_constraint(&p.w, sigma);
                }
                sigma
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn svd_max(w: &Matrix<f64>) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(w.rows(), w.cols(), w.as_slice());
        m.singular_values().max()
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn diagonal_and_identity() {
        let d = Matrix::diag(&[3.0, 1.0]);
        let mut st = PowerIterState::new(2, 2, 1);
        assert_relative_eq!(spectral_norm_estimate(&d, 50, &mut st), 3.0, epsilon = 1e-6);
        assert_eq!(st.iters, 50);
        let mut st = PowerIterState::new(4, 4, 2);
        assert_relative_eq!(spectral_norm_estimate(&Matrix::<f64>::identity(4), 3, &mut st), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let mut st = PowerIterState::new(3, 2, 0);
        assert_eq!(spectral_norm_estimate(&Matrix::<f64>::zeros(3, 2), 10, &mut st), 0.0);
    }

    #[test]
    fn matches_svd_on_random_matrix() {
        let w = random(8, 5, 17);
        let mut st = PowerIterState::new(8, 5, 3);
        let sigma = spectral_norm_estimate(&w, 100, &mut st);
        assert_relative_eq!(sigma, svd_max(&w), max_relative = 1e-4);
    }

    #[test]
    fn warm_start_converges_across_calls() {
        let w = random(6, 6, 4);
        let mut st = PowerIterState::new(6, 6, 9);
        for _ in 0..200 {
            spectral_norm_estimate(&w, 1, &mut st);
        }
        assert_relative_eq!(spectral_norm_estimate(&w, 1, &mut st), svd_max(&w), max_relative = 1e-6);
    }

    #[test]
    fn constraint_cases() {
        let d = Matrix::diag(&[3.0, 1.0]);
        assert_eq!(apply_spectral_constraint(&d, 3.0), Matrix::diag(&[1.0, 1.0 / 3.0]));
        let small = Matrix::diag(&[0.5, 0.2]);
        assert_eq!(apply_spectral_constraint(&small, 0.5), small);
    }

    #[test]
    fn projected_random_matrix_is_inside_unit_ball() {
        for seed in 0..10 {
            let w = random(7, 4, seed);
            let mut st = PowerIterState::new(7, 4, seed);
            let sigma = spectral_norm_estimate(&w, 100, &mut st);
            let p = apply_spectral_constraint(&w, sigma);
            assert!(svd_max(&p) <= 1.0 + 1e-3);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let w = random(5, 5, 21);
        let mut st = PowerIterState::new(5, 5, 0);
        let once = apply_spectral_constraint(&w, spectral_norm_estimate(&w, 200, &mut st));
        let twice = apply_spectral_constraint(&once, spectral_norm_estimate(&once, 200, &mut st));
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn output_norm_is_min_of_input_norm_and_one() {
        let w = random(4, 6, 8);
        let true_sigma = svd_max(&w);
        for c in [0.05, 0.2, 1.0, 5.0] {
            let cw = w.scale(c / true_sigma * 0.9);
            let mut st = PowerIterState::new(4, 6, 1);
            let p = apply_spectral_constraint(&cw, spectral_norm_estimate(&cw, 200, &mut st));
            assert_relative_eq!(svd_max(&p), (c * 0.9f64).min(1.0), max_relative = 1e-6);
        }
    }
}
