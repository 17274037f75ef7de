use crate::linalg::Real;

/// `Σ_{k=1..G} α_k z^k` by Horner's scheme.
#[inline]
pub fn poly_eval<T: Real>(alpha: &[T], z: T) -> T {
    let mut acc = T::zero();
    for &a in alpha.iter().rev() {
        acc = (acc + a) * z;
    }
    acc
}

/// `Σ_{k=1..G} k·α_k z^{k−1}`.
#[inline]
pub fn poly_deriv<T: Real>(alpha: &[T], z: T) -> T {
    let mut acc = T::zero();
    for (k, &a) in alpha.iter().enumerate().rev() {
        acc = acc * z + T::c((k + 1) as f64) * a;
    }
    acc
}

/// `Σ_{k=2..G} k(k−1)·α_k z^{k−2}`.
#[inline]
pub fn poly_deriv2<T: Real>(alpha: &[T], z: T) -> T {
    let mut acc = T::zero();
    for (k, &a) in alpha.iter().enumerate().skip(1).rev() {
        let k = (k + 1) as f64;
        acc = acc * z + T::c(k * (k - 1.0)) * a;
    }
    acc
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2))
}

/// Exact (erf-based) GELU, `z·Φ(z)`.
pub fn gelu<T: Real>(z: T) -> T {
    let x = z.as_f64();
    T::c(x * std_normal_cdf(x))
}

pub fn gelu_deriv<T: Real>(z: T) -> T {
    let x = z.as_f64();
    T::c(std_normal_cdf(x) + x * std_normal_pdf(x))
}

pub fn gelu_deriv2<T: Real>(z: T) -> T {
    let x = z.as_f64();
    T::c((2.0 - x * x) * std_normal_pdf(x))
}
