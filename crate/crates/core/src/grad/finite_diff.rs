use super::backward::{loss_total, Batch, ParamGrads};
use super::loss::LossKind;
use crate::error::Result;
use crate::polynet::PolyNetwork;

/// Central-difference gradient of [`loss_total`] for every parameter.
///
/// Test oracle only: `2·P` loss evaluations for `P` parameters.
pub fn finite_diff_grad(
    net: &PolyNetwork<f64>,
    batch: &Batch<'_, f64>,
    loss: LossKind,
    step: f64,
) -> Result<ParamGrads<f64>> {
    let mut grads = ParamGrads::zeros_like(net);
    let mut probe = net.clone();
    for l in 0..net.layers.len() {
        for b in 0..3 {
            let len = net.layers[l].blocks()[b].len();
            for i in 0..len {
                let orig = net.layers[l].blocks()[b][i];
                probe.layers[l].blocks_mut()[b][i] = orig + step;
                let up = loss_total(&probe, batch, loss)?.total;
                probe.layers[l].blocks_mut()[b][i] = orig - step;
                let down = loss_total(&probe, batch, loss)?.total;
                probe.layers[l].blocks_mut()[b][i] = orig;
                grads.layers[l].blocks_mut()[b][i] = (up - down) / (2.0 * step);
            }
        }
    }
    Ok(grads)
}

/// Largest relative disagreement over entries with `|reference| > floor`.
pub fn max_relative_error(reference: &ParamGrads<f64>, other: &ParamGrads<f64>, floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (a, b) in reference.layers.iter().zip(&other.layers) {
        for (ba, bb) in a.blocks().into_iter().zip(b.blocks()) {
            for (&x, &y) in ba.iter().zip(bb) {
                if x.abs() > floor {
                    worst = worst.max((x - y).abs() / x.abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Labels;
    use crate::linalg::Matrix;
    use crate::polynet::{ActivationKind, PolyLayerParams, RegularizerKind};

    /// Single linear unit, mse: loss = (w·x − t)², quadratic in w.
    #[test]
    fn quadratic_function_is_exact_to_step_squared() {
        let net = PolyNetwork::from_layers(
            1,
            vec![PolyLayerParams {
                w: Matrix::new(1, 1, vec![0.7]).unwrap(),
                b: vec![0.0],
                alpha: Matrix::zeros(0, 0),
            }],
            vec![ActivationKind::Linear],
            RegularizerKind::None,
        )
        .unwrap();
        let x = Matrix::new(1, 1, vec![2.0]).unwrap();
        let y = Labels::Values(Matrix::new(1, 1, vec![1.0]).unwrap());
        let g = finite_diff_grad(&net, &Batch::new(&x, &y), LossKind::Mse, 1e-3).unwrap();
        // d/dw (2w − 1)² = 4(2w − 1)
        assert!((g.layers[0].w[(0, 0)] - 4.0 * (1.4 - 1.0)).abs() < 1e-9);
        assert!((g.layers[0].b[0] - 2.0 * (1.4 - 1.0)).abs() < 1e-9);
    }
}
