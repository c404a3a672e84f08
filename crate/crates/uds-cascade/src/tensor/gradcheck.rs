//! Central finite-difference verification of reverse-mode gradients.

use super::Tensor;
use crate::error::Result;

/// Compare analytic gradients of `f` against central differences.
///
/// `f` must be a pure function of its leaf inputs returning a scalar.
/// Returns the maximum relative error over all input coordinates.
pub fn grad_check<F>(f: F, inputs: &[(Vec<usize>, Vec<f64>)], eps: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Tensor,
{
    let build = |values: &[Vec<f64>]| -> Vec<Tensor> {
        inputs
            .iter()
            .zip(values)
            .map(|((shape, _), data)| Tensor::leaf(shape.clone(), data.clone()))
            .collect()
    };
    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();

    let leaves = build(&base);
    let out = f(&leaves);
    out.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut max_err: f64 = 0.0;
    for (ti, (_, data)) in inputs.iter().enumerate() {
        for k in 0..data.len() {
            let mut plus = base.clone();
            plus[ti][k] += eps;
            let mut minus = base.clone();
            minus[ti][k] -= eps;
            let fp = f(&build(&plus)).value();
            let fm = f(&build(&minus)).value();
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[ti][k];
            let denom = (a.abs() + numeric.abs()).max(1.0);
            let err = (a - numeric).abs() / denom;
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn primitive_grads_pass_on_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..5 {
            let n = rng.gen_range(2..5);
            let k = rng.gen_range(2..5);
            let m = rng.gen_range(2..5);
            let inputs = vec![
                (vec![n, k], rand_vec(&mut rng, n * k)),
                (vec![k, m], rand_vec(&mut rng, k * m)),
                (vec![m], rand_vec(&mut rng, m)),
            ];
            let err = grad_check(
                |t| {
                    let y =
                        ops::add_row_broadcast(&ops::matmul(&t[0], &t[1]).unwrap(), &t[2]).unwrap();
                    let y = ops::tanh(&y);
                    let s = ops::softmax_rows(&y).unwrap();
                    ops::mean(&s)
                },
                &inputs,
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "trial {}: err {}", trial, err);
        }
    }

    #[test]
    fn biaffine_and_bilinear_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, m, d, c) = (3, 2, 4, 2);
        let inputs = vec![
            (vec![n, d], rand_vec(&mut rng, n * d)),
            (vec![m, d], rand_vec(&mut rng, m * d)),
            (
                vec![c, d + 1, d + 1],
                rand_vec(&mut rng, c * (d + 1) * (d + 1)),
            ),
            (vec![c, d, d], rand_vec(&mut rng, c * d * d)),
        ];
        let err = grad_check(
            |t| {
                let a = ops::biaffine(&t[0], &t[1], &t[2]).unwrap();
                let b = ops::bilinear(&t[0], &t[1], &t[3]).unwrap();
                ops::mean(&ops::add(&a, &b).unwrap())
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "err {}", err);
    }

    #[test]
    fn loss_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, c) = (4, 3);
        let inputs = vec![
            (vec![n, c], rand_vec(&mut rng, n * c)),
            (vec![n], rand_vec(&mut rng, n)),
        ];
        let err = grad_check(
            |t| {
                let ce = ops::cross_entropy_rows(&t[0], &[0, 2, 1, 1]).unwrap();
                let bce = ops::bce_with_logits(&t[1], &[1.0, 0.0, 1.0, 0.0]).unwrap();
                let ms = ops::mse(&t[1], &[0.5, -0.5, 0.1, 0.9]).unwrap();
                ops::add(&ops::add(&ce, &bce).unwrap(), &ms).unwrap()
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "err {}", err);
    }

    #[test]
    fn layer_norm_and_row_normalize_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (n, m) = (3, 4);
        let mut pos = rand_vec(&mut rng, n * m);
        for v in &mut pos {
            *v = v.abs() + 0.2; // keep row sums away from zero
        }
        let inputs = vec![
            (vec![n, m], rand_vec(&mut rng, n * m)),
            (vec![m], rand_vec(&mut rng, m)),
            (vec![m], rand_vec(&mut rng, m)),
            (vec![n, m], pos),
        ];
        let err = grad_check(
            |t| {
                let ln = ops::layer_norm(&t[0], &t[1], &t[2]).unwrap();
                let rn = ops::row_normalize(&t[3]).unwrap();
                ops::add(&ops::mean(&ln), &ops::mean(&rn)).unwrap()
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "err {}", err);
    }
}
