//! Composite layers built from the primitive catalog.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::Tensor;
use crate::error::Result;

/// `x [n,k] W [k,m] + b [m]`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    ops::add_row_broadcast(&ops::matmul(x, w)?, b)
}

/// Inverted dropout. Identity in evaluation mode or at keep rate 1.
pub fn dropout(x: &Tensor, keep: f64, rng: &mut ChaCha8Rng, train: bool) -> Result<Tensor> {
    if !train || keep >= 1.0 {
        return Ok(x.clone());
    }
    assert!(keep > 0.0, "keep rate must be positive");
    let mask: Vec<f64> = (0..x.len())
        .map(|_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    ops::mul_mask(x, &mask)
}

/// One LSTM cell step.
///
/// `x [d_in]`, `h, c [d_h]`, `w_ih [4*d_h, d_in]`, `w_hh [4*d_h, d_h]`,
/// `b [4*d_h]`. Gate order: input, forget, cell, output.
pub fn lstm_step(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    b: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let dh = h.len();
    let pre = ops::add(
        &ops::add(&ops::matvec(w_ih, x)?, &ops::matvec(w_hh, h)?)?,
        b,
    )?;
    let i = ops::sigmoid(&ops::slice_vec(&pre, 0, dh)?);
    let f = ops::sigmoid(&ops::slice_vec(&pre, dh, dh)?);
    let g = ops::tanh(&ops::slice_vec(&pre, 2 * dh, dh)?);
    let o = ops::sigmoid(&ops::slice_vec(&pre, 3 * dh, dh)?);
    let c_new = ops::add(&ops::mul(&f, c)?, &ops::mul(&i, &g)?)?;
    let h_new = ops::mul(&o, &ops::tanh(&c_new))?;
    Ok((h_new, c_new))
}

/// Xavier-uniform initial values for a `fan_out x fan_in`-ish weight.
pub fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}
