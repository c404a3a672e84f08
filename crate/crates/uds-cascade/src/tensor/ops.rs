//! Primitive differentiable operations.
//!
//! Each function computes the forward value eagerly and attaches a closure
//! that maps the output gradient to parent gradients.

use super::Tensor;
use crate::error::{Error, Result};

fn shape_err(op: &'static str, msg: String) -> Error {
    Error::Shape { op, msg }
}

fn check(cond: bool, op: &'static str, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(shape_err(op, msg()))
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check(a.shape() == b.shape(), "add", || {
        format!("{:?} vs {:?}", a.shape(), b.shape())
    })?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Some(Box::new(|g, parents| {
            parents[0].accumulate_grad(g);
            parents[1].accumulate_grad(g);
        })),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check(a.shape() == b.shape(), "sub", || {
        format!("{:?} vs {:?}", a.shape(), b.shape())
    })?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Ok(Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Some(Box::new(|g, parents| {
            parents[0].accumulate_grad(g);
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            parents[1].accumulate_grad(&neg);
        })),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check(a.shape() == b.shape(), "mul", || {
        format!("{:?} vs {:?}", a.shape(), b.shape())
    })?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Some(Box::new(|g, parents| {
            let da: Vec<f64> = g
                .iter()
                .zip(parents[1].data())
                .map(|(g, y)| g * y)
                .collect();
            let db: Vec<f64> = g
                .iter()
                .zip(parents[0].data())
                .map(|(g, x)| g * x)
                .collect();
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&db);
        })),
    ))
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check(a.shape() == b.shape(), "div", || {
        format!("{:?} vs {:?}", a.shape(), b.shape())
    })?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x / y).collect();
    Ok(Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Some(Box::new(|g, parents| {
            let bx = parents[1].data();
            let ax = parents[0].data();
            let da: Vec<f64> = g.iter().zip(bx).map(|(g, y)| g / y).collect();
            let db: Vec<f64> = g
                .iter()
                .zip(ax.iter().zip(bx))
                .map(|(g, (x, y))| -g * x / (y * y))
                .collect();
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&db);
        })),
    ))
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    let data = a.data().iter().map(|x| x * c).collect();
    Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let da: Vec<f64> = g.iter().map(|v| v * c).collect();
            parents[0].accumulate_grad(&da);
        })),
    )
}

/// Elementwise product with a constant mask (not differentiated w.r.t. mask).
pub fn mul_mask(a: &Tensor, mask: &[f64]) -> Result<Tensor> {
    check(a.len() == mask.len(), "mul_mask", || {
        format!("len {} vs mask {}", a.len(), mask.len())
    })?;
    let data = a.data().iter().zip(mask).map(|(x, m)| x * m).collect();
    let mask = mask.to_vec();
    Ok(Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let da: Vec<f64> = g.iter().zip(&mask).map(|(g, m)| g * m).collect();
            parents[0].accumulate_grad(&da);
        })),
    ))
}

pub fn relu(a: &Tensor) -> Tensor {
    let data = a.data().iter().map(|x| x.max(0.0)).collect();
    Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Some(Box::new(|g, parents| {
            let da: Vec<f64> = g
                .iter()
                .zip(parents[0].data())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            parents[0].accumulate_grad(&da);
        })),
    )
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    let data: Vec<f64> = a.data().iter().map(|x| sigmoid_f(*x)).collect();
    let cached = data.clone();
    Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let da: Vec<f64> = g
                .iter()
                .zip(&cached)
                .map(|(g, s)| g * s * (1.0 - s))
                .collect();
            parents[0].accumulate_grad(&da);
        })),
    )
}

pub(crate) fn sigmoid_f(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(a: &Tensor) -> Tensor {
    let data: Vec<f64> = a.data().iter().map(|x| x.tanh()).collect();
    let cached = data.clone();
    Tensor::new(
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let da: Vec<f64> = g
                .iter()
                .zip(&cached)
                .map(|(g, t)| g * (1.0 - t * t))
                .collect();
            parents[0].accumulate_grad(&da);
        })),
    )
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check(
        a.shape().len() == 2 && b.shape().len() == 2,
        "matmul",
        || format!("{:?} x {:?}", a.shape(), b.shape()),
    )?;
    let (n, k) = (a.rows(), a.cols());
    let (k2, m) = (b.rows(), b.cols());
    check(k == k2, "matmul", || format!("inner dims {} vs {}", k, k2))?;
    let mut data = vec![0.0; n * m];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            for j in 0..m {
                data[i * m + j] += av * bd[p * m + j];
            }
        }
    }
    Ok(Tensor::new(
        vec![n, m],
        data,
        vec![a.clone(), b.clone()],
        Some(Box::new(move |g, parents| {
            let ad = parents[0].data();
            let bd = parents[1].data();
            // dA = G B^T
            let mut da = vec![0.0; n * k];
            for i in 0..n {
                for j in 0..m {
                    let gv = g[i * m + j];
                    if gv == 0.0 {
                        continue;
                    }
                    for p in 0..k {
                        da[i * k + p] += gv * bd[p * m + j];
                    }
                }
            }
            // dB = A^T G
            let mut db = vec![0.0; k * m];
            for i in 0..n {
                for p in 0..k {
                    let av = ad[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    for j in 0..m {
                        db[p * m + j] += av * g[i * m + j];
                    }
                }
            }
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&db);
        })),
    ))
}

/// `A [n,k] * x [k] -> [n]`.
pub fn matvec(a: &Tensor, x: &Tensor) -> Result<Tensor> {
    check(
        a.shape().len() == 2 && x.shape().len() == 1 && a.cols() == x.len(),
        "matvec",
        || format!("{:?} x {:?}", a.shape(), x.shape()),
    )?;
    let (n, k) = (a.rows(), a.cols());
    let mut data = vec![0.0; n];
    for (i, out) in data.iter_mut().enumerate() {
        let mut s = 0.0;
        for p in 0..k {
            s += a.data()[i * k + p] * x.data()[p];
        }
        *out = s;
    }
    Ok(Tensor::new(
        vec![n],
        data,
        vec![a.clone(), x.clone()],
        Some(Box::new(move |g, parents| {
            let ad = parents[0].data();
            let xd = parents[1].data();
            let mut da = vec![0.0; n * k];
            let mut dx = vec![0.0; k];
            for i in 0..n {
                let gv = g[i];
                if gv == 0.0 {
                    continue;
                }
                for p in 0..k {
                    da[i * k + p] += gv * xd[p];
                    dx[p] += gv * ad[i * k + p];
                }
            }
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&dx);
        })),
    ))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    check(a.shape().len() == 2, "transpose", || {
        format!("{:?}", a.shape())
    })?;
    let (n, m) = (a.rows(), a.cols());
    let mut data = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            data[j * n + i] = a.data()[i * m + j];
        }
    }
    Ok(Tensor::new(
        vec![m, n],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let mut da = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    da[i * m + j] = g[j * n + i];
                }
            }
            parents[0].accumulate_grad(&da);
        })),
    ))
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

pub fn reshape(a: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    check(
        shape.iter().product::<usize>() == a.len(),
        "reshape",
        || format!("{:?} -> {:?}", a.shape(), shape),
    )?;
    Ok(Tensor::new(
        shape,
        a.data().to_vec(),
        vec![a.clone()],
        Some(Box::new(|g, parents| parents[0].accumulate_grad(g))),
    ))
}

pub fn concat_vec(parts: &[Tensor]) -> Result<Tensor> {
    check(!parts.is_empty(), "concat_vec", || "empty input".into())?;
    for p in parts {
        check(p.shape().len() == 1, "concat_vec", || {
            format!("{:?} is not a vector", p.shape())
        })?;
    }
    let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    let mut data = Vec::with_capacity(lens.iter().sum());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let total = data.len();
    Ok(Tensor::new(
        vec![total],
        data,
        parts.to_vec(),
        Some(Box::new(move |g, parents| {
            let mut off = 0;
            for (p, l) in parents.iter().zip(&lens) {
                p.accumulate_grad(&g[off..off + l]);
                off += l;
            }
        })),
    ))
}

/// Concatenate matrices with equal row counts along columns.
pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    check(!parts.is_empty(), "concat_cols", || "empty input".into())?;
    let n = parts[0].rows();
    for p in parts {
        check(p.shape().len() == 2 && p.rows() == n, "concat_cols", || {
            format!("{:?}", p.shape())
        })?;
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
    let m: usize = widths.iter().sum();
    let mut data = vec![0.0; n * m];
    let mut off = 0;
    for (p, w) in parts.iter().zip(&widths) {
        for i in 0..n {
            data[i * m + off..i * m + off + w].copy_from_slice(&p.data()[i * w..(i + 1) * w]);
        }
        off += w;
    }
    Ok(Tensor::new(
        vec![n, m],
        data,
        parts.to_vec(),
        Some(Box::new(move |g, parents| {
            let mut off = 0;
            for (p, w) in parents.iter().zip(&widths) {
                let mut dp = vec![0.0; n * w];
                for i in 0..n {
                    dp[i * w..(i + 1) * w].copy_from_slice(&g[i * m + off..i * m + off + w]);
                }
                p.accumulate_grad(&dp);
                off += w;
            }
        })),
    ))
}

/// Concatenate matrices with equal column counts along rows.
pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
    check(!parts.is_empty(), "concat_rows", || "empty input".into())?;
    let m = parts[0].cols();
    for p in parts {
        check(p.shape().len() == 2 && p.cols() == m, "concat_rows", || {
            format!("{:?}", p.shape())
        })?;
    }
    let heights: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
    let n: usize = heights.iter().sum();
    let mut data = Vec::with_capacity(n * m);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Ok(Tensor::new(
        vec![n, m],
        data,
        parts.to_vec(),
        Some(Box::new(move |g, parents| {
            let mut off = 0;
            for (p, h) in parents.iter().zip(&heights) {
                p.accumulate_grad(&g[off..off + h * m]);
                off += h * m;
            }
        })),
    ))
}

pub fn slice_vec(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    check(
        a.shape().len() == 1 && start + len <= a.len(),
        "slice_vec",
        || format!("[{}..{}] of {:?}", start, start + len, a.shape()),
    )?;
    let data = a.data()[start..start + len].to_vec();
    let total = a.len();
    Ok(Tensor::new(
        vec![len],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let mut da = vec![0.0; total];
            da[start..start + len].copy_from_slice(g);
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Stack vectors of equal length into a matrix (one per row).
pub fn stack_rows(rows: &[Tensor]) -> Result<Tensor> {
    check(!rows.is_empty(), "stack_rows", || "empty input".into())?;
    let m = rows[0].len();
    for r in rows {
        check(r.shape().len() == 1 && r.len() == m, "stack_rows", || {
            format!("{:?}", r.shape())
        })?;
    }
    let n = rows.len();
    let mut data = Vec::with_capacity(n * m);
    for r in rows {
        data.extend_from_slice(r.data());
    }
    Ok(Tensor::new(
        vec![n, m],
        data,
        rows.to_vec(),
        Some(Box::new(move |g, parents| {
            for (i, p) in parents.iter().enumerate() {
                p.accumulate_grad(&g[i * m..(i + 1) * m]);
            }
        })),
    ))
}

pub fn row(a: &Tensor, i: usize) -> Result<Tensor> {
    check(a.shape().len() == 2 && i < a.rows(), "row", || {
        format!("row {} of {:?}", i, a.shape())
    })?;
    let m = a.cols();
    let n = a.rows();
    let data = a.data()[i * m..(i + 1) * m].to_vec();
    Ok(Tensor::new(
        vec![m],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let mut da = vec![0.0; n * m];
            da[i * m..(i + 1) * m].copy_from_slice(g);
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Gather rows by index (duplicates allowed).
pub fn select_rows(a: &Tensor, idx: &[usize]) -> Result<Tensor> {
    check(a.shape().len() == 2, "select_rows", || {
        format!("{:?}", a.shape())
    })?;
    let (n, m) = (a.rows(), a.cols());
    for &i in idx {
        check(i < n, "select_rows", || format!("index {} >= {}", i, n))?;
    }
    let mut data = Vec::with_capacity(idx.len() * m);
    for &i in idx {
        data.extend_from_slice(&a.data()[i * m..(i + 1) * m]);
    }
    let idx = idx.to_vec();
    let k = idx.len();
    Ok(Tensor::new(
        vec![k, m],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let mut da = vec![0.0; n * m];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..m {
                    da[i * m + j] += g[r * m + j];
                }
            }
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Gather flat elements by index into a vector.
pub fn gather(a: &Tensor, idx: &[usize]) -> Result<Tensor> {
    for &i in idx {
        check(i < a.len(), "gather", || {
            format!("index {} >= {}", i, a.len())
        })?;
    }
    let data: Vec<f64> = idx.iter().map(|&i| a.data()[i]).collect();
    let idx = idx.to_vec();
    let total = a.len();
    Ok(Tensor::new(
        vec![idx.len()],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let mut da = vec![0.0; total];
            for (r, &i) in idx.iter().enumerate() {
                da[i] += g[r];
            }
            parents[0].accumulate_grad(&da);
        })),
    ))
}

// ---------------------------------------------------------------------------
// reductions and broadcasts
// ---------------------------------------------------------------------------

pub fn sum(a: &Tensor) -> Tensor {
    let s: f64 = a.data().iter().sum();
    let n = a.len();
    Tensor::new(
        vec![1],
        vec![s],
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            parents[0].accumulate_grad(&vec![g[0]; n]);
        })),
    )
}

pub fn mean(a: &Tensor) -> Tensor {
    let n = a.len();
    scale(&sum(a), 1.0 / n as f64)
}

/// Column-wise mean of a matrix: `[n,m] -> [m]`.
pub fn mean_rows(a: &Tensor) -> Result<Tensor> {
    check(a.shape().len() == 2, "mean_rows", || {
        format!("{:?}", a.shape())
    })?;
    let (n, m) = (a.rows(), a.cols());
    let mut data = vec![0.0; m];
    for i in 0..n {
        for (j, out) in data.iter_mut().enumerate() {
            *out += a.data()[i * m + j];
        }
    }
    for v in &mut data {
        *v /= n as f64;
    }
    Ok(Tensor::new(
        vec![m],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let mut da = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    da[i * m + j] = g[j] / n as f64;
                }
            }
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Add a bias row vector to every row of a matrix.
pub fn add_row_broadcast(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check(
        a.shape().len() == 2 && b.shape().len() == 1 && a.cols() == b.len(),
        "add_row_broadcast",
        || format!("{:?} + {:?}", a.shape(), b.shape()),
    )?;
    let (n, m) = (a.rows(), a.cols());
    let mut data = a.data().to_vec();
    for i in 0..n {
        for j in 0..m {
            data[i * m + j] += b.data()[j];
        }
    }
    Ok(Tensor::new(
        vec![n, m],
        data,
        vec![a.clone(), b.clone()],
        Some(Box::new(move |g, parents| {
            parents[0].accumulate_grad(g);
            let mut db = vec![0.0; m];
            for i in 0..n {
                for j in 0..m {
                    db[j] += g[i * m + j];
                }
            }
            parents[1].accumulate_grad(&db);
        })),
    ))
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    check(a.shape().len() == 2, "softmax_rows", || {
        format!("{:?}", a.shape())
    })?;
    let (n, m) = (a.rows(), a.cols());
    let mut data = vec![0.0; n * m];
    for i in 0..n {
        let r = &a.data()[i * m..(i + 1) * m];
        let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..m {
            let e = (r[j] - mx).exp();
            data[i * m + j] = e;
            z += e;
        }
        for j in 0..m {
            data[i * m + j] /= z;
        }
    }
    let cached = data.clone();
    Ok(Tensor::new(
        vec![n, m],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let mut da = vec![0.0; n * m];
            for i in 0..n {
                let y = &cached[i * m..(i + 1) * m];
                let gr = &g[i * m..(i + 1) * m];
                let dot: f64 = y.iter().zip(gr).map(|(y, g)| y * g).sum();
                for j in 0..m {
                    da[i * m + j] = y[j] * (gr[j] - dot);
                }
            }
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Normalize each row to sum 1. Rows with (near-)zero mass are left as zeros.
pub fn row_normalize(a: &Tensor) -> Result<Tensor> {
    check(a.shape().len() == 2, "row_normalize", || {
        format!("{:?}", a.shape())
    })?;
    let (n, m) = (a.rows(), a.cols());
    let sums: Vec<f64> = (0..n)
        .map(|i| a.data()[i * m..(i + 1) * m].iter().sum())
        .collect();
    let mut data = vec![0.0; n * m];
    for i in 0..n {
        if sums[i].abs() > 1e-12 {
            for j in 0..m {
                data[i * m + j] = a.data()[i * m + j] / sums[i];
            }
        }
    }
    Ok(Tensor::new(
        vec![n, m],
        data,
        vec![a.clone()],
        Some(Box::new(move |g, parents| {
            let x = parents[0].data();
            let mut da = vec![0.0; n * m];
            for i in 0..n {
                let s = sums[i];
                if s.abs() <= 1e-12 {
                    continue;
                }
                let gr = &g[i * m..(i + 1) * m];
                let dot: f64 = gr
                    .iter()
                    .zip(&x[i * m..(i + 1) * m])
                    .map(|(g, x)| g * x)
                    .sum();
                for j in 0..m {
                    da[i * m + j] = gr[j] / s - dot / (s * s);
                }
            }
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Row-wise layer normalization with learnable gain and bias.
pub fn layer_norm(a: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    check(
        a.shape().len() == 2 && gain.len() == a.cols() && bias.len() == a.cols(),
        "layer_norm",
        || {
            format!(
                "{:?} gain {:?} bias {:?}",
                a.shape(),
                gain.shape(),
                bias.shape()
            )
        },
    )?;
    const EPS: f64 = 1e-5;
    let (n, m) = (a.rows(), a.cols());
    let mut norm = vec![0.0; n * m];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let r = &a.data()[i * m..(i + 1) * m];
        let mu: f64 = r.iter().sum::<f64>() / m as f64;
        let var: f64 = r.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m as f64;
        let is = 1.0 / (var + EPS).sqrt();
        inv_std[i] = is;
        for j in 0..m {
            norm[i * m + j] = (r[j] - mu) * is;
        }
    }
    let mut data = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            data[i * m + j] = norm[i * m + j] * gain.data()[j] + bias.data()[j];
        }
    }
    let norm_cache = norm;
    Ok(Tensor::new(
        vec![n, m],
        data,
        vec![a.clone(), gain.clone(), bias.clone()],
        Some(Box::new(move |g, parents| {
            let gd = parents[1].data();
            let mut da = vec![0.0; n * m];
            let mut dgain = vec![0.0; m];
            let mut dbias = vec![0.0; m];
            for i in 0..n {
                let nh = &norm_cache[i * m..(i + 1) * m];
                let gr = &g[i * m..(i + 1) * m];
                // dnorm_j = g_j * gain_j
                let mut sum_dn = 0.0;
                let mut sum_dn_nh = 0.0;
                for j in 0..m {
                    let dn = gr[j] * gd[j];
                    sum_dn += dn;
                    sum_dn_nh += dn * nh[j];
                    dgain[j] += gr[j] * nh[j];
                    dbias[j] += gr[j];
                }
                let is = inv_std[i];
                for j in 0..m {
                    let dn = gr[j] * gd[j];
                    da[i * m + j] = is * (dn - sum_dn / m as f64 - nh[j] * sum_dn_nh / m as f64);
                }
            }
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&dgain);
            parents[2].accumulate_grad(&dbias);
        })),
    ))
}

// ---------------------------------------------------------------------------
// lookup
// ---------------------------------------------------------------------------

pub fn embedding_lookup(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    check(table.shape().len() == 2, "embedding_lookup", || {
        format!("{:?}", table.shape())
    })?;
    select_rows(table, ids)
}

// ---------------------------------------------------------------------------
// pairwise scorers
// ---------------------------------------------------------------------------

/// Bias-augmented bilinear scorer.
///
/// `left [n,d]`, `right [m,d]`, `w [c,(d+1),(d+1)]`; output `[n*m, c]` with
/// row `i*m + j` holding the scores of pair `(i, j)`:
/// `s = [l_i;1]^T W_c [r_j;1]`.
pub fn biaffine(left: &Tensor, right: &Tensor, w: &Tensor) -> Result<Tensor> {
    check(
        left.shape().len() == 2 && right.shape().len() == 2 && w.shape().len() == 3,
        "biaffine",
        || format!("{:?}, {:?}, {:?}", left.shape(), right.shape(), w.shape()),
    )?;
    let d = left.cols();
    check(
        right.cols() == d && w.shape()[1] == d + 1 && w.shape()[2] == d + 1,
        "biaffine",
        || {
            format!(
                "d mismatch: left {:?}, right {:?}, w {:?}",
                left.shape(),
                right.shape(),
                w.shape()
            )
        },
    )?;
    pairwise_scores(left, right, w, true)
}

/// Bilinear scorer without bias augmentation: `s = l_i^T W_c r_j`.
pub fn bilinear(left: &Tensor, right: &Tensor, w: &Tensor) -> Result<Tensor> {
    check(
        left.shape().len() == 2 && right.shape().len() == 2 && w.shape().len() == 3,
        "bilinear",
        || format!("{:?}, {:?}, {:?}", left.shape(), right.shape(), w.shape()),
    )?;
    let d = left.cols();
    check(
        right.cols() == d && w.shape()[1] == d && w.shape()[2] == d,
        "bilinear",
        || {
            format!(
                "d mismatch: left {:?}, right {:?}, w {:?}",
                left.shape(),
                right.shape(),
                w.shape()
            )
        },
    )?;
    pairwise_scores(left, right, w, false)
}

fn pairwise_scores(left: &Tensor, right: &Tensor, w: &Tensor, bias: bool) -> Result<Tensor> {
    let n = left.rows();
    let m = right.rows();
    let d = left.cols();
    let da = if bias { d + 1 } else { d }; // augmented dim
    let c = w.shape()[0];
    let aug = |t: &Tensor, rows: usize| -> Vec<f64> {
        let mut out = vec![0.0; rows * da];
        for i in 0..rows {
            out[i * da..i * da + d].copy_from_slice(&t.data()[i * d..(i + 1) * d]);
            if bias {
                out[i * da + d] = 1.0;
            }
        }
        out
    };
    let lh = aug(left, n);
    let rh = aug(right, m);
    // wl[c][i] = W_c^T applied: tmp[c, i, q] = sum_p lh[i,p] W_c[p,q]
    let wd = w.data();
    let mut data = vec![0.0; n * m * c];
    let mut tmp = vec![0.0; da]; // per (c,i): lh_i^T W_c
    for ch in 0..c {
        let wc = &wd[ch * da * da..(ch + 1) * da * da];
        for i in 0..n {
            for q in 0..da {
                let mut s = 0.0;
                for p in 0..da {
                    s += lh[i * da + p] * wc[p * da + q];
                }
                tmp[q] = s;
            }
            for j in 0..m {
                let mut s = 0.0;
                for q in 0..da {
                    s += tmp[q] * rh[j * da + q];
                }
                data[(i * m + j) * c + ch] = s;
            }
        }
    }
    Ok(Tensor::new(
        vec![n * m, c],
        data,
        vec![left.clone(), right.clone(), w.clone()],
        Some(Box::new(move |g, parents| {
            let wd = parents[2].data();
            let mut dl = vec![0.0; n * d];
            let mut dr = vec![0.0; m * d];
            let mut dw = vec![0.0; c * da * da];
            for ch in 0..c {
                let wc = &wd[ch * da * da..(ch + 1) * da * da];
                for i in 0..n {
                    for j in 0..m {
                        let gv = g[(i * m + j) * c + ch];
                        if gv == 0.0 {
                            continue;
                        }
                        for p in 0..da {
                            let lv = lh[i * da + p];
                            for q in 0..da {
                                let rv = rh[j * da + q];
                                dw[ch * da * da + p * da + q] += gv * lv * rv;
                                if p < d {
                                    // accumulate into dl below with cached W r
                                }
                            }
                        }
                        // dl_i += g * W_c r_j ; dr_j += g * W_c^T l_i
                        for p in 0..d {
                            let mut s = 0.0;
                            for q in 0..da {
                                s += wc[p * da + q] * rh[j * da + q];
                            }
                            dl[i * d + p] += gv * s;
                        }
                        for q in 0..d {
                            let mut s = 0.0;
                            for p in 0..da {
                                s += lh[i * da + p] * wc[p * da + q];
                            }
                            dr[j * d + q] += gv * s;
                        }
                    }
                }
            }
            parents[0].accumulate_grad(&dl);
            parents[1].accumulate_grad(&dr);
            parents[2].accumulate_grad(&dw);
        })),
    ))
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Mean cross-entropy of softmax-normalized rows against integer targets.
pub fn cross_entropy_rows(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    check(
        logits.shape().len() == 2 && logits.rows() == targets.len(),
        "cross_entropy",
        || format!("logits {:?} vs {} targets", logits.shape(), targets.len()),
    )?;
    let (n, m) = (logits.rows(), logits.cols());
    for &t in targets {
        check(t < m, "cross_entropy", || {
            format!("target {} out of range {}", t, m)
        })?;
    }
    let mut probs = vec![0.0; n * m];
    let mut loss = 0.0;
    for i in 0..n {
        let r = &logits.data()[i * m..(i + 1) * m];
        let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..m {
            let e = (r[j] - mx).exp();
            probs[i * m + j] = e;
            z += e;
        }
        for j in 0..m {
            probs[i * m + j] /= z;
        }
        // log-sum-exp stabilized log prob
        loss -= r[targets[i]] - mx - z.ln();
    }
    loss /= n as f64;
    let targets = targets.to_vec();
    Ok(Tensor::new(
        vec![1],
        vec![loss],
        vec![logits.clone()],
        Some(Box::new(move |g, parents| {
            let gv = g[0] / n as f64;
            let mut da = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    let ind = if j == targets[i] { 1.0 } else { 0.0 };
                    da[i * m + j] = gv * (probs[i * m + j] - ind);
                }
            }
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Mean binary cross-entropy of `sigmoid(logits)` against targets in {0,1}.
pub fn bce_with_logits(logits: &Tensor, targets: &[f64]) -> Result<Tensor> {
    check(logits.len() == targets.len(), "bce", || {
        format!("{} logits vs {} targets", logits.len(), targets.len())
    })?;
    for &t in targets {
        if t != 0.0 && t != 1.0 {
            return Err(Error::validation(format!(
                "BCE target {} not in {{0,1}}",
                t
            )));
        }
    }
    let n = logits.len();
    let mut loss = 0.0;
    for (x, t) in logits.data().iter().zip(targets) {
        // stable: max(x,0) - x*t + ln(1+exp(-|x|))
        loss += x.max(0.0) - x * t + (1.0 + (-x.abs()).exp()).ln();
    }
    loss /= n as f64;
    let targets = targets.to_vec();
    Ok(Tensor::new(
        vec![1],
        vec![loss],
        vec![logits.clone()],
        Some(Box::new(move |g, parents| {
            let gv = g[0] / n as f64;
            let da: Vec<f64> = parents[0]
                .data()
                .iter()
                .zip(&targets)
                .map(|(x, t)| gv * (sigmoid_f(*x) - t))
                .collect();
            parents[0].accumulate_grad(&da);
        })),
    ))
}

/// Mean squared error against a constant target vector.
pub fn mse(pred: &Tensor, targets: &[f64]) -> Result<Tensor> {
    check(pred.len() == targets.len(), "mse", || {
        format!("{} preds vs {} targets", pred.len(), targets.len())
    })?;
    let n = pred.len();
    let loss: f64 = pred
        .data()
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n as f64;
    let targets = targets.to_vec();
    Ok(Tensor::new(
        vec![1],
        vec![loss],
        vec![pred.clone()],
        Some(Box::new(move |g, parents| {
            let gv = g[0] * 2.0 / n as f64;
            let da: Vec<f64> = parents[0]
                .data()
                .iter()
                .zip(&targets)
                .map(|(p, t)| gv * (p - t))
                .collect();
            parents[0].accumulate_grad(&da);
        })),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_definition() {
        let x = Tensor::vector(vec![-2.0, 0.0, 3.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let x = Tensor::matrix(1, 2, vec![0.0, 0.0]);
        let y = softmax_rows(&x).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::matrix(3, 4, (0..12).map(|v| v as f64 * 0.7 - 3.0).collect());
        let y = softmax_rows(&x).unwrap();
        for i in 0..3 {
            let s: f64 = y.data()[i * 4..(i + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.data()[i * 4..(i + 1) * 4].iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let x = Tensor::matrix(2, 5, vec![0.3; 10]);
        let l = cross_entropy_rows(&x, &[0, 4]).unwrap();
        assert!((l.value() - (5.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let x = Tensor::vector(vec![0.0]);
        let l = bce_with_logits(&x, &[1.0]).unwrap();
        assert!((l.value() - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_rejects_out_of_range_target() {
        let x = Tensor::vector(vec![0.0]);
        assert!(bce_with_logits(&x, &[0.5]).is_err());
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let x = Tensor::vector(vec![1.0, -2.0]);
        assert_eq!(mse(&x, &[1.0, -2.0]).unwrap().value(), 0.0);
    }

    #[test]
    fn biaffine_zero_weight_gives_zero() {
        let l = Tensor::matrix(2, 3, vec![1.0; 6]);
        let r = Tensor::matrix(2, 3, vec![2.0; 6]);
        let w = Tensor::leaf(vec![1, 4, 4], vec![0.0; 16]);
        let s = biaffine(&l, &r, &w).unwrap();
        assert!(s.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn biaffine_identity_inner_product() {
        // W = identity on the non-bias block, left = right = e1 -> score 1
        let d = 3;
        let mut w = vec![0.0; (d + 1) * (d + 1)];
        for i in 0..d {
            w[i * (d + 1) + i] = 1.0;
        }
        let e1 = Tensor::matrix(1, d, vec![1.0, 0.0, 0.0]);
        let wt = Tensor::leaf(vec![1, d + 1, d + 1], w);
        let s = biaffine(&e1, &e1, &wt).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn biaffine_matches_naive_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (n, m, d, c) = (3, 4, 5, 2);
        let l: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..c * (d + 1) * (d + 1))
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let lt = Tensor::matrix(n, d, l.clone());
        let rt = Tensor::matrix(m, d, r.clone());
        let wt = Tensor::leaf(vec![c, d + 1, d + 1], w.clone());
        let s = biaffine(&lt, &rt, &wt).unwrap();
        let da = d + 1;
        for i in 0..n {
            for j in 0..m {
                for ch in 0..c {
                    let mut expect = 0.0;
                    for p in 0..da {
                        for q in 0..da {
                            let lv = if p < d { l[i * d + p] } else { 1.0 };
                            let rv = if q < d { r[j * d + q] } else { 1.0 };
                            expect += lv * w[ch * da * da + p * da + q] * rv;
                        }
                    }
                    let got = s.data()[(i * m + j) * c + ch];
                    assert!((got - expect).abs() < 1e-12, "{} vs {}", got, expect);
                }
            }
        }
    }

    #[test]
    fn bilinear_identity_is_dot_product() {
        let d = 3;
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        let a = Tensor::matrix(1, d, vec![1.0, 2.0, 3.0]);
        let b = Tensor::matrix(1, d, vec![4.0, 5.0, 6.0]);
        let wt = Tensor::leaf(vec![1, d, d], w);
        let s = bilinear(&a, &b, &wt).unwrap();
        assert!((s.data()[0] - 32.0).abs() < 1e-12);
    }

    #[test]
    fn bilinear_zero_side_gives_zero() {
        let d = 3;
        let a = Tensor::matrix(2, d, vec![0.0; 6]);
        let b = Tensor::matrix(2, d, vec![1.0; 6]);
        let wt = Tensor::leaf(vec![2, d, d], vec![0.5; 2 * d * d]);
        let s = bilinear(&a, &b, &wt).unwrap();
        assert!(s.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch_is_error() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]);
        let b = Tensor::matrix(2, 3, vec![0.0; 6]);
        assert!(matmul(&a, &b).is_err());
    }
}
