//! Slice-level forward and backward kernels. Spatial activations are laid out
//! as (batch, height, width, channels), row-major.

use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

/// Valid cross-correlation, stride 1. `weight` is (kh, kw, cin, cout).
pub(crate) fn conv_forward<T: Scalar>(
    x: &[T],
    d: Dims,
    kernel: (usize, usize),
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (kh, kw) = kernel;
    let cout = bias.len();
    let (oh, ow) = (d.h - kh + 1, d.w - kw + 1);
    let patch_row = kw * d.c;
    for s in 0..d.n {
        for i in 0..oh {
            for j in 0..ow {
                let o = &mut out[((s * oh + i) * ow + j) * cout..][..cout];
                o.copy_from_slice(bias);
                for a in 0..kh {
                    // kw * cin contiguous input values for this kernel row
                    let xs = &x[((s * d.h + i + a) * d.w + j) * d.c..][..patch_row];
                    let ws = &weight[a * patch_row * cout..][..patch_row * cout];
                    for (p, &v) in xs.iter().enumerate() {
                        if v == T::zero() {
                            continue;
                        }
                        let wr = &ws[p * cout..][..cout];
                        for (acc, &wv) in o.iter_mut().zip(wr) {
                            *acc += v * wv;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients and writes the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    x: &[T],
    d: Dims,
    kernel: (usize, usize),
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dx: &mut [T],
) {
    let (kh, kw) = kernel;
    let cout = dbias.len();
    let (oh, ow) = (d.h - kh + 1, d.w - kw + 1);
    let patch_row = kw * d.c;
    dx.iter_mut().for_each(|v| *v = T::zero());
    for s in 0..d.n {
        for i in 0..oh {
            for j in 0..ow {
                let g = &dout[((s * oh + i) * ow + j) * cout..][..cout];
                for (db, &gv) in dbias.iter_mut().zip(g) {
                    *db += gv;
                }
                for a in 0..kh {
                    let base = ((s * d.h + i + a) * d.w + j) * d.c;
                    let wbase = a * patch_row * cout;
                    for p in 0..patch_row {
                        let v = x[base + p];
                        let wr = &weight[wbase + p * cout..][..cout];
                        let dwr = &mut dweight[wbase + p * cout..][..cout];
                        let mut acc = T::zero();
                        for o in 0..cout {
                            dwr[o] += v * g[o];
                            acc += wr[o] * g[o];
                        }
                        dx[base + p] += acc;
                    }
                }
            }
        }
    }
}

/// Per-channel statistics over every (batch, height, width) position.
pub(crate) fn channel_mean_var<T: Scalar>(x: &[T], channels: usize) -> (Vec<T>, Vec<T>) {
    let m = x.len() / channels;
    let mut mean = vec![0.0f64; channels];
    for row in x.chunks_exact(channels) {
        for (acc, &v) in mean.iter_mut().zip(row) {
            *acc += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut var = vec![0.0f64; channels];
    for row in x.chunks_exact(channels) {
        for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
            let dv = v.as_f64() - mu;
            *acc += dv * dv;
        }
    }
    var.iter_mut().for_each(|v| *v /= m as f64);
    (
        mean.into_iter().map(T::cast).collect(),
        var.into_iter().map(T::cast).collect(),
    )
}

/// Batch-norm input gradient given the normalised activations.
pub(crate) fn batch_norm_backward<T: Scalar>(
    xhat: &[T],
    dy: &[T],
    gamma: &[T],
    inv_std: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    dx: &mut [T],
) {
    let c = gamma.len();
    let m = xhat.len() / c;
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for (xr, gr) in xhat.chunks_exact(c).zip(dy.chunks_exact(c)) {
        for k in 0..c {
            sum_dy[k] += gr[k];
            sum_dy_xhat[k] += gr[k] * xr[k];
        }
    }
    for k in 0..c {
        dgamma[k] += sum_dy_xhat[k];
        dbeta[k] += sum_dy[k];
    }
    let mf = T::cast(m as f64);
    let scale: Vec<T> = (0..c).map(|k| gamma[k] * inv_std[k] / mf).collect();
    for ((dxr, xr), gr) in dx
        .chunks_exact_mut(c)
        .zip(xhat.chunks_exact(c))
        .zip(dy.chunks_exact(c))
    {
        for k in 0..c {
            dxr[k] = scale[k] * (mf * gr[k] - sum_dy[k] - xr[k] * sum_dy_xhat[k]);
        }
    }
}

/// Max pooling with stride equal to the kernel. Returns the flat input index
/// of each maximum for the backward pass.
pub(crate) fn max_pool_forward<T: Scalar>(
    x: &[T],
    d: Dims,
    kernel: (usize, usize),
    pad: (usize, usize),
    out_hw: (usize, usize),
    out: &mut [T],
) -> Vec<usize> {
    let (kh, kw) = kernel;
    let (oh, ow) = out_hw;
    let mut argmax = vec![0usize; out.len()];
    for s in 0..d.n {
        for i in 0..oh {
            let r0 = (i * kh).saturating_sub(pad.0);
            let r1 = ((i + 1) * kh).saturating_sub(pad.0).min(d.h);
            for j in 0..ow {
                let c0 = (j * kw).saturating_sub(pad.1);
                let c1 = ((j + 1) * kw).saturating_sub(pad.1).min(d.w);
                let obase = ((s * oh + i) * ow + j) * d.c;
                for ch in 0..d.c {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0;
                    for r in r0..r1 {
                        for q in c0..c1 {
                            let idx = ((s * d.h + r) * d.w + q) * d.c + ch;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[obase + ch] = best;
                    argmax[obase + ch] = best_idx;
                }
            }
        }
    }
    argmax
}

/// y = x W + b with W stored (in, out).
pub(crate) fn dense_forward<T: Scalar>(
    x: &[T],
    n: usize,
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let units = bias.len();
    let fan_in = x.len() / n;
    for s in 0..n {
        let o = &mut out[s * units..][..units];
        o.copy_from_slice(bias);
        for (p, &v) in x[s * fan_in..][..fan_in].iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            let wr = &weight[p * units..][..units];
            for (acc, &wv) in o.iter_mut().zip(wr) {
                *acc += v * wv;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    n: usize,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dx: &mut [T],
) {
    let units = dbias.len();
    let fan_in = x.len() / n;
    for s in 0..n {
        let g = &dout[s * units..][..units];
        for (db, &gv) in dbias.iter_mut().zip(g) {
            *db += gv;
        }
        for p in 0..fan_in {
            let v = x[s * fan_in + p];
            let wr = &weight[p * units..][..units];
            let dwr = &mut dweight[p * units..][..units];
            let mut acc = T::zero();
            for o in 0..units {
                dwr[o] += v * g[o];
                acc += wr[o] * g[o];
            }
            dx[s * fan_in + p] = acc;
        }
    }
}

pub(crate) fn softmax_rows<T: Scalar>(x: &mut [T], width: usize) {
    for row in x.chunks_exact_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}
