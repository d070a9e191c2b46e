//! Forward and backward kernels for every layer kind. All tensors are NHWC;
//! convolution kernels are stored `kh × kw × c_in × c_out`.

use super::tensor::{Real, Tensor4};

pub(crate) fn out_len(len: usize, k: usize, s: usize) -> usize {
    (len + 2 * ((k - 1) / 2) - k) / s + 1
}

/// Input coordinate for output position `o` and kernel tap `k`, if inside.
#[inline]
pub(crate) fn tap(o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
    (o * stride + k).checked_sub(pad).filter(|&i| i < len)
}

#[inline]
fn axpy<T: Real>(acc: &mut [T], a: T, x: &[T]) {
    for (y, &v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor4<T>,
    w: &[T],
    bias: Option<&[T]>,
    kernel: [usize; 2],
    stride: [usize; 2],
    cout: usize,
) -> Tensor4<T> {
    let [b, h, wd, cin] = x.dims();
    let [kh, kw] = kernel;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let (oh, ow) = (out_len(h, kh, stride[0]), out_len(wd, kw, stride[1]));
    let mut out = Tensor4::zeros([b, oh, ow, cout]);
    let xd = x.data();
    let od = out.data_mut();
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let o0 = ((n * oh + oy) * ow + ox) * cout;
                let o = &mut od[o0..o0 + cout];
                if let Some(bv) = bias {
                    o.copy_from_slice(bv);
                }
                for ky in 0..kh {
                    let Some(iy) = tap(oy, ky, stride[0], ph, h) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = tap(ox, kx, stride[1], pw, wd) else {
                            continue;
                        };
                        let x0 = ((n * h + iy) * wd + ix) * cin;
                        let w0 = (ky * kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let v = xd[x0 + ci];
                            let wr = &w[w0 + ci * cout..w0 + (ci + 1) * cout];
                            axpy(o, v, wr);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(dx, dw, db)`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    w: &[T],
    dy: &Tensor4<T>,
    kernel: [usize; 2],
    stride: [usize; 2],
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let [b, h, wd, cin] = x.dims();
    let [_, oh, ow, cout] = dy.dims();
    let [kh, kw] = kernel;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut dx = Tensor4::zeros(x.dims());
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); cout];
    let xd = x.data();
    let gd = dy.data();
    let dxd = dx.data_mut();
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let g0 = ((n * oh + oy) * ow + ox) * cout;
                let g = &gd[g0..g0 + cout];
                for (d, &v) in db.iter_mut().zip(g) {
                    *d += v;
                }
                for ky in 0..kh {
                    let Some(iy) = tap(oy, ky, stride[0], ph, h) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = tap(ox, kx, stride[1], pw, wd) else {
                            continue;
                        };
                        let x0 = ((n * h + iy) * wd + ix) * cin;
                        let w0 = (ky * kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let r = w0 + ci * cout..w0 + (ci + 1) * cout;
                            dxd[x0 + ci] += dot(&w[r.clone()], g);
                            axpy(&mut dw[r], xd[x0 + ci], g);
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

pub fn depthwise_forward<T: Real>(
    x: &Tensor4<T>,
    w: &[T],
    bias: Option<&[T]>,
    kernel: [usize; 2],
    stride: [usize; 2],
) -> Tensor4<T> {
    let [b, h, wd, c] = x.dims();
    let [kh, kw] = kernel;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let (oh, ow) = (out_len(h, kh, stride[0]), out_len(wd, kw, stride[1]));
    let mut out = Tensor4::zeros([b, oh, ow, c]);
    let xd = x.data();
    let od = out.data_mut();
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let o0 = ((n * oh + oy) * ow + ox) * c;
                let o = &mut od[o0..o0 + c];
                if let Some(bv) = bias {
                    o.copy_from_slice(bv);
                }
                for ky in 0..kh {
                    let Some(iy) = tap(oy, ky, stride[0], ph, h) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = tap(ox, kx, stride[1], pw, wd) else {
                            continue;
                        };
                        let x0 = ((n * h + iy) * wd + ix) * c;
                        let w0 = (ky * kw + kx) * c;
                        for ch in 0..c {
                            o[ch] += xd[x0 + ch] * w[w0 + ch];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn depthwise_backward<T: Real>(
    x: &Tensor4<T>,
    w: &[T],
    dy: &Tensor4<T>,
    kernel: [usize; 2],
    stride: [usize; 2],
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let [b, h, wd, c] = x.dims();
    let [_, oh, ow, _] = dy.dims();
    let [kh, kw] = kernel;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut dx = Tensor4::zeros(x.dims());
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); c];
    let xd = x.data();
    let gd = dy.data();
    let dxd = dx.data_mut();
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let g0 = ((n * oh + oy) * ow + ox) * c;
                let g = &gd[g0..g0 + c];
                for (d, &v) in db.iter_mut().zip(g) {
                    *d += v;
                }
                for ky in 0..kh {
                    let Some(iy) = tap(oy, ky, stride[0], ph, h) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = tap(ox, kx, stride[1], pw, wd) else {
                            continue;
                        };
                        let x0 = ((n * h + iy) * wd + ix) * c;
                        let w0 = (ky * kw + kx) * c;
                        for ch in 0..c {
                            dxd[x0 + ch] += w[w0 + ch] * g[ch];
                            dw[w0 + ch] += xd[x0 + ch] * g[ch];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Batch statistics saved for the backward pass.
#[derive(Debug, Clone)]
pub struct BnBatch<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub fn batchnorm_train<T: Real>(
    x: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Tensor4<T>, BnBatch<T>) {
    let c = x.dims()[3];
    let count = T::from_usize(x.len() / c).unwrap();
    let mut mean = vec![T::zero(); c];
    for px in x.data().chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![T::zero(); c];
    for px in x.data().chunks_exact(c) {
        for ch in 0..c {
            let d = px[ch] - mean[ch];
            var[ch] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = Tensor4::zeros(x.dims());
    for ((px, xh), yo) in x
        .data()
        .chunks_exact(c)
        .zip(xhat.chunks_exact_mut(c))
        .zip(y.data_mut().chunks_exact_mut(c))
    {
        for ch in 0..c {
            xh[ch] = (px[ch] - mean[ch]) * inv_std[ch];
            yo[ch] = gamma[ch] * xh[ch] + beta[ch];
        }
    }
    (
        y,
        BnBatch {
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

pub fn batchnorm_eval<T: Real>(
    x: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Tensor4<T> {
    let c = x.dims()[3];
    let scale: Vec<T> = (0..c).map(|i| gamma[i] / (var[i] + eps).sqrt()).collect();
    let mut y = x.clone();
    for px in y.data_mut().chunks_exact_mut(c) {
        for ch in 0..c {
            px[ch] = (px[ch] - mean[ch]) * scale[ch] + beta[ch];
        }
    }
    y
}

/// Returns `(dx, dgamma, dbeta)` for training-mode batchnorm.
pub fn batchnorm_train_backward<T: Real>(
    dy: &Tensor4<T>,
    gamma: &[T],
    cache: &BnBatch<T>,
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let count = T::from_usize(dy.len() / c).unwrap();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (g, xh) in dy.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for ch in 0..c {
            dgamma[ch] += g[ch] * xh[ch];
            dbeta[ch] += g[ch];
        }
    }
    // dxhat = dy·γ; dx = inv_std/N · (N·dxhat − Σdxhat − x̂·Σ(dxhat·x̂))
    let mut dx = Tensor4::zeros(dy.dims());
    for ((g, xh), o) in dy
        .data()
        .chunks_exact(c)
        .zip(cache.xhat.chunks_exact(c))
        .zip(dx.data_mut().chunks_exact_mut(c))
    {
        for ch in 0..c {
            let s = cache.inv_std[ch] / count;
            o[ch] = s
                * (count * g[ch] * gamma[ch]
                    - dbeta[ch] * gamma[ch]
                    - xh[ch] * dgamma[ch] * gamma[ch]);
        }
    }
    (dx, dgamma, dbeta)
}

/// Eval-mode batchnorm is affine; returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_eval_backward<T: Real>(
    x: &Tensor4<T>,
    dy: &Tensor4<T>,
    gamma: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut dx = Tensor4::zeros(dy.dims());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ((g, px), o) in dy
        .data()
        .chunks_exact(c)
        .zip(x.data().chunks_exact(c))
        .zip(dx.data_mut().chunks_exact_mut(c))
    {
        for ch in 0..c {
            o[ch] = g[ch] * gamma[ch] * inv[ch];
            dgamma[ch] += g[ch] * (px[ch] - mean[ch]) * inv[ch];
            dbeta[ch] += g[ch];
        }
    }
    (dx, dgamma, dbeta)
}

pub fn relu_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Real>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

/// Max pooling with non-overlapping `pool` windows; also returns the flat
/// input index of each maximum.
pub fn maxpool_forward<T: Real>(x: &Tensor4<T>, pool: [usize; 2]) -> (Tensor4<T>, Vec<usize>) {
    let [b, h, w, c] = x.dims();
    let (oh, ow) = (h / pool[0], w / pool[1]);
    let mut out = Tensor4::zeros([b, oh, ow, c]);
    let mut arg = vec![0usize; b * oh * ow * c];
    let xd = x.data();
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut bi = 0;
                    for py in 0..pool[0] {
                        for px in 0..pool[1] {
                            let i = x.index(n, oy * pool[0] + py, ox * pool[1] + px, ch);
                            if xd[i] > best {
                                best = xd[i];
                                bi = i;
                            }
                        }
                    }
                    let o = ((n * oh + oy) * ow + ox) * c + ch;
                    out.data_mut()[o] = best;
                    arg[o] = bi;
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward<T: Real>(
    in_dims: [usize; 4],
    argmax: &[usize],
    dy: &Tensor4<T>,
) -> Tensor4<T> {
    let mut dx = Tensor4::zeros(in_dims);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i] += g;
    }
    dx
}

pub fn gap_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let [b, h, w, c] = x.dims();
    let mut out = Tensor4::zeros([b, 1, 1, c]);
    let area = T::from_usize(h * w).unwrap();
    for n in 0..b {
        let o = &mut out.data_mut()[n * c..(n + 1) * c];
        for px in x.sample(n).chunks_exact(c) {
            for (a, &v) in o.iter_mut().zip(px) {
                *a += v;
            }
        }
        o.iter_mut().for_each(|v| *v /= area);
    }
    out
}

pub fn gap_backward<T: Real>(in_dims: [usize; 4], dy: &Tensor4<T>) -> Tensor4<T> {
    let [b, h, w, c] = in_dims;
    let area = T::from_usize(h * w).unwrap();
    let mut dx = Tensor4::zeros(in_dims);
    let n_px = h * w;
    for n in 0..b {
        let g = &dy.data()[n * c..(n + 1) * c];
        for p in 0..n_px {
            let o = (n * n_px + p) * c;
            for ch in 0..c {
                dx.data_mut()[o + ch] = g[ch] / area;
            }
        }
    }
    dx
}

/// Fully connected layer over the flattened sample; `w` is `in × units`.
pub fn dense_forward<T: Real>(x: &Tensor4<T>, w: &[T], bias: &[T], units: usize) -> Tensor4<T> {
    let b = x.batch();
    let mut out = Tensor4::zeros([b, 1, 1, units]);
    for n in 0..b {
        let o = &mut out.data_mut()[n * units..(n + 1) * units];
        o.copy_from_slice(bias);
        for (i, &v) in x.sample(n).iter().enumerate() {
            axpy(o, v, &w[i * units..(i + 1) * units]);
        }
    }
    out
}

pub fn dense_backward<T: Real>(
    x: &Tensor4<T>,
    w: &[T],
    dy: &Tensor4<T>,
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let b = x.batch();
    let units = dy.dims()[3];
    let mut dx = Tensor4::zeros(x.dims());
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); units];
    let in_len = x.sample_len();
    for n in 0..b {
        let g = &dy.data()[n * units..(n + 1) * units];
        for (d, &v) in db.iter_mut().zip(g) {
            *d += v;
        }
        let xs = x.sample(n);
        for i in 0..in_len {
            let r = i * units..(i + 1) * units;
            dx.data_mut()[n * in_len + i] = dot(&w[r.clone()], g);
            axpy(&mut dw[r], xs[i], g);
        }
    }
    (dx, dw, db)
}

/// Softmax over the channel axis at every position.
pub fn softmax_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let c = x.dims()[3];
    let mut y = x.clone();
    for row in y.data_mut().chunks_exact_mut(c) {
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    y
}

pub fn softmax_backward<T: Real>(y: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let c = y.dims()[3];
    let mut dx = Tensor4::zeros(y.dims());
    for ((yr, gr), o) in y
        .data()
        .chunks_exact(c)
        .zip(dy.data().chunks_exact(c))
        .zip(dx.data_mut().chunks_exact_mut(c))
    {
        let s = dot(yr, gr);
        for k in 0..c {
            o[k] = yr[k] * (gr[k] - s);
        }
    }
    dx
}

pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Intermediate values of the squeeze-excitation gate, per sample.
#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pub squeeze: Vec<T>,
    pub hidden_pre: Vec<T>,
    pub gate: Vec<T>,
}

pub fn attention_hidden(channels: usize, reduction: usize) -> usize {
    (channels / reduction).max(1)
}

pub fn attention_forward<T: Real>(
    x: &Tensor4<T>,
    w1: &[T],
    b1: &[T],
    w2: &[T],
    b2: &[T],
) -> (Tensor4<T>, AttentionCache<T>) {
    let [b, _, _, c] = x.dims();
    let hid = b1.len();
    let squeeze = gap_forward(x).into_vec();
    let mut hidden_pre = vec![T::zero(); b * hid];
    let mut gate = vec![T::zero(); b * c];
    for n in 0..b {
        let s = &squeeze[n * c..(n + 1) * c];
        let hp = &mut hidden_pre[n * hid..(n + 1) * hid];
        hp.copy_from_slice(b1);
        for (i, &v) in s.iter().enumerate() {
            axpy(hp, v, &w1[i * hid..(i + 1) * hid]);
        }
        let g = &mut gate[n * c..(n + 1) * c];
        g.copy_from_slice(b2);
        for (j, &v) in hp.iter().enumerate() {
            if v > T::zero() {
                axpy(g, v, &w2[j * c..(j + 1) * c]);
            }
        }
        g.iter_mut().for_each(|v| *v = sigmoid(*v));
    }
    let mut y = x.clone();
    let n_px = x.sample_len() / c;
    for n in 0..b {
        let g = &gate[n * c..(n + 1) * c];
        for p in 0..n_px {
            let o = (n * n_px + p) * c;
            for ch in 0..c {
                y.data_mut()[o + ch] *= g[ch];
            }
        }
    }
    (
        y,
        AttentionCache {
            squeeze,
            hidden_pre,
            gate,
        },
    )
}

/// Returns `(dx, [dw1, db1, dw2, db2])`.
pub fn attention_backward<T: Real>(
    x: &Tensor4<T>,
    w1: &[T],
    w2: &[T],
    cache: &AttentionCache<T>,
    dy: &Tensor4<T>,
) -> (Tensor4<T>, [Vec<T>; 4]) {
    let [b, h, w, c] = x.dims();
    let hid = cache.hidden_pre.len() / b;
    let n_px = h * w;
    let area = T::from_usize(n_px).unwrap();
    let mut dx = Tensor4::zeros(x.dims());
    let mut dw1 = vec![T::zero(); w1.len()];
    let mut db1 = vec![T::zero(); hid];
    let mut dw2 = vec![T::zero(); w2.len()];
    let mut db2 = vec![T::zero(); c];
    for n in 0..b {
        let g = &cache.gate[n * c..(n + 1) * c];
        let mut dgate = vec![T::zero(); c];
        for p in 0..n_px {
            let o = (n * n_px + p) * c;
            for ch in 0..c {
                let d = dy.data()[o + ch];
                dgate[ch] += d * x.data()[o + ch];
                dx.data_mut()[o + ch] = d * g[ch];
            }
        }
        // through the sigmoid
        let dz2: Vec<T> = (0..c)
            .map(|ch| dgate[ch] * g[ch] * (T::one() - g[ch]))
            .collect();
        let hp = &cache.hidden_pre[n * hid..(n + 1) * hid];
        let mut dz1 = vec![T::zero(); hid];
        for j in 0..hid {
            let a = if hp[j] > T::zero() { hp[j] } else { T::zero() };
            axpy(&mut dw2[j * c..(j + 1) * c], a, &dz2);
            if hp[j] > T::zero() {
                dz1[j] = dot(&w2[j * c..(j + 1) * c], &dz2);
            }
        }
        for (d, &v) in db2.iter_mut().zip(&dz2) {
            *d += v;
        }
        for (d, &v) in db1.iter_mut().zip(&dz1) {
            *d += v;
        }
        let s = &cache.squeeze[n * c..(n + 1) * c];
        let mut ds = vec![T::zero(); c];
        for i in 0..c {
            axpy(&mut dw1[i * hid..(i + 1) * hid], s[i], &dz1);
            ds[i] = dot(&w1[i * hid..(i + 1) * hid], &dz1);
        }
        for p in 0..n_px {
            let o = (n * n_px + p) * c;
            for ch in 0..c {
                dx.data_mut()[o + ch] += ds[ch] / area;
            }
        }
    }
    (dx, [dw1, db1, dw2, db2])
}

pub fn freq_split_forward<T: Real>(x: &Tensor4<T>, half: usize) -> Tensor4<T> {
    let [b, h, w, c] = x.dims();
    let hw = w / 2;
    let mut out = Tensor4::zeros([b, h, hw, c]);
    for n in 0..b {
        for t in 0..h {
            let src = x.index(n, t, half * hw, 0);
            let dst = out.index(n, t, 0, 0);
            let len = hw * c;
            let (s, d) = (
                &x.data()[src..src + len],
                &mut out.data_mut()[dst..dst + len],
            );
            d.copy_from_slice(s);
        }
    }
    out
}

pub fn freq_split_backward<T: Real>(
    in_dims: [usize; 4],
    half: usize,
    dy: &Tensor4<T>,
) -> Tensor4<T> {
    let [b, h, w, c] = in_dims;
    let hw = w / 2;
    let mut dx = Tensor4::zeros(in_dims);
    for n in 0..b {
        for t in 0..h {
            let dst = dx.index(n, t, half * hw, 0);
            let src = dy.index(n, t, 0, 0);
            let len = hw * c;
            dx.data_mut()[dst..dst + len].copy_from_slice(&dy.data()[src..src + len]);
        }
    }
    dx
}

pub fn concat_forward<T: Real>(xs: &[&Tensor4<T>]) -> Tensor4<T> {
    let [b, h, w, _] = xs[0].dims();
    let ctot: usize = xs.iter().map(|x| x.dims()[3]).sum();
    let mut out = Tensor4::zeros([b, h, w, ctot]);
    let n_px = b * h * w;
    let mut off = 0;
    for x in xs {
        let c = x.dims()[3];
        for p in 0..n_px {
            out.data_mut()[p * ctot + off..p * ctot + off + c]
                .copy_from_slice(&x.data()[p * c..(p + 1) * c]);
        }
        off += c;
    }
    out
}

pub fn concat_backward<T: Real>(channels: &[usize], dy: &Tensor4<T>) -> Vec<Tensor4<T>> {
    let [b, h, w, ctot] = dy.dims();
    let n_px = b * h * w;
    let mut off = 0;
    channels
        .iter()
        .map(|&c| {
            let mut d = Tensor4::zeros([b, h, w, c]);
            for p in 0..n_px {
                d.data_mut()[p * c..(p + 1) * c]
                    .copy_from_slice(&dy.data()[p * ctot + off..p * ctot + off + c]);
            }
            off += c;
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_direct_sum() {
        // 1×3×3×1 input, 3×3 kernel of ones, same padding: centre output is
        // the sum of all inputs.
        let x = Tensor4::from_vec([1, 3, 3, 1], (1..=9).map(|v| v as f64).collect()).unwrap();
        let w = vec![1.0; 9];
        let y = conv2d_forward(&x, &w, None, [3, 3], [1, 1], 1);
        assert_eq!(y.dims(), [1, 3, 3, 1]);
        assert_eq!(y.at(0, 1, 1, 0), 45.0);
        assert_eq!(y.at(0, 0, 0, 0), 1.0 + 2.0 + 4.0 + 5.0);
    }

    #[test]
    fn maxpool_1x2_halves_frequency_only() {
        let x = Tensor4::from_vec([1, 2, 4, 1], vec![1., 5., 2., 0., 3., 3., 9., 8.]).unwrap();
        let (y, _) = maxpool_forward(&x, [1, 2]);
        assert_eq!(y.dims(), [1, 2, 2, 1]);
        assert_eq!(y.data(), &[5., 2., 3., 9.]);
    }

    #[test]
    fn batchnorm_batch_stats_match_hand_computation() {
        let x = Tensor4::<f64>::from_vec([2, 1, 2, 2], vec![1., 10., 2., 20., 3., 30., 4., 40.])
            .unwrap();
        let (y, cache) = batchnorm_train(&x, &[1., 1.], &[0., 0.], 0.0);
        assert!((cache.mean[0] - 2.5).abs() < 1e-12);
        assert!((cache.mean[1] - 25.0).abs() < 1e-12);
        assert!((cache.var[0] - 1.25).abs() < 1e-12);
        assert!((cache.var[1] - 125.0).abs() < 1e-12);
        assert!((y.at(0, 0, 0, 0) + 1.5 / 1.25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let x = Tensor4::from_vec([2, 1, 1, 3], vec![1.0f32, 2.0, 3.0, -1e3, 0.0, 1e3]).unwrap();
        let y = softmax_forward(&x);
        for r in y.rows() {
            assert!((r.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
