//! Integer multiply-accumulate kernels for the quantized inference path.
//! Inputs and weights are `i8`, accumulators `i32`.

use crate::nn::ops::{out_len, tap};

/// Convolution with the same geometry as the float kernel.
pub fn conv2d_i8(
    x: &[i8],
    dims: [usize; 4],
    w: &[i8],
    kernel: [usize; 2],
    stride: [usize; 2],
    cout: usize,
) -> ([usize; 4], Vec<i32>) {
    let [b, h, wd, cin] = dims;
    let [kh, kw] = kernel;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let (oh, ow) = (out_len(h, kh, stride[0]), out_len(wd, kw, stride[1]));
    let mut out = vec![0i32; b * oh * ow * cout];
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let o0 = ((n * oh + oy) * ow + ox) * cout;
                let o = &mut out[o0..o0 + cout];
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
                            let v = i32::from(x[x0 + ci]);
                            if v == 0 {
                                continue;
                            }
                            let wr = &w[w0 + ci * cout..w0 + (ci + 1) * cout];
                            for (acc, &wv) in o.iter_mut().zip(wr) {
                                *acc += v * i32::from(wv);
                            }
                        }
                    }
                }
            }
        }
    }
    ([b, oh, ow, cout], out)
}

pub fn depthwise_i8(
    x: &[i8],
    dims: [usize; 4],
    w: &[i8],
    kernel: [usize; 2],
    stride: [usize; 2],
) -> ([usize; 4], Vec<i32>) {
    let [b, h, wd, c] = dims;
    let [kh, kw] = kernel;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let (oh, ow) = (out_len(h, kh, stride[0]), out_len(wd, kw, stride[1]));
    let mut out = vec![0i32; b * oh * ow * c];
    for n in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let o0 = ((n * oh + oy) * ow + ox) * c;
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
                            out[o0 + ch] += i32::from(x[x0 + ch]) * i32::from(w[w0 + ch]);
                        }
                    }
                }
            }
        }
    }
    ([b, oh, ow, c], out)
}

/// `x` is `batch × inputs`, `w` is `inputs × units`.
pub fn dense_i8(x: &[i8], batch: usize, w: &[i8], units: usize) -> Vec<i32> {
    let inputs = x.len() / batch.max(1);
    let mut out = vec![0i32; batch * units];
    for n in 0..batch {
        let o = &mut out[n * units..(n + 1) * units];
        for (i, &v) in x[n * inputs..(n + 1) * inputs].iter().enumerate() {
            let v = i32::from(v);
            for (acc, &wv) in o.iter_mut().zip(&w[i * units..(i + 1) * units]) {
                *acc += v * i32::from(wv);
            }
        }
    }
    out
}
