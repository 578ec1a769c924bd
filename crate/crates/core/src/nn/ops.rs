//! Slice kernels. Every reduction runs in a fixed order so results are
//! bitwise reproducible.

use super::scalar::Scalar;

#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulator lanes, merged in a fixed tree.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// f64 sum of `f(a[i], b[i])` with eight accumulator lanes merged in a fixed tree.
#[inline]
pub fn lane_sum_f64<T: Scalar>(a: &[T], b: &[T], f: impl Fn(f64, f64) -> f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += f(xa[l].as_f64(), xb[l].as_f64());
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += f(x.as_f64(), y.as_f64());
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Output spatial size of a 3x3 convolution with padding 1.
#[inline]
pub fn conv_out(h: usize, w: usize, stride: usize) -> (usize, usize) {
    ((h - 1) / stride + 1, (w - 1) / stride + 1)
}

/// Unfold a `(cin, h, w)` sample into `(cin * 9, ho * wo)` patch rows.
pub fn im2col<T: Scalar>(x: &[T], cin: usize, h: usize, w: usize, stride: usize, col: &mut [T]) {
    let (ho, wo) = conv_out(h, w, stride);
    let hw = ho * wo;
    let zero = T::zero();
    for ci in 0..cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for oy in 0..ho {
                    let out = &mut row[oy * wo..(oy + 1) * wo];
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        out.fill(zero);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        match kx {
                            0 => {
                                out[0] = zero;
                                out[1..].copy_from_slice(&src[..w - 1]);
                            }
                            1 => out.copy_from_slice(src),
                            _ => {
                                out[..w - 1].copy_from_slice(&src[1..]);
                                out[w - 1] = zero;
                            }
                        }
                    } else {
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            *o = if ix < 0 || ix >= w as isize {
                                zero
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch rows back into `(cin, h, w)`.
pub fn col2im<T: Scalar>(col: &[T], cin: usize, h: usize, w: usize, stride: usize, x: &mut [T]) {
    let (ho, wo) = conv_out(h, w, stride);
    let hw = ho * wo;
    for ci in 0..cin {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &row[oy * wo..(oy + 1) * wo];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    if stride == 1 {
                        let (d, sv) = match kx {
                            0 => (&mut dst[..w - 1], &src[1..]),
                            1 => (&mut dst[..], src),
                            _ => (&mut dst[1..], &src[..w - 1]),
                        };
                        for (o, &v) in d.iter_mut().zip(sv) {
                            *o += v;
                        }
                        continue;
                    }
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

const TILE: usize = 32;

/// `out (cout, hw) = weight (cout, k) x col (k, hw)`. Four output rows and a
/// column tile are accumulated in registers; each output sums over `k` in order.
pub fn gemm_rows<T: Scalar>(weight: &[T], col: &[T], k: usize, hw: usize, out: &mut [T]) {
    let cout = out.len() / hw;
    let mut co = 0;
    while co + 4 <= cout {
        let w = &weight[co * k..(co + 4) * k];
        let mut j = 0;
        while j + TILE <= hw {
            let mut acc = [[T::zero(); TILE]; 4];
            for kk in 0..k {
                let c: &[T; TILE] = col[kk * hw + j..kk * hw + j + TILE].try_into().expect("tile");
                for r in 0..4 {
                    let wr = w[r * k + kk];
                    for t in 0..TILE {
                        acc[r][t] += wr * c[t];
                    }
                }
            }
            for (r, a) in acc.iter().enumerate() {
                out[(co + r) * hw + j..(co + r) * hw + j + TILE].copy_from_slice(a);
            }
            j += TILE;
        }
        for r in 0..4 {
            let o = &mut out[(co + r) * hw + j..(co + r + 1) * hw];
            o.fill(T::zero());
            for kk in 0..k {
                axpy(o, w[r * k + kk], &col[kk * hw + j..(kk + 1) * hw]);
            }
        }
        co += 4;
    }
    while co < cout {
        let o = &mut out[co * hw..(co + 1) * hw];
        o.fill(T::zero());
        for kk in 0..k {
            axpy(o, weight[co * k + kk], &col[kk * hw..(kk + 1) * hw]);
        }
        co += 1;
    }
}

/// Per-channel mean and biased variance over `(n, c, plane)` data, in f64.
pub fn channel_moments<T: Scalar>(x: &[T], n: usize, c: usize, plane: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (n * plane) as f64;
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ch in 0..c {
        let mut s = 0.0f64;
        for i in 0..n {
            let base = (i * c + ch) * plane;
            let xs = &x[base..base + plane];
            s += lane_sum_f64(xs, xs, |v, _| v);
        }
        let m = s / count;
        let mut q = 0.0f64;
        for i in 0..n {
            let base = (i * c + ch) * plane;
            let xs = &x[base..base + plane];
            q += lane_sum_f64(xs, xs, |v, _| (v - m) * (v - m));
        }
        mean[ch] = m;
        var[ch] = q / count;
    }
    (mean, var)
}
