//! Layer kernels with explicit backward passes. Convolutions use stride 1 and keep
//! the plane size, sampling out-of-range pixels from the nearest edge pixel
//! (replicate padding) so a constant field stays constant. Weights are laid out
//! `[out][in][k][k]`.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{Scalar, Tensor};

#[inline]
fn clamp(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Shifted row span for a kernel tap: output columns `x0..x1` read input `x + dx`.
#[inline]
fn span(len: usize, delta: isize) -> (usize, usize) {
    let lo = (-delta).max(0) as usize;
    let hi = (len as isize - delta).min(len as isize).max(0) as usize;
    (lo, hi.max(lo))
}

pub fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    c_out: usize,
    k: usize,
) -> Tensor<T> {
    let [n, c_in, h, w] = x.dims();
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut out = vec![T::zero(); n * c_out * plane];
    for b in 0..n {
        let input = x.sample(b);
        for co in 0..c_out {
            let o = &mut out[(b * c_out + co) * plane..(b * c_out + co + 1) * plane];
            o.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..c_in {
                let src = &input[ci * plane..(ci + 1) * plane];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let (x0, x1) = span(w, dx);
                        let wv = weight[((co * c_in + ci) * k + ky) * k + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        for y in 0..h {
                            let iy = clamp(y as isize + dy, h);
                            let orow = &mut o[y * w..(y + 1) * w];
                            let irow = &src[iy * w..(iy + 1) * w];
                            let shifted = &irow[(x0 as isize + dx) as usize..];
                            for (ov, &iv) in orow[x0..x1].iter_mut().zip(shifted) {
                                *ov += wv * iv;
                            }
                            for x in (0..x0).chain(x1..w) {
                                orow[x] += wv * irow[clamp(x as isize + dx, w)];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts([n, c_out, h, w], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of a same-size convolution. The input gradient is skipped when
/// `need_input` is false.
pub fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    grad_out: &Tensor<T>,
    k: usize,
    need_input: bool,
) -> ConvGrads<T> {
    let [n, c_in, h, w] = x.dims();
    let c_out = grad_out.channels();
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut gw = vec![T::zero(); c_out * c_in * k * k];
    let mut gb = vec![T::zero(); c_out];
    let mut gx = need_input.then(|| vec![T::zero(); n * c_in * plane]);

    for b in 0..n {
        let input = x.sample(b);
        let gsample = grad_out.sample(b);
        for co in 0..c_out {
            let g = &gsample[co * plane..(co + 1) * plane];
            gb[co] += g.iter().copied().sum::<T>();
            for ci in 0..c_in {
                let src = &input[ci * plane..(ci + 1) * plane];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let (x0, x1) = span(w, dx);
                        let off = (x0 as isize + dx) as usize;
                        let widx = ((co * c_in + ci) * k + ky) * k + kx;
                        let mut acc = T::zero();
                        for y in 0..h {
                            let iy = clamp(y as isize + dy, h);
                            let grow = &g[y * w..(y + 1) * w];
                            let irow = &src[iy * w..(iy + 1) * w];
                            for (&gv, &iv) in grow[x0..x1].iter().zip(&irow[off..]) {
                                acc += gv * iv;
                            }
                            for x in (0..x0).chain(x1..w) {
                                acc += grow[x] * irow[clamp(x as isize + dx, w)];
                            }
                        }
                        gw[widx] += acc;
                        if let Some(gx) = gx.as_mut() {
                            let wv = weight[widx];
                            let base = (b * c_in + ci) * plane;
                            for y in 0..h {
                                let iy = clamp(y as isize + dy, h);
                                let grow = &g[y * w..(y + 1) * w];
                                let xrow = &mut gx[base + iy * w..base + (iy + 1) * w];
                                for (xv, &gv) in xrow[off..].iter_mut().zip(&grow[x0..x1]) {
                                    *xv += wv * gv;
                                }
                                for x in (0..x0).chain(x1..w) {
                                    xrow[clamp(x as isize + dx, w)] += wv * grow[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ConvGrads {
        input: gx.map(|d| Tensor::from_parts([n, c_in, h, w], d)),
        weight: gw,
        bias: gb,
    }
}

pub fn relu_inplace<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` by the positive entries of the ReLU output, flushing entries
/// below [`Scalar::TINY`].
pub fn relu_backward_inplace<T: Scalar>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        if y <= T::zero() || g.abs() < T::TINY {
            *g = T::zero();
        }
    }
}

/// 2×2 max pooling; returns the pooled tensor and the flat input index of each max.
pub fn maxpool2_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let [n, c, h, w] = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for p in 0..n * c {
        let base = p * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let i0 = base + 2 * y * w + 2 * xx;
                let mut best = i0;
                for i in [i0 + 1, i0 + w, i0 + w + 1] {
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                out.push(data[best]);
                arg.push(best as u32);
            }
        }
    }
    (Tensor::from_parts([n, c, oh, ow], out), arg)
}

pub fn maxpool2_backward<T: Scalar>(
    grad: &Tensor<T>,
    argmax: &[u32],
    input_dims: [usize; 4],
) -> Tensor<T> {
    let mut gx = Tensor::zeros(input_dims);
    let d = gx.data_mut();
    for (&g, &i) in grad.data().iter().zip(argmax) {
        d[i as usize] += g;
    }
    gx
}

pub fn upsample2_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for p in x.data().chunks_exact(h * w) {
        for y in 0..oh {
            let row = &p[(y / 2) * w..(y / 2 + 1) * w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    Tensor::from_parts([n, c, oh, ow], out)
}

pub fn upsample2_backward<T: Scalar>(grad: &Tensor<T>) -> Tensor<T> {
    let [n, c, oh, ow] = grad.dims();
    let (h, w) = (oh / 2, ow / 2);
    let mut out = vec![T::zero(); n * c * h * w];
    for (p, g) in grad.data().chunks_exact(oh * ow).enumerate() {
        let o = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                o[(y / 2) * w + x / 2] += g[y * ow + x];
            }
        }
    }
    Tensor::from_parts([n, c, h, w], out)
}

/// Channel concatenation `[a, b]` per sample.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let [n, ca, h, w] = a.dims();
    let cb = b.channels();
    let mut out = Vec::with_capacity(n * (ca + cb) * h * w);
    for s in 0..n {
        out.extend_from_slice(a.sample(s));
        out.extend_from_slice(b.sample(s));
    }
    Tensor::from_parts([n, ca + cb, h, w], out)
}

pub fn split_channels<T: Scalar>(t: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = t.dims();
    let plane = h * w;
    let mut a = Vec::with_capacity(n * ca * plane);
    let mut b = Vec::with_capacity(n * (c - ca) * plane);
    for s in 0..n {
        let sample = t.sample(s);
        a.extend_from_slice(&sample[..ca * plane]);
        b.extend_from_slice(&sample[ca * plane..]);
    }
    (
        Tensor::from_parts([n, ca, h, w], a),
        Tensor::from_parts([n, c - ca, h, w], b),
    )
}

#[inline]
fn flush<T: Scalar>(v: T) -> T {
    if v.abs() < T::TINY {
        T::zero()
    } else {
        v
    }
}

/// Logistic sigmoid. Outputs below [`Scalar::TINY`] are flushed to zero.
pub fn sigmoid_inplace<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        *v = flush(T::one() / (T::one() + (-*v).exp()));
    }
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&p, &g)| flush(g * p * (T::one() - p)))
        .collect();
    Tensor::from_parts(output.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv3x3_matches_explicit_summation() {
        // 4x4 input 0..16, one 3x3 kernel, bias 0.5.
        let x = Tensor::new([1, 1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let kernel = [1.0, 0.0, -1.0, 2.0, 0.5, -2.0, 1.0, 0.0, -1.0];
        let out = conv_forward(&x, &kernel, &[0.5], 1, 3);
        let at = |r: isize, c: isize| (r.clamp(0, 3) * 4 + c.clamp(0, 3)) as f64;
        for r in 0..4isize {
            for c in 0..4isize {
                let mut want = 0.5;
                for ky in 0..3isize {
                    for kx in 0..3isize {
                        want += kernel[(ky * 3 + kx) as usize] * at(r + ky - 1, c + kx - 1);
                    }
                }
                assert_eq!(out.data()[(r * 4 + c) as usize], want, "({r},{c})");
            }
        }
        // Worked by hand at (1,1):
        // 1*0 + 0*1 - 1*2 + 2*4 + 0.5*5 - 2*6 + 1*8 + 0*9 - 1*10 + 0.5 = -5.0
        assert_eq!(out.data()[5], -5.0);
        // Corner (0,0) reads replicated edge pixels:
        // 1*0 + 0*0 - 1*1 + 2*0 + 0.5*0 - 2*1 + 1*4 + 0*4 - 1*5 + 0.5 = -3.5
        assert_eq!(out.data()[0], -3.5);
    }

    #[test]
    fn pool_and_upsample_shapes() {
        let x = Tensor::new([1, 2, 4, 6], (0..48).map(|v| v as f32).collect()).unwrap();
        let (p, arg) = maxpool2_forward(&x);
        assert_eq!(p.dims(), [1, 2, 2, 3]);
        assert_eq!(p.data()[0], 7.0);
        assert_eq!(arg[0], 7);
        let u = upsample2_forward(&p);
        assert_eq!(u.dims(), [1, 2, 4, 6]);
        assert_eq!(u.data()[0..2], [7.0, 7.0]);
        let back = upsample2_backward(&u);
        assert_eq!(back.data()[0], 28.0);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::new([2, 1, 2, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let b = Tensor::new([2, 2, 2, 2], (8..24).map(|v| v as f32).collect()).unwrap();
        let c = concat_channels(&a, &b);
        assert_eq!(c.dims(), [2, 3, 2, 2]);
        assert_eq!(c.sample(1)[..4], [4.0, 5.0, 6.0, 7.0]);
        let (a2, b2) = split_channels(&c, 1);
        assert_eq!((a2, b2), (a, b));
    }
}
