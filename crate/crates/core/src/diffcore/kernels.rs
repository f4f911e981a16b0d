//! Forward and backward kernels for the tape primitives.
//!
//! Accumulation order is part of the contract: the interval-propagation code
//! in `verify` mirrors these loops term for term, so that degenerate intervals
//! reproduce concrete evaluation bit-identically and round-to-nearest
//! monotonicity keeps the bounds sound. Do not reorder reductions here without
//! updating the interval twins.

use crate::diffcore::tensor::{Real, Tensor};

/// Floor applied to probabilities inside log-based losses.
pub const PROB_FLOOR: f64 = 1e-12;

pub(crate) fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let (ad, bd) = (a.data(), b.data());
    let mut out = Tensor::zeros(&[n, m]);
    let od = out.data_mut();
    for i in 0..n {
        for j in 0..m {
            let mut acc = T::zero();
            for l in 0..k {
                acc += ad[i * k + l] * bd[l * m + j];
            }
            od[i * m + j] = acc;
        }
    }
    out
}

pub(crate) fn matmul_backward<T: Real>(
    dy: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    da: &mut Tensor<T>,
    db: &mut Tensor<T>,
) {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let (ad, bd, dyd) = (a.data(), b.data(), dy.data());
    {
        let dad = da.data_mut();
        for i in 0..n {
            for l in 0..k {
                let mut acc = T::zero();
                for j in 0..m {
                    acc += dyd[i * m + j] * bd[l * m + j];
                }
                dad[i * k + l] += acc;
            }
        }
    }
    {
        let dbd = db.data_mut();
        for l in 0..k {
            for j in 0..m {
                let mut acc = T::zero();
                for i in 0..n {
                    acc += ad[i * k + l] * dyd[i * m + j];
                }
                dbd[l * m + j] += acc;
            }
        }
    }
}

/// Valid-padding stride-1 convolution over `[n,h,w,c_in]` with kernel
/// `[kh,kw,c_in,c_out]`.
pub(crate) fn conv2d<T: Real>(x: &Tensor<T>, k: &Tensor<T>) -> Tensor<T> {
    let (n, h, w, ci) = dims4(x.shape());
    let (kh, kw, _, co) = dims4(k.shape());
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let (xd, kd) = (x.data(), k.data());
    let mut out = Tensor::zeros(&[n, oh, ow, co]);
    let od = out.data_mut();
    for b in 0..n {
        for oi in 0..oh {
            for oj in 0..ow {
                for oc in 0..co {
                    let mut acc = T::zero();
                    for di in 0..kh {
                        for dj in 0..kw {
                            for ic in 0..ci {
                                let xv = xd[((b * h + oi + di) * w + oj + dj) * ci + ic];
                                let kv = kd[((di * kw + dj) * ci + ic) * co + oc];
                                acc += xv * kv;
                            }
                        }
                    }
                    od[((b * oh + oi) * ow + oj) * co + oc] = acc;
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward<T: Real>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    k: &Tensor<T>,
    dx: &mut Tensor<T>,
    dk: &mut Tensor<T>,
) {
    let (n, h, w, ci) = dims4(x.shape());
    let (kh, kw, _, co) = dims4(k.shape());
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let (xd, kd, dyd) = (x.data(), k.data(), dy.data());
    let dxd = dx.data_mut();
    let dkd = dk.data_mut();
    for b in 0..n {
        for oi in 0..oh {
            for oj in 0..ow {
                for oc in 0..co {
                    let g = dyd[((b * oh + oi) * ow + oj) * co + oc];
                    for di in 0..kh {
                        for dj in 0..kw {
                            for ic in 0..ci {
                                let xi = ((b * h + oi + di) * w + oj + dj) * ci + ic;
                                let ki = ((di * kw + dj) * ci + ic) * co + oc;
                                dxd[xi] += g * kd[ki];
                                dkd[ki] += g * xd[xi];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 max-pool with stride 2; odd right/bottom edges keep partial windows.
pub(crate) fn maxpool2x2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (n, h, w, c) = dims4(x.shape());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let xd = x.data();
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let od = out.data_mut();
    for b in 0..n {
        for oi in 0..oh {
            for oj in 0..ow {
                for ch in 0..c {
                    od[((b * oh + oi) * ow + oj) * c + ch] =
                        pool_window(xd, b, oi, oj, ch, h, w, c).0;
                }
            }
        }
    }
    out
}

pub(crate) fn maxpool2x2_backward<T: Real>(dy: &Tensor<T>, x: &Tensor<T>, dx: &mut Tensor<T>) {
    let (n, h, w, c) = dims4(x.shape());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let (xd, dyd) = (x.data(), dy.data());
    let dxd = dx.data_mut();
    for b in 0..n {
        for oi in 0..oh {
            for oj in 0..ow {
                for ch in 0..c {
                    // Gradient routes to the first maximum in scan order.
                    let (_, argmax) = pool_window(xd, b, oi, oj, ch, h, w, c);
                    dxd[argmax] += dyd[((b * oh + oi) * ow + oj) * c + ch];
                }
            }
        }
    }
}

/// Max over one (possibly partial) 2x2 window; returns (value, flat argmax).
fn pool_window<T: Real>(
    xd: &[T],
    b: usize,
    oi: usize,
    oj: usize,
    ch: usize,
    h: usize,
    w: usize,
    c: usize,
) -> (T, usize) {
    let mut best: Option<(T, usize)> = None;
    for di in 0..2 {
        for dj in 0..2 {
            let (i, j) = (oi * 2 + di, oj * 2 + dj);
            if i < h && j < w {
                let idx = ((b * h + i) * w + j) * c + ch;
                let v = xd[idx];
                match best {
                    Some((m, _)) if !(v > m) => {}
                    _ => best = Some((v, idx)),
                }
            }
        }
    }
    best.expect("pool window is never empty")
}

pub(crate) fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    if a.shape() == b.shape() {
        let mut out = a.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(b.data()) {
            *o += x;
        }
        out
    } else {
        // Rank-1 right operand broadcast over the last axis.
        let m = b.len();
        let mut out = a.clone();
        let bd = b.data();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bd[i % m];
        }
        out
    }
}

pub(crate) fn add_backward<T: Real>(dy: &Tensor<T>, da: &mut Tensor<T>, db: &mut Tensor<T>) {
    for (g, &d) in da.data_mut().iter_mut().zip(dy.data()) {
        *g += d;
    }
    if db.shape() == dy.shape() {
        for (g, &d) in db.data_mut().iter_mut().zip(dy.data()) {
            *g += d;
        }
    } else {
        let m = db.len();
        let dbd = db.data_mut();
        for (i, &d) in dy.data().iter().enumerate() {
            dbd[i % m] += d;
        }
    }
}

pub(crate) fn mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = a.clone();
    for (o, &x) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= x;
    }
    out
}

pub(crate) fn mul_backward<T: Real>(
    dy: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    da: &mut Tensor<T>,
    db: &mut Tensor<T>,
) {
    for ((g, &d), &bv) in da.data_mut().iter_mut().zip(dy.data()).zip(b.data()) {
        *g += d * bv;
    }
    for ((g, &d), &av) in db.data_mut().iter_mut().zip(dy.data()).zip(a.data()) {
        *g += d * av;
    }
}

pub(crate) fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_backward<T: Real>(dy: &Tensor<T>, x: &Tensor<T>, dx: &mut Tensor<T>) {
    for ((g, &d), &xv) in dx.data_mut().iter_mut().zip(dy.data()).zip(x.data()) {
        if xv > T::zero() {
            *g += d;
        }
    }
}

pub(crate) fn clamp<T: Real>(x: &Tensor<T>, lo: f64, hi: f64) -> Tensor<T> {
    let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
    x.map(|v| if v < lo { lo } else if v > hi { hi } else { v })
}

pub(crate) fn clamp_backward<T: Real>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    lo: f64,
    hi: f64,
    dx: &mut Tensor<T>,
) {
    let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
    for ((g, &d), &xv) in dx.data_mut().iter_mut().zip(dy.data()).zip(x.data()) {
        if xv > lo && xv < hi {
            *g += d;
        }
    }
}

pub(crate) fn sign_val<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

pub(crate) fn sign<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sign_val)
}

pub(crate) fn abs<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.abs())
}

pub(crate) fn abs_backward<T: Real>(dy: &Tensor<T>, x: &Tensor<T>, dx: &mut Tensor<T>) {
    for ((g, &d), &xv) in dx.data_mut().iter_mut().zip(dy.data()).zip(x.data()) {
        *g += d * sign_val(xv);
    }
}

/// Row-wise max-subtracted softmax on `[n, c]`.
pub(crate) fn softmax<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let xd = x.data();
    let mut out = Tensor::zeros(&[n, c]);
    let od = out.data_mut();
    for i in 0..n {
        let row = &xd[i * c..(i + 1) * c];
        let mut m = row[0];
        for &v in &row[1..] {
            if v > m {
                m = v;
            }
        }
        let mut denom = T::zero();
        for j in 0..c {
            let e = (row[j] - m).exp();
            od[i * c + j] = e;
            denom += e;
        }
        for j in 0..c {
            od[i * c + j] /= denom;
        }
    }
    out
}

pub(crate) fn softmax_backward<T: Real>(dy: &Tensor<T>, y: &Tensor<T>, dx: &mut Tensor<T>) {
    let (n, c) = (y.shape()[0], y.shape()[1]);
    let (yd, dyd) = (y.data(), dy.data());
    let dxd = dx.data_mut();
    for i in 0..n {
        let mut dot = T::zero();
        for j in 0..c {
            dot += dyd[i * c + j] * yd[i * c + j];
        }
        for j in 0..c {
            dxd[i * c + j] += yd[i * c + j] * (dyd[i * c + j] - dot);
        }
    }
}

/// Mean categorical cross-entropy over probability rows.
pub(crate) fn cross_entropy<T: Real>(p: &Tensor<T>, labels: &Tensor<T>) -> T {
    let n = p.shape()[0];
    let floor = T::from_f64(PROB_FLOOR);
    let mut acc = T::zero();
    for (&pv, &yv) in p.data().iter().zip(labels.data()) {
        acc += yv * pv.max(floor).ln();
    }
    -acc / T::from_f64(n as f64)
}

pub(crate) fn cross_entropy_backward<T: Real>(
    dscalar: T,
    p: &Tensor<T>,
    labels: &Tensor<T>,
    dp: &mut Tensor<T>,
) {
    let n = T::from_f64(p.shape()[0] as f64);
    let floor = T::from_f64(PROB_FLOOR);
    for ((g, &pv), &yv) in dp.data_mut().iter_mut().zip(p.data()).zip(labels.data()) {
        // The floor is a max(); below it the loss is locally constant in p.
        if pv >= floor {
            *g -= dscalar * yv / (pv * n);
        }
    }
}

/// Mean row-wise KL divergence `KL(p || q)`, both arguments floored.
pub(crate) fn kl_div<T: Real>(p: &Tensor<T>, q: &Tensor<T>) -> T {
    let n = p.shape()[0];
    let floor = T::from_f64(PROB_FLOOR);
    let mut acc = T::zero();
    for (&pv, &qv) in p.data().iter().zip(q.data()) {
        let pf = pv.max(floor);
        let qf = qv.max(floor);
        // ln of the ratio: exactly zero when the rows coincide.
        acc += pf * (pf / qf).ln();
    }
    acc / T::from_f64(n as f64)
}

pub(crate) fn kl_div_backward<T: Real>(
    dscalar: T,
    p: &Tensor<T>,
    q: &Tensor<T>,
    dp: &mut Tensor<T>,
    dq: &mut Tensor<T>,
) {
    let n = T::from_f64(p.shape()[0] as f64);
    let floor = T::from_f64(PROB_FLOOR);
    let one = T::one();
    let (dpd, dqd) = (dp.data_mut(), dq.data_mut());
    for (i, (&pv, &qv)) in p.data().iter().zip(q.data()).enumerate() {
        let pf = pv.max(floor);
        let qf = qv.max(floor);
        if pv >= floor {
            dpd[i] += dscalar * ((pf / qf).ln() + one) / n;
        }
        if qv >= floor {
            dqd[i] -= dscalar * (pf / qf) / n;
        }
    }
}

/// Hard threshold: `1(v > b)` elementwise.
pub(crate) fn spike_step<T: Real>(v: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(v.shape());
    for ((o, &vv), &bv) in out.data_mut().iter_mut().zip(v.data()).zip(b.data()) {
        if vv > bv {
            *o = T::one();
        }
    }
    out
}

/// Triangular surrogate pseudo-derivative of the threshold:
/// `d * max(1 - |(v - b)/b|, 0)`.
pub(crate) fn surrogate_val<T: Real>(v: T, b: T, dampening: T) -> T {
    let ratio = ((v - b) / b).abs();
    let tri = T::one() - ratio;
    // NaN (from b == 0) and negative values both collapse to zero support.
    if tri > T::zero() {
        dampening * tri
    } else {
        T::zero()
    }
}

pub(crate) fn spike_step_backward<T: Real>(
    dy: &Tensor<T>,
    v: &Tensor<T>,
    b: &Tensor<T>,
    dampening: f64,
    dv: &mut Tensor<T>,
) {
    let d = T::from_f64(dampening);
    for (((g, &gy), &vv), &bv) in dv
        .data_mut()
        .iter_mut()
        .zip(dy.data())
        .zip(v.data())
        .zip(b.data())
    {
        *g += gy * surrogate_val(vv, bv, d);
    }
}

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    (shape[0], shape[1], shape[2], shape[3])
}
