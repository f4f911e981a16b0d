//! Interval bound propagation over weight boxes.
//!
//! Every susceptible parameter is replaced by the interval
//! `[theta - zeta*|theta|, theta + zeta*|theta|]` and the same generic
//! network definition that drives concrete evaluation is re-instantiated
//! over interval arithmetic. The result is a rigorous enclosure of every
//! intermediate and of the logits for *all* parameter settings in the box,
//! which turns into a robustness certificate: a prediction is provably
//! stable when the correct class's logit interval has the maximum lower
//! bound and is disjoint from every other class's interval.
//!
//! Two details make the bounds trustworthy:
//!
//! * interval kernels iterate in exactly the same order as the concrete
//!   kernels, so a zero radius degenerates to the concrete forward pass
//!   bit for bit;
//! * spiking nonlinearities map to three-state intervals (never `[0,0]`,
//!   always `[1,1]`, uncertain `[0,1]`), and uncertainty flows soundly into
//!   reset, adaptation, and refractory state through the ordinary interval
//!   product rules.

use crate::diffcore::rng::RngStream;
use crate::diffcore::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::models::{dynamics, Architecture, Dataset, ModelInput, NetDomain, ParameterSet};
use std::collections::BTreeMap;

/// A pair of arrays bounding a value elementwise: `lo <= value <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalArray<T> {
    lo: Tensor<T>,
    hi: Tensor<T>,
}

impl<T: Real> IntervalArray<T> {
    pub fn new(lo: Tensor<T>, hi: Tensor<T>) -> Result<Self> {
        if lo.shape() != hi.shape() {
            return Err(Error::shape(
                "interval",
                format!("lo {:?} vs hi {:?}", lo.shape(), hi.shape()),
            ));
        }
        if lo.data().iter().zip(hi.data()).any(|(&l, &h)| l > h) {
            return Err(Error::invalid("interval with lo > hi"));
        }
        Ok(IntervalArray { lo, hi })
    }

    /// The exact value `x`, as a zero-width interval.
    pub fn degenerate(x: Tensor<T>) -> Self {
        IntervalArray { lo: x.clone(), hi: x }
    }

    pub fn lo(&self) -> &Tensor<T> {
        &self.lo
    }

    pub fn hi(&self) -> &Tensor<T> {
        &self.hi
    }

    pub fn shape(&self) -> &[usize] {
        self.lo.shape()
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Whether `x` lies inside the interval elementwise.
    pub fn contains(&self, x: &Tensor<T>) -> bool {
        x.shape() == self.shape()
            && x.data()
                .iter()
                .zip(self.lo.data())
                .zip(self.hi.data())
                .all(|((&v, &l), &h)| l <= v && v <= h)
    }

    /// Whether this interval encloses `other` elementwise.
    pub fn encloses(&self, other: &IntervalArray<T>) -> bool {
        other.shape() == self.shape()
            && self
                .lo
                .data()
                .iter()
                .zip(other.lo.data())
                .all(|(&a, &b)| a <= b)
            && self
                .hi
                .data()
                .iter()
                .zip(other.hi.data())
                .all(|(&a, &b)| a >= b)
    }

    /// Draw one array uniformly from the box, elementwise.
    pub fn sample_within(&self, rng: &mut RngStream) -> Tensor<T> {
        let mut out = self.lo.clone();
        for (o, &h) in out.data_mut().iter_mut().zip(self.hi.data()) {
            let l = *o;
            if h > l {
                let u = T::from_f64(rng.uniform());
                *o = l + (h - l) * u;
            }
        }
        out
    }
}

/// Min and max of the four products of interval endpoints — the tight
/// enclosure of `a*b` for `a` and `b` ranging over their intervals.
#[inline]
fn interval_product<T: Real>(al: T, ah: T, bl: T, bh: T) -> (T, T) {
    let p1 = al * bl;
    let p2 = al * bh;
    let p3 = ah * bl;
    let p4 = ah * bh;
    let lo = p1.min(p2).min(p3).min(p4);
    let hi = p1.max(p2).max(p3).max(p4);
    (lo, hi)
}

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    (shape[0], shape[1], shape[2], shape[3])
}

/// [`NetDomain`] over interval arrays.
///
/// Loops iterate in the same order as the concrete kernels, so degenerate
/// inputs reproduce concrete results exactly.
pub struct IntervalDomain<T> {
    tags: BTreeMap<String, IntervalArray<T>>,
}

impl<T: Real> IntervalDomain<T> {
    pub fn new() -> Self {
        IntervalDomain {
            tags: BTreeMap::new(),
        }
    }

    pub fn into_tags(self) -> BTreeMap<String, IntervalArray<T>> {
        self.tags
    }
}

impl<T: Real> Default for IntervalDomain<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> NetDomain for IntervalDomain<T> {
    type Value = IntervalArray<T>;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let (n, k) = (a.shape()[0], a.shape()[1]);
        let m = b.shape()[1];
        let mut lo = Tensor::zeros(&[n, m]);
        let mut hi = Tensor::zeros(&[n, m]);
        for i in 0..n {
            for j in 0..m {
                let mut acc_lo = T::zero();
                let mut acc_hi = T::zero();
                for l in 0..k {
                    let (plo, phi) = interval_product(
                        a.lo.data()[i * k + l],
                        a.hi.data()[i * k + l],
                        b.lo.data()[l * m + j],
                        b.hi.data()[l * m + j],
                    );
                    acc_lo += plo;
                    acc_hi += phi;
                }
                lo.data_mut()[i * m + j] = acc_lo;
                hi.data_mut()[i * m + j] = acc_hi;
            }
        }
        IntervalArray::new(lo, hi)
    }

    fn conv2d(&mut self, x: &Self::Value, kernel: &Self::Value) -> Result<Self::Value> {
        if x.shape().len() != 4 || kernel.shape().len() != 4 {
            return Err(Error::shape("conv2d", "expects rank-4 operands"));
        }
        let (n, h, w, ci) = dims4(x.shape());
        let (kh, kw, kci, co) = dims4(kernel.shape());
        if kci != ci || kh > h || kw > w {
            return Err(Error::shape(
                "conv2d",
                format!("image {:?} kernel {:?}", x.shape(), kernel.shape()),
            ));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut lo = Tensor::zeros(&[n, oh, ow, co]);
        let mut hi = Tensor::zeros(&[n, oh, ow, co]);
        for b in 0..n {
            for oi in 0..oh {
                for oj in 0..ow {
                    for oc in 0..co {
                        let mut acc_lo = T::zero();
                        let mut acc_hi = T::zero();
                        for di in 0..kh {
                            for dj in 0..kw {
                                for ic in 0..ci {
                                    let xi = ((b * h + oi + di) * w + oj + dj) * ci + ic;
                                    let ki = ((di * kw + dj) * ci + ic) * co + oc;
                                    let (plo, phi) = interval_product(
                                        x.lo.data()[xi],
                                        x.hi.data()[xi],
                                        kernel.lo.data()[ki],
                                        kernel.hi.data()[ki],
                                    );
                                    acc_lo += plo;
                                    acc_hi += phi;
                                }
                            }
                        }
                        let out = ((b * oh + oi) * ow + oj) * co + oc;
                        lo.data_mut()[out] = acc_lo;
                        hi.data_mut()[out] = acc_hi;
                    }
                }
            }
        }
        IntervalArray::new(lo, hi)
    }

    fn maxpool2x2(&mut self, x: &Self::Value) -> Result<Self::Value> {
        if x.shape().len() != 4 {
            return Err(Error::shape("maxpool2x2", "expects a rank-4 operand"));
        }
        let (n, h, w, c) = dims4(x.shape());
        let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
        let mut lo = Tensor::zeros(&[n, oh, ow, c]);
        let mut hi = Tensor::zeros(&[n, oh, ow, c]);
        let window_max = |data: &[T], b: usize, oi: usize, oj: usize, ch: usize| {
            let mut best: Option<T> = None;
            for di in 0..2 {
                for dj in 0..2 {
                    let (i, j) = (oi * 2 + di, oj * 2 + dj);
                    if i < h && j < w {
                        let v = data[((b * h + i) * w + j) * c + ch];
                        match best {
                            Some(m) if !(v > m) => {}
                            _ => best = Some(v),
                        }
                    }
                }
            }
            best.expect("pool window is never empty")
        };
        for b in 0..n {
            for oi in 0..oh {
                for oj in 0..ow {
                    for ch in 0..c {
                        let out = ((b * oh + oi) * ow + oj) * c + ch;
                        lo.data_mut()[out] = window_max(x.lo.data(), b, oi, oj, ch);
                        hi.data_mut()[out] = window_max(x.hi.data(), b, oi, oj, ch);
                    }
                }
            }
        }
        IntervalArray::new(lo, hi)
    }

    fn relu(&mut self, x: &Self::Value) -> Result<Self::Value> {
        let f = |v: T| if v > T::zero() { v } else { T::zero() };
        IntervalArray::new(x.lo.map(f), x.hi.map(f))
    }

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        let broadcast_ok = b.shape().len() == 1
            && a.shape().last() == Some(&b.shape()[0])
            && !a.shape().is_empty();
        if a.shape() != b.shape() && !broadcast_ok {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", a.shape(), b.shape()),
            ));
        }
        let apply = |ad: &Tensor<T>, bd: &Tensor<T>| {
            let m = bd.len();
            let mut out = ad.clone();
            for (i, o) in out.data_mut().iter_mut().enumerate() {
                *o += bd.data()[i % m];
            }
            out
        };
        IntervalArray::new(apply(&a.lo, &b.lo), apply(&a.hi, &b.hi))
    }

    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        if a.shape() != b.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} * {:?}", a.shape(), b.shape()),
            ));
        }
        let mut lo = Tensor::zeros(a.shape());
        let mut hi = Tensor::zeros(a.shape());
        for i in 0..a.len() {
            let (plo, phi) = interval_product(
                a.lo.data()[i],
                a.hi.data()[i],
                b.lo.data()[i],
                b.hi.data()[i],
            );
            lo.data_mut()[i] = plo;
            hi.data_mut()[i] = phi;
        }
        IntervalArray::new(lo, hi)
    }

    fn scale(&mut self, x: &Self::Value, c: f64) -> Result<Self::Value> {
        let cv = T::from_f64(c);
        let (lo, hi) = if c >= 0.0 {
            (x.lo.map(|v| v * cv), x.hi.map(|v| v * cv))
        } else {
            (x.hi.map(|v| v * cv), x.lo.map(|v| v * cv))
        };
        IntervalArray::new(lo, hi)
    }

    fn add_scalar(&mut self, x: &Self::Value, c: f64) -> Result<Self::Value> {
        let cv = T::from_f64(c);
        IntervalArray::new(x.lo.map(|v| v + cv), x.hi.map(|v| v + cv))
    }

    fn clamp(&mut self, x: &Self::Value, lo: f64, hi: f64) -> Result<Self::Value> {
        let (l, h) = (T::from_f64(lo), T::from_f64(hi));
        let f = |v: T| {
            if v < l {
                l
            } else if v > h {
                h
            } else {
                v
            }
        };
        IntervalArray::new(x.lo.map(f), x.hi.map(f))
    }

    /// Three-state spike interval from the strict threshold `1(v > b)`:
    /// fires for every box point (`[1,1]`), for none (`[0,0]`), or is
    /// uncertain (`[0,1]`).
    fn spike(&mut self, v: &Self::Value, b: &Self::Value, _dampening: f64) -> Result<Self::Value> {
        if v.shape() != b.shape() {
            return Err(Error::shape(
                "spike",
                format!("v {:?} vs b {:?}", v.shape(), b.shape()),
            ));
        }
        let mut lo = Tensor::zeros(v.shape());
        let mut hi = Tensor::zeros(v.shape());
        for i in 0..v.len() {
            if v.lo.data()[i] > b.hi.data()[i] {
                lo.data_mut()[i] = T::one();
            }
            if v.hi.data()[i] > b.lo.data()[i] {
                hi.data_mut()[i] = T::one();
            }
        }
        IntervalArray::new(lo, hi)
    }

    fn reshape(&mut self, x: &Self::Value, shape: &[usize]) -> Result<Self::Value> {
        IntervalArray::new(x.lo.reshape(shape)?, x.hi.reshape(shape)?)
    }

    fn zeros(&mut self, shape: &[usize]) -> Self::Value {
        IntervalArray::degenerate(Tensor::zeros(shape))
    }

    fn tag(&mut self, name: &str, v: &Self::Value) {
        self.tags.insert(name.to_string(), v.clone());
    }
}

/// Lift parameters into their mismatch boxes: susceptible arrays get
/// `[theta - zeta*|theta|, theta + zeta*|theta|]`, the rest stay exact.
pub fn lift_weights<T: Real>(
    params: &ParameterSet<T>,
    zeta: f64,
) -> Result<BTreeMap<String, IntervalArray<T>>> {
    if !(zeta >= 0.0) {
        return Err(Error::invalid(format!("interval radius zeta = {zeta} < 0")));
    }
    let z = T::from_f64(zeta);
    let mut out = BTreeMap::new();
    for (name, p) in params.iter() {
        let interval = if p.susceptible {
            let lo = p.value.map(|t| t - z * t.abs());
            let hi = p.value.map(|t| t + z * t.abs());
            IntervalArray::new(lo, hi)?
        } else {
            IntervalArray::degenerate(p.value.clone())
        };
        out.insert(name.to_string(), interval);
    }
    Ok(out)
}

/// Logit enclosure plus every tagged intermediate's enclosure.
pub struct IntervalForward<T> {
    pub logits: IntervalArray<T>,
    pub tags: BTreeMap<String, IntervalArray<T>>,
}

/// Propagate intervals through the network for an exact input batch.
pub fn interval_forward<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    zeta: f64,
    input: &ModelInput<T>,
) -> Result<IntervalForward<T>> {
    let lifted = lift_weights(params, zeta)?;
    let batch = input.batch_size();
    let mut dom = IntervalDomain::new();
    let logits = match (arch, input) {
        (Architecture::Mlp(cfg), ModelInput::Static(x)) => {
            let xi = IntervalArray::degenerate(x.clone());
            dynamics::mlp_logits(cfg, &mut dom, &xi, &lifted, None)?
        }
        (Architecture::Cnn(cfg), ModelInput::Static(x)) => {
            let xi = IntervalArray::degenerate(x.clone());
            dynamics::cnn_logits(cfg, &mut dom, &xi, &lifted, None, batch)?
        }
        (Architecture::Srnn(cfg), _) => {
            let t_steps = input.time_steps(cfg.n_steps);
            let steps: Vec<IntervalArray<T>> = match input {
                // A static input drives every step identically.
                ModelInput::Static(x) => {
                    vec![IntervalArray::degenerate(x.clone()); t_steps.max(1)]
                }
                ModelInput::Sequence(_) => (0..t_steps)
                    .map(|t| IntervalArray::degenerate(input.step_slice(t)))
                    .collect(),
            };
            dynamics::srnn_logits(cfg, &mut dom, &steps, &lifted, None, batch)?
        }
        _ => {
            return Err(Error::shape(
                "interval_forward",
                "sequence input on a non-recurrent model",
            ))
        }
    };
    Ok(IntervalForward {
        logits,
        tags: dom.into_tags(),
    })
}

/// Whether a single example is provably classified as `label`: the correct
/// class's lower bound is the maximum lower bound and its interval is
/// disjoint from every other class's interval.
pub fn verified_correct<T: Real>(lo: &[T], hi: &[T], label: usize) -> Result<bool> {
    if lo.len() < 2 || lo.len() != hi.len() {
        return Err(Error::invalid(format!(
            "need >= 2 class intervals, got {} lo / {} hi",
            lo.len(),
            hi.len()
        )));
    }
    if label >= lo.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            lo.len()
        )));
    }
    let (ly, hy) = (lo[label], hi[label]);
    for c in 0..lo.len() {
        if c == label {
            continue;
        }
        if lo[c] > ly {
            return Ok(false); // not the maximum lower bound
        }
        let disjoint = hi[c] < ly || lo[c] > hy;
        if !disjoint {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fraction of the test set provably classified correctly at radius `zeta`.
pub fn verified_accuracy<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    zeta: f64,
    data: &Dataset<T>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let classes = arch.classes();
    let mut verified = 0usize;
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(128) {
        let batch = data.batch(chunk);
        let fwd = interval_forward(arch, params, zeta, &batch.input)?;
        for (row, &label) in batch.labels.iter().enumerate() {
            let lo = &fwd.logits.lo.data()[row * classes..(row + 1) * classes];
            let hi = &fwd.logits.hi.data()[row * classes..(row + 1) * classes];
            if verified_correct(lo, hi, label)? {
                verified += 1;
            }
        }
    }
    Ok(verified as f64 / data.len() as f64)
}
