//! Forward and backward kernels for every [`OpKind`].

use super::{OpKind, Scalar, Tensor};
use crate::error::{Error, Result};

/// Per-node state kept from the forward pass for the backward pass.
#[derive(Debug, Default)]
pub(crate) enum Saved<T> {
    #[default]
    Nothing,
    /// im2col matrix `[C*KH*KW, N*OH*OW]`.
    Columns(Vec<T>),
    /// Flat input index of each pooled maximum.
    Argmax(Vec<usize>),
    Softmax {
        probs: Vec<T>,
        labels: Vec<Option<usize>>,
        included: usize,
    },
}

struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

fn conv_geom<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>, stride: usize, pad: usize) -> Result<ConvGeom> {
    let (xs, ks) = (x.shape(), k.shape());
    if xs.len() != 4 || ks.len() != 4 {
        return Err(Error::shape(
            "conv2d",
            format!("expected rank-4 input and kernel, got {xs:?} and {ks:?}"),
        ));
    }
    if xs[1] != ks[1] {
        return Err(Error::shape(
            "conv2d",
            format!("input has {} channels, kernel expects {}", xs[1], ks[1]),
        ));
    }
    let (h, w, kh, kw) = (xs[2], xs[3], ks[2], ks[3]);
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})"),
        ));
    }
    Ok(ConvGeom {
        n: xs[0],
        c: xs[1],
        h,
        w,
        o: ks[0],
        kh,
        kw,
        oh: (h + 2 * pad - kh) / stride + 1,
        ow: (w + 2 * pad - kw) / stride + 1,
        stride,
        pad,
    })
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.positions();
    let np = g.n * p;
    let mut cols = vec![T::zero(); g.patch() * np];
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst_row = &mut cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let plane = &x[(n * g.c + c) * g.h * g.w..(n * g.c + c + 1) * g.h * g.w];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let dst = &mut dst_row[n * p + oy * g.ow..n * p + (oy + 1) * g.ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.positions();
    let np = g.n * p;
    let mut x = vec![T::zero(); g.n * g.c * g.h * g.w];
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src_row = &cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let base = (n * g.c + c) * g.h * g.w;
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src = &src_row[n * p + oy * g.ow..n * p + (oy + 1) * g.ow];
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                x[base + iy as usize * g.w + ix as usize] =
                                    x[base + iy as usize * g.w + ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

fn parse_labels<T: Scalar>(labels: &Tensor<T>, n: usize, classes: usize) -> Result<Vec<Option<usize>>> {
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    labels
        .data()
        .iter()
        .map(|&v| {
            let v = v.as_f64();
            if v < 0.0 {
                Ok(None)
            } else if v.fract() != 0.0 || v >= classes as f64 {
                Err(Error::InvalidLabel {
                    label: v as i64,
                    classes,
                })
            } else {
                Ok(Some(v as usize))
            }
        })
        .collect()
}

pub(crate) fn forward<T: Scalar>(op: &OpKind, inputs: &[&Tensor<T>]) -> Result<(Tensor<T>, Saved<T>)> {
    match op {
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(Error::shape(
                    "matmul",
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = vec![T::zero(); m * n];
            T::gemm(m, k, n, T::one(), a.data(), (k as isize, 1), b.data(), (n as isize, 1), T::zero(), &mut out, (n as isize, 1));
            Ok((Tensor::new([m, n], out)?, Saved::Nothing))
        }
        OpKind::AddBias => {
            let (x, b) = (inputs[0], inputs[1]);
            if x.rank() < 2 || b.rank() != 1 || b.len() != x.shape()[1] {
                return Err(Error::shape(
                    "add_bias",
                    format!("bias {:?} for input {:?}", b.shape(), x.shape()),
                ));
            }
            let f = b.len();
            let inner: usize = x.shape()[2..].iter().product();
            let mut out = x.data().to_vec();
            for (chunk_idx, chunk) in out.chunks_mut(inner).enumerate() {
                let bias = b.data()[chunk_idx % f];
                for v in chunk {
                    *v = *v + bias;
                }
            }
            Ok((Tensor::new(x.shape(), out)?, Saved::Nothing))
        }
        OpKind::Relu => {
            let x = inputs[0];
            let out = x
                .data()
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect();
            Ok((Tensor::new(x.shape(), out)?, Saved::Nothing))
        }
        OpKind::Conv2d { stride, padding } => {
            let (x, k) = (inputs[0], inputs[1]);
            let g = conv_geom(x, k, *stride, *padding)?;
            let cols = im2col(x.data(), &g);
            let (p, np, ckk) = (g.positions(), g.n * g.positions(), g.patch());
            let mut mat = vec![T::zero(); g.o * np];
            T::gemm(g.o, ckk, np, T::one(), k.data(), (ckk as isize, 1), &cols, (np as isize, 1), T::zero(), &mut mat, (np as isize, 1));
            let mut out = vec![T::zero(); g.n * g.o * p];
            for o in 0..g.o {
                for n in 0..g.n {
                    out[(n * g.o + o) * p..(n * g.o + o + 1) * p]
                        .copy_from_slice(&mat[o * np + n * p..o * np + (n + 1) * p]);
                }
            }
            Ok((Tensor::new([g.n, g.o, g.oh, g.ow], out)?, Saved::Columns(cols)))
        }
        OpKind::MaxPool2d { kernel, stride } => {
            let x = inputs[0];
            let s = x.shape();
            if s.len() != 4 || s[2] < *kernel || s[3] < *kernel {
                return Err(Error::shape(
                    "max_pool2d",
                    format!("input {s:?} with window {kernel}"),
                ));
            }
            let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
            let oh = (h - kernel) / stride + 1;
            let ow = (w - kernel) / stride + 1;
            let mut out = Vec::with_capacity(n * c * oh * ow);
            let mut arg = Vec::with_capacity(n * c * oh * ow);
            let xd = x.data();
            for plane in 0..n * c {
                let base = plane * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = base + oy * stride * w + ox * stride;
                        for ky in 0..*kernel {
                            for kx in 0..*kernel {
                                let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                                if xd[idx] > xd[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(xd[best]);
                        arg.push(best);
                    }
                }
            }
            Ok((Tensor::new([n, c, oh, ow], out)?, Saved::Argmax(arg)))
        }
        OpKind::Flatten => {
            let x = inputs[0];
            let n = x.shape()[0];
            Ok((x.clone().reshape([n, x.len() / n])?, Saved::Nothing))
        }
        OpKind::SoftmaxCrossEntropy => {
            let (logits, labels) = (inputs[0], inputs[1]);
            if logits.rank() != 2 {
                return Err(Error::shape(
                    "softmax_cross_entropy",
                    format!("logits must be [N, C], got {:?}", logits.shape()),
                ));
            }
            let (n, c) = (logits.shape()[0], logits.shape()[1]);
            let labels = parse_labels(labels, n, c)?;
            let mut probs = vec![T::zero(); n * c];
            let mut total = 0.0f64;
            let mut included = 0usize;
            for (i, label) in labels.iter().enumerate() {
                let row = logits.row(i);
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for (p, &l) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                    *p = (l - max).exp();
                    sum = sum + *p;
                }
                for p in &mut probs[i * c..(i + 1) * c] {
                    *p = *p / sum;
                }
                if let Some(y) = label {
                    // (max - l_y) >= 0 and ln(sum) >= 0, so the loss is never negative.
                    total += ((max - row[*y]) + sum.ln()).as_f64();
                    included += 1;
                }
            }
            let loss = if included == 0 { 0.0 } else { total / included as f64 };
            Ok((
                Tensor::scalar(T::from_f64_lossy(loss)),
                Saved::Softmax {
                    probs,
                    labels,
                    included,
                },
            ))
        }
        OpKind::GradReverse { .. } => Ok((inputs[0].clone().with_requires_grad(false), Saved::Nothing)),
        OpKind::Concat => {
            let first = inputs[0];
            let tail = &first.shape()[1..];
            let mut rows = 0;
            for t in inputs {
                if &t.shape()[1..] != tail {
                    return Err(Error::shape(
                        "concat",
                        format!("{:?} vs {:?}", t.shape(), first.shape()),
                    ));
                }
                rows += t.shape()[0];
            }
            let mut data = Vec::with_capacity(rows * first.row_width());
            for t in inputs {
                data.extend_from_slice(t.data());
            }
            let mut shape = first.shape().to_vec();
            shape[0] = rows;
            Ok((Tensor::new(shape, data)?, Saved::Nothing))
        }
        OpKind::Scale(factor) => {
            let f = T::from_f64_lossy(*factor);
            Ok((inputs[0].map(|v| f * v), Saved::Nothing))
        }
    }
}

/// Vector-Jacobian product of one node.
///
/// Returns one entry per input; entries are `None` where `needs[i]` is false
/// or the input is not differentiable. With `reversal_as_identity` the
/// gradient reversal op behaves like its forward map (used by gradient checks).
pub(crate) fn backward<T: Scalar>(
    op: &OpKind,
    inputs: &[&Tensor<T>],
    saved: &Saved<T>,
    upstream: &Tensor<T>,
    needs: &[bool],
    reversal_as_identity: bool,
) -> Result<Vec<Option<Tensor<T>>>> {
    let g = upstream.data();
    let mut out: Vec<Option<Tensor<T>>> = vec![None; inputs.len()];
    match op {
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            if needs[0] {
                let mut da = vec![T::zero(); m * k];
                T::gemm(m, n, k, T::one(), g, (n as isize, 1), b.data(), (1, n as isize), T::zero(), &mut da, (k as isize, 1));
                out[0] = Some(Tensor::new([m, k], da)?);
            }
            if needs[1] {
                let mut db = vec![T::zero(); k * n];
                T::gemm(k, m, n, T::one(), a.data(), (1, k as isize), g, (n as isize, 1), T::zero(), &mut db, (n as isize, 1));
                out[1] = Some(Tensor::new([k, n], db)?);
            }
        }
        OpKind::AddBias => {
            let (x, b) = (inputs[0], inputs[1]);
            if needs[0] {
                out[0] = Some(upstream.clone());
            }
            if needs[1] {
                let f = b.len();
                let inner: usize = x.shape()[2..].iter().product();
                let mut db = vec![T::zero(); f];
                for (chunk_idx, chunk) in g.chunks(inner).enumerate() {
                    let acc = &mut db[chunk_idx % f];
                    for &v in chunk {
                        *acc = *acc + v;
                    }
                }
                out[1] = Some(Tensor::new([f], db)?);
            }
        }
        OpKind::Relu => {
            if needs[0] {
                let x = inputs[0];
                let dx = x
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                out[0] = Some(Tensor::new(x.shape(), dx)?);
            }
        }
        OpKind::Conv2d { stride, padding } => {
            let (x, k) = (inputs[0], inputs[1]);
            let geom = conv_geom(x, k, *stride, *padding)?;
            let Saved::Columns(cols) = saved else {
                return Err(Error::GraphConsumed);
            };
            let (p, np, ckk) = (geom.positions(), geom.n * geom.positions(), geom.patch());
            let mut mat = vec![T::zero(); geom.o * np];
            for o in 0..geom.o {
                for n in 0..geom.n {
                    mat[o * np + n * p..o * np + (n + 1) * p]
                        .copy_from_slice(&g[(n * geom.o + o) * p..(n * geom.o + o + 1) * p]);
                }
            }
            if needs[1] {
                let mut dk = vec![T::zero(); geom.o * ckk];
                T::gemm(geom.o, np, ckk, T::one(), &mat, (np as isize, 1), cols, (1, np as isize), T::zero(), &mut dk, (ckk as isize, 1));
                out[1] = Some(Tensor::new(k.shape(), dk)?);
            }
            if needs[0] {
                let mut dcols = vec![T::zero(); ckk * np];
                T::gemm(ckk, geom.o, np, T::one(), k.data(), (1, ckk as isize), &mat, (np as isize, 1), T::zero(), &mut dcols, (np as isize, 1));
                out[0] = Some(Tensor::new(x.shape(), col2im(&dcols, &geom))?);
            }
        }
        OpKind::MaxPool2d { .. } => {
            if needs[0] {
                let Saved::Argmax(arg) = saved else {
                    return Err(Error::GraphConsumed);
                };
                let x = inputs[0];
                let mut dx = vec![T::zero(); x.len()];
                for (&idx, &gv) in arg.iter().zip(g) {
                    dx[idx] = dx[idx] + gv;
                }
                out[0] = Some(Tensor::new(x.shape(), dx)?);
            }
        }
        OpKind::Flatten => {
            if needs[0] {
                out[0] = Some(upstream.clone().reshape(inputs[0].shape())?);
            }
        }
        OpKind::SoftmaxCrossEntropy => {
            if needs[0] {
                let Saved::Softmax {
                    probs,
                    labels,
                    included,
                } = saved
                else {
                    return Err(Error::GraphConsumed);
                };
                let logits = inputs[0];
                let c = logits.shape()[1];
                let mut dl = vec![T::zero(); logits.len()];
                if *included > 0 {
                    let scale = g[0] / T::from_usize(*included).expect("count fits float");
                    for (i, label) in labels.iter().enumerate() {
                        if let Some(y) = label {
                            for j in 0..c {
                                let onehot = if j == *y { T::one() } else { T::zero() };
                                dl[i * c + j] = scale * (probs[i * c + j] - onehot);
                            }
                        }
                    }
                }
                out[0] = Some(Tensor::new(logits.shape(), dl)?);
            }
        }
        OpKind::GradReverse { lambda } => {
            if needs[0] {
                out[0] = Some(if reversal_as_identity {
                    upstream.clone()
                } else {
                    reverse_gradient(upstream, *lambda)
                });
            }
        }
        OpKind::Concat => {
            let mut offset = 0;
            for (i, t) in inputs.iter().enumerate() {
                if needs[i] {
                    out[i] = Some(Tensor::new(t.shape(), g[offset..offset + t.len()].to_vec())?);
                }
                offset += t.len();
            }
        }
        OpKind::Scale(factor) => {
            if needs[0] {
                let f = T::from_f64_lossy(*factor);
                out[0] = Some(upstream.map(|v| f * v));
            }
        }
    }
    Ok(out)
}

/// Backward map of the gradient reversal op: `g -> -lambda * g`.
pub fn reverse_gradient<T: Scalar>(upstream: &Tensor<T>, lambda: f64) -> Tensor<T> {
    let neg = -T::from_f64_lossy(lambda);
    upstream.map(|v| neg * v)
}
