//! Layer kernels on channel-major (`C×H×W`) buffers.
//!
//! Every kernel is generic over [`Scalar`] so the same code runs in `f32`,
//! `f64` and dual arithmetic. Backward kernels accumulate into their outputs.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
    Tanh,
}

const LEAKY_SLOPE: f64 = 0.1;

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, v: &mut [S]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| {
                if *x < S::zero() {
                    *x = S::zero()
                }
            }),
            Activation::LeakyRelu => {
                let k = S::lit(LEAKY_SLOPE);
                v.iter_mut().for_each(|x| {
                    if *x < S::zero() {
                        *x *= k
                    }
                })
            }
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
        }
    }

    /// Turn `grad` (w.r.t. the activation output `out`) into the gradient
    /// w.r.t. the pre-activation, in place.
    #[inline]
    pub fn backward<S: Scalar>(self, out: &[S], grad: &mut [S]) {
        match self {
            Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, &y)| {
                if y <= S::zero() {
                    *g = S::zero()
                }
            }),
            Activation::LeakyRelu => {
                let k = S::lit(LEAKY_SLOPE);
                grad.iter_mut().zip(out).for_each(|(g, &y)| {
                    if y <= S::zero() {
                        *g *= k
                    }
                })
            }
            Activation::Tanh => grad.iter_mut().zip(out).for_each(|(g, &y)| *g *= S::one() - y * y),
        }
    }

    /// Gain used for fan-in scaled initialization.
    pub fn init_gain(self) -> f64 {
        match self {
            Activation::Relu => 2.0,
            Activation::LeakyRelu => 2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE),
            Activation::Tanh => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Max,
    Avg,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Max => "max",
            Pooling::Avg => "avg",
        }
    }
}

/// Valid index range of an output row/column for kernel offset `d`.
#[inline]
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo, hi)
}

/// 3×3 convolution with zero padding 1. `weight` is `[co, ci, 3, 3]`.
pub fn conv3x3<S: Scalar>(input: &[S], ci: usize, h: usize, w: usize, weight: &[S], bias: &[S], co: usize) -> Vec<S> {
    let hw = h * w;
    let mut out = vec![S::zero(); co * hw];
    for o in 0..co {
        let out_o = &mut out[o * hw..(o + 1) * hw];
        out_o.fill(bias[o]);
        for i in 0..ci {
            let in_i = &input[i * hw..(i + 1) * hw];
            let k = &weight[(o * ci + i) * 9..(o * ci + i + 1) * 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(w, dx);
                    let kv = k[ky * 3 + kx];
                    for y in y0..y1 {
                        let src_row = ((y as isize + dy) as usize) * w;
                        let src = &in_i[(src_row as isize + x0 as isize + dx) as usize..(src_row as isize + x1 as isize + dx) as usize];
                        let dst = &mut out_o[y * w + x0..y * w + x1];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += kv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`conv3x3`]. Accumulates into `gw`/`gb` when given and
/// returns the input gradient when `want_input`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<S: Scalar>(
    input: &[S],
    ci: usize,
    h: usize,
    w: usize,
    weight: &[S],
    co: usize,
    grad_out: &[S],
    params: Option<(&mut [S], &mut [S])>,
    want_input: bool,
) -> Option<Vec<S>> {
    let hw = h * w;
    if let Some((gw, gb)) = params {
        for o in 0..co {
            let g_o = &grad_out[o * hw..(o + 1) * hw];
            gb[o] += g_o.iter().fold(S::zero(), |a, &b| a + b);
            for i in 0..ci {
                let in_i = &input[i * hw..(i + 1) * hw];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(h, dy);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = span(w, dx);
                        let mut acc = S::zero();
                        for y in y0..y1 {
                            let src_row = ((y as isize + dy) as usize) * w;
                            let src = &in_i[(src_row as isize + x0 as isize + dx) as usize..(src_row as isize + x1 as isize + dx) as usize];
                            let g = &g_o[y * w + x0..y * w + x1];
                            acc += g.iter().zip(src).fold(S::zero(), |a, (&p, &q)| a + p * q);
                        }
                        gw[(o * ci + i) * 9 + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    if !want_input {
        return None;
    }
    let mut gin = vec![S::zero(); ci * hw];
    for o in 0..co {
        let g_o = &grad_out[o * hw..(o + 1) * hw];
        for i in 0..ci {
            let gin_i = &mut gin[i * hw..(i + 1) * hw];
            let k = &weight[(o * ci + i) * 9..(o * ci + i + 1) * 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(w, dx);
                    let kv = k[ky * 3 + kx];
                    for y in y0..y1 {
                        let dst_row = ((y as isize + dy) as usize) * w;
                        let dst = &mut gin_i[(dst_row as isize + x0 as isize + dx) as usize..(dst_row as isize + x1 as isize + dx) as usize];
                        let g = &g_o[y * w + x0..y * w + x1];
                        for (d, &s) in dst.iter_mut().zip(g) {
                            *d += kv * s;
                        }
                    }
                }
            }
        }
    }
    Some(gin)
}

/// 1×1 convolution to a single output channel. `weight` is `[1, ci, 1, 1]`.
pub fn conv1x1_single<S: Scalar>(input: &[S], ci: usize, hw: usize, weight: &[S], bias: S) -> Vec<S> {
    let mut out = vec![bias; hw];
    for i in 0..ci {
        let k = weight[i];
        for (d, &s) in out.iter_mut().zip(&input[i * hw..(i + 1) * hw]) {
            *d += k * s;
        }
    }
    out
}

pub fn conv1x1_single_backward<S: Scalar>(
    input: &[S],
    ci: usize,
    hw: usize,
    weight: &[S],
    grad_out: &[S],
    params: Option<(&mut [S], &mut [S])>,
) -> Vec<S> {
    if let Some((gw, gb)) = params {
        gb[0] += grad_out.iter().fold(S::zero(), |a, &b| a + b);
        for i in 0..ci {
            gw[i] += grad_out.iter().zip(&input[i * hw..(i + 1) * hw]).fold(S::zero(), |a, (&p, &q)| a + p * q);
        }
    }
    let mut gin = vec![S::zero(); ci * hw];
    for i in 0..ci {
        let k = weight[i];
        for (d, &g) in gin[i * hw..(i + 1) * hw].iter_mut().zip(grad_out) {
            *d = k * g;
        }
    }
    gin
}

/// 2×2 pooling with stride 2. Returns the pooled map and, for max pooling,
/// the flat arg-max index of each output.
pub fn pool2<S: Scalar>(kind: Pooling, input: &[S], c: usize, h: usize, w: usize) -> (Vec<S>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::new();
    let quarter = S::lit(0.25);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let cands = [
                    base + 2 * y * w + 2 * x,
                    base + 2 * y * w + 2 * x + 1,
                    base + (2 * y + 1) * w + 2 * x,
                    base + (2 * y + 1) * w + 2 * x + 1,
                ];
                match kind {
                    Pooling::Max => {
                        let mut best = cands[0];
                        for &k in &cands[1..] {
                            if input[k] > input[best] {
                                best = k;
                            }
                        }
                        out.push(input[best]);
                        idx.push(best as u32);
                    }
                    Pooling::Avg => {
                        out.push((input[cands[0]] + input[cands[1]] + input[cands[2]] + input[cands[3]]) * quarter);
                    }
                }
            }
        }
    }
    (out, idx)
}

pub fn pool2_backward<S: Scalar>(kind: Pooling, grad_out: &[S], argmax: &[u32], c: usize, h: usize, w: usize) -> Vec<S> {
    let mut gin = vec![S::zero(); c * h * w];
    match kind {
        Pooling::Max => {
            for (&g, &i) in grad_out.iter().zip(argmax) {
                gin[i as usize] += g;
            }
        }
        Pooling::Avg => {
            let (oh, ow) = (h / 2, w / 2);
            let quarter = S::lit(0.25);
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let g = grad_out[(ch * oh + y) * ow + x] * quarter;
                        let base = ch * h * w;
                        gin[base + 2 * y * w + 2 * x] += g;
                        gin[base + 2 * y * w + 2 * x + 1] += g;
                        gin[base + (2 * y + 1) * w + 2 * x] += g;
                        gin[base + (2 * y + 1) * w + 2 * x + 1] += g;
                    }
                }
            }
        }
    }
    gin
}

/// Transposed 2×2 convolution with stride 2 (doubles the spatial size).
/// `weight` is `[ci, co, 2, 2]`.
pub fn upconv2x2<S: Scalar>(input: &[S], ci: usize, h: usize, w: usize, weight: &[S], bias: &[S], co: usize) -> Vec<S> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![S::zero(); co * oh * ow];
    for o in 0..co {
        out[o * oh * ow..(o + 1) * oh * ow].fill(bias[o]);
    }
    for i in 0..ci {
        let in_i = &input[i * h * w..(i + 1) * h * w];
        for o in 0..co {
            let k = &weight[(i * co + o) * 4..(i * co + o + 1) * 4];
            let out_o = &mut out[o * oh * ow..(o + 1) * oh * ow];
            for y in 0..h {
                let src = &in_i[y * w..(y + 1) * w];
                for a in 0..2 {
                    let row = &mut out_o[(2 * y + a) * ow..(2 * y + a + 1) * ow];
                    let (k0, k1) = (k[2 * a], k[2 * a + 1]);
                    for (pair, &s) in row.chunks_exact_mut(2).zip(src) {
                        pair[0] += k0 * s;
                        pair[1] += k1 * s;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn upconv2x2_backward<S: Scalar>(
    input: &[S],
    ci: usize,
    h: usize,
    w: usize,
    weight: &[S],
    co: usize,
    grad_out: &[S],
    params: Option<(&mut [S], &mut [S])>,
) -> Vec<S> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut params = params;
    if let Some((_, gb)) = params.as_mut() {
        for o in 0..co {
            gb[o] += grad_out[o * oh * ow..(o + 1) * oh * ow].iter().fold(S::zero(), |a, &b| a + b);
        }
    }
    let mut gin = vec![S::zero(); ci * h * w];
    for i in 0..ci {
        let in_i = &input[i * h * w..(i + 1) * h * w];
        for o in 0..co {
            let base = (i * co + o) * 4;
            let k = &weight[base..base + 4];
            let g_o = &grad_out[o * oh * ow..(o + 1) * oh * ow];
            let mut acc = [S::zero(); 4];
            let gin_i = &mut gin[i * h * w..(i + 1) * h * w];
            for y in 0..h {
                let src = &in_i[y * w..(y + 1) * w];
                let dst = &mut gin_i[y * w..(y + 1) * w];
                for a in 0..2 {
                    let row = &g_o[(2 * y + a) * ow..(2 * y + a + 1) * ow];
                    let (k0, k1) = (k[2 * a], k[2 * a + 1]);
                    for ((pair, &s), d) in row.chunks_exact(2).zip(src).zip(dst.iter_mut()) {
                        acc[2 * a] += pair[0] * s;
                        acc[2 * a + 1] += pair[1] * s;
                        *d += k0 * pair[0] + k1 * pair[1];
                    }
                }
            }
            if let Some((gw, _)) = params.as_mut() {
                for (t, v) in acc.iter().enumerate() {
                    gw[base + t] += *v;
                }
            }
        }
    }
    gin
}
