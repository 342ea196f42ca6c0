//! Normalization-free U-Net: each stage is two 3×3 conv + activation layers,
//! 2×2 pooling on the way down, stride-2 transposed convs on the way up,
//! skip concatenation and a 1×1 head producing one logit per pixel.

use super::layers::{
    conv1x1_single, conv1x1_single_backward, conv3x3, conv3x3_backward, pool2, pool2_backward, upconv2x2,
    upconv2x2_backward, Activation, Pooling,
};
use super::weights::ParamTensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    c1: Conv,
    c2: Conv,
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    pub base: usize,
    pub activation: Activation,
    pub pooling: Pooling,
    enc: Vec<Block>,
    bottleneck: Block,
    up: Vec<Conv>,
    dec: Vec<Block>,
    head: Conv,
    layout: Vec<(String, Vec<usize>)>,
}

struct BlockTrace<S> {
    input: Vec<S>,
    a1: Vec<S>,
    a2: Vec<S>,
    h: usize,
    w: usize,
}

pub(crate) struct Trace<S> {
    enc: Vec<BlockTrace<S>>,
    argmax: Vec<Vec<u32>>,
    bottleneck: BlockTrace<S>,
    dec: Vec<BlockTrace<S>>,
    pub logits: Vec<S>,
}

impl UNet {
    pub fn new(height: usize, width: usize, depth: usize, base: usize, activation: Activation, pooling: Pooling) -> Self {
        let mut layout = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| {
            layout.push((name, shape));
            layout.len() - 1
        };
        let mut conv = |prefix: String, cin: usize, cout: usize, k: usize| Conv {
            w: push(format!("{prefix}.weight"), if k == 2 { vec![cin, cout, 2, 2] } else { vec![cout, cin, k, k] }),
            b: push(format!("{prefix}.bias"), vec![cout]),
            cin,
            cout,
        };
        let ch = |l: usize| base << l;
        let mut enc = Vec::with_capacity(depth);
        for l in 0..depth {
            let cin = if l == 0 { 1 } else { ch(l - 1) };
            let c1 = conv(format!("enc{l}.conv1"), cin, ch(l), 3);
            let c2 = conv(format!("enc{l}.conv2"), ch(l), ch(l), 3);
            enc.push(Block { c1, c2 });
        }
        let bottleneck = Block {
            c1: conv("bottleneck.conv1".into(), ch(depth - 1), ch(depth), 3),
            c2: conv("bottleneck.conv2".into(), ch(depth), ch(depth), 3),
        };
        let mut up = vec![None; depth];
        let mut dec = vec![None; depth];
        for l in (0..depth).rev() {
            up[l] = Some(conv(format!("up{l}"), ch(l + 1), ch(l), 2));
            let c1 = conv(format!("dec{l}.conv1"), 2 * ch(l), ch(l), 3);
            let c2 = conv(format!("dec{l}.conv2"), ch(l), ch(l), 3);
            dec[l] = Some(Block { c1, c2 });
        }
        let head = conv("head".into(), ch(0), 1, 1);
        UNet {
            height,
            width,
            depth,
            base,
            activation,
            pooling,
            enc,
            bottleneck,
            up: up.into_iter().map(Option::unwrap).collect(),
            dec: dec.into_iter().map(Option::unwrap).collect(),
            head,
            layout,
        }
    }

    pub fn layout(&self) -> &[(String, Vec<usize>)] {
        &self.layout
    }

    /// Fan-in of each parameter tensor, for initialization.
    pub fn fan_in(&self, index: usize) -> usize {
        let shape = &self.layout[index].1;
        match shape.len() {
            4 if shape[2] == 2 => shape[0],
            4 => shape[1] * shape[2] * shape[3],
            _ => 1,
        }
    }

    fn block_forward<S: Scalar>(&self, p: &[ParamTensor<S>], b: &Block, input: Vec<S>, h: usize, w: usize) -> BlockTrace<S> {
        let mut a1 = conv3x3(&input, b.c1.cin, h, w, &p[b.c1.w].data, &p[b.c1.b].data, b.c1.cout);
        self.activation.apply(&mut a1);
        let mut a2 = conv3x3(&a1, b.c2.cin, h, w, &p[b.c2.w].data, &p[b.c2.b].data, b.c2.cout);
        self.activation.apply(&mut a2);
        BlockTrace { input, a1, a2, h, w }
    }

    pub(crate) fn forward_trace<S: Scalar>(&self, p: &[ParamTensor<S>], image: &[S]) -> Trace<S> {
        let (mut h, mut w) = (self.height, self.width);
        let mut enc = Vec::with_capacity(self.depth);
        let mut argmax = Vec::with_capacity(self.depth);
        let mut x = image.to_vec();
        for b in &self.enc {
            let t = self.block_forward(p, b, x, h, w);
            let (pooled, idx) = pool2(self.pooling, &t.a2, b.c2.cout, h, w);
            enc.push(t);
            argmax.push(idx);
            x = pooled;
            h /= 2;
            w /= 2;
        }
        let bottleneck = self.block_forward(p, &self.bottleneck, x, h, w);
        let mut dec: Vec<Option<BlockTrace<S>>> = (0..self.depth).map(|_| None).collect();
        for l in (0..self.depth).rev() {
            let below = if l + 1 == self.depth { &bottleneck.a2 } else { &dec[l + 1].as_ref().unwrap().a2 };
            let u = self.up[l];
            let up = upconv2x2(below, u.cin, h, w, &p[u.w].data, &p[u.b].data, u.cout);
            h *= 2;
            w *= 2;
            let mut cat = enc[l].a2.clone();
            cat.extend_from_slice(&up);
            dec[l] = Some(self.block_forward(p, &self.dec[l], cat, h, w));
        }
        let dec: Vec<BlockTrace<S>> = dec.into_iter().map(Option::unwrap).collect();
        let top = &dec[0];
        let logits = conv1x1_single(&top.a2, self.head.cin, h * w, &p[self.head.w].data, p[self.head.b].data[0]);
        Trace { enc, argmax, bottleneck, dec, logits }
    }

    /// Returns the gradient w.r.t. the block input when `want_input`.
    fn block_backward<S: Scalar>(
        &self,
        p: &[ParamTensor<S>],
        grads: &mut Option<&mut [Vec<S>]>,
        b: &Block,
        t: &BlockTrace<S>,
        mut g: Vec<S>,
        want_input: bool,
    ) -> Option<Vec<S>> {
        self.activation.backward(&t.a2, &mut g);
        let mut g1 = conv3x3_backward(&t.a1, b.c2.cin, t.h, t.w, &p[b.c2.w].data, b.c2.cout, &g, param_pair(grads, b.c2), true)
            .expect("requested");
        self.activation.backward(&t.a1, &mut g1);
        conv3x3_backward(&t.input, b.c1.cin, t.h, t.w, &p[b.c1.w].data, b.c1.cout, &g1, param_pair(grads, b.c1), want_input)
    }

    /// Backpropagate `dlogits`. Parameter gradients are accumulated into
    /// `grads` when given; returns the image gradient when `want_input`.
    pub(crate) fn backward<S: Scalar>(
        &self,
        p: &[ParamTensor<S>],
        trace: &Trace<S>,
        dlogits: &[S],
        mut grads: Option<&mut [Vec<S>]>,
        want_input: bool,
    ) -> Option<Vec<S>> {
        let hw = self.height * self.width;
        let top = &trace.dec[0];
        let mut g = conv1x1_single_backward(&top.a2, self.head.cin, hw, &p[self.head.w].data, dlogits, param_pair(&mut grads, self.head));

        // Decoder, top to bottom. `skip_grads[l]` collects the gradient that
        // flows back into encoder level l through the concatenation.
        let mut skip_grads: Vec<Vec<S>> = Vec::with_capacity(self.depth);
        for l in 0..self.depth {
            let t = &trace.dec[l];
            let gcat = self.block_backward(p, &mut grads, &self.dec[l], t, g, true).expect("requested");
            let skip_len = self.enc[l].c2.cout * t.h * t.w;
            let (gskip, gup) = gcat.split_at(skip_len);
            skip_grads.push(gskip.to_vec());
            let u = self.up[l];
            let below = if l + 1 == self.depth { &trace.bottleneck } else { &trace.dec[l + 1] };
            g = upconv2x2_backward(&below.a2, u.cin, below.h, below.w, &p[u.w].data, u.cout, gup, param_pair(&mut grads, u));
        }

        // Bottleneck, then encoder bottom to top.
        let mut g_in = self.block_backward(p, &mut grads, &self.bottleneck, &trace.bottleneck, g, true).expect("requested");
        for l in (0..self.depth).rev() {
            let t = &trace.enc[l];
            let mut ga2 = pool2_backward(self.pooling, &g_in, &trace.argmax[l], self.enc[l].c2.cout, t.h, t.w);
            for (a, b) in ga2.iter_mut().zip(&skip_grads[l]) {
                *a += *b;
            }
            let need = l > 0 || want_input;
            match self.block_backward(p, &mut grads, &self.enc[l], t, ga2, need) {
                Some(gi) => g_in = gi,
                None => return None,
            }
        }
        Some(g_in)
    }
}

fn param_pair<'a, S>(grads: &'a mut Option<&mut [Vec<S>]>, c: Conv) -> Option<(&'a mut [S], &'a mut [S])> {
    let grads = grads.as_deref_mut()?;
    debug_assert!(c.w < c.b);
    let (lo, hi) = grads.split_at_mut(c.b);
    Some((&mut lo[c.w], &mut hi[0]))
}
