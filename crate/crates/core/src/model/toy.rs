use super::weights::ParamTensor;
use crate::scalar::Scalar;

/// One dense layer from the flattened image to one logit per pixel.
///
/// For a single sample the weight gradient is `δ·xᵀ` and the bias gradient
/// is `δ`, so the input can be read back exactly from one gradient.
#[derive(Debug, Clone)]
pub struct ToyLinear {
    n: usize,
    layout: Vec<(String, Vec<usize>)>,
}

impl ToyLinear {
    pub fn new(height: usize, width: usize) -> Self {
        let n = height * width;
        ToyLinear { n, layout: vec![("dense.weight".into(), vec![n, n]), ("dense.bias".into(), vec![n])] }
    }

    pub fn layout(&self) -> &[(String, Vec<usize>)] {
        &self.layout
    }

    pub fn forward<S: Scalar>(&self, p: &[ParamTensor<S>], x: &[S]) -> Vec<S> {
        let (w, b) = (&p[0].data, &p[1].data);
        (0..self.n)
            .map(|i| w[i * self.n..(i + 1) * self.n].iter().zip(x).fold(b[i], |a, (&wij, &xj)| a + wij * xj))
            .collect()
    }

    pub fn backward<S: Scalar>(
        &self,
        p: &[ParamTensor<S>],
        x: &[S],
        _logits: &[S],
        dlogits: &[S],
        grads: Option<&mut [Vec<S>]>,
        want_input: bool,
    ) -> Option<Vec<S>> {
        let n = self.n;
        if let Some(g) = grads {
            let (gw, gb) = g.split_at_mut(1);
            for i in 0..n {
                let d = dlogits[i];
                gb[0][i] += d;
                for (gij, &xj) in gw[0][i * n..(i + 1) * n].iter_mut().zip(x) {
                    *gij += d * xj;
                }
            }
        }
        if !want_input {
            return None;
        }
        let w = &p[0].data;
        let mut gx = vec![S::zero(); n];
        for i in 0..n {
            let d = dlogits[i];
            for (g, &wij) in gx.iter_mut().zip(&w[i * n..(i + 1) * n]) {
                *g += d * wij;
            }
        }
        Some(gx)
    }
}
