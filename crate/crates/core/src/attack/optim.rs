//! First-order optimizers over a flat parameter vector.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, z: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..z.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            z[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with an Armijo backtracking line search.
#[derive(Debug, Clone)]
pub(crate) struct Lbfgs {
    history: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

pub(crate) struct LineResult {
    pub z: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
}

impl Lbfgs {
    pub fn new(history: usize) -> Self {
        Lbfgs { history, pairs: VecDeque::new() }
    }

    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match self.pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0,
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// One iteration from `(z, f, grad)`. `eval` returns the objective and
    /// gradient at a point; `project` maps trial points into the feasible set.
    /// Returns `None` when no decrease was found.
    pub fn step(
        &mut self,
        z: &[f64],
        f: f64,
        grad: &[f64],
        lr: f64,
        mut eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
        project: impl Fn(&mut [f64]),
    ) -> Option<LineResult> {
        let mut d = self.direction(grad);
        let mut slope = dot(grad, &d);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            self.pairs.clear();
            d = grad.iter().map(|g| -g).collect();
            slope = -dot(grad, grad);
        }
        let mut t = if self.pairs.is_empty() { lr / dot(&d, &d).sqrt().max(1e-300) } else { 1.0 };
        for _ in 0..30 {
            let mut trial: Vec<f64> = z.iter().zip(&d).map(|(zi, di)| zi + t * di).collect();
            project(&mut trial);
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                let s: Vec<f64> = trial.iter().zip(z).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gt.iter().zip(grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if self.pairs.len() == self.history {
                        self.pairs.pop_front();
                    }
                    self.pairs.push_back((s, y, 1.0 / sy));
                }
                return Some(LineResult { z: trial, f: ft, grad: gt });
            }
            t *= 0.5;
        }
        self.pairs.clear();
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // f(z) = Σ cᵢ (zᵢ − 1)², minimum at all-ones
    fn quad(z: &[f64]) -> (f64, Vec<f64>) {
        let c = |i: usize| 1.0 + i as f64;
        let f = z.iter().enumerate().map(|(i, v)| c(i) * (v - 1.0).powi(2)).sum();
        let g = z.iter().enumerate().map(|(i, v)| 2.0 * c(i) * (v - 1.0)).collect();
        (f, g)
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut z = vec![0.0; 4];
        let mut opt = Adam::new(4);
        for _ in 0..2000 {
            let (_, g) = quad(&z);
            opt.step(&mut z, &g, 0.01);
        }
        assert!(z.iter().all(|v| (v - 1.0).abs() < 1e-3), "{z:?}");
    }

    #[test]
    fn lbfgs_minimizes_quadratic_fast() {
        let mut z = vec![0.0; 6];
        let (mut f, mut g) = quad(&z);
        let mut opt = Lbfgs::new(10);
        for _ in 0..30 {
            match opt.step(&z, f, &g, 0.1, quad, |_| {}) {
                Some(r) => {
                    z = r.z;
                    f = r.f;
                    g = r.grad;
                }
                None => break,
            }
        }
        assert!(f < 1e-12, "{f}");
    }
}
