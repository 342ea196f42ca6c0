//! Gradient inversion: recover a client's gradient from the weights it sent
//! back, then optimize a dummy image and dummy mask until their gradient
//! matches.
//!
//! The matching objective `f(G(x, m))` needs `∇ₓf = (∂G/∂x)ᵀ v` with
//! `v = ∂f/∂G`. Since `G = ∇θℓ`, that product equals
//! `d/dt ∇ₓℓ(x, m; θ + t·v)` at `t = 0`, which is what one backward pass
//! yields when the weights are the dual numbers `θ + εv`. No reverse-mode
//! tape over the backward pass is needed.

mod gate;
mod optim;

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::datagen::SemSample;
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::metrics::{evaluate_reconstruction, MetricsReport};
use crate::model::{validate_lr, GradientEstimate, ModelWeights, Network, ParamTensor, Provenance, Want};
use crate::scalar::{sigmoid, Dual, Scalar};
use crate::seed;

use optim::{Adam, Lbfgs};

pub use gate::{toy_linear_gate, GateReport, GATE_MAX_MSE, GATE_SIZE};

/// `(old − new)/η`, elementwise.
pub fn recover_gradient<S: Scalar>(old: &ModelWeights<S>, new: &ModelWeights<S>, learning_rate: f64) -> Result<GradientEstimate<S>> {
    validate_lr(learning_rate)?;
    old.ensure_compatible(new)?;
    let inv = S::lit(1.0 / learning_rate);
    let entries = old
        .entries
        .iter()
        .zip(&new.entries)
        .map(|(a, b)| ParamTensor {
            name: a.name.clone(),
            shape: a.shape.clone(),
            data: a.data.iter().zip(&b.data).map(|(&x, &y)| (x - y) * inv).collect(),
        })
        .collect();
    Ok(GradientEstimate { entries, provenance: Provenance::Recovered, learning_rate_used: Some(learning_rate) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingLoss {
    pub value: f64,
    pub mse: f64,
    pub cosine: f64,
    /// One of the gradients had zero norm; the cosine term was taken as 1.
    pub cosine_undefined: bool,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Value and `∂f/∂dummy` of `α·MSE + (1 − α)(1 − cos)` over flat vectors.
fn matching_terms(dummy: &[f64], target: &[f64], alpha: f64, want_grad: bool) -> (MatchingLoss, Vec<f64>) {
    let p = dummy.len() as f64;
    let (mut sq, mut dd, mut tt, mut dt) = (0.0, 0.0, 0.0, 0.0);
    for (&d, &t) in dummy.iter().zip(target) {
        sq += (d - t) * (d - t);
        dd += d * d;
        tt += t * t;
        dt += d * t;
    }
    let mse = sq / p;
    let (nd, nt) = (dd.sqrt(), tt.sqrt());
    let undefined = nd == 0.0 || nt == 0.0;
    let cosine = if undefined { 0.0 } else { dt / (nd * nt) };
    let cs_term = if undefined { 1.0 } else { 1.0 - cosine };
    let value = alpha * mse + (1.0 - alpha) * cs_term;
    let mut grad = Vec::new();
    if want_grad {
        let a = 2.0 * alpha / p;
        let (b, c) = if undefined || alpha == 1.0 { (0.0, 0.0) } else { ((1.0 - alpha) / (nd * nt), (1.0 - alpha) * dt / (nd * nd * nd * nt)) };
        grad = dummy.iter().zip(target).map(|(&d, &t)| a * (d - t) - b * t + c * d).collect();
    }
    (MatchingLoss { value: value.max(0.0), mse, cosine, cosine_undefined: undefined }, grad)
}

/// `α·MSE + (1 − α)(1 − cos)` of the flattened gradients.
pub fn matching_loss<S: Scalar>(dummy: &GradientEstimate<S>, target: &GradientEstimate<S>, alpha: f64) -> Result<MatchingLoss> {
    check_alpha(alpha)?;
    dummy.ensure_aligned(target)?;
    if dummy.is_empty() {
        return Err(Error::Empty("gradient"));
    }
    let d: Vec<f64> = dummy.flat().map(|v| v.re()).collect();
    let t: Vec<f64> = target.flat().map(|v| v.re()).collect();
    Ok(matching_terms(&d, &t, alpha, false).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttackOptimizer {
    #[default]
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DummyInit {
    #[default]
    UniformRandom,
    Gaussian,
    ConstantGray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay to zero over the iteration budget.
    Cosine,
}

fn default_alpha() -> f64 {
    0.5
}
fn default_attack_lr() -> f64 {
    0.1
}
fn default_iterations() -> usize {
    2000
}
fn default_true() -> bool {
    true
}
fn default_snapshot_every() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub optimizer: AttackOptimizer,
    #[serde(default = "default_attack_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub init: DummyInit,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub clamp_inputs: bool,
    /// Keep a copy of the dummy image every this many iterations (0: never).
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Weight of an isotropic total-variation prior on the dummy image.
    #[serde(default)]
    pub tv_strength: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            alpha: default_alpha(),
            optimizer: AttackOptimizer::Adam,
            learning_rate: default_attack_lr(),
            iterations: default_iterations(),
            init: DummyInit::UniformRandom,
            seed: 0,
            clamp_inputs: true,
            snapshot_every: default_snapshot_every(),
            tv_strength: 0.0,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.iterations == 0 {
            return Err(invalid("iterations must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("attack learning_rate must be positive"));
        }
        if !(self.tv_strength >= 0.0) {
            return Err(invalid("tv_strength must be >= 0"));
        }
        Ok(())
    }

    fn lr_at(&self, it: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let p = it as f64 / self.iterations as f64;
                self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSnapshot {
    pub iteration: usize,
    pub loss: f64,
    pub image: Grid<f64>,
    pub mask_logits: Vec<f64>,
}

/// Optimization variables and history of one attack.
#[derive(Debug, Clone)]
pub struct AttackState {
    pub dummy_image: Grid<f64>,
    /// Unconstrained logits; the dummy mask is `σ(mask_logits)`.
    pub mask_logits: Vec<f64>,
    pub iteration: usize,
    pub loss_trace: Vec<f64>,
    pub best: BestSnapshot,
}

impl AttackState {
    pub fn dummy_mask(&self) -> Grid<f64> {
        let (h, w) = self.dummy_image.dims();
        Grid::new(h, w, self.mask_logits.iter().map(|&u| sigmoid(u)).collect()).expect("dims")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AttackStatus {
    Completed,
    Diverged { iteration: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub iteration: usize,
    pub image: Grid<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub alpha: f64,
    pub status: AttackStatus,
    /// Best-loss dummy image, clipped to `[0, 1]`.
    pub image: Grid<f64>,
    /// Best-loss dummy mask probabilities.
    pub mask: Grid<f64>,
    pub target_provenance: Provenance,
    pub final_loss: f64,
    pub best_iteration: usize,
    pub iterations_run: usize,
    pub loss_trace: Vec<f64>,
    pub frames: Vec<Frame>,
    /// Reconstruction metrics against the ground truth, when supplied.
    pub metrics: Option<MetricsReport>,
    /// Same metrics for the unoptimized initial dummy.
    pub baseline_metrics: Option<MetricsReport>,
}

/// Objective and gradient over `z = [image pixels, mask logits]`.
struct Problem<'a> {
    net: &'a Network,
    weights: &'a [ParamTensor<f64>],
    target: Vec<f64>,
    alpha: f64,
    tv: f64,
    h: usize,
    w: usize,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.h * self.w
    }

    fn eval(&self, z: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let n = self.n();
        let (x, u) = z.split_at(n);
        let m: Vec<f64> = u.iter().map(|&v| sigmoid(v)).collect();
        let pass = self.net.sample_pass(self.weights, x, &m, 1.0, Want { params: true, input: false });
        let g: Vec<f64> = pass.param_grads.iter().flatten().copied().collect();
        let (ml, v) = matching_terms(&g, &self.target, self.alpha, want_grad);
        let (tv, tv_grad) = total_variation(x, self.h, self.w, want_grad);
        let f = ml.value + self.tv * tv;
        if !want_grad || !f.is_finite() {
            return (f, Vec::new());
        }

        let mut offset = 0;
        let dual_w: Vec<ParamTensor<Dual<f64>>> = self
            .weights
            .iter()
            .map(|p| {
                let data = p.data.iter().zip(&v[offset..offset + p.data.len()]).map(|(&a, &b)| Dual::new(a, b)).collect();
                offset += p.data.len();
                ParamTensor { name: p.name.clone(), shape: p.shape.clone(), data }
            })
            .collect();
        let xd: Vec<Dual<f64>> = x.iter().map(|&a| Dual::constant(a)).collect();
        let md: Vec<Dual<f64>> = m.iter().map(|&a| Dual::constant(a)).collect();
        let dp = self.net.sample_pass(&dual_w, &xd, &md, Dual::constant(1.0), Want { params: false, input: true });

        let mut grad = Vec::with_capacity(2 * n);
        grad.extend(dp.input_grad.iter().zip(&tv_grad).map(|(d, t)| d.eps + self.tv * t));
        grad.extend(dp.mask_grad.iter().zip(&m).map(|(d, &mi)| d.eps * mi * (1.0 - mi)));
        (f, grad)
    }
}

const TV_EPS: f64 = 1e-8;

/// Mean isotropic total variation (smoothed at the origin) and its gradient.
fn total_variation(x: &[f64], h: usize, w: usize, want_grad: bool) -> (f64, Vec<f64>) {
    let mut grad = if want_grad { vec![0.0; x.len()] } else { Vec::new() };
    let mut total = 0.0;
    let n = ((h - 1) * (w - 1)).max(1) as f64;
    for y in 0..h.saturating_sub(1) {
        for c in 0..w.saturating_sub(1) {
            let i = y * w + c;
            let dx = x[i + 1] - x[i];
            let dy = x[i + w] - x[i];
            let r = (dx * dx + dy * dy + TV_EPS).sqrt();
            total += r;
            if want_grad {
                grad[i + 1] += dx / r / n;
                grad[i + w] += dy / r / n;
                grad[i] -= (dx + dy) / r / n;
            }
        }
    }
    (total / n, grad)
}

fn init_dummy(cfg: &AttackConfig, n: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(cfg.seed, "attack-init"));
    let mut z = vec![0.0; 2 * n];
    match cfg.init {
        DummyInit::UniformRandom => {
            let u = Uniform::new(0.0, 1.0).expect("range");
            z[..n].iter_mut().for_each(|v| *v = u.sample(&mut rng));
        }
        DummyInit::Gaussian => {
            let g = Normal::new(0.5, 0.25).expect("std");
            z[..n].iter_mut().for_each(|v| *v = g.sample(&mut rng));
        }
        DummyInit::ConstantGray => z[..n].iter_mut().for_each(|v| *v = 0.5),
    }
    if cfg.init != DummyInit::ConstantGray {
        let g = Normal::new(0.0, 0.5).expect("std");
        z[n..].iter_mut().for_each(|v| *v = g.sample(&mut rng));
    }
    if cfg.clamp_inputs {
        z[..n].iter_mut().for_each(|v: &mut f64| *v = v.clamp(0.0, 1.0));
    }
    z
}

fn unit_image(h: usize, w: usize, x: &[f64]) -> Grid<f64> {
    Grid::new(h, w, x.iter().map(|v| v.clamp(0.0, 1.0)).collect()).expect("dims")
}

/// Jointly optimize a dummy image and dummy mask so that the model's gradient
/// on them matches `target`. The best-loss iterate is reported.
pub fn run_attack(
    net: &Network,
    weights: &ModelWeights<f64>,
    target: &GradientEstimate<f64>,
    cfg: &AttackConfig,
    ground_truth: Option<&SemSample>,
) -> Result<AttackReport> {
    cfg.validate()?;
    net.check_weights(weights)?;
    weights.ensure_aligned(&target.entries)?;
    let (h, w) = (net.spec().height, net.spec().width);
    if let Some(gt) = ground_truth {
        if gt.dims() != (h, w) {
            return Err(invalid("ground truth dimensions differ from the model input"));
        }
    }
    let problem = Problem { net, weights: &weights.entries, target: target.flatten(), alpha: cfg.alpha, tv: cfg.tv_strength, h, w };
    let n = problem.n();
    let project = |z: &mut [f64]| {
        if cfg.clamp_inputs {
            z[..n].iter_mut().for_each(|v: &mut f64| *v = v.clamp(0.0, 1.0));
        }
    };

    let mut z = init_dummy(cfg, n);
    let initial_image = unit_image(h, w, &z[..n]);
    let (mut f, mut grad) = problem.eval(&z, true);
    let mut state = AttackState {
        dummy_image: Grid::new(h, w, z[..n].to_vec())?,
        mask_logits: z[n..].to_vec(),
        iteration: 0,
        loss_trace: vec![f],
        best: BestSnapshot { iteration: 0, loss: f, image: Grid::new(h, w, z[..n].to_vec())?, mask_logits: z[n..].to_vec() },
    };
    let mut frames = vec![Frame { iteration: 0, image: initial_image.clone() }];
    let mut status = AttackStatus::Completed;
    if !f.is_finite() {
        status = AttackStatus::Diverged { iteration: 0, reason: format!("initial matching loss is {f}") };
    }

    let mut adam = Adam::new(2 * n);
    let mut lbfgs = Lbfgs::new(10);
    while status == AttackStatus::Completed && state.iteration < cfg.iterations {
        let it = state.iteration;
        match cfg.optimizer {
            AttackOptimizer::Adam => {
                adam.step(&mut z, &grad, cfg.lr_at(it));
                project(&mut z);
                (f, grad) = problem.eval(&z, true);
            }
            AttackOptimizer::Lbfgs => match lbfgs.step(&z, f, &grad, cfg.lr_at(it), |p| problem.eval(p, true), project) {
                Some(r) => {
                    z = r.z;
                    f = r.f;
                    grad = r.grad;
                }
                // no decrease along any tried step: converged as far as
                // the line search can tell
                None => break,
            },
        }
        state.iteration += 1;
        state.loss_trace.push(f);
        if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            status = AttackStatus::Diverged { iteration: state.iteration, reason: format!("matching loss became {f}") };
            break;
        }
        if f < state.best.loss {
            state.best = BestSnapshot { iteration: state.iteration, loss: f, image: Grid::new(h, w, z[..n].to_vec())?, mask_logits: z[n..].to_vec() };
        }
        if cfg.snapshot_every > 0 && state.iteration % cfg.snapshot_every == 0 {
            frames.push(Frame { iteration: state.iteration, image: unit_image(h, w, &z[..n]) });
        }
    }
    state.dummy_image = Grid::new(h, w, z[..n].to_vec())?;
    state.mask_logits = z[n..].to_vec();
    if frames.last().map(|f| f.iteration) != Some(state.iteration) {
        frames.push(Frame { iteration: state.iteration, image: unit_image(h, w, &z[..n]) });
    }

    let image = unit_image(h, w, state.best.image.as_slice());
    let mask = Grid::new(h, w, state.best.mask_logits.iter().map(|&u| sigmoid(u)).collect())?;
    let (metrics, baseline_metrics) = match ground_truth {
        Some(gt) => (Some(evaluate_reconstruction(&image, gt)?), Some(evaluate_reconstruction(&initial_image, gt)?)),
        None => (None, None),
    };
    Ok(AttackReport {
        alpha: cfg.alpha,
        status,
        image,
        mask,
        target_provenance: target.provenance,
        final_loss: state.best.loss,
        best_iteration: state.best.iteration,
        iterations_run: state.iteration,
        loss_trace: state.loss_trace,
        frames,
        metrics,
        baseline_metrics,
    })
}

/// One attack per α with the same seed. Sorted best first: by SSIM then PSNR
/// when ground truth is available, else by final matching loss.
pub fn sweep_alpha(
    net: &Network,
    weights: &ModelWeights<f64>,
    target: &GradientEstimate<f64>,
    cfg: &AttackConfig,
    ground_truth: Option<&SemSample>,
    alphas: &[f64],
) -> Result<Vec<AttackReport>> {
    let mut reports = alphas
        .iter()
        .map(|&alpha| run_attack(net, weights, target, &AttackConfig { alpha, ..cfg.clone() }, ground_truth))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| match (&a.metrics, &b.metrics) {
        (Some(x), Some(y)) => y.ssim.total_cmp(&x.ssim).then(y.psnr.total_cmp(&x.psnr)),
        _ => a.final_loss.total_cmp(&b.final_loss),
    });
    Ok(reports)
}
