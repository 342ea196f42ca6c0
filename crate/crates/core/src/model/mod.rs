//! Segmentation models, the binary cross-entropy training loss and the
//! weight/gradient containers exchanged by the federated protocol.

mod layers;
mod snapshot;
mod toy;
mod unet;
mod weights;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{LayoutMask, SemSample};
use crate::error::{invalid, shape, Error, Result};
use crate::grid::Grid;
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::seed;

pub use layers::{Activation, Pooling};
pub use snapshot::{decode_snapshot, encode_snapshot, read_snapshot, snapshot_digest, weights_digest, write_snapshot, SnapshotHeader};
pub use toy::ToyLinear;
pub use unet::UNet;
pub use weights::{GradientEstimate, ModelWeights, ParamTensor, Provenance};
pub(crate) use weights::validate_lr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Unet,
    ToyLinear,
}

fn default_depth() -> usize {
    4
}

fn default_base() -> usize {
    16
}

/// Architecture description. Input is a single-channel `height × width`
/// image; output is a per-pixel foreground probability map of the same size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_base")]
    pub base_channels: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub pooling: Pooling,
}

impl ModelSpec {
    pub fn unet(height: usize, width: usize, depth: usize, base_channels: usize) -> Self {
        ModelSpec {
            architecture: Architecture::Unet,
            height,
            width,
            depth,
            base_channels,
            activation: Activation::default(),
            pooling: Pooling::default(),
        }
    }

    pub fn toy_linear(height: usize, width: usize) -> Self {
        ModelSpec { architecture: Architecture::ToyLinear, height, width, depth: 0, base_channels: 0, ..Self::unet(height, width, 0, 0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(invalid("model input dimensions must be positive"));
        }
        if self.architecture == Architecture::Unet {
            if self.depth == 0 || self.base_channels == 0 {
                return Err(invalid("U-Net depth and base_channels must be positive"));
            }
            let k = 1usize << self.depth;
            if self.height % k != 0 || self.width % k != 0 {
                return Err(invalid(format!(
                    "input {}x{} is not divisible by 2^{} = {k}",
                    self.height, self.width, self.depth
                )));
            }
        }
        Ok(())
    }

    /// Identifier shared by every weight set of this architecture.
    pub fn tag(&self) -> String {
        match self.architecture {
            Architecture::Unet => format!(
                "unet-d{}-c{}-{}x{}-{}-{}",
                self.depth,
                self.base_channels,
                self.height,
                self.width,
                self.activation.name(),
                self.pooling.name()
            ),
            Architecture::ToyLinear => format!("toy_linear-{}x{}", self.height, self.width),
        }
    }
}

#[derive(Debug, Clone)]
enum Arch {
    Unet(UNet),
    Toy(ToyLinear),
}

/// An instantiated architecture: knows the parameter layout and runs
/// forward/backward passes for any scalar type.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    arch: Arch,
}

/// Which gradients a [`Network::sample_pass`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub params: bool,
    pub input: bool,
}

/// Loss and requested gradients for one `(image, mask)` pair.
#[derive(Debug, Clone)]
pub struct SamplePass<S> {
    pub loss: S,
    /// Aligned with the parameter layout; empty unless requested.
    pub param_grads: Vec<Vec<S>>,
    /// d loss / d image; empty unless requested.
    pub input_grad: Vec<S>,
    /// d loss / d mask (the mask treated as soft labels); empty unless requested.
    pub mask_grad: Vec<S>,
}

impl Network {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let arch = match spec.architecture {
            Architecture::Unet => Arch::Unet(UNet::new(
                spec.height,
                spec.width,
                spec.depth,
                spec.base_channels,
                spec.activation,
                spec.pooling,
            )),
            Architecture::ToyLinear => Arch::Toy(ToyLinear::new(spec.height, spec.width)),
        };
        Ok(Network { spec: spec.clone(), arch })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn tag(&self) -> String {
        self.spec.tag()
    }

    pub fn pixels(&self) -> usize {
        self.spec.height * self.spec.width
    }

    pub fn layout(&self) -> &[(String, Vec<usize>)] {
        match &self.arch {
            Arch::Unet(u) => u.layout(),
            Arch::Toy(t) => t.layout(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Fan-in scaled normal weights, zero biases.
    pub fn init(&self, seed: u64) -> ModelWeights<f64> {
        let mut rng = seed::rng(seed);
        let entries = self
            .layout()
            .iter()
            .enumerate()
            .map(|(i, (name, shape))| {
                let mut t = ParamTensor::zeros(name.clone(), shape.clone());
                if shape.len() > 1 {
                    let (gain, fan_in) = match &self.arch {
                        Arch::Unet(u) if name.starts_with("head") => (1.0, u.fan_in(i)),
                        Arch::Unet(u) => (self.spec.activation.init_gain(), u.fan_in(i)),
                        Arch::Toy(_) => (1.0, shape[1]),
                    };
                    let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
                    t.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                }
                t
            })
            .collect();
        ModelWeights { model_tag: self.tag(), version: 0, entries }
    }

    pub fn check_weights<S: Scalar>(&self, weights: &ModelWeights<S>) -> Result<()> {
        if weights.model_tag != self.tag() {
            return Err(shape(format!("weights are for `{}`, network is `{}`", weights.model_tag, self.tag())));
        }
        let layout = self.layout();
        if layout.len() != weights.entries.len()
            || layout.iter().zip(&weights.entries).any(|((n, s), e)| n != &e.name || s != &e.shape || e.data.len() != s.iter().product::<usize>())
        {
            return Err(shape(format!("weight layout does not match `{}`", self.tag())));
        }
        Ok(())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.pixels() {
            return Err(shape(format!("input has {len} pixels, model expects {}x{}", self.spec.height, self.spec.width)));
        }
        Ok(())
    }

    /// Per-pixel logits for `image` (row-major, `height·width` values).
    pub fn logits<S: Scalar>(&self, weights: &ModelWeights<S>, image: &[S]) -> Result<Vec<S>> {
        self.check_weights(weights)?;
        self.check_input(image.len())?;
        Ok(match &self.arch {
            Arch::Unet(u) => u.forward_trace(&weights.entries, image).logits,
            Arch::Toy(t) => t.forward(&weights.entries, image),
        })
    }

    /// Foreground probability map.
    pub fn forward<S: Scalar>(&self, weights: &ModelWeights<S>, image: &Grid<S>) -> Result<Grid<S>> {
        let logits = self.logits(weights, image.as_slice())?;
        Grid::new(self.spec.height, self.spec.width, logits.into_iter().map(sigmoid).collect())
    }

    /// Mean-per-pixel binary cross-entropy of one sample, scaled by `scale`,
    /// with the requested gradients. No validation; callers check shapes.
    pub fn sample_pass<S: Scalar>(&self, params: &[ParamTensor<S>], image: &[S], mask: &[S], scale: S, want: Want) -> SamplePass<S> {
        let n = S::lit(self.pixels() as f64);
        let k = scale / n;
        let (logits, trace) = match &self.arch {
            Arch::Unet(u) => {
                let mut tr = u.forward_trace(params, image);
                (std::mem::take(&mut tr.logits), Some(tr))
            }
            Arch::Toy(t) => (t.forward(params, image), None),
        };
        let mut loss = S::zero();
        let mut dlogits = Vec::with_capacity(logits.len());
        let mut mask_grad = Vec::new();
        if want.input {
            mask_grad.reserve(logits.len());
        }
        for (&z, &m) in logits.iter().zip(mask) {
            loss += softplus(z) - m * z;
            dlogits.push((sigmoid(z) - m) * k);
            if want.input {
                mask_grad.push(-z * k);
            }
        }
        loss *= k;

        let mut param_grads: Vec<Vec<S>> = if want.params {
            params.iter().map(|p| vec![S::zero(); p.data.len()]).collect()
        } else {
            Vec::new()
        };
        let grads = if want.params { Some(param_grads.as_mut_slice()) } else { None };
        let input_grad = match (&self.arch, trace) {
            (Arch::Unet(u), Some(tr)) => u.backward(params, &tr, &dlogits, grads, want.input),
            (Arch::Toy(t), _) => t.backward(params, image, &logits, &dlogits, grads, want.input),
            _ => unreachable!(),
        }
        .unwrap_or_default();
        SamplePass { loss, param_grads, input_grad, mask_grad }
    }

    /// Mean loss and gradient over `batch`.
    pub fn loss_and_gradients(&self, weights: &ModelWeights<f64>, batch: &[&SemSample]) -> Result<(f64, GradientEstimate<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("gradient batch"));
        }
        self.check_weights(weights)?;
        let scale = 1.0 / batch.len() as f64;
        let mut acc: Vec<Vec<f64>> = weights.entries.iter().map(|e| vec![0.0; e.data.len()]).collect();
        let mut loss = 0.0;
        for s in batch {
            self.check_input(s.image.len())?;
            if s.mask.dims() != s.image.dims() {
                return Err(shape("sample mask and image differ"));
            }
            let mask: Vec<f64> = s.mask.pixels().iter().map(|&p| f64::from(p)).collect();
            let pass = self.sample_pass(&weights.entries, s.image.as_slice(), &mask, scale, Want { params: true, input: false });
            loss += pass.loss;
            for (a, g) in acc.iter_mut().zip(pass.param_grads) {
                for (x, y) in a.iter_mut().zip(g) {
                    *x += y;
                }
            }
        }
        let entries = weights
            .entries
            .iter()
            .zip(acc)
            .map(|(e, data)| ParamTensor { name: e.name.clone(), shape: e.shape.clone(), data })
            .collect();
        Ok((loss, GradientEstimate::captured(entries)))
    }
}

/// Build a network and its deterministic initial weights.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<(Network, ModelWeights<f64>)> {
    let net = Network::new(spec)?;
    let w = net.init(seed);
    Ok((net, w))
}

/// Exact gradient of the mean segmentation loss over `batch`.
pub fn compute_gradients(net: &Network, weights: &ModelWeights<f64>, batch: &[SemSample]) -> Result<GradientEstimate<f64>> {
    let refs: Vec<&SemSample> = batch.iter().collect();
    net.loss_and_gradients(weights, &refs).map(|(_, g)| g)
}

const PROB_EPS: f64 = 1e-7;

/// Mean per-pixel binary cross-entropy of a probability map against a mask.
/// Probabilities are clamped to `[1e-7, 1 − 1e-7]`.
pub fn segmentation_loss<S: Scalar>(pred: &Grid<S>, mask: &LayoutMask) -> Result<f64> {
    if pred.dims() != mask.dims() {
        return Err(shape("prediction and mask dimensions differ"));
    }
    let total: f64 = pred
        .as_slice()
        .iter()
        .zip(mask.pixels())
        .map(|(p, &m)| {
            let p = p.re().clamp(PROB_EPS, 1.0 - PROB_EPS);
            if m == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests;
