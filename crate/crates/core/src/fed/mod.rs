//! Centralized baselines and FedAvg over simulated clients.
//!
//! One round is `local_epochs` passes over the local data, for a client and
//! for the centralized trainer alike. Epoch `e` of a data stream is shuffled
//! with `derive_indexed(derive(seed, "shuffle:<owner>"), "epoch", e)`, so a
//! one-client federation replays exactly the minibatches of centralized
//! training on the same data.

mod record;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{ClientDataset, SemSample};
use crate::error::{invalid, Error, Result};
use crate::metrics::{evaluate_segmentation, DEFAULT_THRESHOLD};
use crate::model::{build_model, weights_digest, ModelSpec, ModelWeights, Network, ParamTensor, Want};
use crate::scalar::Scalar;
use crate::seed;

pub use record::{ClientUpdate, HoldoutMetrics, RoundRecord, RoundTiming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    SgdMomentum,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_participation() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub rounds: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    /// Only read for `sgd_momentum`. The velocity restarts every round.
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub seed: u64,
    /// Fraction of clients drawn each round.
    #[serde(default = "default_participation")]
    pub participation: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            local_epochs: 1,
            batch_size: 2,
            rounds: 100,
            optimizer: OptimizerKind::Sgd,
            momentum: default_momentum(),
            seed: 0,
            participation: 1.0,
        }
    }
}

impl TrainConfig {
    /// A learning rate of 0 is accepted (it freezes the model).
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.local_epochs == 0 || self.batch_size == 0 || self.rounds == 0 {
            return Err(invalid("local_epochs, batch_size and rounds must be >= 1"));
        }
        if self.optimizer == OptimizerKind::SgdMomentum && !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(invalid(format!("participation must lie in (0, 1], got {}", self.participation)));
        }
        Ok(())
    }

    /// Whether one round on `samples` local images is a single full-batch
    /// plain-SGD step, so that `(old − new)/η` is the exact gradient.
    pub fn exact_step_for(&self, samples: usize) -> bool {
        self.optimizer == OptimizerKind::Sgd && self.local_epochs == 1 && self.batch_size >= samples && self.learning_rate > 0.0
    }

    /// Validation for runs whose snapshots will be attacked.
    pub fn validate_attack_compatible(&self, client_sizes: &[usize]) -> Result<()> {
        self.validate()?;
        if self.optimizer != OptimizerKind::Sgd {
            return Err(invalid("attack-compatible runs need plain sgd: momentum mixes earlier gradients into the update"));
        }
        if self.learning_rate == 0.0 {
            return Err(invalid("attack-compatible runs need learning_rate > 0"));
        }
        if self.local_epochs != 1 {
            return Err(invalid("attack-compatible runs need local_epochs = 1"));
        }
        if let Some(&n) = client_sizes.iter().find(|&&n| n > self.batch_size) {
            return Err(invalid(format!(
                "attack-compatible runs need full-batch steps: a client holds {n} samples but batch_size is {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Which rounds' (before, after) pairs a client keeps in memory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LogPolicy {
    #[default]
    None,
    Rounds(Vec<usize>),
    All,
}

impl LogPolicy {
    fn wants(&self, round: usize) -> bool {
        match self {
            LogPolicy::None => false,
            LogPolicy::Rounds(r) => r.contains(&round),
            LogPolicy::All => true,
        }
    }
}

/// The weights a client received and the weights it sent back in a round:
/// exactly what an honest-but-curious server observes.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePair {
    pub round: usize,
    pub before: ModelWeights<f64>,
    pub after: ModelWeights<f64>,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: String,
    pub dataset: ClientDataset,
    pub local_weights: Option<ModelWeights<f64>>,
    pub update_log: Vec<UpdatePair>,
    pub log_policy: LogPolicy,
    epochs_done: usize,
}

impl ClientState {
    /// The client id is the dataset owner.
    pub fn new(dataset: ClientDataset) -> Self {
        ClientState {
            client_id: dataset.owner.clone(),
            dataset,
            local_weights: None,
            update_log: Vec::new(),
            log_policy: LogPolicy::None,
            epochs_done: 0,
        }
    }

    pub fn with_log_policy(mut self, policy: LogPolicy) -> Self {
        self.log_policy = policy;
        self
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }
}

fn stream_seed(cfg: &TrainConfig, owner: &str) -> u64 {
    seed::derive(cfg.seed, &format!("shuffle:{owner}"))
}

/// Initial-weight seed of every run with this configuration.
pub fn init_seed(cfg: &TrainConfig) -> u64 {
    seed::derive(cfg.seed, "model-init")
}

/// `local_epochs` epochs of minibatch descent starting from `weights`.
/// Returns the mean minibatch loss.
fn train_epochs(
    net: &Network,
    weights: &mut ModelWeights<f64>,
    data: &[SemSample],
    cfg: &TrainConfig,
    stream: u64,
    first_epoch: usize,
) -> Result<f64> {
    let mut velocity: Option<Vec<ParamTensor<f64>>> = None;
    let (mut loss_sum, mut steps) = (0.0, 0usize);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for e in 0..cfg.local_epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_indexed(stream, "epoch", (first_epoch + e) as u64)));
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SemSample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grad) = net.loss_and_gradients(weights, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("training loss became {loss}")));
            }
            loss_sum += loss;
            steps += 1;
            match cfg.optimizer {
                OptimizerKind::Sgd => weights.axpy(-cfg.learning_rate, &grad.entries)?,
                OptimizerKind::SgdMomentum => {
                    let v = velocity.get_or_insert_with(|| grad.entries.iter().map(|g| ParamTensor::zeros(g.name.clone(), g.shape.clone())).collect());
                    for (vt, gt) in v.iter_mut().zip(&grad.entries) {
                        for (a, &b) in vt.data.iter_mut().zip(&gt.data) {
                            *a = cfg.momentum * *a + b;
                        }
                    }
                    weights.axpy(-cfg.learning_rate, v)?;
                }
            }
        }
    }
    Ok(loss_sum / steps as f64)
}

/// Train the client's copy of `global` for one round and return it.
pub fn local_update(net: &Network, state: &mut ClientState, global: &ModelWeights<f64>, cfg: &TrainConfig, round: usize) -> Result<(ModelWeights<f64>, f64)> {
    if state.dataset.is_empty() {
        return Err(Error::Empty("client dataset"));
    }
    net.check_weights(global)?;
    let mut w = global.clone();
    let loss = train_epochs(net, &mut w, &state.dataset.samples, cfg, stream_seed(cfg, &state.client_id), state.epochs_done)?;
    state.epochs_done += cfg.local_epochs;
    w.version = global.version + 1;
    if state.log_policy.wants(round) {
        state.update_log.push(UpdatePair { round, before: global.clone(), after: w.clone() });
    }
    state.local_weights = Some(w.clone());
    Ok((w, loss))
}

/// Sample-count weighted mean of client weights, summed in the given order:
/// `w₀ + Σ (nᵢ/N)(wᵢ − w₀)`. Identical inputs therefore average to
/// themselves exactly.
pub fn fedavg_aggregate<S: Scalar>(updates: &[(&ModelWeights<S>, usize)]) -> Result<ModelWeights<S>> {
    let (first, _) = updates.first().ok_or(Error::Empty("aggregation input"))?;
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(invalid("aggregation needs a positive total sample count"));
    }
    for (w, _) in &updates[1..] {
        first.ensure_compatible(w)?;
    }
    let mut out = (*first).clone();
    for (w, n) in &updates[1..] {
        let k = S::lit(*n as f64 / total as f64);
        for (o, (e, f)) in out.entries.iter_mut().zip(w.entries.iter().zip(&first.entries)) {
            for (a, (&b, &c)) in o.data.iter_mut().zip(e.data.iter().zip(&f.data)) {
                *a += k * (b - c);
            }
        }
    }
    Ok(out)
}

/// Hold-out data and the threshold used to binarize predictions on it.
#[derive(Debug, Clone, Copy)]
pub struct Holdout<'a> {
    pub data: &'a ClientDataset,
    pub threshold: f64,
}

impl<'a> Holdout<'a> {
    pub fn new(data: &'a ClientDataset) -> Self {
        Holdout { data, threshold: DEFAULT_THRESHOLD }
    }
}

/// Mean segmentation metrics of `weights` over a hold-out dataset.
pub fn evaluate_holdout(net: &Network, weights: &ModelWeights<f64>, holdout: Holdout<'_>) -> Result<HoldoutMetrics> {
    let Holdout { data: holdout, threshold } = holdout;
    if holdout.is_empty() {
        return Err(Error::Empty("hold-out dataset"));
    }
    let mut m = HoldoutMetrics::default();
    for s in &holdout.samples {
        let prob = net.forward(weights, &s.image)?;
        let mask: Vec<f64> = s.mask.pixels().iter().map(|&p| f64::from(p)).collect();
        let pass = net.sample_pass(&weights.entries, s.image.as_slice(), &mask, 1.0, Want { params: false, input: false });
        let r = evaluate_segmentation(&prob, &s.mask, threshold)?;
        m.loss += pass.loss;
        m.iou += r.iou.unwrap_or(0.0);
        m.mse += r.mse;
        m.ssim += r.ssim;
    }
    let n = holdout.len() as f64;
    m.loss /= n;
    m.iou /= n;
    m.mse /= n;
    m.ssim /= n;
    Ok(m)
}

/// Centralized training on one dataset. One record per round, i.e. per
/// `local_epochs` epochs.
pub fn train_centralized(
    data: &ClientDataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    holdout: Option<Holdout<'_>>,
) -> Result<(ModelWeights<f64>, Vec<RoundRecord>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let (net, mut w) = build_model(spec, init_seed(cfg))?;
    let stream = stream_seed(cfg, &data.owner);
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let t0 = Instant::now();
        let loss = train_epochs(&net, &mut w, &data.samples, cfg, stream, round * cfg.local_epochs)?;
        w.version += 1;
        let train_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let holdout_metrics = holdout.map(|h| evaluate_holdout(&net, &w, h)).transpose()?;
        let digest = weights_digest(&w);
        records.push(RoundRecord {
            round,
            epochs_completed: (round + 1) * cfg.local_epochs,
            participants: vec![data.owner.clone()],
            clients: vec![ClientUpdate { client_id: data.owner.clone(), samples: data.len(), train_loss: loss, weights_digest: digest.clone() }],
            aggregate_digest: digest,
            holdout: holdout_metrics,
            timing: RoundTiming { local_training_s: train_s, aggregation_s: 0.0, evaluation_s: t1.elapsed().as_secs_f64() },
        });
    }
    Ok((w, records))
}

fn participants(n: usize, cfg: &TrainConfig, round: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    if cfg.participation >= 1.0 {
        return all;
    }
    let k = ((cfg.participation * n as f64).ceil() as usize).clamp(1, n);
    all.shuffle(&mut seed::rng(seed::derive_indexed(cfg.seed, "participation", round as u64)));
    let mut chosen = all[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// FedAvg: broadcast, local training in ascending client-id order,
/// aggregation, hold-out evaluation. `observe` sees every client's update
/// pair as it is produced.
pub fn run_federated_with(
    clients: &mut [ClientState],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    holdout: Option<Holdout<'_>>,
    mut observe: impl FnMut(&str, &UpdatePair) -> Result<()>,
) -> Result<(ModelWeights<f64>, Vec<RoundRecord>)> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::Empty("client list"));
    }
    let mut ids: Vec<&str> = clients.iter().map(|c| c.client_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|p| p[0] == p[1]) {
        return Err(invalid("client ids must be unique"));
    }
    clients.sort_by(|a, b| a.client_id.cmp(&b.client_id));

    let (net, mut global) = build_model(spec, init_seed(cfg))?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let chosen = participants(clients.len(), cfg, round);
        let t0 = Instant::now();
        let mut returned = Vec::with_capacity(chosen.len());
        let mut updates = Vec::with_capacity(chosen.len());
        for &i in &chosen {
            let c = &mut clients[i];
            let (w, loss) = local_update(&net, c, &global, cfg, round)?;
            observe(&c.client_id, &UpdatePair { round, before: global.clone(), after: w.clone() })?;
            updates.push(ClientUpdate { client_id: c.client_id.clone(), samples: c.dataset.len(), train_loss: loss, weights_digest: weights_digest(&w) });
            returned.push((w, c.dataset.len()));
        }
        let train_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let refs: Vec<(&ModelWeights<f64>, usize)> = returned.iter().map(|(w, n)| (w, *n)).collect();
        let mut next = fedavg_aggregate(&refs)?;
        next.version = global.version + 1;
        global = next;
        let agg_s = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let holdout_metrics = holdout.map(|h| evaluate_holdout(&net, &global, h)).transpose()?;
        records.push(RoundRecord {
            round,
            epochs_completed: (round + 1) * cfg.local_epochs,
            participants: updates.iter().map(|u| u.client_id.clone()).collect(),
            clients: updates,
            aggregate_digest: weights_digest(&global),
            holdout: holdout_metrics,
            timing: RoundTiming { local_training_s: train_s, aggregation_s: agg_s, evaluation_s: t2.elapsed().as_secs_f64() },
        });
    }
    Ok((global, records))
}

pub fn run_federated(
    clients: &mut [ClientState],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    holdout: Option<Holdout<'_>>,
) -> Result<(ModelWeights<f64>, Vec<RoundRecord>)> {
    run_federated_with(clients, spec, cfg, holdout, |_, _| Ok(()))
}
