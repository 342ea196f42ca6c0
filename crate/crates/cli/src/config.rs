//! Experiment configuration files.
//!
//! One TOML file describes a whole experiment: the synthetic dataset, the
//! model, a list of training runs and optionally an attack on one of them.
//! Everything is checked by [`ExperimentConfig::validate`] before any work
//! starts.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};

use semfl_core::attack::AttackConfig;
use semfl_core::datagen::{NoiseConfig, SplitPlan, SubsetRole};
use semfl_core::fed::{OptimizerKind, TrainConfig};
use semfl_core::model::{Activation, Architecture, ModelSpec, Pooling};
use semfl_core::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    pub training: TrainingSection,
    #[serde(default)]
    pub attack: Option<AttackSection>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub height: usize,
    pub width: usize,
    /// Corpus size; subsets A–J get `count / 10` images each.
    pub count: usize,
    pub structure_density: f64,
    pub background_mean: f64,
    pub foreground_mean: f64,
    pub std_dev: f64,
    pub shot_noise: f64,
    pub dwell_time: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        DatasetSection {
            height: 256,
            width: 256,
            count: 100,
            structure_density: 0.4,
            background_mean: n.background_mean,
            foreground_mean: n.foreground_mean,
            std_dev: n.std_dev,
            shot_noise: n.shot_noise,
            dwell_time: n.dwell_time,
        }
    }
}

impl DatasetSection {
    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            background_mean: self.background_mean,
            foreground_mean: self.foreground_mean,
            std_dev: self.std_dev,
            shot_noise: self.shot_noise,
            dwell_time: self.dwell_time,
            seed: 0,
        }
    }

    pub fn plan(&self) -> SplitPlan {
        SplitPlan::scaled(self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub depth: usize,
    pub base_channels: usize,
    pub activation: Activation,
    pub pooling: Pooling,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { architecture: Architecture::Unet, depth: 4, base_channels: 16, activation: Activation::Relu, pooling: Pooling::Max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cl,
    Fl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub id: String,
    pub mode: Mode,
    /// `cl`: exactly one subset (possibly a union such as K). `fl`: one
    /// subset per client; the client id is the subset's owner.
    pub subsets: Vec<String>,
    /// Keep only the first `sample_cap` images of every subset.
    #[serde(default)]
    pub sample_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "one")]
    pub local_epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "full")]
    pub participation: f64,
    /// Require every run to be attackable exactly: plain SGD, one local
    /// epoch, full-batch steps.
    #[serde(default)]
    pub attack_compatible: bool,
    /// Rounds (0-based) whose per-client weight pairs are written to disk.
    #[serde(default)]
    pub snapshot_rounds: Vec<usize>,
    pub runs: Vec<RunSpec>,
}

fn default_lr() -> f64 {
    TrainConfig::default().learning_rate
}
fn one() -> usize {
    1
}
fn default_batch() -> usize {
    TrainConfig::default().batch_size
}
fn default_rounds() -> usize {
    TrainConfig::default().rounds
}
fn default_momentum() -> f64 {
    TrainConfig::default().momentum
}
fn full() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    /// Id of an `fl` run.
    pub run: String,
    /// Client id, e.g. `client-1`.
    pub victim: String,
    #[serde(default)]
    pub round: usize,
    /// α values to sweep; empty means just `settings.alpha`.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Optimizer settings. `settings.seed` selects a sub-stream of the
    /// experiment's attack seed.
    #[serde(default)]
    pub settings: AttackConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub threshold: f64,
    pub holdout_subset: String,
    /// Evaluate on the hold-out set after every round.
    pub holdout_metrics: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { threshold: 0.5, holdout_subset: "J".into(), holdout_metrics: true }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// 64×64 images, 40 of them, and a depth-2 U-Net with 8 base channels.
    pub fn apply_desk_scale(&mut self) {
        self.dataset.height = 64;
        self.dataset.width = 64;
        self.dataset.count = 40;
        self.model.depth = 2;
        self.model.base_channels = 8;
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            architecture: self.model.architecture,
            height: self.dataset.height,
            width: self.dataset.width,
            depth: self.model.depth,
            base_channels: self.model.base_channels,
            activation: self.model.activation,
            pooling: self.model.pooling,
        }
    }

    pub fn dataset_seed(&self) -> u64 {
        seed::derive(self.seed, "dataset")
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            learning_rate: t.learning_rate,
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
            rounds: t.rounds,
            optimizer: t.optimizer,
            momentum: t.momentum,
            seed: seed::derive(self.seed, "training"),
            participation: t.participation,
        }
    }

    pub fn attack_config(&self) -> Option<AttackConfig> {
        self.attack.as_ref().map(|a| AttackConfig {
            seed: seed::derive_indexed(seed::derive(self.seed, "attack"), "stream", a.settings.seed),
            ..a.settings.clone()
        })
    }

    pub fn run(&self, id: &str) -> Option<&RunSpec> {
        self.training.runs.iter().find(|r| r.id == id)
    }

    /// Number of images a run's client (or the centralized trainer) holds
    /// for a subset.
    pub fn subset_size(&self, run: &RunSpec, subset: &str) -> usize {
        let plan = self.dataset.plan();
        let full = plan
            .subsets
            .iter()
            .find(|s| s.name == subset)
            .map(|s| s.count)
            .or_else(|| {
                plan.unions.iter().find(|u| u.name == subset).map(|u| {
                    u.members.iter().filter_map(|m| plan.subsets.iter().find(|s| &s.name == m)).map(|s| s.count).sum()
                })
            })
            .unwrap_or(0);
        run.sample_cap.map_or(full, |c| full.min(c))
    }

    /// Owner of a subset in the split plan.
    pub fn owner_of(&self, subset: &str) -> Option<String> {
        let plan = self.dataset.plan();
        plan.subsets
            .iter()
            .find(|s| s.name == subset)
            .map(|s| s.owner.clone())
            .or_else(|| plan.unions.iter().find(|u| u.name == subset).map(|u| u.owner.clone()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let d = &self.dataset;
        d.noise().validate()?;
        ensure!(d.structure_density > 0.0 && d.structure_density < 1.0, "dataset.structure_density must lie in (0, 1)");
        ensure!(d.height >= 11 && d.width >= 11, "dataset images must be at least 11x11 for SSIM");
        ensure!(d.count >= 10, "dataset.count must be at least 10 (ten subsets A-J)");
        self.model_spec().validate()?;
        let train = self.train_config();
        train.validate()?;
        ensure!(
            (0.0..=1.0).contains(&self.evaluation.threshold),
            "evaluation.threshold must lie in [0, 1]"
        );

        let plan = self.dataset.plan();
        let known: Vec<&str> = plan.subset_names().collect();
        let holdout = &self.evaluation.holdout_subset;
        ensure!(known.contains(&holdout.as_str()), "evaluation.holdout_subset `{holdout}` is not one of {known:?}");
        let holdout_members: Vec<&str> = match plan.subsets.iter().find(|s| &s.name == holdout) {
            Some(_) => vec![holdout.as_str()],
            None => plan.unions.iter().find(|u| &u.name == holdout).map(|u| u.members.iter().map(String::as_str).collect()).unwrap_or_default(),
        };

        ensure!(!self.training.runs.is_empty(), "training.runs is empty");
        let mut ids = HashSet::new();
        for run in &self.training.runs {
            let id_ok = !run.id.is_empty() && run.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            ensure!(id_ok, "run id `{}` must be non-empty and use only [A-Za-z0-9_-]", run.id);
            ensure!(ids.insert(run.id.as_str()), "duplicate run id `{}`", run.id);
            ensure!(run.sample_cap != Some(0), "run `{}`: sample_cap must be >= 1", run.id);
            for s in &run.subsets {
                ensure!(known.contains(&s.as_str()), "run `{}` references unknown subset `{s}`", run.id);
                let touches_holdout = holdout_members.contains(&s.as_str())
                    || plan.unions.iter().any(|u| &u.name == s && u.members.iter().any(|m| holdout_members.contains(&m.as_str())));
                ensure!(!touches_holdout, "run `{}` trains on the hold-out subset `{s}`", run.id);
                if let Some(sub) = plan.subsets.iter().find(|p| &p.name == s) {
                    ensure!(sub.role == SubsetRole::Train, "run `{}` trains on non-training subset `{s}`", run.id);
                }
            }
            match run.mode {
                Mode::Cl => ensure!(run.subsets.len() == 1, "cl run `{}` needs exactly one subset", run.id),
                Mode::Fl => {
                    ensure!(!run.subsets.is_empty(), "fl run `{}` has no clients", run.id);
                    let mut owners = HashSet::new();
                    for s in &run.subsets {
                        let owner = self.owner_of(s).expect("checked above");
                        ensure!(owners.insert(owner.clone()), "fl run `{}`: two subsets belong to client `{owner}`", run.id);
                    }
                }
            }
            if self.training.attack_compatible {
                let sizes: Vec<usize> = run.subsets.iter().map(|s| self.subset_size(run, s)).collect();
                train.validate_attack_compatible(&sizes).with_context(|| format!("run `{}`", run.id))?;
            }
        }
        for &r in &self.training.snapshot_rounds {
            ensure!(r < self.training.rounds, "snapshot round {r} is beyond training.rounds = {}", self.training.rounds);
        }

        if let Some(a) = &self.attack {
            let Some(run) = self.run(&a.run) else { bail!("attack.run `{}` is not a training run", a.run) };
            ensure!(run.mode == Mode::Fl, "attack.run `{}` must be an fl run: only federated updates are observed", a.run);
            let clients: Vec<String> = run.subsets.iter().filter_map(|s| self.owner_of(s)).collect();
            ensure!(clients.contains(&a.victim), "attack.victim `{}` is not a client of run `{}` (clients: {clients:?})", a.victim, a.run);
            ensure!(
                self.training.snapshot_rounds.contains(&a.round),
                "attack.round {} is not in training.snapshot_rounds {:?}",
                a.round,
                self.training.snapshot_rounds
            );
            self.attack_config().expect("present").validate()?;
            for &alpha in &a.alphas {
                ensure!((0.0..=1.0).contains(&alpha), "attack.alphas entry {alpha} is outside [0, 1]");
            }
        }
        Ok(())
    }
}
