use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use roa_core::optim::OptimizerConfig;
use roa_core::{ActivationKind, FilterKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    DoubleMoon,
    Copymem,
    Addprob,
    Smnist,
    Psmnist,
}

impl Task {
    pub fn is_sequential(self) -> bool {
        !matches!(self, Task::DoubleMoon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Roafnn,
    FnnVanilla,
    Roarnn,
    RnnVanilla,
    Eyernn,
}

impl ModelKind {
    pub fn is_recurrent(self) -> bool {
        matches!(self, ModelKind::Roarnn | ModelKind::RnnVanilla | ModelKind::Eyernn)
    }
}

/// Everything needed to run one training job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelKind,
    /// Width of hidden layers (FNN) or of the recurrent state (RNN).
    pub hidden: usize,
    /// Number of hidden layers of a feedforward model.
    pub hidden_layers: usize,
    /// Copying-memory lag `L`.
    pub lag: usize,
    /// Copying-memory symbols to recall `S`.
    pub symbols: usize,
    /// Adding-problem sequence length `T`.
    pub length: usize,
    pub rho: Option<f64>,
    /// Overrides `rho` when set.
    pub alpha: Option<f64>,
    pub activation: ActivationKind,
    pub filter: FilterKind,
    pub optimizer: OptimizerConfig,
    pub batch: usize,
    /// Passes over the data (double moon, MNIST).
    pub epochs: usize,
    /// Optimizer steps (copying memory, adding problem).
    pub iterations: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub n_points: usize,
    pub data_dir: Option<PathBuf>,
    pub subset: f64,
    pub permutation: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        preset(Task::DoubleMoon)
    }
}

/// Hyperparameters of the published experiments, at desk scale.
pub fn preset(task: Task) -> ExperimentConfig {
    let base = ExperimentConfig {
        task,
        model: ModelKind::Roarnn,
        hidden: 128,
        hidden_layers: 48,
        lag: 100,
        symbols: 10,
        length: 200,
        rho: Some(1.0),
        alpha: None,
        activation: ActivationKind::Relu,
        filter: FilterKind::RandomOrthogonal,
        optimizer: OptimizerConfig::adam(0.5),
        batch: 128,
        epochs: 20,
        iterations: 4000,
        eval_every: 100,
        seed: 0,
        n_points: 1000,
        data_dir: None,
        subset: 1.0,
        permutation: None,
        output: None,
    };
    match task {
        Task::DoubleMoon => ExperimentConfig {
            model: ModelKind::Roafnn,
            hidden: 2,
            rho: Some(5.0),
            activation: ActivationKind::Tanh,
            optimizer: OptimizerConfig::sgd(1.0),
            batch: 100,
            epochs: 250,
            eval_every: 1,
            ..base
        },
        Task::Copymem => ExperimentConfig { hidden: 190, rho: Some(3.0), ..base },
        Task::Addprob => ExperimentConfig { rho: Some(1.0 / 200.0), batch: 50, iterations: 5000, ..base },
        Task::Smnist | Task::Psmnist => ExperimentConfig {
            rho: Some(0.5),
            optimizer: OptimizerConfig::adam(0.1).with_schedule(vec![(0, 0.1), (10, 0.01)]),
            batch: 100,
            epochs: 20,
            eval_every: 1,
            ..base
        },
    }
}

impl ExperimentConfig {
    /// Horizon that turns ρ into α: `L − 1` layers, `L + S` or `T` steps.
    pub fn horizon(&self) -> usize {
        match self.task {
            Task::DoubleMoon => self.hidden_layers.max(1),
            Task::Copymem => self.lag + self.symbols,
            Task::Addprob => self.length,
            Task::Smnist | Task::Psmnist => roa_core::mnist::PIXELS,
        }
    }

    pub fn resolved_alpha(&self) -> anyhow::Result<f64> {
        if matches!(self.model, ModelKind::FnnVanilla | ModelKind::RnnVanilla) {
            return Ok(1.0);
        }
        let a = match (self.alpha, self.rho) {
            (Some(a), _) => a,
            (None, Some(rho)) => rho / self.horizon() as f64,
            (None, None) => bail!("either alpha or rho must be set"),
        };
        if !(a > 0.0 && a <= 1.0) {
            bail!("alpha must lie in (0, 1], got {a}");
        }
        Ok(a)
    }

    pub fn fnn_dims(&self) -> Vec<usize> {
        let mut dims = vec![2];
        dims.extend(std::iter::repeat_n(self.hidden, self.hidden_layers));
        dims.push(1);
        dims
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.task.is_sequential() != self.model.is_recurrent() {
            bail!("task {:?} is incompatible with model {:?}", self.task, self.model);
        }
        if self.batch == 0 || self.hidden == 0 {
            bail!("batch and hidden size must be positive");
        }
        if self.eval_every == 0 {
            bail!("eval cadence must be positive");
        }
        if !(self.subset > 0.0 && self.subset <= 1.0) {
            bail!("subset fraction must lie in (0, 1]");
        }
        self.optimizer.validate()?;
        self.resolved_alpha()?;
        Ok(())
    }

    /// Reads a TOML or JSON file holding a (possibly partial) config; the
    /// missing keys come from the preset of the file's task.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            serde_json::to_value(toml::from_str::<toml::Value>(&text)?)?
        };
        let task: Task = match value.get("task") {
            Some(t) => serde_json::from_value(t.clone())?,
            None => Task::DoubleMoon,
        };
        let mut merged = serde_json::to_value(preset(task))?;
        merge(&mut merged, value);
        serde_json::from_value(merged).context("invalid experiment config")
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}
