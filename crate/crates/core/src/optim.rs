//! First-order update rules over any [`ParamSet`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ParamSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f64),
    #[error("momentum must lie in [0, 1), got {0}")]
    Momentum(f64),
    #[error("parameter/gradient shape mismatch: {params} vs {grads} values")]
    Shape { params: usize, grads: usize },
    #[error("cannot average an empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Nag,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "nag" | "nesterov" => Ok(OptimizerKind::Nag),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// `(epoch, learning rate)` pairs; the last entry whose epoch has been
    /// reached wins.
    #[serde(default)]
    pub schedule: Vec<(usize, f64)>,
}

fn default_momentum() -> f64 {
    0.99
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            momentum: default_momentum(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            schedule: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn nag(lr: f64) -> Self {
        Self::new(OptimizerKind::Nag, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn with_schedule(mut self, schedule: Vec<(usize, f64)>) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        for lr in std::iter::once(self.learning_rate).chain(self.schedule.iter().map(|s| s.1)) {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(OptimError::LearningRate(lr));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OptimError::Momentum(self.momentum));
        }
        Ok(())
    }
}

/// Piecewise-constant learning rate at `epoch`.
pub fn apply_schedule(cfg: &OptimizerConfig, epoch: usize) -> f64 {
    cfg.schedule.iter().filter(|(e, _)| *e <= epoch).max_by_key(|(e, _)| *e).map_or(cfg.learning_rate, |(_, lr)| *lr)
}

/// Elementwise mean of a batch of gradient sets.
pub fn batch_average<G: ParamSet + Clone>(grads: &[G]) -> Result<G, OptimError> {
    let (first, rest) = grads.split_first().ok_or(OptimError::EmptyBatch)?;
    let mut acc = first.clone();
    for g in rest {
        if g.num_params() != acc.num_params() {
            return Err(OptimError::Shape { params: acc.num_params(), grads: g.num_params() });
        }
        acc.accumulate(g);
    }
    acc.scale_all(1.0 / grads.len() as f64);
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    /// Velocity (NAG) or first moment (Adam).
    pub m: Vec<f64>,
    /// Second moment (Adam).
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    lr: f64,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(Self { lr: config.learning_rate, config, state: OptimizerState { step: 0, m: Vec::new(), v: Vec::new() } })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Adopts the scheduled learning rate for `epoch`.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = apply_schedule(&self.config, epoch);
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// One update `p ← p + Δp` from the (already averaged) gradients.
    ///
    /// NAG uses the velocity form `v ← μv + g`, `p ← p − lr(g + μv)`, which
    /// equals the look-ahead formulation up to a shift of the iterate.
    pub fn step<P: ParamSet + ?Sized, G: ParamSet + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &G,
    ) -> Result<(), OptimError> {
        let n = params.num_params();
        if grads.num_params() != n {
            return Err(OptimError::Shape { params: n, grads: grads.num_params() });
        }
        let cfg = &self.config;
        let lr = self.lr;
        let st = &mut self.state;
        st.step += 1;
        match cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                }
            }
            OptimizerKind::Nag => {
                st.m.resize(n, 0.0);
                let mu = cfg.momentum;
                let mut v = st.m.iter_mut();
                for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
                    for (p, g) in p.iter_mut().zip(g) {
                        let v = v.next().expect("sized buffer");
                        *v = mu * *v + g;
                        *p -= lr * (g + mu * *v);
                    }
                }
            }
            OptimizerKind::Adam => {
                st.m.resize(n, 0.0);
                st.v.resize(n, 0.0);
                let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
                let t = st.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let mut m = st.m.iter_mut();
                let mut v = st.v.iter_mut();
                for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
                    for (p, g) in p.iter_mut().zip(g) {
                        let m = m.next().expect("sized buffer");
                        let v = v.next().expect("sized buffer");
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let mh = *m / c1;
                        let vh = *v / c2;
                        *p -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
