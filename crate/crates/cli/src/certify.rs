use std::path::PathBuf;

use anyhow::Context;
use roa_core::checkpoint::Checkpoint;
use roa_core::isometry::{certify_fnn, certify_rnn, IsometryReport};
use roa_core::rng::{seeded, WeightInit};
use roa_core::DenseVector;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::train::{build_fnn, build_rnn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Certify this checkpoint instead of a freshly built model.
    pub checkpoint: Option<PathBuf>,
    pub probes: usize,
    /// Probe sequence length for recurrent models.
    pub length: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { checkpoint: None, probes: 10, length: 100, seed: 0, output: None }
    }
}

/// Certification result plus the spread of the singular values, which the
/// bounds alone do not expose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOutcome {
    pub report: IsometryReport,
    /// `ln(σ_max / σ_min)` of the IOJ over all probes.
    pub log_spread: f64,
}

pub fn gaussian_probes(dim: usize, count: usize, seed: u64) -> Vec<DenseVector> {
    let mut rng = seeded(seed);
    (0..count).map(|_| WeightInit::Normal { std: 1.0 }.vector(dim, &mut rng)).collect()
}

pub fn run_certify(cfg: &ExperimentConfig, opts: &CertifyOptions) -> anyhow::Result<CertifyOutcome> {
    let model = match &opts.checkpoint {
        Some(p) => Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?.0,
        None if cfg.model.is_recurrent() => Checkpoint::Rnn(build_rnn(cfg)?),
        None => Checkpoint::Fnn(build_fnn(cfg)?),
    };
    let report = certify_checkpoint(&model, opts)?;
    let log_spread = (report.max_singular_value() / report.min_singular_value()).ln();
    let outcome = CertifyOutcome { report, log_spread };
    if let Some(out) = &opts.output {
        std::fs::write(out, serde_json::to_string_pretty(&outcome)?)?;
    }
    Ok(outcome)
}

pub fn certify_checkpoint(model: &Checkpoint, opts: &CertifyOptions) -> anyhow::Result<IsometryReport> {
    Ok(match model {
        Checkpoint::Fnn(m) => certify_fnn(m, &gaussian_probes(m.input_dim(), opts.probes, opts.seed))?,
        Checkpoint::Rnn(m) => {
            let seqs: Vec<Vec<DenseVector>> = (0..opts.probes)
                .map(|i| gaussian_probes(m.input_dim(), opts.length, opts.seed.wrapping_add(i as u64)))
                .collect();
            certify_rnn(m, &seqs, None)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset, ModelKind, Task};
    use roa_core::ActivationKind;

    #[test]
    fn fresh_roarnn_passes() {
        let cfg = ExperimentConfig {
            hidden: 16,
            length: 100,
            activation: ActivationKind::Tanh,
            rho: Some(1.0),
            ..preset(Task::Addprob)
        };
        let opts = CertifyOptions { probes: 2, length: 100, ..Default::default() };
        let out = run_certify(&cfg, &opts).unwrap();
        assert!(out.report.pass);
        assert!(out.report.lower_asserted);
        assert!(out.report.full_spectrum);
    }

    #[test]
    fn vanilla_spectrum_spreads_further() {
        let base = ExperimentConfig { hidden: 16, activation: ActivationKind::Tanh, ..preset(Task::Addprob) };
        let opts = CertifyOptions { probes: 2, length: 100, ..Default::default() };
        let roa = run_certify(&ExperimentConfig { rho: Some(1.0), ..base.clone() }, &opts).unwrap();
        let van = run_certify(&ExperimentConfig { model: ModelKind::RnnVanilla, ..base }, &opts).unwrap();
        assert!(!van.report.lower_asserted);
        assert!(van.log_spread > 10.0 * roa.log_spread, "{} vs {}", van.log_spread, roa.log_spread);
    }

    #[test]
    fn trained_checkpoint_is_recertified() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            hidden: 8,
            lag: 5,
            symbols: 3,
            batch: 4,
            iterations: 3,
            output: Some(dir.path().to_path_buf()),
            ..preset(Task::Copymem)
        };
        let s = crate::train::run_experiment(&cfg, &mut |_, _| crate::Control::Continue).unwrap();
        let opts = CertifyOptions {
            checkpoint: s.checkpoint_path.clone(),
            probes: 1,
            length: 20,
            output: Some(dir.path().join("r.json")),
            ..Default::default()
        };
        let out = run_certify(&cfg, &opts).unwrap();
        let Checkpoint::Rnn(m) = &s.model else { panic!("recurrent") };
        assert_eq!(out.report.sigma, m.sigma());
        assert!(out.report.pass);
        assert!(dir.path().join("r.json").is_file());
    }
}
