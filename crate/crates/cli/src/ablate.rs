use std::path::PathBuf;

use anyhow::bail;
use roa_core::ActivationKind;

use crate::config::{preset, ExperimentConfig, ModelKind, Task};
use crate::train::{run_experiment, Control, RunSummary, Split};

/// eyeRNN learning rate relative to roaRNN's.
pub const EYE_LR_FACTOR: f64 = 0.1;

/// 128 units, ρ = 1, Adam; tanh on the adding problem, ReLU elsewhere.
pub fn ablation_preset(task: Task) -> ExperimentConfig {
    let activation = if task == Task::Addprob { ActivationKind::Tanh } else { ActivationKind::Relu };
    ExperimentConfig { model: ModelKind::Roarnn, hidden: 128, rho: Some(1.0), alpha: None, activation, ..preset(task) }
}

/// The eyeRNN twin of a roaRNN config: identity filter and a tenfold
/// smaller learning rate, everything else (seeds included) unchanged.
pub fn eye_twin(roa: &ExperimentConfig) -> ExperimentConfig {
    let mut eye = roa.clone();
    eye.model = ModelKind::Eyernn;
    eye.optimizer.learning_rate *= EYE_LR_FACTOR;
    for (_, lr) in &mut eye.optimizer.schedule {
        *lr *= EYE_LR_FACTOR;
    }
    eye
}

#[derive(Debug, Clone)]
pub struct AblationPair {
    pub seed: u64,
    pub roa: RunSummary,
    pub eye: RunSummary,
}

/// Sum of training losses over steps `1..=max_step`; a diverged run counts
/// as infinite.
pub fn loss_area(run: &RunSummary, max_step: usize) -> f64 {
    if run.diverged && run.steps <= max_step {
        return f64::INFINITY;
    }
    run.split(Split::Train).filter(|r| r.step <= max_step).map(|r| r.loss).sum()
}

/// Trains one eyeRNN/roaRNN pair per seed. With an output directory set,
/// writes `seed<k>/roarnn` and `seed<k>/eyernn` run folders under it.
/// `keep_going` sees the finished pairs after each seed and may end the
/// sweep early.
pub fn run_ablation(
    base: &ExperimentConfig,
    seeds: &[u64],
    mut keep_going: impl FnMut(&[AblationPair]) -> bool,
) -> anyhow::Result<Vec<AblationPair>> {
    if seeds.is_empty() {
        bail!("ablation needs at least one seed");
    }
    if base.model != ModelKind::Roarnn {
        bail!("ablation starts from a roarnn config");
    }
    let mut pairs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let sub = |name: &str| base.output.as_ref().map(|d| d.join(format!("seed{seed}")).join(name));
        let roa_cfg = ExperimentConfig { seed, output: sub("roarnn"), ..base.clone() };
        let eye_cfg = ExperimentConfig { output: sub("eyernn"), ..eye_twin(&roa_cfg) };
        let roa = run_experiment(&roa_cfg, &mut |_, _| Control::Continue)?;
        let eye = run_experiment(&eye_cfg, &mut |_, _| Control::Continue)?;
        pairs.push(AblationPair { seed, roa, eye });
        if !keep_going(&pairs) {
            break;
        }
    }
    Ok(pairs)
}

pub fn metric_files(pairs: &[AblationPair]) -> Vec<PathBuf> {
    pairs.iter().flat_map(|p| [p.roa.metrics_path.clone(), p.eye.metrics_path.clone()]).flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::build_rnn;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            hidden: 6,
            length: 12,
            batch: 4,
            iterations: 4,
            eval_every: 2,
            ..ablation_preset(Task::Addprob)
        }
    }

    #[test]
    fn twins_start_bit_identical() {
        let roa = tiny();
        let eye = eye_twin(&roa);
        assert_eq!(eye.activation, ActivationKind::Tanh);
        assert_eq!(eye.optimizer.learning_rate, roa.optimizer.learning_rate * EYE_LR_FACTOR);
        let (a, b) = (build_rnn(&roa).unwrap(), build_rnn(&eye).unwrap());
        let bits = |m: &roa_core::RoaRnnModel| {
            let p = m.params();
            [p.w_h.as_slice(), p.b_h.as_slice(), p.w_i.as_slice(), p.w_o.as_slice(), p.b_o.as_slice()]
                .concat()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn five_seeds_give_ten_metric_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { output: Some(dir.path().to_path_buf()), ..tiny() };
        let pairs = run_ablation(&cfg, &[0, 1, 2, 3, 4], |_| true).unwrap();
        let files = metric_files(&pairs);
        assert_eq!(files.len(), 10);
        assert!(files.iter().all(|f| f.is_file()));
        assert!(pairs.iter().all(|p| loss_area(&p.roa, 3).is_finite()));
    }

    #[test]
    fn sweep_can_stop_early_and_needs_seeds() {
        let pairs = run_ablation(&tiny(), &[0, 1, 2], |p| p.len() < 2).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(run_ablation(&tiny(), &[], |_| true).is_err());
    }
}
