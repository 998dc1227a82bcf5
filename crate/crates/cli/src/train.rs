use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use rand::seq::SliceRandom;
use rand::Rng;
use roa_core::checkpoint::Checkpoint;
use roa_core::loss::{argmax_columns, cross_entropy_batch, mse_loss_batch};
use roa_core::mnist::{load_mnist, Mnist, MnistSplit, Permutation};
use roa_core::rng::{seeded, Rng64, WeightInit};
use roa_core::rnn::RnnInit;
use roa_core::tasks::{
    gen_add_batch, gen_copy_batch, gen_double_moon, AddProbConfig, CopyMemConfig, DoubleMoon, DoubleMoonConfig,
    COPY_CLASSES, COPY_INPUT_DIM,
};
use roa_core::{
    DenseMatrix, FilterKind, FnnConfig, Mixing, Optimizer, ParamSet, Readout, ReadoutSteps, RnnConfig, RoaFnnModel,
    RoaRnnModel,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind, Task};

pub const CSV_HEADER: [&str; 6] = ["step", "split", "loss", "accuracy", "grad_norm", "seconds"];
pub const DATA_DIR_ENV: &str = "ROA_DATA_DIR";

const DATA_STREAM: u64 = 0xDA7A_0000_0000_0001;
const EVAL_STREAM: u64 = 0xE7A1_0000_0000_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
    Test,
    /// A non-finite loss or gradient; training stopped here.
    Nan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub grad_norm: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Borrowed view of the model being trained.
#[derive(Debug, Clone, Copy)]
pub enum ModelRef<'a> {
    Fnn(&'a RoaFnnModel),
    Rnn(&'a RoaRnnModel),
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<MetricRow>,
    pub steps: usize,
    pub diverged: bool,
    pub stopped_early: bool,
    pub model: Checkpoint,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

impl RunSummary {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn last(&self, split: Split) -> Option<&MetricRow> {
        self.split(split).last()
    }
}

pub fn build_fnn(cfg: &ExperimentConfig) -> anyhow::Result<RoaFnnModel> {
    let mut fc = FnnConfig::new(cfg.fnn_dims(), cfg.activation, Mixing::Alpha(cfg.resolved_alpha()?));
    fc.filter_kind = cfg.filter;
    Ok(RoaFnnModel::init(&fc, cfg.seed)?)
}

pub fn rnn_config(cfg: &ExperimentConfig) -> anyhow::Result<RnnConfig> {
    let (input, output, readout) = match cfg.task {
        Task::Copymem => (COPY_INPUT_DIM, COPY_CLASSES, Readout::Softmax),
        Task::Addprob => (2, 1, Readout::Identity),
        Task::Smnist | Task::Psmnist => (1, roa_core::mnist::CLASSES, Readout::Softmax),
        Task::DoubleMoon => bail!("double moon has no recurrent model"),
    };
    let mut rc = RnnConfig::new(cfg.hidden, input, output, Mixing::Alpha(cfg.resolved_alpha()?), cfg.horizon());
    rc.activation = cfg.activation;
    rc.readout = readout;
    rc.filter_kind = cfg.filter;
    match cfg.model {
        ModelKind::RnnVanilla => rc.init = RnnInit::OrthogonalUniform,
        ModelKind::Eyernn => rc.filter_kind = FilterKind::Identity,
        _ => rc.init = RnnInit::Iid { dist: WeightInit::Normal { std: 1.0 } },
    }
    Ok(rc)
}

pub fn build_rnn(cfg: &ExperimentConfig) -> anyhow::Result<RoaRnnModel> {
    Ok(RoaRnnModel::init(&rnn_config(cfg)?, cfg.seed)?)
}

pub fn data_dir(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

pub fn load_permutation(cfg: &ExperimentConfig) -> anyhow::Result<Permutation> {
    Ok(match (cfg.task, &cfg.permutation) {
        (Task::Smnist, _) => Permutation::identity(),
        (_, Some(p)) => Permutation::parse(&std::fs::read_to_string(p)?)?,
        (_, None) => Permutation::shipped(),
    })
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(metric_record(r))?;
    }
    w.flush()?;
    Ok(())
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metric_record(r: &MetricRow) -> [String; 6] {
    let split = match r.split {
        Split::Train => "train",
        Split::Eval => "eval",
        Split::Test => "test",
        Split::Nan => "nan",
    };
    [
        r.step.to_string(),
        split.to_string(),
        r.loss.to_string(),
        opt_field(r.accuracy),
        opt_field(r.grad_norm),
        format!("{:.3}", r.seconds),
    ]
}

/// Collects rows and forwards them to the observer.
struct Log<'o> {
    rows: Vec<MetricRow>,
    start: Instant,
    observer: &'o mut dyn FnMut(&MetricRow, ModelRef<'_>) -> Control,
    stopped: bool,
}

impl Log<'_> {
    fn push(
        &mut self,
        step: usize,
        split: Split,
        loss: f64,
        accuracy: Option<f64>,
        grad_norm: Option<f64>,
        m: ModelRef<'_>,
    ) {
        let row = MetricRow { step, split, loss, accuracy, grad_norm, seconds: self.start.elapsed().as_secs_f64() };
        if (self.observer)(&row, m) == Control::Stop {
            self.stopped = true;
        }
        self.rows.push(row);
    }

    /// Records a divergence when the step produced non-finite values.
    fn check_finite<G: ParamSet>(&mut self, step: usize, loss: f64, grads: &G, m: ModelRef<'_>) -> bool {
        if loss.is_finite() && grads.all_finite() {
            return true;
        }
        self.push(step, Split::Nan, loss, None, None, m);
        false
    }
}

/// Runs one training job. The observer sees every logged row and may stop
/// the run; metrics and the final checkpoint land in `cfg.output` if set.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    observer: &mut dyn FnMut(&MetricRow, ModelRef<'_>) -> Control,
) -> anyhow::Result<RunSummary> {
    cfg.validate()?;
    let mnist = match cfg.task {
        Task::Smnist | Task::Psmnist => {
            let dir = data_dir(cfg).with_context(|| format!("MNIST needs --data-dir or {DATA_DIR_ENV}"))?;
            Some(load_mnist(&dir).with_context(|| format!("loading MNIST from {}", dir.display()))?)
        }
        _ => None,
    };
    let mut log = Log { rows: Vec::new(), start: Instant::now(), observer, stopped: false };
    let (model, steps, diverged) = match cfg.task {
        Task::DoubleMoon => {
            let (m, s, d) = train_double_moon(cfg, &mut log)?;
            (Checkpoint::Fnn(m), s, d)
        }
        Task::Copymem => wrap(train_copymem(cfg, &mut log)?),
        Task::Addprob => wrap(train_addprob(cfg, &mut log)?),
        Task::Smnist | Task::Psmnist => wrap(train_mnist(cfg, mnist.as_ref().expect("loaded above"), &mut log)?),
    };
    let mut summary = RunSummary {
        rows: log.rows,
        steps,
        diverged,
        stopped_early: log.stopped,
        model,
        metrics_path: None,
        checkpoint_path: None,
    };
    if let Some(dir) = &cfg.output {
        std::fs::create_dir_all(dir)?;
        let metrics = dir.join("metrics.csv");
        write_metrics(&metrics, &summary.rows)?;
        let ckpt = dir.join("final.ckpt");
        let extra = serde_json::json!({ "config": cfg, "steps": steps, "diverged": diverged });
        summary.model.save(&ckpt, extra)?;
        summary.metrics_path = Some(metrics);
        summary.checkpoint_path = Some(ckpt);
    }
    Ok(summary)
}

fn wrap((m, s, d): (RoaRnnModel, usize, bool)) -> (Checkpoint, usize, bool) {
    (Checkpoint::Rnn(m), s, d)
}

fn moon_data(cfg: &ExperimentConfig) -> anyhow::Result<DoubleMoon> {
    Ok(gen_double_moon(&DoubleMoonConfig { n_points: cfg.n_points, seed: cfg.seed, ..Default::default() })?)
}

/// Mean squared error and sign accuracy of the model on the full set.
pub fn eval_double_moon(model: &RoaFnnModel, data: &DoubleMoon) -> anyhow::Result<(f64, f64)> {
    let (x, y) = data.all();
    let trace = model.forward_batch(&x)?;
    let out = trace.output();
    let (loss, _) = mse_loss_batch(out, &y)?;
    let hits = out.as_slice().iter().zip(y.as_slice()).filter(|(o, t)| o.signum() == t.signum()).count();
    Ok((loss, hits as f64 / data.len() as f64))
}

fn train_double_moon(cfg: &ExperimentConfig, log: &mut Log<'_>) -> anyhow::Result<(RoaFnnModel, usize, bool)> {
    let data = moon_data(cfg)?;
    let mut model = build_fnn(cfg)?;
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let mut rng = seeded(cfg.seed ^ DATA_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    let (loss, acc) = eval_double_moon(&model, &data)?;
    log.push(0, Split::Eval, loss, Some(acc), None, ModelRef::Fnn(&model));
    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch) {
            let (x, y) = data.batch(idx);
            let trace = model.forward_batch(&x)?;
            let (loss, err) = mse_loss_batch(trace.output(), &y)?;
            let grads = model.backward(&trace, &err)?;
            step += 1;
            if !log.check_finite(step, loss, &grads, ModelRef::Fnn(&model)) {
                return Ok((model, step, true));
            }
            opt.step(&mut model, &grads)?;
            log.push(step, Split::Train, loss, None, Some(grads.l2_norm()), ModelRef::Fnn(&model));
        }
        if (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs {
            let (loss, acc) = eval_double_moon(&model, &data)?;
            if !loss.is_finite() {
                log.push(step, Split::Nan, loss, None, None, ModelRef::Fnn(&model));
                return Ok((model, step, true));
            }
            log.push(step, Split::Eval, loss, Some(acc), None, ModelRef::Fnn(&model));
        }
        if log.stopped {
            break;
        }
    }
    Ok((model, step, false))
}

/// Loss (mean over steps and samples) and errors of a copying batch.
fn copy_loss(
    model: &RoaRnnModel,
    cfg: &ExperimentConfig,
    seed: u64,
) -> anyhow::Result<(f64, f64, Vec<DenseMatrix>, roa_core::RnnTrace)> {
    let batch = gen_copy_batch(&CopyMemConfig { symbols: cfg.symbols, lag: cfg.lag, batch: cfg.batch, seed })?;
    let trace = model.forward_batch(None, &batch.inputs, &ReadoutSteps::All)?;
    let t = batch.len();
    let scale = 1.0 / (t * cfg.batch) as f64;
    let mut total = 0.0;
    let mut errors = Vec::with_capacity(t);
    let mut hits = 0;
    for (k, (logits, classes)) in trace.outputs.iter().zip(&batch.targets).enumerate() {
        let (l, e) = cross_entropy_batch(logits, classes, scale)?;
        total += l;
        errors.push(e);
        if k >= t - cfg.symbols {
            hits += argmax_columns(logits).iter().zip(classes).filter(|(p, c)| p == c).count();
        }
    }
    let acc = hits as f64 / (cfg.symbols * cfg.batch) as f64;
    Ok((total * scale, acc, errors, trace))
}

fn add_loss(
    model: &RoaRnnModel,
    cfg: &ExperimentConfig,
    seed: u64,
) -> anyhow::Result<(f64, DenseMatrix, roa_core::RnnTrace)> {
    let batch = gen_add_batch(&AddProbConfig { length: cfg.length, batch: cfg.batch, seed })?;
    let trace = model.forward_batch(None, &batch.inputs, &ReadoutSteps::Final)?;
    let (loss, err) = mse_loss_batch(&trace.outputs[0], &batch.targets)?;
    Ok((loss, err, trace))
}

/// Shared loop of the two synthetic sequence tasks: one fresh batch per
/// step, a fresh evaluation batch every `eval_every` steps.
fn train_synthetic(
    cfg: &ExperimentConfig,
    log: &mut Log<'_>,
    mut train_step: impl FnMut(&RoaRnnModel, u64) -> anyhow::Result<(f64, roa_core::RnnGradients)>,
    mut evaluate: impl FnMut(&RoaRnnModel, u64) -> anyhow::Result<(f64, Option<f64>)>,
) -> anyhow::Result<(RoaRnnModel, usize, bool)> {
    let mut model = build_rnn(cfg)?;
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let mut data: Rng64 = seeded(cfg.seed ^ DATA_STREAM);
    let mut eval: Rng64 = seeded(cfg.seed ^ EVAL_STREAM);
    for step in 1..=cfg.iterations {
        let (loss, grads) = train_step(&model, data.random())?;
        if !log.check_finite(step, loss, &grads, ModelRef::Rnn(&model)) {
            return Ok((model, step, true));
        }
        opt.step(&mut model, &grads)?;
        log.push(step, Split::Train, loss, None, Some(grads.l2_norm()), ModelRef::Rnn(&model));
        if step % cfg.eval_every == 0 || step == cfg.iterations {
            let (loss, acc) = evaluate(&model, eval.random())?;
            if !loss.is_finite() {
                log.push(step, Split::Nan, loss, None, None, ModelRef::Rnn(&model));
                return Ok((model, step, true));
            }
            log.push(step, Split::Eval, loss, acc, None, ModelRef::Rnn(&model));
        }
        if log.stopped {
            return Ok((model, step, false));
        }
    }
    Ok((model, cfg.iterations, false))
}

fn train_copymem(cfg: &ExperimentConfig, log: &mut Log<'_>) -> anyhow::Result<(RoaRnnModel, usize, bool)> {
    train_synthetic(
        cfg,
        log,
        |m, seed| {
            let (loss, _, errors, trace) = copy_loss(m, cfg, seed)?;
            Ok((loss, m.backward(&trace, &errors)?))
        },
        |m, seed| {
            let (loss, acc, _, _) = copy_loss(m, cfg, seed)?;
            Ok((loss, Some(acc)))
        },
    )
}

fn train_addprob(cfg: &ExperimentConfig, log: &mut Log<'_>) -> anyhow::Result<(RoaRnnModel, usize, bool)> {
    train_synthetic(
        cfg,
        log,
        |m, seed| {
            let (loss, err, trace) = add_loss(m, cfg, seed)?;
            Ok((loss, m.backward(&trace, &[err])?))
        },
        |m, seed| Ok((add_loss(m, cfg, seed)?.0, None)),
    )
}

/// Mean cross-entropy and top-1 accuracy over a split.
pub fn eval_mnist(
    model: &RoaRnnModel,
    split: &MnistSplit,
    perm: &Permutation,
    batch: usize,
) -> anyhow::Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0;
    let idx: Vec<usize> = (0..split.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (inputs, labels) = split.sequence_batch(chunk, perm);
        let trace = model.forward_batch(None, &inputs, &ReadoutSteps::Final)?;
        let logits = &trace.outputs[0];
        loss += cross_entropy_batch(logits, &labels, 1.0)?.0;
        hits += argmax_columns(logits).iter().zip(&labels).filter(|(p, c)| p == c).count();
    }
    let n = split.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

fn train_mnist(cfg: &ExperimentConfig, data: &Mnist, log: &mut Log<'_>) -> anyhow::Result<(RoaRnnModel, usize, bool)> {
    let perm = load_permutation(cfg)?;
    let train = if cfg.subset < 1.0 { data.train.subset(cfg.subset, cfg.seed) } else { data.train.clone() };
    let mut model = build_rnn(cfg)?;
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let mut rng = seeded(cfg.seed ^ DATA_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch) {
            let (inputs, labels) = train.sequence_batch(idx, &perm);
            let trace = model.forward_batch(None, &inputs, &ReadoutSteps::Final)?;
            let scale = 1.0 / idx.len() as f64;
            let (loss, err) = cross_entropy_batch(&trace.outputs[0], &labels, scale)?;
            let grads = model.backward(&trace, &[err])?;
            step += 1;
            if !log.check_finite(step, loss * scale, &grads, ModelRef::Rnn(&model)) {
                return Ok((model, step, true));
            }
            opt.step(&mut model, &grads)?;
            log.push(step, Split::Train, loss * scale, None, Some(grads.l2_norm()), ModelRef::Rnn(&model));
        }
        if (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs {
            let (loss, acc) = eval_mnist(&model, &data.test, &perm, 500)?;
            log.push(step, Split::Test, loss, Some(acc), None, ModelRef::Rnn(&model));
        }
        if log.stopped {
            break;
        }
    }
    Ok((model, step, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn tiny_copy() -> ExperimentConfig {
        ExperimentConfig {
            hidden: 8,
            lag: 5,
            symbols: 3,
            batch: 4,
            iterations: 6,
            eval_every: 3,
            ..preset(Task::Copymem)
        }
    }

    #[test]
    fn deterministic_up_to_wall_clock() {
        let cfg = tiny_copy();
        let a = run_experiment(&cfg, &mut |_, _| Control::Continue).unwrap();
        let b = run_experiment(&cfg, &mut |_, _| Control::Continue).unwrap();
        let strip =
            |s: &RunSummary| s.rows.iter().map(|r| (r.step, r.split, r.loss.to_bits(), r.accuracy)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.split(Split::Eval).count(), 2);
        assert_eq!(a.split(Split::Train).count(), 6);
    }

    #[test]
    fn observer_stops_the_run() {
        let cfg = tiny_copy();
        let s = run_experiment(&cfg, &mut |r, _| if r.step >= 2 { Control::Stop } else { Control::Continue }).unwrap();
        assert!(s.stopped_early);
        assert_eq!(s.steps, 2);
    }

    #[test]
    fn divergence_is_recorded() {
        let mut cfg = ExperimentConfig { hidden: 4, length: 10, batch: 3, iterations: 50, ..preset(Task::Addprob) };
        cfg.optimizer = roa_core::OptimizerConfig::sgd(1e300);
        let s = run_experiment(&cfg, &mut |_, _| Control::Continue).unwrap();
        assert!(s.diverged);
        assert_eq!(s.rows.last().unwrap().split, Split::Nan);
        assert!(s.rows.iter().filter(|r| r.split != Split::Nan).all(|r| r.loss.is_finite()));
    }

    #[test]
    fn copy_accuracy_counts_only_recall_window() {
        let cfg = tiny_copy();
        let m = build_rnn(&cfg).unwrap();
        let (loss, acc, errors, _) = copy_loss(&m, &cfg, 3).unwrap();
        assert_eq!(errors.len(), cfg.lag + 2 * cfg.symbols);
        assert!(loss.is_finite() && (0.0..=1.0).contains(&acc));
    }

    #[test]
    fn eyernn_and_roarnn_share_parameters() {
        let cfg = ExperimentConfig { hidden: 6, ..preset(Task::Addprob) };
        let roa = build_rnn(&cfg).unwrap();
        let eye = build_rnn(&ExperimentConfig { model: ModelKind::Eyernn, ..cfg }).unwrap();
        assert_eq!(roa.params(), eye.params());
        assert_ne!(roa.filter(), eye.filter());
        assert_eq!(**eye.filter(), DenseMatrix::identity(6));
    }

    #[test]
    fn vanilla_rnn_uses_unit_alpha() {
        let cfg = ExperimentConfig { hidden: 6, model: ModelKind::RnnVanilla, ..preset(Task::Addprob) };
        assert_eq!(build_rnn(&cfg).unwrap().alpha(), 1.0);
    }

    #[test]
    fn mnist_without_data_is_a_usage_error() {
        let cfg = ExperimentConfig { data_dir: Some("/nonexistent/mnist".into()), ..preset(Task::Psmnist) };
        let err = run_experiment(&cfg, &mut |_, _| Control::Continue).unwrap_err();
        assert!(format!("{err:#}").contains("MNIST"));
    }
}
