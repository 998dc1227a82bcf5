use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use roa_cli::ablate::{ablation_preset, loss_area, metric_files, run_ablation};
use roa_cli::certify::{run_certify, CertifyOptions};
use roa_cli::config::{preset, ExperimentConfig, ModelKind, Task};
use roa_cli::train::{metric_record, run_experiment, Control, Split, DATA_DIR_ENV};
use roa_core::checkpoint::read_header;
use roa_core::mnist::Permutation;
use roa_core::tasks::{gen_add_batch, gen_copy_batch, gen_double_moon, AddProbConfig, CopyMemConfig, DoubleMoonConfig};
use roa_core::{ActivationKind, FilterKind, OptimizerConfig, OptimizerKind};

#[derive(Parser)]
#[command(name = "roa", version, about = "Train and certify roaFNN / roaRNN models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics.csv and final.ckpt.
    Train(ConfigArgs),
    /// Check the isometry bounds on a fresh or trained model.
    Certify {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        probes: usize,
        /// Probe sequence length (recurrent models).
        #[arg(long, default_value_t = 100)]
        probe_length: usize,
        /// Where to write the JSON report (stdout if absent).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Paired eyeRNN / roaRNN runs from identical initial parameters.
    Ablate {
        #[arg(long, value_enum, default_value = "addprob")]
        task: Task,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a sample of task data as CSV (or the pixel permutation).
    GenData {
        #[arg(value_enum)]
        kind: DataKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 100)]
        lag: usize,
        #[arg(long, default_value_t = 10)]
        symbols: usize,
        #[arg(long, default_value_t = 200)]
        length: usize,
        #[arg(long, default_value_t = 1000)]
        n_points: usize,
        /// Output file (stdout if absent).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the header of a checkpoint file.
    InspectCheckpoint { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    DoubleMoon,
    Copymem,
    Addprob,
    Permutation,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML or JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the named preset.
    #[arg(long, value_enum)]
    preset: Option<Task>,
    #[arg(long, value_enum)]
    task: Option<Task>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    symbols: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    activation: Option<ActivationKind>,
    #[arg(long)]
    filter: Option<FilterKind>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    subset: Option<f64>,
    #[arg(long)]
    permutation: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match (&self.config, self.preset.or(self.task)) {
            (Some(p), _) => ExperimentConfig::from_file(p)?,
            (None, Some(t)) => preset(t),
            (None, None) => bail!("give --preset, --task or --config"),
        };
        if let Some(t) = self.task {
            if t != c.task {
                let keep = c.clone();
                c = ExperimentConfig { seed: keep.seed, output: keep.output, ..preset(t) };
            }
        }
        if let Some(m) = self.model {
            c.model = m;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            hidden,
            hidden_layers,
            lag,
            symbols,
            length,
            activation,
            filter,
            batch,
            epochs,
            iterations,
            eval_every,
            seed,
            n_points,
            subset
        );
        if self.rho.is_some() {
            c.rho = self.rho;
            c.alpha = None;
        }
        if self.alpha.is_some() {
            c.alpha = self.alpha;
        }
        if let Some(kind) = self.optimizer {
            let lr = self.lr.unwrap_or(c.optimizer.learning_rate);
            c.optimizer = OptimizerConfig { kind, learning_rate: lr, ..c.optimizer };
        } else if let Some(lr) = self.lr {
            c.optimizer.learning_rate = lr;
            c.optimizer.schedule.clear();
        }
        if self.data_dir.is_some() {
            c.data_dir = self.data_dir;
        }
        if self.permutation.is_some() {
            c.permutation = self.permutation;
        }
        if self.output.is_some() {
            c.output = self.output;
        }
        c.validate()?;
        Ok(c)
    }
}

fn emit(output: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let verbose = cfg.output.is_some();
            let summary = run_experiment(&cfg, &mut |row, _| {
                if row.split != Split::Train || !verbose {
                    println!("{}", metric_record(row).join(","));
                }
                Control::Continue
            })?;
            eprintln!(
                "{} steps{}{}",
                summary.steps,
                if summary.diverged { ", diverged (NaN)" } else { "" },
                summary.metrics_path.map(|p| format!(", metrics in {}", p.display())).unwrap_or_default()
            );
        }
        Command::Certify { config, checkpoint, probes, probe_length, report } => {
            let cfg = config.resolve()?;
            let opts =
                CertifyOptions { checkpoint, probes, length: probe_length, seed: cfg.seed, output: report.clone() };
            let out = run_certify(&cfg, &opts)?;
            if report.is_none() {
                println!("{}", serde_json::to_string_pretty(&out)?);
            }
            eprintln!(
                "{}: max sv {:.6e}, min sv {:.6e}, bounds [{:.6e}, {:.6e}]",
                if out.report.pass { "pass" } else { "FAIL" },
                out.report.max_singular_value(),
                out.report.min_singular_value(),
                out.report.bounds.lower,
                out.report.bounds.upper
            );
        }
        Command::Ablate { task, seeds, iterations, lr, output } => {
            let mut cfg = ablation_preset(task);
            cfg.output = Some(output);
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            if let Some(lr) = lr {
                cfg.optimizer.learning_rate = lr;
            }
            let horizon = cfg.iterations;
            let pairs = run_ablation(&cfg, &seeds, |p| {
                let last = p.last().expect("one pair per call");
                println!(
                    "seed {}: loss area roarnn {:.4} eyernn {:.4}",
                    last.seed,
                    loss_area(&last.roa, horizon),
                    loss_area(&last.eye, horizon)
                );
                true
            })?;
            eprintln!("{} metric files written", metric_files(&pairs).len());
        }
        Command::GenData { kind, seed, batch, lag, symbols, length, n_points, output } => {
            let text = match kind {
                DataKind::DoubleMoon => {
                    let d = gen_double_moon(&DoubleMoonConfig { n_points, seed, ..Default::default() })?;
                    let rows = d
                        .points
                        .iter()
                        .zip(&d.labels)
                        .map(|(p, l)| vec![p[0].to_string(), p[1].to_string(), l.to_string()]);
                    csv_text(&["x1", "x2", "label"], rows)?
                }
                DataKind::Copymem => {
                    let b = gen_copy_batch(&CopyMemConfig { symbols, lag, batch, seed })?;
                    let rows = (0..batch).flat_map(|j| {
                        let b = &b;
                        (0..b.len()).map(move |k| {
                            vec![
                                j.to_string(),
                                (k + 1).to_string(),
                                b.input_codes[k][j].to_string(),
                                b.targets[k][j].to_string(),
                            ]
                        })
                    });
                    csv_text(&["sample", "step", "input", "target"], rows)?
                }
                DataKind::Addprob => {
                    let b = gen_add_batch(&AddProbConfig { length, batch, seed })?;
                    let rows = (0..batch).flat_map(|j| {
                        let b = &b;
                        (0..length).map(move |k| {
                            vec![
                                j.to_string(),
                                (k + 1).to_string(),
                                b.inputs[k][(0, j)].to_string(),
                                b.inputs[k][(1, j)].to_string(),
                                b.targets[(0, j)].to_string(),
                            ]
                        })
                    });
                    csv_text(&["sample", "step", "value", "marker", "target"], rows)?
                }
                DataKind::Permutation => Permutation::seeded(seed).to_text(),
            };
            emit(output.as_ref(), &text)?;
        }
        Command::InspectCheckpoint { path } => {
            let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let header = read_header(&bytes)?;
            println!("{}", serde_json::to_string_pretty(&header)?);
        }
    }
    Ok(())
}
