//! Command-line front end: `train`, `evaluate`, `kernel-check`, and
//! `mcmc-compare`. A run is described by a JSON config document; every
//! flag overrides the corresponding key. Exit codes: 0 success, 2
//! config/IO, 3 checkpoint, 4 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, metrics, standardize, CsvSchema, Dataset, TaskKind, Targets};
use crate::features::{approx_gram, OmegaStrategy, SpectralBlock};
use crate::inference::{train, train_standardized, CsvSink, TrainSchedule};
use crate::kernels::{kernel_matrix, KernelFamily, KernelParams};
use crate::mcmc::{
    gibbs_run, synthetic_dataset, DgpHypers, GibbsConfig, PosteriorSamples,
};
use crate::model::{
    ArchitectureSpec, Checkpoint, DgpModel, ModelInit, PredictiveSummary, Task,
};
use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

/// JSON run configuration. Optional keys fall back to the defaults
/// documented on [`ResolvedConfig`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub task: Option<TaskKind>,
    pub layers: Option<usize>,
    pub gp_per_layer: Option<usize>,
    pub n_rf: Option<usize>,
    pub kernel: Option<String>,
    pub omega_strategy: Option<String>,
    pub feedforward_inputs: Option<bool>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub total_iters: Option<u64>,
    pub theta_freeze_iters: Option<u64>,
    /// Iteration at which the Monte Carlo sample count switches from
    /// `mc_phase1` to `mc_phase2`; defaults to half the budget.
    pub mc_phase_switch: Option<u64>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
    pub metrics_every: Option<u64>,
    pub test_fraction: Option<f64>,
    pub mc_phase1: Option<usize>,
    pub mc_phase2: Option<usize>,
    pub metrics_mc: Option<usize>,
    pub init_lengthscale: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<String>,
    pub label_col: Option<String>,
    /// Optional designated test file; when present the internal holdout
    /// split is skipped and metrics are evaluated here instead.
    pub test_path: Option<String>,
}

fn parse_kernel(name: &str) -> Result<KernelFamily> {
    match name {
        "rbf" => Ok(KernelFamily::Rbf),
        "arc-cosine" | "arc" | "arccos" => Ok(KernelFamily::arc_cosine(1)),
        other => Err(Error::Config(format!(
            "unknown kernel '{other}' (expected rbf or arc-cosine)"
        ))),
    }
}

fn parse_strategy(name: &str) -> Result<OmegaStrategy> {
    match name {
        "prior-fixed" => Ok(OmegaStrategy::PriorFixed),
        "var-fixed" => Ok(OmegaStrategy::VarFixed),
        "var-resampled" => Ok(OmegaStrategy::VarResampled),
        other => Err(Error::Config(format!(
            "unknown omega strategy '{other}' (expected prior-fixed, var-fixed or var-resampled)"
        ))),
    }
}

/// A fully validated training configuration with all defaults applied.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub dataset_path: PathBuf,
    pub label_col: String,
    pub test_path: Option<PathBuf>,
    pub task: TaskKind,
    pub layers: usize,
    pub gp_per_layer: usize,
    pub n_rf: usize,
    pub kernel: KernelFamily,
    pub omega_strategy: OmegaStrategy,
    pub feedforward_inputs: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub schedule: TrainSchedule,
    pub init_lengthscale: Option<f64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Validate and fill in defaults. Fails before any side effect when
    /// a referenced path does not exist or a value is out of range.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let dataset_path = PathBuf::from(
            self.dataset
                .path
                .clone()
                .ok_or_else(|| Error::Config("dataset.path is required".into()))?,
        );
        if !dataset_path.exists() {
            return Err(Error::Config(format!(
                "dataset file {} does not exist",
                dataset_path.display()
            )));
        }
        let test_path = match &self.dataset.test_path {
            Some(p) => {
                let p = PathBuf::from(p);
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "test file {} does not exist",
                        p.display()
                    )));
                }
                Some(p)
            }
            None => None,
        };
        let task = self.task.unwrap_or(TaskKind::Regression);
        let total_iters = self.total_iters.unwrap_or(10_000);
        if total_iters == 0 {
            return Err(Error::Config("total_iters must be positive".into()));
        }
        let test_fraction = self.test_fraction.unwrap_or(0.2);
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config("test_fraction must be in [0, 1)".into()));
        }
        let mut schedule = TrainSchedule::new(total_iters);
        schedule.theta_freeze_iters = self.theta_freeze_iters.unwrap_or(12_000);
        schedule.mc_switch_at = self.mc_phase_switch;
        schedule.batch_size = self.batch_size.unwrap_or(200).max(1);
        schedule.learning_rate = self.learning_rate.unwrap_or(0.01);
        schedule.metrics_every = self.metrics_every.unwrap_or(100).max(1);
        schedule.mc_phase1 = self.mc_phase1.unwrap_or(1).max(1);
        schedule.mc_phase2 = self.mc_phase2.unwrap_or(100).max(1);
        schedule.metrics_mc = self.metrics_mc.unwrap_or(25).max(1);
        schedule.holdout_fraction = if test_path.is_some() { 0.0 } else { test_fraction };

        Ok(ResolvedConfig {
            dataset_path,
            label_col: self
                .dataset
                .label_col
                .clone()
                .unwrap_or_else(|| "y".to_string()),
            test_path,
            task,
            layers: self.layers.unwrap_or(2).max(1),
            gp_per_layer: self.gp_per_layer.unwrap_or(3).max(1),
            n_rf: self.n_rf.unwrap_or(100).max(1),
            kernel: parse_kernel(self.kernel.as_deref().unwrap_or("rbf"))?,
            omega_strategy: parse_strategy(
                self.omega_strategy.as_deref().unwrap_or("var-fixed"),
            )?,
            feedforward_inputs: self.feedforward_inputs.unwrap_or(false),
            seed: self.seed.unwrap_or(1),
            out_dir: PathBuf::from(self.out_dir.clone().unwrap_or_else(|| ".".into())),
            schedule,
            init_lengthscale: self.init_lengthscale,
        })
    }
}

/// Architecture for a dataset: hidden layers of `gp_per_layer` GPs, the
/// final layer sized by the task output.
fn architecture(cfg: &ResolvedConfig, output_dim: usize, task: Task) -> ArchitectureSpec {
    let mut gp_count = vec![cfg.gp_per_layer; cfg.layers];
    gp_count[cfg.layers - 1] = output_dim;
    ArchitectureSpec {
        gp_count,
        n_rf: vec![cfg.n_rf; cfg.layers],
        kernel: cfg.kernel,
        omega_strategy: cfg.omega_strategy,
        feedforward_inputs: cfg.feedforward_inputs,
        task,
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    iterations: u64,
    final_elbo: f64,
    final_metric: f64,
    final_mnll: f64,
    wall_time_ms: u128,
}

/// Train per config; writes `metrics.csv`, `checkpoint.json`, and
/// `summary.json` into the output directory.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let cfg = config.resolve()?;
    let schema = CsvSchema {
        label_col: cfg.label_col.clone(),
        task: cfg.task,
    };
    let dataset = load_csv(&cfg.dataset_path, &schema)?;
    let test_set = cfg
        .test_path
        .as_ref()
        .map(|p| load_csv(p, &schema))
        .transpose()?;

    let task = match cfg.task {
        TaskKind::Regression => Task::Regression,
        TaskKind::Classification => {
            let mut n_classes = dataset.output_dim();
            if let Some(t) = &test_set {
                n_classes = n_classes.max(t.output_dim());
            }
            Task::Classification { n_classes }
        }
    };
    let output_dim = match task {
        Task::Regression => dataset.output_dim(),
        Task::Classification { n_classes } => n_classes,
    };
    let spec = architecture(&cfg, output_dim, task);
    spec.validate().map_err(Error::Config)?;

    fs::create_dir_all(&cfg.out_dir)?;
    let start = Instant::now();
    let mut rng = Rng::new(cfg.seed);
    let init = ModelInit {
        lengthscale: cfg.init_lengthscale,
        ..ModelInit::default()
    };
    let model = DgpModel::new_with(spec, dataset.input_dim(), &init, &mut rng);

    let metrics_file = fs::File::create(cfg.out_dir.join("metrics.csv"))?;
    let mut sink = CsvSink::new(std::io::BufWriter::new(metrics_file))?;

    let (trained, train_data, holdout) = match test_set {
        Some(raw_test) => {
            let train_data = standardize(&dataset);
            let stats = train_data.standardizer.clone().unwrap();
            let mut test = raw_test;
            test.x = stats.apply_x(&test.x);
            test.targets = stats.apply_targets(&test.targets);
            test.standardizer = Some(stats);
            let trained = train_standardized(
                model,
                &train_data,
                Some(&test),
                &cfg.schedule,
                &mut rng,
                &mut sink,
            );
            (trained, train_data, Some(test))
        }
        None => {
            let outcome = train(model, &dataset, &cfg.schedule, &mut rng, &mut sink);
            (outcome.trained, outcome.train_data, outcome.holdout)
        }
    };
    sink.into_inner().flush()?;

    let eval = holdout.as_ref().unwrap_or(&train_data);
    let mut eval_rng = rng.fork();
    let pred = trained
        .model
        .predict(&eval.x, cfg.schedule.metrics_mc, &mut eval_rng);
    let (metric, mnll) = metrics(&pred, &eval.targets);

    let checkpoint = Checkpoint {
        model: trained.model,
        rng,
        iteration: trained.iterations,
        standardizer: train_data.standardizer.clone(),
    };
    fs::write(cfg.out_dir.join("checkpoint.json"), checkpoint.to_json())?;

    let summary = RunSummary {
        iterations: trained.iterations,
        final_elbo: *trained.elbo_trace.last().unwrap(),
        final_metric: metric,
        final_mnll: mnll,
        wall_time_ms: start.elapsed().as_millis(),
    };
    fs::write(
        cfg.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    println!(
        "trained {} iterations: metric {:.6}, mnll {:.6}",
        summary.iterations, summary.final_metric, summary.final_mnll
    );
    Ok(())
}

/// Evaluate a checkpoint on a dataset; prints `{"metric": .., "mnll": ..}`.
pub fn cmd_evaluate(
    checkpoint_path: &Path,
    dataset_path: &Path,
    label_col: &str,
    n_mc: usize,
) -> Result<()> {
    let text = fs::read_to_string(checkpoint_path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", checkpoint_path.display())))?;
    let checkpoint = Checkpoint::from_json(&text)?;
    let task = match checkpoint.model.spec.task {
        Task::Regression => TaskKind::Regression,
        Task::Classification { .. } => TaskKind::Classification,
    };
    let schema = CsvSchema {
        label_col: label_col.to_string(),
        task,
    };
    let mut dataset = load_csv(dataset_path, &schema)?;
    match &checkpoint.standardizer {
        Some(stats) => {
            dataset.x = stats.apply_x(&dataset.x);
            dataset.targets = stats.apply_targets(&dataset.targets);
        }
        None => dataset = standardize(&dataset),
    }
    if dataset.input_dim() != checkpoint.model.input_dim {
        return Err(Error::Config(format!(
            "dataset has {} features but the checkpoint expects {}",
            dataset.input_dim(),
            checkpoint.model.input_dim
        )));
    }
    let mut rng = checkpoint.rng.clone();
    let pred = checkpoint.model.predict(&dataset.x, n_mc.max(1), &mut rng);
    let (metric, mnll) = metrics(&pred, &dataset.targets);
    println!("{{\"metric\": {metric}, \"mnll\": {mnll}}}");
    Ok(())
}

/// Gram-error sweep: max-abs error of the random-feature approximation
/// against the exact kernel for both families, three feature counts, ten
/// seeds. Writes `kernel_check.csv` with one row per (kernel, n_rf, seed).
pub fn cmd_kernel_check(out_dir: &Path, seed: u64) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut data_rng = Rng::new(seed);
    let x = data_rng.randn(20, 5);
    let mut rows = Vec::new();
    for (name, family) in [("rbf", KernelFamily::Rbf), ("arc-cosine", KernelFamily::arc_cosine(1))]
    {
        let params = KernelParams::new(family, 5);
        let exact = kernel_matrix(&x, &params);
        for n_rf in [100usize, 1000, 10_000] {
            for s in 0..10u64 {
                let mut rng = Rng::new(seed.wrapping_add(1000 * s + n_rf as u64));
                let block = SpectralBlock::init(OmegaStrategy::PriorFixed, &params, n_rf, &mut rng);
                let err = approx_gram(&x, &block, &params).max_abs_diff(&exact);
                rows.push((name, n_rf, s, err));
            }
        }
    }
    let mut out = String::from("kernel,n_rf,seed,max_abs_error\n");
    for (name, n_rf, s, err) in &rows {
        out.push_str(&format!("{name},{n_rf},{s},{err}\n"));
    }
    let path = out_dir.join("kernel_check.csv");
    fs::write(&path, out)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

/// Result of one variational run inside the MCMC comparison.
struct VariationalFit {
    grid_mean: Vec<f64>,
    grid_std: Vec<f64>,
    hypers: DgpHypers,
}

fn fit_variational_synthetic(
    data: &Dataset,
    grid_std_x: &Matrix,
    n_rf: usize,
    total_iters: u64,
    learning_rate: f64,
    seed: u64,
) -> VariationalFit {
    let spec = ArchitectureSpec {
        gp_count: vec![1, 1],
        n_rf: vec![n_rf, n_rf],
        kernel: KernelFamily::Rbf,
        omega_strategy: OmegaStrategy::VarFixed,
        feedforward_inputs: false,
        task: Task::Regression,
    };
    let mut rng = Rng::new(seed);
    let init = ModelInit {
        lengthscale: Some(1.0),
        ..ModelInit::default()
    };
    let model = DgpModel::new_with(spec, 1, &init, &mut rng);
    let mut schedule = TrainSchedule::new(total_iters);
    schedule.theta_freeze_iters = total_iters / 6;
    schedule.batch_size = data.n_points();
    schedule.learning_rate = learning_rate;
    schedule.metrics_every = u64::MAX; // no cadence output for the inner fits
    schedule.metrics_mc = 1;
    schedule.holdout_fraction = 0.0;
    let mut sink: Vec<crate::inference::MetricsRow> = Vec::new();
    let trained = train_standardized(model, data, None, &schedule, &mut rng, &mut sink);

    let model = trained.model;
    let pred = model.predict(grid_std_x, 100, &mut rng);
    let (grid_mean, grid_std) = match pred {
        PredictiveSummary::Regression { samples, .. } => {
            let n = grid_std_x.rows();
            let mut mean = vec![0.0; n];
            for s in &samples {
                for i in 0..n {
                    mean[i] += s.get(i, 0);
                }
            }
            for m in &mut mean {
                *m /= samples.len() as f64;
            }
            let mut std = vec![0.0; n];
            for s in &samples {
                for i in 0..n {
                    std[i] += (s.get(i, 0) - mean[i]) * (s.get(i, 0) - mean[i]);
                }
            }
            for v in &mut std {
                *v = (*v / (samples.len() as f64 - 1.0)).sqrt();
            }
            (mean, std)
        }
        _ => unreachable!("regression model"),
    };
    let hypers = DgpHypers {
        theta0: model.theta[0].clone(),
        theta1: model.theta[1].clone(),
        lambda: model.log_noise_var().unwrap().exp(),
    };
    VariationalFit {
        grid_mean,
        grid_std,
        hypers,
    }
}

/// Sign-aligned RMSE between two curves: the better of the identity and
/// the global sign flip.
pub fn sign_aligned_rmse(a: &[f64], b: &[f64]) -> f64 {
    let rmse = |flip: f64| {
        (a.iter()
            .zip(b)
            .map(|(x, y)| (x - flip * y) * (x - flip * y))
            .sum::<f64>()
            / a.len() as f64)
            .sqrt()
    };
    rmse(1.0).min(rmse(-1.0))
}

/// Generate the synthetic benchmark, fit the variational model at 10 and
/// 50 spectral frequencies, run the Gibbs sampler with the hyperparameters
/// frozen at the 50-frequency fit, and write the grid comparison CSV.
pub fn cmd_mcmc_compare(
    out_dir: &Path,
    seed: u64,
    total_iters: u64,
    learning_rate: f64,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut rng = Rng::new(seed);
    let (x, y) = synthetic_dataset(50, &mut rng);
    let raw = Dataset::new(x, Targets::Regression(y));
    let data = standardize(&raw);
    let stats = data.standardizer.clone().unwrap();

    let n_grid = 100;
    let grid = Matrix::from_fn(n_grid, 1, |i, _| {
        -3.0 + 6.0 * i as f64 / (n_grid - 1) as f64
    });
    let grid_std = stats.apply_x(&grid);

    let fit10 = fit_variational_synthetic(&data, &grid_std, 10, total_iters, learning_rate, seed + 1);
    let fit50 = fit_variational_synthetic(&data, &grid_std, 50, total_iters, learning_rate, seed + 2);

    let y_std_vec: Vec<f64> = match &data.targets {
        Targets::Regression(m) => m.iter().collect(),
        _ => unreachable!(),
    };
    let config = GibbsConfig {
        n_samples: 100,
        burn_in: 2000,
        thin: 20,
    };
    let samples: PosteriorSamples = gibbs_run(
        &data.x,
        &y_std_vec,
        &fit50.hypers,
        &config,
        &grid_std,
        rng.fork(),
    )?;
    let mcmc_mean = samples.test_mean();
    let mcmc_std = samples.test_std();

    let y_scale = stats.y_std[0];
    let y_shift = stats.y_mean[0];
    let mut out = String::from(
        "x,var10_mean,var10_std,var50_mean,var50_std,mcmc_mean,mcmc_std\n",
    );
    for i in 0..n_grid {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            grid.get(i, 0),
            fit10.grid_mean[i] * y_scale + y_shift,
            fit10.grid_std[i] * y_scale,
            fit50.grid_mean[i] * y_scale + y_shift,
            fit50.grid_std[i] * y_scale,
            mcmc_mean[i] * y_scale + y_shift,
            mcmc_std[i] * y_scale
        ));
    }
    let path = out_dir.join("mcmc_compare.csv");
    fs::write(&path, out)?;

    let agree = sign_aligned_rmse(
        &fit50.grid_mean.iter().map(|v| v * y_scale + y_shift).collect::<Vec<_>>(),
        &mcmc_mean.iter().map(|v| v * y_scale + y_shift).collect::<Vec<_>>(),
    );
    println!(
        "wrote {}; variational(50) vs MCMC sign-aligned RMSE: {agree:.4}",
        path.display()
    );
    Ok(())
}

#[derive(Parser)]
#[command(name = "dgp-rf", about = "Deep GPs via random feature expansions")]
struct CliArgs {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    /// JSON config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_path: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    test_path: Option<String>,
    #[arg(long, value_parser = ["regression", "classification"])]
    task: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    gp_per_layer: Option<usize>,
    #[arg(long)]
    n_rf: Option<usize>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    omega_strategy: Option<String>,
    #[arg(long)]
    feedforward_inputs: Option<bool>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    total_iters: Option<u64>,
    #[arg(long)]
    theta_freeze_iters: Option<u64>,
    #[arg(long)]
    mc_phase_switch: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    metrics_every: Option<u64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    mc_phase1: Option<usize>,
    #[arg(long)]
    mc_phase2: Option<usize>,
    #[arg(long)]
    metrics_mc: Option<usize>,
    #[arg(long)]
    init_lengthscale: Option<f64>,
}

impl TrainFlags {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if self.dataset_path.is_some() {
            config.dataset.path = self.dataset_path;
        }
        if self.label_col.is_some() {
            config.dataset.label_col = self.label_col;
        }
        if self.test_path.is_some() {
            config.dataset.test_path = self.test_path;
        }
        if let Some(task) = self.task {
            config.task = Some(match task.as_str() {
                "classification" => TaskKind::Classification,
                _ => TaskKind::Regression,
            });
        }
        config.layers = self.layers.or(config.layers);
        config.gp_per_layer = self.gp_per_layer.or(config.gp_per_layer);
        config.n_rf = self.n_rf.or(config.n_rf);
        config.kernel = self.kernel.or(config.kernel);
        config.omega_strategy = self.omega_strategy.or(config.omega_strategy);
        config.feedforward_inputs = self.feedforward_inputs.or(config.feedforward_inputs);
        config.batch_size = self.batch_size.or(config.batch_size);
        config.learning_rate = self.learning_rate.or(config.learning_rate);
        config.total_iters = self.total_iters.or(config.total_iters);
        config.theta_freeze_iters = self.theta_freeze_iters.or(config.theta_freeze_iters);
        config.mc_phase_switch = self.mc_phase_switch.or(config.mc_phase_switch);
        config.seed = self.seed.or(config.seed);
        config.out_dir = self.out_dir.or(config.out_dir);
        config.metrics_every = self.metrics_every.or(config.metrics_every);
        config.test_fraction = self.test_fraction.or(config.test_fraction);
        config.mc_phase1 = self.mc_phase1.or(config.mc_phase1);
        config.mc_phase2 = self.mc_phase2.or(config.mc_phase2);
        config.metrics_mc = self.metrics_mc.or(config.metrics_mc);
        config.init_lengthscale = self.init_lengthscale.or(config.init_lengthscale);
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics, checkpoint, and summary.
    Train(TrainFlags),
    /// Evaluate a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "y")]
        label_col: String,
        #[arg(long, default_value_t = 100)]
        n_mc: usize,
    },
    /// Audit random-feature Gram accuracy against the exact kernels.
    KernelCheck {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Reproduce the two-layer synthetic comparison between variational
    /// inference and the Gibbs sampler.
    McmcCompare {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 12_000)]
        total_iters: u64,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Checkpoint(_) => 3,
        Error::Numerical(_) => 4,
        _ => 2,
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match CliArgs::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Train(flags) => flags.into_config().and_then(|c| cmd_train(&c)),
        Command::Evaluate {
            checkpoint,
            dataset,
            label_col,
            n_mc,
        } => cmd_evaluate(&checkpoint, &dataset, &label_col, n_mc),
        Command::KernelCheck { out_dir, seed } => cmd_kernel_check(&out_dir, seed),
        Command::McmcCompare {
            out_dir,
            seed,
            total_iters,
            learning_rate,
        } => cmd_mcmc_compare(&out_dir, seed, total_iters, learning_rate),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
