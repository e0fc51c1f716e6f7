//! The training loop: epoch-shuffled minibatches, the theta freeze and
//! Monte Carlo sample schedule, metric emission on a fixed cadence.

use std::io::Write;

use crate::data::{metrics, split, standardize, Dataset};
use crate::features::phi_width;
use crate::model::{DgpModel, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::numerics::Rng;

use super::adam::AdamState;
use super::engine::grad_elbo;
use super::params::{params_to_vec, set_params, ParamLayout};

/// Schedule and optimizer settings for one run.
#[derive(Debug, Clone)]
pub struct TrainSchedule {
    pub total_iters: u64,
    /// Covariance parameters (and the noise variance) stay at their
    /// initial values for this many iterations.
    pub theta_freeze_iters: u64,
    /// Monte Carlo samples before and after the phase switch.
    pub mc_phase1: usize,
    pub mc_phase2: usize,
    /// Iteration at which the sample count switches; `None` means half
    /// the total budget.
    pub mc_switch_at: Option<u64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Emit a metrics row every this many iterations.
    pub metrics_every: u64,
    /// Monte Carlo samples used for held-out metric evaluation.
    pub metrics_mc: usize,
    /// Fraction of the dataset held out by [`train`]; 0 evaluates
    /// metrics on the training data instead.
    pub holdout_fraction: f64,
}

impl TrainSchedule {
    pub fn new(total_iters: u64) -> Self {
        TrainSchedule {
            total_iters,
            theta_freeze_iters: 12_000,
            mc_phase1: 1,
            mc_phase2: 100,
            mc_switch_at: None,
            batch_size: 200,
            learning_rate: 0.01,
            metrics_every: 100,
            metrics_mc: 25,
            holdout_fraction: 0.2,
        }
    }

    pub fn n_mc_at(&self, iter: u64) -> usize {
        let switch = self.mc_switch_at.unwrap_or(self.total_iters / 2);
        if iter < switch {
            self.mc_phase1
        } else {
            self.mc_phase2
        }
    }

    pub fn theta_frozen_at(&self, iter: u64) -> bool {
        iter < self.theta_freeze_iters
    }
}

/// One metrics record: iteration count, deterministic compute clock,
/// current minibatch ELBO, held-out task error and MNLL.
///
/// `elapsed_ms` is modeled time, not wall time: cumulative multiply-add
/// count divided by 10^6 (milliseconds on a one-GFLOP/s reference
/// machine). It is monotone, proportional to actual compute, and exactly
/// reproducible, which keeps metrics files byte-identical across reruns;
/// real wall time belongs to the run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iter: u64,
    pub elapsed_ms: u64,
    pub elbo: f64,
    pub metric: f64,
    pub mnll: f64,
}

pub trait MetricsSink {
    fn record(&mut self, row: &MetricsRow);
}

impl MetricsSink for Vec<MetricsRow> {
    fn record(&mut self, row: &MetricsRow) {
        self.push(row.clone());
    }
}

/// Writes `iter,elapsed_ms,elbo,metric,mnll` rows to any writer.
pub struct CsvSink<W: Write> {
    writer: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut writer: W) -> std::io::Result<Self> {
        writeln!(writer, "iter,elapsed_ms,elbo,metric,mnll")?;
        Ok(CsvSink { writer })
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn record(&mut self, row: &MetricsRow) {
        writeln!(
            self.writer,
            "{},{},{},{},{}",
            row.iter, row.elapsed_ms, row.elbo, row.metric, row.mnll
        )
        .expect("metrics write");
    }
}

/// A trained model plus the quantities the caller typically reports.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: DgpModel,
    pub iterations: u64,
    /// Per-iteration minibatch ELBO values.
    pub elbo_trace: Vec<f64>,
    /// Final value of the deterministic compute clock.
    pub elapsed_ms: u64,
}

/// [`TrainedModel`] together with the split the run used, so callers can
/// checkpoint the standardizer and evaluate consistently.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trained: TrainedModel,
    pub train_data: Dataset,
    pub holdout: Option<Dataset>,
}

/// Split (per the schedule's holdout fraction), standardize on the
/// training part, and run the optimization.
pub fn train(
    model: DgpModel,
    dataset: &Dataset,
    schedule: &TrainSchedule,
    rng: &mut Rng,
    sink: &mut dyn MetricsSink,
) -> TrainOutcome {
    assert!(dataset.n_points() > 0, "dataset must be nonempty");
    let (train_data, holdout) = if schedule.holdout_fraction > 0.0 {
        let (tr, ho) = split(dataset, schedule.holdout_fraction, rng.next_u64());
        (tr, Some(ho))
    } else {
        (standardize(dataset), None)
    };
    let trained = train_standardized(model, &train_data, holdout.as_ref(), schedule, rng, sink);
    TrainOutcome {
        trained,
        train_data,
        holdout,
    }
}

/// Core loop over an already-standardized training set. Metrics are
/// evaluated on `eval_data` when given, otherwise on the training set.
pub fn train_standardized(
    mut model: DgpModel,
    train_data: &Dataset,
    eval_data: Option<&Dataset>,
    schedule: &TrainSchedule,
    rng: &mut Rng,
    sink: &mut dyn MetricsSink,
) -> TrainedModel {
    let n_total = train_data.n_points();
    assert!(n_total > 0, "training set must be nonempty");
    assert_eq!(train_data.input_dim(), model.input_dim, "input width");
    let batch_size = schedule.batch_size.min(n_total).max(1);

    // metric evaluation draws from its own stream so the training stream
    // does not depend on the cadence
    let mut metrics_rng = rng.fork();

    let layout = ParamLayout::of(&model);
    let theta_mask = layout.theta_mask();
    let log_var_mask: Vec<bool> = (0..layout.n_params)
        .map(|i| layout.kind_of(i).is_log_var())
        .collect();
    let mut params = params_to_vec(&model);
    let mut adam = AdamState::new(layout.n_params, schedule.learning_rate);

    let mut order: Vec<usize> = (0..n_total).collect();
    let mut cursor = n_total; // forces a shuffle on the first iteration
    let mut elbo_trace = Vec::with_capacity(schedule.total_iters as usize);
    let mut work: u64 = 0;

    for iter in 0..schedule.total_iters {
        if cursor + batch_size > n_total {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let batch_idx = &order[cursor..cursor + batch_size];
        cursor += batch_size;

        let bx = train_data.x.gather_rows(batch_idx);
        let bt = train_data.targets.gather(batch_idx);
        let n_mc = schedule.n_mc_at(iter);
        let (est, mut grad) = grad_elbo(&model, &bx, &bt, n_total, n_mc, rng);
        elbo_trace.push(est.total);
        work += iteration_work(&model, batch_size, n_mc);

        if schedule.theta_frozen_at(iter) {
            for (g, &frozen) in grad.flat.iter_mut().zip(&theta_mask) {
                if frozen {
                    *g = 0.0;
                }
            }
        }
        adam.step(&mut params, &grad.flat);
        for (p, &is_lv) in params.iter_mut().zip(&log_var_mask) {
            if is_lv {
                *p = p.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
            }
        }
        set_params(&mut model, &params);

        let last = iter + 1 == schedule.total_iters;
        if (iter + 1) % schedule.metrics_every == 0 || last {
            let eval = eval_data.unwrap_or(train_data);
            let mut eval_rng = metrics_rng.fork();
            let pred = model.predict(&eval.x, schedule.metrics_mc, &mut eval_rng);
            let (metric, mnll) = metrics(&pred, &eval.targets);
            sink.record(&MetricsRow {
                iter: iter + 1,
                elapsed_ms: work / 1_000_000,
                elbo: est.total,
                metric,
                mnll,
            });
        }
    }

    TrainedModel {
        model,
        iterations: schedule.total_iters,
        elbo_trace,
        elapsed_ms: work / 1_000_000,
    }
}

/// Multiply-add count of one iteration: the two products per layer and
/// Monte Carlo sample, with the backward sweep costing roughly twice the
/// forward one.
fn iteration_work(model: &DgpModel, batch: usize, n_mc: usize) -> u64 {
    let mut per_sample = 0u64;
    for l in 0..model.n_layers() {
        let d_in = model.layer_input_dim(l) as u64;
        let n_rf = model.spec.n_rf[l] as u64;
        let width = phi_width(model.spec.kernel, model.spec.n_rf[l]) as u64;
        let d_out = model.spec.gp_count[l] as u64;
        per_sample += batch as u64 * (d_in * n_rf + width * d_out);
    }
    3 * per_sample * n_mc as u64
}
