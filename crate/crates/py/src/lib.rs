//! Python bindings: the layered model with train/predict, the exact
//! kernels, the feature maps, and the synthetic benchmark generator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dgp_rf::data::{Dataset, Targets};
use dgp_rf::features::OmegaStrategy;
use dgp_rf::inference::{elbo_minibatch, train_standardized, MetricsRow, TrainSchedule};
use dgp_rf::kernels::{self, KernelFamily, KernelParams};
use dgp_rf::model::{ArchitectureSpec, Checkpoint, DgpModel, ModelInit, PredictiveSummary, Task};
use dgp_rf::numerics::{Matrix, Rng};

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    Ok(Matrix::from_vec(
        rows.len(),
        cols,
        rows.into_iter().flatten().collect(),
    ))
}

fn to_lists(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn kernel_params(
    kernel: &str,
    sigma2: f64,
    lengthscales: Vec<f64>,
) -> PyResult<KernelParams> {
    let family = match kernel {
        "rbf" => KernelFamily::Rbf,
        "arc-cosine" => KernelFamily::arc_cosine(1),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown kernel '{other}'"
            )))
        }
    };
    let mut params = KernelParams::new(family, lengthscales.len()).with_sigma2(sigma2);
    params.log_lengthscales = lengthscales.iter().map(|l| l.ln()).collect();
    Ok(params)
}

/// Exact RBF covariance with ARD lengthscales.
#[pyfunction]
fn rbf_kernel(x: Vec<f64>, x2: Vec<f64>, sigma2: f64, lengthscales: Vec<f64>) -> PyResult<f64> {
    let params = kernel_params("rbf", sigma2, lengthscales)?;
    Ok(kernels::rbf_kernel(&x, &x2, &params))
}

/// Exact arc-cosine covariance of the given order.
#[pyfunction]
fn arccos_kernel(
    x: Vec<f64>,
    x2: Vec<f64>,
    order: u8,
    sigma2: f64,
    lengthscales: Vec<f64>,
) -> PyResult<f64> {
    let mut params = kernel_params("arc-cosine", sigma2, lengthscales)?;
    params.family = KernelFamily::arc_cosine(order);
    Ok(kernels::arccos_kernel(&x, &x2, &params, order))
}

/// Trigonometric feature map `[cos(F omega), sin(F omega)]`, scaled.
#[pyfunction]
fn phi_rbf(
    f: Vec<Vec<f64>>,
    omega: Vec<Vec<f64>>,
    sigma2: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let f = to_matrix(f)?;
    let omega = to_matrix(omega)?;
    Ok(to_lists(&dgp_rf::features::phi_rbf(&f, &omega, sigma2)))
}

/// Rectified-linear feature map, scaled.
#[pyfunction]
fn phi_arc(
    f: Vec<Vec<f64>>,
    omega: Vec<Vec<f64>>,
    sigma2: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let f = to_matrix(f)?;
    let omega = to_matrix(omega)?;
    Ok(to_lists(&dgp_rf::features::phi_arc(&f, &omega, sigma2)))
}

/// KL divergence between scalar Gaussians.
#[pyfunction]
fn kl_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    dgp_rf::inference::kl_gaussian(m1, v1, m2, v2)
}

/// The synthetic benchmark: x ~ U[-3,3], y = h(h(x)) + N(0, 0.01) with
/// h(x) = 2x exp(-x^2). Returns (x, y) as flat lists.
#[pyfunction]
fn synthetic_dataset(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Rng::new(seed);
    let (x, y) = dgp_rf::mcmc::synthetic_dataset(n, &mut rng);
    (x.iter().collect(), y.iter().collect())
}

/// A deep GP approximated by random feature expansions.
#[pyclass]
struct Dgp {
    model: DgpModel,
}

#[pymethods]
impl Dgp {
    /// Build a fresh model. `gp_count` and `n_rf` are per-layer lists;
    /// the last `gp_count` entry must match the output dimension
    /// (or class count).
    #[new]
    #[pyo3(signature = (input_dim, gp_count, n_rf, kernel="rbf", omega_strategy="var-fixed",
                        feedforward_inputs=false, task="regression", n_classes=None, seed=1,
                        init_lengthscale=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_dim: usize,
        gp_count: Vec<usize>,
        n_rf: Vec<usize>,
        kernel: &str,
        omega_strategy: &str,
        feedforward_inputs: bool,
        task: &str,
        n_classes: Option<usize>,
        seed: u64,
        init_lengthscale: Option<f64>,
    ) -> PyResult<Self> {
        let kernel = match kernel {
            "rbf" => KernelFamily::Rbf,
            "arc-cosine" => KernelFamily::arc_cosine(1),
            other => return Err(PyValueError::new_err(format!("unknown kernel '{other}'"))),
        };
        let omega_strategy = match omega_strategy {
            "prior-fixed" => OmegaStrategy::PriorFixed,
            "var-fixed" => OmegaStrategy::VarFixed,
            "var-resampled" => OmegaStrategy::VarResampled,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown omega strategy '{other}'"
                )))
            }
        };
        let task = match task {
            "regression" => Task::Regression,
            "classification" => Task::Classification {
                n_classes: n_classes
                    .ok_or_else(|| PyValueError::new_err("classification needs n_classes"))?,
            },
            other => return Err(PyValueError::new_err(format!("unknown task '{other}'"))),
        };
        let spec = ArchitectureSpec {
            gp_count,
            n_rf,
            kernel,
            omega_strategy,
            feedforward_inputs,
            task,
        };
        spec.validate().map_err(PyValueError::new_err)?;
        let init = ModelInit {
            lengthscale: init_lengthscale,
            ..ModelInit::default()
        };
        Ok(Dgp {
            model: DgpModel::new_with(spec, input_dim, &init, &mut Rng::new(seed)),
        })
    }

    /// Run the optimizer on (x, y). Regression targets are a matrix;
    /// classification labels a flat list of class indices. Returns the
    /// metrics rows as dicts.
    #[pyo3(signature = (x, y=None, labels=None, total_iters=1000, batch_size=200,
                        learning_rate=0.01, theta_freeze_iters=0, mc_phase_switch=None,
                        seed=1, metrics_every=100))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Option<Vec<Vec<f64>>>,
        labels: Option<Vec<usize>>,
        total_iters: u64,
        batch_size: usize,
        learning_rate: f64,
        theta_freeze_iters: u64,
        mc_phase_switch: Option<u64>,
        seed: u64,
        metrics_every: u64,
    ) -> PyResult<Vec<Py<PyDict>>> {
        let x = to_matrix(x)?;
        let targets = match (y, labels) {
            (Some(y), None) => Targets::Regression(to_matrix(y)?),
            (None, Some(labels)) => Targets::Classification(labels),
            _ => {
                return Err(PyValueError::new_err(
                    "pass exactly one of y (regression) or labels (classification)",
                ))
            }
        };
        let data = Dataset::new(x, targets);
        let mut schedule = TrainSchedule::new(total_iters);
        schedule.batch_size = batch_size;
        schedule.learning_rate = learning_rate;
        schedule.theta_freeze_iters = theta_freeze_iters;
        schedule.mc_switch_at = mc_phase_switch;
        schedule.metrics_every = metrics_every;
        schedule.metrics_mc = 10;
        schedule.holdout_fraction = 0.0;
        let mut rows: Vec<MetricsRow> = Vec::new();
        let trained = train_standardized(
            self.model.clone(),
            &data,
            None,
            &schedule,
            &mut Rng::new(seed),
            &mut rows,
        );
        self.model = trained.model;
        rows.into_iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("iter", r.iter)?;
                d.set_item("elapsed_ms", r.elapsed_ms)?;
                d.set_item("elbo", r.elbo)?;
                d.set_item("metric", r.metric)?;
                d.set_item("mnll", r.mnll)?;
                Ok(d.unbind())
            })
            .collect()
    }

    /// Monte Carlo predictive summary: for regression a dict with
    /// `mean`/`var`, for classification `probs`/`labels`.
    #[pyo3(signature = (x, n_mc=100, seed=1))]
    fn predict(
        &self,
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        n_mc: usize,
        seed: u64,
    ) -> PyResult<Py<PyDict>> {
        let x = to_matrix(x)?;
        let out = PyDict::new(py);
        match self.model.predict(&x, n_mc, &mut Rng::new(seed)) {
            PredictiveSummary::Regression { mean, var, .. } => {
                out.set_item("mean", to_lists(&mean))?;
                out.set_item("var", to_lists(&var))?;
            }
            PredictiveSummary::Classification { log_probs, labels } => {
                out.set_item("probs", to_lists(&log_probs.map(f64::exp)))?;
                out.set_item("labels", labels)?;
            }
        }
        Ok(out.unbind())
    }

    /// One seeded estimate of the evidence lower bound, as the tuple
    /// (total, data_fit, kl_w, kl_omega).
    #[pyo3(signature = (x, y=None, labels=None, n_mc=1, seed=1))]
    fn elbo(
        &self,
        x: Vec<Vec<f64>>,
        y: Option<Vec<Vec<f64>>>,
        labels: Option<Vec<usize>>,
        n_mc: usize,
        seed: u64,
    ) -> PyResult<(f64, f64, f64, f64)> {
        let x = to_matrix(x)?;
        let targets = match (y, labels) {
            (Some(y), None) => Targets::Regression(to_matrix(y)?),
            (None, Some(labels)) => Targets::Classification(labels),
            _ => {
                return Err(PyValueError::new_err(
                    "pass exactly one of y (regression) or labels (classification)",
                ))
            }
        };
        let n = x.rows();
        let est = elbo_minibatch(&self.model, &x, &targets, n, n_mc, &mut Rng::new(seed));
        Ok((est.total, est.data_fit, est.kl_w, est.kl_omega))
    }

    /// Serialize the model (with a fresh RNG of the given seed) to the
    /// checkpoint JSON format.
    #[pyo3(signature = (seed=1))]
    fn to_json(&self, seed: u64) -> String {
        Checkpoint {
            model: self.model.clone(),
            rng: Rng::new(seed),
            iteration: 0,
            standardizer: None,
        }
        .to_json()
    }

    /// Restore a model from checkpoint JSON.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::from_json(text)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(Dgp { model: ckpt.model })
    }
}

#[pymodule]
fn dgp_rf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dgp>()?;
    m.add_function(wrap_pyfunction!(rbf_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(arccos_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(phi_rbf, m)?)?;
    m.add_function(wrap_pyfunction!(phi_arc, m)?)?;
    m.add_function(wrap_pyfunction!(kl_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_dataset, m)?)?;
    Ok(())
}
