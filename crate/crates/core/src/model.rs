//! The layered model: alternating random-feature maps and variationally
//! weighted linear maps. A draw from the weight posterior turns the model
//! into a concrete deterministic network; predictions are Monte Carlo
//! mixtures over such draws.

use serde::{Deserialize, Serialize};

use crate::features::{phi, phi_width, OmegaStrategy, SpectralBlock};
use crate::kernels::{KernelFamily, KernelParams};
use crate::likelihoods::{logsumexp, softmax, LikelihoodSpec};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification { n_classes: usize },
}

/// Shape of the network: how many GP layers, how many GPs and spectral
/// frequencies per layer, which kernel and frequency treatment, whether
/// the raw inputs are concatenated onto every hidden layer.
///
/// `gp_count[l]` is the output width of layer `l`; the last entry must be
/// the task output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub gp_count: Vec<usize>,
    pub n_rf: Vec<usize>,
    pub kernel: KernelFamily,
    pub omega_strategy: OmegaStrategy,
    pub feedforward_inputs: bool,
    pub task: Task,
}

impl ArchitectureSpec {
    pub fn n_layers(&self) -> usize {
        self.gp_count.len()
    }

    pub fn output_dim(&self) -> usize {
        *self.gp_count.last().expect("at least one layer")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.gp_count.is_empty() {
            return Err("architecture needs at least one layer".into());
        }
        if self.gp_count.len() != self.n_rf.len() {
            return Err(format!(
                "gp_count has {} layers but n_rf has {}",
                self.gp_count.len(),
                self.n_rf.len()
            ));
        }
        if self.gp_count.iter().chain(&self.n_rf).any(|&c| c == 0) {
            return Err("layer widths and feature counts must be >= 1".into());
        }
        if let Task::Classification { n_classes } = self.task {
            if n_classes < 2 {
                return Err("classification needs at least two classes".into());
            }
            if self.output_dim() != n_classes {
                return Err(format!(
                    "last layer width {} must equal class count {}",
                    self.output_dim(),
                    n_classes
                ));
            }
        }
        Ok(())
    }
}

/// Factorized Gaussian over the entries of one weight matrix, stored as
/// elementwise means and log-variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianVariational {
    pub mean: Matrix,
    pub log_var: Matrix,
}

impl GaussianVariational {
    pub fn shape(&self) -> (usize, usize) {
        self.mean.shape()
    }

    /// `mean + exp(log_var / 2) * eps`, elementwise.
    pub fn reparameterize(&self, eps: &Matrix) -> Matrix {
        assert_eq!(self.mean.shape(), eps.shape(), "noise shape mismatch");
        let mut out = self.mean.clone();
        for ((o, &lv), &e) in out
            .data_mut()
            .iter_mut()
            .zip(self.log_var.data())
            .zip(eps.data())
        {
            *o += (0.5 * lv).exp() * e;
        }
        out
    }
}

/// Bounds applied to every stored log-variance after each optimizer step,
/// keeping `exp` well away from overflow in sampling and KL terms.
pub const LOG_VAR_MIN: f64 = -20.0;
pub const LOG_VAR_MAX: f64 = 5.0;

/// Initialization constants for a fresh model.
#[derive(Debug, Clone)]
pub struct ModelInit {
    /// Absolute lengthscale for every layer; `None` means
    /// `sqrt(layer input dimension)`, which keeps the projections
    /// `F omega` at unit scale for standardized inputs.
    pub lengthscale: Option<f64>,
    /// Std of the Gaussian used to draw initial posterior means for W.
    pub w_mean_std: f64,
    /// Initial posterior log-variance for W entries.
    pub w_log_var: f64,
    /// Initial observation-noise variance (regression).
    pub noise_var: f64,
}

impl Default for ModelInit {
    fn default() -> Self {
        ModelInit {
            lengthscale: None,
            w_mean_std: 0.1,
            w_log_var: -11.5,
            noise_var: 0.01,
        }
    }
}

/// One concrete set of weights sampled from the posterior, with the
/// underlying noise recorded so the same draw can be replayed by the
/// gradient computation.
#[derive(Debug, Clone)]
pub struct WeightDraw {
    pub w: Vec<Matrix>,
    pub eps_w: Vec<Matrix>,
    /// Fresh frequency noise, present only under `VarResampled`.
    pub eps_omega: Vec<Option<Matrix>>,
}

/// The full model state: architecture, kernel parameters, spectral
/// frequencies and weight posteriors per layer, plus the likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpModel {
    pub spec: ArchitectureSpec,
    pub input_dim: usize,
    pub theta: Vec<KernelParams>,
    pub spectral: Vec<SpectralBlock>,
    pub w_posterior: Vec<GaussianVariational>,
    pub likelihood: LikelihoodSpec,
}

impl DgpModel {
    pub fn new(spec: ArchitectureSpec, input_dim: usize, rng: &mut Rng) -> Self {
        Self::new_with(spec, input_dim, &ModelInit::default(), rng)
    }

    pub fn new_with(
        spec: ArchitectureSpec,
        input_dim: usize,
        init: &ModelInit,
        rng: &mut Rng,
    ) -> Self {
        spec.validate().expect("invalid architecture");
        assert!(input_dim >= 1);
        let n_layers = spec.n_layers();

        let mut theta = Vec::with_capacity(n_layers);
        let mut spectral = Vec::with_capacity(n_layers);
        let mut w_posterior = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let d_in = layer_input_dim(&spec, input_dim, l);
            let lengthscale = init.lengthscale.unwrap_or_else(|| (d_in as f64).sqrt());
            let params =
                KernelParams::new(spec.kernel, d_in).with_lengthscale(lengthscale);
            spectral.push(SpectralBlock::init(
                spec.omega_strategy,
                &params,
                spec.n_rf[l],
                rng,
            ));
            theta.push(params);

            let rows = phi_width(spec.kernel, spec.n_rf[l]);
            let cols = spec.gp_count[l];
            let mean = rng.randn(rows, cols).scale(init.w_mean_std);
            let log_var = Matrix::from_fn(rows, cols, |_, _| init.w_log_var);
            w_posterior.push(GaussianVariational { mean, log_var });
        }

        let likelihood = match spec.task {
            Task::Regression => LikelihoodSpec::Gaussian {
                log_noise_var: init.noise_var.ln(),
            },
            Task::Classification { n_classes } => LikelihoodSpec::Softmax { n_classes },
        };

        DgpModel {
            spec,
            input_dim,
            theta,
            spectral,
            w_posterior,
            likelihood,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.spec.n_layers()
    }

    /// Input width of layer `l`, accounting for input feed-forwarding.
    pub fn layer_input_dim(&self, l: usize) -> usize {
        layer_input_dim(&self.spec, self.input_dim, l)
    }

    pub fn log_noise_var(&self) -> Option<f64> {
        match self.likelihood {
            LikelihoodSpec::Gaussian { log_noise_var } => Some(log_noise_var),
            LikelihoodSpec::Softmax { .. } => None,
        }
    }

    /// Sample concrete weights `W = m + s eps` for one Monte Carlo pass,
    /// drawing fresh frequency noise where the strategy resamples.
    pub fn sample_weights(&self, rng: &mut Rng) -> WeightDraw {
        let mut w = Vec::with_capacity(self.n_layers());
        let mut eps_w = Vec::with_capacity(self.n_layers());
        let mut eps_omega = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let q = &self.w_posterior[l];
            let (rows, cols) = q.shape();
            let eps = rng.randn(rows, cols);
            w.push(q.reparameterize(&eps));
            eps_w.push(eps);
            eps_omega.push(match self.spec.omega_strategy {
                OmegaStrategy::VarResampled => {
                    Some(rng.randn(self.layer_input_dim(l), self.spec.n_rf[l]))
                }
                _ => None,
            });
        }
        WeightDraw { w, eps_w, eps_omega }
    }

    /// Materialized frequency matrix of layer `l` for the given draw.
    pub fn omega(&self, l: usize, draw: &WeightDraw) -> Matrix {
        self.spectral[l].materialize(&self.theta[l], draw.eps_omega[l].as_ref())
    }

    /// Input matrix of layer `l` given the previous layer's output.
    fn layer_input(&self, l: usize, f: Matrix, x: &Matrix) -> Matrix {
        if l > 0 && self.spec.feedforward_inputs {
            f.concat_cols(x)
        } else {
            f
        }
    }

    /// Deterministic forward pass for one weight draw: alternate the
    /// feature map `phi` and the linear map `W` through all layers.
    pub fn forward(&self, x: &Matrix, draw: &WeightDraw) -> Matrix {
        assert_eq!(x.cols(), self.input_dim, "input dimension mismatch");
        let mut f = x.clone();
        for l in 0..self.n_layers() {
            let a = self.layer_input(l, f, x);
            let omega = self.omega(l, draw);
            let features = phi(self.spec.kernel, &a, &omega, self.theta[l].sigma2());
            f = features.matmul(&draw.w[l]);
        }
        f
    }

    /// Monte Carlo predictive distribution over `n_mc` posterior draws.
    pub fn predict(&self, x: &Matrix, n_mc: usize, rng: &mut Rng) -> PredictiveSummary {
        assert!(n_mc >= 1);
        match self.likelihood {
            LikelihoodSpec::Gaussian { log_noise_var } => {
                let samples: Vec<Matrix> = (0..n_mc)
                    .map(|_| {
                        let draw = self.sample_weights(rng);
                        self.forward(x, &draw)
                    })
                    .collect();
                let (rows, cols) = samples[0].shape();
                let mut mean = Matrix::zeros(rows, cols);
                for s in &samples {
                    mean.add_assign(s);
                }
                let mean = mean.scale(1.0 / n_mc as f64);
                let noise_var = log_noise_var.exp();
                let mut var = Matrix::zeros(rows, cols);
                for s in &samples {
                    let centered = s.zip_map(&mean, |a, b| (a - b) * (a - b));
                    var.add_assign(&centered);
                }
                let var = var.map(|v| v / n_mc as f64 + noise_var);
                PredictiveSummary::Regression {
                    mean,
                    var,
                    samples,
                    noise_var,
                }
            }
            LikelihoodSpec::Softmax { n_classes } => {
                let n = x.rows();
                // log of the per-class mixture probability, accumulated as
                // log-mean-exp over per-sample log-softmax values
                let mut per_sample_log_probs = vec![Vec::with_capacity(n_mc); n * n_classes];
                for _ in 0..n_mc {
                    let draw = self.sample_weights(rng);
                    let logits = self.forward(x, &draw);
                    for i in 0..n {
                        let row = logits.row(i);
                        let lse = logsumexp(row);
                        for (k, &lk) in row.iter().enumerate() {
                            per_sample_log_probs[i * n_classes + k].push(lk - lse);
                        }
                    }
                }
                let log_probs = Matrix::from_fn(n, n_classes, |i, k| {
                    logsumexp(&per_sample_log_probs[i * n_classes + k]) - (n_mc as f64).ln()
                });
                let labels = (0..n)
                    .map(|i| {
                        let row = log_probs.row(i);
                        row.iter()
                            .enumerate()
                            .max_by(|a, b| a.1.total_cmp(b.1))
                            .map(|(k, _)| k)
                            .unwrap()
                    })
                    .collect();
                PredictiveSummary::Classification { log_probs, labels }
            }
        }
    }
}

fn layer_input_dim(spec: &ArchitectureSpec, input_dim: usize, l: usize) -> usize {
    if l == 0 {
        input_dim
    } else if spec.feedforward_inputs {
        spec.gp_count[l - 1] + input_dim
    } else {
        spec.gp_count[l - 1]
    }
}

/// Monte Carlo predictive mixture.
#[derive(Debug, Clone)]
pub enum PredictiveSummary {
    Regression {
        /// Mixture mean per point and output.
        mean: Matrix,
        /// Mixture variance per point and output, including the
        /// observation noise.
        var: Matrix,
        /// The individual per-draw latent predictions.
        samples: Vec<Matrix>,
        noise_var: f64,
    },
    Classification {
        /// Log of the sample-averaged softmax probabilities.
        log_probs: Matrix,
        /// Argmax class per point.
        labels: Vec<usize>,
    },
}

impl PredictiveSummary {
    pub fn n_points(&self) -> usize {
        match self {
            PredictiveSummary::Regression { mean, .. } => mean.rows(),
            PredictiveSummary::Classification { log_probs, .. } => log_probs.rows(),
        }
    }

    pub fn class_probs(&self) -> Option<Matrix> {
        match self {
            PredictiveSummary::Classification { log_probs, .. } => {
                Some(log_probs.map(f64::exp))
            }
            _ => None,
        }
    }
}

/// Serialized training state: everything needed to resume or evaluate,
/// in one JSON document. `f64` values survive the round trip exactly
/// (shortest-round-trip formatting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: DgpModel,
    pub rng: Rng,
    pub iteration: u64,
    pub standardizer: Option<crate::data::Standardizer>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| crate::Error::Checkpoint(format!("invalid checkpoint: {e}")))
    }
}

/// Softmax over logits, exposed for the Python bindings and tests.
pub fn class_probabilities(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let probs = softmax(logits.row(i));
        out.row_mut(i).copy_from_slice(&probs);
    }
    out
}
