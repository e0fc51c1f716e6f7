//! Gold-standard Gibbs sampler for the two-layer, single-hidden-GP,
//! Gaussian-likelihood model: the output layer is integrated out
//! analytically, the hidden layer is sampled with elliptical slice
//! sampling, and the output layer is recovered from its exact Gaussian
//! conditional.
//!
//! This is the one module allowed to factorize matrices; the instance
//! sizes are small and the variational training path never calls into it.
//! Every factorization bumps a global counter so tests can assert the
//! training path performs none.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::kernels::{kernel_cross, kernel_matrix, KernelParams};
use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

static FACTORIZATION_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of Cholesky factorizations performed since process start.
pub fn factorization_count() -> u64 {
    FACTORIZATION_COUNT.load(Ordering::SeqCst)
}

const JITTER: f64 = 1e-8;

/// Lower-triangular Cholesky factor of `a + jitter I`.
pub fn cholesky(a: &Matrix, jitter: f64) -> Result<Matrix> {
    FACTORIZATION_COUNT.fetch_add(1, Ordering::SeqCst);
    assert_eq!(a.rows(), a.cols(), "cholesky needs a square matrix");
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j) + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "covariance not positive definite at pivot {i} (value {sum})"
                    )));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `L x = b` for lower-triangular `L`.
fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l.get(i, k) * x[k];
        }
        x[i] /= l.get(i, i);
    }
    x
}

/// Solve `L' x = b` for lower-triangular `L`.
fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l.get(k, i) * x[k];
        }
        x[i] /= l.get(i, i);
    }
    x
}

/// Solve `A x = b` given the Cholesky factor `L` of `A`.
fn chol_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// `log N(x | 0, A)` given the Cholesky factor `L` of `A`.
fn mvn_logpdf_centered(l: &Matrix, x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let z = solve_lower(l, x);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..l.rows()).map(|i| l.get(i, i).ln()).sum::<f64>() * 2.0;
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// Draw from `N(mean, A)` given the Cholesky factor `L` of `A`.
fn mvn_sample(mean: &[f64], l: &Matrix, rng: &mut Rng) -> Vec<f64> {
    let n = mean.len();
    let z: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
    let mut out = mean.to_vec();
    for i in 0..n {
        for k in 0..=i {
            out[i] += l.get(i, k) * z[k];
        }
    }
    out
}

fn column(values: &[f64]) -> Matrix {
    Matrix::from_vec(values.len(), 1, values.to_vec())
}

/// Fixed hyperparameters of the collapsed two-layer model.
#[derive(Debug, Clone)]
pub struct DgpHypers {
    pub theta0: KernelParams,
    pub theta1: KernelParams,
    pub lambda: f64,
}

/// `log N(Y | 0, K(F1) + lambda I)`: the likelihood of the hidden layer
/// after the output GP has been integrated out.
pub fn collapsed_loglik(f1: &[f64], y: &[f64], theta1: &KernelParams, lambda: f64) -> Result<f64> {
    assert_eq!(f1.len(), y.len(), "latent/observation length mismatch");
    let mut k = kernel_matrix(&column(f1), theta1);
    for i in 0..k.rows() {
        k.set(i, i, k.get(i, i) + lambda);
    }
    let l = cholesky(&k, JITTER)?;
    Ok(mvn_logpdf_centered(&l, y))
}

/// Markov chain state for the hidden layer, with the prior factor cached.
#[derive(Debug, Clone)]
pub struct CollapsedState {
    pub f1: Vec<f64>,
    pub rng: Rng,
    pub hypers: DgpHypers,
    chol0: Matrix,
}

impl CollapsedState {
    /// Build the state with `f1` initialized to a prior draw.
    pub fn new(x: &Matrix, hypers: DgpHypers, mut rng: Rng) -> Result<Self> {
        let k0 = kernel_matrix(x, &hypers.theta0);
        let chol0 = cholesky(&k0, JITTER)?;
        let f1 = mvn_sample(&vec![0.0; x.rows()], &chol0, &mut rng);
        Ok(CollapsedState {
            f1,
            rng,
            hypers,
            chol0,
        })
    }

    fn prior_draw(&mut self) -> Vec<f64> {
        mvn_sample(&vec![0.0; self.f1.len()], &self.chol0, &mut self.rng)
    }
}

const MAX_SHRINK_STEPS: usize = 1000;

/// One elliptical slice sampling update of `state.f1` against the given
/// log-likelihood. Returns the number of proposals evaluated.
pub fn ess_step(state: &mut CollapsedState, loglik: &dyn Fn(&[f64]) -> f64) -> Result<usize> {
    let nu = state.prior_draw();
    let log_y = loglik(&state.f1) + state.rng.next_f64().ln();
    let mut theta = state.rng.next_range(0.0, std::f64::consts::TAU);
    let mut theta_min = theta - std::f64::consts::TAU;
    let mut theta_max = theta;
    for proposals in 1..=MAX_SHRINK_STEPS {
        let (sin, cos) = theta.sin_cos();
        let candidate: Vec<f64> = state
            .f1
            .iter()
            .zip(&nu)
            .map(|(&f, &n)| f * cos + n * sin)
            .collect();
        if loglik(&candidate) > log_y {
            state.f1 = candidate;
            return Ok(proposals);
        }
        if theta < 0.0 {
            theta_min = theta;
        } else {
            theta_max = theta;
        }
        theta = state.rng.next_range(theta_min, theta_max);
    }
    Err(Error::Numerical(
        "elliptical slice sampling exceeded the shrink-step cap".into(),
    ))
}

/// Exact draw from `p(F2 | Y, F1)`, which is Gaussian with mean
/// `K1 (K1 + lambda I)^{-1} Y` and covariance
/// `K1 - K1 (K1 + lambda I)^{-1} K1`.
pub fn sample_f2_conditional(
    f1: &[f64],
    y: &[f64],
    theta1: &KernelParams,
    lambda: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let (mean, cov) = f2_conditional_moments(f1, y, theta1, lambda)?;
    let l = cholesky(&cov, JITTER)?;
    Ok(mvn_sample(&mean, &l, rng))
}

/// Closed-form mean and covariance of `p(F2 | Y, F1)`.
pub fn f2_conditional_moments(
    f1: &[f64],
    y: &[f64],
    theta1: &KernelParams,
    lambda: f64,
) -> Result<(Vec<f64>, Matrix)> {
    assert_eq!(f1.len(), y.len(), "latent/observation length mismatch");
    let n = f1.len();
    let k1 = kernel_matrix(&column(f1), theta1);
    let mut noisy = k1.clone();
    for i in 0..n {
        noisy.set(i, i, noisy.get(i, i) + lambda);
    }
    let l = cholesky(&noisy, JITTER)?;
    let alpha = chol_solve(&l, y);
    let mean: Vec<f64> = (0..n)
        .map(|i| k1.row(i).iter().zip(&alpha).map(|(a, b)| a * b).sum())
        .collect();
    // cov = K1 - K1 (K1 + lambda I)^{-1} K1, column by column
    let mut cov = k1.clone();
    for j in 0..n {
        let kj: Vec<f64> = (0..n).map(|i| k1.get(i, j)).collect();
        let v = chol_solve(&l, &kj);
        for i in 0..n {
            let back: f64 = k1.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            cov.set(i, j, cov.get(i, j) - back);
        }
    }
    Ok((mean, cov))
}

/// GP conditional of the hidden layer at new inputs: mean and covariance
/// of `f1(x_test)` given `f1(x_train)` under the layer-one prior.
fn hidden_conditional(
    state: &CollapsedState,
    x_train: &Matrix,
    x_test: &Matrix,
) -> Result<(Vec<f64>, Matrix)> {
    let k_cross = kernel_cross(x_train, x_test, &state.hypers.theta0);
    let k_test = kernel_matrix(x_test, &state.hypers.theta0);
    let n_test = x_test.rows();
    let n = x_train.rows();
    let mut mean = vec![0.0; n_test];
    let mut cov = k_test;
    // columns of K0^{-1} K_cross via the cached factor
    let mut solved = Matrix::zeros(n, n_test);
    for j in 0..n_test {
        let col: Vec<f64> = (0..n).map(|i| k_cross.get(i, j)).collect();
        let v = chol_solve(&state.chol0, &col);
        for i in 0..n {
            solved.set(i, j, v[i]);
        }
    }
    for j in 0..n_test {
        mean[j] = (0..n).map(|i| solved.get(i, j) * state.f1[i]).sum();
        for j2 in 0..n_test {
            let reduction: f64 = (0..n).map(|i| k_cross.get(i, j) * solved.get(i, j2)).sum();
            cov.set(j, j2, cov.get(j, j2) - reduction);
        }
    }
    Ok((mean, cov))
}

/// Gibbs sampler output: thinned posterior samples at the training
/// inputs and predictive output-layer draws at the test inputs.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub f1: Vec<Vec<f64>>,
    pub f2: Vec<Vec<f64>>,
    pub test_f2: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    pub fn test_mean(&self) -> Vec<f64> {
        column_mean(&self.test_f2)
    }

    pub fn test_std(&self) -> Vec<f64> {
        column_std(&self.test_f2)
    }
}

pub fn column_mean(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples[0].len();
    let mut out = vec![0.0; n];
    for s in samples {
        for (o, &v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= samples.len() as f64;
    }
    out
}

pub fn column_std(samples: &[Vec<f64>]) -> Vec<f64> {
    let mean = column_mean(samples);
    let n = samples[0].len();
    let mut out = vec![0.0; n];
    for s in samples {
        for i in 0..n {
            out[i] += (s[i] - mean[i]) * (s[i] - mean[i]);
        }
    }
    for o in &mut out {
        *o = (*o / (samples.len() as f64 - 1.0)).sqrt();
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct GibbsConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
}

/// Alternate elliptical-slice updates of the hidden layer with exact
/// conditional draws of the output layer, keeping every `thin`-th sample
/// after burn-in; each retained sample also yields a predictive draw at
/// the test inputs.
pub fn gibbs_run(
    x: &Matrix,
    y: &[f64],
    hypers: &DgpHypers,
    config: &GibbsConfig,
    x_test: &Matrix,
    rng: Rng,
) -> Result<PosteriorSamples> {
    assert!(x.rows() == y.len(), "input/observation count mismatch");
    let mut state = CollapsedState::new(x, hypers.clone(), rng)?;
    let theta1 = state.hypers.theta1.clone();
    let lambda = state.hypers.lambda;
    let y_owned = y.to_vec();
    let loglik = move |f: &[f64]| {
        collapsed_loglik(f, &y_owned, &theta1, lambda).unwrap_or(f64::NEG_INFINITY)
    };

    let mut out = PosteriorSamples {
        f1: Vec::with_capacity(config.n_samples),
        f2: Vec::with_capacity(config.n_samples),
        test_f2: Vec::with_capacity(config.n_samples),
    };
    let total = config.burn_in + config.n_samples * config.thin;
    for step in 0..total {
        ess_step(&mut state, &loglik)?;
        if step < config.burn_in || (step - config.burn_in + 1) % config.thin != 0 {
            continue;
        }
        let f2 = sample_f2_conditional(
            &state.f1,
            y,
            &state.hypers.theta1,
            state.hypers.lambda,
            &mut state.rng,
        )?;
        // predictive path: hidden values at the test inputs, then the
        // output conditional over the joint hidden vector
        let (h_mean, h_cov) = hidden_conditional(&state, x, x_test)?;
        let h_l = cholesky(&h_cov, JITTER)?;
        let f1_test = mvn_sample(&h_mean, &h_l, &mut state.rng);
        let f2_test = output_predictive_draw(
            &state.f1,
            y,
            &f1_test,
            &state.hypers.theta1,
            state.hypers.lambda,
            &mut state.rng,
        )?;
        out.f1.push(state.f1.clone());
        out.f2.push(f2);
        out.test_f2.push(f2_test);
    }
    Ok(out)
}

/// Draw the output-layer GP at test locations `f1_test` given training
/// latents `f1` and observations `y` (standard GP regression in the
/// hidden space).
fn output_predictive_draw(
    f1: &[f64],
    y: &[f64],
    f1_test: &[f64],
    theta1: &KernelParams,
    lambda: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = f1.len();
    let n_test = f1_test.len();
    let k1 = kernel_matrix(&column(f1), theta1);
    let k_cross = kernel_cross(&column(f1), &column(f1_test), theta1);
    let k_test = kernel_matrix(&column(f1_test), theta1);
    let mut noisy = k1;
    for i in 0..n {
        noisy.set(i, i, noisy.get(i, i) + lambda);
    }
    let l = cholesky(&noisy, JITTER)?;
    let alpha = chol_solve(&l, y);
    let mut mean = vec![0.0; n_test];
    for j in 0..n_test {
        mean[j] = (0..n).map(|i| k_cross.get(i, j) * alpha[i]).sum();
    }
    let mut cov = k_test;
    for j in 0..n_test {
        let col: Vec<f64> = (0..n).map(|i| k_cross.get(i, j)).collect();
        let v = chol_solve(&l, &col);
        for j2 in 0..n_test {
            let reduction: f64 = (0..n).map(|i| k_cross.get(i, j2) * v[i]).sum();
            cov.set(j2, j, cov.get(j2, j) - reduction);
        }
    }
    let cl = cholesky(&cov, JITTER)?;
    Ok(mvn_sample(&mean, &cl, rng))
}

/// `h(x) = 2x exp(-x^2)`, the warping whose self-composition generates
/// the synthetic benchmark.
pub fn warp(x: f64) -> f64 {
    2.0 * x * (-x * x).exp()
}

/// Noise variance of the synthetic benchmark observations.
pub const SYNTHETIC_NOISE_VAR: f64 = 0.01;

/// Draw `n` points with `x ~ U[-3, 3]` and `y = h(h(x)) + N(0, 0.01)`.
pub fn synthetic_dataset(n: usize, rng: &mut Rng) -> (Matrix, Matrix) {
    let x = Matrix::from_fn(n, 1, |_, _| rng.next_range(-3.0, 3.0));
    let noise_std = SYNTHETIC_NOISE_VAR.sqrt();
    let y = Matrix::from_fn(n, 1, |i, _| {
        warp(warp(x.get(i, 0))) + noise_std * rng.next_normal()
    });
    (x, y)
}
