//! The doubly-stochastic ELBO estimator and its reverse-mode gradient.
//!
//! The layer graph is fixed (linear map, activation, linear map, ...), so
//! the backward pass is written directly against it instead of a general
//! tape: each Monte Carlo sample stores its layer inputs and features on
//! the way up and walks them in reverse, accumulating gradients for the
//! variational parameters through the reparameterizations and for the
//! covariance parameters through every path they touch (feature scaling,
//! prior-fixed frequency values, and the frequency KL term).

use crate::data::Targets;
use crate::features::{phi, OmegaStrategy};
use crate::kernels::KernelFamily;
use crate::likelihoods::{
    gaussian_loglik, gaussian_loglik_grad_f, gaussian_loglik_grad_log_lambda, softmax_loglik,
    softmax_loglik_grad, LikelihoodSpec,
};
use crate::model::DgpModel;
use crate::numerics::{Matrix, Rng};

use super::kl::{kl_posterior_to_prior, subtract_kl_grads};
use super::params::{ParamKind, ParamLayout};

/// One evaluation of the lower bound. `total = data_fit - kl_w - kl_omega`
/// holds by construction.
#[derive(Debug, Clone, Copy)]
pub struct ElboEstimate {
    pub total: f64,
    pub data_fit: f64,
    pub kl_w: f64,
    pub kl_omega: f64,
}

/// Gradient of one ELBO estimate with respect to every free parameter,
/// flattened according to [`ParamLayout`].
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub flat: Vec<f64>,
}

impl GradientSet {
    pub fn segment<'a>(&'a self, layout: &ParamLayout, kind: ParamKind) -> Option<&'a [f64]> {
        layout
            .segment(kind)
            .map(|s| &self.flat[s.offset..s.offset + s.len])
    }
}

/// Unbiased minibatch estimate of the bound. The rescaling by
/// `n_total / m` makes the expectation over batches and noise equal the
/// full-data value.
pub fn elbo_minibatch(
    model: &DgpModel,
    x: &Matrix,
    targets: &Targets,
    n_total: usize,
    n_mc: usize,
    rng: &mut Rng,
) -> ElboEstimate {
    estimate(model, x, targets, n_total, n_mc, rng, false).0
}

/// The same stochastic estimate together with its exact gradient: the
/// noise draws are shared between value and gradient, so finite
/// differences of `elbo_minibatch` under an identical seed reproduce
/// these values.
pub fn grad_elbo(
    model: &DgpModel,
    x: &Matrix,
    targets: &Targets,
    n_total: usize,
    n_mc: usize,
    rng: &mut Rng,
) -> (ElboEstimate, GradientSet) {
    let (est, grad) = estimate(model, x, targets, n_total, n_mc, rng, true);
    (est, grad.expect("gradient requested"))
}

fn estimate(
    model: &DgpModel,
    x: &Matrix,
    targets: &Targets,
    n_total: usize,
    n_mc: usize,
    rng: &mut Rng,
    compute_grad: bool,
) -> (ElboEstimate, Option<GradientSet>) {
    assert!(n_mc >= 1, "need at least one Monte Carlo sample");
    assert!(x.rows() >= 1, "batch must be nonempty");
    assert_eq!(x.rows(), targets.len(), "batch target count mismatch");

    let layout = ParamLayout::of(model);
    let mut grad = compute_grad.then(|| vec![0.0; layout.n_params]);
    let n_layers = model.n_layers();
    let batch_scale = n_total as f64 / x.rows() as f64;
    let mc_scale = batch_scale / n_mc as f64;

    let mut fit_sum = 0.0;
    for _ in 0..n_mc {
        let draw = model.sample_weights(rng);

        // forward, keeping each layer's input and features for the
        // backward sweep
        let mut inputs = Vec::with_capacity(n_layers);
        let mut omegas = Vec::with_capacity(n_layers);
        let mut feats = Vec::with_capacity(n_layers);
        let mut f = x.clone();
        for l in 0..n_layers {
            let a = if l > 0 && model.spec.feedforward_inputs {
                f.concat_cols(x)
            } else {
                f
            };
            let omega = model.omega(l, &draw);
            let features = phi(model.spec.kernel, &a, &omega, model.theta[l].sigma2());
            f = features.matmul(&draw.w[l]);
            inputs.push(a);
            omegas.push(omega);
            feats.push(features);
        }

        let (loglik, df_opt, dlambda) = likelihood_pass(model, &f, targets, compute_grad);
        fit_sum += loglik;

        let Some(grad) = grad.as_mut() else { continue };
        if let Some(seg) = layout.segment(ParamKind::LogNoiseVar) {
            grad[seg.offset] += mc_scale * dlambda;
        }

        // backward sweep; df starts as d(loglik)/dF, pre-scaled by the
        // minibatch and Monte Carlo factors
        let mut df = df_opt.expect("gradient pass").scale(mc_scale);
        for l in (0..n_layers).rev() {
            let features = &feats[l];
            let a = &inputs[l];
            let omega = &omegas[l];

            // linear map F = Phi W
            let dw = features.matmul_at_b(&df);
            let w_q = &model.w_posterior[l];
            let mean_seg = layout.segment(ParamKind::WMean(l)).unwrap();
            let var_seg = layout.segment(ParamKind::WLogVar(l)).unwrap();
            for (i, &g) in dw.data().iter().enumerate() {
                grad[mean_seg.offset + i] += g;
                let s = (0.5 * w_q.log_var.data()[i]).exp();
                grad[var_seg.offset + i] += 0.5 * g * draw.eps_w[l].data()[i] * s;
            }
            let dphi = df.matmul_a_bt(&draw.w[l]);

            // feature scale: phi is proportional to sigma, so
            // d/d log sigma2 = phi / 2 elementwise
            let sig_seg = layout.segment(ParamKind::LogSigma2(l)).unwrap();
            let mut dsig = 0.0;
            for (&p, &dp) in features.data().iter().zip(dphi.data()) {
                dsig += p * dp;
            }
            grad[sig_seg.offset] += 0.5 * dsig;

            // activation
            let n_rf = model.spec.n_rf[l];
            let dz = match model.spec.kernel {
                KernelFamily::Rbf => Matrix::from_fn(df.rows(), n_rf, |i, j| {
                    // phi = [c cos z | c sin z]
                    features.get(i, n_rf + j).mul_add(
                        -dphi.get(i, j),
                        features.get(i, j) * dphi.get(i, n_rf + j),
                    )
                }),
                KernelFamily::ArcCosine { .. } => {
                    let c = (2.0 * model.theta[l].sigma2() / n_rf as f64).sqrt();
                    features.zip_map(&dphi, |p, dp| if p > 0.0 { c * dp } else { 0.0 })
                }
            };

            // projection Z = A Omega
            let domega = a.matmul_at_b(&dz);
            match model.spec.omega_strategy {
                OmegaStrategy::PriorFixed => {
                    // omega_dj = eps_dj / l_d, so d omega / d log l_d = -omega
                    let ls_seg = layout.segment(ParamKind::LogLengthscales(l)).unwrap();
                    for d in 0..domega.rows() {
                        let mut acc = 0.0;
                        for (g, o) in domega.row(d).iter().zip(omega.row(d)) {
                            acc -= g * o;
                        }
                        grad[ls_seg.offset + d] += acc;
                    }
                }
                OmegaStrategy::VarFixed | OmegaStrategy::VarResampled => {
                    let q = model.spectral[l].variational.as_ref().unwrap();
                    let eps = match model.spec.omega_strategy {
                        OmegaStrategy::VarFixed => model.spectral[l].frozen_noise.as_ref().unwrap(),
                        _ => draw.eps_omega[l].as_ref().unwrap(),
                    };
                    let mu_seg = layout.segment(ParamKind::OmegaMean(l)).unwrap();
                    let lv_seg = layout.segment(ParamKind::OmegaLogVar(l)).unwrap();
                    for (i, &g) in domega.data().iter().enumerate() {
                        grad[mu_seg.offset + i] += g;
                        let beta = (0.5 * q.log_var.data()[i]).exp();
                        grad[lv_seg.offset + i] += 0.5 * g * eps.data()[i] * beta;
                    }
                }
            }

            if l > 0 {
                let da = dz.matmul_a_bt(omega);
                df = if model.spec.feedforward_inputs {
                    da.slice_cols(0, model.spec.gp_count[l - 1])
                } else {
                    da
                };
            }
        }
    }

    let data_fit = mc_scale * fit_sum;
    let (kl_w, kl_omega) = kl_posterior_to_prior(model);
    if let Some(grad) = grad.as_mut() {
        subtract_kl_grads(model, &layout, grad);
    }
    (
        ElboEstimate {
            total: data_fit - kl_w - kl_omega,
            data_fit,
            kl_w,
            kl_omega,
        },
        grad.map(|flat| GradientSet { flat }),
    )
}

/// Log-likelihood of the batch under one latent sample, with the
/// gradient at the latent outputs and (regression) at `log lambda`.
fn likelihood_pass(
    model: &DgpModel,
    f: &Matrix,
    targets: &Targets,
    compute_grad: bool,
) -> (f64, Option<Matrix>, f64) {
    match (&model.likelihood, targets) {
        (LikelihoodSpec::Gaussian { log_noise_var }, Targets::Regression(y)) => {
            assert_eq!(f.shape(), y.shape(), "latent/target shape mismatch");
            let mut loglik = 0.0;
            let mut dlambda = 0.0;
            let mut df = compute_grad.then(|| Matrix::zeros(f.rows(), f.cols()));
            for i in 0..f.rows() {
                loglik += gaussian_loglik(y.row(i), f.row(i), *log_noise_var);
                if let Some(df) = df.as_mut() {
                    let g = gaussian_loglik_grad_f(y.row(i), f.row(i), *log_noise_var);
                    df.row_mut(i).copy_from_slice(&g);
                    dlambda += gaussian_loglik_grad_log_lambda(y.row(i), f.row(i), *log_noise_var);
                }
            }
            (loglik, df, dlambda)
        }
        (LikelihoodSpec::Softmax { n_classes }, Targets::Classification(labels)) => {
            assert_eq!(f.cols(), *n_classes, "logit width mismatch");
            let mut loglik = 0.0;
            let mut df = compute_grad.then(|| Matrix::zeros(f.rows(), f.cols()));
            for (i, &label) in labels.iter().enumerate() {
                loglik += softmax_loglik(label, f.row(i));
                if let Some(df) = df.as_mut() {
                    let g = softmax_loglik_grad(label, f.row(i));
                    df.row_mut(i).copy_from_slice(&g);
                }
            }
            (loglik, df, 0.0)
        }
        _ => panic!("likelihood does not match target kind"),
    }
}
