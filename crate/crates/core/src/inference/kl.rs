//! Analytic KL divergences between the factorized Gaussian posterior and
//! the priors: standard normal for the linear weights, `N(0, 1/l_d^2)`
//! for the spectral frequencies. The frequency term depends on the
//! lengthscales, so its gradient reaches the covariance parameters.

use crate::features::OmegaStrategy;
use crate::model::DgpModel;

use super::params::{ParamKind, ParamLayout};

/// `KL(N(m1, v1) || N(m2, v2))` for scalar Gaussians.
pub fn kl_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    assert!(v1 > 0.0 && v2 > 0.0, "KL requires positive variances");
    0.5 * ((v2 / v1).ln() - 1.0 + v1 / v2 + (m1 - m2) * (m1 - m2) / v2)
}

/// Total KL from the posterior to the prior, split into the weight term
/// and the frequency term. The frequency term is identically zero under
/// `PriorFixed`, where the frequencies carry no posterior.
pub fn kl_posterior_to_prior(model: &DgpModel) -> (f64, f64) {
    let mut kl_w = 0.0;
    for q in &model.w_posterior {
        for (&m, &lv) in q.mean.data().iter().zip(q.log_var.data()) {
            let v = lv.exp();
            kl_w += 0.5 * (-lv - 1.0 + v + m * m);
        }
    }

    let mut kl_omega = 0.0;
    if model.spec.omega_strategy != OmegaStrategy::PriorFixed {
        for (block, theta) in model.spectral.iter().zip(&model.theta) {
            let q = block.variational.as_ref().expect("variational omega");
            let cols = q.mean.cols();
            for d in 0..q.mean.rows() {
                // prior variance for row d is exp(-2 log l_d)
                let log_prior_var = -2.0 * theta.log_lengthscales[d];
                let inv_prior_var = (-log_prior_var).exp();
                for j in 0..cols {
                    let mu = q.mean.get(d, j);
                    let lv = q.log_var.get(d, j);
                    kl_omega += 0.5
                        * (log_prior_var - lv - 1.0
                            + (lv.exp() + mu * mu) * inv_prior_var);
                }
            }
        }
    }
    (kl_w, kl_omega)
}

/// Accumulate `-d KL / d theta` into an ELBO gradient vector.
pub(super) fn subtract_kl_grads(model: &DgpModel, layout: &ParamLayout, grad: &mut [f64]) {
    for l in 0..model.n_layers() {
        let q = &model.w_posterior[l];
        let mean_seg = layout.segment(ParamKind::WMean(l)).unwrap();
        let var_seg = layout.segment(ParamKind::WLogVar(l)).unwrap();
        for (i, (&m, &lv)) in q.mean.data().iter().zip(q.log_var.data()).enumerate() {
            grad[mean_seg.offset + i] -= m;
            grad[var_seg.offset + i] -= 0.5 * (lv.exp() - 1.0);
        }

        if model.spec.omega_strategy != OmegaStrategy::PriorFixed {
            let block = model.spectral[l].variational.as_ref().unwrap();
            let mu_seg = layout.segment(ParamKind::OmegaMean(l)).unwrap();
            let lv_seg = layout.segment(ParamKind::OmegaLogVar(l)).unwrap();
            let ls_seg = layout.segment(ParamKind::LogLengthscales(l)).unwrap();
            let cols = block.mean.cols();
            for d in 0..block.mean.rows() {
                let inv_prior_var = (2.0 * model.theta[l].log_lengthscales[d]).exp();
                let mut d_log_l = 0.0;
                for j in 0..cols {
                    let mu = block.mean.get(d, j);
                    let lv = block.log_var.get(d, j);
                    let beta2 = lv.exp();
                    let idx = d * cols + j;
                    grad[mu_seg.offset + idx] -= mu * inv_prior_var;
                    grad[lv_seg.offset + idx] -= 0.5 * (beta2 * inv_prior_var - 1.0);
                    d_log_l += -1.0 + (beta2 + mu * mu) * inv_prior_var;
                }
                grad[ls_seg.offset + d] -= d_log_l;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::OmegaStrategy;
    use crate::kernels::KernelFamily;
    use crate::model::{ArchitectureSpec, DgpModel, GaussianVariational, Task};
    use crate::numerics::{Matrix, Rng};

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        assert_eq!(kl_gaussian(0.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(kl_gaussian(-2.0, 0.3, -2.0, 0.3), 0.0);
    }

    #[test]
    fn kl_unit_mean_shift() {
        assert!((kl_gaussian(1.0, 1.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_closed_form_value() {
        let v = kl_gaussian(1.0, 4.0, 0.0, 1.0);
        let expected = 0.5 * ((0.25f64).ln() - 1.0 + 4.0 + 1.0);
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 1.306853).abs() < 1e-6);
    }

    #[test]
    #[should_panic(expected = "positive variances")]
    fn kl_rejects_nonpositive_variance() {
        let _ = kl_gaussian(0.0, 0.0, 0.0, 1.0);
    }

    fn tiny_model(strategy: OmegaStrategy) -> DgpModel {
        let spec = ArchitectureSpec {
            gp_count: vec![2, 1],
            n_rf: vec![3, 2],
            kernel: KernelFamily::Rbf,
            omega_strategy: strategy,
            feedforward_inputs: false,
            task: Task::Regression,
        };
        DgpModel::new(spec, 2, &mut Rng::new(7))
    }

    #[test]
    fn kl_is_zero_when_posterior_equals_prior() {
        let mut model = tiny_model(OmegaStrategy::VarFixed);
        for q in &mut model.w_posterior {
            let (r, c) = q.shape();
            q.mean = Matrix::zeros(r, c);
            q.log_var = Matrix::zeros(r, c);
        }
        // spectral posteriors are initialized at the prior already
        let (kl_w, kl_omega) = kl_posterior_to_prior(&model);
        assert!(kl_w.abs() < 1e-12, "kl_w = {kl_w}");
        assert!(kl_omega.abs() < 1e-12, "kl_omega = {kl_omega}");
    }

    #[test]
    fn single_unit_mean_entry_contributes_half() {
        let mut model = tiny_model(OmegaStrategy::PriorFixed);
        for q in &mut model.w_posterior {
            let (r, c) = q.shape();
            q.mean = Matrix::zeros(r, c);
            q.log_var = Matrix::zeros(r, c);
        }
        model.w_posterior[0].mean.set(0, 0, 1.0);
        let (kl_w, kl_omega) = kl_posterior_to_prior(&model);
        assert!((kl_w - 0.5).abs() < 1e-12);
        assert_eq!(kl_omega, 0.0);
    }

    #[test]
    fn prior_fixed_omega_term_is_identically_zero() {
        let model = tiny_model(OmegaStrategy::PriorFixed);
        let (_, kl_omega) = kl_posterior_to_prior(&model);
        assert_eq!(kl_omega, 0.0);
    }

    #[test]
    fn kl_matches_monte_carlo_estimate() {
        // E_q[log q - log p] over a million draws, within 3 standard errors.
        let mut model = tiny_model(OmegaStrategy::VarFixed);
        let mut rng = Rng::new(100);
        // randomize the posteriors and lengthscales
        for q in &mut model.w_posterior {
            let (r, c) = q.shape();
            q.mean = rng.randn(r, c);
            q.log_var = rng.randn(r, c).scale(0.3);
        }
        for block in &mut model.spectral {
            let q = block.variational.as_mut().unwrap();
            let (r, c) = q.shape();
            q.mean = rng.randn(r, c).scale(0.5);
            q.log_var = rng.randn(r, c).scale(0.3);
        }
        for theta in &mut model.theta {
            for l in &mut theta.log_lengthscales {
                *l = 0.4 * rng.next_normal();
            }
        }

        let (kl_w, kl_omega) = kl_posterior_to_prior(&model);
        let analytic = kl_w + kl_omega;

        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let log_norm = |x: f64, mean: f64, log_var: f64| -> f64 {
            let d = x - mean;
            -0.5 * (log_var + d * d / log_var.exp())
        };
        for _ in 0..n {
            let mut term = 0.0;
            for q in &model.w_posterior {
                for (&m, &lv) in q.mean.data().iter().zip(q.log_var.data()) {
                    let z = m + (0.5 * lv).exp() * rng.next_normal();
                    term += log_norm(z, m, lv) - log_norm(z, 0.0, 0.0);
                }
            }
            for (block, theta) in model.spectral.iter().zip(&model.theta) {
                let q = block.variational.as_ref().unwrap();
                let cols = q.mean.cols();
                for d in 0..q.mean.rows() {
                    let prior_lv = -2.0 * theta.log_lengthscales[d];
                    for j in 0..cols {
                        let (m, lv) = (q.mean.get(d, j), q.log_var.get(d, j));
                        let z = m + (0.5 * lv).exp() * rng.next_normal();
                        term += log_norm(z, m, lv) - log_norm(z, 0.0, prior_lv);
                    }
                }
            }
            sum += term;
            sum_sq += term * term;
        }
        let mc = sum / n as f64;
        let var = (sum_sq / n as f64 - mc * mc) / n as f64;
        let se = var.sqrt();
        assert!(
            (mc - analytic).abs() < 3.0 * se,
            "MC {mc} vs analytic {analytic}, se {se}"
        );
    }
}
