//! Conditional likelihood terms `log p(y | f)` with gradients w.r.t. the
//! latent outputs, for Gaussian regression and softmax classification.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodSpec {
    /// Gaussian observation noise with learnable variance, stored as
    /// `log lambda`.
    Gaussian { log_noise_var: f64 },
    Softmax { n_classes: usize },
}

const LN_2PI: f64 = 1.8378770664093453;

/// `sum_o [-0.5 log(2 pi lambda) - (y_o - f_o)^2 / (2 lambda)]`.
pub fn gaussian_loglik(y: &[f64], f: &[f64], log_lambda: f64) -> f64 {
    assert_eq!(y.len(), f.len(), "gaussian_loglik dimension mismatch");
    let lambda = log_lambda.exp();
    let mut total = 0.0;
    for (&yo, &fo) in y.iter().zip(f) {
        let r = yo - fo;
        total += -0.5 * (LN_2PI + log_lambda) - r * r / (2.0 * lambda);
    }
    total
}

/// Gradient of `gaussian_loglik` w.r.t. each `f_o`.
pub fn gaussian_loglik_grad_f(y: &[f64], f: &[f64], log_lambda: f64) -> Vec<f64> {
    let lambda = log_lambda.exp();
    y.iter().zip(f).map(|(&yo, &fo)| (yo - fo) / lambda).collect()
}

/// Gradient of `gaussian_loglik` w.r.t. `log lambda`.
pub fn gaussian_loglik_grad_log_lambda(y: &[f64], f: &[f64], log_lambda: f64) -> f64 {
    let lambda = log_lambda.exp();
    y.iter()
        .zip(f)
        .map(|(&yo, &fo)| {
            let r = yo - fo;
            -0.5 + r * r / (2.0 * lambda)
        })
        .sum()
}

/// `logits[label] - logsumexp(logits)`, max-subtracted for stability.
pub fn softmax_loglik(label: usize, logits: &[f64]) -> f64 {
    assert!(label < logits.len(), "label out of range");
    logits[label] - logsumexp(logits)
}

/// Gradient of `softmax_loglik` w.r.t. the logits:
/// `onehot(label) - softmax(logits)`.
pub fn softmax_loglik_grad(label: usize, logits: &[f64]) -> Vec<f64> {
    let probs = softmax(logits);
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == label { 1.0 - p } else { -p })
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_peak_density_is_zero_at_unit_peak_noise() {
        // lambda = 1/(2 pi) makes the density at y = f exactly 1.
        let log_lambda = (1.0 / (2.0 * PI)).ln();
        let v = gaussian_loglik(&[0.7, -0.2], &[0.7, -0.2], log_lambda);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn gaussian_closed_form_point() {
        let v = gaussian_loglik(&[0.0], &[1.0], 0.0);
        let expected = -0.5 * (2.0 * PI).ln() - 0.5;
        assert!((v - expected).abs() < 1e-12);
        assert!((v + 1.418939).abs() < 1e-6);
    }

    #[test]
    fn gaussian_gradients_match_finite_differences() {
        let y = [0.3, -1.2, 2.0];
        let f = [0.1, 0.4, 1.5];
        let log_lambda = -0.7;
        let h = 1e-6;
        let grad_f = gaussian_loglik_grad_f(&y, &f, log_lambda);
        for o in 0..f.len() {
            let mut fp = f;
            let mut fm = f;
            fp[o] += h;
            fm[o] -= h;
            let fd = (gaussian_loglik(&y, &fp, log_lambda) - gaussian_loglik(&y, &fm, log_lambda))
                / (2.0 * h);
            assert!(
                ((grad_f[o] - fd) / fd.abs().max(1.0)).abs() < 1e-6,
                "grad f[{o}] {} vs fd {fd}",
                grad_f[o]
            );
        }
        let grad_l = gaussian_loglik_grad_log_lambda(&y, &f, log_lambda);
        let fd = (gaussian_loglik(&y, &f, log_lambda + h)
            - gaussian_loglik(&y, &f, log_lambda - h))
            / (2.0 * h);
        assert!(((grad_l - fd) / fd.abs().max(1.0)).abs() < 1e-6);
    }

    #[test]
    fn gaussian_is_maximized_at_f_equals_y() {
        let y = [0.5, -0.3];
        let at_peak = gaussian_loglik(&y, &y, -1.0);
        for delta in [-0.5, -0.01, 0.01, 0.5] {
            let f = [y[0] + delta, y[1]];
            assert!(gaussian_loglik(&y, &f, -1.0) < at_peak);
        }
    }

    #[test]
    fn softmax_uniform_logits() {
        let logits = [1.3; 4];
        let v = softmax_loglik(2, &logits);
        assert!((v + (4.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_confident_logits() {
        let v = softmax_loglik(0, &[10.0, 0.0, 0.0]);
        let expected = -(1.0 + 2.0 * (-10.0f64).exp()).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v + 9.1e-5).abs() < 1e-5);
    }

    #[test]
    fn softmax_gradient_sums_to_zero() {
        let logits = [0.4, -1.0, 2.2, 0.0];
        let grad = softmax_loglik_grad(1, &logits);
        let sum: f64 = grad.iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn softmax_is_translation_invariant() {
        let logits = [0.4, -1.0, 2.2];
        let shifted: Vec<f64> = logits.iter().map(|l| l + 123.456).collect();
        let a = softmax_loglik(2, &logits);
        let b = softmax_loglik(2, &shifted);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let logits = [0.4, -1.0, 2.2, 0.3];
        let grad = softmax_loglik_grad(3, &logits);
        let h = 1e-6;
        for k in 0..logits.len() {
            let mut lp = logits;
            let mut lm = logits;
            lp[k] += h;
            lm[k] -= h;
            let fd = (softmax_loglik(3, &lp) - softmax_loglik(3, &lm)) / (2.0 * h);
            assert!((grad[k] - fd).abs() < 1e-6);
        }
    }
}
