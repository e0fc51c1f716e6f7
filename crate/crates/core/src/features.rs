//! Random feature maps approximating the exact covariances: trigonometric
//! features for the RBF kernel, rectified-linear features for the
//! arc-cosine kernel, plus the Monte Carlo Gram estimator used to audit
//! approximation quality.

use serde::{Deserialize, Serialize};

use crate::kernels::{KernelFamily, KernelParams};
use crate::model::GaussianVariational;
use crate::numerics::{Matrix, Rng};

/// How the spectral frequencies of a layer are treated during learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaStrategy {
    /// Frozen draws from the prior; lengthscales keep acting on the
    /// frequencies through the reparameterization `omega = eps / l_d`.
    PriorFixed,
    /// Variational posterior over the frequencies with the
    /// reparameterization noise drawn once at construction.
    VarFixed,
    /// Variational posterior with fresh reparameterization noise for
    /// every Monte Carlo sample.
    VarResampled,
}

impl std::fmt::Display for OmegaStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OmegaStrategy::PriorFixed => "prior-fixed",
            OmegaStrategy::VarFixed => "var-fixed",
            OmegaStrategy::VarResampled => "var-resampled",
        };
        f.write_str(s)
    }
}

/// Spectral frequencies of one layer, in whichever representation the
/// strategy calls for: frozen standard-normal noise for `PriorFixed` and
/// `VarFixed`, a variational mean/log-variance pair for the two
/// variational strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBlock {
    pub strategy: OmegaStrategy,
    pub variational: Option<GaussianVariational>,
    pub frozen_noise: Option<Matrix>,
}

impl SpectralBlock {
    /// Build a block for a layer whose input dimension and feature count
    /// are known, initializing the variational posterior at the prior
    /// `N(0, 1/l_d^2)` so its KL term starts at zero.
    pub fn init(
        strategy: OmegaStrategy,
        params: &KernelParams,
        n_rf: usize,
        rng: &mut Rng,
    ) -> Self {
        let d = params.input_dim();
        match strategy {
            OmegaStrategy::PriorFixed => SpectralBlock {
                strategy,
                variational: None,
                frozen_noise: Some(rng.randn(d, n_rf)),
            },
            OmegaStrategy::VarFixed | OmegaStrategy::VarResampled => {
                let mean = Matrix::zeros(d, n_rf);
                let log_var =
                    Matrix::from_fn(d, n_rf, |i, _| -2.0 * params.log_lengthscales[i]);
                let frozen = if strategy == OmegaStrategy::VarFixed {
                    Some(rng.randn(d, n_rf))
                } else {
                    None
                };
                SpectralBlock {
                    strategy,
                    variational: Some(GaussianVariational { mean, log_var }),
                    frozen_noise: frozen,
                }
            }
        }
    }

    pub fn n_rf(&self) -> usize {
        match self.strategy {
            OmegaStrategy::PriorFixed => self.frozen_noise.as_ref().unwrap().cols(),
            _ => self.variational.as_ref().unwrap().mean.cols(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.strategy {
            OmegaStrategy::PriorFixed => self.frozen_noise.as_ref().unwrap().rows(),
            _ => self.variational.as_ref().unwrap().mean.rows(),
        }
    }

    /// Materialize the frequency matrix for one forward pass.
    ///
    /// `fresh_noise` must be `Some` exactly for `VarResampled`; the other
    /// two strategies reuse their stored noise. For `PriorFixed` the
    /// lengthscales enter here, so their gradient flows through the
    /// frequency values rather than through a KL term.
    pub fn materialize(&self, params: &KernelParams, fresh_noise: Option<&Matrix>) -> Matrix {
        match self.strategy {
            OmegaStrategy::PriorFixed => {
                let eps = self.frozen_noise.as_ref().expect("prior-fixed noise");
                let inv_l: Vec<f64> = params.log_lengthscales.iter().map(|l| (-l).exp()).collect();
                Matrix::from_fn(eps.rows(), eps.cols(), |i, j| eps.get(i, j) * inv_l[i])
            }
            OmegaStrategy::VarFixed => {
                let q = self.variational.as_ref().expect("var-fixed posterior");
                let eps = self.frozen_noise.as_ref().expect("var-fixed noise");
                q.reparameterize(eps)
            }
            OmegaStrategy::VarResampled => {
                let q = self.variational.as_ref().expect("var-resampled posterior");
                let eps = fresh_noise.expect("var-resampled requires fresh noise");
                q.reparameterize(eps)
            }
        }
    }
}

/// Draw a `d x n_rf` frequency matrix from the spectral measure of the
/// RBF kernel, `omega_.j ~ N(0, Lambda^{-1})`.
pub fn sample_spectral(params: &KernelParams, n_rf: usize, rng: &mut Rng) -> Matrix {
    assert!(n_rf >= 1);
    let inv_l: Vec<f64> = params.log_lengthscales.iter().map(|l| (-l).exp()).collect();
    Matrix::from_fn(params.input_dim(), n_rf, |i, _| rng.next_normal() * inv_l[i])
}

/// Trigonometric feature map `sqrt(sigma2 / n_rf) [cos(F omega), sin(F omega)]`.
///
/// The layout is all cosines followed by all sines; checkpoints depend on
/// this ordering. Every row has squared norm exactly `sigma2`.
pub fn phi_rbf(f: &Matrix, omega: &Matrix, sigma2: f64) -> Matrix {
    let z = f.matmul(omega);
    let n_rf = omega.cols();
    let scale = (sigma2 / n_rf as f64).sqrt();
    let mut out = Matrix::zeros(f.rows(), 2 * n_rf);
    for i in 0..f.rows() {
        let z_row = z.row(i);
        let out_row = out.row_mut(i);
        for (j, &zj) in z_row.iter().enumerate() {
            let (sin, cos) = zj.sin_cos();
            out_row[j] = scale * cos;
            out_row[n_rf + j] = scale * sin;
        }
    }
    out
}

/// Rectified-linear feature map `sqrt(2 sigma2 / n_rf) max(0, F omega)`.
pub fn phi_arc(f: &Matrix, omega: &Matrix, sigma2: f64) -> Matrix {
    let n_rf = omega.cols();
    let scale = (2.0 * sigma2 / n_rf as f64).sqrt();
    f.matmul(omega).map(|z| scale * z.max(0.0))
}

/// Feature map dispatch on kernel family.
pub fn phi(family: KernelFamily, f: &Matrix, omega: &Matrix, sigma2: f64) -> Matrix {
    match family {
        KernelFamily::Rbf => phi_rbf(f, omega, sigma2),
        KernelFamily::ArcCosine { .. } => phi_arc(f, omega, sigma2),
    }
}

/// Feature count of a layer as seen by the following weight matrix:
/// the trigonometric map doubles the spectral count.
pub fn phi_width(family: KernelFamily, n_rf: usize) -> usize {
    match family {
        KernelFamily::Rbf => 2 * n_rf,
        KernelFamily::ArcCosine { .. } => n_rf,
    }
}

/// Monte Carlo Gram estimate `Phi Phi^T` from a materialized block.
pub fn approx_gram(x: &Matrix, block: &SpectralBlock, params: &KernelParams) -> Matrix {
    let omega = block.materialize(params, None);
    let features = phi(params.family, x, &omega, params.sigma2());
    features.matmul_a_bt(&features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{arccos_kernel, kernel_matrix, rbf_kernel};

    #[test]
    fn spectral_unit_lengthscale_entries_are_standard_normal() {
        let params = KernelParams::new(KernelFamily::Rbf, 1);
        let mut rng = Rng::new(10);
        let omega = sample_spectral(&params, 100_000, &mut rng);
        let n = omega.data().len() as f64;
        let mean = omega.iter().sum::<f64>() / n;
        let var = omega.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn spectral_lengthscale_scales_std() {
        let params = KernelParams::new(KernelFamily::Rbf, 1).with_lengthscale(10.0);
        let mut rng = Rng::new(11);
        let omega = sample_spectral(&params, 100_000, &mut rng);
        let n = omega.data().len() as f64;
        let var = omega.iter().map(|x| x * x).sum::<f64>() / n;
        assert!((var.sqrt() - 0.1).abs() < 0.005, "std {}", var.sqrt());
    }

    #[test]
    fn spectral_same_seed_same_matrix() {
        let params = KernelParams::new(KernelFamily::Rbf, 3);
        let a = sample_spectral(&params, 7, &mut Rng::new(4));
        let b = sample_spectral(&params, 7, &mut Rng::new(4));
        assert_eq!(a, b);
    }

    #[test]
    fn rbf_feature_rows_have_norm_sigma2() {
        let mut rng = Rng::new(12);
        let f = rng.randn(6, 3);
        let omega = rng.randn(3, 40);
        for &sigma2 in &[1.0, 2.5] {
            let features = phi_rbf(&f, &omega, sigma2);
            for i in 0..f.rows() {
                let norm2: f64 = features.row(i).iter().map(|v| v * v).sum();
                assert!(
                    (norm2 - sigma2).abs() < 1e-12,
                    "row {i} norm {norm2} vs {sigma2}"
                );
            }
        }
    }

    #[test]
    fn rbf_features_of_zero_input() {
        let f = Matrix::zeros(2, 3);
        let omega = Rng::new(13).randn(3, 5);
        let features = phi_rbf(&f, &omega, 1.0);
        let scale = (1.0f64 / 5.0).sqrt();
        for i in 0..2 {
            for j in 0..5 {
                assert_eq!(features.get(i, j), scale); // cos block
                assert_eq!(features.get(i, 5 + j), 0.0); // sin block
            }
        }
    }

    #[test]
    fn arc_features_of_zero_input_are_zero() {
        let f = Matrix::zeros(2, 3);
        let omega = Rng::new(14).randn(3, 5);
        let features = phi_arc(&f, &omega, 1.0);
        assert!(features.iter().all(|v| v == 0.0));
    }

    #[test]
    fn arc_features_are_nonnegative() {
        let mut rng = Rng::new(15);
        let f = rng.randn(4, 3);
        let omega = rng.randn(3, 50);
        assert!(phi_arc(&f, &omega, 2.0).iter().all(|v| v >= 0.0));
    }

    #[test]
    fn rbf_feature_products_approach_exact_kernel() {
        let params = KernelParams::new(KernelFamily::Rbf, 5);
        let mut rng = Rng::new(16);
        let omega = sample_spectral(&params, 10_000, &mut rng);
        for _ in 0..20 {
            let x = rng.randn(1, 5);
            let y = rng.randn(1, 5);
            let fx = phi_rbf(&x, &omega, 1.0);
            let fy = phi_rbf(&y, &omega, 1.0);
            let approx: f64 = fx.row(0).iter().zip(fy.row(0)).map(|(a, b)| a * b).sum();
            let exact = rbf_kernel(x.row(0), y.row(0), &params);
            assert!(
                (approx - exact).abs() < 0.05,
                "approx {approx} exact {exact}"
            );
        }
    }

    #[test]
    fn arc_feature_self_product_matches_norm_identity() {
        // E[2 max(0, w'x)^2] = ||x||^2 for w ~ N(0, I)
        let params = KernelParams::new(KernelFamily::arc_cosine(1), 4);
        let mut rng = Rng::new(17);
        let omega = sample_spectral(&params, 100_000, &mut rng);
        let x = rng.randn(1, 4);
        let norm2: f64 = x.row(0).iter().map(|v| v * v).sum();
        let fx = phi_arc(&x, &omega, 1.0);
        let approx: f64 = fx.row(0).iter().map(|v| v * v).sum();
        assert!(
            (approx - norm2).abs() < 0.05 * norm2,
            "approx {approx} norm2 {norm2}"
        );
    }

    #[test]
    fn arc_feature_products_approach_exact_kernel() {
        let params = KernelParams::new(KernelFamily::arc_cosine(1), 4);
        let mut rng = Rng::new(18);
        let omega = sample_spectral(&params, 100_000, &mut rng);
        for _ in 0..5 {
            let mut x = rng.randn(1, 4);
            let mut y = rng.randn(1, 4);
            for m in [&mut x, &mut y] {
                let norm: f64 = m.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
                *m = m.scale(1.0 / norm);
            }
            let fx = phi_arc(&x, &omega, 1.0);
            let fy = phi_arc(&y, &omega, 1.0);
            let approx: f64 = fx.row(0).iter().zip(fy.row(0)).map(|(a, b)| a * b).sum();
            let exact = arccos_kernel(x.row(0), y.row(0), &params, 1);
            assert!(
                (approx - exact).abs() < 0.05,
                "approx {approx} exact {exact}"
            );
        }
    }

    #[test]
    fn approx_gram_single_point_rbf_is_exact() {
        let params = KernelParams::new(KernelFamily::Rbf, 3).with_sigma2(1.3);
        let mut rng = Rng::new(19);
        let block = SpectralBlock::init(OmegaStrategy::PriorFixed, &params, 50, &mut rng);
        let x = rng.randn(1, 3);
        let gram = approx_gram(&x, &block, &params);
        assert!((gram.get(0, 0) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn approx_gram_error_decays_with_feature_count() {
        let params = KernelParams::new(KernelFamily::Rbf, 5);
        let mut data_rng = Rng::new(20);
        let x = data_rng.randn(20, 5);
        let exact = kernel_matrix(&x, &params);
        let mut medians = Vec::new();
        for &n_rf in &[100usize, 1000, 10_000] {
            let mut errors: Vec<f64> = (0..10)
                .map(|s| {
                    let mut rng = Rng::new(100 + s);
                    let block = SpectralBlock::init(OmegaStrategy::PriorFixed, &params, n_rf, &mut rng);
                    approx_gram(&x, &block, &params).max_abs_diff(&exact)
                })
                .collect();
            errors.sort_by(f64::total_cmp);
            medians.push(0.5 * (errors[4] + errors[5]));
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "medians not decreasing: {medians:?}"
        );
    }

    #[test]
    fn approx_gram_is_psd_by_construction() {
        // Gram of explicit features: v' (Phi Phi') v = ||Phi' v||^2 >= 0.
        let params = KernelParams::new(KernelFamily::Rbf, 3);
        let mut rng = Rng::new(21);
        let block = SpectralBlock::init(OmegaStrategy::PriorFixed, &params, 30, &mut rng);
        let x = rng.randn(8, 3);
        let gram = approx_gram(&x, &block, &params);
        for _ in 0..20 {
            let v = rng.randn(8, 1);
            let quad = v.matmul_at_b(&gram.matmul(&v)).get(0, 0);
            assert!(quad >= -1e-10, "quadratic form {quad}");
        }
    }

    #[test]
    fn var_fixed_block_materializes_deterministically() {
        let params = KernelParams::new(KernelFamily::Rbf, 3).with_lengthscale(2.0);
        let mut rng = Rng::new(22);
        let block = SpectralBlock::init(OmegaStrategy::VarFixed, &params, 10, &mut rng);
        let a = block.materialize(&params, None);
        let b = block.materialize(&params, None);
        assert_eq!(a, b);
        // posterior initialized at the prior: std = 1/l
        let q = block.variational.as_ref().unwrap();
        assert!(q.mean.iter().all(|v| v == 0.0));
        assert!(q
            .log_var
            .iter()
            .all(|v| (v - (0.25f64).ln()).abs() < 1e-12));
    }

    #[test]
    fn prior_fixed_frequencies_track_lengthscale() {
        let mut params = KernelParams::new(KernelFamily::Rbf, 2);
        let mut rng = Rng::new(23);
        let block = SpectralBlock::init(OmegaStrategy::PriorFixed, &params, 6, &mut rng);
        let before = block.materialize(&params, None);
        params.log_lengthscales = vec![2.0f64.ln(); 2];
        let after = block.materialize(&params, None);
        assert!(before.scale(0.5).max_abs_diff(&after) < 1e-15);
    }
}
