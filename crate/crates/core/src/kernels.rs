//! Exact covariance functions. These serve as oracles for the random
//! feature approximations and as the prior covariance in the MCMC
//! gold-standard sampler; the variational training path never builds a
//! Gram matrix.

use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

/// Kernel family, with the arc-cosine order restricted to the cases that
/// have closed-form angular parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Rbf,
    ArcCosine { order: u8 },
}

impl KernelFamily {
    pub fn arc_cosine(order: u8) -> Self {
        assert!(order <= 2, "arc-cosine order must be 0, 1 or 2");
        KernelFamily::ArcCosine { order }
    }
}

/// Per-layer covariance parameters: log marginal variance and per-input
/// log lengthscales, stored on the log scale so the positives stay
/// positive under unconstrained optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub log_sigma2: f64,
    pub log_lengthscales: Vec<f64>,
    pub family: KernelFamily,
}

impl KernelParams {
    pub fn new(family: KernelFamily, input_dim: usize) -> Self {
        KernelParams {
            log_sigma2: 0.0,
            log_lengthscales: vec![0.0; input_dim],
            family,
        }
    }

    pub fn with_lengthscale(mut self, lengthscale: f64) -> Self {
        assert!(lengthscale > 0.0);
        for l in &mut self.log_lengthscales {
            *l = lengthscale.ln();
        }
        self
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        assert!(sigma2 > 0.0);
        self.log_sigma2 = sigma2.ln();
        self
    }

    pub fn sigma2(&self) -> f64 {
        self.log_sigma2.exp()
    }

    pub fn input_dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn evaluate(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Rbf => rbf_kernel(x, x2, self),
            KernelFamily::ArcCosine { order } => arccos_kernel(x, x2, self, order),
        }
    }
}

/// Squared-exponential covariance with ARD lengthscales:
/// `sigma^2 * exp(-0.5 * sum_d (x_d - x2_d)^2 / l_d^2)`.
pub fn rbf_kernel(x: &[f64], x2: &[f64], params: &KernelParams) -> f64 {
    assert_eq!(x.len(), x2.len(), "rbf_kernel input dimension mismatch");
    assert_eq!(
        x.len(),
        params.input_dim(),
        "rbf_kernel lengthscale count mismatch"
    );
    let mut quad = 0.0;
    for ((&a, &b), &log_l) in x.iter().zip(x2).zip(&params.log_lengthscales) {
        let d = (a - b) / log_l.exp();
        quad += d * d;
    }
    params.sigma2() * (-0.5 * quad).exp()
}

/// Angular part of the arc-cosine covariance for orders 0, 1, 2.
pub fn j_angular(order: u8, alpha: f64) -> f64 {
    let (sin, cos) = alpha.sin_cos();
    match order {
        0 => std::f64::consts::PI - alpha,
        1 => sin + (std::f64::consts::PI - alpha) * cos,
        2 => 3.0 * sin * cos + (std::f64::consts::PI - alpha) * (1.0 + 2.0 * cos * cos),
        _ => panic!("arc-cosine order {order} unsupported"),
    }
}

/// Arc-cosine covariance of the given order, with ARD applied by
/// rescaling each coordinate by its lengthscale before the angular
/// formula and the result scaled by sigma^2.
///
/// A zero-norm input is the continuity limit 0 for order >= 1; for
/// order 0 the angle is undefined and the call panics.
pub fn arccos_kernel(x: &[f64], x2: &[f64], params: &KernelParams, order: u8) -> f64 {
    assert_eq!(x.len(), x2.len(), "arccos_kernel input dimension mismatch");
    assert_eq!(
        x.len(),
        params.input_dim(),
        "arccos_kernel lengthscale count mismatch"
    );
    assert!(order <= 2, "arc-cosine order {order} unsupported");

    let mut nx = 0.0;
    let mut nx2 = 0.0;
    let mut dot = 0.0;
    for ((&a, &b), &log_l) in x.iter().zip(x2).zip(&params.log_lengthscales) {
        let inv_l = (-log_l).exp();
        let sa = a * inv_l;
        let sb = b * inv_l;
        nx += sa * sa;
        nx2 += sb * sb;
        dot += sa * sb;
    }
    let nx = nx.sqrt();
    let nx2 = nx2.sqrt();

    if nx == 0.0 || nx2 == 0.0 {
        assert!(
            order >= 1,
            "arc-cosine kernel of order 0 is undefined at zero-norm inputs"
        );
        return 0.0;
    }

    let cos_alpha = (dot / (nx * nx2)).clamp(-1.0, 1.0);
    let alpha = cos_alpha.acos();
    let norm_pow = (nx * nx2).powi(order as i32);
    params.sigma2() * std::f64::consts::FRAC_1_PI * norm_pow * j_angular(order, alpha)
}

/// Gram matrix of all row pairs of `x`.
pub fn kernel_matrix(x: &Matrix, params: &KernelParams) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = params.evaluate(x.row(i), x.row(j));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Cross-covariance matrix between the rows of `x` and the rows of `x2`.
pub fn kernel_cross(x: &Matrix, x2: &Matrix, params: &KernelParams) -> Matrix {
    Matrix::from_fn(x.rows(), x2.rows(), |i, j| {
        params.evaluate(x.row(i), x2.row(j))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use std::f64::consts::PI;

    fn unit_params(dim: usize, family: KernelFamily) -> KernelParams {
        KernelParams::new(family, dim)
    }

    #[test]
    fn rbf_at_zero_distance_is_sigma2() {
        let params = unit_params(3, KernelFamily::Rbf).with_sigma2(2.5);
        let x = [0.3, -1.0, 4.0];
        assert!((rbf_kernel(&x, &x, &params) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn rbf_closed_form_point() {
        // x=(0), x2=(2), l=1, sigma2=1 -> exp(-2)
        let params = unit_params(1, KernelFamily::Rbf);
        let v = rbf_kernel(&[0.0], &[2.0], &params);
        assert!((v - (-2.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn rbf_lengthscale_doubling_matches_coordinate_halving() {
        let mut rng = Rng::new(2);
        let x: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
        let x2: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
        let doubled = unit_params(4, KernelFamily::Rbf).with_lengthscale(2.0);
        let unit = unit_params(4, KernelFamily::Rbf);
        let xh: Vec<f64> = x.iter().map(|v| v / 2.0).collect();
        let x2h: Vec<f64> = x2.iter().map(|v| v / 2.0).collect();
        let a = rbf_kernel(&x, &x2, &doubled);
        let b = rbf_kernel(&xh, &x2h, &unit);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn arccos_order1_self_value() {
        // J1(0) = pi, so k(x,x) = ||x||^2 at unit scales.
        let params = unit_params(2, KernelFamily::arc_cosine(1));
        let x = [0.6, 0.8];
        let v = arccos_kernel(&x, &x, &params, 1);
        assert!((v - 1.0).abs() < 1e-12);
        let y = [1.5, -2.0];
        let n2 = 1.5f64 * 1.5 + 4.0;
        assert!((arccos_kernel(&y, &y, &params, 1) - n2).abs() < 1e-12);
    }

    #[test]
    fn arccos_order1_orthogonal_unit_vectors() {
        let params = unit_params(2, KernelFamily::arc_cosine(1));
        let v = arccos_kernel(&[1.0, 0.0], &[0.0, 1.0], &params, 1);
        assert!((v - 1.0 / PI).abs() < 1e-12);
        assert!((v - 0.318310).abs() < 1e-6);
    }

    #[test]
    fn arccos_order0_is_normalized_angle() {
        let params = unit_params(2, KernelFamily::arc_cosine(0));
        let v = arccos_kernel(&[1.0, 0.0], &[0.0, 2.0], &params, 0);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn arccos_zero_norm_is_continuity_limit_for_p1() {
        let params = unit_params(2, KernelFamily::arc_cosine(1));
        assert_eq!(arccos_kernel(&[0.0, 0.0], &[1.0, 0.0], &params, 1), 0.0);
    }

    #[test]
    #[should_panic(expected = "order 0")]
    fn arccos_zero_norm_rejected_for_p0() {
        let params = unit_params(2, KernelFamily::arc_cosine(0));
        let _ = arccos_kernel(&[0.0, 0.0], &[1.0, 0.0], &params, 0);
    }

    #[test]
    fn rbf_symmetry_and_bounds_on_random_inputs() {
        let mut rng = Rng::new(3);
        let params = unit_params(5, KernelFamily::Rbf).with_sigma2(1.7);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.next_normal()).collect();
            let x2: Vec<f64> = (0..5).map(|_| rng.next_normal()).collect();
            let a = rbf_kernel(&x, &x2, &params);
            let b = rbf_kernel(&x2, &x, &params);
            assert_eq!(a, b);
            assert!(a > 0.0 && a <= 1.7 + 1e-15);
        }
    }

    #[test]
    fn arccos_cauchy_schwarz() {
        let mut rng = Rng::new(4);
        for order in [0u8, 1, 2] {
            let params = unit_params(4, KernelFamily::arc_cosine(order));
            for _ in 0..50 {
                let x: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
                let x2: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
                let kxy = arccos_kernel(&x, &x2, &params, order);
                let kxx = arccos_kernel(&x, &x, &params, order);
                let kyy = arccos_kernel(&x2, &x2, &params, order);
                assert!(kxy * kxy <= kxx * kyy * (1.0 + 1e-12));
            }
        }
    }

    /// The closed forms for J1 and J2 must match the defining operator
    /// formula J_p(a) = (-1)^p (sin a)^(2p+1) ((1/sin a) d/da)^p ((pi-a)/sin a),
    /// with the derivatives of g(a) = (pi-a)/sin(a) taken numerically
    /// (five-point stencils, so truncation stays far below the tolerance).
    #[test]
    fn j_closed_forms_match_operator_definition() {
        let g = |a: f64| (PI - a) / a.sin();
        let h = 1e-3;
        let dg = |a: f64| {
            (-g(a + 2.0 * h) + 8.0 * g(a + h) - 8.0 * g(a - h) + g(a - 2.0 * h)) / (12.0 * h)
        };
        let ddg = |a: f64| {
            (-g(a + 2.0 * h) + 16.0 * g(a + h) - 30.0 * g(a) + 16.0 * g(a - h) - g(a - 2.0 * h))
                / (12.0 * h * h)
        };
        let mut rng = Rng::new(6);
        for _ in 0..20 {
            // Stay away from the endpoints where sin vanishes.
            let a = rng.next_range(0.3, PI - 0.3);
            let (sin, cos) = a.sin_cos();
            // p=1: -(sin a)^2 g'(a)
            let j1_op = -sin * sin * dg(a);
            assert!(
                (j_angular(1, a) - j1_op).abs() < 1e-6,
                "J1 mismatch at {a}: {} vs {}",
                j_angular(1, a),
                j1_op
            );
            // p=2: sin^3 g'' - sin^2 cos g' (expanding the nested operator)
            let j2_op = sin.powi(3) * ddg(a) - sin * sin * cos * dg(a);
            assert!(
                (j_angular(2, a) - j2_op).abs() < 1e-6,
                "J2 mismatch at {a}: {} vs {}",
                j_angular(2, a),
                j2_op
            );
        }
    }

    #[test]
    fn gram_of_single_row_is_sigma2() {
        let params = unit_params(2, KernelFamily::Rbf).with_sigma2(3.0);
        let x = Matrix::from_vec(1, 2, vec![0.5, -0.5]);
        let k = kernel_matrix(&x, &params);
        assert_eq!(k.shape(), (1, 1));
        assert!((k.get(0, 0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gram_is_symmetric() {
        let mut rng = Rng::new(8);
        let x = rng.randn(5, 3);
        let params = unit_params(3, KernelFamily::Rbf);
        let k = kernel_matrix(&x, &params);
        assert!(k.max_abs_diff(&k.transpose()) < 1e-12);
    }

    /// Jacobi eigenvalue sweep as an independent PSD oracle.
    fn min_eigenvalue(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut a = m.clone();
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.get(i, j) * a.get(i, j);
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (a.get(q, q) - a.get(p, p)) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        (0..n).map(|i| a.get(i, i)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn gram_plus_jitter_is_psd() {
        let mut rng = Rng::new(9);
        let x = rng.randn(20, 3);
        for family in [KernelFamily::Rbf, KernelFamily::arc_cosine(1)] {
            let params = unit_params(3, family);
            let mut k = kernel_matrix(&x, &params);
            for i in 0..20 {
                k.set(i, i, k.get(i, i) + 1e-10);
            }
            assert!(
                min_eigenvalue(&k) >= 0.0,
                "{family:?} gram not PSD after jitter"
            );
        }
    }
}
