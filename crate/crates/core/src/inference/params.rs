//! Flat parameter vector view of a model. Adam, the schedule's freeze
//! mask, and the finite-difference audits all work on this layout.

use crate::features::OmegaStrategy;
use crate::likelihoods::LikelihoodSpec;
use crate::model::DgpModel;

/// What one contiguous segment of the flat vector holds; the payload is
/// the layer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    WMean(usize),
    WLogVar(usize),
    OmegaMean(usize),
    OmegaLogVar(usize),
    LogSigma2(usize),
    LogLengthscales(usize),
    LogNoiseVar,
}

impl ParamKind {
    /// Covariance parameters (and the noise variance, which the schedule
    /// groups with them) are frozen during the warm-up phase.
    pub fn is_theta(&self) -> bool {
        matches!(
            self,
            ParamKind::LogSigma2(_) | ParamKind::LogLengthscales(_) | ParamKind::LogNoiseVar
        )
    }

    /// Stored log-variances are clamped after every optimizer step.
    pub fn is_log_var(&self) -> bool {
        matches!(self, ParamKind::WLogVar(_) | ParamKind::OmegaLogVar(_))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub kind: ParamKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub segments: Vec<Segment>,
    pub n_params: usize,
}

impl ParamLayout {
    pub fn of(model: &DgpModel) -> ParamLayout {
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |kind: ParamKind, len: usize, offset: &mut usize| {
            segments.push(Segment {
                kind,
                offset: *offset,
                len,
            });
            *offset += len;
        };
        let variational_omega = matches!(
            model.spec.omega_strategy,
            OmegaStrategy::VarFixed | OmegaStrategy::VarResampled
        );
        for l in 0..model.n_layers() {
            let (wr, wc) = model.w_posterior[l].shape();
            push(ParamKind::WMean(l), wr * wc, &mut offset);
            push(ParamKind::WLogVar(l), wr * wc, &mut offset);
            if variational_omega {
                let q = model.spectral[l].variational.as_ref().unwrap();
                let (or, oc) = q.shape();
                push(ParamKind::OmegaMean(l), or * oc, &mut offset);
                push(ParamKind::OmegaLogVar(l), or * oc, &mut offset);
            }
            push(ParamKind::LogSigma2(l), 1, &mut offset);
            push(
                ParamKind::LogLengthscales(l),
                model.theta[l].input_dim(),
                &mut offset,
            );
        }
        if matches!(model.likelihood, LikelihoodSpec::Gaussian { .. }) {
            push(ParamKind::LogNoiseVar, 1, &mut offset);
        }
        ParamLayout {
            segments,
            n_params: offset,
        }
    }

    pub fn segment(&self, kind: ParamKind) -> Option<Segment> {
        self.segments.iter().copied().find(|s| s.kind == kind)
    }

    /// Per-index mask, true where the parameter belongs to the theta
    /// group frozen at the start of training.
    pub fn theta_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_params];
        for s in &self.segments {
            if s.kind.is_theta() {
                mask[s.offset..s.offset + s.len].fill(true);
            }
        }
        mask
    }

    pub fn kind_of(&self, index: usize) -> ParamKind {
        self.segments
            .iter()
            .find(|s| index >= s.offset && index < s.offset + s.len)
            .map(|s| s.kind)
            .expect("index out of layout range")
    }
}

pub fn params_to_vec(model: &DgpModel) -> Vec<f64> {
    let layout = ParamLayout::of(model);
    let mut out = vec![0.0; layout.n_params];
    for s in &layout.segments {
        let dst = &mut out[s.offset..s.offset + s.len];
        match s.kind {
            ParamKind::WMean(l) => dst.copy_from_slice(model.w_posterior[l].mean.data()),
            ParamKind::WLogVar(l) => dst.copy_from_slice(model.w_posterior[l].log_var.data()),
            ParamKind::OmegaMean(l) => {
                dst.copy_from_slice(model.spectral[l].variational.as_ref().unwrap().mean.data())
            }
            ParamKind::OmegaLogVar(l) => dst
                .copy_from_slice(model.spectral[l].variational.as_ref().unwrap().log_var.data()),
            ParamKind::LogSigma2(l) => dst[0] = model.theta[l].log_sigma2,
            ParamKind::LogLengthscales(l) => {
                dst.copy_from_slice(&model.theta[l].log_lengthscales)
            }
            ParamKind::LogNoiseVar => {
                dst[0] = model.log_noise_var().expect("regression likelihood")
            }
        }
    }
    out
}

pub fn set_params(model: &mut DgpModel, values: &[f64]) {
    let layout = ParamLayout::of(model);
    assert_eq!(values.len(), layout.n_params, "parameter vector length");
    for s in &layout.segments {
        let src = &values[s.offset..s.offset + s.len];
        match s.kind {
            ParamKind::WMean(l) => {
                model.w_posterior[l].mean.data_mut().copy_from_slice(src)
            }
            ParamKind::WLogVar(l) => {
                model.w_posterior[l].log_var.data_mut().copy_from_slice(src)
            }
            ParamKind::OmegaMean(l) => model.spectral[l]
                .variational
                .as_mut()
                .unwrap()
                .mean
                .data_mut()
                .copy_from_slice(src),
            ParamKind::OmegaLogVar(l) => model.spectral[l]
                .variational
                .as_mut()
                .unwrap()
                .log_var
                .data_mut()
                .copy_from_slice(src),
            ParamKind::LogSigma2(l) => model.theta[l].log_sigma2 = src[0],
            ParamKind::LogLengthscales(l) => {
                model.theta[l].log_lengthscales.copy_from_slice(src)
            }
            ParamKind::LogNoiseVar => {
                if let LikelihoodSpec::Gaussian { log_noise_var } = &mut model.likelihood {
                    *log_noise_var = src[0];
                }
            }
        }
    }
}
