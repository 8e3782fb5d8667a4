//! Unconstrained-to-constrained parameter map with log-Jacobian bookkeeping.
//!
//! Scales use `exp`, degrees-of-freedom parameters a scaled logit onto their
//! bounded support, and the random-effect correlation matrix the canonical
//! tanh / row-normalized Cholesky map, so every unconstrained vector yields a
//! valid state.
//!
//! `jac_hyper` carries the change-of-variables terms for coordinates whose
//! priors are stated on the constrained scale (error scale, random-effect
//! scales, correlation); `jac_dof` carries the scaled-logit terms of the
//! bounded dof parameters. The log baseline-hazard parameters get no Jacobian
//! (their priors are placed on the log scale directly), and the mixing-latent
//! change of variables is accounted for inside the mixing density.

use crate::autodiff::Real;
use crate::error::{Error, Result};

use super::layout::ParamLayout;
use super::spec::{Delta0Support, ModelSpec};

/// Constrained views of the hyperparameters. Latents (random effects and log
/// mixing variables) stay in the raw vector and are read by the likelihood
/// directly.
pub struct ConstrainedState<R> {
    pub alpha: Vec<R>,
    pub omega: Vec<R>,
    pub eta: R,
    pub log_lambda: R,
    pub log_nu: R,
    pub lambda: R,
    pub nu: R,
    pub sigma: R,
    /// Diagonal of the random-effect scale matrix.
    pub re_scales: Vec<R>,
    /// q x q lower-triangular Cholesky factor of the correlation matrix.
    pub chol_corr: Vec<R>,
    /// q x q lower-triangular Cholesky factor of the covariance matrix
    /// (scales times correlation factor).
    pub chol_cov: Vec<R>,
    pub gamma: Option<R>,
    pub phi: Option<R>,
    pub delta: Option<R>,
    /// `a4`: the bounded base dof. Under `LogScale` support this is
    /// exp(delta0); under `ValueScale` it is delta0 itself.
    pub delta_base: Option<R>,
    pub beta: Vec<R>,
    pub jac_hyper: R,
    pub jac_dof: R,
}

/// Scaled logit onto (lo, hi) with its log-derivative.
fn bounded<R: Real>(raw: R, lo: f64, hi: f64) -> (R, R) {
    let em = (-raw).exp();
    let sig = (em + 1.0).recip();
    let value = sig * (hi - lo) + lo;
    // d value / d raw = (hi-lo) sig (1-sig);  1-sig = em * sig
    let log_jac = sig.ln() * 2.0 - raw + (hi - lo).ln();
    (value, log_jac)
}

/// Inverse of [`bounded`].
fn unbounded(value: f64, lo: f64, hi: f64) -> f64 {
    let u = (value - lo) / (hi - lo);
    (u / (1.0 - u)).ln()
}

pub fn check_dim(layout: &ParamLayout, len: usize) -> Result<()> {
    if len != layout.dim {
        return Err(Error::Dimension {
            expected: layout.dim,
            got: len,
        });
    }
    Ok(())
}

/// Map the unconstrained vector to constrained hyperparameters.
pub fn transform<R: Real>(spec: &ModelSpec, layout: &ParamLayout, raw: &[R]) -> ConstrainedState<R> {
    debug_assert_eq!(raw.len(), layout.dim);
    let zero = raw[0] * 0.0;
    let one = zero + 1.0;
    let q = layout.q;

    let alpha: Vec<R> = raw[layout.alpha.clone()].to_vec();
    let omega: Vec<R> = raw[layout.omega.clone()].to_vec();
    let eta = raw[layout.eta];
    let log_lambda = raw[layout.log_lambda];
    let log_nu = raw[layout.log_nu];
    let lambda = log_lambda.exp();
    let nu = log_nu.exp();
    let sigma = raw[layout.log_sigma].exp();
    let mut jac_hyper = raw[layout.log_sigma];

    let mut re_scales = Vec::with_capacity(q);
    for k in layout.re_log_scale.clone() {
        re_scales.push(raw[k].exp());
        jac_hyper = jac_hyper + raw[k];
    }

    // Correlation Cholesky factor from tanh-transformed partial terms.
    let mut chol_corr = vec![zero; q * q];
    chol_corr[0] = one;
    let mut z_at = layout.corr.start;
    for i in 1..q {
        let mut sum_sq = zero;
        for j in 0..i {
            let w = raw[z_at].tanh();
            z_at += 1;
            let rem = one - sum_sq;
            let entry = w * rem.sqrt();
            jac_hyper = jac_hyper + (one - w * w).ln() + rem.ln() * 0.5;
            chol_corr[i * q + j] = entry;
            sum_sq = sum_sq + entry * entry;
        }
        chol_corr[i * q + i] = (one - sum_sq).sqrt();
    }
    let mut chol_cov = vec![zero; q * q];
    for i in 0..q {
        for j in 0..=i {
            chol_cov[i * q + j] = re_scales[i] * chol_corr[i * q + j];
        }
    }

    let (lo, hi) = (spec.prior.dof_lower, spec.prior.dof_upper);
    let mut jac_dof = zero;
    let dof_value = |idx: Option<usize>, jac: &mut R| -> Option<R> {
        idx.map(|k| {
            let (v, j) = bounded(raw[k], lo, hi);
            *jac = *jac + j;
            v
        })
    };
    let gamma = dof_value(layout.gamma, &mut jac_dof);
    let phi = dof_value(layout.phi, &mut jac_dof);
    let delta = dof_value(layout.delta, &mut jac_dof);
    let delta_base = dof_value(layout.delta0, &mut jac_dof);

    let beta: Vec<R> = raw[layout.beta.clone()].to_vec();

    ConstrainedState {
        alpha,
        omega,
        eta,
        log_lambda,
        log_nu,
        lambda,
        nu,
        sigma,
        re_scales,
        chol_corr,
        chol_cov,
        gamma,
        phi,
        delta,
        delta_base,
        beta,
        jac_hyper,
        jac_dof,
    }
}

impl ConstrainedState<f64> {
    /// Reported delta0 value for `a4`.
    pub fn delta0(&self, spec: &ModelSpec) -> Option<f64> {
        self.delta_base.map(|b| match spec.delta0_support {
            Delta0Support::LogScale => b.ln(),
            Delta0Support::ValueScale => b,
        })
    }

    /// Covariance matrix entry (i, j).
    pub fn sigma_entry(&self, q: usize, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..q {
            acc += self.chol_cov[i * q + k] * self.chol_cov[j * q + k];
        }
        acc
    }
}

/// Invert [`transform`] on the hyperparameter block (the latent block is the
/// identity / plain log and needs no inversion).
pub fn untransform_hyper(
    spec: &ModelSpec,
    layout: &ParamLayout,
    st: &ConstrainedState<f64>,
) -> Vec<f64> {
    let mut raw = vec![0.0; layout.hyper_dim()];
    raw[layout.alpha.clone()].copy_from_slice(&st.alpha);
    raw[layout.omega.clone()].copy_from_slice(&st.omega);
    raw[layout.eta] = st.eta;
    raw[layout.log_lambda] = st.lambda.ln();
    raw[layout.log_nu] = st.nu.ln();
    raw[layout.log_sigma] = st.sigma.ln();
    for (k, idx) in layout.re_log_scale.clone().enumerate() {
        raw[idx] = st.re_scales[k].ln();
    }
    let q = layout.q;
    let mut z_at = layout.corr.start;
    for i in 1..q {
        let mut sum_sq = 0.0;
        for j in 0..i {
            let entry = st.chol_corr[i * q + j];
            let w = entry / (1.0 - sum_sq).sqrt();
            raw[z_at] = 0.5 * ((1.0 + w) / (1.0 - w)).ln(); // atanh
            z_at += 1;
            sum_sq += entry * entry;
        }
    }
    let (lo, hi) = (spec.prior.dof_lower, spec.prior.dof_upper);
    if let (Some(idx), Some(v)) = (layout.gamma, st.gamma) {
        raw[idx] = unbounded(v, lo, hi);
    }
    if let (Some(idx), Some(v)) = (layout.phi, st.phi) {
        raw[idx] = unbounded(v, lo, hi);
    }
    if let (Some(idx), Some(v)) = (layout.delta, st.delta) {
        raw[idx] = unbounded(v, lo, hi);
    }
    if let (Some(idx), Some(v)) = (layout.delta0, st.delta_base) {
        raw[idx] = unbounded(v, lo, hi);
    }
    raw[layout.beta.clone()].copy_from_slice(&st.beta);
    raw
}

/// Constrained reporting vector for one draw (the draw-CSV row layout).
pub fn constrained_vector(spec: &ModelSpec, layout: &ParamLayout, raw: &[f64]) -> Vec<f64> {
    let st = transform::<f64>(spec, layout, raw);
    let mut out = Vec::with_capacity(layout.constrained_dim(spec));
    out.extend_from_slice(&st.alpha);
    out.extend_from_slice(&st.omega);
    out.push(st.eta);
    out.push(st.lambda);
    out.push(st.nu);
    out.push(st.sigma * st.sigma);
    let q = layout.q;
    for i in 0..q {
        for j in 0..=i {
            out.push(st.sigma_entry(q, i, j));
        }
    }
    if let Some(v) = st.gamma {
        out.push(v);
    }
    if let Some(v) = st.phi {
        out.push(v);
    }
    if let Some(v) = st.delta {
        out.push(v);
    }
    if let Some(v) = st.delta0(spec) {
        out.push(v);
    }
    out.extend_from_slice(&st.beta);
    out.extend_from_slice(&raw[layout.b.clone()]);
    for k in layout.v_b.clone() {
        out.push(raw[k].exp());
    }
    for k in layout.v_z.clone() {
        out.push(raw[k].exp());
    }
    debug_assert_eq!(out.len(), layout.constrained_dim(spec));
    out
}

/// Effective error degrees of freedom for `a4`, given the spline row at the
/// observation time.
pub fn dof_at<R: Real>(spec: &ModelSpec, st: &ConstrainedState<R>, basis_row: &[f64]) -> R {
    let base = st.delta_base.expect("a4 state");
    let mut lin = base * 0.0;
    for (&a, &b) in basis_row.iter().zip(&st.beta) {
        lin = lin + b * a;
    }
    match spec.delta0_support {
        Delta0Support::LogScale => base * lin.exp(),
        Delta0Support::ValueScale => (base + lin).exp(),
    }
}
