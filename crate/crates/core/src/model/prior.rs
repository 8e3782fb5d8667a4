//! Weakly-informative priors on the constrained scales.

use crate::autodiff::Real;
use crate::data::Term;

use super::context::ModelContext;
use super::transform::ConstrainedState;

const LN_PI: f64 = 1.1447298858494002;
const LN_2: f64 = std::f64::consts::LN_2;

#[inline]
fn cauchy<R: Real>(x: R, scale: f64) -> R {
    let z = x / scale;
    -(z * z).ln_1p() - (LN_PI + scale.ln())
}

#[inline]
fn half_cauchy<R: Real>(x: R, scale: f64) -> R {
    cauchy(x, scale) + LN_2
}

/// Sum of the log prior densities, each on the scale its prior is stated on:
/// Cauchy for regression-type coefficients and the log baseline-hazard
/// parameters, half-Cauchy for scales, LKJ (unnormalized) for the
/// correlation, flat for the bounded dof parameters.
pub(super) fn log_prior<R: Real>(ctx: &ModelContext, st: &ConstrainedState<R>) -> R {
    let prior = &ctx.spec().prior;
    let designs = ctx.dataset().designs.as_ref().expect("designs built");
    let mut acc = st.eta * 0.0;

    for (term, &a) in designs.formula.iter().zip(&st.alpha) {
        let scale = if *term == Term::Intercept {
            prior.intercept_scale
        } else {
            prior.coef_scale
        };
        acc = acc + cauchy(a, scale);
    }
    for &w in &st.omega {
        acc = acc + cauchy(w, prior.coef_scale);
    }
    acc = acc + cauchy(st.eta, prior.coef_scale);
    acc = acc + cauchy(st.log_lambda, prior.coef_scale);
    acc = acc + cauchy(st.log_nu, prior.coef_scale);
    acc = acc + half_cauchy(st.sigma, prior.scale_scale);
    for &r in &st.re_scales {
        acc = acc + half_cauchy(r, prior.scale_scale);
    }
    // LKJ on the correlation factor: sum over rows of
    // (q - row - 1 + 2(shape - 1)) * ln L_rr, row 0-based (row 0 contributes
    // nothing since L_00 = 1). Normalizing constant omitted.
    let q = ctx.layout().q;
    for row in 1..q {
        let coef = (q - row - 1) as f64 + 2.0 * (prior.lkj_shape - 1.0);
        acc = acc + st.chol_corr[row * q + row].ln() * coef;
    }
    for &b in &st.beta {
        acc = acc + cauchy(b, prior.coef_scale);
    }
    // gamma/phi/delta/delta0: flat on their bounded support.
    acc
}
