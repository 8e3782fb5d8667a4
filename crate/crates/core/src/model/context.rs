//! Prepared model: dataset, spec, spline basis, quadrature caches, and the
//! joint log posterior.

use crate::autodiff::{Real, ScalarField};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::GaussLegendre;
use crate::splines::SplineBasis;

use super::layout::ParamLayout;
use super::likelihood;
use super::prior;
use super::spec::{Approach, ModelSpec};
use super::transform::{self, check_dim, ConstrainedState};

/// Additive components of the joint log posterior.
#[derive(Debug, Clone, Copy)]
pub struct PostParts<R> {
    /// Change-of-variables terms for the scale/correlation hyperparameters.
    pub jac_hyper: R,
    /// Change-of-variables terms for the bounded dof parameters.
    pub jac_dof: R,
    pub prior: R,
    pub re: R,
    /// Mixing-variable densities including their log-scale Jacobians.
    pub mixing: R,
    pub long: R,
    pub surv: R,
}

impl<R: Real> PostParts<R> {
    pub fn total(&self) -> R {
        self.jac_hyper + self.jac_dof + self.prior + self.re + self.mixing + self.long + self.surv
    }
}

/// Immutable fit context shared read-only across chains.
pub struct ModelContext {
    ds: Dataset,
    spec: ModelSpec,
    basis: Option<SplineBasis>,
    layout: ParamLayout,
    /// Unit-interval quadrature nodes/weights and cached node logs.
    pub(super) quad_t: Vec<f64>,
    pub(super) quad_w: Vec<f64>,
    pub(super) quad_ln_t: Vec<f64>,
    /// N x s spline rows at the observation times (`a4` only).
    pub(super) spline_rows: Vec<f64>,
    /// n x Q x p fixed design at the mapped quadrature times `S_i * t_k^3`.
    pub(super) x_nodes: Vec<f64>,
    /// n x Q x q random design at the mapped quadrature times.
    pub(super) d_nodes: Vec<f64>,
    /// Designs at time zero (n x p, n x q).
    pub(super) x_zero: Vec<f64>,
    pub(super) d_zero: Vec<f64>,
    /// Designs at the survival times (n x p, n x q).
    pub(super) x_surv: Vec<f64>,
    pub(super) d_surv: Vec<f64>,
    pub(super) ln_surv_time: Vec<f64>,
}

impl ModelContext {
    /// Build the context, placing dof-spline knots at the empirical quantiles
    /// of the pooled observation times when the spec asks for them.
    pub fn new(ds: Dataset, spec: ModelSpec) -> Result<ModelContext> {
        let basis = if spec.approach == Approach::TimeVaryingDof {
            Some(SplineBasis::place_knots(&ds.times, spec.knot_count)?)
        } else {
            None
        };
        Self::with_basis(ds, spec, basis)
    }

    /// Build the context with an explicit (e.g. reloaded) spline basis.
    pub fn with_basis(
        ds: Dataset,
        spec: ModelSpec,
        basis: Option<SplineBasis>,
    ) -> Result<ModelContext> {
        spec.validate()?;
        let designs = ds.designs()?.clone();
        if spec.approach == Approach::TimeVaryingDof && basis.is_none() {
            return Err(Error::Config("a4 requires a spline basis".into()));
        }
        let s = basis.as_ref().map_or(0, |b| b.dim());
        let layout = ParamLayout::new(
            &spec,
            designs.p,
            designs.q,
            designs.g,
            s,
            ds.n,
            ds.total_obs(),
        );

        let gl = GaussLegendre::new(spec.quad_order);
        let (quad_t, quad_w) = gl.unit();
        let quad_ln_t: Vec<f64> = quad_t.iter().map(|t| t.ln()).collect();

        let mut spline_rows = Vec::new();
        if let Some(b) = &basis {
            spline_rows = vec![0.0; ds.total_obs() * s];
            for (i, &t) in ds.times.iter().enumerate() {
                b.evaluate_into(t, &mut spline_rows[i * s..(i + 1) * s]);
            }
        }

        let (p, q) = (designs.p, designs.q);
        let nq = spec.quad_order;
        let mut x_nodes = vec![0.0; ds.n * nq * p];
        let mut d_nodes = vec![0.0; ds.n * nq * q];
        let mut x_zero = vec![0.0; ds.n * p];
        let mut d_zero = vec![0.0; ds.n * q];
        let mut x_surv = vec![0.0; ds.n * p];
        let mut d_surv = vec![0.0; ds.n * q];
        let mut ln_surv_time = vec![0.0; ds.n];
        for i in 0..ds.n {
            let s_i = ds.surv_time[i];
            ln_surv_time[i] = s_i.ln();
            ds.design_at_time(&designs.formula, i, 0.0, &mut x_zero[i * p..(i + 1) * p]);
            ds.design_at_time(&designs.re_formula, i, 0.0, &mut d_zero[i * q..(i + 1) * q]);
            ds.design_at_time(&designs.formula, i, s_i, &mut x_surv[i * p..(i + 1) * p]);
            ds.design_at_time(&designs.re_formula, i, s_i, &mut d_surv[i * q..(i + 1) * q]);
            for (k, &t) in quad_t.iter().enumerate() {
                let u = s_i * t * t * t;
                ds.design_at_time(
                    &designs.formula,
                    i,
                    u,
                    &mut x_nodes[(i * nq + k) * p..(i * nq + k + 1) * p],
                );
                ds.design_at_time(
                    &designs.re_formula,
                    i,
                    u,
                    &mut d_nodes[(i * nq + k) * q..(i * nq + k + 1) * q],
                );
            }
        }

        Ok(ModelContext {
            ds,
            spec,
            basis,
            layout,
            quad_t,
            quad_w,
            quad_ln_t,
            spline_rows,
            x_nodes,
            d_nodes,
            x_zero,
            d_zero,
            x_surv,
            d_surv,
            ln_surv_time,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn basis(&self) -> Option<&SplineBasis> {
        self.basis.as_ref()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub(super) fn spline_row(&self, obs: usize) -> &[f64] {
        let s = self.layout.s;
        &self.spline_rows[obs * s..(obs + 1) * s]
    }

    /// All additive log-posterior components at an unconstrained point.
    pub fn parts<R: Real>(&self, raw: &[R]) -> PostParts<R> {
        debug_assert_eq!(raw.len(), self.layout.dim);
        let st = transform::transform(&self.spec, &self.layout, raw);
        PostParts {
            jac_hyper: st.jac_hyper,
            jac_dof: st.jac_dof,
            prior: prior::log_prior(self, &st),
            re: likelihood::log_re(self, &st, raw),
            mixing: likelihood::log_mixing(self, &st, raw),
            long: likelihood::loglik_long(self, &st, raw),
            surv: likelihood::loglik_surv(self, &st, raw),
        }
    }

    /// Constrained hyperparameter view of an unconstrained point.
    pub fn constrain(&self, raw: &[f64]) -> Result<ConstrainedState<f64>> {
        check_dim(&self.layout, raw.len())?;
        Ok(transform::transform(&self.spec, &self.layout, raw))
    }

    /// Constrained reporting vector (the draw-CSV row).
    pub fn constrained_vector(&self, raw: &[f64]) -> Vec<f64> {
        transform::constrained_vector(&self.spec, &self.layout, raw)
    }

    pub fn constrained_names(&self) -> Vec<String> {
        self.layout.constrained_names_with_obs(&self.spec, &self.ds.m)
    }

    /// Joint log posterior; non-finite values signal rejection.
    pub fn log_posterior(&self, raw: &[f64]) -> Result<f64> {
        check_dim(&self.layout, raw.len())?;
        Ok(self.parts::<f64>(raw).total())
    }

    /// Longitudinal log likelihood conditional on the latents.
    pub fn loglik_long(&self, raw: &[f64]) -> Result<f64> {
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform(&self.spec, &self.layout, raw);
        let mut acc = 0.0;
        for i in 0..self.ds.n {
            let v = likelihood::loglik_long_subject::<f64>(self, &st, raw, i);
            if !v.is_finite() {
                return Err(Error::Numeric {
                    what: "longitudinal log likelihood".into(),
                    subject: i,
                });
            }
            acc += v;
        }
        Ok(acc)
    }

    /// Mixing-variable log density (with latent Jacobians).
    pub fn log_mixing(&self, raw: &[f64]) -> Result<f64> {
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform(&self.spec, &self.layout, raw);
        Ok(likelihood::log_mixing(self, &st, raw))
    }

    /// Random-effect log density.
    pub fn log_re(&self, raw: &[f64]) -> Result<f64> {
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform(&self.spec, &self.layout, raw);
        Ok(likelihood::log_re(self, &st, raw))
    }

    /// Survival log likelihood.
    pub fn loglik_surv(&self, raw: &[f64]) -> Result<f64> {
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform(&self.spec, &self.layout, raw);
        let mut acc = 0.0;
        for i in 0..self.ds.n {
            let v = likelihood::loglik_surv_subject::<f64>(self, &st, raw, i);
            if !v.is_finite() {
                return Err(Error::Numeric {
                    what: "survival log likelihood".into(),
                    subject: i,
                });
            }
            acc += v;
        }
        Ok(acc)
    }

    /// Log prior at an unconstrained point.
    pub fn log_prior(&self, raw: &[f64]) -> Result<f64> {
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform(&self.spec, &self.layout, raw);
        Ok(prior::log_prior(self, &st))
    }

    /// Hazard for `subject` at time `t`.
    pub fn hazard(&self, subject: usize, t: f64, raw: &[f64]) -> Result<f64> {
        if t <= 0.0 {
            return Err(Error::Usage(format!("hazard needs t > 0, got {t}")));
        }
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform::<f64>(&self.spec, &self.layout, raw);
        Ok(likelihood::hazard_at(self, &st, raw, subject, t))
    }

    /// Cumulative hazard for `subject` on (0, s] at quadrature order `q`.
    pub fn cumulative_hazard(&self, subject: usize, s: f64, raw: &[f64], q: usize) -> Result<f64> {
        if s <= 0.0 {
            return Err(Error::Usage(format!(
                "cumulative hazard needs s > 0, got {s}"
            )));
        }
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform::<f64>(&self.spec, &self.layout, raw);
        Ok(likelihood::cumulative_hazard_fresh(
            self, &st, raw, subject, s, q,
        ))
    }

    /// Time-varying degrees of freedom at `t` (`a4` only).
    pub fn dof_at(&self, t: f64, raw: &[f64]) -> Result<f64> {
        if self.spec.approach != Approach::TimeVaryingDof {
            return Err(Error::Usage(format!(
                "dof_at is defined for a4 only; spec is {}",
                self.spec.approach
            )));
        }
        check_dim(&self.layout, raw.len())?;
        let st = transform::transform::<f64>(&self.spec, &self.layout, raw);
        let row = self.basis.as_ref().unwrap().evaluate(t);
        Ok(transform::dof_at(&self.spec, &st, &row))
    }
}

impl ScalarField for ModelContext {
    fn eval<R: Real>(&self, x: &[R]) -> R {
        self.parts(x).total()
    }
}

impl ScalarField for &ModelContext {
    fn eval<R: Real>(&self, x: &[R]) -> R {
        (*self).parts(x).total()
    }
}
