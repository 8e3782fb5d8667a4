//! Model specification: variant selection, spline configuration, priors.

use crate::error::{Error, Result};

/// Which mixing structure drives the robustness of the model.
///
/// External names (config files, CLI): `gauss`, `a1`, `a2`, `a3`, `a4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    /// Gaussian random effects and errors; no mixing variables.
    Gaussian,
    /// `a1`: one mixing variable per subject, shared by the random effects
    /// and every error of that subject.
    SharedMixing,
    /// `a2`: independent subject-level mixing for random effects and for the
    /// errors (all errors of a subject share one variable).
    SubjectMixing,
    /// `a3`: per-observation error mixing, subject-level RE mixing.
    ObservationMixing,
    /// `a4`: per-observation error mixing whose degrees of freedom vary over
    /// time through a spline link.
    TimeVaryingDof,
}

impl Approach {
    pub fn parse(s: &str) -> Result<Approach> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss" | "gaussian" => Ok(Approach::Gaussian),
            "a1" => Ok(Approach::SharedMixing),
            "a2" => Ok(Approach::SubjectMixing),
            "a3" => Ok(Approach::ObservationMixing),
            "a4" => Ok(Approach::TimeVaryingDof),
            other => Err(Error::Config(format!(
                "unknown approach `{other}` (valid: gauss, a1, a2, a3, a4)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Gaussian => "gauss",
            Approach::SharedMixing => "a1",
            Approach::SubjectMixing => "a2",
            Approach::ObservationMixing => "a3",
            Approach::TimeVaryingDof => "a4",
        }
    }

    pub const ALL: [Approach; 5] = [
        Approach::Gaussian,
        Approach::SharedMixing,
        Approach::SubjectMixing,
        Approach::ObservationMixing,
        Approach::TimeVaryingDof,
    ];
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Distribution family of the random effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReFamily {
    Gaussian,
    StudentT,
}

impl ReFamily {
    pub fn parse(s: &str) -> Result<ReFamily> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ReFamily::Gaussian),
            "t" | "student_t" | "student-t" => Ok(ReFamily::StudentT),
            other => Err(Error::Config(format!(
                "unknown random-effect family `{other}` (valid: gaussian, t)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReFamily::Gaussian => "gaussian",
            ReFamily::StudentT => "t",
        }
    }
}

/// How the `a4` intercept parameter is supported.
///
/// `LogScale` (default): the sampled quantity is `exp(delta0)`, constrained to
/// the same (2, 100) interval as the time-invariant degrees of freedom, so the
/// `a4 -> a3` reduction at `beta = 0` is exact. `ValueScale` takes the
/// interval on `delta0` itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delta0Support {
    LogScale,
    ValueScale,
}

impl Delta0Support {
    pub fn parse(s: &str) -> Result<Delta0Support> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log_scale" | "log" => Ok(Delta0Support::LogScale),
            "value_scale" | "value" => Ok(Delta0Support::ValueScale),
            other => Err(Error::Config(format!(
                "unknown delta0 support `{other}` (valid: log_scale, value_scale)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Delta0Support::LogScale => "log_scale",
            Delta0Support::ValueScale => "value_scale",
        }
    }
}

/// Weakly-informative prior settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    /// Cauchy scale for the fixed-effect intercept.
    pub intercept_scale: f64,
    /// Cauchy scale for every other regression-type coefficient and the
    /// log baseline-hazard parameters.
    pub coef_scale: f64,
    /// Half-Cauchy scale for the error and random-effect scales.
    pub scale_scale: f64,
    /// LKJ shape for the random-effect correlation matrix.
    pub lkj_shape: f64,
    /// Support of every degrees-of-freedom parameter.
    pub dof_lower: f64,
    pub dof_upper: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            intercept_scale: 20.0,
            coef_scale: 5.0,
            scale_scale: 5.0,
            lkj_shape: 2.0,
            dof_lower: 2.0,
            dof_upper: 100.0,
        }
    }
}

/// Full model specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub approach: Approach,
    pub re_family: ReFamily,
    /// Interior knot count of the dof spline (`a4` only; ignored otherwise).
    pub knot_count: usize,
    /// Gauss-Legendre order for the cumulative hazard.
    pub quad_order: usize,
    pub delta0_support: Delta0Support,
    pub prior: PriorConfig,
}

impl ModelSpec {
    pub fn new(approach: Approach) -> ModelSpec {
        ModelSpec {
            approach,
            re_family: match approach {
                Approach::Gaussian => ReFamily::Gaussian,
                _ => ReFamily::StudentT,
            },
            knot_count: 0,
            quad_order: 15,
            delta0_support: Delta0Support::LogScale,
            prior: PriorConfig::default(),
        }
    }

    pub fn with_knots(mut self, k: usize) -> ModelSpec {
        self.knot_count = k;
        self
    }

    pub fn with_re_family(mut self, f: ReFamily) -> ModelSpec {
        self.re_family = f;
        self
    }

    /// Whether random effects carry a mixing variable.
    pub fn t_random_effects(&self) -> bool {
        match self.approach {
            Approach::Gaussian => false,
            Approach::SharedMixing => true,
            _ => self.re_family == ReFamily::StudentT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quad_order < 5 {
            return Err(Error::Config(format!(
                "quadrature order must be at least 5, got {}",
                self.quad_order
            )));
        }
        if self.approach == Approach::TimeVaryingDof && self.knot_count < 1 {
            return Err(Error::Config(
                "a4 needs at least one interior knot for the dof spline".into(),
            ));
        }
        if self.approach == Approach::SharedMixing && self.re_family == ReFamily::Gaussian {
            return Err(Error::Config(
                "a1 ties one mixing variable to both random effects and errors; \
                 a gaussian random-effect family is incompatible"
                    .into(),
            ));
        }
        if self.approach == Approach::Gaussian && self.re_family == ReFamily::StudentT {
            return Err(Error::Config(
                "the gaussian model has no mixing variables; re_family must be gaussian".into(),
            ));
        }
        if !(self.prior.dof_lower > 0.0 && self.prior.dof_upper > self.prior.dof_lower) {
            return Err(Error::Config(format!(
                "dof bounds must satisfy 0 < lower < upper, got [{}, {}]",
                self.prior.dof_lower, self.prior.dof_upper
            )));
        }
        Ok(())
    }
}
