//! Position of every parameter and latent variable in the unconstrained
//! vector, plus the constrained-space reporting layout.

use std::ops::Range;

use super::spec::{Approach, ModelSpec};

/// Index map for the unconstrained parameter vector.
///
/// Block order: fixed effects, survival coefficients, association, log
/// baseline-hazard parameters, log error scale, log random-effect scales,
/// correlation factor, degrees-of-freedom parameters, spline coefficients,
/// random effects, subject-level mixing latents, error mixing latents.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub p: usize,
    pub q: usize,
    pub g: usize,
    /// Spline basis dimension (0 unless `a4`).
    pub s: usize,
    pub n: usize,
    pub total_obs: usize,

    pub alpha: Range<usize>,
    pub omega: Range<usize>,
    pub eta: usize,
    pub log_lambda: usize,
    pub log_nu: usize,
    pub log_sigma: usize,
    pub re_log_scale: Range<usize>,
    pub corr: Range<usize>,
    /// `a1` shared dof.
    pub gamma: Option<usize>,
    /// Random-effect dof (`a2`..`a4` with t random effects).
    pub phi: Option<usize>,
    /// Error dof (`a2`, `a3`).
    pub delta: Option<usize>,
    /// `a4` dof intercept.
    pub delta0: Option<usize>,
    pub beta: Range<usize>,
    pub b: Range<usize>,
    /// Subject-level mixing latents: the shared V for `a1`, V^B otherwise.
    pub v_b: Range<usize>,
    /// Error mixing latents: per subject (`a2`) or per observation (`a3`/`a4`).
    pub v_z: Range<usize>,

    pub dim: usize,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec, p: usize, q: usize, g: usize, s: usize, n: usize, total_obs: usize) -> ParamLayout {
        let mut at = 0usize;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let alpha = take(p);
        let omega = take(g);
        let eta = take(1).start;
        let log_lambda = take(1).start;
        let log_nu = take(1).start;
        let log_sigma = take(1).start;
        let re_log_scale = take(q);
        let corr = take(q * (q - 1) / 2);
        let (mut gamma, mut phi, mut delta, mut delta0) = (None, None, None, None);
        match spec.approach {
            Approach::Gaussian => {}
            Approach::SharedMixing => gamma = Some(take(1).start),
            Approach::SubjectMixing | Approach::ObservationMixing => {
                if spec.t_random_effects() {
                    phi = Some(take(1).start);
                }
                delta = Some(take(1).start);
            }
            Approach::TimeVaryingDof => {
                if spec.t_random_effects() {
                    phi = Some(take(1).start);
                }
                delta0 = Some(take(1).start);
            }
        }
        let beta = take(if spec.approach == Approach::TimeVaryingDof { s } else { 0 });
        let b = take(n * q);
        let v_b = take(if spec.t_random_effects() { n } else { 0 });
        let v_z = take(match spec.approach {
            Approach::Gaussian | Approach::SharedMixing => 0,
            Approach::SubjectMixing => n,
            Approach::ObservationMixing | Approach::TimeVaryingDof => total_obs,
        });
        ParamLayout {
            p,
            q,
            g,
            s,
            n,
            total_obs,
            alpha,
            omega,
            eta,
            log_lambda,
            log_nu,
            log_sigma,
            re_log_scale,
            corr,
            gamma,
            phi,
            delta,
            delta0,
            beta,
            b,
            v_b,
            v_z,
            dim: at,
        }
    }

    /// Index of B_{subject,h} in the raw vector.
    #[inline]
    pub fn b_index(&self, subject: usize, h: usize) -> usize {
        self.b.start + subject * self.q + h
    }

    /// Number of hyperparameter coordinates (everything before the latents).
    pub fn hyper_dim(&self) -> usize {
        self.b.start
    }

    /// Names of the constrained-space reporting vector, in storage order.
    pub fn constrained_names(&self, spec: &ModelSpec) -> Vec<String> {
        let mut names = Vec::new();
        for j in 1..=self.p {
            names.push(format!("alpha.{j}"));
        }
        for j in 1..=self.g {
            names.push(format!("omega.{j}"));
        }
        names.push("eta".into());
        names.push("lambda".into());
        names.push("nu".into());
        names.push("sigma2".into());
        for i in 0..self.q {
            for j in 0..=i {
                names.push(format!("Sigma.{}.{}", i + 1, j + 1));
            }
        }
        if self.gamma.is_some() {
            names.push("gamma".into());
        }
        if self.phi.is_some() {
            names.push("phi".into());
        }
        if self.delta.is_some() {
            names.push("delta".into());
        }
        if self.delta0.is_some() {
            names.push("delta0".into());
        }
        for j in 1..=self.beta.len() {
            names.push(format!("beta.{j}"));
        }
        for i in 0..self.n {
            for h in 1..=self.q {
                names.push(format!("b.{}.{h}", i + 1));
            }
        }
        if !self.v_b.is_empty() {
            let prefix = if spec.approach == Approach::SharedMixing {
                "v"
            } else {
                "v_b"
            };
            for i in 1..=self.n {
                names.push(format!("{prefix}.{i}"));
            }
        }
        if spec.approach == Approach::SubjectMixing {
            for i in 1..=self.n {
                names.push(format!("v_z.{i}"));
            }
        }
        // Per-observation latents need the observation counts; see
        // `constrained_names_with_obs`.
        names
    }

    /// As [`constrained_names`], with per-observation latent names built from
    /// the per-subject observation counts.
    pub fn constrained_names_with_obs(&self, spec: &ModelSpec, m: &[usize]) -> Vec<String> {
        let mut names = self.constrained_names(spec);
        if matches!(
            spec.approach,
            Approach::ObservationMixing | Approach::TimeVaryingDof
        ) {
            for (i, &mi) in m.iter().enumerate() {
                for j in 1..=mi {
                    names.push(format!("v_z.{}.{j}", i + 1));
                }
            }
        }
        names
    }

    /// Dimension of the constrained reporting vector.
    pub fn constrained_dim(&self, spec: &ModelSpec) -> usize {
        let mut d = self.p + self.g + 1 + 3 + self.q * (self.q + 1) / 2;
        d += [self.gamma, self.phi, self.delta, self.delta0]
            .iter()
            .filter(|o| o.is_some())
            .count();
        d += self.beta.len();
        d += self.n * self.q;
        d += self.v_b.len();
        d += self.v_z.len();
        let _ = spec;
        d
    }

    /// Names of the hyperparameters only (the prefix of the constrained
    /// vector before random effects and mixing latents).
    pub fn hyper_names(&self, spec: &ModelSpec) -> Vec<String> {
        let mut names = self.constrained_names(spec);
        names.truncate(self.constrained_hyper_dim());
        names
    }

    pub fn constrained_hyper_dim(&self) -> usize {
        self.p
            + self.g
            + 1
            + 3
            + self.q * (self.q + 1) / 2
            + [self.gamma, self.phi, self.delta, self.delta0]
                .iter()
                .filter(|o| o.is_some())
                .count()
            + self.beta.len()
    }
}
