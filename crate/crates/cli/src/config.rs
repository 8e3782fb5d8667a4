//! Flat key = value configuration with CLI-flag overrides.
//!
//! Files are grep-able manifests: one `key = value` per line, `#` comments,
//! dotted keys for nesting. Flags always win over file values. The same
//! format is written back as the run manifest, so a recorded run can be
//! replayed with `--config manifest.txt`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jm_core::data::{CsvSchema, Term};
use jm_core::model::{Approach, Delta0Support, ModelSpec, ReFamily};
use jm_core::sampler::NutsConfig;
use jm_core::simulate::{DofProfile, ObsSchedule, TruthConfig};

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                );
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn set_if_some<T: ToString>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .with_context(|| format!("missing required setting `{key}`"))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| anyhow::anyhow!("setting `{key}`: cannot parse `{raw}`")),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    /// Serialize, sorted by key, skipping volatile `result.*` entries when
    /// `config_only` is set.
    pub fn render(&self, config_only: bool) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            if config_only && k.starts_with("result.") {
                continue;
            }
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render(false))
            .with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn schema(&self) -> CsvSchema {
        let mut s = CsvSchema::default();
        if let Some(v) = self.get("data.col.id") {
            s.id = v.to_string();
        }
        if let Some(v) = self.get("data.col.time") {
            s.time = v.to_string();
        }
        if let Some(v) = self.get("data.col.y") {
            s.y = v.to_string();
        }
        if let Some(v) = self.get("data.col.stime") {
            s.stime = v.to_string();
        }
        if let Some(v) = self.get("data.col.event") {
            s.event = v.to_string();
        }
        s
    }

    pub fn formulas(&self) -> (Vec<Term>, Vec<Term>, Vec<Term>) {
        let parse = |key: &str, default: &str| {
            Term::parse_list(self.get(key).unwrap_or(default))
        };
        (
            parse("model.formula", "1, t"),
            parse("model.re_formula", "1, t"),
            parse("model.surv_formula", "X"),
        )
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let approach = Approach::parse(self.get("model.approach").unwrap_or("gauss"))
            .map_err(anyhow::Error::from)?;
        let mut spec = ModelSpec::new(approach);
        spec.knot_count = self.parse_or("model.knots", spec.knot_count)?;
        spec.quad_order = self.parse_or("model.quad_order", spec.quad_order)?;
        if let Some(v) = self.get("model.re_family") {
            spec.re_family = ReFamily::parse(v).map_err(anyhow::Error::from)?;
        }
        if let Some(v) = self.get("model.delta0_support") {
            spec.delta0_support = Delta0Support::parse(v).map_err(anyhow::Error::from)?;
        }
        spec.prior.intercept_scale =
            self.parse_or("prior.intercept_scale", spec.prior.intercept_scale)?;
        spec.prior.coef_scale = self.parse_or("prior.coef_scale", spec.prior.coef_scale)?;
        spec.prior.scale_scale = self.parse_or("prior.scale_scale", spec.prior.scale_scale)?;
        spec.prior.lkj_shape = self.parse_or("prior.lkj_shape", spec.prior.lkj_shape)?;
        spec.prior.dof_lower = self.parse_or("prior.dof_lower", spec.prior.dof_lower)?;
        spec.prior.dof_upper = self.parse_or("prior.dof_upper", spec.prior.dof_upper)?;
        spec.validate().map_err(anyhow::Error::from)?;
        Ok(spec)
    }

    pub fn write_model_spec(&mut self, spec: &ModelSpec) {
        self.set("model.approach", spec.approach.as_str());
        self.set("model.knots", spec.knot_count);
        self.set("model.quad_order", spec.quad_order);
        self.set("model.re_family", spec.re_family.as_str());
        self.set("model.delta0_support", spec.delta0_support.as_str());
        self.set("prior.intercept_scale", spec.prior.intercept_scale);
        self.set("prior.coef_scale", spec.prior.coef_scale);
        self.set("prior.scale_scale", spec.prior.scale_scale);
        self.set("prior.lkj_shape", spec.prior.lkj_shape);
        self.set("prior.dof_lower", spec.prior.dof_lower);
        self.set("prior.dof_upper", spec.prior.dof_upper);
    }

    pub fn nuts(&self) -> Result<NutsConfig> {
        let iters = self.parse_or("nuts.iters", 2000usize)?;
        let mut nuts = NutsConfig::new(iters, self.parse_or("nuts.seed", 1u64)?);
        nuts.chains = self.parse_or("nuts.chains", nuts.chains)?;
        nuts.warmup = self.parse_or("nuts.warmup", iters / 2)?;
        nuts.target_accept = self.parse_or("nuts.target_accept", nuts.target_accept)?;
        nuts.max_treedepth = self.parse_or("nuts.max_treedepth", nuts.max_treedepth)?;
        nuts.init_radius = self.parse_or("nuts.init_radius", nuts.init_radius)?;
        Ok(nuts)
    }

    pub fn write_nuts(&mut self, nuts: &NutsConfig) {
        self.set("nuts.chains", nuts.chains);
        self.set("nuts.iters", nuts.iters);
        self.set("nuts.warmup", nuts.warmup);
        self.set("nuts.seed", nuts.seed);
        self.set("nuts.target_accept", nuts.target_accept);
        self.set("nuts.max_treedepth", nuts.max_treedepth);
        self.set("nuts.init_radius", nuts.init_radius);
    }

    pub fn truth(&self) -> Result<TruthConfig> {
        let mut truth = TruthConfig::default();
        truth.alpha[0] = self.parse_or("truth.alpha1", truth.alpha[0])?;
        truth.alpha[1] = self.parse_or("truth.alpha2", truth.alpha[1])?;
        truth.sigma_mat[0] = self.parse_or("truth.sigma11", truth.sigma_mat[0])?;
        let s21 = self.parse_or("truth.sigma21", truth.sigma_mat[1])?;
        truth.sigma_mat[1] = s21;
        truth.sigma_mat[2] = s21;
        truth.sigma_mat[3] = self.parse_or("truth.sigma22", truth.sigma_mat[3])?;
        truth.phi = match self.get("truth.phi") {
            None => truth.phi,
            Some("gaussian") | Some("none") => None,
            Some(raw) => Some(
                raw.parse()
                    .map_err(|_| anyhow::anyhow!("truth.phi: cannot parse `{raw}`"))?,
            ),
        };
        truth.sigma2 = self.parse_or("truth.sigma2", truth.sigma2)?;
        truth.lambda = self.parse_or("truth.lambda", truth.lambda)?;
        truth.nu = self.parse_or("truth.nu", truth.nu)?;
        truth.omega = self.parse_or("truth.omega", truth.omega)?;
        truth.eta = self.parse_or("truth.eta", truth.eta)?;
        truth.n = self.parse_or("truth.n", truth.n)?;
        truth.obs_rate = self.parse_or("truth.obs_rate", truth.obs_rate)?;
        truth.truncation = self.parse_or("truth.truncation", truth.truncation)?;
        truth.seed = self.parse_or("truth.seed", truth.seed)?;
        truth.obs_schedule = match self.get("truth.obs_schedule").unwrap_or("poisson") {
            "poisson" => ObsSchedule::PoissonUniform,
            "grid" => ObsSchedule::Grid,
            other => bail!("truth.obs_schedule: unknown scheme `{other}` (poisson, grid)"),
        };
        truth.dof_profile = match self.get("truth.dof_profile").unwrap_or("smooth") {
            "smooth" => DofProfile::smooth_default(),
            "gaussian" => DofProfile::Gaussian,
            other => {
                if let Some(v) = other.strip_prefix("constant:") {
                    DofProfile::Constant {
                        value: v
                            .parse()
                            .map_err(|_| anyhow::anyhow!("dof_profile constant: `{v}`"))?,
                    }
                } else if let Some(rest) = other.strip_prefix("loglink:") {
                    let (d0, betas) = rest
                        .split_once(':')
                        .context("loglink profile is loglink:<delta0>:<b1,b2,...>")?;
                    DofProfile::LogLink {
                        delta0: d0.parse()?,
                        beta: betas
                            .split(',')
                            .map(|b| b.trim().parse())
                            .collect::<std::result::Result<_, _>>()?,
                    }
                } else {
                    bail!("truth.dof_profile: unknown profile `{other}`")
                }
            }
        };
        truth.validate().map_err(anyhow::Error::from)?;
        Ok(truth)
    }

    pub fn write_truth(&mut self, truth: &TruthConfig) {
        self.set("truth.alpha1", truth.alpha[0]);
        self.set("truth.alpha2", truth.alpha[1]);
        self.set("truth.sigma11", truth.sigma_mat[0]);
        self.set("truth.sigma21", truth.sigma_mat[1]);
        self.set("truth.sigma22", truth.sigma_mat[3]);
        self.set(
            "truth.phi",
            truth.phi.map_or("gaussian".to_string(), |p| p.to_string()),
        );
        self.set("truth.sigma2", truth.sigma2);
        self.set("truth.lambda", truth.lambda);
        self.set("truth.nu", truth.nu);
        self.set("truth.omega", truth.omega);
        self.set("truth.eta", truth.eta);
        self.set("truth.n", truth.n);
        self.set("truth.obs_rate", truth.obs_rate);
        self.set("truth.truncation", truth.truncation);
        self.set("truth.seed", truth.seed);
        self.set(
            "truth.obs_schedule",
            match truth.obs_schedule {
                ObsSchedule::PoissonUniform => "poisson",
                ObsSchedule::Grid => "grid",
            },
        );
        self.set(
            "truth.dof_profile",
            match &truth.dof_profile {
                DofProfile::Gaussian => "gaussian".to_string(),
                DofProfile::Smooth { .. } => "smooth".to_string(),
                DofProfile::Constant { value } => format!("constant:{value}"),
                DofProfile::LogLink { delta0, beta } => {
                    let betas: Vec<String> = beta.iter().map(|b| b.to_string()).collect();
                    format!("loglink:{delta0}:{}", betas.join(","))
                }
            },
        );
    }

    /// Worker threads: flag/config, then JM_THREADS, then the chain count.
    pub fn threads(&self, default: usize) -> Result<usize> {
        if let Some(v) = self.get("threads") {
            return v
                .parse()
                .map_err(|_| anyhow::anyhow!("threads: cannot parse `{v}`"));
        }
        if let Ok(v) = std::env::var("JM_THREADS") {
            return v
                .parse()
                .map_err(|_| anyhow::anyhow!("JM_THREADS: cannot parse `{v}`"));
        }
        Ok(default)
    }
}
