//! Data generation under the time-varying-dof joint model and the
//! multi-replicate recovery study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};

use crate::data::{Dataset, Term};
use crate::error::{Error, Result};
use crate::math::{cholesky, quantile, GaussLegendre};
use crate::model::{cum_hazard_weibull_cv, Approach, ModelContext, ModelSpec};
use crate::sampler::{self, NutsConfig};
use crate::splines::SplineBasis;

/// Shape of the generating error degrees of freedom over follow-up time.
#[derive(Debug, Clone, PartialEq)]
pub enum DofProfile {
    /// No error mixing at all (V = 1, the Gaussian limit).
    Gaussian,
    Constant { value: f64 },
    /// base + amplitude * (1 + tanh(rate (t - midpoint))) / 2 — heavy tails
    /// early, approaching lighter tails late. The shipped default.
    Smooth {
        base: f64,
        amplitude: f64,
        rate: f64,
        midpoint: f64,
    },
    /// exp(delta0 + a(t)'beta) with a natural cubic spline on uniform knots
    /// over the observation window (the same link the `a4` model fits).
    LogLink { delta0: f64, beta: Vec<f64> },
}

impl DofProfile {
    pub fn smooth_default() -> DofProfile {
        DofProfile::Smooth {
            base: 2.5,
            amplitude: 2.5,
            rate: 2.0,
            midpoint: 2.5,
        }
    }

    /// Degrees of freedom at `t`; None means no mixing (Gaussian errors).
    pub fn dof(&self, t: f64, link_basis: Option<&SplineBasis>) -> Option<f64> {
        match self {
            DofProfile::Gaussian => None,
            DofProfile::Constant { value } => Some(*value),
            DofProfile::Smooth {
                base,
                amplitude,
                rate,
                midpoint,
            } => Some(base + amplitude * (1.0 + (rate * (t - midpoint)).tanh()) / 2.0),
            DofProfile::LogLink { delta0, beta } => {
                let basis = link_basis.expect("log-link profile needs its basis");
                let row = basis.evaluate(t);
                let lin: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
                Some((delta0 + lin).exp())
            }
        }
    }
}

/// Observation-time scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsSchedule {
    /// Poisson(rate) count (at least one), times uniform on the window.
    PoissonUniform,
    /// `rate` equally spaced times across the window.
    Grid,
}

/// Generating truth for the intercept-and-slope joint model.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthConfig {
    pub alpha: [f64; 2],
    /// Random-effect scale matrix, row-major 2x2.
    pub sigma_mat: [f64; 4],
    /// Random-effect mixing dof; None simulates Gaussian random effects.
    pub phi: Option<f64>,
    /// Error variance sigma^2.
    pub sigma2: f64,
    pub lambda: f64,
    pub nu: f64,
    pub omega: f64,
    pub eta: f64,
    pub n: usize,
    /// Mean observations per subject over the window.
    pub obs_rate: f64,
    /// Administrative censoring time (study end).
    pub truncation: f64,
    pub dof_profile: DofProfile,
    pub obs_schedule: ObsSchedule,
    pub seed: u64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            alpha: [1.0, 0.4],
            sigma_mat: [0.60, 0.25, 0.25, 0.30],
            phi: Some(3.0),
            sigma2: 0.25,
            lambda: 0.04,
            nu: 1.2,
            omega: 0.5,
            eta: 0.3,
            n: 250,
            obs_rate: 20.0,
            truncation: 5.0,
            dof_profile: DofProfile::smooth_default(),
            obs_schedule: ObsSchedule::PoissonUniform,
            seed: 1,
        }
    }
}

impl TruthConfig {
    pub fn validate(&self) -> Result<()> {
        let det = self.sigma_mat[0] * self.sigma_mat[3] - self.sigma_mat[1] * self.sigma_mat[2];
        if !(self.sigma_mat[0] > 0.0 && det > 0.0) {
            return Err(Error::Config("Sigma must be positive definite".into()));
        }
        for (name, v) in [
            ("sigma2", self.sigma2),
            ("lambda", self.lambda),
            ("nu", self.nu),
            ("truncation", self.truncation),
            ("obs_rate", self.obs_rate),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(phi) = self.phi {
            if !(phi > 2.0) {
                return Err(Error::Config(format!(
                    "phi must exceed 2 for a finite RE variance, got {phi}"
                )));
            }
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        Ok(())
    }

    fn link_basis(&self) -> Option<SplineBasis> {
        if let DofProfile::LogLink { beta, .. } = &self.dof_profile {
            let k = beta.len().saturating_sub(1);
            let knots: Vec<f64> = (1..=k)
                .map(|j| self.truncation * j as f64 / (k + 1) as f64)
                .collect();
            Some(
                SplineBasis::from_knots(knots, [0.0, self.truncation])
                    .expect("uniform knots are valid"),
            )
        } else {
            None
        }
    }
}

/// Everything drawn for one subject, including the latents (useful for
/// oracle tests and debugging).
#[derive(Debug, Clone)]
pub struct SubjectDraw {
    pub b: [f64; 2],
    pub v_b: f64,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub v_z: Vec<f64>,
    pub x: f64,
    /// Uncensored event time, if the bracket found one.
    pub event_time: Option<f64>,
    pub surv_time: f64,
    pub event: bool,
}

/// Inverse-gamma draw with equal shape and scale a/2 (so `sqrt(V) Z` is
/// Student-t with `a` degrees of freedom).
pub fn draw_mixing<R: Rng>(rng: &mut R, a: f64) -> f64 {
    let g = Gamma::new(a / 2.0, 2.0 / a).expect("valid shape/scale");
    1.0 / g.sample(rng)
}

struct UnitQuad {
    t: Vec<f64>,
    ln_t: Vec<f64>,
    w: Vec<f64>,
}

impl UnitQuad {
    fn new(order: usize) -> Self {
        let (t, w) = GaussLegendre::new(order).unit();
        let ln_t = t.iter().map(|v| v.ln()).collect();
        UnitQuad { t, ln_t, w }
    }
}

/// Cumulative hazard of the generating model at time `t` for one subject.
fn true_cum_hazard(truth: &TruthConfig, b: &[f64; 2], x: f64, t: f64, gl: &UnitQuad) -> f64 {
    let g_at = |u: f64| {
        truth.omega * x + truth.eta * (truth.alpha[0] + b[0] + (truth.alpha[1] + b[1]) * u)
    };
    cum_hazard_weibull_cv(
        truth.lambda.ln(),
        truth.nu.ln(),
        truth.nu,
        t.ln(),
        g_at(0.0),
        &gl.ln_t,
        &gl.w,
        |k| g_at(t * gl.t[k] * gl.t[k] * gl.t[k]),
    )
}

/// Solve H(T) = e by bisection on [0, 10^4]; None when even the upper
/// bracket carries too little hazard (treated as censored by the caller).
fn invert_cum_hazard(
    truth: &TruthConfig,
    b: &[f64; 2],
    x: f64,
    e: f64,
    gl: &UnitQuad,
) -> Option<f64> {
    const UPPER: f64 = 1e4;
    if true_cum_hazard(truth, b, x, UPPER, gl) < e {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, UPPER);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if true_cum_hazard(truth, b, x, mid, gl) < e {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

fn draw_subject<R: Rng>(
    truth: &TruthConfig,
    rng: &mut R,
    gl: &UnitQuad,
    chol: &[f64],
    link_basis: Option<&SplineBasis>,
) -> SubjectDraw {
    let v_b = truth.phi.map_or(1.0, |phi| draw_mixing(rng, phi));
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let sv = v_b.sqrt();
    let b = [sv * chol[0] * z0, sv * (chol[2] * z0 + chol[3] * z1)];
    let x = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };

    let mut times: Vec<f64> = match truth.obs_schedule {
        ObsSchedule::PoissonUniform => {
            let count = Poisson::new(truth.obs_rate)
                .expect("positive rate")
                .sample(rng) as usize;
            (0..count.max(1))
                .map(|_| rng.random::<f64>() * truth.truncation)
                .collect()
        }
        ObsSchedule::Grid => {
            let count = (truth.obs_rate.round() as usize).max(1);
            (0..count)
                .map(|j| truth.truncation * j as f64 / (count.max(2) - 1) as f64)
                .collect()
        }
    };
    times.sort_by(f64::total_cmp);

    let sigma = truth.sigma2.sqrt();
    let mut y = Vec::with_capacity(times.len());
    let mut v_z = Vec::with_capacity(times.len());
    for &t in &times {
        let v = truth
            .dof_profile
            .dof(t, link_basis)
            .map_or(1.0, |d| draw_mixing(rng, d));
        let z: f64 = rng.sample(StandardNormal);
        let noise = sigma * v.sqrt() * z;
        y.push(truth.alpha[0] + truth.alpha[1] * t + b[0] + b[1] * t + noise);
        v_z.push(v);
    }

    let e: f64 = Exp::new(1.0).unwrap().sample(rng);
    let event_time = invert_cum_hazard(truth, &b, x, e, gl);
    let (surv_time, event) = match event_time {
        Some(t) if t <= truth.truncation => (t, true),
        _ => (truth.truncation, false),
    };

    SubjectDraw {
        b,
        v_b,
        times,
        y,
        v_z,
        x,
        event_time,
        surv_time,
        event,
    }
}

/// One unconditioned subject from the generating model, with longitudinal
/// rows after the survival time discarded. The returned draw can carry zero
/// retained rows; dataset assembly redraws such subjects to keep the dataset
/// invariant (see [`simulate_dataset`]).
pub fn simulate_subject<R: Rng>(truth: &TruthConfig, rng: &mut R) -> SubjectDraw {
    let gl = UnitQuad::new(15);
    let chol = cholesky(&truth.sigma_mat, 2).expect("validated Sigma");
    let link_basis = truth.link_basis();
    let mut draw = draw_subject(truth, rng, &gl, &chol, link_basis.as_ref());
    retain_observed_rows(&mut draw);
    draw
}

fn retain_observed_rows(draw: &mut SubjectDraw) {
    let keep: Vec<usize> = (0..draw.times.len())
        .filter(|&j| draw.times[j] <= draw.surv_time)
        .collect();
    draw.times = keep.iter().map(|&j| draw.times[j]).collect();
    draw.y = keep.iter().map(|&j| draw.y[j]).collect();
    draw.v_z = keep.iter().map(|&j| draw.v_z[j]).collect();
}

fn subject_with_retention<R: Rng>(
    truth: &TruthConfig,
    rng: &mut R,
    gl: &UnitQuad,
    chol: &[f64],
    link_basis: Option<&SplineBasis>,
) -> Result<SubjectDraw> {
    for _ in 0..1000 {
        let mut draw = draw_subject(truth, rng, gl, chol, link_basis);
        retain_observed_rows(&mut draw);
        if draw.times.is_empty() {
            continue;
        }
        return Ok(draw);
    }
    Err(Error::Config(
        "1000 consecutive subjects had no observation time before their survival time;          the observation window barely overlaps survival under this truth"
            .into(),
    ))
}

/// Simulate a full dataset (designs built: intercept+slope, survival X).
pub fn simulate_dataset(truth: &TruthConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    rng.set_stream(u64::MAX); // distinct from sampler chain streams
    simulate_dataset_with_rng(truth, &mut rng)
}

pub fn simulate_dataset_with_rng<R: Rng>(truth: &TruthConfig, rng: &mut R) -> Result<Dataset> {
    truth.validate()?;
    let gl = UnitQuad::new(15);
    let chol = cholesky(&truth.sigma_mat, 2)
        .ok_or_else(|| Error::Config("Sigma must be positive definite".into()))?;
    let link_basis = truth.link_basis();

    let mut ids = Vec::with_capacity(truth.n);
    let mut times = Vec::new();
    let mut y = Vec::new();
    let mut subject_of = Vec::new();
    let mut surv_time = Vec::with_capacity(truth.n);
    let mut event = Vec::with_capacity(truth.n);
    let mut x = Vec::with_capacity(truth.n);
    for i in 0..truth.n {
        let draw = subject_with_retention(truth, rng, &gl, &chol, link_basis.as_ref())?;
        ids.push(format!("sim{:04}", i + 1));
        for (t, v) in draw.times.iter().zip(&draw.y) {
            times.push(*t);
            y.push(*v);
            subject_of.push(i);
        }
        surv_time.push(draw.surv_time);
        event.push(draw.event);
        x.push(draw.x);
    }
    let mut ds = Dataset::from_parts(
        ids,
        times,
        y,
        subject_of,
        surv_time,
        event,
        vec![],
        vec![("X".into(), x)],
    );
    ds.build_designs(
        &[Term::Intercept, Term::Time],
        &[Term::Intercept, Term::Time],
        &[Term::Covariate("X".into())],
    )?;
    Ok(ds)
}

/// Stable per-purpose seed derivation (splitmix64 of seed xor index).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ (index.wrapping_add(1)).wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Posterior summary of the hyperparameters of one replicate fit.
#[derive(Debug, Clone)]
pub struct ReplicateSummary {
    /// (name, posterior mean, 2.5%, 97.5%)
    pub params: Vec<(String, f64, f64, f64)>,
}

/// Simulate replicate `rep` and fit `spec` to it.
pub fn fit_replicate(
    truth: &TruthConfig,
    spec: &ModelSpec,
    nuts: &NutsConfig,
    rep: u64,
    threads: usize,
) -> Result<ReplicateSummary> {
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(truth.seed, rep));
    data_rng.set_stream(u64::MAX);
    let ds = simulate_dataset_with_rng(truth, &mut data_rng)?;
    let ctx = ModelContext::new(ds, spec.clone())?;
    let mut config = nuts.clone();
    config.seed = derive_seed(nuts.seed, rep);
    let draws = sampler::run(&ctx, &config, threads)?;
    let hyper = ctx.layout().constrained_hyper_dim();
    let mut params = Vec::with_capacity(hyper);
    for idx in 0..hyper {
        let pooled = draws.pooled(idx);
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let lo = quantile(&pooled, 0.025);
        let hi = quantile(&pooled, 0.975);
        params.push((draws.names[idx].clone(), mean, lo, hi));
    }
    Ok(ReplicateSummary { params })
}

/// Generating truth for a reported parameter under a given fitted spec, if
/// the study computes coverage for it.
///
/// The Gaussian fit estimates the marginal random-effect covariance, so its
/// Sigma entries are compared against the mixing-inflated truth
/// `Sigma * phi/(phi-2)`; its error variance absorbs a time-varying inflation
/// and gets no single truth. Dof parameters with time-varying or unknown
/// truths (gamma, delta, delta0, beta) get none either.
pub fn truth_for(truth: &TruthConfig, spec: &ModelSpec, name: &str) -> Option<f64> {
    let gauss = spec.approach == Approach::Gaussian;
    let inflation = truth.phi.map_or(1.0, |phi| phi / (phi - 2.0));
    match name {
        "alpha.1" => Some(truth.alpha[0]),
        "alpha.2" => Some(truth.alpha[1]),
        "omega.1" => Some(truth.omega),
        "eta" => Some(truth.eta),
        "lambda" => Some(truth.lambda),
        "nu" => Some(truth.nu),
        "sigma2" => {
            if gauss {
                None
            } else {
                Some(truth.sigma2)
            }
        }
        "Sigma.1.1" => Some(truth.sigma_mat[0] * if gauss { inflation } else { 1.0 }),
        "Sigma.2.1" => Some(truth.sigma_mat[1] * if gauss { inflation } else { 1.0 }),
        "Sigma.2.2" => Some(truth.sigma_mat[3] * if gauss { inflation } else { 1.0 }),
        "phi" => truth.phi,
        _ => None,
    }
}

/// One aggregated cell of the study table.
#[derive(Debug, Clone)]
pub struct StudyCell {
    pub mean_of_means: f64,
    pub mean_ci_width: f64,
    /// Fraction of used replicates whose CI covered the truth.
    pub coverage: Option<f64>,
    pub covered: usize,
    pub used: usize,
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub param: String,
    /// Raw generating truth (before any per-spec adjustment).
    pub truth: Option<f64>,
    pub cells: Vec<Option<StudyCell>>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub specs: Vec<String>,
    pub rows: Vec<StudyRow>,
    pub failures: Vec<usize>,
    pub replicates: usize,
}

/// Aggregate replicate summaries for one spec into per-parameter cells.
pub fn aggregate_spec(
    truth: &TruthConfig,
    spec: &ModelSpec,
    summaries: &[ReplicateSummary],
) -> Vec<(String, Option<StudyCell>)> {
    let Some(first) = summaries.first() else {
        return Vec::new();
    };
    first
        .params
        .iter()
        .map(|(name, _, _, _)| {
            let mut mean_acc = 0.0;
            let mut width_acc = 0.0;
            let mut covered = 0usize;
            let truth_value = truth_for(truth, spec, name);
            for s in summaries {
                let (_, mean, lo, hi) = s
                    .params
                    .iter()
                    .find(|(n, _, _, _)| n == name)
                    .expect("same layout across replicates");
                mean_acc += mean;
                width_acc += hi - lo;
                if let Some(t) = truth_value {
                    if *lo <= t && t <= *hi {
                        covered += 1;
                    }
                }
            }
            let used = summaries.len();
            let cell = StudyCell {
                mean_of_means: mean_acc / used as f64,
                mean_ci_width: width_acc / used as f64,
                coverage: truth_value.map(|_| covered as f64 / used as f64),
                covered,
                used,
            };
            (name.clone(), Some(cell))
        })
        .collect()
}

/// Run the full study: `replicates` independent datasets per spec, each fit
/// with NUTS, aggregated into a Table-style report. Replicates run in
/// parallel; failures are recorded and excluded, but more than 20% failures
/// for a spec aborts it.
pub fn run_study(
    truth: &TruthConfig,
    specs: &[ModelSpec],
    replicates: usize,
    nuts: &NutsConfig,
    threads: usize,
) -> Result<StudyReport> {
    if replicates == 0 {
        return Err(Error::Config("study needs at least one replicate".into()));
    }
    truth.validate()?;
    let mut per_spec: Vec<Vec<(String, Option<StudyCell>)>> = Vec::new();
    let mut failures = Vec::new();
    for spec in specs {
        spec.validate()?;
        let results: Vec<Result<ReplicateSummary>> =
            parallel_replicates(replicates, threads, |rep| {
                fit_replicate(truth, spec, nuts, rep as u64, 1)
            });
        let mut ok = Vec::new();
        let mut failed = 0usize;
        for r in results {
            match r {
                Ok(s) => ok.push(s),
                Err(e) => {
                    log::warn!("replicate failed for {}: {e}", spec.approach);
                    failed += 1;
                }
            }
        }
        if failed * 5 > replicates {
            return Err(Error::Study {
                spec: spec.approach.to_string(),
                failed,
                total: replicates,
            });
        }
        failures.push(failed);
        per_spec.push(aggregate_spec(truth, spec, &ok));
    }
    Ok(assemble_report(truth, specs, per_spec, failures, replicates))
}

/// Assemble the report table from per-spec aggregated cells.
pub fn assemble_report(
    truth: &TruthConfig,
    specs: &[ModelSpec],
    per_spec: Vec<Vec<(String, Option<StudyCell>)>>,
    failures: Vec<usize>,
    replicates: usize,
) -> StudyReport {
    // Union of parameter names, in first-seen order.
    let mut names: Vec<String> = Vec::new();
    for cells in &per_spec {
        for (name, _) in cells {
            if !names.contains(name) {
                names.push(name.clone());
            }
        }
    }
    let rows = names
        .into_iter()
        .map(|param| {
            let cells = per_spec
                .iter()
                .map(|spec_cells| {
                    spec_cells
                        .iter()
                        .find(|(n, _)| *n == param)
                        .and_then(|(_, c)| c.clone())
                })
                .collect();
            // the plain truth column reports the unadjusted generating value
            let truth_value = specs
                .iter()
                .filter(|s| s.approach != Approach::Gaussian)
                .map(|s| truth_for(truth, s, &param))
                .find(|t| t.is_some())
                .flatten()
                .or_else(|| specs.first().and_then(|s| truth_for(truth, s, &param)));
            StudyRow {
                param,
                truth: truth_value,
                cells,
            }
        })
        .collect();
    StudyReport {
        specs: specs.iter().map(|s| s.approach.to_string()).collect(),
        rows,
        failures,
        replicates,
    }
}

fn parallel_replicates<F>(
    replicates: usize,
    threads: usize,
    job: F,
) -> Vec<Result<ReplicateSummary>>
where
    F: Fn(usize) -> Result<ReplicateSummary> + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let workers = threads.max(1).min(replicates);
    let out: Mutex<Vec<Option<Result<ReplicateSummary>>>> =
        Mutex::new((0..replicates).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let rep = next.fetch_add(1, Ordering::SeqCst);
                if rep >= replicates {
                    break;
                }
                let r = job(rep);
                out.lock().unwrap()[rep] = Some(r);
            });
        }
    });
    out.into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("replicate completed"))
        .collect()
}

impl StudyReport {
    /// Table-style CSV: one row per parameter, spec-wise mean / mean CI
    /// width / coverage columns. `truth_gauss` lists the adjusted truth the
    /// Gaussian fit's coverage was computed against, when it differs.
    pub fn to_csv(&self, truth: &TruthConfig) -> String {
        let mut header = vec!["param".to_string(), "truth".into()];
        for spec in &self.specs {
            header.push(format!("{spec}_mean"));
            header.push(format!("{spec}_ci_width"));
            header.push(format!("{spec}_coverage"));
        }
        header.push("truth_gauss".into());
        let mut out = header.join(",") + "\n";
        let gauss_spec = ModelSpec::new(Approach::Gaussian);
        for row in &self.rows {
            let mut fields = vec![
                row.param.clone(),
                row.truth.map_or(String::new(), |t| format!("{t}")),
            ];
            for cell in &row.cells {
                match cell {
                    Some(c) => {
                        fields.push(format!("{:.6}", c.mean_of_means));
                        fields.push(format!("{:.6}", c.mean_ci_width));
                        fields
                            .push(c.coverage.map_or(String::new(), |cov| format!("{cov:.4}")));
                    }
                    None => fields.extend([String::new(), String::new(), String::new()]),
                }
            }
            let tg = truth_for(truth, &gauss_spec, &row.param);
            fields.push(match (tg, row.truth) {
                (Some(g), Some(t)) if (g - t).abs() > 1e-12 => format!("{g}"),
                _ => String::new(),
            });
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}
