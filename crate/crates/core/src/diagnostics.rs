//! Posterior summaries, convergence diagnostics, outlier scores, and the
//! exploratory binned t-fits on standardized residuals.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{self, ln_gamma, quantile_sorted};
use crate::model::{Approach, ModelSpec};
use crate::sampler::PosteriorDraws;

/// Linear-interpolation empirical quantiles over the pooled post-warm-up
/// draws of one parameter.
pub fn percentiles(draws: &PosteriorDraws, param: &str, probs: &[f64]) -> Result<Vec<f64>> {
    let idx = draws.param_index(param)?;
    let mut pooled = draws.pooled(idx);
    if pooled.is_empty() {
        return Err(Error::Usage("no draws stored".into()));
    }
    pooled.sort_by(f64::total_cmp);
    Ok(probs.iter().map(|&p| quantile_sorted(&pooled, p)).collect())
}

/// Split-chain potential scale reduction.
///
/// Each chain is halved; with W the mean within-half-chain variance and B
/// the between-half-chain variance, the statistic is
/// sqrt((W (n-1)/n + B/n) / W). Zero within-chain variance everywhere is
/// degenerate and reported as +inf.
pub fn split_rhat_from_chains(chains: &[Vec<f64>]) -> f64 {
    let halves = split_halves(chains);
    if halves.is_empty() {
        return f64::NAN;
    }
    let n = halves[0].len() as f64;
    let m = halves.len() as f64;
    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / h.len() as f64)
        .collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b = n * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1.0);
    if w <= 0.0 {
        log::warn!("split R-hat degenerate: zero within-chain variance");
        return f64::INFINITY;
    }
    ((w * (n - 1.0) / n + b / n) / w).sqrt()
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut halves = Vec::with_capacity(chains.len() * 2);
    let shortest = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = shortest / 2;
    if half < 2 {
        return Vec::new();
    }
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[shortest - half..shortest]);
    }
    halves
}

pub fn split_rhat(draws: &PosteriorDraws, param: &str) -> Result<f64> {
    let idx = draws.param_index(param)?;
    if draws.chains.len() < 2 {
        return Err(Error::Usage("split R-hat needs at least two chains".into()));
    }
    Ok(split_rhat_from_chains(&draws.per_chain(idx)))
}

/// Effective sample size with Geyer initial-monotone truncation over the
/// combined split-chain autocorrelations.
pub fn ess_from_chains(chains: &[Vec<f64>]) -> f64 {
    let halves = split_halves(chains);
    if halves.is_empty() {
        return f64::NAN;
    }
    let n = halves[0].len();
    let m = halves.len();
    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / n as f64)
        .collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n as f64 - 1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / m as f64;
    if w <= 0.0 {
        log::warn!("ESS degenerate: constant chains");
        return 0.0;
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n as f64 * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>()
        / (m as f64 - 1.0);
    let var_plus = w * (n as f64 - 1.0) / n as f64 + b / n as f64;

    let acov_at = |h: &&[f64], mu: f64, lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += (h[i] - mu) * (h[i + lag] - mu);
        }
        acc / n as f64
    };
    let mean_acov = |lag: usize| -> f64 {
        halves
            .iter()
            .zip(&means)
            .map(|(h, mu)| acov_at(h, *mu, lag))
            .sum::<f64>()
            / m as f64
    };

    // rho_t = 1 - (W - mean acov_t) / var_plus, summed in Geyer pairs while
    // the pair sums stay positive, enforcing monotone non-increase.
    let mut tau = 1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 1;
    while lag + 1 < n {
        let rho_a = 1.0 - (w - mean_acov(lag)) / var_plus;
        let rho_b = 1.0 - (w - mean_acov(lag + 1)) / var_plus;
        let mut pair = rho_a + rho_b;
        if !pair.is_finite() || pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        lag += 2;
    }
    (m * n) as f64 / tau
}

pub fn ess(draws: &PosteriorDraws, param: &str) -> Result<f64> {
    let idx = draws.param_index(param)?;
    if draws.chains.len() < 2 {
        return Err(Error::Usage("ESS needs at least two chains".into()));
    }
    Ok(ess_from_chains(&draws.per_chain(idx)))
}

/// Summary row of the fit-output CSV.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub name: String,
    pub p2_5: f64,
    pub p50: f64,
    pub p97_5: f64,
    pub rhat: f64,
    pub ess: f64,
}

/// Percentiles, split R-hat and ESS for the named parameters.
pub fn summarize(draws: &PosteriorDraws, names: &[String]) -> Result<Vec<SummaryRow>> {
    names
        .iter()
        .map(|name| {
            let pct = percentiles(draws, name, &[0.025, 0.5, 0.975])?;
            let idx = draws.param_index(name)?;
            let per_chain = draws.per_chain(idx);
            Ok(SummaryRow {
                name: name.clone(),
                p2_5: pct[0],
                p50: pct[1],
                p97_5: pct[2],
                rhat: split_rhat_from_chains(&per_chain),
                ess: ess_from_chains(&per_chain),
            })
        })
        .collect()
}

/// Maximum-likelihood univariate Student-t fit.
#[derive(Debug, Clone)]
pub struct TFit {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
    pub converged: bool,
    pub loglik: f64,
}

impl TFit {
    /// The search hit its upper dof bound: effectively Gaussian.
    pub fn effectively_normal(&self) -> bool {
        self.nu >= 450.0
    }
}

pub fn t_loglik(sample: &[f64], mu: f64, sigma: f64, nu: f64) -> f64 {
    let konst = ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - sigma.ln();
    let mut acc = 0.0;
    for &x in sample {
        let z = (x - mu) / sigma;
        acc += konst - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p();
    }
    acc
}

/// EM for (mu, sigma) at fixed dof; returns the profile log likelihood.
fn profile_at_nu(sample: &[f64], nu: f64, start: (f64, f64)) -> (f64, f64, f64) {
    let n = sample.len() as f64;
    let (mut mu, mut sigma) = start;
    let mut last = f64::NEG_INFINITY;
    for _ in 0..500 {
        let mut wsum = 0.0;
        let mut wx = 0.0;
        for &x in sample {
            let z = (x - mu) / sigma;
            let w = (nu + 1.0) / (nu + z * z);
            wsum += w;
            wx += w * x;
        }
        mu = wx / wsum;
        let mut ws2 = 0.0;
        for &x in sample {
            let z = (x - mu) / sigma;
            let w = (nu + 1.0) / (nu + z * z);
            ws2 += w * (x - mu) * (x - mu);
        }
        sigma = (ws2 / n).sqrt().max(1e-12);
        let ll = t_loglik(sample, mu, sigma, nu);
        if (ll - last).abs() < 1e-10 {
            return (mu, sigma, ll);
        }
        last = ll;
    }
    (mu, sigma, last)
}

/// Maximum-likelihood t fit: EM inner loop for location/scale, golden-section
/// outer search on log dof over [log 0.5, log 500], seeded by a coarse grid
/// scan so the bracket holds the global profile maximum.
pub fn fit_univariate_t(sample: &[f64]) -> Result<TFit> {
    if sample.len() < 10 {
        return Err(Error::Usage(format!(
            "t fit needs at least 10 points, got {}",
            sample.len()
        )));
    }
    let (mean, var) = math::mean_var(sample);
    let sd = var.sqrt().max(1e-12);
    let (lo, hi) = (0.5f64.ln(), 500f64.ln());

    let profile = |ln_nu: f64| profile_at_nu(sample, ln_nu.exp(), (mean, sd));

    // Coarse bracket.
    let grid = 24;
    let mut best_i: usize = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for i in 0..=grid {
        let ln_nu = lo + (hi - lo) * i as f64 / grid as f64;
        let (_, _, ll) = profile(ln_nu);
        if ll > best_ll {
            best_ll = ll;
            best_i = i;
        }
    }
    let mut a = lo + (hi - lo) * best_i.saturating_sub(1) as f64 / grid as f64;
    let mut b = lo + (hi - lo) * (best_i + 1).min(grid) as f64 / grid as f64;

    // Golden section on the bracket.
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = profile(c).2;
    let mut fd = profile(d).2;
    let mut iters = 0usize;
    let mut converged = false;
    let mut last_best = fc.max(fd);
    while iters < 10_000 {
        iters += 1;
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = profile(c).2;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = profile(d).2;
        }
        let best = fc.max(fd);
        if (best - last_best).abs() < 1e-10 && (b - a) < 1e-8 {
            converged = true;
            break;
        }
        last_best = best;
    }
    let ln_nu = if fc > fd { c } else { d };
    let (mu, sigma, mut loglik) = profile(ln_nu);
    let mut nu = ln_nu.exp();
    let mut out_mu = mu;
    let mut out_sigma = sigma;
    // Guard: never report an optimum below the fixed reference start.
    let ref_ll = t_loglik(sample, mean, sd, 30.0);
    if loglik < ref_ll {
        let (m2, s2, l2) = profile_at_nu(sample, 30.0, (mean, sd));
        if l2 > loglik {
            nu = 30.0;
            out_mu = m2;
            out_sigma = s2;
            loglik = l2;
            converged = false;
        }
    }
    Ok(TFit {
        mu: out_mu,
        sigma: out_sigma,
        nu,
        converged,
        loglik,
    })
}

/// Profile-likelihood interval for the dof: the range of nu whose profile
/// log likelihood stays within 2 units of the maximum.
pub fn dof_profile_interval(sample: &[f64], fit: &TFit) -> (f64, f64) {
    let (mean, var) = math::mean_var(sample);
    let sd = var.sqrt().max(1e-12);
    let target = fit.loglik - 2.0;
    let ll_at = |ln_nu: f64| profile_at_nu(sample, ln_nu.exp(), (mean, sd)).2;
    let (lo_bound, hi_bound) = (0.5f64.ln(), 500f64.ln());
    let center = fit.nu.ln();
    let mut lo = lo_bound;
    if ll_at(lo_bound) < target {
        let (mut a, mut b) = (lo_bound, center);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if ll_at(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        lo = 0.5 * (a + b);
    }
    let mut hi = hi_bound;
    if ll_at(hi_bound) < target {
        let (mut a, mut b) = (center, hi_bound);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if ll_at(mid) < target {
                b = mid;
            } else {
                a = mid;
            }
        }
        hi = 0.5 * (a + b);
    }
    (lo.exp(), hi.exp())
}

fn posterior_median(draws: &PosteriorDraws, name: &str) -> Result<f64> {
    Ok(percentiles(draws, name, &[0.5])?[0])
}

/// Standardized conditional residuals (y - x'alpha_hat - d'B_hat) / sigma_hat
/// at the posterior medians.
pub fn standardized_residuals(ds: &Dataset, draws: &PosteriorDraws) -> Result<Vec<f64>> {
    let designs = ds.designs()?;
    let alpha: Vec<f64> = (1..=designs.p)
        .map(|j| posterior_median(draws, &format!("alpha.{j}")))
        .collect::<Result<_>>()?;
    let sigma = posterior_median(draws, "sigma2")?.sqrt();
    let mut b_hat = vec![0.0; ds.n * designs.q];
    for i in 0..ds.n {
        for h in 0..designs.q {
            b_hat[i * designs.q + h] =
                posterior_median(draws, &format!("b.{}.{}", i + 1, h + 1))?;
        }
    }
    let mut out = Vec::with_capacity(ds.total_obs());
    for i in 0..ds.total_obs() {
        let subj = ds.subject_of[i];
        let mean: f64 = ds
            .x_row(i)
            .iter()
            .zip(&alpha)
            .map(|(x, a)| x * a)
            .sum::<f64>()
            + ds.d_row(i)
                .iter()
                .enumerate()
                .map(|(h, d)| d * b_hat[subj * designs.q + h])
                .sum::<f64>();
        out.push((ds.y[i] - mean) / sigma);
    }
    Ok(out)
}

/// (theoretical standard-normal quantile, observed residual quantile) pairs.
pub fn residual_qq(ds: &Dataset, draws: &PosteriorDraws) -> Result<Vec<(f64, f64)>> {
    let mut resid = standardized_residuals(ds, draws)?;
    resid.sort_by(f64::total_cmp);
    let n = resid.len();
    Ok(resid
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let p = (i as f64 + 0.5) / n as f64;
            (math::inverse_normal_cdf(p), r)
        })
        .collect())
}

/// Per-bin t fit of standardized residuals, bins cut at pooled follow-up-time
/// quantiles.
#[derive(Debug, Clone)]
pub struct BinDof {
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_mid: f64,
    pub count: usize,
    pub fit: Option<TFit>,
    pub dof_interval: Option<(f64, f64)>,
    pub degenerate: bool,
}

pub fn binned_residual_dof(ds: &Dataset, draws: &PosteriorDraws, bins: usize) -> Result<Vec<BinDof>> {
    if bins == 0 {
        return Err(Error::Usage("need at least one bin".into()));
    }
    let resid = standardized_residuals(ds, draws)?;
    let mut sorted_times = ds.times.clone();
    sorted_times.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (0..=bins)
        .map(|j| quantile_sorted(&sorted_times, j as f64 / bins as f64))
        .collect();
    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let (lo, hi) = (edges[b], edges[b + 1]);
        let in_bin: Vec<f64> = ds
            .times
            .iter()
            .zip(&resid)
            .filter(|(t, _)| **t >= lo && (**t < hi || (b + 1 == bins && **t <= hi)))
            .map(|(_, r)| *r)
            .collect();
        if in_bin.len() < 10 {
            out.push(BinDof {
                t_lo: lo,
                t_hi: hi,
                t_mid: 0.5 * (lo + hi),
                count: in_bin.len(),
                fit: None,
                dof_interval: None,
                degenerate: true,
            });
            continue;
        }
        let fit = fit_univariate_t(&in_bin)?;
        let ci = dof_profile_interval(&in_bin, &fit);
        out.push(BinDof {
            t_lo: lo,
            t_hi: hi,
            t_mid: 0.5 * (lo + hi),
            count: in_bin.len(),
            fit: Some(fit),
            dof_interval: Some(ci),
            degenerate: false,
        });
    }
    Ok(out)
}

/// Posterior summary of one mixing latent.
#[derive(Debug, Clone)]
pub struct VSummary {
    pub label: String,
    pub subject: usize,
    /// Within-subject observation index for error latents.
    pub obs: Option<usize>,
    pub mean: f64,
    pub q5: f64,
    pub q95: f64,
    pub flagged: bool,
}

fn v_summary(draws: &PosteriorDraws, name: &str, subject: usize, obs: Option<usize>, threshold: f64) -> Result<VSummary> {
    let idx = draws.param_index(name)?;
    let pooled = draws.pooled(idx);
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let q5 = math::quantile(&pooled, 0.05);
    let q95 = math::quantile(&pooled, 0.95);
    Ok(VSummary {
        label: name.to_string(),
        subject,
        obs,
        mean,
        q5,
        q95,
        flagged: q5 > threshold,
    })
}

/// Subject-level mixing summaries (b-outlier scores).
pub fn subject_scores(
    draws: &PosteriorDraws,
    ds: &Dataset,
    spec: &ModelSpec,
    threshold: f64,
) -> Result<Vec<VSummary>> {
    if !spec.t_random_effects() {
        return Err(Error::Usage(
            "subject-level outlier scores need t random effects; this fit has none".into(),
        ));
    }
    let prefix = if spec.approach == Approach::SharedMixing {
        "v"
    } else {
        "v_b"
    };
    (0..ds.n)
        .map(|i| v_summary(draws, &format!("{prefix}.{}", i + 1), i, None, threshold))
        .collect()
}

/// Per-observation mixing summaries (e-outlier scores). Only the fits with
/// one latent per observation support this: under `a1`/`a2` all errors of a
/// subject share a single variable, so an individual observation cannot be
/// singled out; the Gaussian fit has no mixing variables at all.
pub fn observation_scores(
    draws: &PosteriorDraws,
    ds: &Dataset,
    spec: &ModelSpec,
    threshold: f64,
) -> Result<Vec<VSummary>> {
    match spec.approach {
        Approach::ObservationMixing | Approach::TimeVaryingDof => {}
        Approach::Gaussian => {
            return Err(Error::Usage(
                "the gaussian fit has no mixing variables to score".into(),
            ))
        }
        Approach::SharedMixing | Approach::SubjectMixing => {
            return Err(Error::Usage(format!(
                "per-observation outlier detection is impossible under {}: every error of a \
                 subject shares one mixing variable",
                spec.approach
            )))
        }
    }
    let mut out = Vec::with_capacity(ds.total_obs());
    for i in 0..ds.n {
        for j in 1..=ds.m[i] {
            out.push(v_summary(
                draws,
                &format!("v_z.{}.{j}", i + 1),
                i,
                Some(j - 1),
                threshold,
            )?);
        }
    }
    Ok(out)
}

/// All available outlier scores for the fitted spec.
pub struct OutlierReport {
    pub subjects: Option<Vec<VSummary>>,
    pub observations: Option<Vec<VSummary>>,
}

pub fn outlier_scores(
    draws: &PosteriorDraws,
    ds: &Dataset,
    spec: &ModelSpec,
    threshold: f64,
) -> Result<OutlierReport> {
    if spec.approach == Approach::Gaussian {
        return Err(Error::Usage(
            "the gaussian fit has no mixing variables to score".into(),
        ));
    }
    let subjects = subject_scores(draws, ds, spec, threshold).ok();
    let observations = observation_scores(draws, ds, spec, threshold).ok();
    Ok(OutlierReport {
        subjects,
        observations,
    })
}
