//! No-U-Turn sampling with warm-up adaptation and multi-chain orchestration.
//!
//! Chains are mutually independent: each gets its own ChaCha stream keyed by
//! chain index, its own tape, and shares the model context read-only, so a
//! run is bit-reproducible for a given seed regardless of the thread count.

mod adapt;
mod nuts;

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ScalarField, Tape};
use crate::error::{Error, Result};
use crate::model::ModelContext;

use adapt::{DualAveraging, WarmupSchedule, Welford};
use nuts::{transition, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct NutsConfig {
    pub chains: usize,
    /// Total iterations per chain, warm-up included.
    pub iters: usize,
    pub warmup: usize,
    pub target_accept: f64,
    pub max_treedepth: usize,
    pub seed: u64,
    /// Uniform(-r, r) raw-space initials (mixing latents start at raw 0).
    pub init_radius: f64,
}

impl NutsConfig {
    pub fn new(iters: usize, seed: u64) -> NutsConfig {
        NutsConfig {
            chains: 4,
            iters,
            warmup: iters / 2,
            target_accept: 0.8,
            max_treedepth: 10,
            seed,
            init_radius: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("need at least one chain".into()));
        }
        if self.warmup >= self.iters {
            return Err(Error::Config(format!(
                "warmup ({}) must be smaller than iters ({})",
                self.warmup, self.iters
            )));
        }
        if self.warmup < 150 {
            return Err(Error::Config(format!(
                "warmup must be at least 150 for the adaptation schedule, got {}",
                self.warmup
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Post-warm-up draws of one chain, plus per-draw diagnostics.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    /// kept x dim, row-major.
    pub values: Vec<f64>,
    pub kept: usize,
    pub dim: usize,
    pub logp: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub treedepth: Vec<u8>,
    pub divergent: Vec<bool>,
    pub divergences: usize,
    pub treedepth_hits: usize,
    pub step_size: f64,
}

impl ChainDraws {
    pub fn series(&self, param: usize) -> Vec<f64> {
        (0..self.kept)
            .map(|k| self.values[k * self.dim + param])
            .collect()
    }
}

/// Multi-chain draws in constrained space.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn dim(&self) -> usize {
        self.chains.first().map_or(0, |c| c.dim)
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Per-chain series of one parameter.
    pub fn per_chain(&self, param: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.series(param)).collect()
    }

    /// All post-warm-up draws of one parameter pooled across chains.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.chains {
            out.extend(c.series(param));
        }
        out
    }

    pub fn total_divergences(&self) -> usize {
        self.chains.iter().map(|c| c.divergences).sum()
    }
}

/// Raw-space output of one chain from the generic engine.
pub struct RawChain {
    pub draws: Vec<f64>,
    pub kept: usize,
    pub dim: usize,
    pub logp: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub treedepth: Vec<u8>,
    pub divergent: Vec<bool>,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
}

fn run_chain<S: ScalarField>(
    field: &S,
    dim: usize,
    config: &NutsConfig,
    chain: usize,
    init: &(impl Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync),
) -> Result<RawChain> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let tape = Tape::with_capacity(1 << 16);

    // Initialization: retry until the posterior and gradient are finite.
    let mut state = None;
    for _ in 0..100 {
        let x = init(&mut rng);
        debug_assert_eq!(x.len(), dim);
        let point = Point::new(field, &tape, x);
        if point.logp.is_finite() && point.grad.iter().all(|g| g.is_finite()) {
            state = Some(point);
            break;
        }
    }
    let mut state = state.ok_or(Error::Init {
        chain,
        attempts: 100,
    })?;

    let mut inv_mass = vec![1.0; dim];
    let schedule = WarmupSchedule::new(config.warmup);
    let mut eps = find_reasonable_eps(field, &tape, &state, &inv_mass, &mut rng)?;
    let mut da = DualAveraging::new(eps);
    let mut welford = Welford::new(dim);
    let mut window_divergences = 0usize;
    let mut window_steps = 0usize;

    for iter in 0..config.warmup {
        let stats = transition(
            field,
            &tape,
            &mut rng,
            &mut state,
            eps,
            &inv_mass,
            config.max_treedepth,
        );
        da.update(stats.accept_stat, config.target_accept);
        eps = da.current();
        if schedule.in_slow_window(iter) {
            welford.push(&state.q);
            window_steps += 1;
            if stats.divergent {
                window_divergences += 1;
            }
            if schedule.window_closes_at(iter) {
                if window_steps > 0 && window_divergences == window_steps {
                    return Err(Error::Adaptation(format!(
                        "chain {chain}: every transition in an adaptation window diverged; \
                         try a smaller init_radius"
                    )));
                }
                if welford.count() > 1.0 {
                    inv_mass = welford.regularized_variance();
                }
                welford.reset();
                window_divergences = 0;
                window_steps = 0;
                eps = find_reasonable_eps(field, &tape, &state, &inv_mass, &mut rng)?;
                da = DualAveraging::new(eps);
            }
        }
    }
    let eps = da.adapted();

    let kept = config.iters - config.warmup;
    let mut out = RawChain {
        draws: Vec::with_capacity(kept * dim),
        kept,
        dim,
        logp: Vec::with_capacity(kept),
        accept_stat: Vec::with_capacity(kept),
        treedepth: Vec::with_capacity(kept),
        divergent: Vec::with_capacity(kept),
        step_size: eps,
        inv_mass: inv_mass.clone(),
    };
    for _ in 0..kept {
        let stats = transition(
            field,
            &tape,
            &mut rng,
            &mut state,
            eps,
            &inv_mass,
            config.max_treedepth,
        );
        out.draws.extend_from_slice(&state.q);
        out.logp.push(state.logp);
        out.accept_stat.push(stats.accept_stat);
        out.treedepth.push(stats.depth as u8);
        out.divergent.push(stats.divergent);
    }
    Ok(out)
}

/// Double/halve until a single leapfrog step crosses 80% acceptance (the
/// usual warm-start heuristic, close to the default adaptation target).
fn find_reasonable_eps<S: ScalarField>(
    field: &S,
    tape: &Tape,
    state: &Point,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let kinetic = |p: &[f64]| -> f64 {
        0.5 * p
            .iter()
            .zip(inv_mass)
            .map(|(pi, im)| pi * pi * im)
            .sum::<f64>()
    };
    let delta_at = |eps: f64, rng: &mut ChaCha8Rng| -> f64 {
        let mut z = state.clone();
        for (pi, im) in z.p.iter_mut().zip(inv_mass) {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            *pi = g / im.sqrt();
        }
        let h0 = -z.logp + kinetic(&z.p);
        let half = 0.5 * eps;
        for (pi, gi) in z.p.iter_mut().zip(&z.grad) {
            *pi += half * gi;
        }
        for ((qi, pi), im) in z.q.iter_mut().zip(&z.p).zip(inv_mass) {
            *qi += eps * pi * im;
        }
        let (logp, grad) = crate::autodiff::gradient(tape, field, &z.q);
        z.logp = logp;
        z.grad = grad;
        for (pi, gi) in z.p.iter_mut().zip(&z.grad) {
            *pi += half * gi;
        }
        let h1 = -z.logp + kinetic(&z.p);
        if h1.is_finite() {
            h0 - h1
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut eps = 1.0f64;
    let threshold = 0.8f64.ln();
    let mut delta = delta_at(eps, rng);
    let dir = if delta > threshold { 1 } else { -1 };
    for _ in 0..100 {
        let done = if dir == 1 {
            delta <= threshold
        } else {
            delta >= threshold
        };
        if done {
            break;
        }
        eps *= if dir == 1 { 2.0 } else { 0.5 };
        if !(1e-10..=1e7).contains(&eps) {
            return Err(Error::Adaptation(format!(
                "step-size search left the sane range ({eps:.1e}); posterior may be improper"
            )));
        }
        delta = delta_at(eps, rng);
    }
    Ok(eps)
}

/// Run the generic engine on independent chains (raw space).
pub fn sample_field<S, I>(
    field: &S,
    dim: usize,
    config: &NutsConfig,
    threads: usize,
    init: I,
) -> Result<Vec<RawChain>>
where
    S: ScalarField + Sync,
    I: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    config.validate()?;
    let workers = threads.max(1).min(config.chains);
    let results: Mutex<Vec<Option<Result<RawChain>>>> =
        Mutex::new((0..config.chains).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let chain = next.fetch_add(1, Ordering::SeqCst);
                if chain >= config.chains {
                    break;
                }
                let res = run_chain(field, dim, config, chain, &init);
                results.lock().unwrap()[chain] = Some(res);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("chain completed"))
        .collect()
}

/// Fit the joint model: NUTS over the unconstrained posterior, draws stored
/// in constrained space.
pub fn run(ctx: &ModelContext, config: &NutsConfig, threads: usize) -> Result<PosteriorDraws> {
    let layout = ctx.layout().clone();
    let dim = layout.dim;
    let radius = config.init_radius;
    let init = move |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut x: Vec<f64> = (0..dim)
            .map(|_| rng.random::<f64>() * 2.0 * radius - radius)
            .collect();
        // mixing latents start at V = 1, the Gaussian-limit neutral point
        for k in layout.v_b.clone().chain(layout.v_z.clone()) {
            x[k] = 0.0;
        }
        x
    };
    let raw_chains = sample_field(ctx, dim, config, threads, init)?;
    let names = ctx.constrained_names();
    let cdim = names.len();
    let chains = raw_chains
        .into_iter()
        .map(|rc| {
            let mut values = Vec::with_capacity(rc.kept * cdim);
            for k in 0..rc.kept {
                let raw = &rc.draws[k * dim..(k + 1) * dim];
                values.extend(ctx.constrained_vector(raw));
            }
            let divergences = rc.divergent.iter().filter(|d| **d).count();
            let treedepth_hits = rc
                .treedepth
                .iter()
                .filter(|d| **d as usize >= config.max_treedepth)
                .count();
            ChainDraws {
                values,
                kept: rc.kept,
                dim: cdim,
                logp: rc.logp,
                accept_stat: rc.accept_stat,
                treedepth: rc.treedepth,
                divergent: rc.divergent,
                divergences,
                treedepth_hits,
                step_size: rc.step_size,
            }
        })
        .collect();
    Ok(PosteriorDraws { names, chains })
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// One CSV per chain: header = constrained parameter names, one row per draw.
pub fn write_chain_csv(draws: &PosteriorDraws, chain: usize, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(w, "{}", draws.names.join(",")).map_err(werr)?;
    let c = &draws.chains[chain];
    for k in 0..c.kept {
        let row: Vec<String> = (0..c.dim).map(|j| fmt17(c.values[k * c.dim + j])).collect();
        writeln!(w, "{}", row.join(",")).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

/// Reload chain CSVs written by [`write_chain_csv`] (the per-draw sampler
/// statistics are not persisted, only the draws).
pub fn read_chain_csvs(paths: &[std::path::PathBuf]) -> Result<PosteriorDraws> {
    let mut names: Vec<String> = Vec::new();
    let mut chains = Vec::new();
    for path in paths {
        let file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path.display().to_string(), e))?
            .ok_or_else(|| Error::Config(format!("{}: empty draws file", path.display())))?;
        let these: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
        if names.is_empty() {
            names = these;
        } else if names != these {
            return Err(Error::Config(format!(
                "{}: chain headers disagree",
                path.display()
            )));
        }
        let dim = names.len();
        let mut values = Vec::new();
        let mut kept = 0;
        for (r, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            for (c, cell) in line.split(',').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    row: r + 2,
                    column: names.get(c).cloned().unwrap_or_default(),
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
            kept += 1;
        }
        chains.push(ChainDraws {
            values,
            kept,
            dim,
            logp: vec![],
            accept_stat: vec![],
            treedepth: vec![],
            divergent: vec![],
            divergences: 0,
            treedepth_hits: 0,
            step_size: f64::NAN,
        });
    }
    Ok(PosteriorDraws { names, chains })
}

#[cfg(test)]
mod tests;
