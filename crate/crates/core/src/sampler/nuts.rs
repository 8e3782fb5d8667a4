//! Multinomial No-U-Turn transitions with the generalized stopping criterion.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{gradient, ScalarField, Tape};
use crate::math::log_add_exp;

/// Energy error beyond which a leapfrog step is declared divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Phase-space point with cached gradient and log density.
#[derive(Clone)]
pub(crate) struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    pub fn new<S: ScalarField>(field: &S, tape: &Tape, q: Vec<f64>) -> Point {
        let (logp, grad) = gradient(tape, field, &q);
        Point {
            p: vec![0.0; q.len()],
            q,
            grad,
            logp,
        }
    }
}

pub(crate) struct TransitionStats {
    pub accept_stat: f64,
    pub depth: usize,
    pub divergent: bool,
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(inv_mass)
        .map(|(pi, im)| pi * pi * im)
        .sum::<f64>()
}

fn hamiltonian(z: &Point, inv_mass: &[f64]) -> f64 {
    -z.logp + kinetic(&z.p, inv_mass)
}

fn leapfrog<S: ScalarField>(field: &S, tape: &Tape, z: &mut Point, eps: f64, inv_mass: &[f64]) {
    let half = 0.5 * eps;
    for (pi, gi) in z.p.iter_mut().zip(&z.grad) {
        *pi += half * gi;
    }
    for ((qi, pi), im) in z.q.iter_mut().zip(&z.p).zip(inv_mass) {
        *qi += eps * pi * im;
    }
    let (logp, grad) = gradient(tape, field, &z.q);
    z.logp = logp;
    z.grad = grad;
    for (pi, gi) in z.p.iter_mut().zip(&z.grad) {
        *pi += half * gi;
    }
}

fn p_sharp(p: &[f64], inv_mass: &[f64]) -> Vec<f64> {
    p.iter().zip(inv_mass).map(|(pi, im)| pi * im).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generalized no-u-turn condition across a trajectory segment.
fn criterion(p_sharp_beg: &[f64], p_sharp_end: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_beg, rho) > 0.0 && dot(p_sharp_end, rho) > 0.0
}

struct Subtree {
    valid: bool,
    z_propose_q: Vec<f64>,
    z_propose_logp: f64,
    /// Momentum and sharp momentum at the trajectory-facing ends.
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    rho: Vec<f64>,
    log_sum_weight: f64,
}

struct TreeCtx<'a, S: ScalarField> {
    field: &'a S,
    tape: &'a Tape,
    inv_mass: &'a [f64],
    eps: f64,
    h0: f64,
    sum_metro: f64,
    n_leapfrog: usize,
    divergent: bool,
}

/// Build a balanced subtree of 2^depth leapfrog steps in direction `dir`,
/// advancing `z` to the far end. Uses the biased multinomial merge within
/// the subtree and checks the no-u-turn condition across and between the
/// merged halves.
fn build_tree<S: ScalarField, R: Rng>(
    ctx: &mut TreeCtx<'_, S>,
    rng: &mut R,
    z: &mut Point,
    depth: usize,
    dir: f64,
) -> Subtree {
    if depth == 0 {
        leapfrog(ctx.field, ctx.tape, z, dir * ctx.eps, ctx.inv_mass);
        ctx.n_leapfrog += 1;
        let h = hamiltonian(z, ctx.inv_mass);
        let delta = if h.is_finite() { ctx.h0 - h } else { f64::NEG_INFINITY };
        if delta < -DIVERGENCE_THRESHOLD {
            ctx.divergent = true;
        }
        ctx.sum_metro += delta.exp().min(1.0);
        let sharp = p_sharp(&z.p, ctx.inv_mass);
        return Subtree {
            valid: !ctx.divergent,
            z_propose_q: z.q.clone(),
            z_propose_logp: z.logp,
            p_beg: z.p.clone(),
            p_end: z.p.clone(),
            p_sharp_beg: sharp.clone(),
            p_sharp_end: sharp,
            rho: z.p.clone(),
            log_sum_weight: delta,
        };
    }

    let mut first = build_tree(ctx, rng, z, depth - 1, dir);
    if !first.valid {
        return first;
    }
    let second = build_tree(ctx, rng, z, depth - 1, dir);
    if !second.valid {
        first.valid = false;
        return first;
    }

    let total = log_add_exp(first.log_sum_weight, second.log_sum_weight);
    // Multinomial draw between the two halves' proposals.
    let take_second = second.log_sum_weight > total
        || rng.random::<f64>() < (second.log_sum_weight - total).exp();
    let (prop_q, prop_logp) = if take_second {
        (second.z_propose_q, second.z_propose_logp)
    } else {
        (first.z_propose_q, first.z_propose_logp)
    };

    let rho: Vec<f64> = first
        .rho
        .iter()
        .zip(&second.rho)
        .map(|(a, b)| a + b)
        .collect();
    let mut valid = criterion(&first.p_sharp_beg, &second.p_sharp_end, &rho);
    // Between-subtree checks.
    let rho_left: Vec<f64> = first
        .rho
        .iter()
        .zip(&second.p_beg)
        .map(|(a, b)| a + b)
        .collect();
    valid &= criterion(&first.p_sharp_beg, &second.p_sharp_beg, &rho_left);
    let rho_right: Vec<f64> = second
        .rho
        .iter()
        .zip(&first.p_end)
        .map(|(a, b)| a + b)
        .collect();
    valid &= criterion(&first.p_sharp_end, &second.p_sharp_end, &rho_right);

    Subtree {
        valid,
        z_propose_q: prop_q,
        z_propose_logp: prop_logp,
        p_beg: first.p_beg,
        p_end: second.p_end,
        p_sharp_beg: first.p_sharp_beg,
        p_sharp_end: second.p_sharp_end,
        rho,
        log_sum_weight: total,
    }
}

/// One NUTS transition from `state` (which must hold a finite log density).
pub(crate) fn transition<S: ScalarField, R: Rng>(
    field: &S,
    tape: &Tape,
    rng: &mut R,
    state: &mut Point,
    eps: f64,
    inv_mass: &[f64],
    max_depth: usize,
) -> TransitionStats {
    // Fresh momentum: p ~ N(0, M) with M = diag(1/inv_mass).
    for (pi, im) in state.p.iter_mut().zip(inv_mass) {
        let z: f64 = rng.sample(StandardNormal);
        *pi = z / im.sqrt();
    }
    let h0 = hamiltonian(state, inv_mass);

    let mut fwd = state.clone();
    let mut bck = state.clone();
    let mut sample_q = state.q.clone();
    let mut sample_logp = state.logp;
    let sharp0 = p_sharp(&state.p, inv_mass);
    // Extreme ends of the trajectory built so far.
    let mut p_fwd_end = state.p.clone();
    let mut p_bck_end = state.p.clone();
    let mut sharp_fwd_end = sharp0.clone();
    let mut sharp_bck_end = sharp0;
    let mut rho = state.p.clone();
    let mut log_sum_weight = 0.0; // initial point carries weight exp(0)

    let mut ctx = TreeCtx {
        field,
        tape,
        inv_mass,
        eps,
        h0,
        sum_metro: 0.0,
        n_leapfrog: 0,
        divergent: false,
    };

    let mut depth = 0;
    while depth < max_depth {
        let go_forward = rng.random::<f64>() < 0.5;
        let subtree = if go_forward {
            build_tree(&mut ctx, rng, &mut fwd, depth, 1.0)
        } else {
            build_tree(&mut ctx, rng, &mut bck, depth, -1.0)
        };
        if !subtree.valid {
            break;
        }
        depth += 1;

        // Biased progressive sampling toward the new subtree.
        let accept_new = subtree.log_sum_weight > log_sum_weight
            || rng.random::<f64>() < (subtree.log_sum_weight - log_sum_weight).exp();
        if accept_new {
            sample_q = subtree.z_propose_q.clone();
            sample_logp = subtree.z_propose_logp;
        }
        log_sum_weight = log_add_exp(log_sum_weight, subtree.log_sum_weight);

        // Boundary state on the side that grew, before and after this step.
        let (old_end_p, old_end_sharp) = if go_forward {
            (
                std::mem::replace(&mut p_fwd_end, subtree.p_end),
                std::mem::replace(&mut sharp_fwd_end, subtree.p_sharp_end),
            )
        } else {
            (
                std::mem::replace(&mut p_bck_end, subtree.p_end),
                std::mem::replace(&mut sharp_bck_end, subtree.p_sharp_end),
            )
        };
        let other_sharp = if go_forward {
            &sharp_bck_end
        } else {
            &sharp_fwd_end
        };

        // Old trajectory plus the first momentum of the new subtree.
        let ext_join: Vec<f64> = rho.iter().zip(&subtree.p_beg).map(|(a, b)| a + b).collect();
        // New subtree plus the adjacent old boundary momentum.
        let ext_sub: Vec<f64> = subtree
            .rho
            .iter()
            .zip(&old_end_p)
            .map(|(a, b)| a + b)
            .collect();
        for (r, s) in rho.iter_mut().zip(&subtree.rho) {
            *r += s;
        }

        let mut persist = criterion(&sharp_bck_end, &sharp_fwd_end, &rho);
        persist &= criterion(other_sharp, &subtree.p_sharp_beg, &ext_join);
        persist &= criterion(
            &old_end_sharp,
            if go_forward {
                &sharp_fwd_end
            } else {
                &sharp_bck_end
            },
            &ext_sub,
        );
        if !persist {
            break;
        }
    }

    state.q = sample_q;
    state.logp = sample_logp;
    let (logp, grad) = gradient(tape, field, &state.q);
    state.logp = logp;
    state.grad = grad;

    let n = ctx.n_leapfrog.max(1);
    TransitionStats {
        accept_stat: ctx.sum_metro / n as f64,
        depth,
        divergent: ctx.divergent,
    }
}
