//! Simulate a dataset at the default truth, fit one model variant, and print
//! posterior summaries of the hyperparameters.
//!
//! Usage: cargo run --release --example recovery_demo -- [gauss|a1|a2|a3|a4] [iters]
use jm_core::diagnostics::summarize;
use jm_core::model::{Approach, ModelContext, ModelSpec};
use jm_core::sampler::{run, NutsConfig};
use jm_core::simulate::{simulate_dataset, TruthConfig};
use std::time::Instant;

fn main() {
    let approach = match std::env::args().nth(1).as_deref() {
        Some("gauss") => Approach::Gaussian,
        Some("a1") => Approach::SharedMixing,
        Some("a2") => Approach::SubjectMixing,
        Some("a4") => Approach::TimeVaryingDof,
        _ => Approach::ObservationMixing,
    };
    let iters: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
    let truth = TruthConfig {
        n: 50,
        seed: 42,
        ..Default::default()
    };
    let ds = simulate_dataset(&truth).unwrap();
    println!(
        "n={} obs={} events={}",
        ds.n,
        ds.total_obs(),
        ds.event.iter().filter(|e| **e).count()
    );
    let mut spec = ModelSpec::new(approach);
    if approach == Approach::TimeVaryingDof {
        spec = spec.with_knots(3);
    }
    let ctx = ModelContext::new(ds, spec.clone()).unwrap();
    let config = NutsConfig::new(iters, 7);
    let t0 = Instant::now();
    let draws = run(&ctx, &config, 2).unwrap();
    println!(
        "fit took {:.0}s, divergences {}, step sizes {:?}",
        t0.elapsed().as_secs_f64(),
        draws.total_divergences(),
        draws.chains.iter().map(|c| c.step_size).collect::<Vec<_>>()
    );
    let hyper = ctx.layout().hyper_names(&spec);
    for row in summarize(&draws, &hyper).unwrap() {
        println!(
            "{:<10} p50={:>8.3} [{:>8.3},{:>8.3}] rhat={:.3} ess={:>7.0}",
            row.name, row.p50, row.p2_5, row.p97_5, row.rhat, row.ess
        );
    }
}
