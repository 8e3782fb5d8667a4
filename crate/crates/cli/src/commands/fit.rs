//! `jm fit`: load data, sample, persist draws + summary + manifest.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use jm_core::data::load_csv;
use jm_core::diagnostics::summarize;
use jm_core::model::ModelContext;
use jm_core::sampler::{self, write_chain_csv};

use super::{ensure_out_dir, fmt17};
use crate::config::Config;

pub fn run(cfg: &Config) -> Result<()> {
    let long_path = cfg.path("data.long")?;
    let surv_path = cfg.path("data.surv")?;
    for p in [&long_path, &surv_path] {
        if !p.exists() {
            bail!("data file {} does not exist", p.display());
        }
    }
    let out_dir = cfg.path("out.dir")?;
    ensure_out_dir(&out_dir)?;

    let schema = cfg.schema();
    let (formula, re_formula, surv_formula) = cfg.formulas();
    let spec = cfg.model_spec()?;
    let nuts = cfg.nuts()?;
    let threads = cfg.threads(nuts.chains)?;

    let mut ds = load_csv(&long_path, &surv_path, &schema).context("loading data")?;
    let violations = ds.validate();
    if !violations.is_empty() {
        let listed: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        bail!("invalid data:\n  {}", listed.join("\n  "));
    }
    ds.build_designs(&formula, &re_formula, &surv_formula)?;
    let ids = ds.ids.clone();
    let ctx = ModelContext::new(ds, spec.clone())?;

    let t0 = Instant::now();
    let draws = sampler::run(&ctx, &nuts, threads)?;
    let wall = t0.elapsed().as_secs_f64();

    for chain in 0..nuts.chains {
        write_chain_csv(&draws, chain, &out_dir.join(format!("chain_{}.csv", chain + 1)))?;
    }

    let hyper_names = ctx.layout().hyper_names(&spec);
    let rows = summarize(&draws, &hyper_names)?;
    let mut summary = String::from("parameter,p2.5,p50,p97.5,rhat,ess\n");
    for row in &rows {
        summary.push_str(&format!(
            "{},{},{},{},{:.6},{:.1}\n",
            row.name,
            fmt17(row.p2_5),
            fmt17(row.p50),
            fmt17(row.p97_5),
            row.rhat,
            row.ess
        ));
        if row.rhat > 1.05 {
            eprintln!(
                "warning: split R-hat for {} is {:.3} (> 1.05); chains may not have mixed",
                row.name, row.rhat
            );
        }
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;

    let mut ids_csv = String::from("index,id\n");
    for (i, id) in ids.iter().enumerate() {
        ids_csv.push_str(&format!("{i},{id}\n"));
    }
    std::fs::write(out_dir.join("ids.csv"), ids_csv)?;

    let mut manifest = cfg.clone();
    manifest.set("command", "fit");
    manifest.set("data.long", long_path.display());
    manifest.set("data.surv", surv_path.display());
    manifest.set(
        "model.formula",
        formula.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "),
    );
    manifest.set(
        "model.re_formula",
        re_formula.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "),
    );
    manifest.set(
        "model.surv_formula",
        surv_formula.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "),
    );
    manifest.write_model_spec(&spec);
    manifest.write_nuts(&nuts);
    manifest.set("threads", threads);
    if let Some(basis) = ctx.basis() {
        manifest.set(
            "basis.interior_knots",
            basis
                .interior_knots()
                .iter()
                .map(|k| fmt17(*k))
                .collect::<Vec<_>>()
                .join(","),
        );
        let [lo, hi] = basis.boundary_knots();
        manifest.set("basis.boundary_knots", format!("{},{}", fmt17(lo), fmt17(hi)));
    }
    manifest.set("result.wall_time_s", format!("{wall:.3}"));
    manifest.set("result.divergences", draws.total_divergences());
    for (c, chain) in draws.chains.iter().enumerate() {
        manifest.set(format!("result.divergences.chain_{}", c + 1).as_str(), chain.divergences);
        manifest.set(
            format!("result.treedepth_hits.chain_{}", c + 1).as_str(),
            chain.treedepth_hits,
        );
        manifest.set(format!("result.step_size.chain_{}", c + 1).as_str(), chain.step_size);
    }
    manifest.write(&out_dir.join("manifest.txt"))?;

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "fit {} ({} chains x {} iters) in {wall:.1}s, {} divergences -> {}",
        spec.approach,
        nuts.chains,
        nuts.iters,
        draws.total_divergences(),
        out_dir.display()
    )?;
    Ok(())
}
