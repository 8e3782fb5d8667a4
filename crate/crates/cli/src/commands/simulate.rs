//! `jm simulate`: write a simulated CSV pair plus its truth manifest.

use anyhow::Result;
use jm_core::data::write_csv;
use jm_core::simulate::simulate_dataset;

use super::ensure_out_dir;
use crate::config::Config;

pub fn run(cfg: &Config) -> Result<()> {
    let truth = cfg.truth()?;
    let out_dir = cfg.path("out.dir")?;
    ensure_out_dir(&out_dir)?;
    let ds = simulate_dataset(&truth)?;
    write_csv(&ds, &out_dir.join("long.csv"), &out_dir.join("surv.csv"))?;

    let mut manifest = cfg.clone();
    manifest.set("command", "simulate");
    manifest.write_truth(&truth);
    manifest.set("data.long", out_dir.join("long.csv").display());
    manifest.set("data.surv", out_dir.join("surv.csv").display());
    manifest.set("result.subjects", ds.n);
    manifest.set("result.observations", ds.total_obs());
    manifest.set(
        "result.events",
        ds.event.iter().filter(|e| **e).count(),
    );
    manifest.write(&out_dir.join("truth.txt"))?;
    println!(
        "simulated {} subjects ({} rows, {} events) -> {}",
        ds.n,
        ds.total_obs(),
        ds.event.iter().filter(|e| **e).count(),
        out_dir.display()
    );
    Ok(())
}
