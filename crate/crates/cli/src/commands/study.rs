//! `jm study`: simulate-and-refit replicates with resumable per-replicate
//! artifacts, aggregated into a coverage table.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use jm_core::model::{Approach, ModelSpec};
use jm_core::simulate::{
    aggregate_spec, assemble_report, fit_replicate, ReplicateSummary,
};

use super::{ensure_out_dir, fmt17};
use crate::config::Config;

pub fn run(cfg: &Config) -> Result<()> {
    let truth = cfg.truth()?;
    let nuts = cfg.nuts()?;
    let replicates: usize = cfg.parse_or("study.replicates", 20)?;
    if replicates == 0 {
        bail!("study needs at least one replicate");
    }
    let spec_names = cfg.get("study.specs").unwrap_or("gauss,a3").to_string();
    let mut specs = Vec::new();
    for name in spec_names.split(',') {
        let approach = Approach::parse(name)
            .map_err(|e| anyhow::anyhow!("{e} (given study.specs = `{spec_names}`)"))?;
        let mut spec = ModelSpec::new(approach);
        spec.knot_count = cfg.parse_or("model.knots", 3)?;
        spec.quad_order = cfg.parse_or("model.quad_order", spec.quad_order)?;
        spec.validate()?;
        specs.push(spec);
    }
    let threads = cfg.threads(nuts.chains)?;
    let out_dir = cfg.path("out.dir")?;
    ensure_out_dir(&out_dir)?;

    let mut per_spec = Vec::new();
    let mut failures = Vec::new();
    for spec in &specs {
        let spec_dir = out_dir.join(spec.approach.as_str());
        ensure_out_dir(&spec_dir)?;
        let results: Vec<Option<ReplicateSummary>> = {
            let slots: Mutex<Vec<Option<Option<ReplicateSummary>>>> =
                Mutex::new((0..replicates).map(|_| None).collect());
            let next = AtomicUsize::new(0);
            let workers = threads.max(1).min(replicates);
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let rep = next.fetch_add(1, Ordering::SeqCst);
                        if rep >= replicates {
                            break;
                        }
                        let rep_dir = spec_dir.join(format!("rep_{rep:03}"));
                        let done = rep_dir.join("summary.csv");
                        let summary = if done.exists() {
                            read_replicate_summary(&done).ok()
                        } else {
                            match fit_replicate(&truth, spec, &nuts, rep as u64, 1) {
                                Ok(s) => {
                                    let _ = std::fs::create_dir_all(&rep_dir);
                                    if write_replicate_summary(&done, &s).is_err() {
                                        log::warn!("could not persist {}", done.display());
                                    }
                                    Some(s)
                                }
                                Err(e) => {
                                    log::warn!(
                                        "replicate {rep} failed for {}: {e}",
                                        spec.approach
                                    );
                                    None
                                }
                            }
                        };
                        slots.lock().unwrap()[rep] = Some(summary);
                    });
                }
            });
            slots
                .into_inner()
                .unwrap()
                .into_iter()
                .map(|s| s.expect("replicate slot filled"))
                .collect()
        };
        let ok: Vec<ReplicateSummary> = results.into_iter().flatten().collect();
        let failed = replicates - ok.len();
        if failed * 5 > replicates {
            bail!(
                "study failed for spec `{}`: {failed}/{replicates} replicates failed to fit",
                spec.approach
            );
        }
        failures.push(failed);
        per_spec.push(aggregate_spec(&truth, spec, &ok));
        println!(
            "{}: {} replicates done ({} failed)",
            spec.approach,
            replicates - failed,
            failed
        );
    }

    let report = assemble_report(&truth, &specs, per_spec, failures, replicates);
    std::fs::write(out_dir.join("report.csv"), report.to_csv(&truth))?;

    let mut manifest = cfg.clone();
    manifest.set("command", "study");
    manifest.write_truth(&truth);
    manifest.write_nuts(&nuts);
    manifest.set("study.replicates", replicates);
    manifest.set("study.specs", &spec_names);
    manifest.set("threads", threads);
    for (spec, failed) in report.specs.iter().zip(&report.failures) {
        manifest.set(format!("result.failures.{spec}").as_str(), *failed);
    }
    manifest.write(&out_dir.join("manifest.txt"))?;
    println!("study report -> {}", out_dir.join("report.csv").display());
    Ok(())
}

fn write_replicate_summary(path: &Path, s: &ReplicateSummary) -> Result<()> {
    let mut out = String::from("parameter,mean,p2.5,p97.5\n");
    for (name, mean, lo, hi) in &s.params {
        out.push_str(&format!(
            "{name},{},{},{}\n",
            fmt17(*mean),
            fmt17(*lo),
            fmt17(*hi)
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn read_replicate_summary(path: &Path) -> Result<ReplicateSummary> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut params = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("{}: malformed line `{line}`", path.display());
        }
        params.push((
            fields[0].to_string(),
            fields[1].parse()?,
            fields[2].parse()?,
            fields[3].parse()?,
        ));
    }
    Ok(ReplicateSummary { params })
}
