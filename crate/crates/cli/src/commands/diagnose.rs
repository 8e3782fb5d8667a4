//! `jm diagnose`: residual qq data, binned residual dof fits, and mixing
//! outlier scores for a completed fit directory.

use anyhow::{bail, Context, Result};
use jm_core::data::load_csv;
use jm_core::diagnostics::{binned_residual_dof, outlier_scores, residual_qq};
use jm_core::model::Approach;
use jm_core::sampler::read_chain_csvs;
use jm_core::splines::SplineBasis;

use super::{ensure_out_dir, fmt17};
use crate::config::Config;

pub fn run(cfg: &Config) -> Result<()> {
    let fit_dir = cfg.path("diagnose.fit_dir")?;
    let manifest_path = fit_dir.join("manifest.txt");
    if !manifest_path.exists() {
        bail!(
            "{} has no manifest.txt; is it a completed fit directory?",
            fit_dir.display()
        );
    }
    let manifest = Config::from_file(&manifest_path)?;
    if manifest.get("command") != Some("fit") {
        bail!("{} was not produced by `jm fit`", manifest_path.display());
    }
    let out_dir = cfg.path("out.dir").unwrap_or_else(|_| fit_dir.clone());
    ensure_out_dir(&out_dir)?;
    let bins: usize = cfg.parse_or("diagnose.bins", 5)?;
    let threshold: f64 = cfg.parse_or("diagnose.threshold", 3.0)?;

    let spec = manifest.model_spec()?;
    let (formula, re_formula, surv_formula) = manifest.formulas();
    let mut ds = load_csv(
        &manifest.path("data.long")?,
        &manifest.path("data.surv")?,
        &manifest.schema(),
    )
    .context("reloading the fitted data")?;
    ds.build_designs(&formula, &re_formula, &surv_formula)?;
    // the basis is reloaded only to fail fast if the manifest is inconsistent
    if let Some(knots) = manifest.get("basis.interior_knots") {
        let interior: Vec<f64> = knots
            .split(',')
            .map(|k| k.trim().parse())
            .collect::<std::result::Result<_, _>>()?;
        let boundary_raw = manifest.require("basis.boundary_knots")?;
        let b: Vec<f64> = boundary_raw
            .split(',')
            .map(|k| k.trim().parse())
            .collect::<std::result::Result<_, _>>()?;
        SplineBasis::from_knots(interior, [b[0], b[1]])?;
    }

    let chains: usize = manifest.parse_or("nuts.chains", 4)?;
    let paths: Vec<std::path::PathBuf> = (1..=chains)
        .map(|c| fit_dir.join(format!("chain_{c}.csv")))
        .collect();
    for p in &paths {
        if !p.exists() {
            bail!("missing draws file {}", p.display());
        }
    }
    let draws = read_chain_csvs(&paths)?;

    let qq = residual_qq(&ds, &draws)?;
    let mut qq_csv = String::from("theoretical,empirical\n");
    for (t, e) in qq {
        qq_csv.push_str(&format!("{},{}\n", fmt17(t), fmt17(e)));
    }
    std::fs::write(out_dir.join("qq.csv"), qq_csv)?;

    let bin_fits = binned_residual_dof(&ds, &draws, bins)?;
    let mut bin_csv =
        String::from("bin,t_lo,t_hi,t_mid,count,nu_hat,nu_lo,nu_hi,mu,sigma,converged,degenerate\n");
    for (b, fit) in bin_fits.iter().enumerate() {
        match (&fit.fit, &fit.dof_interval) {
            (Some(t), Some((lo, hi))) => bin_csv.push_str(&format!(
                "{b},{},{},{},{},{},{},{},{},{},{},0\n",
                fmt17(fit.t_lo),
                fmt17(fit.t_hi),
                fmt17(fit.t_mid),
                fit.count,
                fmt17(t.nu),
                fmt17(*lo),
                fmt17(*hi),
                fmt17(t.mu),
                fmt17(t.sigma),
                u8::from(t.converged),
            )),
            _ => bin_csv.push_str(&format!(
                "{b},{},{},{},{},,,,,,,1\n",
                fmt17(fit.t_lo),
                fmt17(fit.t_hi),
                fmt17(fit.t_mid),
                fit.count
            )),
        }
    }
    std::fs::write(out_dir.join("binned_dof.csv"), bin_csv)?;

    let mut outlier_csv = String::from("kind,subject,subject_id,obs,mean,q5,q95,flagged\n");
    if spec.approach == Approach::Gaussian {
        log::warn!("gaussian fit has no mixing variables; outliers.csv is empty");
    } else {
        let report = outlier_scores(&draws, &ds, &spec, threshold)?;
        for v in report.subjects.iter().flatten() {
            outlier_csv.push_str(&format!(
                "subject,{},{},,{},{},{},{}\n",
                v.subject + 1,
                ds.ids[v.subject],
                fmt17(v.mean),
                fmt17(v.q5),
                fmt17(v.q95),
                u8::from(v.flagged)
            ));
        }
        for v in report.observations.iter().flatten() {
            outlier_csv.push_str(&format!(
                "observation,{},{},{},{},{},{},{}\n",
                v.subject + 1,
                ds.ids[v.subject],
                v.obs.unwrap() + 1,
                fmt17(v.mean),
                fmt17(v.q5),
                fmt17(v.q95),
                u8::from(v.flagged)
            ));
        }
    }
    std::fs::write(out_dir.join("outliers.csv"), outlier_csv)?;

    println!(
        "diagnostics (bins = {bins}, threshold = {threshold}) -> {}",
        out_dir.display()
    );
    Ok(())
}
