pub mod diagnose;
pub mod fit;
pub mod simulate;
pub mod study;

use std::path::Path;

use anyhow::{Context, Result};

pub(crate) fn ensure_out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("cannot create output directory {}", path.display()))
}

pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
