//! Data ingestion, validation and design-matrix construction.
//!
//! Two CSV files feed a fit: a long-format longitudinal file (one row per
//! measurement) and a survival file (one row per subject). Subject ids may be
//! arbitrary strings; internally subjects are re-indexed densely in first
//! appearance order with the id map retained for output. Any empty or
//! non-numeric cell is a hard parse error.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

/// Column-name mapping for the two CSV files.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub id: String,
    pub time: String,
    pub y: String,
    pub stime: String,
    pub event: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            id: "id".into(),
            time: "time".into(),
            y: "y".into(),
            stime: "stime".into(),
            event: "event".into(),
        }
    }
}

/// One term of a design formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Intercept,
    Time,
    Covariate(String),
}

impl Term {
    pub fn parse(s: &str) -> Term {
        match s.trim() {
            "1" | "intercept" => Term::Intercept,
            "t" | "time" => Term::Time,
            other => Term::Covariate(other.to_string()),
        }
    }

    pub fn parse_list(s: &str) -> Vec<Term> {
        s.split([',', '+'])
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Term::parse)
            .collect()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "1"),
            Term::Time => write!(f, "t"),
            Term::Covariate(name) => write!(f, "{name}"),
        }
    }
}

/// Fixed-, random- and survival-design matrices evaluated on the data rows.
#[derive(Debug, Clone)]
pub struct Designs {
    pub p: usize,
    pub q: usize,
    pub g: usize,
    /// N x p, row-major.
    pub x: Vec<f64>,
    /// N x q, row-major.
    pub d: Vec<f64>,
    /// n x g, row-major.
    pub c: Vec<f64>,
    pub formula: Vec<Term>,
    pub re_formula: Vec<Term>,
    pub surv_formula: Vec<Term>,
}

/// Aligned longitudinal and survival data for `n` subjects.
///
/// Observations are stored struct-of-arrays, grouped by subject (dense index
/// order) and sorted by time within subject. Immutable once built; shared
/// read-only across chains.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub n: usize,
    /// Dense index -> original id string.
    pub ids: Vec<String>,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub subject_of: Vec<usize>,
    pub obs_range: Vec<Range<usize>>,
    pub m: Vec<usize>,
    pub surv_time: Vec<f64>,
    pub event: Vec<bool>,
    pub long_cov: Vec<(String, Vec<f64>)>,
    pub surv_cov: Vec<(String, Vec<f64>)>,
    pub designs: Option<Designs>,
}

/// A single invariant breach found by [`Dataset::validate`].
#[derive(Debug, Clone)]
pub struct Violation {
    pub subject: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.subject {
            Some(s) => write!(f, "subject {s}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

struct ParsedCsv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<ParsedCsv> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Schema {
            path: path.display().to_string(),
            column: "<empty file>".into(),
        })?
        .trim_end_matches('\r');
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(|s| s.trim().to_string()).collect());
    }
    Ok(ParsedCsv {
        header,
        rows,
    })
}

fn column_index(parsed: &ParsedCsv, path: &Path, name: &str) -> Result<usize> {
    parsed
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema {
            path: path.display().to_string(),
            column: name.to_string(),
        })
}

fn parse_cell(path: &Path, row: usize, column: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        value: value.to_string(),
    })?;
    if v.is_nan() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row,
            column: column.to_string(),
            value: value.to_string(),
        });
    }
    Ok(v)
}

/// Load and cross-validate the longitudinal/survival CSV pair.
pub fn load_csv(long_path: &Path, surv_path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let long = read_csv(long_path)?;
    let surv = read_csv(surv_path)?;

    let l_id = column_index(&long, long_path, &schema.id)?;
    let l_time = column_index(&long, long_path, &schema.time)?;
    let l_y = column_index(&long, long_path, &schema.y)?;
    let s_id = column_index(&surv, surv_path, &schema.id)?;
    let s_time = column_index(&surv, surv_path, &schema.stime)?;
    let s_event = column_index(&surv, surv_path, &schema.event)?;

    let long_cov_cols: Vec<(usize, String)> = long
        .header
        .iter()
        .enumerate()
        .filter(|(i, _)| ![l_id, l_time, l_y].contains(i))
        .map(|(i, name)| (i, name.clone()))
        .collect();
    let surv_cov_cols: Vec<(usize, String)> = surv
        .header
        .iter()
        .enumerate()
        .filter(|(i, _)| ![s_id, s_time, s_event].contains(i))
        .map(|(i, name)| (i, name.clone()))
        .collect();

    // Dense re-indexing in first-appearance order of the longitudinal file.
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    struct LongRow {
        subject: usize,
        t: f64,
        y: f64,
        cov: Vec<f64>,
    }
    let mut long_rows: Vec<LongRow> = Vec::with_capacity(long.rows.len());
    for (r, row) in long.rows.iter().enumerate() {
        let line = r + 2; // 1-based, plus header
        if row.len() != long.header.len() {
            return Err(Error::Parse {
                path: long_path.display().to_string(),
                row: line,
                column: "<row>".into(),
                value: format!("{} fields, expected {}", row.len(), long.header.len()),
            });
        }
        let id = row[l_id].clone();
        let subject = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            ids.len() - 1
        });
        let t = parse_cell(long_path, line, &schema.time, &row[l_time])?;
        let yv = parse_cell(long_path, line, &schema.y, &row[l_y])?;
        let mut cov = Vec::with_capacity(long_cov_cols.len());
        for (ci, name) in &long_cov_cols {
            cov.push(parse_cell(long_path, line, name, &row[*ci])?);
        }
        long_rows.push(LongRow {
            subject,
            t,
            y: yv,
            cov,
        });
    }

    let n = ids.len();
    let mut surv_time = vec![f64::NAN; n];
    let mut event = vec![false; n];
    let mut surv_cov_vals = vec![vec![f64::NAN; n]; surv_cov_cols.len()];
    let mut seen = vec![false; n];
    let mut orphans: Vec<String> = Vec::new();
    for (r, row) in surv.rows.iter().enumerate() {
        let line = r + 2;
        if row.len() != surv.header.len() {
            return Err(Error::Parse {
                path: surv_path.display().to_string(),
                row: line,
                column: "<row>".into(),
                value: format!("{} fields, expected {}", row.len(), surv.header.len()),
            });
        }
        let id = &row[s_id];
        let Some(&subject) = index.get(id) else {
            orphans.push(id.clone());
            continue;
        };
        if seen[subject] {
            return Err(Error::Consistency(format!(
                "subject `{id}` appears more than once in the survival file"
            )));
        }
        seen[subject] = true;
        surv_time[subject] = parse_cell(surv_path, line, &schema.stime, &row[s_time])?;
        let ev = parse_cell(surv_path, line, &schema.event, &row[s_event])?;
        if ev != 0.0 && ev != 1.0 {
            return Err(Error::Parse {
                path: surv_path.display().to_string(),
                row: line,
                column: schema.event.clone(),
                value: row[s_event].clone(),
            });
        }
        event[subject] = ev == 1.0;
        for (k, (ci, name)) in surv_cov_cols.iter().enumerate() {
            surv_cov_vals[k][subject] = parse_cell(surv_path, line, name, &row[*ci])?;
        }
    }
    let missing: Vec<String> = seen
        .iter()
        .enumerate()
        .filter(|(_, s)| !**s)
        .map(|(i, _)| ids[i].clone())
        .collect();
    if !missing.is_empty() || !orphans.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!(
                "subjects with longitudinal rows but no survival row: {}",
                missing.join(", ")
            ));
        }
        if !orphans.is_empty() {
            parts.push(format!(
                "subjects with a survival row but no longitudinal rows: {}",
                orphans.join(", ")
            ));
        }
        return Err(Error::Consistency(parts.join("; ")));
    }

    // Group by subject, sort by time within subject.
    let mut order: Vec<usize> = (0..long_rows.len()).collect();
    order.sort_by(|&a, &b| {
        long_rows[a]
            .subject
            .cmp(&long_rows[b].subject)
            .then(long_rows[a].t.total_cmp(&long_rows[b].t))
    });

    let total = long_rows.len();
    let mut times = Vec::with_capacity(total);
    let mut y = Vec::with_capacity(total);
    let mut subject_of = Vec::with_capacity(total);
    let mut long_cov: Vec<(String, Vec<f64>)> = long_cov_cols
        .iter()
        .map(|(_, name)| (name.clone(), Vec::with_capacity(total)))
        .collect();
    for &i in &order {
        let row = &long_rows[i];
        times.push(row.t);
        y.push(row.y);
        subject_of.push(row.subject);
        for (k, (_, col)) in long_cov.iter_mut().enumerate() {
            col.push(row.cov[k]);
        }
    }
    let (obs_range, m) = ranges_from_subjects(&subject_of, n);

    let surv_cov = surv_cov_cols
        .into_iter()
        .map(|(_, name)| name)
        .zip(surv_cov_vals)
        .collect();

    Ok(Dataset {
        n,
        ids,
        times,
        y,
        subject_of,
        obs_range,
        m,
        surv_time,
        event,
        long_cov,
        surv_cov,
        designs: None,
    })
}

fn ranges_from_subjects(subject_of: &[usize], n: usize) -> (Vec<Range<usize>>, Vec<usize>) {
    let mut obs_range = vec![0..0; n];
    let mut m = vec![0usize; n];
    let mut start = 0;
    for i in 0..subject_of.len() {
        m[subject_of[i]] += 1;
        if i + 1 == subject_of.len() || subject_of[i + 1] != subject_of[i] {
            obs_range[subject_of[i]] = start..i + 1;
            start = i + 1;
        }
    }
    (obs_range, m)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the dataset back out as the same CSV pair (17 significant digits, so
/// a reload round-trips within one ulp).
pub fn write_csv(ds: &Dataset, long_path: &Path, surv_path: &Path) -> Result<()> {
    let open = |p: &Path| -> Result<std::io::BufWriter<std::fs::File>> {
        Ok(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| Error::io(p.display().to_string(), e))?,
        ))
    };
    let werr = |p: &Path, e: std::io::Error| Error::io(p.display().to_string(), e);

    let mut lf = open(long_path)?;
    let mut header = vec!["id".to_string(), "time".into(), "y".into()];
    header.extend(ds.long_cov.iter().map(|(name, _)| name.clone()));
    writeln!(lf, "{}", header.join(",")).map_err(|e| werr(long_path, e))?;
    for i in 0..ds.times.len() {
        let mut fields = vec![
            ds.ids[ds.subject_of[i]].clone(),
            fmt17(ds.times[i]),
            fmt17(ds.y[i]),
        ];
        fields.extend(ds.long_cov.iter().map(|(_, col)| fmt17(col[i])));
        writeln!(lf, "{}", fields.join(",")).map_err(|e| werr(long_path, e))?;
    }
    lf.flush().map_err(|e| werr(long_path, e))?;

    let mut sf = open(surv_path)?;
    let mut header = vec!["id".to_string(), "stime".into(), "event".into()];
    header.extend(ds.surv_cov.iter().map(|(name, _)| name.clone()));
    writeln!(sf, "{}", header.join(",")).map_err(|e| werr(surv_path, e))?;
    for s in 0..ds.n {
        let mut fields = vec![
            ds.ids[s].clone(),
            fmt17(ds.surv_time[s]),
            if ds.event[s] { "1".into() } else { "0".into() },
        ];
        fields.extend(ds.surv_cov.iter().map(|(_, col)| fmt17(col[s])));
        writeln!(sf, "{}", fields.join(",")).map_err(|e| werr(surv_path, e))?;
    }
    sf.flush().map_err(|e| werr(surv_path, e))?;
    Ok(())
}

impl Dataset {
    /// Assemble a dataset from in-memory parts (the simulator's path).
    /// Observations must already be grouped by subject and time-sorted.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        ids: Vec<String>,
        times: Vec<f64>,
        y: Vec<f64>,
        subject_of: Vec<usize>,
        surv_time: Vec<f64>,
        event: Vec<bool>,
        long_cov: Vec<(String, Vec<f64>)>,
        surv_cov: Vec<(String, Vec<f64>)>,
    ) -> Dataset {
        let n = ids.len();
        let (obs_range, m) = ranges_from_subjects(&subject_of, n);
        Dataset {
            n,
            ids,
            times,
            y,
            subject_of,
            obs_range,
            m,
            surv_time,
            event,
            long_cov,
            surv_cov,
            designs: None,
        }
    }

    pub fn total_obs(&self) -> usize {
        self.times.len()
    }

    /// Report every invariant violation; an empty list means the dataset is
    /// coherent. Never mutates.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.m.iter().sum::<usize>() != self.total_obs() {
            out.push(Violation {
                subject: None,
                message: format!(
                    "per-subject counts sum to {}, but {} observations are stored",
                    self.m.iter().sum::<usize>(),
                    self.total_obs()
                ),
            });
        }
        for s in 0..self.n {
            if self.m[s] == 0 {
                out.push(Violation {
                    subject: Some(s),
                    message: "no longitudinal observations".into(),
                });
                continue;
            }
            let range = self.obs_range[s].clone();
            let mut prev = f64::NEG_INFINITY;
            let mut t_max = f64::NEG_INFINITY;
            for i in range {
                let t = self.times[i];
                if !t.is_finite() || t < 0.0 {
                    out.push(Violation {
                        subject: Some(s),
                        message: format!("observation time {t} is negative or non-finite"),
                    });
                }
                if !self.y[i].is_finite() {
                    out.push(Violation {
                        subject: Some(s),
                        message: format!("non-finite response at t = {t}"),
                    });
                }
                for (name, col) in &self.long_cov {
                    if !col[i].is_finite() {
                        out.push(Violation {
                            subject: Some(s),
                            message: format!("non-finite covariate `{name}` at t = {t}"),
                        });
                    }
                }
                if t < prev {
                    out.push(Violation {
                        subject: Some(s),
                        message: format!("times decrease ({prev} then {t})"),
                    });
                }
                prev = t;
                t_max = t_max.max(t);
            }
            let st = self.surv_time[s];
            if !st.is_finite() || st <= 0.0 {
                out.push(Violation {
                    subject: Some(s),
                    message: format!("survival time {st} is not positive"),
                });
            } else if t_max > st {
                out.push(Violation {
                    subject: Some(s),
                    message: format!(
                        "observation at t = {t_max} lies after the survival time {st}"
                    ),
                });
            }
            for (name, col) in &self.surv_cov {
                if !col[s].is_finite() {
                    out.push(Violation {
                        subject: Some(s),
                        message: format!("non-finite baseline covariate `{name}`"),
                    });
                }
            }
        }
        out
    }

    fn long_col(&self, name: &str) -> Option<&[f64]> {
        self.long_cov
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }

    fn surv_col(&self, name: &str) -> Option<&[f64]> {
        self.surv_cov
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }

    /// Populate the fixed-, random- and survival-effect design matrices.
    ///
    /// Deterministic and idempotent. Warns (does not fail) when the random
    /// effect terms are not a subset of the fixed ones.
    pub fn build_designs(
        &mut self,
        formula: &[Term],
        re_formula: &[Term],
        surv_formula: &[Term],
    ) -> Result<()> {
        for term in formula.iter().chain(re_formula) {
            if let Term::Covariate(name) = term {
                if self.long_col(name).is_none() {
                    return Err(Error::Formula(name.clone()));
                }
            }
        }
        for term in surv_formula {
            match term {
                Term::Covariate(name) => {
                    if self.surv_col(name).is_none() {
                        return Err(Error::Formula(name.clone()));
                    }
                }
                Term::Time => {
                    return Err(Error::Formula(
                        "t (survival design uses baseline terms only)".into(),
                    ))
                }
                Term::Intercept => {}
            }
        }
        if !re_formula.iter().all(|t| formula.contains(t)) {
            log::warn!("random-effect terms are not a subset of the fixed-effect terms");
        }

        let p = formula.len();
        let q = re_formula.len();
        let g = surv_formula.len();
        let total = self.total_obs();
        let mut x = vec![0.0; total * p];
        let mut d = vec![0.0; total * q];
        for i in 0..total {
            for (j, term) in formula.iter().enumerate() {
                x[i * p + j] = self.long_term_value(term, i);
            }
            for (j, term) in re_formula.iter().enumerate() {
                d[i * q + j] = self.long_term_value(term, i);
            }
        }
        let mut c = vec![0.0; self.n * g];
        for s in 0..self.n {
            for (j, term) in surv_formula.iter().enumerate() {
                c[s * g + j] = match term {
                    Term::Intercept => 1.0,
                    Term::Time => unreachable!("rejected above"),
                    Term::Covariate(name) => self.surv_col(name).unwrap()[s],
                };
            }
        }
        self.designs = Some(Designs {
            p,
            q,
            g,
            x,
            d,
            c,
            formula: formula.to_vec(),
            re_formula: re_formula.to_vec(),
            surv_formula: surv_formula.to_vec(),
        });
        Ok(())
    }

    fn long_term_value(&self, term: &Term, row: usize) -> f64 {
        match term {
            Term::Intercept => 1.0,
            Term::Time => self.times[row],
            Term::Covariate(name) => self.long_col(name).unwrap()[row],
        }
    }

    /// Evaluate a longitudinal formula at an arbitrary time for one subject.
    ///
    /// Intercept and time terms are exact; covariate terms are carried forward
    /// from the last observation at or before `t` (first observation before
    /// any measurement), the usual step-function convention for exogenous
    /// covariates in the hazard.
    pub fn design_at_time(&self, terms: &[Term], subject: usize, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), terms.len());
        let range = self.obs_range[subject].clone();
        for (j, term) in terms.iter().enumerate() {
            out[j] = match term {
                Term::Intercept => 1.0,
                Term::Time => t,
                Term::Covariate(name) => {
                    let col = self.long_col(name).unwrap();
                    let mut value = col[range.start];
                    for i in range.clone() {
                        if self.times[i] <= t {
                            value = col[i];
                        } else {
                            break;
                        }
                    }
                    value
                }
            };
        }
    }

    pub fn designs(&self) -> Result<&Designs> {
        self.designs
            .as_ref()
            .ok_or_else(|| Error::Usage("designs not built; call build_designs first".into()))
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        let d = self.designs.as_ref().expect("designs built");
        &d.x[i * d.p..(i + 1) * d.p]
    }

    pub fn d_row(&self, i: usize) -> &[f64] {
        let d = self.designs.as_ref().expect("designs built");
        &d.d[i * d.q..(i + 1) * d.q]
    }

    pub fn c_row(&self, s: usize) -> &[f64] {
        let d = self.designs.as_ref().expect("designs built");
        &d.c[s * d.g..(s + 1) * d.g]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("jm_core_data_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    const LONG: &str = "id,time,y,creat\n\
        s1,0.0,1.2,0.5\n\
        s1,1.0,1.5,0.6\n\
        s1,2.0,1.9,0.7\n\
        s2,0.5,0.8,0.4\n\
        s2,1.5,0.9,0.4\n\
        s3,0.0,2.0,0.9\n\
        s3,2.5,2.4,1.0\n";
    const SURV: &str = "id,stime,event,X\n\
        s1,2.5,1,1\n\
        s2,3.0,0,0\n\
        s3,2.5,1,1\n";

    #[test]
    fn loads_well_formed_pair() {
        let lp = write_tmp("ok_long.csv", LONG);
        let sp = write_tmp("ok_surv.csv", SURV);
        let ds = load_csv(&lp, &sp, &CsvSchema::default()).unwrap();
        assert_eq!(ds.n, 3);
        assert_eq!(ds.total_obs(), 7);
        assert_eq!(ds.m, vec![3, 2, 2]);
        assert_eq!(ds.ids, vec!["s1", "s2", "s3"]);
        assert!(ds.validate().is_empty());
    }

    #[test]
    fn missing_event_column_is_schema_error() {
        let lp = write_tmp("se_long.csv", LONG);
        let sp = write_tmp("se_surv.csv", "id,stime,X\ns1,2.5,1\ns2,3.0,0\ns3,2.5,1\n");
        match load_csv(&lp, &sp, &CsvSchema::default()) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "event"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn subject_missing_from_survival_is_consistency_error() {
        let lp = write_tmp(
            "co_long.csv",
            "id,time,y\ns1,0.0,1.0\ns5,0.0,2.0\ns5,1.0,2.2\n",
        );
        let sp = write_tmp("co_surv.csv", "id,stime,event\ns1,2.0,1\n");
        match load_csv(&lp, &sp, &CsvSchema::default()) {
            Err(Error::Consistency(msg)) => assert!(msg.contains("s5"), "{msg}"),
            other => panic!("expected consistency error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let lp = write_tmp("pe_long.csv", "id,time,y\ns1,0.0,1.0\ns1,oops,1.1\n");
        let sp = write_tmp("pe_surv.csv", "id,stime,event\ns1,2.0,1\n");
        match load_csv(&lp, &sp, &CsvSchema::default()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "time");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn validate_flags_observation_after_survival_time() {
        let lp = write_tmp("va_long.csv", LONG);
        let sp = write_tmp("va_surv.csv", SURV);
        let mut ds = load_csv(&lp, &sp, &CsvSchema::default()).unwrap();
        ds.surv_time[2] = 1.0; // s3 has an observation at 2.5
        let violations = ds.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].subject, Some(2));
        assert!(violations[0].message.contains("2.5"));
    }

    #[test]
    fn validate_flags_decreasing_times() {
        let lp = write_tmp("vo_long.csv", LONG);
        let sp = write_tmp("vo_surv.csv", SURV);
        let mut ds = load_csv(&lp, &sp, &CsvSchema::default()).unwrap();
        ds.times.swap(0, 2); // break ordering inside subject 0
        assert!(ds
            .validate()
            .iter()
            .any(|v| v.subject == Some(0) && v.message.contains("decrease")));
    }

    #[test]
    fn build_designs_intercept_and_slope() {
        let lp = write_tmp("bd_long.csv", LONG);
        let sp = write_tmp("bd_surv.csv", SURV);
        let mut ds = load_csv(&lp, &sp, &CsvSchema::default()).unwrap();
        ds.build_designs(
            &[Term::Intercept, Term::Time],
            &[Term::Intercept, Term::Time],
            &[Term::Covariate("X".into())],
        )
        .unwrap();
        let d = ds.designs().unwrap();
        assert_eq!((d.p, d.q, d.g), (2, 2, 1));
        assert_eq!(ds.x_row(1), &[1.0, 1.0]);
        assert_eq!(ds.d_row(1), &[1.0, 1.0]);
        assert_eq!(ds.c_row(0), &[1.0]);
        assert_eq!(ds.c_row(1), &[0.0]);

        // deterministic + idempotent
        let before = d.x.clone();
        ds.build_designs(
            &[Term::Intercept, Term::Time],
            &[Term::Intercept, Term::Time],
            &[Term::Covariate("X".into())],
        )
        .unwrap();
        assert_eq!(ds.designs().unwrap().x, before);
    }

    #[test]
    fn unknown_formula_column_errors() {
        let lp = write_tmp("uf_long.csv", LONG);
        let sp = write_tmp("uf_surv.csv", SURV);
        let mut ds = load_csv(&lp, &sp, &CsvSchema::default()).unwrap();
        match ds.build_designs(&[Term::Covariate("creatx".into())], &[], &[]) {
            Err(Error::Formula(name)) => assert_eq!(name, "creatx"),
            other => panic!("expected formula error, got {other:?}"),
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let lp = write_tmp("rt_long.csv", LONG);
        let sp = write_tmp("rt_surv.csv", SURV);
        let mut ds = load_csv(&lp, &sp, &CsvSchema::default()).unwrap();
        // Perturb values to exercise full precision.
        ds.y[0] = 1.0 / 3.0;
        ds.times[3] = 0.987_654_321_987_654_3; // stays inside subject order
        ds.surv_time[1] = 2.0 / 7.0 + 3.0;
        let lp2 = std::env::temp_dir().join("jm_core_data_tests/rt2_long.csv");
        let sp2 = std::env::temp_dir().join("jm_core_data_tests/rt2_surv.csv");
        write_csv(&ds, &lp2, &sp2).unwrap();
        let ds2 = load_csv(&lp2, &sp2, &CsvSchema::default()).unwrap();
        assert_eq!(ds.times, ds2.times);
        assert_eq!(ds.y, ds2.y);
        assert_eq!(ds.surv_time, ds2.surv_time);
        assert_eq!(ds.event, ds2.event);
        assert_eq!(ds.ids, ds2.ids);
        assert_eq!(ds.long_cov, ds2.long_cov);
    }

    #[test]
    fn design_at_time_carries_covariates_forward() {
        let lp = write_tmp("dt_long.csv", LONG);
        let sp = write_tmp("dt_surv.csv", SURV);
        let mut ds = load_csv(&lp, &sp, &CsvSchema::default()).unwrap();
        ds.build_designs(
            &[Term::Intercept, Term::Time, Term::Covariate("creat".into())],
            &[Term::Intercept],
            &[],
        )
        .unwrap();
        let terms = ds.designs().unwrap().formula.clone();
        let mut out = vec![0.0; 3];
        ds.design_at_time(&terms, 0, 1.5, &mut out);
        assert_eq!(out, vec![1.0, 1.5, 0.6]); // last creat value at or before 1.5
        ds.design_at_time(&terms, 0, -0.5, &mut out);
        assert_eq!(out, vec![1.0, -0.5, 0.5]); // before first obs: first value
    }
}
