use std::path::Path;

use super::RunRecord;
use crate::error::{Error, Result};

const FIXED: [&str; 8] = [
    "t",
    "beta",
    "err_max",
    "err_proj_max",
    "err_bound_max",
    "ham_err_max",
    "ham_drift_truth",
    "ham_drift_rec",
];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).map_err(|e| format_error(path, e))
}

fn format_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Column names for `m` sensors in `dim` dimensions.
pub fn csv_header(m: usize, dim: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    for i in 1..=m {
        h.push(format!("s{i}_x"));
        if dim == 2 {
            h.push(format!("s{i}_y"));
        }
    }
    h
}

/// One row per record. Failure rows carry `NaN` errors. An empty stream
/// writes the fixed columns only.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let (m, dim) = records
        .first()
        .map(|r| (r.sensors.len(), r.sensors.dim))
        .unwrap_or((0, 1));
    let mut w = writer(path)?;
    let fe = |e| format_error(path, e);
    w.write_record(csv_header(m, dim)).map_err(fe)?;
    for r in records {
        let e = r.errors;
        let pick = |f: fn(&crate::pbdw::SweepMax) -> f64| e.as_ref().map(f).unwrap_or(f64::NAN);
        let mut row = vec![
            num(r.t),
            num(r.beta),
            num(pick(|s| s.err)),
            num(pick(|s| s.proj_err)),
            num(pick(|s| s.bound)),
            num(pick(|s| s.ham_err)),
            num(pick(|s| s.ham_drift_truth)),
            num(pick(|s| s.ham_drift_rec)),
        ];
        for p in &r.sensors.positions {
            row.push(num(p[0]));
            if dim == 2 {
                row.push(num(p[1]));
            }
        }
        w.write_record(&row).map_err(fe)?;
    }
    w.flush()?;
    Ok(())
}

/// Ascent iterations of every assimilation time.
pub fn emit_ascent_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let fe = |e| format_error(path, e);
    w.write_record(["t", "iteration", "beta_sq", "alpha", "grad_norm"]).map_err(fe)?;
    for r in records {
        for a in &r.ascent {
            w.write_record([
                num(r.t),
                a.iteration.to_string(),
                num(a.beta_sq),
                num(a.alpha),
                num(a.grad_norm),
            ])
            .map_err(fe)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-parameter diagnostics for the configured true parameters.
pub fn emit_true_theta_csv(records: &[RunRecord], thetas: &[[f64; 2]], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let fe = |e| format_error(path, e);
    w.write_record([
        "t", "theta_1", "theta_2", "err", "err_proj", "err_bound", "ham_truth", "ham_rec", "ham_err",
    ])
    .map_err(fe)?;
    for r in records {
        for (th, rep) in thetas.iter().zip(&r.true_theta) {
            w.write_record([
                num(r.t),
                num(th[0]),
                num(th[1]),
                num(rep.err),
                num(rep.proj_err),
                num(rep.bound),
                num(rep.ham_truth),
                num(rep.ham_rec),
                num(rep.ham_err),
            ])
            .map_err(fe)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Header and numeric rows of a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| format_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_error(path, e))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("{s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
