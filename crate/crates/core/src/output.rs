//! Atomic file emission and the CSV layouts shared by the run modes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::propagation::ObservableRow;

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file_name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Format a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,norm,mean_x0[,...],mean_p0[,...],energy,leak`; `energy` is empty
/// where undefined.
pub fn observables_csv(rows: &[ObservableRow], dims: usize) -> String {
    let mut head = vec!["t".to_string(), "norm".to_string()];
    head.extend((0..dims).map(|a| format!("mean_x{a}")));
    head.extend((0..dims).map(|a| format!("mean_p{a}")));
    head.push("energy".into());
    head.push("leak".into());
    let mut out = head.join(",");
    out.push('\n');
    for r in rows {
        let mut cells = vec![fmt_f64(r.t), fmt_f64(r.norm)];
        cells.extend(r.mean_x.iter().map(|&v| fmt_f64(v)));
        cells.extend(r.mean_p.iter().map(|&v| fmt_f64(v)));
        cells.push(r.energy.map(fmt_f64).unwrap_or_default());
        cells.push(fmt_f64(r.leak));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One reconciled time of a two-path comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    /// Relative to the direct state.
    pub l2_error: f64,
    /// Absolute, pointwise.
    pub max_error: f64,
    pub norm_direct: f64,
    pub norm_mapped: f64,
}

pub const COMPARISON_HEADER: &str = "t,l2_error,max_error,norm_direct,norm_mapped";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let cells = [r.t, r.l2_error, r.max_error, r.norm_direct, r.norm_mapped].map(fmt_f64);
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Generic table writer for the small study outputs.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
