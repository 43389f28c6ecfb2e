//! Snapshot CSV: header `axis0[,axis1,...],re,im`, one row per grid point in
//! row-major order, 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use super::{Frame, Grid, Wavefunction};
use crate::error::{Error, Result};
use crate::output::write_atomic;

pub fn snapshot_to_string(psi: &Wavefunction) -> String {
    let grid = psi.grid();
    let dims = grid.dims();
    let mut out = String::with_capacity(grid.len() * (dims + 2) * 25);
    for a in 0..dims {
        let _ = write!(out, "axis{a},");
    }
    out.push_str("re,im\n");
    let mut p = vec![0.0; dims];
    for (i, z) in psi.amplitudes().iter().enumerate() {
        grid.point_into(i, &mut p);
        for x in &p {
            let _ = write!(out, "{x:.16e},");
        }
        let _ = writeln!(out, "{:.16e},{:.16e}", z.re, z.im);
    }
    out
}

pub fn write_snapshot(path: &Path, psi: &Wavefunction) -> Result<()> {
    write_atomic(path, snapshot_to_string(psi).as_bytes())
}

/// Load a snapshot onto `grid`. Coordinates in the file must match the grid
/// points to 1e-9 relative to the spacing.
pub fn read_snapshot(path: &Path, grid: Arc<Grid>, frame: Frame, time: f64) -> Result<Wavefunction> {
    let text = std::fs::read_to_string(path)?;
    parse_snapshot(&text, grid, frame, time)
}

pub(crate) fn parse_snapshot(text: &str, grid: Arc<Grid>, frame: Frame, time: f64) -> Result<Wavefunction> {
    let dims = grid.dims();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty snapshot file".into()))?;
    let mut expected: Vec<String> = (0..dims).map(|a| format!("axis{a}")).collect();
    expected.push("re".into());
    expected.push("im".into());
    if header.trim().split(',').map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Config(format!("snapshot header {header:?} does not match a {dims}-axis grid")));
    }
    let mut amps = Vec::with_capacity(grid.len());
    let mut p = vec![0.0; dims];
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        if row >= grid.len() {
            return Err(Error::Config("snapshot has more rows than grid points".into()));
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("snapshot row {row}: {e}")))?;
        if fields.len() != dims + 2 {
            return Err(Error::Config(format!("snapshot row {row}: expected {} fields", dims + 2)));
        }
        grid.point_into(row, &mut p);
        for a in 0..dims {
            if (fields[a] - p[a]).abs() > 1e-9 * grid.axis(a).dx {
                return Err(Error::GridMismatch(format!(
                    "snapshot row {row} axis {a}: coordinate {} vs grid {}",
                    fields[a], p[a]
                )));
            }
        }
        amps.push(Complex64::new(fields[dims], fields[dims + 1]));
    }
    if amps.len() != grid.len() {
        return Err(Error::Config(format!("snapshot has {} rows, grid has {} points", amps.len(), grid.len())));
    }
    Wavefunction::new(grid, amps, frame, time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;

    #[test]
    fn header_and_row_order() {
        let g = Arc::new(Grid::new(&[AxisSpec::periodic(8, 0.0, 1.0), AxisSpec::periodic(8, 0.0, 2.0)]).unwrap());
        let psi = Wavefunction::from_fn(g.clone(), Frame::Original, 0.0, |x| Complex64::new(x[0], x[1])).unwrap();
        let s = snapshot_to_string(&psi);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("axis0,axis1,re,im"));
        let second: Vec<f64> = lines.nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(second, vec![0.0, 0.25, 0.0, 0.25]);
    }

    #[test]
    fn text_roundtrip_is_bit_exact() {
        let g = Arc::new(Grid::new(&[AxisSpec::periodic(16, -3.0, 3.0)]).unwrap());
        let psi = Wavefunction::from_fn(g.clone(), Frame::Original, 0.0, |x| {
            Complex64::from_polar((-x[0] * x[0] / 3.0).exp(), 1.0 / 3.0 * x[0])
        })
        .unwrap();
        let back = parse_snapshot(&snapshot_to_string(&psi), g, Frame::Original, 0.0).unwrap();
        for (a, b) in psi.amplitudes().iter().zip(back.amplitudes()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn rejects_wrong_grid() {
        let g = Arc::new(Grid::new(&[AxisSpec::periodic(16, -3.0, 3.0)]).unwrap());
        let psi = Wavefunction::from_fn(g, Frame::Original, 0.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        let other = Arc::new(Grid::new(&[AxisSpec::periodic(16, -4.0, 4.0)]).unwrap());
        assert!(parse_snapshot(&snapshot_to_string(&psi), other, Frame::Original, 0.0).is_err());
    }
}
