//! Trigonometric (Fourier-series) interpolation on periodic grids.
//!
//! The interpolant is the unique band-limited function whose modes are the
//! grid's FFT ordering; the Nyquist mode enters as a cosine so the
//! interpolant is the minimal-oscillation one. Targets outside the simulated
//! box are rejected, never wrapped.

use num_complex::Complex64;

use super::{Grid, Wavefunction};
use crate::error::{Error, Result};
use crate::par;

fn require_periodic(grid: &Grid) -> Result<()> {
    if grid.is_periodic() {
        Ok(())
    } else {
        Err(Error::Unsupported("interpolation on a dirichlet-offset grid".into()))
    }
}

/// Normalized Fourier coefficients of `psi`.
fn coefficients(psi: &Wavefunction) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    let sp = grid.spectral()?;
    let mut c = sp.spectrum(psi.amplitudes());
    let scale = 1.0 / grid.len() as f64;
    par::for_each_indexed_mut(&mut c, |_, z| *z *= scale);
    Ok(c)
}

/// Basis row `e_j(x)` for one axis.
fn basis_row(grid: &Grid, axis: usize, x: f64, k: &[f64]) -> Vec<Complex64> {
    let ax = grid.axis(axis);
    let r = x - ax.x_min;
    let nyquist = if ax.n.is_multiple_of(2) { Some(ax.n / 2) } else { None };
    k.iter()
        .enumerate()
        .map(|(j, &kj)| {
            if Some(j) == nyquist {
                Complex64::new((kj * r).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, kj * r)
            }
        })
        .collect()
}

/// Evaluate the trigonometric interpolant of `psi` at arbitrary points.
pub fn interpolate(psi: &Wavefunction, targets: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    require_periodic(grid)?;
    for t in targets {
        if t.len() != grid.dims() {
            return Err(Error::InvalidArgument(format!(
                "target has {} coordinates, grid has {} axes",
                t.len(),
                grid.dims()
            )));
        }
        grid.check_inside(t)?;
    }
    let coeffs = coefficients(psi)?;
    let sp = grid.spectral()?;
    let dims = grid.dims();
    let strides = grid.strides();
    let shape = grid.shape();
    Ok(par::map_indexed(targets.len(), |p| {
        let rows: Vec<Vec<Complex64>> = (0..dims)
            .map(|a| basis_row(grid, a, targets[p][a], sp.k(a)))
            .collect();
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut w = *c;
                for a in 0..dims {
                    w *= rows[a][(i / strides[a]) % shape[a]];
                }
                w
            })
            .sum()
    }))
}

/// Evaluate the interpolant on the tensor product of per-axis coordinate
/// lists. Output is row-major over `coords`. Costs `sum_a m_a * N` instead of
/// `prod_a m_a * N` for the pointwise route.
pub fn interpolate_tensor(psi: &Wavefunction, coords: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    require_periodic(grid)?;
    if coords.len() != grid.dims() {
        return Err(Error::InvalidArgument(format!(
            "{} coordinate lists for {} axes",
            coords.len(),
            grid.dims()
        )));
    }
    for (a, list) in coords.iter().enumerate() {
        let ax = grid.axis(a);
        let slack = 1e-12 * ax.length();
        if let Some(&v) = list.iter().find(|&&v| !(v >= ax.x_min - slack && v <= ax.x_max + slack)) {
            return Err(Error::OutOfDomain { axis: a, value: v, lo: ax.x_min, hi: ax.x_max });
        }
    }
    let sp = grid.spectral()?;
    let mut current = coefficients(psi)?;
    let mut shape = grid.shape();
    for (a, list) in coords.iter().enumerate() {
        let n = shape[a];
        let m = list.len();
        let table: Vec<Vec<Complex64>> =
            par::map_indexed(m, |t| basis_row(grid, a, list[t], sp.k(a)));
        let inner: usize = shape[a + 1..].iter().product();
        let src = &current;
        let next = par::map_indexed(current.len() / n * m, |flat| {
            let i = flat % inner;
            let t = (flat / inner) % m;
            let o = flat / (inner * m);
            let base = o * n * inner + i;
            table[t]
                .iter()
                .enumerate()
                .map(|(j, e)| e * src[base + j * inner])
                .sum()
        });
        current = next;
        shape[a] = m;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AxisSpec, Frame};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(specs: &[AxisSpec]) -> Arc<Grid> {
        Arc::new(Grid::new(specs).unwrap())
    }

    #[test]
    fn reproduces_samples_at_grid_points() {
        let g = grid(&[AxisSpec::periodic(32, -3.0, 3.0)]);
        let psi = Wavefunction::from_fn(g.clone(), Frame::Psi2, 0.0, |x| {
            Complex64::new((-x[0] * x[0]).exp(), 0.3 * x[0])
        })
        .unwrap();
        let vals = interpolate(&psi, &g.points()).unwrap();
        for (v, s) in vals.iter().zip(psi.amplitudes()) {
            assert!((v - s).norm() < 1e-13);
        }
    }

    #[test]
    fn single_mode_is_exact_between_points() {
        let g = grid(&[AxisSpec::periodic(16, 0.0, 2.0 * PI)]);
        let psi = Wavefunction::from_fn(g.clone(), Frame::Original, 0.0, |x| {
            Complex64::from_polar(1.0, 3.0 * x[0])
        })
        .unwrap();
        let dx = g.axis(0).dx;
        let targets: Vec<Vec<f64>> = (0..16).map(|j| vec![(j as f64 + 0.5) * dx]).collect();
        let vals = interpolate(&psi, &targets).unwrap();
        for (v, t) in vals.iter().zip(&targets) {
            assert!((v - Complex64::from_polar(1.0, 3.0 * t[0])).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_off_grid_matches_closed_form() {
        let g = grid(&[AxisSpec::periodic(256, -15.0, 15.0)]);
        let f = |x: f64| Complex64::from_polar((-(x - 0.4) * (x - 0.4) / 2.0).exp(), 0.7 * x);
        let psi = Wavefunction::from_fn(g.clone(), Frame::Original, 0.0, |x| f(x[0])).unwrap();
        let targets: Vec<Vec<f64>> = (0..40).map(|j| vec![-5.0 + 0.2537 * j as f64]).collect();
        let vals = interpolate(&psi, &targets).unwrap();
        for (v, t) in vals.iter().zip(&targets) {
            assert!((v - f(t[0])).norm() < 1e-9);
        }
    }

    #[test]
    fn tensor_route_matches_pointwise_route() {
        let g = grid(&[AxisSpec::periodic(16, -6.0, 6.0), AxisSpec::periodic(12, -5.0, 5.0)]);
        let psi = Wavefunction::from_fn(g.clone(), Frame::Original, 0.0, |x| {
            Complex64::from_polar((-(x[0] * x[0] + 0.5 * x[1] * x[1]) / 2.0).exp(), x[0] - 0.3 * x[1])
        })
        .unwrap();
        let c0 = vec![-1.1, 0.05, 2.7];
        let c1 = vec![-4.0, 0.3, 1.9, 3.3];
        let tensor = interpolate_tensor(&psi, &[c0.clone(), c1.clone()]).unwrap();
        let pts: Vec<Vec<f64>> =
            c0.iter().flat_map(|&a| c1.iter().map(move |&b| vec![a, b])).collect();
        let direct = interpolate(&psi, &pts).unwrap();
        for (a, b) in tensor.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn refuses_extrapolation_and_dirichlet() {
        let g = grid(&[AxisSpec::periodic(16, -1.0, 1.0)]);
        let psi = Wavefunction::from_fn(g, Frame::Original, 0.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(interpolate(&psi, &[vec![1.5]]), Err(Error::OutOfDomain { .. })));
        assert!(interpolate(&psi, &[vec![1.0]]).is_ok());
        let gd = grid(&[AxisSpec::dirichlet(16, -1.0, 1.0)]);
        let psi = Wavefunction::from_fn(gd, Frame::Original, 0.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(interpolate(&psi, &[vec![0.1]]), Err(Error::Unsupported(_))));
    }
}
