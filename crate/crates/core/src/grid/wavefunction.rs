use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Grid, Topology};
use crate::error::{Error, Result};
use crate::par;

/// Which member of the transformation chain a state represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// The physical wavefunction, time is the physical `t`.
    Original,
    /// After the coordinate/time rescaling; time is the transformed `t'`.
    Psi1,
    /// The dual frame evolving under the time-independent Hamiltonian; time is `t'`.
    Psi2,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::Original => "original",
            Frame::Psi1 => "psi1",
            Frame::Psi2 => "psi2",
        })
    }
}

/// `hbar` and one mass per particle.
///
/// Particles own consecutive grid axes in equal groups: with `N` masses on a
/// `D`-axis grid each particle has `D / N` axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "unit_masses")]
    pub masses: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn unit_masses() -> Vec<f64> {
    vec![1.0]
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants { hbar: 1.0, masses: vec![1.0] }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, masses: Vec<f64>) -> Result<Self> {
        let c = PhysicalConstants { hbar, masses };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {}", self.hbar)));
        }
        if self.masses.is_empty() {
            return Err(Error::InvalidArgument("at least one mass is required".into()));
        }
        if let Some(m) = self.masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidArgument(format!("masses must be positive, got {m}")));
        }
        Ok(())
    }

    pub fn particles(&self) -> usize {
        self.masses.len()
    }

    /// Axes per particle on a `dims`-axis grid.
    pub fn particle_dim(&self, dims: usize) -> Result<usize> {
        let n = self.masses.len();
        if n == 0 || !dims.is_multiple_of(n) {
            return Err(Error::InvalidArgument(format!(
                "{dims} grid axes cannot be split evenly among {n} particles"
            )));
        }
        Ok(dims / n)
    }

    /// Mass attached to each grid axis.
    pub fn axis_masses(&self, dims: usize) -> Result<Vec<f64>> {
        let d = self.particle_dim(dims)?;
        Ok((0..dims).map(|a| self.masses[a / d]).collect())
    }
}

/// Complex amplitudes on a grid, tagged with frame and time.
#[derive(Clone, Debug)]
pub struct Wavefunction {
    grid: Arc<Grid>,
    amplitudes: Vec<Complex64>,
    pub frame: Frame,
    pub time: f64,
}

impl Wavefunction {
    pub fn new(grid: Arc<Grid>, amplitudes: Vec<Complex64>, frame: Frame, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        if let Some(i) = amplitudes.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite amplitude at index {i}")));
        }
        Ok(Wavefunction { grid, amplitudes, frame, time })
    }

    /// Sample `f` at every grid point.
    pub fn from_fn<F>(grid: Arc<Grid>, frame: Frame, time: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64 + Sync + Send,
    {
        let g = grid.clone();
        let amps = par::map_indexed(grid.len(), move |i| f(&g.point(i)));
        Self::new(grid, amps, frame, time)
    }

    /// Crate-internal constructor for amplitudes already known to be finite.
    pub(crate) fn from_parts(grid: Arc<Grid>, amplitudes: Vec<Complex64>, frame: Frame, time: f64) -> Self {
        debug_assert_eq!(amplitudes.len(), grid.len());
        Wavefunction { grid, amplitudes, frame, time }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Same grid, frame and time, new amplitudes.
    pub fn with_amplitudes(&self, amplitudes: Vec<Complex64>) -> Wavefunction {
        Wavefunction::from_parts(self.grid.clone(), amplitudes, self.frame, self.time)
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `dV * sum |psi_j|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero state".into()));
        }
        let s = 1.0 / n;
        par::for_each_indexed_mut(&mut self.amplitudes, |_, z| *z *= s);
        Ok(self)
    }

    pub fn scaled(&self, c: Complex64) -> Wavefunction {
        self.with_amplitudes(self.amplitudes.iter().map(|z| z * c).collect())
    }

    /// Restrict to an aligned sub-lattice (see [`Grid::contracted_window`]).
    pub fn restrict_to(&self, window: &Arc<Grid>) -> Result<Wavefunction> {
        let off = self.grid.lattice_offset(window).ok_or_else(|| {
            Error::GridMismatch("target grid is not an aligned sub-lattice".into())
        })?;
        let strides = self.grid.strides().to_vec();
        let w = window.clone();
        let amps = par::map_indexed(window.len(), |i| {
            let mut idx = 0;
            for a in 0..w.dims() {
                let j = (i / w.strides()[a]) % w.axis(a).n;
                idx += (j + off[a]) * strides[a];
            }
            self.amplitudes[idx]
        });
        Ok(Wavefunction::from_parts(window.clone(), amps, self.frame, self.time))
    }

    /// Relative L2 distance `||self - reference|| / ||reference||`.
    pub fn relative_l2(&self, reference: &Wavefunction) -> Result<f64> {
        same_grid(self, reference)?;
        let diff: f64 = self
            .amplitudes
            .iter()
            .zip(&reference.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let denom: f64 = reference.amplitudes.iter().map(|z| z.norm_sqr()).sum();
        Ok((diff / denom).sqrt())
    }

    /// `max_j |self_j - other_j|`.
    pub fn max_abs_diff(&self, other: &Wavefunction) -> Result<f64> {
        same_grid(self, other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn same_grid(a: &Wavefunction, b: &Wavefunction) -> Result<()> {
    if Arc::ptr_eq(&a.grid, &b.grid) || *a.grid == *b.grid {
        Ok(())
    } else {
        Err(Error::GridMismatch("wavefunctions live on different grids".into()))
    }
}

pub(crate) fn same_frame(a: &Wavefunction, b: &Wavefunction) -> Result<()> {
    if a.frame == b.frame {
        Ok(())
    } else {
        Err(Error::FrameMismatch { expected: a.frame.to_string(), found: b.frame.to_string() })
    }
}

/// `dV * sum conj(a_j) b_j`.
pub fn inner_product(a: &Wavefunction, b: &Wavefunction) -> Result<Complex64> {
    same_grid(a, b)?;
    same_frame(a, b)?;
    let s: Complex64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum();
    Ok(s * a.grid.cell_volume())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observables {
    pub norm: f64,
    pub mean_position: Vec<f64>,
    pub mean_momentum: Vec<f64>,
    /// Imaginary part of `<psi|p|psi>/<psi|psi>` per axis; zero in exact arithmetic.
    pub momentum_imag_residue: Vec<f64>,
}

/// Norm, `<x>` and `<p>` per axis (expectations divided by the norm).
///
/// Periodic grids use the spectral derivative; dirichlet-offset grids use
/// central differences with zero boundary values.
pub fn observables(psi: &Wavefunction, constants: &PhysicalConstants) -> Result<Observables> {
    let grid = psi.grid();
    let dims = grid.dims();
    let amps = psi.amplitudes();
    let dv = grid.cell_volume();
    let weight_sum: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    let norm = dv * weight_sum;
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("observables of a zero state".into()));
    }
    let mut mean_position = Vec::with_capacity(dims);
    let mut mean_momentum = Vec::with_capacity(dims);
    let mut residue = Vec::with_capacity(dims);
    for a in 0..dims {
        let sx: f64 = amps.iter().enumerate().map(|(i, z)| grid.coord(i, a) * z.norm_sqr()).sum();
        mean_position.push(sx / weight_sum);
        let deriv = match grid.topology() {
            Topology::Periodic => grid.spectral()?.derivative(amps, a),
            Topology::DirichletOffset => central_difference(grid, amps, a),
        };
        // <p> = -i hbar <psi|d psi>
        let s: Complex64 = amps.iter().zip(&deriv).map(|(z, d)| z.conj() * d).sum();
        let p = Complex64::new(0.0, -constants.hbar) * s / weight_sum;
        mean_momentum.push(p.re);
        residue.push(p.im);
    }
    Ok(Observables { norm, mean_position, mean_momentum, momentum_imag_residue: residue })
}

/// Second-order central difference along `axis`. Walls sit half a cell
/// beyond the outermost points, realized with antisymmetric ghost values.
pub(crate) fn central_difference(grid: &Grid, amps: &[Complex64], axis: usize) -> Vec<Complex64> {
    let n = grid.axis(axis).n;
    let stride = grid.strides()[axis];
    let inv = 0.5 / grid.axis(axis).dx;
    par::map_indexed(amps.len(), |i| {
        let j = (i / stride) % n;
        let plus = if j + 1 < n { amps[i + stride] } else { -amps[i] };
        let minus = if j > 0 { amps[i - stride] } else { -amps[i] };
        (plus - minus) * inv
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;
    use std::f64::consts::PI;

    fn gaussian(grid: &Arc<Grid>, x0: f64, k0: f64, sigma: f64) -> Wavefunction {
        Wavefunction::from_fn(grid.clone(), Frame::Original, 0.0, |x| {
            let d = x[0] - x0;
            Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), k0 * x[0])
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn grid1(n: usize, lo: f64, hi: f64) -> Arc<Grid> {
        Arc::new(Grid::new(&[AxisSpec::periodic(n, lo, hi)]).unwrap())
    }

    #[test]
    fn normalized_self_inner_is_one() {
        let g = grid1(256, -20.0, 20.0);
        let psi = gaussian(&g, 0.3, 1.0, 1.0);
        let ip = inner_product(&psi, &psi).unwrap();
        assert!((ip - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inner_product_conjugate_symmetric() {
        let g = grid1(128, -10.0, 10.0);
        let a = gaussian(&g, 0.5, 1.0, 1.0);
        let b = gaussian(&g, -0.5, -0.7, 1.4);
        let ab = inner_product(&a, &b).unwrap();
        let ba = inner_product(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-15);
    }

    #[test]
    fn dirichlet_sine_modes_are_orthogonal() {
        // sin(pi m (x - x_min) / L) vanishes on both walls.
        let g = Arc::new(Grid::new(&[AxisSpec::dirichlet(64, -1.0, 1.0)]).unwrap());
        let ax = *g.axis(0);
        let wall = ax.x_min;
        let span = ax.length();
        let mode = |m: f64| {
            Wavefunction::from_fn(g.clone(), Frame::Original, 0.0, move |x| {
                Complex64::new((PI * m * (x[0] - wall) / span).sin(), 0.0)
            })
            .unwrap()
        };
        // direct quadrature oracle
        let direct: f64 = ax
            .points()
            .iter()
            .map(|&x| (PI * (x - wall) / span).sin() * (2.0 * PI * (x - wall) / span).sin())
            .sum::<f64>()
            * ax.dx;
        let ip = inner_product(&mode(1.0), &mode(2.0)).unwrap();
        assert!(direct.abs() < 1e-12);
        assert!(ip.norm() < 1e-12);
    }

    #[test]
    fn mismatched_grid_or_frame_rejected() {
        let a = gaussian(&grid1(64, -8.0, 8.0), 0.0, 0.0, 1.0);
        let b = gaussian(&grid1(64, -9.0, 9.0), 0.0, 0.0, 1.0);
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch(_))));
        let mut c = a.clone();
        c.frame = Frame::Psi2;
        assert!(matches!(inner_product(&a, &c), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn gaussian_at_rest_has_zero_means() {
        let g = grid1(512, -20.0, 20.0);
        let psi = gaussian(&g, 0.0, 0.0, 1.0);
        let obs = observables(&psi, &PhysicalConstants::default()).unwrap();
        assert!((obs.norm - 1.0).abs() < 1e-12);
        assert!(obs.mean_position[0].abs() < 1e-10);
        assert!(obs.mean_momentum[0].abs() < 1e-10);
    }

    #[test]
    fn boosted_gaussian_momentum() {
        let g = grid1(512, -20.0, 20.0);
        let psi = gaussian(&g, 0.0, 2.0, 1.0);
        let c = PhysicalConstants::new(1.0, vec![1.0]).unwrap();
        let obs = observables(&psi, &c).unwrap();
        assert!((obs.mean_momentum[0] - 2.0).abs() < 1e-8);
        assert!(obs.momentum_imag_residue[0].abs() < 1e-10);
        let c2 = PhysicalConstants::new(0.5, vec![1.0]).unwrap();
        let obs2 = observables(&psi, &c2).unwrap();
        assert!((obs2.mean_momentum[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn doubling_amplitudes_quadruples_norm() {
        let g = grid1(128, -10.0, 10.0);
        let psi = gaussian(&g, 0.0, 0.0, 1.0);
        let twice = psi.scaled(Complex64::new(2.0, 0.0));
        assert!((twice.norm_sq() - 4.0 * psi.norm_sq()).abs() < 1e-13);
    }

    #[test]
    fn axis_masses_group_particles() {
        let c = PhysicalConstants::new(1.0, vec![1.0, 2.0]).unwrap();
        assert_eq!(c.axis_masses(4).unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert!(c.axis_masses(3).is_err());
        assert!(PhysicalConstants::new(0.0, vec![1.0]).is_err());
        assert!(PhysicalConstants::new(1.0, vec![-1.0]).is_err());
    }
}
