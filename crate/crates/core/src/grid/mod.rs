//! Uniform tensor-product lattices, wavefunction storage and the spectral
//! tools built on them.
//!
//! Flattening is row-major: the last axis varies fastest. Snapshot files and
//! every flat index in this crate follow that order.

mod interpolate;
mod snapshot;
mod spectral;
mod wavefunction;

pub use interpolate::{interpolate, interpolate_tensor};
pub use snapshot::{read_snapshot, write_snapshot, snapshot_to_string};
pub use spectral::Spectral;
pub(crate) use wavefunction::central_difference;
pub use wavefunction::{
    inner_product, observables, Frame, Observables, PhysicalConstants, Wavefunction,
};

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible point count per axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// `x_j = x_min + j dx`, `x_max` identified with `x_min`.
    Periodic,
    /// `x_j = x_min + (j + 1/2) dx`; hard walls at `x_min` and `x_max`, half
    /// a cell beyond the outermost points. No point sits at the origin.
    DirichletOffset,
}

/// User-facing description of one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default = "default_topology")]
    pub topology: Topology,
}

fn default_topology() -> Topology {
    Topology::Periodic
}

impl AxisSpec {
    pub fn periodic(n: usize, x_min: f64, x_max: f64) -> Self {
        AxisSpec { n, x_min, x_max, topology: Topology::Periodic }
    }

    pub fn dirichlet(n: usize, x_min: f64, x_max: f64) -> Self {
        AxisSpec { n, x_min, x_max, topology: Topology::DirichletOffset }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub topology: Topology,
}

impl Axis {
    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        match self.topology {
            Topology::Periodic => self.x_min + j as f64 * self.dx,
            Topology::DirichletOffset => self.x_min + (j as f64 + 0.5) * self.dx,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
}

/// A uniform tensor-product grid. Immutable after construction.
#[derive(Debug)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
    spectral: OnceLock<Arc<Spectral>>,
}

impl Clone for Grid {
    fn clone(&self) -> Self {
        Grid {
            axes: self.axes.clone(),
            strides: self.strides.clone(),
            len: self.len,
            spectral: OnceLock::new(),
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes
    }
}

impl Grid {
    /// Build a grid from per-axis specs.
    pub fn new(specs: &[AxisSpec]) -> Result<Grid> {
        if specs.is_empty() {
            return Err(Error::InvalidGrid("at least one axis is required".into()));
        }
        let topology = specs[0].topology;
        let mut axes = Vec::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            if s.n < MIN_POINTS {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: n_points = {} < {MIN_POINTS}",
                    s.n
                )));
            }
            if !(s.x_min.is_finite() && s.x_max.is_finite()) || s.x_max <= s.x_min {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: need finite x_max > x_min, got [{}, {}]",
                    s.x_min, s.x_max
                )));
            }
            if s.topology != topology {
                return Err(Error::InvalidGrid(
                    "mixed periodic and dirichlet-offset axes are not supported".into(),
                ));
            }
            let axis = Axis {
                n: s.n,
                x_min: s.x_min,
                x_max: s.x_max,
                dx: (s.x_max - s.x_min) / s.n as f64,
                topology: s.topology,
            };
            if axis.topology == Topology::DirichletOffset
                && (0..axis.n).any(|j| axis.point(j).abs() < 1e-9 * axis.dx)
            {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: dirichlet-offset lattice has a point at the origin; use an even n on a symmetric interval"
                )));
            }
            axes.push(axis);
        }
        Ok(Self::from_axes(axes))
    }

    fn from_axes(axes: Vec<Axis>) -> Grid {
        let mut strides = vec![1usize; axes.len()];
        for a in (0..axes.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].n;
        }
        let len = axes.iter().map(|a| a.n).product();
        Grid { axes, strides, len, spectral: OnceLock::new() }
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn topology(&self) -> Topology {
        self.axes[0].topology
    }

    pub fn is_periodic(&self) -> bool {
        self.topology() == Topology::Periodic
    }

    /// Volume element `prod(dx)`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.dx).product()
    }

    /// Multi-index of a flat (row-major) index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for a in 0..self.axes.len() {
            out[a] = flat / self.strides[a];
            flat %= self.strides[a];
        }
    }

    /// Coordinate of `flat` along `axis`.
    #[inline]
    pub fn coord(&self, flat: usize, axis: usize) -> f64 {
        let j = (flat / self.strides[axis]) % self.axes[axis].n;
        self.axes[axis].point(j)
    }

    /// Fill `out` with the coordinates of point `flat`.
    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        for (a, x) in out.iter_mut().enumerate() {
            *x = self.coord(flat, a);
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dims()];
        self.point_into(flat, &mut p);
        p
    }

    /// All points, row-major.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    /// Per-axis coordinate vectors.
    pub fn axis_points(&self) -> Vec<Vec<f64>> {
        self.axes.iter().map(Axis::points).collect()
    }

    /// Spectral helper for this grid, built on first use.
    pub fn spectral(&self) -> Result<Arc<Spectral>> {
        if !self.is_periodic() {
            return Err(Error::Unsupported(
                "spectral operations require a periodic grid".into(),
            ));
        }
        Ok(self
            .spectral
            .get_or_init(|| Arc::new(Spectral::new(self)))
            .clone())
    }

    /// True when `x` lies in the closed box `[x_min, x_max]` on every axis.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.check_inside(x).is_ok()
    }

    pub(crate) fn check_inside(&self, x: &[f64]) -> Result<()> {
        for (a, (ax, &v)) in self.axes.iter().zip(x).enumerate() {
            let slack = 1e-12 * ax.length();
            if !(v >= ax.x_min - slack && v <= ax.x_max + slack) {
                return Err(Error::OutOfDomain { axis: a, value: v, lo: ax.x_min, hi: ax.x_max });
            }
        }
        Ok(())
    }

    /// The sub-lattice of this grid's points `y` with `factor * y` inside the
    /// domain. The window shares spacing and points with `self`, so states can
    /// be restricted to it by index. Requires `factor >= 1`.
    pub fn contracted_window(&self, factor: f64) -> Result<Grid> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "window contraction factor must be >= 1, got {factor}"
            )));
        }
        let mut axes = Vec::with_capacity(self.dims());
        for (a, ax) in self.axes.iter().enumerate() {
            let slack = 1e-12 * ax.length();
            let inside: Vec<usize> = (0..ax.n)
                .filter(|&j| {
                    let y = factor * ax.point(j);
                    y >= ax.x_min - slack && y <= ax.x_max + slack
                })
                .collect();
            let (first, last) = match (inside.first(), inside.last()) {
                (Some(&f), Some(&l)) => (f, l),
                _ => {
                    return Err(Error::InvalidGrid(format!("axis {a}: empty window")));
                }
            };
            let n = last - first + 1;
            if n < MIN_POINTS {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: window has {n} < {MIN_POINTS} points"
                )));
            }
            let x_min = match ax.topology {
                Topology::Periodic => ax.point(first),
                Topology::DirichletOffset => ax.point(first) - 0.5 * ax.dx,
            };
            axes.push(Axis { n, x_min, x_max: x_min + n as f64 * ax.dx, dx: ax.dx, topology: ax.topology });
        }
        Ok(Self::from_axes(axes))
    }

    /// Index offsets of `sub` inside `self` when `sub` is an aligned
    /// sub-lattice (same spacing, points coincide).
    pub fn lattice_offset(&self, sub: &Grid) -> Option<Vec<usize>> {
        if sub.dims() != self.dims() {
            return None;
        }
        let mut offsets = Vec::with_capacity(self.dims());
        for (ax, sx) in self.axes.iter().zip(&sub.axes) {
            if ax.topology != sx.topology || (ax.dx - sx.dx).abs() > 1e-12 * ax.dx {
                return None;
            }
            let shift = (sx.point(0) - ax.point(0)) / ax.dx;
            let k = shift.round();
            if (shift - k).abs() > 1e-6 || k < 0.0 || k as usize + sx.n > ax.n {
                return None;
            }
            offsets.push(k as usize);
        }
        Some(offsets)
    }
}
