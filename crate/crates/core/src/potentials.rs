//! Potential library: base potentials, the time-scaled potential entering
//! the scaling Hamiltonian, and the effective potential of the dual frame.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, PhysicalConstants, Topology};
use crate::par;

/// Symbolic potential. Config form: `{"kind": ..., "params": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `sum_a m_a omega_a^2 x_a^2 / 2`; a single omega is broadcast.
    Harmonic { omega: Vec<f64> },
    /// `k / |r|^2`, repulsive only.
    InverseSquare { k: f64 },
    /// `v0 sech^2(|r| / a)`.
    Sech2 { v0: f64, a: f64 },
    /// `x^T K x / 2` over all grid axes.
    CoupledQuadratic { k: Vec<Vec<f64>> },
    /// One-dimensional samples with clamped cubic-spline interpolation.
    Tabulated(Tabulated),
    /// `sum_a c_a x_a^2 / 2` with curvatures of any sign. Produced by
    /// [`effective_potential`]; not mass-weighted.
    Quadratic { curvature: Vec<f64> },
    Sum(Vec<PotentialSpec>),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Tabulated {
    #[serde(default)]
    pub x: Vec<f64>,
    #[serde(default)]
    pub v: Vec<f64>,
    /// Two-column CSV `x,V`; resolved into `x`/`v` by the config loader.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip)]
    spline: OnceLock<Vec<f64>>,
}

impl PartialEq for Tabulated {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.v == other.v && self.path == other.path
    }
}

impl Tabulated {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let t = Tabulated { x, v, path: None, spline: OnceLock::new() };
        t.validate()?;
        Ok(t)
    }

    /// Parse a two-column `x,V` CSV (header optional).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut x = Vec::new();
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(',').map(str::trim);
            let (a, b) = match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => return Err(Error::Potential(format!("tabulated line {}: expected two columns", i + 1))),
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    x.push(a);
                    v.push(b);
                }
                _ if i == 0 => continue,
                _ => return Err(Error::Potential(format!("tabulated line {}: not numeric", i + 1))),
            }
        }
        Tabulated::new(x, v)
    }

    fn validate(&self) -> Result<()> {
        if self.x.len() < 2 || self.x.len() != self.v.len() {
            return Err(Error::Potential("tabulated potential needs >= 2 (x, V) pairs of equal length".into()));
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Potential("tabulated x must be strictly increasing".into()));
        }
        if self.x.iter().chain(&self.v).any(|z| !z.is_finite()) {
            return Err(Error::Potential("tabulated samples must be finite".into()));
        }
        Ok(())
    }

    /// Second derivatives of the clamped spline. End slopes come from
    /// second-order one-sided differences.
    fn second_derivatives(&self) -> &[f64] {
        self.spline.get_or_init(|| {
            let (x, y) = (&self.x, &self.v);
            let n = x.len();
            let slope = |i: usize| (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            let (d0, dn) = if n >= 3 {
                let (h0, h1) = (x[1] - x[0], x[2] - x[1]);
                let d0 = slope(0) * (2.0 * h0 + h1) / (h0 + h1) - slope(1) * h0 / (h0 + h1);
                let (g0, g1) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
                let dn = slope(n - 2) * (2.0 * g0 + g1) / (g0 + g1) - slope(n - 3) * g0 / (g0 + g1);
                (d0, dn)
            } else {
                (slope(0), slope(0))
            };
            // Tridiagonal system for the second derivatives m_i.
            let mut sub = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut sup = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let h = |i: usize| x[i + 1] - x[i];
            diag[0] = h(0) / 3.0;
            sup[0] = h(0) / 6.0;
            rhs[0] = slope(0) - d0;
            for i in 1..n - 1 {
                sub[i] = h(i - 1) / 6.0;
                diag[i] = (h(i - 1) + h(i)) / 3.0;
                sup[i] = h(i) / 6.0;
                rhs[i] = slope(i) - slope(i - 1);
            }
            sub[n - 1] = h(n - 2) / 6.0;
            diag[n - 1] = h(n - 2) / 3.0;
            rhs[n - 1] = dn - slope(n - 2);
            crate::numerics::solve_tridiagonal(&sub, &diag, &sup, &rhs)
        })
    }

    fn eval(&self, xq: f64) -> Result<f64> {
        let (x, y) = (&self.x, &self.v);
        let n = x.len();
        if !(xq >= x[0] && xq <= x[n - 1]) {
            return Err(Error::Potential(format!(
                "point {xq} outside tabulated range [{}, {}]",
                x[0],
                x[n - 1]
            )));
        }
        let m = self.second_derivatives();
        let i = match x.partition_point(|&v| v <= xq) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - xq) / h;
        let b = (xq - x[i]) / h;
        Ok(a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0)
    }
}

fn broadcast(values: &[f64], dims: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; dims]),
        n if n == dims => Ok(values.to_vec()),
        n => Err(Error::Potential(format!("{what}: {n} values for {dims} axes"))),
    }
}

impl PotentialSpec {
    pub fn harmonic(omega: f64) -> Self {
        PotentialSpec::Harmonic { omega: vec![omega] }
    }

    /// Load every tabulated child that names a file, relative to `base`.
    pub fn load_tables(&mut self, base: Option<&std::path::Path>) -> Result<()> {
        match self {
            PotentialSpec::Tabulated(t) => {
                if let Some(p) = t.path.clone() {
                    let full = match base {
                        Some(b) if std::path::Path::new(&p).is_relative() => b.join(&p),
                        _ => std::path::PathBuf::from(&p),
                    };
                    let mut loaded = Tabulated::from_csv(&std::fs::read_to_string(&full)?)?;
                    loaded.path = Some(p);
                    *t = loaded;
                }
                Ok(())
            }
            PotentialSpec::Sum(children) => children.iter_mut().try_for_each(|c| c.load_tables(base)),
            _ => Ok(()),
        }
    }

    /// Check the spec's own invariants and its compatibility with a grid of
    /// `dims` axes and the given topology.
    pub fn validate(&self, dims: usize, topology: Topology) -> Result<()> {
        match self {
            PotentialSpec::Harmonic { omega } => {
                let w = broadcast(omega, dims, "harmonic omega")?;
                if w.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Potential("harmonic omega must be finite".into()));
                }
            }
            PotentialSpec::InverseSquare { k } => {
                if !(*k > 0.0) {
                    return Err(Error::Potential(format!(
                        "inverse-square strength must be positive (repulsive), got {k}"
                    )));
                }
                if topology != Topology::DirichletOffset {
                    return Err(Error::Potential("inverse-square potential requires a dirichlet-offset grid".into()));
                }
            }
            PotentialSpec::Sech2 { v0, a } => {
                if !(v0.is_finite() && *a > 0.0) {
                    return Err(Error::Potential("sech2 needs finite v0 and a > 0".into()));
                }
            }
            PotentialSpec::CoupledQuadratic { k } => {
                let m = coupling_matrix(k, dims)?;
                if m.symmetric_eigenvalues().iter().any(|&l| l < -1e-12 * m.norm().max(1.0)) {
                    return Err(Error::Potential("coupling matrix must be positive semidefinite".into()));
                }
            }
            PotentialSpec::Tabulated(t) => {
                t.validate()?;
                if dims != 1 {
                    return Err(Error::Potential("tabulated potentials are one-dimensional".into()));
                }
            }
            PotentialSpec::Quadratic { curvature } => {
                broadcast(curvature, dims, "quadratic curvature")?;
            }
            PotentialSpec::Sum(children) => {
                for c in children {
                    c.validate(dims, topology)?;
                }
            }
        }
        Ok(())
    }

    /// `V(x)` at one point; `axis_masses` has one entry per coordinate.
    pub fn value(&self, x: &[f64], axis_masses: &[f64]) -> Result<f64> {
        match self {
            PotentialSpec::Harmonic { omega } => {
                let mut s = 0.0;
                for (a, (&xa, &m)) in x.iter().zip(axis_masses).enumerate() {
                    let w = if omega.len() == 1 { omega[0] } else { omega[a] };
                    s += 0.5 * m * w * w * xa * xa;
                }
                Ok(s)
            }
            PotentialSpec::InverseSquare { k } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if r2 == 0.0 {
                    return Err(Error::Potential("inverse-square potential evaluated at the origin".into()));
                }
                Ok(k / r2)
            }
            PotentialSpec::Sech2 { v0, a } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let c = (r / a).cosh();
                Ok(v0 / (c * c))
            }
            PotentialSpec::CoupledQuadratic { k } => {
                let mut s = 0.0;
                for (i, row) in k.iter().enumerate() {
                    for (j, kij) in row.iter().enumerate() {
                        s += x[i] * kij * x[j];
                    }
                }
                Ok(0.5 * s)
            }
            PotentialSpec::Tabulated(t) => t.eval(x[0]),
            PotentialSpec::Quadratic { curvature } => Ok(x
                .iter()
                .enumerate()
                .map(|(a, &xa)| {
                    let c = if curvature.len() == 1 { curvature[0] } else { curvature[a] };
                    0.5 * c * xa * xa
                })
                .sum()),
            PotentialSpec::Sum(children) => {
                let mut s = 0.0;
                for c in children {
                    s += c.value(x, axis_masses)?;
                }
                Ok(s)
            }
        }
    }

    /// Hessian matrix when the potential is a homogeneous quadratic form.
    pub fn hessian(&self, axis_masses: &[f64]) -> Option<DMatrix<f64>> {
        let dims = axis_masses.len();
        match self {
            PotentialSpec::Harmonic { omega } => {
                let w = broadcast(omega, dims, "").ok()?;
                Some(DMatrix::from_fn(dims, dims, |i, j| if i == j { axis_masses[i] * w[i] * w[i] } else { 0.0 }))
            }
            PotentialSpec::Quadratic { curvature } => {
                let c = broadcast(curvature, dims, "").ok()?;
                Some(DMatrix::from_fn(dims, dims, |i, j| if i == j { c[i] } else { 0.0 }))
            }
            PotentialSpec::CoupledQuadratic { k } => coupling_matrix(k, dims).ok(),
            PotentialSpec::Sum(children) => {
                let mut h = DMatrix::zeros(dims, dims);
                for c in children {
                    h += c.hessian(axis_masses)?;
                }
                Some(h)
            }
            _ => None,
        }
    }
}

fn coupling_matrix(k: &[Vec<f64>], dims: usize) -> Result<DMatrix<f64>> {
    if k.len() != dims || k.iter().any(|r| r.len() != dims) {
        return Err(Error::Potential(format!("coupling matrix must be {dims}x{dims}")));
    }
    let m = DMatrix::from_fn(dims, dims, |i, j| k[i][j]);
    let scale = m.abs().max().max(1.0);
    for i in 0..dims {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Potential("coupling matrix must be symmetric".into()));
            }
        }
    }
    Ok(m)
}

/// Pointwise `V` at arbitrary points.
pub fn eval_potential(spec: &PotentialSpec, points: &[Vec<f64>], constants: &PhysicalConstants) -> Result<Vec<f64>> {
    let dims = points.first().map_or(1, Vec::len);
    let masses = constants.axis_masses(dims)?;
    par::try_map_indexed(points.len(), |i| spec.value(&points[i], &masses))
}

/// `(1/f) V(x/f)` at arbitrary points.
pub fn scaled_potential(
    spec: &PotentialSpec,
    f: f64,
    points: &[Vec<f64>],
    constants: &PhysicalConstants,
) -> Result<Vec<f64>> {
    if !(f > 0.0) {
        return Err(Error::InvalidArgument(format!("scale factor must be positive, got {f}")));
    }
    let dims = points.first().map_or(1, Vec::len);
    let masses = constants.axis_masses(dims)?;
    par::try_map_indexed(points.len(), |i| {
        let y: Vec<f64> = points[i].iter().map(|x| x / f).collect();
        Ok(spec.value(&y, &masses)? / f)
    })
}

/// `(1/f) V(x/f)` on every grid point; `f = 1` gives plain `V`.
pub fn grid_potential(spec: &PotentialSpec, grid: &Grid, constants: &PhysicalConstants, f: f64) -> Result<Vec<f64>> {
    let masses = constants.axis_masses(grid.dims())?;
    let dims = grid.dims();
    if f == 1.0 {
        return par::try_map_indexed(grid.len(), |i| {
            let mut p = vec![0.0; dims];
            grid.point_into(i, &mut p);
            spec.value(&p, &masses)
        });
    }
    let inv = 1.0 / f;
    par::try_map_indexed(grid.len(), |i| {
        let mut p = vec![0.0; dims];
        grid.point_into(i, &mut p);
        p.iter_mut().for_each(|x| *x *= inv);
        Ok(spec.value(&p, &masses)? * inv)
    })
}

/// `V(r) - sum_a m_a epsilon^2 x_a^2 / 2`: the dual-frame potential, mass
/// weighted per particle.
pub fn effective_potential(
    spec: &PotentialSpec,
    epsilon: f64,
    constants: &PhysicalConstants,
    dims: usize,
) -> Result<PotentialSpec> {
    let masses = constants.axis_masses(dims)?;
    let curvature = masses.iter().map(|m| -m * epsilon * epsilon).collect();
    Ok(PotentialSpec::Sum(vec![spec.clone(), PotentialSpec::Quadratic { curvature }]))
}
