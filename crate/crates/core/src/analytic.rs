//! Closed-form references: Gaussian evolution under `p^2/2m + m Omega^2 x^2 / 2`
//! for either sign of `Omega^2`, the scaling-Hamiltonian reference built from
//! it (the Caldirola-Kanai case among others), and normal modes of coupled
//! quadratic systems.
//!
//! Gaussians are stored per axis as
//! `psi = (2 Re a / pi)^{1/4} exp(-a (x - q)^2 + i p (x - q) / hbar + i phi)`
//! with one global phase.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Frame, Grid, Wavefunction};
use crate::par;
use crate::scale::ScaleFunction;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Below this `|Omega^2 t^2|` the flow functions come from their series.
const SERIES_SWITCH: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    pub alpha: Vec<Complex64>,
    pub phase: f64,
}

impl GaussianState {
    pub fn new(center: Vec<f64>, momentum: Vec<f64>, alpha: Vec<Complex64>, phase: f64) -> Result<Self> {
        let g = GaussianState { center, momentum, alpha, phase };
        g.validate()?;
        Ok(g)
    }

    /// Position standard deviation `sigma` per axis: `a = 1 / (4 sigma^2)`.
    pub fn from_sigma(center: Vec<f64>, momentum: Vec<f64>, sigma: &[f64]) -> Result<Self> {
        let d = center.len();
        let sig = if sigma.len() == 1 { vec![sigma[0]; d] } else { sigma.to_vec() };
        if sig.len() != d || sig.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("sigma must be positive, one value or one per axis".into()));
        }
        Self::new(center, momentum, sig.iter().map(|s| Complex64::new(0.25 / (s * s), 0.0)).collect(), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.center.len();
        if d == 0 || self.momentum.len() != d || self.alpha.len() != d {
            return Err(Error::InvalidArgument("gaussian parameters must have one entry per axis".into()));
        }
        if self.alpha.iter().any(|a| !(a.re > 0.0) || !a.im.is_finite()) {
            return Err(Error::InvalidArgument("gaussian width needs Re(alpha) > 0".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.center.len()
    }

    pub fn value(&self, x: &[f64], hbar: f64) -> Complex64 {
        let mut expo = Complex64::new(0.0, self.phase);
        let mut amp = 1.0;
        for a in 0..self.dims() {
            let d = x[a] - self.center[a];
            amp *= (2.0 * self.alpha[a].re / PI).powf(0.25);
            expo += -self.alpha[a] * d * d + I * (self.momentum[a] * d / hbar);
        }
        amp * expo.exp()
    }

    pub fn evaluate(&self, points: &[Vec<f64>], hbar: f64) -> Vec<Complex64> {
        par::map_indexed(points.len(), |i| self.value(&points[i], hbar))
    }

    pub fn on_grid(&self, grid: &Arc<Grid>, frame: Frame, time: f64, hbar: f64) -> Result<Wavefunction> {
        if grid.dims() != self.dims() {
            return Err(Error::GridMismatch(format!("{}-axis gaussian on a {}-axis grid", self.dims(), grid.dims())));
        }
        Wavefunction::from_fn(grid.clone(), frame, time, |x| self.value(x, hbar))
    }

    /// Multiply by `exp(i sum c_a x_a^2)`.
    pub fn with_quadratic_phase(&self, c: &[f64], hbar: f64) -> GaussianState {
        let mut g = self.clone();
        for a in 0..self.dims() {
            let q = g.center[a];
            g.alpha[a] -= I * c[a];
            g.momentum[a] += 2.0 * hbar * c[a] * q;
            g.phase += c[a] * q * q;
        }
        g
    }

    /// `f^{-D/2} g(x / f)`, still normalized.
    pub fn dilated(&self, f: f64) -> GaussianState {
        GaussianState {
            center: self.center.iter().map(|q| q * f).collect(),
            momentum: self.momentum.iter().map(|p| p / f).collect(),
            alpha: self.alpha.iter().map(|a| a / (f * f)).collect(),
            phase: self.phase,
        }
    }
}

/// `(cos(W t), sin(W t) / W)` with `W^2 = omega_sq`, entire in `omega_sq`.
pub fn flow_functions(omega_sq: f64, t: f64) -> (f64, f64) {
    let z = omega_sq * t * t;
    if z.abs() < SERIES_SWITCH {
        let c = 1.0 - z / 2.0 * (1.0 - z / 12.0 * (1.0 - z / 30.0 * (1.0 - z / 56.0)));
        let s = t * (1.0 - z / 6.0 * (1.0 - z / 20.0 * (1.0 - z / 42.0 * (1.0 - z / 72.0))));
        (c, s)
    } else if omega_sq > 0.0 {
        let w = omega_sq.sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        let w = (-omega_sq).sqrt();
        ((w * t).cosh(), (w * t).sinh() / w)
    }
}

/// Argument of `Q(t) = C + S Z0 / m` continued from `Q(0) = 1`.
fn continued_arg(q: Complex64, omega_sq: f64, t: f64) -> f64 {
    if omega_sq > 0.0 && omega_sq * t * t >= SERIES_SWITCH {
        let n = (omega_sq.sqrt() * t / PI).round();
        let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
        n * PI + (q * sign).arg()
    } else {
        q.arg()
    }
}

/// Exact evolution of a product Gaussian under `sum_a p_a^2/2m_a + m_a omega_sq_a x_a^2/2`.
pub fn gaussian_evolve_quadratic(g0: &GaussianState, omega_sq: &[f64], masses: &[f64], hbar: f64, t: f64) -> Result<GaussianState> {
    g0.validate()?;
    let d = g0.dims();
    let w2 = broadcast(omega_sq, d, "omega_sq")?;
    let m = broadcast(masses, d, "masses")?;
    let mut g = g0.clone();
    for a in 0..d {
        let (c, s) = flow_functions(w2[a], t);
        let (aa, b, cc, dd) = (c, s / m[a], -m[a] * w2[a] * s, c);
        let z0 = 2.0 * I * hbar * g0.alpha[a];
        let q = aa + b * z0;
        let z = (cc + dd * z0) / q;
        let (q0, p0) = (g0.center[a], g0.momentum[a]);
        let (qt, pt) = (aa * q0 + b * p0, cc * q0 + dd * p0);
        g.alpha[a] = z / (2.0 * I * hbar);
        g.center[a] = qt;
        g.momentum[a] = pt;
        g.phase += -0.5 * continued_arg(q, w2[a], t) + 0.5 * (pt * qt - p0 * q0) / hbar;
    }
    Ok(g)
}

fn broadcast(v: &[f64], d: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v.to_vec()),
        n => Err(Error::InvalidArgument(format!("{what}: {n} values for {d} axes"))),
    }
}

/// Exact state of the scaling Hamiltonian with `V = sum m_a omega_sq_a x_a^2 / 2`
/// at physical time `t`, starting from `g0`: chirp into the dual frame,
/// evolve with `omega_sq - eps^2` for `t'`, dilate and chirp back.
pub fn scaling_reference(g0: &GaussianState, omega_sq: &[f64], scale: &ScaleFunction, masses: &[f64], hbar: f64, t: f64) -> Result<GaussianState> {
    let d = g0.dims();
    let w = broadcast(omega_sq, d, "omega_sq")?;
    let m = broadcast(masses, d, "masses")?;
    let eps = scale.epsilon();
    let tp = scale.transformed_time(t)?;
    let f = scale.f(t)?;
    let chirp: Vec<f64> = m.iter().map(|m| eps * m / (2.0 * hbar)).collect();
    let g2 = g0.with_quadratic_phase(&chirp.iter().map(|c| -c).collect::<Vec<_>>(), hbar);
    let w2: Vec<f64> = w.iter().map(|w| w - eps * eps).collect();
    let g2t = gaussian_evolve_quadratic(&g2, &w2, &m, hbar, tp)?;
    let back: Vec<f64> = chirp.iter().map(|c| c / (f * f)).collect();
    Ok(g2t.dilated(f).with_quadratic_phase(&back, hbar))
}

/// Caldirola-Kanai reference (`f = e^{eps t}`) as a Gaussian.
pub fn ck_state(g0: &GaussianState, omega: f64, epsilon: f64, m: f64, hbar: f64, t: f64) -> Result<GaussianState> {
    if !(omega > 0.0 && epsilon > 0.0 && t >= 0.0) {
        return Err(Error::InvalidArgument("Caldirola-Kanai reference needs omega, eps > 0 and t >= 0".into()));
    }
    scaling_reference(g0, &[omega * omega], &ScaleFunction::exponential(epsilon)?, &[m], hbar, t)
}

/// Caldirola-Kanai reference evaluated at `points`.
pub fn ck_reference(g0: &GaussianState, omega: f64, epsilon: f64, m: f64, hbar: f64, t: f64, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    Ok(ck_state(g0, omega, epsilon, m, hbar, t)?.evaluate(points, hbar))
}

#[derive(Clone, Debug)]
pub struct NormalModes {
    /// Eigenvalues of `M^{-1/2} K M^{-1/2}`, any sign.
    pub omega_sq: Vec<f64>,
    /// Orthogonal eigenvector matrix, one mode per column.
    pub modes: DMatrix<f64>,
    /// `sqrt(m_a)` per axis.
    pub sqrt_mass: Vec<f64>,
}

pub fn normal_modes(k: &DMatrix<f64>, masses: &[f64]) -> Result<NormalModes> {
    let d = k.nrows();
    if k.ncols() != d || masses.len() != d {
        return Err(Error::InvalidArgument(format!("{}x{} coupling matrix with {} masses", d, k.ncols(), masses.len())));
    }
    let scale = k.amax().max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (k[(i, j)] - k[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument("coupling matrix is not symmetric".into()));
            }
        }
    }
    if masses.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidArgument("masses must be positive".into()));
    }
    let sqrt_mass: Vec<f64> = masses.iter().map(|m| m.sqrt()).collect();
    let kw = DMatrix::from_fn(d, d, |i, j| 0.5 * (k[(i, j)] + k[(j, i)]) / (sqrt_mass[i] * sqrt_mass[j]));
    let eig = SymmetricEigen::new(kw);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let omega_sq = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let modes = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(NormalModes { omega_sq, modes, sqrt_mass })
}

impl NormalModes {
    pub fn dims(&self) -> usize {
        self.sqrt_mass.len()
    }

    /// `xi = U^T M^{1/2} x`.
    pub fn to_modes(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dims();
        (0..d).map(|k| (0..d).map(|a| self.modes[(a, k)] * self.sqrt_mass[a] * x[a]).sum()).collect()
    }

    /// Largest deviation of `U^T U` from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dims();
        let g = self.modes.transpose() * &self.modes;
        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max)
    }

    /// A configuration-space product Gaussian rewritten in mode coordinates
    /// (unit mode masses). Fails unless the width matrix is diagonal in the
    /// modes, which holds for widths proportional to the masses.
    pub fn gaussian_to_modes(&self, g: &GaussianState) -> Result<GaussianState> {
        let d = self.dims();
        if g.dims() != d {
            return Err(Error::InvalidArgument("gaussian and modes differ in dimension".into()));
        }
        // B = U^T M^{-1/2} diag(alpha) M^{-1/2} U, real and imaginary parts.
        let width = |k: usize, l: usize| -> Complex64 {
            (0..d).map(|a| self.modes[(a, k)] * self.modes[(a, l)] * g.alpha[a] / (self.sqrt_mass[a] * self.sqrt_mass[a])).sum()
        };
        let mut alpha = Vec::with_capacity(d);
        let mut scale: f64 = 0.0;
        let mut off: f64 = 0.0;
        for k in 0..d {
            for l in 0..d {
                let b = width(k, l);
                if k == l {
                    scale = scale.max(b.norm());
                } else {
                    off = off.max(b.norm());
                }
            }
            alpha.push(width(k, k));
        }
        if off > 1e-12 * scale {
            return Err(Error::Unsupported("initial gaussian does not factorize over the normal modes".into()));
        }
        let center = self.to_modes(&g.center);
        let momentum = (0..d).map(|k| (0..d).map(|a| self.modes[(a, k)] * g.momentum[a] / self.sqrt_mass[a]).sum()).collect();
        GaussianState::new(center, momentum, alpha, g.phase)
    }
}

/// Product of mode Gaussians pulled back to configuration space.
#[derive(Clone, Debug)]
pub struct NbodyReference {
    pub modes: NormalModes,
    pub state: GaussianState,
    pub hbar: f64,
}

impl NbodyReference {
    pub fn value(&self, x: &[f64]) -> Complex64 {
        let jac: f64 = self.modes.sqrt_mass.iter().product::<f64>().sqrt();
        self.state.value(&self.modes.to_modes(x), self.hbar) * jac
    }

    pub fn on_grid(&self, grid: &Arc<Grid>, frame: Frame, time: f64) -> Result<Wavefunction> {
        Wavefunction::from_fn(grid.clone(), frame, time, |x| self.value(x))
    }
}

/// Evolve every mode Gaussian for time `t` and recombine.
pub fn nbody_reference(mode_gaussian: &GaussianState, modes: &NormalModes, hbar: f64, t: f64) -> Result<NbodyReference> {
    let ones = vec![1.0; modes.dims()];
    let state = gaussian_evolve_quadratic(mode_gaussian, &modes.omega_sq, &ones, hbar, t)?;
    Ok(NbodyReference { modes: modes.clone(), state, hbar })
}
