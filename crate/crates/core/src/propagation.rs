//! Time stepping: Strang split-operator steps on periodic grids, Crank-Nicolson
//! on one-dimensional dirichlet-offset grids, trajectory bookkeeping and the
//! boundary-leak monitor.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{observables, Grid, PhysicalConstants, Topology, Wavefunction};
use crate::numerics::solve_tridiagonal;
use crate::operators::{energy, kinetic_symbol, Family, HamiltonianSpec};
use crate::par;

/// Relative slack below which a remainder step is absorbed.
const STEP_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimePlan {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub snapshot_stride: usize,
    /// Extra times the stepper must land on exactly; snapshots are always
    /// taken there.
    pub landmarks: Vec<f64>,
}

impl TimePlan {
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        Self::span(0.0, t_end, dt)
    }

    pub fn span(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        let p = TimePlan { t_start, t_end, dt, snapshot_stride: 1, landmarks: Vec::new() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_landmarks(mut self, landmarks: &[f64]) -> Result<Self> {
        self.landmarks = landmarks.to_vec();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.t_start) {
            return Err(Error::InvalidArgument(format!("t_end {} precedes t_start {}", self.t_end, self.t_start)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidArgument("snapshot_stride must be >= 1".into()));
        }
        if self.landmarks.iter().any(|&t| t < self.t_start || t > self.t_end) {
            return Err(Error::InvalidArgument("landmarks must lie in [t_start, t_end]".into()));
        }
        Ok(())
    }

    /// `(t_from, h, lands_on_landmark)` for every step. Each segment between
    /// landmarks uses full `dt` steps and one shortened final step.
    pub fn schedule(&self) -> Vec<(f64, f64, bool)> {
        let mut stops: Vec<f64> = self.landmarks.iter().copied().filter(|&t| t > self.t_start).collect();
        stops.push(self.t_end);
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let mut out = Vec::new();
        let mut seg_start = self.t_start;
        for stop in stops {
            let span = stop - seg_start;
            if span <= 0.0 {
                continue;
            }
            let ratio = span / self.dt;
            let mut n = ratio.floor() as usize;
            if ratio - (n as f64) > 1.0 - STEP_SLACK {
                n += 1;
            }
            let mut times: Vec<f64> = (0..=n).map(|k| seg_start + k as f64 * self.dt).collect();
            let last = *times.last().unwrap_or(&seg_start);
            if stop - last > STEP_SLACK * self.dt {
                times.push(stop);
            } else if let Some(l) = times.last_mut() {
                *l = stop;
            }
            for w in times.windows(2) {
                out.push((w[0], w[1] - w[0], false));
            }
            if let Some(last) = out.last_mut() {
                last.2 = self.landmarks.contains(&stop);
            }
            seg_start = stop;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeakPolicy {
    pub margin_fraction: f64,
    pub warn_threshold: f64,
    pub abort_threshold: f64,
}

impl Default for LeakPolicy {
    fn default() -> Self {
        LeakPolicy { margin_fraction: 0.1, warn_threshold: 1e-6, abort_threshold: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableRow {
    pub t: f64,
    pub norm: f64,
    pub mean_x: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub energy: Option<f64>,
    pub leak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeakWarning {
    pub step: usize,
    pub t: f64,
    pub leak: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub snapshots: Vec<(usize, f64, Wavefunction)>,
    pub observables: Vec<ObservableRow>,
    pub leak_warnings: Vec<LeakWarning>,
    pub max_leak: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> Option<&Wavefunction> {
        self.snapshots.first().map(|s| &s.2)
    }

    pub fn final_state(&self) -> Option<&Wavefunction> {
        self.snapshots.last().map(|s| &s.2)
    }

    /// Snapshot whose time is within `tol` of `t`.
    pub fn state_at(&self, t: f64, tol: f64) -> Option<&Wavefunction> {
        self.snapshots.iter().find(|s| (s.1 - t).abs() <= tol).map(|s| &s.2)
    }

    /// Largest relative deviation of the norm from its first value.
    pub fn max_norm_drift(&self) -> f64 {
        let n0 = match self.observables.first() {
            Some(r) => r.norm,
            None => return 0.0,
        };
        self.observables.iter().map(|r| (r.norm - n0).abs() / n0).fold(0.0, f64::max)
    }

    /// Largest relative deviation of the recorded energy from its first value.
    pub fn max_energy_drift(&self) -> Option<f64> {
        let e0 = self.observables.first()?.energy?;
        Some(
            self.observables
                .iter()
                .filter_map(|r| r.energy)
                .map(|e| (e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max),
        )
    }
}

/// Fraction of the norm inside the outer `margin_fraction` strip of any axis.
pub fn leak_mass(psi: &Wavefunction, margin_fraction: f64) -> Result<f64> {
    if !(margin_fraction > 0.0 && margin_fraction < 0.5) {
        return Err(Error::InvalidArgument(format!("margin fraction must be in (0, 0.5), got {margin_fraction}")));
    }
    let grid = psi.grid();
    let dims = grid.dims();
    // Strip widths in cell units; a point is in a strip when its cell offset
    // from the nearest wall is below the width.
    let offset = match grid.topology() {
        Topology::Periodic => 0.0,
        Topology::DirichletOffset => 0.5,
    };
    let mut idx = vec![0usize; dims];
    let mut total = 0.0;
    let mut edge = 0.0;
    for (i, z) in psi.amplitudes().iter().enumerate() {
        let w = z.norm_sqr();
        total += w;
        grid.unflatten(i, &mut idx);
        let in_margin = (0..dims).any(|a| {
            let n = grid.axis(a).n as f64;
            let s = margin_fraction * n;
            let j = idx[a] as f64 + offset;
            j < s - 1e-9 || n - j <= s + 1e-9
        });
        if in_margin {
            edge += w;
        }
    }
    Ok(if total > 0.0 { edge / total } else { 0.0 })
}

fn phases(values: &[f64], scale: f64) -> Vec<Complex64> {
    par::map_indexed(values.len(), |i| Complex64::from_polar(1.0, -values[i] * scale))
}

fn multiply(amps: &mut [Complex64], phase: &[Complex64]) {
    par::for_each_indexed_mut(amps, |i, z| *z *= phase[i]);
}

/// Strang stepper for a time-independent Hermitian Hamiltonian on a
/// periodic grid. Phase tables are cached per step size.
pub struct SplitStepper {
    grid: std::sync::Arc<Grid>,
    potential: Vec<f64>,
    kinetic: Vec<f64>,
    hbar: f64,
    cache: Option<(f64, Vec<Complex64>, Vec<Complex64>)>,
}

impl SplitStepper {
    pub fn new(grid: &std::sync::Arc<Grid>, spec: &HamiltonianSpec) -> Result<Self> {
        if spec.family != Family::H2 {
            return Err(Error::InvalidArgument("the time-independent stepper takes an H2 spec".into()));
        }
        Self::from_parts(grid, spec.potential_on_grid(grid, 0.0)?, &spec.constants)
    }

    /// Stepper for `p^2/2m + V` with `V` sampled on the grid.
    pub fn from_parts(grid: &std::sync::Arc<Grid>, potential: Vec<f64>, constants: &PhysicalConstants) -> Result<Self> {
        let kinetic = kinetic_symbol(grid, constants)?;
        Ok(SplitStepper { grid: grid.clone(), potential, kinetic, hbar: constants.hbar, cache: None })
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn step(&mut self, amps: &mut [Complex64], dt: f64) -> Result<()> {
        let hit = matches!(&self.cache, Some((h, _, _)) if *h == dt);
        if !hit {
            let half = phases(&self.potential, 0.5 * dt / self.hbar);
            let kin = phases(&self.kinetic, dt / self.hbar);
            self.cache = Some((dt, half, kin));
        }
        let (_, half, kin) = self.cache.as_ref().expect("phase cache filled above");
        let sp = self.grid.spectral()?;
        multiply(amps, half);
        sp.forward(amps);
        multiply(amps, kin);
        sp.inverse(amps);
        multiply(amps, half);
        Ok(())
    }
}

/// Strang stepper for the scaling Hamiltonian with coefficients frozen at
/// the step midpoint.
pub struct ScalingStepper {
    grid: std::sync::Arc<Grid>,
    spec: HamiltonianSpec,
    kinetic: Vec<f64>,
}

impl ScalingStepper {
    pub fn new(grid: &std::sync::Arc<Grid>, spec: &HamiltonianSpec) -> Result<Self> {
        if spec.family != Family::ScalingTd {
            return Err(Error::InvalidArgument("the time-dependent stepper takes a scaling spec".into()));
        }
        Ok(ScalingStepper { grid: grid.clone(), spec: spec.clone(), kinetic: kinetic_symbol(grid, &spec.constants)? })
    }

    pub fn step(&mut self, amps: &mut [Complex64], t: f64, dt: f64) -> Result<()> {
        self.spec.scale.eval(t + dt)?;
        let tm = t + 0.5 * dt;
        let ck = self.spec.kinetic_coefficient(tm)?;
        let v = self.spec.potential_on_grid(&self.grid, tm)?;
        let hbar = self.spec.constants.hbar;
        let half = phases(&v, 0.5 * dt / hbar);
        let kin = phases(&self.kinetic, ck * dt / hbar);
        let sp = self.grid.spectral()?;
        multiply(amps, &half);
        sp.forward(amps);
        multiply(amps, &kin);
        sp.inverse(amps);
        multiply(amps, &half);
        Ok(())
    }
}

/// Crank-Nicolson stepper for one-dimensional dirichlet-offset grids, 3-point
/// stencil, coefficients at the step midpoint.
pub struct CrankNicolsonStepper {
    grid: std::sync::Arc<Grid>,
    spec: HamiltonianSpec,
}

impl CrankNicolsonStepper {
    pub fn new(grid: &std::sync::Arc<Grid>, spec: &HamiltonianSpec) -> Result<Self> {
        if grid.topology() != Topology::DirichletOffset || grid.dims() != 1 {
            return Err(Error::Unsupported("Crank-Nicolson runs on 1D dirichlet-offset grids".into()));
        }
        if spec.family == Family::H1 {
            return Err(Error::Unsupported("H1 is not a propagation target".into()));
        }
        Ok(CrankNicolsonStepper { grid: grid.clone(), spec: spec.clone() })
    }

    pub fn step(&mut self, amps: &mut [Complex64], t: f64, dt: f64) -> Result<()> {
        let tm = t + 0.5 * dt;
        if self.spec.family == Family::ScalingTd {
            self.spec.scale.eval(t + dt)?;
        }
        let ck = self.spec.kinetic_coefficient(tm)?;
        let v = self.spec.potential_on_grid(&self.grid, tm)?;
        let n = amps.len();
        let dx = self.grid.axis(0).dx;
        let m = self.spec.constants.masses[0];
        let hbar = self.spec.constants.hbar;
        // H = off * [1, -2, 1] + V with antisymmetric ghosts (-3 at the ends).
        let off = -ck * hbar * hbar / (2.0 * m * dx * dx);
        let diag_h: Vec<f64> = (0..n)
            .map(|j| {
                let centre = if j == 0 || j == n - 1 { -3.0 } else { -2.0 };
                off * centre + v[j]
            })
            .collect();
        let a = Complex64::new(0.0, 0.5 * dt / hbar);
        let rhs: Vec<Complex64> = (0..n)
            .map(|j| {
                let mut h = diag_h[j] * amps[j];
                if j > 0 {
                    h += off * amps[j - 1];
                }
                if j + 1 < n {
                    h += off * amps[j + 1];
                }
                amps[j] - a * h
            })
            .collect();
        let lower = vec![a * off; n];
        let upper = vec![a * off; n];
        let diag: Vec<Complex64> = diag_h.iter().map(|&h| Complex64::new(1.0, 0.0) + a * h).collect();
        let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        amps.copy_from_slice(&sol);
        Ok(())
    }
}

fn require_family_frame(psi: &Wavefunction, spec: &HamiltonianSpec) -> Result<()> {
    if psi.frame != spec.family.frame() {
        return Err(Error::FrameMismatch { expected: spec.family.frame().to_string(), found: psi.frame.to_string() });
    }
    Ok(())
}

/// One Strang step of the time-independent `H2`.
pub fn step_ti(psi: &Wavefunction, h2: &HamiltonianSpec, dt: f64) -> Result<Wavefunction> {
    require_family_frame(psi, h2)?;
    let mut s = SplitStepper::new(psi.grid(), h2)?;
    let mut out = psi.clone();
    s.step(out.amplitudes_mut(), dt)?;
    out.time += dt;
    Ok(out)
}

/// One Strang step of the scaling Hamiltonian from `t` to `t + dt`.
pub fn step_td(psi: &Wavefunction, t: f64, h_t: &HamiltonianSpec, dt: f64) -> Result<Wavefunction> {
    require_family_frame(psi, h_t)?;
    let mut s = ScalingStepper::new(psi.grid(), h_t)?;
    let mut out = psi.clone();
    s.step(out.amplitudes_mut(), t, dt)?;
    out.time = t + dt;
    Ok(out)
}

enum Engine {
    Split(SplitStepper),
    Scaling(ScalingStepper),
    Cn(CrankNicolsonStepper),
}

impl Engine {
    fn new(grid: &std::sync::Arc<Grid>, spec: &HamiltonianSpec) -> Result<Self> {
        match (grid.topology(), spec.family) {
            (_, Family::H1) => Err(Error::Unsupported("H1 is not a propagation target".into())),
            (Topology::Periodic, Family::H2) => Ok(Engine::Split(SplitStepper::new(grid, spec)?)),
            (Topology::Periodic, Family::ScalingTd) => Ok(Engine::Scaling(ScalingStepper::new(grid, spec)?)),
            (Topology::DirichletOffset, _) => Ok(Engine::Cn(CrankNicolsonStepper::new(grid, spec)?)),
        }
    }

    fn step(&mut self, amps: &mut [Complex64], t: f64, dt: f64) -> Result<()> {
        match self {
            Engine::Split(s) => s.step(amps, dt),
            Engine::Scaling(s) => s.step(amps, t, dt),
            Engine::Cn(s) => s.step(amps, t, dt),
        }
    }
}

/// Observable row for `psi` under `spec` at `t`.
pub fn observe(psi: &Wavefunction, spec: &HamiltonianSpec, t: f64, margin: f64) -> Result<ObservableRow> {
    let obs = observables(psi, &spec.constants)?;
    let e = match spec.family {
        Family::H1 => None,
        _ => Some(energy(psi, spec, t)?),
    };
    Ok(ObservableRow {
        t,
        norm: obs.norm,
        mean_x: obs.mean_position,
        mean_p: obs.mean_momentum,
        energy: e,
        leak: leak_mass(psi, margin)?,
    })
}

/// Evolve `psi0` according to `plan`, monitoring leak and finiteness.
pub fn evolve(psi0: &Wavefunction, spec: &HamiltonianSpec, plan: &TimePlan) -> Result<Trajectory> {
    evolve_with(psi0, spec, plan, &LeakPolicy::default())
}

pub fn evolve_with(psi0: &Wavefunction, spec: &HamiltonianSpec, plan: &TimePlan, leak: &LeakPolicy) -> Result<Trajectory> {
    plan.validate()?;
    require_family_frame(psi0, spec)?;
    let grid = psi0.grid().clone();
    let mut engine = Engine::new(&grid, spec)?;
    let mut traj = Trajectory::default();
    let mut psi = psi0.clone();
    psi.time = plan.t_start;
    let row = observe(&psi, spec, plan.t_start, leak.margin_fraction)?;
    traj.max_leak = row.leak;
    traj.observables.push(row);
    traj.snapshots.push((0, plan.t_start, psi.clone()));
    let schedule = plan.schedule();
    let n_steps = schedule.len();
    for (k, &(t, h, landmark)) in schedule.iter().enumerate() {
        let step = k + 1;
        engine.step(psi.amplitudes_mut(), t, h)?;
        let t_new = if step == n_steps { plan.t_end } else { t + h };
        psi.time = t_new;
        if !psi.is_finite() {
            return Err(Error::NonFinite { step });
        }
        let row = observe(&psi, spec, t_new, leak.margin_fraction)?;
        if row.leak > leak.abort_threshold {
            return Err(Error::LeakAbort { step, leak: row.leak, threshold: leak.abort_threshold });
        }
        if row.leak > leak.warn_threshold && traj.leak_warnings.is_empty() {
            traj.leak_warnings.push(LeakWarning { step, t: t_new, leak: row.leak });
        }
        traj.max_leak = traj.max_leak.max(row.leak);
        traj.observables.push(row);
        if landmark || step % plan.snapshot_stride == 0 || step == n_steps {
            traj.snapshots.push((step, t_new, psi.clone()));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AxisSpec, Frame};
    use crate::potentials::PotentialSpec;
    use crate::scale::ScaleFunction;
    use std::sync::Arc;

    fn grid1(n: usize, l: f64) -> Arc<Grid> {
        Arc::new(Grid::new(&[AxisSpec::periodic(n, -l, l)]).unwrap())
    }

    fn gauss(grid: &Arc<Grid>, frame: Frame, x0: f64, k0: f64, sigma: f64) -> Wavefunction {
        Wavefunction::from_fn(grid.clone(), frame, 0.0, |x| {
            let d = x[0] - x0;
            Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), k0 * x[0])
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn h2(omega: f64, eps: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(Family::H2, PotentialSpec::harmonic(omega), ScaleFunction::exponential(eps).unwrap(), PhysicalConstants::default())
    }

    #[test]
    fn schedule_lands_exactly() {
        let p = TimePlan::new(1.0, 0.3).unwrap().with_landmarks(&[0.5]).unwrap();
        let s = p.schedule();
        let ends: Vec<f64> = s.iter().map(|(t, h, _)| t + h).collect();
        assert!((ends[1] - 0.5).abs() < 1e-15 && s[1].2);
        assert_eq!(*ends.last().unwrap(), 1.0);
        let q = TimePlan::new(1.0, 0.1).unwrap();
        assert_eq!(q.schedule().len(), 10);
        assert!(TimePlan::new(1.0, 1.0).unwrap().with_stride(0).validate().is_err());
    }

    #[test]
    fn zero_duration_plan_yields_initial_snapshot() {
        let g = grid1(64, 10.0);
        let psi = gauss(&g, Frame::Psi2, 0.0, 0.0, 1.0);
        let traj = evolve(&psi, &h2(1.0, 0.5), &TimePlan::new(0.0, 0.1).unwrap()).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.observables.len(), 1);
        assert_eq!(traj.final_state().unwrap().amplitudes(), psi.amplitudes());
    }

    #[test]
    fn free_step_is_exact() {
        // V = 0 spectral propagator versus the analytic plane-wave phases.
        let g = grid1(128, 16.0);
        let psi = gauss(&g, Frame::Psi2, 0.5, 1.0, 1.0);
        let spec = h2(0.5, 0.5);
        let dt = 0.37;
        let out = step_ti(&psi, &spec, dt).unwrap();
        let sp = g.spectral().unwrap();
        let exact = sp.apply_symbol(psi.amplitudes(), |i| {
            let k = sp.k_at(i, 0);
            Complex64::from_polar(1.0, -0.5 * k * k * dt)
        });
        let diff = out.amplitudes().iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn eigenstate_keeps_modulus_and_rotates_phase() {
        // Strang keeps a nearby modified eigenstate; its O(dt^2) offset sets dt.
        let g = grid1(256, 16.0);
        let (omega, eps) = (1.0, 0.6);
        let big = 0.8;
        let psi = Wavefunction::from_fn(g.clone(), Frame::Psi2, 0.0, |x| Complex64::new((-big * x[0] * x[0] / 2.0).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let spec = h2(omega, eps);
        let mut s = SplitStepper::new(&g, &spec).unwrap();
        let mut amps = psi.amplitudes().to_vec();
        let dt = 1e-4;
        for _ in 0..1000 {
            s.step(&mut amps, dt).unwrap();
        }
        let moddiff = amps.iter().zip(psi.amplitudes()).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
        assert!(moddiff < 1e-9, "{moddiff}");
        let centre = g.len() / 2;
        let phase = (amps[centre] / psi.amplitudes()[centre]).arg();
        assert!((phase + big / 2.0 * 0.1).abs() < 1e-6, "{phase}");
    }

    #[test]
    fn norm_preserved_per_step() {
        let g = grid1(256, 16.0);
        let psi = gauss(&g, Frame::Psi2, 1.0, 0.5, 0.8);
        let out = step_ti(&psi, &h2(1.0, 0.3), 0.01).unwrap();
        assert!((out.norm_sq() - psi.norm_sq()).abs() < 1e-12);
        let orig = gauss(&g, Frame::Original, 1.0, 0.5, 0.8);
        let td = HamiltonianSpec::new(Family::ScalingTd, PotentialSpec::harmonic(1.0), ScaleFunction::sqrt_linear(0.3).unwrap(), PhysicalConstants::default());
        let out = step_td(&orig, 0.2, &td, 0.01).unwrap();
        assert!((out.norm_sq() - orig.norm_sq()).abs() < 1e-12);
        assert!((out.time - 0.21).abs() < 1e-15);
    }

    #[test]
    fn tiny_epsilon_exponential_matches_static() {
        let g = grid1(256, 16.0);
        let psi = gauss(&g, Frame::Original, 1.0, 0.5, 0.8);
        let td = HamiltonianSpec::new(Family::ScalingTd, PotentialSpec::harmonic(1.0), ScaleFunction::exponential(1e-12).unwrap(), PhysicalConstants::default());
        let a = step_td(&psi, 0.0, &td, 0.01).unwrap();
        let mut b = psi.clone();
        let v = crate::potentials::grid_potential(&td.potential, &g, &td.constants, 1.0).unwrap();
        SplitStepper::from_parts(&g, v, &td.constants).unwrap().step(b.amplitudes_mut(), 0.01).unwrap();
        let diff = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn local_error_is_third_order() {
        // One step of dt against two steps of dt/2 starting at t = 0.
        let g = grid1(256, 16.0);
        let psi = gauss(&g, Frame::Original, 1.0, 0.5, 1.0);
        let td = HamiltonianSpec::new(Family::ScalingTd, PotentialSpec::harmonic(1.0), ScaleFunction::sqrt_linear(0.3).unwrap(), PhysicalConstants::default());
        let defect = |dt: f64| {
            let one = step_td(&psi, 0.0, &td, dt).unwrap();
            let half = step_td(&psi, 0.0, &td, dt / 2.0).unwrap();
            let two = step_td(&half, dt / 2.0, &td, dt / 2.0).unwrap();
            one.relative_l2(&two).unwrap()
        };
        let (a, b) = (defect(0.04), defect(0.02));
        let order = (a / b).log2();
        assert!((order - 3.0).abs() < 0.15, "order {order}");
    }

    #[test]
    fn free_motion_follows_ehrenfest() {
        let g = grid1(1024, 40.0);
        let psi = gauss(&g, Frame::Psi2, -2.0, 1.5, 1.0);
        let spec = h2(0.7, 0.7);
        let traj = evolve(&psi, &spec, &TimePlan::new(1.0, 1e-3).unwrap().with_stride(1000)).unwrap();
        let (x0, p0) = (traj.observables[0].mean_x[0], traj.observables[0].mean_p[0]);
        for r in &traj.observables {
            assert!((r.mean_x[0] - (x0 + p0 * r.t)).abs() < 1e-8);
        }
        assert!(traj.max_norm_drift() < 1e-9);
    }

    #[test]
    fn harmonic_energy_is_conserved() {
        let g = grid1(256, 16.0);
        // The oscillation of <H> under Strang is O(dt^2): ~7e-8 at dt = 1e-3.
        let psi = gauss(&g, Frame::Psi2, 1.0, 0.0, 1.0);
        let traj = evolve(&psi, &h2(1.0, 0.6), &TimePlan::new(1.0, 1e-4).unwrap().with_stride(10000)).unwrap();
        let drift = traj.max_energy_drift().unwrap();
        assert!(drift < 1e-9, "energy drift {drift:e}");
    }

    #[test]
    fn split_plans_compose() {
        let g = grid1(256, 16.0);
        let psi = gauss(&g, Frame::Psi2, 1.0, 0.3, 1.0);
        let spec = h2(1.0, 0.6);
        let whole = evolve(&psi, &spec, &TimePlan::new(1.0, 0.01).unwrap()).unwrap();
        let first = evolve(&psi, &spec, &TimePlan::new(0.4, 0.01).unwrap()).unwrap();
        let second = evolve(first.final_state().unwrap(), &spec, &TimePlan::span(0.4, 1.0, 0.01).unwrap()).unwrap();
        let d = second.final_state().unwrap().relative_l2(whole.final_state().unwrap()).unwrap();
        assert!(d < 1e-10, "{d:e}");

        let orig = gauss(&g, Frame::Original, 1.0, 0.3, 1.0);
        let td = HamiltonianSpec::new(Family::ScalingTd, PotentialSpec::harmonic(1.0), ScaleFunction::sqrt_linear(0.3).unwrap(), PhysicalConstants::default());
        let whole = evolve(&orig, &td, &TimePlan::new(1.0, 0.01).unwrap()).unwrap();
        let first = evolve(&orig, &td, &TimePlan::new(0.4, 0.01).unwrap()).unwrap();
        let second = evolve(first.final_state().unwrap(), &td, &TimePlan::span(0.4, 1.0, 0.01).unwrap()).unwrap();
        let d = second.final_state().unwrap().relative_l2(whole.final_state().unwrap()).unwrap();
        assert!(d < 1e-10, "{d:e}");
    }

    #[test]
    fn temporal_slope_is_two() {
        let g = grid1(256, 16.0);
        let orig = gauss(&g, Frame::Original, 1.0, 0.3, 1.0);
        let td = HamiltonianSpec::new(Family::ScalingTd, PotentialSpec::harmonic(1.0), ScaleFunction::sqrt_linear(0.3).unwrap(), PhysicalConstants::default());
        let run = |dt: f64| evolve(&orig, &td, &TimePlan::new(1.0, dt).unwrap().with_stride(1 << 20)).unwrap().final_state().cloned().unwrap();
        let dts = [0.04, 0.02, 0.01];
        let reference = run(0.01 / 16.0);
        let errs: Vec<f64> = dts.iter().map(|&dt| run(dt).relative_l2(&reference).unwrap()).collect();
        let slope = crate::numerics::log_log_slope(&dts, &errs);
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn leak_mass_cases() {
        let g = grid1(256, 20.0);
        assert!(leak_mass(&gauss(&g, Frame::Original, 0.0, 0.0, 1.0), 0.1).unwrap() < 1e-12);
        let g100 = grid1(100, 1.0);
        let uniform = Wavefunction::from_fn(g100, Frame::Original, 0.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!((leak_mass(&uniform, 0.1).unwrap() - 0.2).abs() < 1e-12);
        assert!(leak_mass(&uniform, 0.6).is_err());
    }

    #[test]
    fn leak_mass_matches_error_function_oracle() {
        // |psi|^2 is a normal density with standard deviation s = L/4.
        let l = 40.0;
        let s = l / 4.0;
        let g = Arc::new(Grid::new(&[AxisSpec::periodic(4000, -l / 2.0, l / 2.0)]).unwrap());
        let psi = Wavefunction::from_fn(g, Frame::Original, 0.0, |x| Complex64::new((-x[0] * x[0] / (4.0 * s * s)).exp(), 0.0)).unwrap();
        let erf_total = erf(0.5 * l / (s * 2f64.sqrt()));
        let erf_inner = erf(0.4 * l / (s * 2f64.sqrt()));
        let expected = (erf_total - erf_inner) / erf_total;
        assert!((leak_mass(&psi, 0.1).unwrap() - expected).abs() < 1e-6);
    }

    /// Maclaurin series, plenty for |x| < 3.
    fn erf(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 {
            sum += term / (2.0 * n + 1.0);
            n += 1.0;
            term *= -x * x / n;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn crank_nicolson_is_unitary_and_keeps_ground_state() {
        let g = Arc::new(Grid::new(&[AxisSpec::dirichlet(400, -10.0, 10.0)]).unwrap());
        let spec = HamiltonianSpec::new(
            Family::H2,
            PotentialSpec::Sum(vec![PotentialSpec::harmonic(1.0), PotentialSpec::InverseSquare { k: 0.5 }]),
            ScaleFunction::exponential(0.2).unwrap(),
            PhysicalConstants::default(),
        );
        let psi = Wavefunction::from_fn(g.clone(), Frame::Psi2, 0.0, |x| {
            Complex64::new((-0.5 * (x[0] - 3.0).powi(2)).exp(), 0.0)
        })
        .unwrap()
        .normalized()
        .unwrap();
        let traj = evolve(&psi, &spec, &TimePlan::new(1.0, 1e-2).unwrap().with_stride(100)).unwrap();
        assert!(traj.max_norm_drift() < 1e-12);
        assert!(traj.max_energy_drift().unwrap() < 1e-10);
    }

    #[test]
    fn h1_is_not_propagated() {
        let g = grid1(64, 8.0);
        let psi = gauss(&g, Frame::Psi1, 0.0, 0.0, 1.0);
        let spec = h2(1.0, 0.5).with_family(Family::H1);
        assert!(matches!(evolve(&psi, &spec, &TimePlan::new(1.0, 0.1).unwrap()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn leak_abort_triggers() {
        let g = grid1(128, 8.0);
        let psi = gauss(&g, Frame::Psi2, 0.0, 0.0, 0.5);
        // Strongly inverted oscillator pushes everything to the edges.
        let spec = h2(0.0, 2.0);
        let err = evolve(&psi, &spec, &TimePlan::new(5.0, 1e-2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::LeakAbort { .. }));
        assert_eq!(err.exit_code(), 4);
    }
}
