//! Maps between the original frame and the dual frame: the initial chirp,
//! reconstruction of `psi(r, t)` from `psi2` at the transformed time, the
//! inverse map back to `psi2`, and the intermediate `psi1`.
//!
//! ```text
//! psi2(r, 0)   = psi(r, 0) exp(-i eps sum m_a r_a^2 / 2 hbar)
//! psi(r, t)    = f^{-D/2} exp(i eps sum m_a (r_a/f)^2 / 2 hbar) psi2(r/f, t')
//! psi1(y, t')  = psi(f y, t) = f^{-D/2} exp(i eps sum m_a y_a^2 / 2 hbar) psi2(y, t')
//! ```

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{interpolate_tensor, Frame, Grid, PhysicalConstants, Wavefunction};
use crate::operators::{Family, HamiltonianSpec};
use crate::par;
use crate::potentials::PotentialSpec;
use crate::propagation::{observe, LeakPolicy, TimePlan, Trajectory};
use crate::scale::ScaleFunction;

/// Tolerance on `psi2.time` versus the transformed time.
pub const TIME_MATCH_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct MappingContext {
    pub scale: ScaleFunction,
    pub constants: PhysicalConstants,
    /// Spatial dimension per particle.
    pub d_phys: usize,
    /// Total axis count, the exponent in `f^{-D/2}`.
    pub total_dims: usize,
    axis_masses: Vec<f64>,
    chirp_sign: f64,
}

impl MappingContext {
    pub fn new(scale: ScaleFunction, constants: PhysicalConstants, dims: usize) -> Result<Self> {
        constants.validate()?;
        let d_phys = constants.particle_dim(dims)?;
        let axis_masses = constants.axis_masses(dims)?;
        Ok(MappingContext { scale, constants, d_phys, total_dims: dims, axis_masses, chirp_sign: 1.0 })
    }

    /// Flip the sign of both chirps. Round trips survive, the dual
    /// equivalence does not; used to check the comparisons can fail.
    #[doc(hidden)]
    pub fn with_flipped_chirp(mut self) -> Self {
        self.chirp_sign = -self.chirp_sign;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.scale.epsilon()
    }

    pub fn axis_masses(&self) -> &[f64] {
        &self.axis_masses
    }

    /// `eps sum m_a x_a^2 / 2 hbar` at a point.
    fn chirp(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().zip(&self.axis_masses).map(|(x, m)| m * x * x).sum();
        self.chirp_sign * self.epsilon() * s / (2.0 * self.constants.hbar)
    }

    fn check_dims(&self, grid: &Grid) -> Result<()> {
        if grid.dims() != self.total_dims {
            return Err(Error::GridMismatch(format!("context has {} axes, grid has {}", self.total_dims, grid.dims())));
        }
        Ok(())
    }

    /// The dual Hamiltonian for `potential`.
    pub fn h2(&self, potential: &PotentialSpec) -> HamiltonianSpec {
        HamiltonianSpec::new(Family::H2, potential.clone(), self.scale.clone(), self.constants.clone())
    }

    /// The scaling Hamiltonian for `potential`.
    pub fn h_t(&self, potential: &PotentialSpec) -> HamiltonianSpec {
        HamiltonianSpec::new(Family::ScalingTd, potential.clone(), self.scale.clone(), self.constants.clone())
    }
}

fn require(psi: &Wavefunction, frame: Frame) -> Result<()> {
    if psi.frame != frame {
        return Err(Error::FrameMismatch { expected: frame.to_string(), found: psi.frame.to_string() });
    }
    Ok(())
}

/// `psi2(r, 0) = psi(r) exp(-i eps sum m r^2 / 2 hbar)`.
pub fn initial_map(psi: &Wavefunction, ctx: &MappingContext) -> Result<Wavefunction> {
    require(psi, Frame::Original)?;
    if psi.time != 0.0 {
        return Err(Error::TimeMismatch { expected: 0.0, found: psi.time });
    }
    let grid = psi.grid();
    ctx.check_dims(grid)?;
    let amps = psi.amplitudes();
    let out = par::map_indexed(grid.len(), |i| amps[i] * Complex64::from_polar(1.0, -ctx.chirp(&grid.point(i))));
    Ok(Wavefunction::from_parts(grid.clone(), out, Frame::Psi2, 0.0))
}

/// `psi(r, t)` on `out_grid` (default: the grid of `psi2`) from `psi2` at `t'`.
pub fn reconstruct(psi2: &Wavefunction, t: f64, ctx: &MappingContext, out_grid: Option<&Arc<Grid>>) -> Result<Wavefunction> {
    require(psi2, Frame::Psi2)?;
    ctx.check_dims(psi2.grid())?;
    let tp = ctx.scale.transformed_time(t)?;
    if (psi2.time - tp).abs() > TIME_MATCH_TOL {
        return Err(Error::TimeMismatch { expected: tp, found: psi2.time });
    }
    let f = ctx.scale.f(t)?;
    let target = out_grid.unwrap_or(psi2.grid()).clone();
    ctx.check_dims(&target)?;
    let values = if f == 1.0 && *target == **psi2.grid() {
        psi2.amplitudes().to_vec()
    } else {
        let coords: Vec<Vec<f64>> = target.axis_points().into_iter().map(|xs| xs.into_iter().map(|x| x / f).collect()).collect();
        interpolate_tensor(psi2, &coords)?
    };
    let jac = f.powf(-(ctx.total_dims as f64) / 2.0);
    let inv = 1.0 / f;
    let out = par::map_indexed(target.len(), |i| {
        let mut y = target.point(i);
        y.iter_mut().for_each(|v| *v *= inv);
        values[i] * Complex64::from_polar(jac, ctx.chirp(&y))
    });
    Ok(Wavefunction::from_parts(target, out, Frame::Original, t))
}

/// Samples `psi` at `f y` for every `y` of the window sub-lattice.
fn pull_back(psi: &Wavefunction, f: f64) -> Result<(Arc<Grid>, Vec<Complex64>)> {
    let window = Arc::new(psi.grid().contracted_window(f)?);
    if f == 1.0 {
        return Ok((window, psi.amplitudes().to_vec()));
    }
    let coords: Vec<Vec<f64>> = window.axis_points().into_iter().map(|ys| ys.into_iter().map(|y| y * f).collect()).collect();
    let values = interpolate_tensor(psi, &coords)?;
    Ok((window, values))
}

/// `psi2(y, t')` on the window of points `y` with `f y` inside the domain.
pub fn inverse_map(psi: &Wavefunction, ctx: &MappingContext) -> Result<Wavefunction> {
    require(psi, Frame::Original)?;
    ctx.check_dims(psi.grid())?;
    let t = psi.time;
    let f = ctx.scale.f(t)?;
    let tp = ctx.scale.transformed_time(t)?;
    let (window, values) = pull_back(psi, f)?;
    let jac = f.powf(ctx.total_dims as f64 / 2.0);
    let out = par::map_indexed(window.len(), |i| values[i] * Complex64::from_polar(jac, -ctx.chirp(&window.point(i))));
    Ok(Wavefunction::from_parts(window, out, Frame::Psi2, tp))
}

/// `psi1(y, t') = psi(f y, t)` on the window sub-lattice.
pub fn map_to_psi1(psi: &Wavefunction, ctx: &MappingContext) -> Result<Wavefunction> {
    require(psi, Frame::Original)?;
    ctx.check_dims(psi.grid())?;
    let f = ctx.scale.f(psi.time)?;
    let tp = ctx.scale.transformed_time(psi.time)?;
    let (window, values) = pull_back(psi, f)?;
    Ok(Wavefunction::from_parts(window, values, Frame::Psi1, tp))
}

/// `psi1 = e^{-D eps t'/2} e^{i eps sum m r^2 / 2 hbar} psi2`, same grid.
pub fn psi1_from_psi2(psi2: &Wavefunction, ctx: &MappingContext) -> Result<Wavefunction> {
    require(psi2, Frame::Psi2)?;
    let grid = psi2.grid();
    ctx.check_dims(grid)?;
    let damp = (-(ctx.total_dims as f64) * ctx.epsilon() * psi2.time / 2.0).exp();
    let amps = psi2.amplitudes();
    let out = par::map_indexed(grid.len(), |i| amps[i] * Complex64::from_polar(damp, ctx.chirp(&grid.point(i))));
    Ok(Wavefunction::from_parts(grid.clone(), out, Frame::Psi1, psi2.time))
}

/// Result of a mapped evolution.
#[derive(Clone, Debug)]
pub struct MappedRun {
    /// Original-frame states and observables at the requested times.
    pub trajectory: Trajectory,
    /// The underlying dual-frame run on the `t'` clock.
    pub dual: Trajectory,
    pub transformed_times: Vec<f64>,
}

/// Transformed times for `physical_times`, checking they increase.
pub fn transformed_times(scale: &ScaleFunction, physical_times: &[f64]) -> Result<Vec<f64>> {
    if physical_times.is_empty() {
        return Err(Error::InvalidArgument("no physical times requested".into()));
    }
    if physical_times.windows(2).any(|w| w[1] <= w[0]) || physical_times[0] < 0.0 {
        return Err(Error::InvalidArgument("physical times must be non-negative and increasing".into()));
    }
    let fs = physical_times.iter().map(|&t| scale.f(t)).collect::<Result<Vec<_>>>()?;
    if fs.iter().any(|&f| f < 1.0) || fs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Unsupported("reconstruction needs a growing scale function (f >= 1)".into()));
    }
    physical_times.iter().map(|&t| scale.transformed_time(t)).collect()
}

/// Initial map, `H2` evolution landing on every `t'_k` with step `dt_prime`,
/// reconstruction at every `t_k`.
pub fn evolve_mapped(
    psi0: &Wavefunction,
    potential: &PotentialSpec,
    ctx: &MappingContext,
    physical_times: &[f64],
    dt_prime: f64,
    leak: &LeakPolicy,
) -> Result<MappedRun> {
    require(psi0, Frame::Original)?;
    let tps = transformed_times(&ctx.scale, physical_times)?;
    let h2 = ctx.h2(potential);
    let psi2 = initial_map(psi0, ctx)?;
    let t_end = *tps.last().expect("non-empty");
    let plan = TimePlan::new(t_end, dt_prime)?.with_stride(usize::MAX).with_landmarks(&tps)?;
    let dual = crate::propagation::evolve_with(&psi2, &h2, &plan, leak)?;
    let states: Vec<&Wavefunction> = tps
        .iter()
        .map(|&tp| dual.state_at(tp, TIME_MATCH_TOL).ok_or(Error::TimeMismatch { expected: tp, found: f64::NAN }))
        .collect::<Result<_>>()?;
    let recon = par::try_map_indexed(tps.len(), |k| {
        let mut s = states[k].clone();
        s.time = tps[k];
        reconstruct(&s, physical_times[k], ctx, None)
    })?;
    let h_t = ctx.h_t(potential);
    let mut trajectory = Trajectory::default();
    for (k, psi) in recon.into_iter().enumerate() {
        let row = observe(&psi, &h_t, physical_times[k], leak.margin_fraction)?;
        trajectory.max_leak = trajectory.max_leak.max(row.leak);
        trajectory.observables.push(row);
        trajectory.snapshots.push((k, physical_times[k], psi));
    }
    trajectory.leak_warnings = dual.leak_warnings.clone();
    Ok(MappedRun { trajectory, dual, transformed_times: tps })
}

/// Direct evolution under the scaling Hamiltonian landing on every
/// requested time.
pub fn evolve_direct(psi0: &Wavefunction, potential: &PotentialSpec, ctx: &MappingContext, physical_times: &[f64], dt: f64, leak: &LeakPolicy) -> Result<Trajectory> {
    transformed_times(&ctx.scale, physical_times)?;
    let plan = TimePlan::new(*physical_times.last().expect("checked"), dt)?.with_stride(usize::MAX).with_landmarks(physical_times)?;
    crate::propagation::evolve_with(psi0, &ctx.h_t(potential), &plan, leak)
}
