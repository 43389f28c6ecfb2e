//! Actions of the scaling Hamiltonian `H(t)`, the intermediate `H1` and the
//! dual `H2` on grid wavefunctions, plus the operator identities linking them.
//!
//! Periodic grids use spectral derivatives (Nyquist term dropped for odd
//! derivatives); dirichlet-offset grids use the 3-point stencil.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Frame, Grid, PhysicalConstants, Topology, Wavefunction};
use crate::par;
use crate::potentials::{effective_potential, grid_potential, PotentialSpec};
use crate::scale::ScaleFunction;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// The time-dependent scaling Hamiltonian.
    ScalingTd,
    /// `p^2/2m - eps r.p + V`, time independent but not symmetric.
    H1,
    /// `p^2/2m + V - m eps^2 r^2 / 2`.
    H2,
}

impl Family {
    pub fn frame(self) -> Frame {
        match self {
            Family::ScalingTd => Frame::Original,
            Family::H1 => Frame::Psi1,
            Family::H2 => Frame::Psi2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    pub family: Family,
    pub potential: PotentialSpec,
    pub scale: ScaleFunction,
    pub constants: PhysicalConstants,
}

impl HamiltonianSpec {
    pub fn new(family: Family, potential: PotentialSpec, scale: ScaleFunction, constants: PhysicalConstants) -> Self {
        HamiltonianSpec { family, potential, scale, constants }
    }

    pub fn epsilon(&self) -> f64 {
        self.scale.epsilon()
    }

    /// Same physics, other member of the chain.
    pub fn with_family(&self, family: Family) -> Self {
        HamiltonianSpec { family, ..self.clone() }
    }

    /// `V - sum m_a eps^2 x_a^2 / 2`.
    pub fn dual_potential(&self, dims: usize) -> Result<PotentialSpec> {
        effective_potential(&self.potential, self.epsilon(), &self.constants, dims)
    }

    /// `(kinetic coefficient, f, potential prefactor)` of `H(t)`:
    /// `H(t) = c_T T + c_V V(x/f)/f`, `c_T = f' f / eps`, `c_V = f' / eps`.
    pub fn scaling_coefficients(&self, t: f64) -> Result<(f64, f64, f64)> {
        let (f, fp) = self.scale.eval(t)?;
        let eps = self.epsilon();
        Ok((fp * f / eps, f, fp / eps))
    }

    /// Potential values on `grid` for this family at time `t`
    /// (`t` is ignored for the time-independent families).
    pub fn potential_on_grid(&self, grid: &Grid, t: f64) -> Result<Vec<f64>> {
        match self.family {
            Family::ScalingTd => {
                let (_, f, cv) = self.scaling_coefficients(t)?;
                let mut v = grid_potential(&self.potential, grid, &self.constants, f)?;
                par::for_each_indexed_mut(&mut v, |_, x| *x *= cv);
                Ok(v)
            }
            Family::H1 => grid_potential(&self.potential, grid, &self.constants, 1.0),
            Family::H2 => grid_potential(&self.dual_potential(grid.dims())?, grid, &self.constants, 1.0),
        }
    }

    pub fn kinetic_coefficient(&self, t: f64) -> Result<f64> {
        match self.family {
            Family::ScalingTd => Ok(self.scaling_coefficients(t)?.0),
            Family::H1 | Family::H2 => Ok(1.0),
        }
    }
}

fn require_frame(psi: &Wavefunction, frame: Frame) -> Result<()> {
    if psi.frame != frame {
        return Err(Error::FrameMismatch { expected: frame.to_string(), found: psi.frame.to_string() });
    }
    Ok(())
}

/// Kinetic symbol `sum_a hbar^2 k_a^2 / 2 m_a` on the spectral lattice.
pub(crate) fn kinetic_symbol(grid: &Grid, constants: &PhysicalConstants) -> Result<Vec<f64>> {
    let sp = grid.spectral()?;
    let masses = constants.axis_masses(grid.dims())?;
    let h2 = constants.hbar * constants.hbar;
    Ok(par::map_indexed(grid.len(), |i| {
        (0..grid.dims())
            .map(|a| {
                let k = sp.k_at(i, a);
                h2 * k * k / (2.0 * masses[a])
            })
            .sum()
    }))
}

/// `coefficient * sum_a p_a^2 / 2 m_a` applied to `psi`.
pub fn apply_kinetic(psi: &Wavefunction, coefficient: f64, constants: &PhysicalConstants) -> Result<Wavefunction> {
    let grid = psi.grid();
    let out = match grid.topology() {
        Topology::Periodic => {
            let symbol = kinetic_symbol(grid, constants)?;
            grid.spectral()?
                .apply_symbol(psi.amplitudes(), |i| Complex64::new(coefficient * symbol[i], 0.0))
        }
        Topology::DirichletOffset => {
            let masses = constants.axis_masses(grid.dims())?;
            let amps = psi.amplitudes();
            let h2 = constants.hbar * constants.hbar;
            par::map_indexed(grid.len(), |i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, &m) in masses.iter().enumerate() {
                    acc += stencil_second(grid, amps, i, a) * (-h2 / (2.0 * m));
                }
                acc * coefficient
            })
        }
    };
    Ok(psi.with_amplitudes(out))
}

/// 3-point second difference along `axis` with antisymmetric ghosts.
pub(crate) fn stencil_second(grid: &Grid, amps: &[Complex64], i: usize, axis: usize) -> Complex64 {
    let n = grid.axis(axis).n;
    let stride = grid.strides()[axis];
    let dx = grid.axis(axis).dx;
    let j = (i / stride) % n;
    let c = amps[i];
    let plus = if j + 1 < n { amps[i + stride] } else { -c };
    let minus = if j > 0 { amps[i - stride] } else { -c };
    (plus - 2.0 * c + minus) / (dx * dx)
}

fn add_potential(kin: &mut Wavefunction, psi: &Wavefunction, v: &[f64]) {
    let src = psi.amplitudes();
    par::for_each_indexed_mut(kin.amplitudes_mut(), |i, z| *z += src[i] * v[i]);
}

/// `-i hbar d/dx_axis`.
pub(crate) fn momentum(psi: &Wavefunction, axis: usize, hbar: f64) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    let d = match grid.topology() {
        Topology::Periodic => grid.spectral()?.derivative(psi.amplitudes(), axis),
        Topology::DirichletOffset => crate::grid::central_difference(grid, psi.amplitudes(), axis),
    };
    Ok(d.into_iter().map(|z| z * (-I * hbar)).collect())
}

fn times_coordinate(grid: &Grid, amps: &[Complex64], axis: usize) -> Vec<Complex64> {
    par::map_indexed(amps.len(), |i| amps[i] * grid.coord(i, axis))
}

/// `H(t) psi` for the scaling Hamiltonian.
pub fn apply_h_t(psi: &Wavefunction, t: f64, spec: &HamiltonianSpec) -> Result<Wavefunction> {
    require_frame(psi, Frame::Original)?;
    let ck = spec.kinetic_coefficient(t)?;
    let v = spec.with_family(Family::ScalingTd).potential_on_grid(psi.grid(), t)?;
    let mut out = apply_kinetic(psi, ck, &spec.constants)?;
    add_potential(&mut out, psi, &v);
    Ok(out)
}

/// `H1 psi = [p^2/2m - eps r.p + V] psi`, with `r` to the left of `p`.
pub fn apply_h1(psi: &Wavefunction, spec: &HamiltonianSpec) -> Result<Wavefunction> {
    require_frame(psi, Frame::Psi1)?;
    let grid = psi.grid();
    let eps = spec.epsilon();
    let v = grid_potential(&spec.potential, grid, &spec.constants, 1.0)?;
    let mut out = apply_kinetic(psi, 1.0, &spec.constants)?;
    add_potential(&mut out, psi, &v);
    for a in 0..grid.dims() {
        let p = momentum(psi, a, spec.constants.hbar)?;
        let rp = times_coordinate(grid, &p, a);
        par::for_each_indexed_mut(out.amplitudes_mut(), |i, z| *z -= rp[i] * eps);
    }
    Ok(out)
}

/// `H2 psi = [p^2/2m + V - m eps^2 r^2/2] psi`.
pub fn apply_h2(psi: &Wavefunction, spec: &HamiltonianSpec) -> Result<Wavefunction> {
    require_frame(psi, Frame::Psi2)?;
    let v = spec.with_family(Family::H2).potential_on_grid(psi.grid(), 0.0)?;
    let mut out = apply_kinetic(psi, 1.0, &spec.constants)?;
    add_potential(&mut out, psi, &v);
    Ok(out)
}

/// `(p.r - r.p) psi + i hbar d psi`, ideally zero; `d` is the grid's axis count.
pub fn commutator_defect(psi: &Wavefunction, hbar: f64) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    let (pr, rp) = commutator_parts(psi, hbar)?;
    let d = grid.dims() as f64;
    let amps = psi.amplitudes();
    Ok(par::map_indexed(amps.len(), |i| pr[i] - rp[i] + I * hbar * d * amps[i]))
}

/// `(p.r psi, r.p psi)` summed over axes.
fn commutator_parts(psi: &Wavefunction, hbar: f64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let grid = psi.grid();
    let n = grid.len();
    let mut pr = vec![Complex64::new(0.0, 0.0); n];
    let mut rp = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..grid.dims() {
        let xpsi = psi.with_amplitudes(times_coordinate(grid, psi.amplitudes(), a));
        let p_of_x = momentum(&xpsi, a, hbar)?;
        let x_of_p = times_coordinate(grid, &momentum(psi, a, hbar)?, a);
        for i in 0..n {
            pr[i] += p_of_x[i];
            rp[i] += x_of_p[i];
        }
    }
    Ok((pr, rp))
}

/// `H1 psi` rebuilt as `(p - m eps r)^2/2m + (eps/2)(p.r - r.p) + V - m eps^2 r^2/2`.
pub fn h1_decomposed(psi: &Wavefunction, spec: &HamiltonianSpec) -> Result<Wavefunction> {
    require_frame(psi, Frame::Psi1)?;
    let grid = psi.grid();
    let hbar = spec.constants.hbar;
    let eps = spec.epsilon();
    let masses = spec.constants.axis_masses(grid.dims())?;
    let n = grid.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (a, &m) in masses.iter().enumerate() {
        // A = p_a - m eps x_a, applied twice.
        let shifted = |w: &Wavefunction| -> Result<Vec<Complex64>> {
            let p = momentum(w, a, hbar)?;
            let xw = times_coordinate(grid, w.amplitudes(), a);
            Ok(p.iter().zip(&xw).map(|(p, x)| p - x * (m * eps)).collect())
        };
        let once = psi.with_amplitudes(shifted(psi)?);
        let twice = shifted(&once)?;
        for i in 0..n {
            out[i] += twice[i] / (2.0 * m);
        }
    }
    let (pr, rp) = commutator_parts(psi, hbar)?;
    let v = grid_potential(&spec.potential, grid, &spec.constants, 1.0)?;
    let amps = psi.amplitudes();
    for i in 0..n {
        let r2m: f64 = (0..grid.dims()).map(|a| masses[a] * grid.coord(i, a).powi(2)).sum();
        out[i] += (pr[i] - rp[i]) * (0.5 * eps) + amps[i] * (v[i] - 0.5 * eps * eps * r2m);
    }
    Ok(psi.with_amplitudes(out))
}

/// `<psi|H|psi> / <psi|psi>` for a Hermitian family (`H(t)` or `H2`).
pub fn energy(psi: &Wavefunction, spec: &HamiltonianSpec, t: f64) -> Result<f64> {
    let grid = psi.grid();
    let ck = spec.kinetic_coefficient(t)?;
    let v = spec.potential_on_grid(grid, t)?;
    let amps = psi.amplitudes();
    let weight: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    let pot: f64 = amps.iter().zip(&v).map(|(z, v)| z.norm_sqr() * v).sum();
    let kin = match grid.topology() {
        Topology::Periodic => {
            let sp = grid.spectral()?;
            let s = sp.spectrum(amps);
            let sym = kinetic_symbol(grid, &spec.constants)?;
            let spec_weight: f64 = s.iter().map(|z| z.norm_sqr()).sum();
            s.iter().zip(&sym).map(|(z, k)| z.norm_sqr() * k).sum::<f64>() / spec_weight * weight
        }
        Topology::DirichletOffset => {
            let tpsi = apply_kinetic(psi, 1.0, &spec.constants)?;
            amps.iter().zip(tpsi.amplitudes()).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
        }
    };
    Ok((ck * kin + pot) / weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, AxisSpec};
    use std::sync::Arc;

    fn grid1(n: usize, l: f64) -> Arc<Grid> {
        Arc::new(Grid::new(&[AxisSpec::periodic(n, -l, l)]).unwrap())
    }

    fn gauss(grid: &Arc<Grid>, frame: Frame, x0: f64, k0: f64, sigma: f64) -> Wavefunction {
        Wavefunction::from_fn(grid.clone(), frame, 0.0, |x| {
            let mut e = 0.0;
            let mut ph = 0.0;
            for (a, &xa) in x.iter().enumerate() {
                let d = xa - x0 * (1.0 + 0.5 * a as f64);
                e -= d * d / (4.0 * sigma * sigma);
                ph += k0 * xa * (1.0 - 0.3 * a as f64);
            }
            Complex64::from_polar(e.exp(), ph)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn spec(family: Family, omega: f64, eps: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(
            family,
            PotentialSpec::harmonic(omega),
            ScaleFunction::sqrt_linear(eps).unwrap(),
            PhysicalConstants::default(),
        )
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn plane_wave_is_kinetic_eigenfunction() {
        let g = Arc::new(Grid::new(&[AxisSpec::periodic(64, 0.0, 2.0 * std::f64::consts::PI)]).unwrap());
        let c = PhysicalConstants::new(0.7, vec![1.3]).unwrap();
        let k = 5.0;
        let psi = Wavefunction::from_fn(g, Frame::Original, 0.0, |x| Complex64::from_polar(1.0, k * x[0])).unwrap();
        let out = apply_kinetic(&psi, 1.0, &c).unwrap();
        let e = 0.7 * 0.7 * k * k / (2.0 * 1.3);
        let expected: Vec<_> = psi.amplitudes().iter().map(|z| z * e).collect();
        assert!(max_diff(out.amplitudes(), &expected) < 1e-12);
        let flat = psi.with_amplitudes(vec![Complex64::new(1.0, 0.0); 64]);
        assert!(apply_kinetic(&flat, 1.0, &c).unwrap().amplitudes().iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn kinetic_of_gaussian_at_centre() {
        // -psi''/2 at 0 for psi = exp(-x^2/4), sigma = 1: psi'' (0) = -1/2.
        let g = grid1(256, 20.0);
        let psi = Wavefunction::from_fn(g, Frame::Original, 0.0, |x| Complex64::new((-x[0] * x[0] / 4.0).exp(), 0.0))
            .unwrap();
        let out = apply_kinetic(&psi, 1.0, &PhysicalConstants::default()).unwrap();
        assert!((out.amplitudes()[128] - Complex64::new(0.25, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn dirichlet_stencil_is_second_order() {
        // sin mode vanishing at the walls: -u''/2 = (pi m / L)^2 u / 2.
        let errs: Vec<f64> = [64usize, 128]
            .iter()
            .map(|&n| {
                let g = Arc::new(Grid::new(&[AxisSpec::dirichlet(n, -1.0, 1.0)]).unwrap());
                let kk = std::f64::consts::PI * 2.0 / 2.0;
                let psi = Wavefunction::from_fn(g, Frame::Original, 0.0, |x| {
                    Complex64::new((kk * (x[0] + 1.0)).sin(), 0.0)
                })
                .unwrap();
                let out = apply_kinetic(&psi, 1.0, &PhysicalConstants::default()).unwrap();
                let expected: Vec<_> = psi.amplitudes().iter().map(|z| z * (kk * kk / 2.0)).collect();
                max_diff(out.amplitudes(), &expected)
            })
            .collect();
        assert!(errs[0] / errs[1] > 3.8, "ratio {}", errs[0] / errs[1]);
    }

    #[test]
    fn h_t_at_zero_is_standard_form() {
        let g = grid1(256, 20.0);
        let psi = gauss(&g, Frame::Original, 0.7, 0.4, 1.0);
        for (eps, expo) in [(0.3, false), (0.6, true)] {
            let scale = if expo { ScaleFunction::exponential(eps) } else { ScaleFunction::sqrt_linear(eps) }.unwrap();
            let s = HamiltonianSpec::new(Family::ScalingTd, PotentialSpec::harmonic(1.0), scale, PhysicalConstants::default());
            let h = apply_h_t(&psi, 0.0, &s).unwrap();
            let mut reference = apply_kinetic(&psi, 1.0, &s.constants).unwrap();
            let v = grid_potential(&s.potential, &g, &s.constants, 1.0).unwrap();
            add_potential(&mut reference, &psi, &v);
            assert!(max_diff(h.amplitudes(), reference.amplitudes()) < 1e-10);
        }
    }

    #[test]
    fn sqrt_linear_kinetic_is_time_independent() {
        let s = spec(Family::ScalingTd, 1.0, 0.3);
        for t in [0.0, 0.5, 3.0] {
            assert!((s.kinetic_coefficient(t).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_matches_caldirola_kanai_form() {
        let g = grid1(128, 12.0);
        let psi = gauss(&g, Frame::Original, 0.5, 0.0, 1.0);
        let (eps, w, t) = (0.4, 1.2, 0.9);
        let s = HamiltonianSpec::new(
            Family::ScalingTd,
            PotentialSpec::harmonic(w),
            ScaleFunction::exponential(eps).unwrap(),
            PhysicalConstants::default(),
        );
        let h = apply_h_t(&psi, t, &s).unwrap();
        let mut ck = apply_kinetic(&psi, (2.0 * eps * t).exp(), &s.constants).unwrap();
        let v: Vec<f64> = (0..g.len())
            .map(|i| 0.5 * w * w * ((-eps * t).exp() * g.coord(i, 0)).powi(2))
            .collect();
        add_potential(&mut ck, &psi, &v);
        assert!(max_diff(h.amplitudes(), ck.amplitudes()) < 1e-10);
    }

    #[test]
    fn h1_on_plane_wave() {
        let g = Arc::new(Grid::new(&[AxisSpec::periodic(64, 0.0, 2.0 * std::f64::consts::PI)]).unwrap());
        let k = 3.0;
        let eps = 0.25;
        let s = HamiltonianSpec::new(
            Family::H1,
            PotentialSpec::Quadratic { curvature: vec![0.0] },
            ScaleFunction::exponential(eps).unwrap(),
            PhysicalConstants::default(),
        );
        let psi = Wavefunction::from_fn(g.clone(), Frame::Psi1, 0.0, |x| Complex64::from_polar(1.0, k * x[0])).unwrap();
        let out = apply_h1(&psi, &s).unwrap();
        let expected: Vec<_> = (0..g.len())
            .map(|i| psi.amplitudes()[i] * (k * k / 2.0 - eps * k * g.coord(i, 0)))
            .collect();
        assert!(max_diff(out.amplitudes(), &expected) < 1e-10);
    }

    #[test]
    fn h1_with_tiny_epsilon_reduces_to_standard_form() {
        let g = grid1(128, 12.0);
        let psi = gauss(&g, Frame::Psi1, 0.5, 0.3, 1.0);
        let s = spec(Family::H1, 1.0, 1e-300);
        let out = apply_h1(&psi, &s).unwrap();
        let mut reference = apply_kinetic(&psi, 1.0, &s.constants).unwrap();
        add_potential(&mut reference, &psi, &grid_potential(&s.potential, &g, &s.constants, 1.0).unwrap());
        assert!(max_diff(out.amplitudes(), reference.amplitudes()) < 1e-14);
    }

    #[test]
    fn h1_antisymmetric_part_is_constant() {
        for dims in [1usize, 2] {
            let specs: Vec<_> = (0..dims).map(|_| AxisSpec::periodic(if dims == 1 { 256 } else { 64 }, -12.0, 12.0)).collect();
            let g = Arc::new(Grid::new(&specs).unwrap());
            let phi = gauss(&g, Frame::Psi1, 0.8, 0.5, 1.0);
            let psi = gauss(&g, Frame::Psi1, -0.4, -0.2, 1.2);
            let eps = 0.37;
            let s = spec(Family::H1, 1.0, eps);
            let lhs = inner_product(&phi, &apply_h1(&psi, &s).unwrap()).unwrap()
                - inner_product(&apply_h1(&phi, &s).unwrap(), &psi).unwrap();
            let rhs = -I * (dims as f64) * eps * inner_product(&phi, &psi).unwrap();
            assert!((lhs - rhs).norm() < 1e-8, "d={dims}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn h2_ground_state_residual() {
        let g = grid1(512, 20.0);
        let (omega, eps): (f64, f64) = (1.0, 0.6);
        let big = (omega * omega - eps * eps).sqrt();
        let psi = Wavefunction::from_fn(g, Frame::Psi2, 0.0, |x| Complex64::new((-big * x[0] * x[0] / 2.0).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let s = spec(Family::H2, omega, eps);
        let out = apply_h2(&psi, &s).unwrap();
        let expected = psi.scaled(Complex64::new(big / 2.0, 0.0));
        assert!(out.relative_l2(&expected).unwrap() < 1e-8);
    }

    #[test]
    fn h2_is_symmetric() {
        let g = grid1(256, 15.0);
        let phi = gauss(&g, Frame::Psi2, 0.8, 0.5, 1.0);
        let psi = gauss(&g, Frame::Psi2, -0.4, -0.2, 1.2);
        let s = spec(Family::H2, 1.0, 0.6);
        let a = inner_product(&phi, &apply_h2(&psi, &s).unwrap()).unwrap();
        let b = inner_product(&apply_h2(&phi, &s).unwrap(), &psi).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn commutator_identity_in_one_and_two_dims() {
        for dims in [1usize, 2] {
            let specs: Vec<_> = (0..dims).map(|_| AxisSpec::periodic(if dims == 1 { 512 } else { 128 }, -14.0, 14.0)).collect();
            let g = Arc::new(Grid::new(&specs).unwrap());
            let psi = gauss(&g, Frame::Original, 0.5, 0.7, 1.0);
            let scale = psi.amplitudes().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let defect = commutator_defect(&psi, 1.0).unwrap();
            let worst = defect.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(worst < 1e-8 * scale, "d={dims}: {worst}");
        }
    }

    #[test]
    fn commutator_on_single_mode_spills() {
        // x e^{ikx} is not periodic, so the defect is O(1) near the seam.
        let g = grid1(64, std::f64::consts::PI);
        let psi = Wavefunction::from_fn(g, Frame::Original, 0.0, |x| Complex64::from_polar(1.0, 3.0 * x[0])).unwrap();
        let worst = commutator_defect(&psi, 1.0).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst > 1e-3);
    }

    #[test]
    fn h1_decomposition_agrees() {
        let g = grid1(512, 16.0);
        let psi = gauss(&g, Frame::Psi1, 0.6, 0.8, 1.0);
        let s = spec(Family::H1, 1.0, 0.45);
        let a = apply_h1(&psi, &s).unwrap();
        let b = h1_decomposed(&psi, &s).unwrap();
        assert!(max_diff(a.amplitudes(), b.amplitudes()) < 1e-8);
    }

    #[test]
    fn dual_pair_gives_identical_h2() {
        let g = grid1(128, 12.0);
        let psi = gauss(&g, Frame::Psi2, 0.6, 0.8, 1.0);
        let a = HamiltonianSpec::new(Family::H2, PotentialSpec::harmonic(1.0), ScaleFunction::sqrt_linear(0.3).unwrap(), PhysicalConstants::default());
        let b = HamiltonianSpec::new(Family::H2, PotentialSpec::harmonic(1.0), ScaleFunction::exponential(0.3).unwrap(), PhysicalConstants::default());
        let ha = apply_h2(&psi, &a).unwrap();
        let hb = apply_h2(&psi, &b).unwrap();
        assert_eq!(ha.amplitudes(), hb.amplitudes());
    }

    #[test]
    fn operators_are_linear() {
        let g = grid1(128, 12.0);
        let a = gauss(&g, Frame::Psi2, 0.6, 0.8, 1.0);
        let b = gauss(&g, Frame::Psi2, -1.0, 0.1, 0.7);
        let (al, be) = (Complex64::new(0.3, -1.2), Complex64::new(-0.5, 0.25));
        let combo = a.with_amplitudes(a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| al * x + be * y).collect());
        let s = spec(Family::H2, 1.0, 0.6);
        let lhs = apply_h2(&combo, &s).unwrap();
        let (ha, hb) = (apply_h2(&a, &s).unwrap(), apply_h2(&b, &s).unwrap());
        let rhs: Vec<_> = ha.amplitudes().iter().zip(hb.amplitudes()).map(|(x, y)| al * x + be * y).collect();
        assert!(max_diff(lhs.amplitudes(), &rhs) < 1e-12);
    }

    #[test]
    fn frame_is_enforced() {
        let g = grid1(64, 8.0);
        let psi = gauss(&g, Frame::Original, 0.0, 0.0, 1.0);
        assert!(apply_h2(&psi, &spec(Family::H2, 1.0, 0.5)).is_err());
        assert!(apply_h1(&psi, &spec(Family::H1, 1.0, 0.5)).is_err());
    }

    #[test]
    fn energy_of_ground_state() {
        let g = grid1(256, 16.0);
        let psi = Wavefunction::from_fn(g, Frame::Psi2, 0.0, |x| Complex64::new((-0.4 * x[0] * x[0]).exp(), 0.0)).unwrap();
        let e = energy(&psi, &spec(Family::H2, 1.0, 0.6), 0.0).unwrap();
        assert!((e - 0.4).abs() < 1e-12);
    }
}
