//! Run configuration: one JSON document, validated as a whole at load.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::GaussianState;
use crate::duality::MappingContext;
use crate::error::{Error, Result};
use crate::grid::{read_snapshot, AxisSpec, Frame, Grid, PhysicalConstants, Wavefunction};
use crate::potentials::PotentialSpec;
use crate::propagation::LeakPolicy;
use crate::scale::{ScaleFunction, ScaleSpec};

/// Every tolerance a run checks against. Written to each manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative L2 between the two paths of a comparison, or numeric versus
    /// closed form in analytic mode.
    pub compare_rel_l2: f64,
    pub norm_drift: f64,
    /// Relative drift of the dual energy on time-independent runs.
    pub energy_drift: f64,
    pub identity_residual: f64,
    /// `psi1` pullback versus the closed-form relation to `psi2`.
    pub psi1_relation: f64,
    pub slope_target: f64,
    pub slope_window: f64,
    pub spatial_floor: f64,
    /// Spectral weight allowed in the upper half of the wavenumber band.
    pub resolution_guard: f64,
    pub leak_margin: f64,
    pub leak_warn: f64,
    pub leak_abort: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let leak = LeakPolicy::default();
        Tolerances {
            compare_rel_l2: 1e-5,
            norm_drift: 1e-9,
            energy_drift: 1e-8,
            identity_residual: 1e-8,
            psi1_relation: 1e-9,
            slope_target: 2.0,
            slope_window: 0.1,
            spatial_floor: 1e-10,
            resolution_guard: 1e-10,
            leak_margin: leak.margin_fraction,
            leak_warn: leak.warn_threshold,
            leak_abort: leak.abort_threshold,
        }
    }
}

impl Tolerances {
    pub fn leak_policy(&self) -> LeakPolicy {
        LeakPolicy { margin_fraction: self.leak_margin, warn_threshold: self.leak_warn, abort_threshold: self.leak_abort }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<AxisSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Step of the dual clock; defaults to `dt`.
    #[serde(default)]
    pub dt_prime: Option<f64>,
    /// Snapshot every this many steps; by default only at output times.
    #[serde(default)]
    pub snapshot_stride: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// `sigma` is the position standard deviation, one value or one per axis.
    Gaussian {
        center: Vec<f64>,
        #[serde(default)]
        momentum: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// Snapshot file on the configured grid, relative to the config file.
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepperChoice {
    /// The scaling Hamiltonian in the original frame.
    Td,
    /// The dual Hamiltonian on the transformed clock.
    Ti,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub dt_ladder: Vec<f64>,
    #[serde(default = "default_steppers")]
    pub steppers: Vec<StepperChoice>,
    /// Point counts per axis for the spatial study, each dividing the next.
    #[serde(default)]
    pub spatial_ladder: Vec<usize>,
}

fn default_steppers() -> Vec<StepperChoice> {
    vec![StepperChoice::Td, StepperChoice::Ti]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub samples: usize,
    pub sigma_range: [f64; 2],
    pub momentum_range: [f64; 2],
    /// Distance from the centre to every wall in units of sigma, at least 6.
    /// `|psi|` falls to `exp(-p^2/4)` there.
    pub padding_sigmas: f64,
    /// Transformed time at which the `psi1` equation is checked.
    pub t_prime: f64,
    /// Finite-difference half-widths, each halving.
    pub fd_steps: Vec<f64>,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig { samples: 5, sigma_range: [0.8, 1.4], momentum_range: [-1.0, 1.0], padding_sigmas: 12.0, t_prime: 0.5, fd_steps: vec![0.02, 0.01, 0.005] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub constants: PhysicalConstants,
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    pub scale: ScaleSpec,
    pub time: TimeConfig,
    /// Physical times at which both paths are reconciled; defaults to `[t_end]`.
    #[serde(default)]
    pub output_times: Vec<f64>,
    pub initial_state: InitialState,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub converge: Option<ConvergeConfig>,
    #[serde(default)]
    pub identity: Option<IdentityConfig>,
    /// Flip the chirp sign in both maps; comparisons then fail.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub sabotage_chirp: bool,
}

/// A validated configuration with everything built.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: SimulationConfig,
    pub grid: Arc<Grid>,
    pub scale: ScaleFunction,
    pub ctx: MappingContext,
    pub psi0: Wavefunction,
    /// Present when the initial state is a Gaussian.
    pub gaussian: Option<GaussianState>,
    pub output_times: Vec<f64>,
    pub dt_prime: f64,
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Resolved> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)?.resolve(path.parent())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Cross-validate and build. `base` resolves relative file paths.
    pub fn resolve(mut self, base: Option<&Path>) -> Result<Resolved> {
        let cfg_err = |m: String| Error::Config(m);
        self.constants.validate()?;
        let grid = Arc::new(Grid::new(&self.grid.axes)?);
        let dims = grid.dims();
        self.constants.particle_dim(dims)?;
        self.potential.load_tables(base)?;
        self.potential.validate(dims, grid.topology())?;
        let t = &self.time;
        if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
            return Err(cfg_err(format!("t_end must be finite and >= 0, got {}", t.t_end)));
        }
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(cfg_err(format!("dt must be positive, got {}", t.dt)));
        }
        let dt_prime = t.dt_prime.unwrap_or(t.dt);
        if !(dt_prime > 0.0 && dt_prime.is_finite()) {
            return Err(cfg_err(format!("dt_prime must be positive, got {dt_prime}")));
        }
        if t.snapshot_stride == Some(0) {
            return Err(cfg_err("snapshot_stride must be >= 1".into()));
        }
        let scale = self.scale.build()?;
        if t.t_end > 0.0 {
            scale.validate(t.t_end)?;
        }
        if self.output_times.is_empty() {
            self.output_times = vec![t.t_end];
        }
        let ot = &self.output_times;
        if ot.iter().any(|&x| !(x >= 0.0 && x <= t.t_end)) || ot.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("output_times must increase within [0, t_end]".into()));
        }
        let tol = &self.tolerances;
        let positive = [
            tol.compare_rel_l2,
            tol.norm_drift,
            tol.energy_drift,
            tol.identity_residual,
            tol.psi1_relation,
            tol.slope_window,
            tol.spatial_floor,
            tol.resolution_guard,
            tol.leak_warn,
            tol.leak_abort,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(tol.leak_margin > 0.0 && tol.leak_margin < 0.5) {
            return Err(cfg_err("tolerances must be positive and the leak margin in (0, 0.5)".into()));
        }
        if let Some(c) = &self.converge {
            if c.dt_ladder.len() < 4 {
                return Err(cfg_err("dt_ladder needs at least 4 values".into()));
            }
            if c.dt_ladder.windows(2).any(|w| ((w[0] / w[1]) - 2.0).abs() > 1e-9) || c.dt_ladder[0] <= 0.0 {
                return Err(cfg_err("dt_ladder must halve at every rung".into()));
            }
            if c.spatial_ladder.windows(2).any(|w| w[1] <= w[0] || w[1] % w[0] != 0) {
                return Err(cfg_err("spatial_ladder must increase, each value dividing the next".into()));
            }
        }
        if let Some(c) = &self.identity {
            let (s, p) = (c.sigma_range, c.momentum_range);
            if c.samples == 0 || !(c.padding_sigmas >= 6.0) || !(s[0] > 0.0 && s[1] >= s[0]) || p[1] < p[0] || c.fd_steps.len() < 2 || !(c.t_prime >= 0.0) {
                return Err(cfg_err("identity section: need samples >= 1, padding >= 6 sigma, valid ranges and >= 2 fd steps".into()));
            }
        }
        let mut ctx = MappingContext::new(scale.clone(), self.constants.clone(), dims)?;
        if self.sabotage_chirp {
            ctx = ctx.with_flipped_chirp();
        }
        let hbar = self.constants.hbar;
        let (psi0, gaussian) = match &self.initial_state {
            InitialState::Gaussian { center, momentum, sigma } => {
                let momentum = if momentum.is_empty() { vec![0.0; center.len()] } else { momentum.clone() };
                if center.len() != dims || momentum.len() != dims {
                    return Err(cfg_err(format!("initial gaussian needs {dims} center and momentum values")));
                }
                let g = GaussianState::from_sigma(center.clone(), momentum, sigma)?;
                (g.on_grid(&grid, Frame::Original, 0.0, hbar)?.normalized()?, Some(g))
            }
            InitialState::File { path } => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                (read_snapshot(&full, grid.clone(), Frame::Original, 0.0)?, None)
            }
        };
        let output_times = self.output_times.clone();
        Ok(Resolved { config: self, grid, scale, ctx, psi0, gaussian, output_times, dt_prime })
    }
}
