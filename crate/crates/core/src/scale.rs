//! Scale functions `f(t)` with `f(0) = 1`, `f'(0) = epsilon`, and the
//! transformed clock `t' = ln f(t) / epsilon`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on `1 + 2 epsilon t` for the square-root family.
pub const SQRT_BRANCH_GUARD: f64 = 1e-9;

/// Tolerance for the normalization checks on custom functions.
const NORMALIZATION_TOL: f64 = 1e-12;

pub type ScaleEvaluator = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
pub enum ScaleKind {
    /// `f = sqrt(1 + 2 epsilon t)`: constant-mass form.
    SqrtLinear,
    /// `f = exp(epsilon t)`: Caldirola-Kanai form.
    Exponential,
    /// User evaluator returning `(f, f')`, valid on `[valid.0, valid.1]`.
    Custom { eval: ScaleEvaluator, valid: (f64, f64), label: String },
}

impl fmt::Debug for ScaleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleKind::SqrtLinear => f.write_str("SqrtLinear"),
            ScaleKind::Exponential => f.write_str("Exponential"),
            ScaleKind::Custom { valid, label, .. } => {
                write!(f, "Custom({label}, valid on [{}, {}])", valid.0, valid.1)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScaleFunction {
    kind: ScaleKind,
    epsilon: f64,
}

/// Serializable form used by configuration files.
///
/// Custom functions are polynomials `f(t) = sum_k c_k t^k` over a declared
/// interval; `c_0` must be 1 and `c_1` must equal `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleSpec {
    SqrtLinear { epsilon: f64 },
    Exponential { epsilon: f64 },
    Custom { epsilon: f64, coefficients: Vec<f64>, interval: [f64; 2] },
}

impl ScaleSpec {
    pub fn epsilon(&self) -> f64 {
        match self {
            ScaleSpec::SqrtLinear { epsilon }
            | ScaleSpec::Exponential { epsilon }
            | ScaleSpec::Custom { epsilon, .. } => *epsilon,
        }
    }

    pub fn build(&self) -> Result<ScaleFunction> {
        match self {
            ScaleSpec::SqrtLinear { epsilon } => ScaleFunction::sqrt_linear(*epsilon),
            ScaleSpec::Exponential { epsilon } => ScaleFunction::exponential(*epsilon),
            ScaleSpec::Custom { epsilon, coefficients, interval } => {
                let c = coefficients.clone();
                let eval: ScaleEvaluator = Arc::new(move |t| {
                    let mut f = 0.0;
                    let mut df = 0.0;
                    for &ck in c.iter().rev() {
                        df = df * t + f;
                        f = f * t + ck;
                    }
                    (f, df)
                });
                ScaleFunction::custom(*epsilon, eval, (interval[0], interval[1]), "polynomial")
            }
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon == 0.0 || !epsilon.is_finite() {
        return Err(Error::ScaleValidity {
            t: 0.0,
            reason: format!("epsilon must be real and nonzero, got {epsilon}"),
        });
    }
    Ok(())
}

impl ScaleFunction {
    pub fn sqrt_linear(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(ScaleFunction { kind: ScaleKind::SqrtLinear, epsilon })
    }

    pub fn exponential(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(ScaleFunction { kind: ScaleKind::Exponential, epsilon })
    }

    /// Custom evaluator. Checks `f(0) = 1` and `f'(0) = epsilon` to 1e-12.
    pub fn custom(epsilon: f64, eval: ScaleEvaluator, valid: (f64, f64), label: &str) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(valid.0 <= 0.0 && valid.1 > 0.0) {
            return Err(Error::ScaleValidity {
                t: 0.0,
                reason: format!("validity interval [{}, {}] must contain [0, t] for some t > 0", valid.0, valid.1),
            });
        }
        let (f0, df0) = eval(0.0);
        if (f0 - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::ScaleValidity { t: 0.0, reason: format!("normalization f(0) = 1 violated: f(0) = {f0}") });
        }
        if (df0 - epsilon).abs() > NORMALIZATION_TOL * epsilon.abs().max(1.0) {
            return Err(Error::ScaleValidity {
                t: 0.0,
                reason: format!("normalization f'(0) = epsilon violated: f'(0) = {df0}, epsilon = {epsilon}"),
            });
        }
        Ok(ScaleFunction { kind: ScaleKind::Custom { eval, valid, label: label.to_string() }, epsilon })
    }

    pub fn kind(&self) -> &ScaleKind {
        &self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            ScaleKind::SqrtLinear => "sqrt_linear",
            ScaleKind::Exponential => "exponential",
            ScaleKind::Custom { .. } => "custom",
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::ScaleValidity { t, reason: "non-finite time".into() });
        }
        match &self.kind {
            ScaleKind::SqrtLinear => {
                let s = 1.0 + 2.0 * self.epsilon * t;
                if s <= SQRT_BRANCH_GUARD {
                    return Err(Error::ScaleValidity {
                        t,
                        reason: format!("1 + 2 epsilon t = {s:.3e} at or below the branch-point guard"),
                    });
                }
            }
            ScaleKind::Exponential => {}
            ScaleKind::Custom { valid, .. } => {
                if t < valid.0 || t > valid.1 {
                    return Err(Error::ScaleValidity {
                        t,
                        reason: format!("outside declared validity [{}, {}]", valid.0, valid.1),
                    });
                }
            }
        }
        Ok(())
    }

    /// `(f(t), f'(t))`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        let (f, df) = match &self.kind {
            ScaleKind::SqrtLinear => {
                let f = (1.0 + 2.0 * self.epsilon * t).sqrt();
                (f, self.epsilon / f)
            }
            ScaleKind::Exponential => {
                let f = (self.epsilon * t).exp();
                (f, self.epsilon * f)
            }
            ScaleKind::Custom { eval, .. } => eval(t),
        };
        if !(f > 0.0) || !f.is_finite() || !df.is_finite() {
            return Err(Error::ScaleValidity { t, reason: format!("f = {f}, f' = {df} not positive and finite") });
        }
        Ok((f, df))
    }

    pub fn f(&self, t: f64) -> Result<f64> {
        self.eval(t).map(|(f, _)| f)
    }

    /// `t' = ln f(t) / epsilon`; exactly 0 at `t = 0`.
    pub fn transformed_time(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            self.check_time(t)?;
            return Ok(0.0);
        }
        match &self.kind {
            ScaleKind::Exponential => {
                self.check_time(t)?;
                Ok(t)
            }
            ScaleKind::SqrtLinear => {
                self.check_time(t)?;
                let x = 2.0 * self.epsilon * t;
                Ok(x.ln_1p() / (2.0 * self.epsilon))
            }
            ScaleKind::Custom { .. } => Ok(self.f(t)?.ln() / self.epsilon),
        }
    }

    /// Physical time reaching transformed time `tp`, for the closed-form kinds.
    /// Custom kinds are inverted by bisection on their validity interval.
    pub fn physical_time(&self, tp: f64) -> Result<f64> {
        match &self.kind {
            ScaleKind::Exponential => Ok(tp),
            ScaleKind::SqrtLinear => {
                let t = (2.0 * self.epsilon * tp).exp_m1() / (2.0 * self.epsilon);
                self.check_time(t)?;
                Ok(t)
            }
            ScaleKind::Custom { valid, .. } => {
                let (mut lo, mut hi) = (0.0f64.max(valid.0), valid.1);
                let g = |t: f64| self.transformed_time(t).map(|v| v - tp);
                let (glo, ghi) = (g(lo)?, g(hi)?);
                if glo.signum() == ghi.signum() && glo != 0.0 {
                    return Err(Error::ScaleValidity { t: hi, reason: format!("transformed time {tp} not reached") });
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid)?.signum() == glo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Check the invariants on `[0, t_max]`.
    pub fn validate(&self, t_max: f64) -> Result<ValidationReport> {
        if !(t_max > 0.0) {
            return Err(Error::InvalidArgument(format!("t_max must be positive, got {t_max}")));
        }
        // Singularity inside the interval for the square-root family.
        if let ScaleKind::SqrtLinear = self.kind {
            if self.epsilon < 0.0 {
                let t_sing = -1.0 / (2.0 * self.epsilon);
                if t_sing <= t_max {
                    return Err(Error::ScaleValidity {
                        t: t_sing,
                        reason: "1 + 2 epsilon t vanishes inside the interval".into(),
                    });
                }
            }
        }
        let (f0, df0) = self.eval(0.0)?;
        if (f0 - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::ScaleValidity { t: 0.0, reason: format!("normalization f(0) = 1 violated: {f0}") });
        }
        if (df0 - self.epsilon).abs() > NORMALIZATION_TOL * self.epsilon.abs().max(1.0) {
            return Err(Error::ScaleValidity { t: 0.0, reason: format!("f'(0) = {df0} differs from epsilon") });
        }
        let h = 1e-6 * t_max.min(1.0);
        let fd0 = (self.f(h)? - self.f(0.0)?) / h;
        let fd_residual = (fd0 - self.epsilon).abs() / self.epsilon.abs();
        if fd_residual > 1e-4 {
            return Err(Error::ScaleValidity {
                t: 0.0,
                reason: format!("finite-difference f'(0) = {fd0} inconsistent with epsilon"),
            });
        }
        const SAMPLES: usize = 512;
        let mut sign = 0.0;
        let mut max_fd_error: f64 = 0.0;
        for i in 0..=SAMPLES {
            let t = t_max * i as f64 / SAMPLES as f64;
            let (f, df) = self.eval(t)?;
            if !(f > 0.0) {
                return Err(Error::ScaleValidity { t, reason: format!("f = {f} is not positive") });
            }
            if df != 0.0 {
                if sign == 0.0 {
                    sign = df.signum();
                } else if df.signum() != sign {
                    return Err(Error::ScaleValidity { t, reason: "f is not monotone on the interval".into() });
                }
            }
            if let ScaleKind::Custom { .. } = self.kind {
                let hc = 1e-4 * t_max.min(1.0);
                if t - hc >= 0.0 && t + hc <= t_max {
                    let fd = (self.f(t + hc)? - self.f(t - hc)?) / (2.0 * hc);
                    let err = (fd - df).abs() / df.abs().max(1e-300);
                    max_fd_error = max_fd_error.max(err);
                    if err > 1e-6 {
                        return Err(Error::ScaleValidity {
                            t,
                            reason: format!("declared f' disagrees with finite difference (rel err {err:.2e})"),
                        });
                    }
                }
            }
        }
        Ok(ValidationReport {
            t_max,
            increasing: sign > 0.0,
            f_end: self.f(t_max)?,
            derivative_fd_residual: fd_residual,
            max_custom_fd_error: max_fd_error,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub t_max: f64,
    pub increasing: bool,
    pub f_end: f64,
    pub derivative_fd_residual: f64,
    pub max_custom_fd_error: f64,
}
