//! Blowup versus global existence for the Emden equation `a'' = xi / a^kappa`.
//!
//! With `E = a1^2/2 + xi a0^(1-kappa)/(kappa-1)`:
//! * `xi < 0`: collapse in finite time iff `a1 < sqrt(-2 xi/(kappa-1)) a0^((1-kappa)/2)`,
//!   i.e. `a1 < 0` or `E < 0`; otherwise `a -> infinity`.
//! * `xi = 0`: `a = a0 + a1 t` collapses at `T = -a0/a1` iff `a1 < 0`.
//! * `xi > 0`: always global.
//!
//! Since `a` collapses exactly when the velocity gradient `a'/a` diverges,
//! the verdict for `a` is the verdict for the whole solution.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelParams, SeedData};
use crate::ode::{self, IntegratorOptions, OdeError, Trajectory};
use crate::quadrature::{self, QuadratureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("seed does not blow up in finite time")]
    NotABlowupSeed,
    #[error("trajectory did not end in a collapse")]
    NotABlowupTrajectory,
    #[error("integration did not detect the predicted collapse before t = {0}")]
    MissedCollapse(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    BlowupFiniteTime,
    Global,
}

/// Branch of the existence lemma that decided the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Criterion {
    /// `xi < 0`, `a1` below the escape threshold.
    NegativeXiBelowThreshold,
    /// `xi < 0`, `a1` at or above the escape threshold.
    NegativeXiEscape,
    /// `xi = 0`, `a1 < 0`.
    ZeroXiContracting,
    /// `xi = 0`, `a1 >= 0`.
    ZeroXiNonContracting,
    /// `xi > 0`.
    PositiveXi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub criterion: Criterion,
    /// Exact blowup time, only for `xi = 0`.
    pub t_formula: Option<f64>,
    /// Blowup time found by integrating the reduced system.
    pub t_numeric: Option<f64>,
    pub energy: f64,
}

impl Classification {
    pub fn blows_up(&self) -> bool {
        self.verdict == Verdict::BlowupFiniteTime
    }
}

pub fn emden_energy_kappa(a0: f64, a1: f64, xi: f64, kappa: f64) -> f64 {
    ode::emden_energy(a0, a1, xi, kappa)
}

/// `E = a1^2/2 + xi a0^(1-gamma)/(gamma-1)`.
pub fn energy(seed: &SeedData, params: &ModelParams) -> f64 {
    emden_energy_kappa(seed.a0, seed.a1, seed.xi, params.gamma())
}

/// `sqrt(-2 xi/(kappa-1)) a0^((1-kappa)/2)` for `xi < 0`.
pub fn escape_threshold(a0: f64, xi: f64, kappa: f64) -> Option<f64> {
    (xi < 0.0).then(|| (-2.0 * xi / (kappa - 1.0)).sqrt() * a0.powf(0.5 * (1.0 - kappa)))
}

/// Classification for a generic exponent `kappa > 1`.
pub fn classify_emden(a0: f64, a1: f64, xi: f64, kappa: f64) -> Classification {
    let energy = emden_energy_kappa(a0, a1, xi, kappa);
    let (verdict, criterion, t_formula) = if xi < 0.0 {
        // a1 < threshold, compared in squared form for a1 >= 0 so that exact
        // boundary seeds are not split by rounding of the square root
        let below = a1 < 0.0 || a1 * a1 < -2.0 * xi * a0.powf(1.0 - kappa) / (kappa - 1.0);
        if below {
            (Verdict::BlowupFiniteTime, Criterion::NegativeXiBelowThreshold, None)
        } else {
            (Verdict::Global, Criterion::NegativeXiEscape, None)
        }
    } else if xi == 0.0 {
        if a1 < 0.0 {
            (Verdict::BlowupFiniteTime, Criterion::ZeroXiContracting, Some(-a0 / a1))
        } else {
            (Verdict::Global, Criterion::ZeroXiNonContracting, None)
        }
    } else {
        (Verdict::Global, Criterion::PositiveXi, None)
    };
    Classification { verdict, criterion, t_formula, t_numeric: None, energy }
}

/// Analytic classification with `kappa = gamma`. `b0`, `b1` and `alpha` play no role.
pub fn classify(seed: &SeedData, params: &ModelParams) -> Classification {
    classify_emden(seed.a0, seed.a1, seed.xi, params.gamma())
}

/// [`classify`] plus the blowup time observed by integrating up to
/// `10 max(T, 1)`, where `T` is the formula or quadrature estimate.
pub fn classify_with_integration(
    seed: &SeedData,
    params: &ModelParams,
    opts: &IntegratorOptions,
    quad_tol: f64,
) -> Result<Classification, ClassifierError> {
    let mut c = classify(seed, params);
    if !c.blows_up() {
        return Ok(c);
    }
    let estimate = match c.t_formula {
        Some(t) => t,
        None => blowup_time_quadrature(seed, params, quad_tol)?,
    };
    let horizon = 10.0 * estimate.max(1.0);
    let traj = ode::integrate_with(seed, params, horizon, opts)?;
    match traj.blowup_time() {
        Some(t) => c.t_numeric = Some(t),
        None => return Err(ClassifierError::MissedCollapse(horizon)),
    }
    Ok(c)
}

/// Blowup time from the energy relation `a'^2 = 2E - 2 xi a^(1-gamma)/(gamma-1)`:
/// `T = int da / sqrt(F(a))` along the path of `a` down to 0, passing through
/// the turning point `a_max` when the seed starts out expanding.
pub fn blowup_time_quadrature(seed: &SeedData, params: &ModelParams, tol: f64) -> Result<f64, ClassifierError> {
    blowup_time_quadrature_kappa(seed.a0, seed.a1, seed.xi, params.gamma(), tol)
}

pub fn blowup_time_quadrature_kappa(a0: f64, a1: f64, xi: f64, kappa: f64, tol: f64) -> Result<f64, ClassifierError> {
    if !classify_emden(a0, a1, xi, kappa).blows_up() {
        return Err(ClassifierError::NotABlowupSeed);
    }
    let e = emden_energy_kappa(a0, a1, xi, kappa);
    if xi == 0.0 {
        let speed = -a1;
        return Ok(quadrature::integrate(|_| 1.0 / speed, 0.0, a0, tol)?);
    }
    // xi < 0 from here on
    let pull = -2.0 * xi / (kappa - 1.0);
    if e >= 0.0 {
        // no turning point: a1 < 0 and F > 0 on (0, a0]
        let f = |a: f64| 1.0 / (2.0 * e + pull * a.powf(1.0 - kappa)).sqrt();
        return Ok(quadrature::integrate(f, 0.0, a0, tol)?);
    }
    let a_max = (e * (kappa - 1.0) / xi).powf(1.0 / (1.0 - kappa));
    let scale = pull * a_max.powf(1.0 - kappa);
    let limit = 2.0 / (-2.0 * xi * a_max.powf(-kappa)).sqrt();
    // a = a_max - s^2; F = pull (a^(1-k) - a_max^(1-k)) written without cancellation
    let integrand = move |s: f64| {
        if s == 0.0 {
            return limit;
        }
        let u = -(s * s) / a_max;
        let f = scale * ((1.0 - kappa) * u.ln_1p()).exp_m1();
        2.0 * s / f.sqrt()
    };
    let from_origin = quadrature::integrate(integrand, 0.0, a_max.sqrt(), 0.5 * tol)?;
    let gap = (a_max - a0).max(0.0).sqrt();
    let from_start = quadrature::integrate(integrand, 0.0, gap, 0.5 * tol)?;
    Ok(if a1 > 0.0 { from_origin + from_start } else { from_origin - from_start })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientPassage {
    pub bound: f64,
    /// First time with `|a'/a| >= bound`, if reached before the end of the trajectory.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientBlowupReport {
    pub blowup_time: f64,
    pub passages: Vec<GradientPassage>,
}

/// First-passage times of `|u_x| = |a'/a|` through each bound, on a collapsing trajectory.
pub fn velocity_gradient_blowup_check(
    trajectory: &Trajectory,
    bounds: &[f64],
) -> Result<GradientBlowupReport, ClassifierError> {
    let blowup_time = trajectory.blowup_time().ok_or(ClassifierError::NotABlowupTrajectory)?;
    let gradient = |t: f64| -> f64 {
        let s = trajectory.eval(t).expect("t inside trajectory span");
        s.hubble().abs()
    };
    let passages = bounds
        .iter()
        .map(|&bound| {
            let states = &trajectory.states;
            let time = if states[0].hubble().abs() >= bound {
                Some(states[0].t)
            } else {
                states.iter().position(|s| s.hubble().abs() >= bound).map(|i| {
                    let (mut lo, mut hi) = (states[i - 1].t, states[i].t);
                    while hi - lo > 1e-14 * hi.abs().max(1.0) {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if gradient(mid) >= bound {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    hi
                })
            };
            GradientPassage { bound, time }
        })
        .collect();
    Ok(GradientBlowupReport { blowup_time, passages })
}
