//! Integration of the reduced system `(a, a', b, b', y)` with `y = rho^(gamma-1)(0,t)`.
//!
//! The scale factor obeys the Emden equation `a'' = xi / a^gamma`, the velocity
//! offset `b` a linear second order equation with coefficients built from `a`,
//! and `y` a linear first order equation forced by `b`. The system is advanced
//! with the Dormand-Prince 5(4) pair under PI step-size control. Each accepted
//! step stores the coefficients of the 4th order continuous extension so the
//! solution can be evaluated anywhere in the covered range.
//!
//! Collapse `a -> 0` is detected with a threshold event on `a`; the reported
//! blowup time is the bisected threshold crossing plus a local power-law
//! extrapolation of the remaining distance to `a = 0`.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelParams, ParamError, SeedData, YEquation};

pub const DIM: usize = 5;
pub type StateVec = [f64; DIM];

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
/// Collapse threshold relative to `a0`.
pub const DEFAULT_COLLAPSE_FRACTION: f64 = 1e-8;
/// Below this fraction of `a0`, a step-size underflow with `a' < 0` counts as collapse.
const UNDERFLOW_COLLAPSE_FRACTION: f64 = 1e-4;
const BISECTION_RESOLUTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("right-hand side is not finite at a = {a:e}")]
    EvaluationFailure { a: f64 },
    #[error("invalid tolerances rtol = {rtol:e}, atol = {atol:e}")]
    InvalidTolerance { rtol: f64, atol: f64 },
    #[error("integration horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("step size underflow at t = {}, a = {:e} without collapse", last.t, last.a)]
    StepSizeUnderflow { last: TrajectoryState },
    #[error("maximum number of steps ({max_steps}) exceeded at t = {}", last.t)]
    MaxStepsExceeded { max_steps: usize, last: TrajectoryState },
    #[error("trajectory did not end in a collapse")]
    NotABlowupTrajectory,
    #[error("t = {t} lies outside the covered range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// One sample `(t, a, a', b, b', y)` of the reduced system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryState {
    pub t: f64,
    pub a: f64,
    pub adot: f64,
    pub b: f64,
    pub bdot: f64,
    pub y: f64,
}

impl TrajectoryState {
    pub fn initial(seed: &SeedData, params: &ModelParams) -> Self {
        Self { t: 0.0, a: seed.a0, adot: seed.a1, b: seed.b0, bdot: seed.b1, y: seed.y0(params) }
    }

    pub fn from_vec(t: f64, v: &StateVec) -> Self {
        Self { t, a: v[0], adot: v[1], b: v[2], bdot: v[3], y: v[4] }
    }

    pub fn to_vec(&self) -> StateVec {
        [self.a, self.adot, self.b, self.bdot, self.y]
    }

    /// Velocity gradient `c = a'/a`.
    #[inline]
    pub fn hubble(&self) -> f64 {
        self.adot / self.a
    }
}

/// `E = a'^2/2 + xi a^(1-gamma)/(gamma-1)`, conserved by the Emden equation.
#[inline]
pub fn emden_energy(a: f64, adot: f64, xi: f64, gamma: f64) -> f64 {
    0.5 * adot * adot + xi * a.powf(1.0 - gamma) / (gamma - 1.0)
}

/// `a'' = xi / a^gamma`.
pub fn emden_rhs(a: f64, params: &ModelParams, xi: f64) -> Result<f64, OdeError> {
    let v = xi / a.powf(params.gamma());
    if v.is_finite() && a > 0.0 {
        Ok(v)
    } else {
        Err(OdeError::EvaluationFailure { a })
    }
}

/// Derivatives `(a', a'', b', b'', y')` of the reduced system, using the
/// coefficient-matched `y` equation.
pub fn coupled_rhs(state: &TrajectoryState, params: &ModelParams, xi: f64) -> Result<StateVec, OdeError> {
    coupled_rhs_with(state, params, xi, YEquation::CoefficientMatched)
}

pub fn coupled_rhs_with(
    state: &TrajectoryState,
    params: &ModelParams,
    xi: f64,
    y_equation: YEquation,
) -> Result<StateVec, OdeError> {
    let system = System { params: *params, xi, y_equation };
    let mut out = [0.0; DIM];
    if system.eval(&state.to_vec(), &mut out) {
        Ok(out)
    } else {
        Err(OdeError::EvaluationFailure { a: state.a })
    }
}

#[derive(Debug, Clone, Copy)]
struct System {
    params: ModelParams,
    xi: f64,
    y_equation: YEquation,
}

impl System {
    /// Returns `false` when the state is outside `a > 0` or any derivative is not finite.
    fn eval(&self, v: &StateVec, out: &mut StateVec) -> bool {
        let [a, adot, b, bdot, y] = *v;
        if !(a > 0.0) {
            return false;
        }
        let g = self.params.gamma();
        let c = adot / a;
        // xi / a^(gamma+1) = a''/a
        let accel_over_a = self.xi / a.powf(g + 1.0);
        let addot = accel_over_a * a;
        let bddot = -(1.0 + g) * c * bdot - (2.0 * accel_over_a + (g - 1.0) * c * c) * b;
        let damping = match self.y_equation {
            YEquation::CoefficientMatched => (g - 1.0) * c,
            YEquation::TheoremLiteral => c,
        };
        let ydot = -damping * y + self.params.enthalpy_factor() * (bdot + b * c) * b;
        *out = [adot, addot, bdot, bddot, ydot];
        out.iter().all(|x| x.is_finite())
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct StepOutcome {
    y_new: StateVec,
    k7: StateVec,
    err: StateVec,
    dense: [StateVec; 5],
}

fn combine(y: &StateVec, h: f64, terms: &[(f64, &StateVec)]) -> StateVec {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (w, k) in terms {
            acc += w * k[i];
        }
        *o += h * acc;
    }
    out
}

/// One Dormand-Prince step from `(t, y)` with `k1 = f(t, y)`.
fn dopri_step(sys: &System, y: &StateVec, k1: &StateVec, h: f64) -> Option<StepOutcome> {
    let mut k2 = [0.0; DIM];
    let mut k3 = [0.0; DIM];
    let mut k4 = [0.0; DIM];
    let mut k5 = [0.0; DIM];
    let mut k6 = [0.0; DIM];
    let mut k7 = [0.0; DIM];

    let y2 = combine(y, h, &[(A21, k1)]);
    if !sys.eval(&y2, &mut k2) {
        return None;
    }
    let y3 = combine(y, h, &[(A31, k1), (A32, &k2)]);
    if !sys.eval(&y3, &mut k3) {
        return None;
    }
    let y4 = combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]);
    if !sys.eval(&y4, &mut k4) {
        return None;
    }
    let y5 = combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
    if !sys.eval(&y5, &mut k5) {
        return None;
    }
    let y6 = combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
    if !sys.eval(&y6, &mut k6) {
        return None;
    }
    let y_new = combine(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    if !sys.eval(&y_new, &mut k7) {
        return None;
    }

    let mut err = [0.0; DIM];
    let mut dense = [[0.0; DIM]; 5];
    for i in 0..DIM {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let dy = y_new[i] - y[i];
        let bspl = h * k1[i] - dy;
        dense[0][i] = y[i];
        dense[1][i] = dy;
        dense[2][i] = bspl;
        dense[3][i] = dy - h * k7[i] - bspl;
        dense[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Some(StepOutcome { y_new, k7, err, dense })
}

/// Continuous extension over one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    coeffs: [StateVec; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> StateVec {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        let mut out = [0.0; DIM];
        for i in 0..DIM {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
        out
    }

    fn eval_a(&self, t: f64) -> f64 {
        self.eval(t)[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CollapseDetection {
    /// `a` crossed the collapse threshold inside an accepted step.
    Threshold,
    /// Step size underflowed with `a` small and decreasing.
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TrajectoryStatus {
    Completed { t_end: f64 },
    BlowupDetected { t_collapse: f64, detection: CollapseDetection },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Collapse threshold as a fraction of `a0`.
    pub collapse_fraction: f64,
    pub y_equation: YEquation,
    pub max_steps: usize,
    /// Upper bound on the step size; `None` means the whole horizon.
    pub max_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            collapse_fraction: DEFAULT_COLLAPSE_FRACTION,
            y_equation: YEquation::CoefficientMatched,
            max_steps: 2_000_000,
            max_step: None,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

/// Accepted steps of one integration with their continuous extensions.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: SeedData,
    pub params: ModelParams,
    pub y_equation: YEquation,
    pub states: Vec<TrajectoryState>,
    pub dense: Vec<DenseSegment>,
    pub status: TrajectoryStatus,
    pub rtol: f64,
    pub atol: f64,
    pub collapse_threshold: f64,
}

impl Trajectory {
    pub fn xi(&self) -> f64 {
        self.seed.xi
    }

    pub fn first(&self) -> &TrajectoryState {
        &self.states[0]
    }

    pub fn last(&self) -> &TrajectoryState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// Covered time range `[0, t_last]`.
    pub fn span(&self) -> (f64, f64) {
        (self.first().t, self.last().t)
    }

    pub fn blowup_time(&self) -> Option<f64> {
        match self.status {
            TrajectoryStatus::BlowupDetected { t_collapse, .. } => Some(t_collapse),
            TrajectoryStatus::Completed { .. } => None,
        }
    }

    /// State at time `t` from the continuous extension. Step endpoints return
    /// the stored states exactly.
    pub fn eval(&self, t: f64) -> Result<TrajectoryState, OdeError> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(OdeError::OutOfRange { t, lo, hi });
        }
        // index of the last stored state with states[i].t <= t
        let i = self.states.partition_point(|s| s.t <= t) - 1;
        if self.states[i].t == t || i == self.dense.len() {
            return Ok(self.states[i]);
        }
        Ok(TrajectoryState::from_vec(t, &self.dense[i].eval(t)))
    }

    /// Emden energy at every accepted state.
    pub fn energies(&self) -> Vec<f64> {
        let g = self.params.gamma();
        self.states.iter().map(|s| emden_energy(s.a, s.adot, self.seed.xi, g)).collect()
    }

    /// `max |E(t) - E(0)| / max(|E(0)|, 1)` over accepted states.
    pub fn energy_drift(&self) -> f64 {
        let e = self.energies();
        let e0 = e[0];
        let scale = e0.abs().max(1.0);
        e.iter().map(|v| (v - e0).abs() / scale).fold(0.0, f64::max)
    }
}

fn check_tolerances(rtol: f64, atol: f64) -> Result<(), OdeError> {
    if rtol.is_finite() && atol.is_finite() && rtol > 0.0 && atol > 0.0 && rtol < 1.0 {
        Ok(())
    } else {
        Err(OdeError::InvalidTolerance { rtol, atol })
    }
}

fn error_norm(y: &StateVec, y_new: &StateVec, err: &StateVec, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..DIM {
        let sk = atol + rtol * y[i].abs().max(y_new[i].abs());
        let r = err[i] / sk;
        acc += r * r;
    }
    (acc / DIM as f64).sqrt()
}

/// Starting step size after Hairer, Norsett & Wanner.
fn initial_step(sys: &System, y: &StateVec, f0: &StateVec, h_max: f64, rtol: f64, atol: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..DIM {
        let sk = atol + rtol * y[i].abs();
        d0 += (y[i] / sk).powi(2);
        d1 += (f0[i] / sk).powi(2);
    }
    d0 = (d0 / DIM as f64).sqrt();
    d1 = (d1 / DIM as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(h_max);

    let y1 = combine(y, h0, &[(1.0, f0)]);
    let mut f1 = [0.0; DIM];
    if !sys.eval(&y1, &mut f1) {
        return (h0 * 1e-3).max(1e-12).min(h_max);
    }
    let mut d2 = 0.0;
    for i in 0..DIM {
        let sk = atol + rtol * y[i].abs();
        d2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    d2 = (d2 / DIM as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(h_max)
}

/// Integrates with default options except for the tolerances.
pub fn integrate(
    seed: &SeedData,
    params: &ModelParams,
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory, OdeError> {
    integrate_with(seed, params, t_end, &IntegratorOptions::with_tolerances(rtol, atol))
}

pub fn integrate_with(
    seed: &SeedData,
    params: &ModelParams,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, OdeError> {
    seed.validate()?;
    check_tolerances(opts.rtol, opts.atol)?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(OdeError::InvalidHorizon(t_end));
    }
    let sys = System { params: *params, xi: seed.xi, y_equation: opts.y_equation };
    let (rtol, atol) = (opts.rtol, opts.atol);
    let threshold = opts.collapse_fraction * seed.a0;
    let h_max = opts.max_step.unwrap_or(t_end).min(t_end);

    let first = TrajectoryState::initial(seed, params);
    let mut states = vec![first];
    let mut dense: Vec<DenseSegment> = Vec::new();

    let mut t = 0.0;
    let mut y = first.to_vec();
    let mut k1 = [0.0; DIM];
    if !sys.eval(&y, &mut k1) {
        return Err(OdeError::EvaluationFailure { a: y[0] });
    }

    // PI controller constants.
    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const FAC_MIN_INV: f64 = 5.0; // largest shrink 1/5
    const FAC_MAX_INV: f64 = 0.1; // largest growth 10
    let mut fac_old: f64 = 1e-4;

    let mut h = initial_step(&sys, &y, &k1, h_max, rtol, atol);
    let mut n_steps = 0usize;
    let mut last_step_rejected = false;

    loop {
        if n_steps >= opts.max_steps {
            return Err(OdeError::MaxStepsExceeded { max_steps: opts.max_steps, last: *states.last().unwrap() });
        }
        let mut last = false;
        if t + 1.01 * h >= t_end {
            h = t_end - t;
            last = true;
        }
        if h <= 10.0 * f64::EPSILON * t.abs() || h <= f64::MIN_POSITIVE {
            let s = *states.last().unwrap();
            if s.a <= UNDERFLOW_COLLAPSE_FRACTION * seed.a0 && s.adot < 0.0 {
                let t_collapse = extrapolate_collapse(&sys, &s);
                return Ok(Trajectory {
                    seed: *seed,
                    params: *params,
                    y_equation: opts.y_equation,
                    states,
                    dense,
                    status: TrajectoryStatus::BlowupDetected {
                        t_collapse,
                        detection: CollapseDetection::StepUnderflow,
                    },
                    rtol,
                    atol,
                    collapse_threshold: threshold,
                });
            }
            return Err(OdeError::StepSizeUnderflow { last: s });
        }
        n_steps += 1;

        let outcome = match dopri_step(&sys, &y, &k1, h) {
            Some(o) if o.y_new[0] > 0.0 => o,
            _ => {
                // Stage left the domain a > 0 or overflowed.
                h *= 0.25;
                last_step_rejected = true;
                continue;
            }
        };
        let err = error_norm(&y, &outcome.y_new, &outcome.err, rtol, atol);
        if !err.is_finite() {
            h *= 0.25;
            last_step_rejected = true;
            continue;
        }
        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            let seg = DenseSegment { t0: t, h, coeffs: outcome.dense };
            dense.push(seg);
            y = outcome.y_new;
            k1 = outcome.k7;
            t = t_new;
            states.push(TrajectoryState::from_vec(t, &y));

            if y[0] <= threshold {
                let seg = dense.last().unwrap();
                let t_cross = bisect_crossing(seg, threshold);
                let at = TrajectoryState::from_vec(t_cross, &seg.eval(t_cross));
                let t_collapse = extrapolate_collapse(&sys, &at);
                return Ok(Trajectory {
                    seed: *seed,
                    params: *params,
                    y_equation: opts.y_equation,
                    states,
                    dense,
                    status: TrajectoryStatus::BlowupDetected { t_collapse, detection: CollapseDetection::Threshold },
                    rtol,
                    atol,
                    collapse_threshold: threshold,
                });
            }
            if last {
                return Ok(Trajectory {
                    seed: *seed,
                    params: *params,
                    y_equation: opts.y_equation,
                    states,
                    dense,
                    status: TrajectoryStatus::Completed { t_end },
                    rtol,
                    atol,
                    collapse_threshold: threshold,
                });
            }
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFE).clamp(FAC_MAX_INV, FAC_MIN_INV);
            let mut h_new = h / fac;
            if last_step_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            h = h_new.min(h_max);
            last_step_rejected = false;
        } else {
            h /= FAC_MIN_INV.min(fac11 / SAFE);
            last_step_rejected = true;
        }
    }
}

/// Time in `[seg.t0, seg.t1]` where the interpolated `a` equals `level`,
/// assuming `a(t0) > level >= a(t1)`.
fn bisect_crossing(seg: &DenseSegment, level: f64) -> f64 {
    let (mut lo, mut hi) = (seg.t0, seg.t1());
    if seg.eval_a(lo) <= level {
        return lo;
    }
    while hi - lo > BISECTION_RESOLUTION * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if seg.eval_a(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Remaining time to `a = 0` from a state close to collapse, assuming the local
/// power law `a ~ (T - t)^p`. Then `a a''/a'^2 = (p - 1)/p`, which fixes `p`,
/// and `T - t = p a / |a'|`. Exact for linear collapse.
fn extrapolate_collapse(sys: &System, s: &TrajectoryState) -> f64 {
    if !(s.adot < 0.0) {
        return s.t;
    }
    let addot = sys.xi / s.a.powf(sys.params.gamma());
    let ratio = (s.a * addot / (s.adot * s.adot)).min(0.0);
    let p = 1.0 / (1.0 - ratio);
    let remaining = p * s.a / -s.adot;
    if remaining.is_finite() {
        s.t + remaining
    } else {
        s.t
    }
}

/// Blowup time of a collapsed trajectory, recomputed for the given threshold
/// on `a`. Bisects the continuous extension when the threshold is bracketed by
/// the stored steps, otherwise extrapolates from the last state.
pub fn refine_collapse_time_at(trajectory: &Trajectory, threshold: f64) -> Result<f64, OdeError> {
    if trajectory.blowup_time().is_none() {
        return Err(OdeError::NotABlowupTrajectory);
    }
    let sys = System { params: trajectory.params, xi: trajectory.seed.xi, y_equation: trajectory.y_equation };
    let first_below = trajectory.states.iter().position(|s| s.a <= threshold);
    match first_below {
        Some(i) if i > 0 => {
            let seg = &trajectory.dense[i - 1];
            let t_cross = bisect_crossing(seg, threshold);
            let at = TrajectoryState::from_vec(t_cross, &seg.eval(t_cross));
            Ok(extrapolate_collapse(&sys, &at))
        }
        _ => Ok(extrapolate_collapse(&sys, trajectory.last())),
    }
}

/// Blowup time at the trajectory's own collapse threshold.
pub fn refine_collapse_time(trajectory: &Trajectory) -> Result<f64, OdeError> {
    refine_collapse_time_at(trajectory, trajectory.collapse_threshold)
}

/// Fixed-step Dormand-Prince integration (5th order solution, no error control).
/// Used for step-halving order checks.
pub fn integrate_fixed_steps(
    seed: &SeedData,
    params: &ModelParams,
    t_end: f64,
    n_steps: usize,
) -> Result<TrajectoryState, OdeError> {
    let sys = System { params: *params, xi: seed.xi, y_equation: YEquation::CoefficientMatched };
    let mut y = TrajectoryState::initial(seed, params).to_vec();
    let mut k1 = [0.0; DIM];
    if !sys.eval(&y, &mut k1) {
        return Err(OdeError::EvaluationFailure { a: y[0] });
    }
    let h = t_end / n_steps as f64;
    for _ in 0..n_steps {
        let o = dopri_step(&sys, &y, &k1, h).ok_or(OdeError::EvaluationFailure { a: y[0] })?;
        y = o.y_new;
        k1 = o.k7;
    }
    Ok(TrajectoryState::from_vec(t_end, &y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(k: f64, g: f64) -> ModelParams {
        ModelParams::new(k, g).unwrap()
    }

    fn st(a: f64, adot: f64, b: f64, bdot: f64, y: f64) -> TrajectoryState {
        TrajectoryState { t: 0.0, a, adot, b, bdot, y }
    }

    #[test]
    fn emden_rhs_examples() {
        assert_eq!(emden_rhs(1.0, &params(1.0, 2.0), 1.0).unwrap(), 1.0);
        assert_eq!(emden_rhs(2.0, &params(1.0, 3.0), -4.0).unwrap(), -0.5);
        assert_eq!(emden_rhs(1.0, &params(1.0, 2.0), 0.0).unwrap(), 0.0);
        assert!(matches!(emden_rhs(0.0, &params(1.0, 2.0), 1.0), Err(OdeError::EvaluationFailure { .. })));
        assert!(emden_rhs(1e-300, &params(1.0, 3.0), 1.0).is_err());
    }

    #[test]
    fn coupled_rhs_examples() {
        let p = params(1.0, 2.0);
        assert_eq!(coupled_rhs(&st(1.0, 1.0, 0.0, 0.0, 1.0), &p, 0.0).unwrap(), [1.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(coupled_rhs(&st(1.0, 1.0, 1.0, 0.0, 1.0), &p, 0.0).unwrap(), [1.0, 0.0, 0.0, -1.0, -0.5]);
        assert_eq!(coupled_rhs(&st(1.0, 0.0, 0.0, 0.0, 1.0), &p, 1.0).unwrap(), [0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(coupled_rhs(&st(0.0, 1.0, 0.0, 0.0, 1.0), &p, 1.0).is_err());
    }

    #[test]
    fn offset_free_state_has_pure_decay_of_y() {
        let p = params(1.3, 1.4);
        let d = coupled_rhs(&st(0.7, -0.3, 0.0, 0.0, 2.0), &p, -0.4).unwrap();
        assert_eq!(d[3], 0.0);
        assert_eq!(d[4], -(1.4 - 1.0) * (-0.3 / 0.7) * 2.0);
    }

    #[test]
    fn theorem_literal_drops_gamma_factor() {
        let p = params(1.0, 3.0);
        let s = st(1.0, 1.0, 0.0, 0.0, 1.0);
        let d = coupled_rhs_with(&s, &p, 0.0, YEquation::TheoremLiteral).unwrap();
        assert_eq!(d[4], -1.0);
        assert_eq!(coupled_rhs(&s, &p, 0.0).unwrap()[4], -2.0);
    }

    #[test]
    fn rejects_bad_tolerance_and_horizon() {
        let s = SeedData::symmetric(1.0, 0.0, 0.0, 1.0).unwrap();
        let p = params(1.0, 2.0);
        assert!(matches!(integrate(&s, &p, 1.0, 0.0, 1e-12), Err(OdeError::InvalidTolerance { .. })));
        assert!(matches!(integrate(&s, &p, 1.0, 1e-10, -1.0), Err(OdeError::InvalidTolerance { .. })));
        assert!(matches!(integrate(&s, &p, -1.0, 1e-10, 1e-12), Err(OdeError::InvalidHorizon(_))));
    }

    #[test]
    fn static_seed_stays_put() {
        let s = SeedData::symmetric(1.0, 0.0, 0.0, 1.0).unwrap();
        let tr = integrate(&s, &params(1.0, 2.0), 5.0, 1e-10, 1e-12).unwrap();
        assert_eq!(tr.status, TrajectoryStatus::Completed { t_end: 5.0 });
        for st in &tr.states {
            assert_relative_eq!(st.a, 1.0, epsilon = 1e-14);
            assert_relative_eq!(st.y, 1.0, epsilon = 1e-14);
        }
        assert_eq!(*tr.first(), TrajectoryState::initial(&s, &params(1.0, 2.0)));
    }

    #[test]
    fn linear_collapse_time() {
        let s = SeedData::symmetric(1.0, -2.0, 0.0, 1.0).unwrap();
        let tr = integrate(&s, &params(1.0, 2.0), 10.0, 1e-10, 1e-12).unwrap();
        let t = tr.blowup_time().expect("collapse");
        assert!((t - 0.5).abs() <= 1e-8, "T = {t}");
        assert!(tr.last().a <= tr.collapse_threshold);
        assert!(tr.states.iter().all(|s| s.a > 0.0));
        let n = tr.states.len();
        assert!(tr.states[n - 2].t <= t + 1e-12 && t <= tr.states[n - 1].t + 1e-8);
        assert!((refine_collapse_time(&tr).unwrap() - t).abs() < 1e-14);
    }

    #[test]
    fn refine_rejects_completed() {
        let s = SeedData::symmetric(1.0, 0.0, 0.0, 1.0).unwrap();
        let tr = integrate(&s, &params(1.0, 2.0), 1.0, 1e-10, 1e-12).unwrap();
        assert_eq!(refine_collapse_time(&tr), Err(OdeError::NotABlowupTrajectory));
    }

    #[test]
    fn dense_output_reproduces_linear_a() {
        let s = SeedData::symmetric(2.0, 0.5, 0.0, 1.0).unwrap();
        let tr = integrate(&s, &params(1.0, 1.4), 3.0, 1e-10, 1e-12).unwrap();
        for i in 0..=300 {
            let t = 3.0 * i as f64 / 300.0;
            let st = tr.eval(t).unwrap();
            assert_relative_eq!(st.a, 2.0 + 0.5 * t, max_relative = 1e-13);
            let y = (2.0 / st.a).powf(0.4);
            assert_relative_eq!(st.y, y, max_relative = 1e-8);
        }
        assert!(matches!(tr.eval(3.5), Err(OdeError::OutOfRange { .. })));
    }
}
