//! Density and velocity fields built from a state of the reduced system.
//!
//! `rho^(gamma-1)(x, t) = max{q(x), 0}` with the quadratic
//! `q(x) = y - B x - C x^2`, where `B = ((gamma-1)/(K gamma)) (b' + b a'/a)` and
//! `C = (gamma-1) xi / (2 K gamma a^(gamma+1))`. The velocity is
//! `u = (a'/a) x + b`. The region where `q > 0` is the gas; outside it is vacuum.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelParams, SeedData};
use crate::ode::TrajectoryState;

/// Below this distance from 2 the equidimensional `b` equation has a double root.
const DOUBLE_ROOT_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("a0 + a1 t = {0} is not positive")]
    DomainError(f64),
    #[error("closed form requires xi = 0, got {0}")]
    NonzeroXi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub x: f64,
    pub rho: f64,
    pub u: f64,
    pub in_support: bool,
}

/// `q(x) = y - B x - C x^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadratic {
    pub y: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.y - x * (self.b + self.c * x)
    }

    pub fn discriminant(&self) -> f64 {
        self.b * self.b + 4.0 * self.c * self.y
    }

    /// Real roots in increasing order when `C != 0` and the discriminant is positive.
    pub fn roots(&self) -> Option<(f64, f64)> {
        if self.c == 0.0 {
            return None;
        }
        let d = self.discriminant();
        if !(d > 0.0) {
            return None;
        }
        // C x^2 + B x - y = 0, cancellation-free form
        let sq = d.sqrt();
        let sgn = if self.b >= 0.0 { 1.0 } else { -1.0 };
        let w = -0.5 * (self.b + sgn * sq);
        let (r1, r2) = if w == 0.0 { (0.0, 0.0) } else { (w / self.c, -self.y / w) };
        Some(if r1 <= r2 { (r1, r2) } else { (r2, r1) })
    }

    pub fn support(&self) -> SupportSet {
        let kind = if self.c > 0.0 {
            match self.roots() {
                Some((left, right)) if left < right => SupportKind::Interval { left, right },
                _ => SupportKind::EmptyInterior,
            }
        } else if self.c == 0.0 {
            if self.b != 0.0 {
                let endpoint = self.y / self.b;
                let side = if self.b > 0.0 { Side::Below } else { Side::Above };
                SupportKind::HalfLine { side, endpoint }
            } else if self.y > 0.0 {
                SupportKind::Unbounded { gap: None }
            } else {
                SupportKind::EmptyInterior
            }
        } else {
            SupportKind::Unbounded { gap: self.roots() }
        };
        SupportSet { kind, coefficients: *self }
    }
}

/// Which side of the endpoint a half-line support extends to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    /// `x < endpoint`
    Below,
    /// `x > endpoint`
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SupportKind {
    /// `q > 0` on `(left, right)`.
    Interval {
        left: f64,
        right: f64,
    },
    /// `q > 0` everywhere except on the closed gap, when present.
    Unbounded {
        gap: Option<(f64, f64)>,
    },
    /// `q <= 0` everywhere.
    EmptyInterior,
    HalfLine {
        side: Side,
        endpoint: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportSet {
    pub kind: SupportKind,
    pub coefficients: Quadratic,
}

impl SupportSet {
    /// Restriction to `r >= 0`.
    pub fn radial(&self) -> SupportSet {
        let kind = match self.kind {
            SupportKind::Interval { left, right } => {
                if right <= 0.0 {
                    SupportKind::EmptyInterior
                } else {
                    SupportKind::Interval { left: left.max(0.0), right }
                }
            }
            SupportKind::Unbounded { gap: None } => SupportKind::HalfLine { side: Side::Above, endpoint: 0.0 },
            SupportKind::Unbounded { gap: Some((g1, g2)) } => {
                if g1 > 0.0 {
                    SupportKind::Unbounded { gap: Some((g1, g2)) }
                } else {
                    SupportKind::HalfLine { side: Side::Above, endpoint: g2.max(0.0) }
                }
            }
            SupportKind::HalfLine { side: Side::Above, endpoint } => {
                SupportKind::HalfLine { side: Side::Above, endpoint: endpoint.max(0.0) }
            }
            SupportKind::HalfLine { side: Side::Below, endpoint } => {
                if endpoint <= 0.0 {
                    SupportKind::EmptyInterior
                } else {
                    SupportKind::Interval { left: 0.0, right: endpoint }
                }
            }
            SupportKind::EmptyInterior => SupportKind::EmptyInterior,
        };
        SupportSet { kind, coefficients: self.coefficients }
    }
}

pub fn quadratic_coeffs(state: &TrajectoryState, params: &ModelParams, xi: f64) -> Quadratic {
    let f = params.enthalpy_factor();
    Quadratic {
        y: state.y,
        b: f * (state.bdot + state.b * state.hubble()),
        c: 0.5 * f * xi / state.a.powf(params.gamma() + 1.0),
    }
}

/// `max{q, 0}^(1/(gamma-1))`.
#[inline]
pub fn density_from_q(q: f64, gamma: f64) -> f64 {
    if q > 0.0 {
        (q.ln() / (gamma - 1.0)).exp()
    } else {
        0.0
    }
}

pub fn eval_density(x: f64, state: &TrajectoryState, params: &ModelParams, xi: f64) -> f64 {
    density_from_q(quadratic_coeffs(state, params, xi).eval(x), params.gamma())
}

#[inline]
pub fn eval_velocity(x: f64, state: &TrajectoryState) -> f64 {
    state.hubble() * x + state.b
}

pub fn eval_sample(x: f64, state: &TrajectoryState, params: &ModelParams, xi: f64) -> FieldSample {
    let q = quadratic_coeffs(state, params, xi).eval(x);
    FieldSample { x, rho: density_from_q(q, params.gamma()), u: eval_velocity(x, state), in_support: q > 0.0 }
}

pub fn support(state: &TrajectoryState, params: &ModelParams, xi: f64) -> SupportSet {
    quadratic_coeffs(state, params, xi).support()
}

/// Radial form on `r >= 0`.
pub fn eval_radial(r: f64, state: &TrajectoryState, params: &ModelParams, xi: f64) -> Result<FieldSample, FieldError> {
    if !(r >= 0.0) {
        return Err(FieldError::NegativeRadius(r));
    }
    Ok(eval_sample(r, state, params, xi))
}

pub fn radial_support(state: &TrajectoryState, params: &ModelParams, xi: f64) -> SupportSet {
    support(state, params, xi).radial()
}

/// Exponents of the power solutions `s^m` of `s^2 b'' + (1+gamma) s b' + (gamma-1) b = 0`,
/// the roots of `m^2 + gamma m + gamma - 1 = 0`.
pub fn equidimensional_exponents(gamma: f64) -> (f64, f64) {
    (-1.0, 1.0 - gamma)
}

/// `(b, b')` at time `t` for `xi = 0`, where `a = a0 + a1 t` is linear and the
/// `b` equation is equidimensional in `s = a0 + a1 t`. For `a1 = 0` the
/// equation reduces to `b'' = 0`.
pub fn closed_form_b_xi0(t: f64, seed: &SeedData, params: &ModelParams) -> Result<(f64, f64), FieldError> {
    if seed.xi != 0.0 {
        return Err(FieldError::NonzeroXi(seed.xi));
    }
    let (a0, a1) = (seed.a0, seed.a1);
    if a1 == 0.0 {
        return Ok((seed.b0 + seed.b1 * t, seed.b1));
    }
    let s = a0 + a1 * t;
    if !(s > 0.0) {
        return Err(FieldError::DomainError(s));
    }
    let r = s / a0;
    // s0 b'(s0) in the s variable
    let slope0 = a0 * seed.b1 / a1;
    let gamma = params.gamma();
    let (b, s_dbds) = if (gamma - 2.0).abs() < DOUBLE_ROOT_GAP {
        // b = r^-1 (A + B ln r)
        let coef_a = seed.b0;
        let coef_b = slope0 + seed.b0;
        let ln_r = r.ln();
        ((coef_a + coef_b * ln_r) / r, (-coef_a - coef_b * ln_r + coef_b) / r)
    } else {
        let (m1, m2) = equidimensional_exponents(gamma);
        let c2 = (slope0 - m1 * seed.b0) / (m2 - m1);
        let c1 = seed.b0 - c2;
        let (p1, p2) = (r.powf(m1), r.powf(m2));
        (c1 * p1 + c2 * p2, m1 * c1 * p1 + m2 * c2 * p2)
    };
    Ok((b, a1 * s_dbds / s))
}

/// `y(t) = alpha^(gamma-1) (a0 / a(t))^(gamma-1)`, the central value when `b = 0`.
/// Any offset in the seed is ignored.
pub fn closed_form_y_b0(a_at_t: f64, seed: &SeedData, params: &ModelParams) -> f64 {
    seed.y0(params) * (seed.a0 / a_at_t).powf(params.gamma() - 1.0)
}
