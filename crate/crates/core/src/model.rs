//! Physical constants and initial data selecting one member of the solution family.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("pressure constant K must be positive and finite, got {0}")]
    PressureConstant(f64),
    #[error("adiabatic exponent gamma must exceed 1, got {0}")]
    AdiabaticExponent(f64),
    #[error("viscosity mu must be nonnegative and finite, got {0}")]
    Viscosity(f64),
    #[error("initial scale factor a0 must be positive and finite, got {0}")]
    ScaleFactor(f64),
    #[error("central density alpha must be nonnegative and finite, got {0}")]
    CentralDensity(f64),
    #[error("seed value `{0}` is not finite")]
    NonFinite(&'static str),
}

/// Polytropic gas constants: `P = K rho^gamma`, plus an optional viscosity
/// used only by the Navier-Stokes residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    k: f64,
    gamma: f64,
    mu: f64,
}

impl ModelParams {
    pub fn new(k: f64, gamma: f64) -> Result<Self, ParamError> {
        Self::with_viscosity(k, gamma, 0.0)
    }

    pub fn with_viscosity(k: f64, gamma: f64, mu: f64) -> Result<Self, ParamError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(ParamError::PressureConstant(k));
        }
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(ParamError::AdiabaticExponent(gamma));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(ParamError::Viscosity(mu));
        }
        Ok(Self { k, gamma, mu })
    }

    #[inline]
    pub fn k(&self) -> f64 {
        self.k
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `(gamma - 1) / (K gamma)`, the factor linking the momentum balance to `rho^(gamma-1)`.
    #[inline]
    pub fn enthalpy_factor(&self) -> f64 {
        (self.gamma - 1.0) / (self.k * self.gamma)
    }
}

/// Initial data `(a0, a1, xi, b0, b1, alpha)`.
///
/// `xi` is taken directly instead of the third derivative of `a` at the
/// origin; it is the constant of the Emden equation `a'' = xi / a^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedData {
    pub a0: f64,
    pub a1: f64,
    pub xi: f64,
    pub b0: f64,
    pub b1: f64,
    pub alpha: f64,
}

impl SeedData {
    pub fn new(a0: f64, a1: f64, xi: f64, b0: f64, b1: f64, alpha: f64) -> Result<Self, ParamError> {
        let seed = Self { a0, a1, xi, b0, b1, alpha };
        seed.validate()?;
        Ok(seed)
    }

    /// Seed with no velocity offset (`b0 = b1 = 0`).
    pub fn symmetric(a0: f64, a1: f64, xi: f64, alpha: f64) -> Result<Self, ParamError> {
        Self::new(a0, a1, xi, 0.0, 0.0, alpha)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [("a1", self.a1), ("xi", self.xi), ("b0", self.b0), ("b1", self.b1)] {
            if !v.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
        }
        if !(self.a0.is_finite() && self.a0 > 0.0) {
            return Err(ParamError::ScaleFactor(self.a0));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(ParamError::CentralDensity(self.alpha));
        }
        Ok(())
    }

    /// Initial value of `y = rho^(gamma-1)(0, t)`.
    pub fn y0(&self, params: &ModelParams) -> f64 {
        if self.alpha == 0.0 {
            0.0
        } else {
            self.alpha.powf(params.gamma() - 1.0)
        }
    }

    pub fn has_offset(&self) -> bool {
        self.b0 != 0.0 || self.b1 != 0.0
    }
}

/// Which form of the evolution equation for `y = rho^(gamma-1)(0,t)` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YEquation {
    /// `y' + (gamma-1)(a'/a) y - ((gamma-1)/(K gamma)) b (b' + b a'/a) = 0`,
    /// obtained by matching polynomial coefficients of the mass equation.
    #[default]
    #[serde(rename = "ode28")]
    CoefficientMatched,
    /// Same equation with the `(gamma-1)` factor on the `y` term dropped.
    /// Only kept to demonstrate that it does not produce a solution.
    #[serde(rename = "theorem")]
    TheoremLiteral,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(ModelParams::new(0.0, 2.0), Err(ParamError::PressureConstant(_))));
        assert!(matches!(ModelParams::new(1.0, 1.0), Err(ParamError::AdiabaticExponent(_))));
        assert!(matches!(ModelParams::with_viscosity(1.0, 2.0, -1.0), Err(ParamError::Viscosity(_))));
        assert!(ModelParams::with_viscosity(1.0, 1.4, 0.0).is_ok());
    }

    #[test]
    fn rejects_bad_seed() {
        assert!(matches!(SeedData::symmetric(0.0, 0.0, 1.0, 1.0), Err(ParamError::ScaleFactor(_))));
        assert!(matches!(SeedData::symmetric(1.0, 0.0, 1.0, -1.0), Err(ParamError::CentralDensity(_))));
        assert!(matches!(SeedData::new(1.0, f64::NAN, 0.0, 0.0, 0.0, 1.0), Err(ParamError::NonFinite("a1"))));
    }

    #[test]
    fn initial_y_is_alpha_to_gamma_minus_one() {
        let p = ModelParams::new(1.0, 3.0).unwrap();
        let s = SeedData::symmetric(1.0, 0.0, 0.0, 2.0).unwrap();
        assert_eq!(s.y0(&p), 4.0);
        let s = SeedData::symmetric(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(s.y0(&p), 0.0);
    }
}
