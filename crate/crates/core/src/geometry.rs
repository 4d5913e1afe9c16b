//! Closed-form geometry of the standard hyperbolic collar and of flat unit-area tori.
//!
//! The collar of a closed geodesic of length `ell` is the cylinder
//! `[-X(ell), X(ell)] x S^1` carrying the metric `rho^2 (ds^2 + dtheta^2)` with
//!
//! ```text
//! X(ell)    = (2 pi / ell) * (pi/2 - atan(sinh(ell/2)))
//! rho(s)    = ell / (2 pi cos(ell s / 2 pi))
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible geodesic length (`2 arsinh(1)`), where `rho <= 1` on the collar.
pub fn max_collar_ell() -> f64 {
    2.0 * 1f64.asinh()
}

/// Half-length `X(ell)` of the collar in collar coordinates.
pub fn collar_half_length(ell: f64) -> Result<f64> {
    check_ell(ell)?;
    Ok(half_length_unchecked(ell))
}

fn half_length_unchecked(ell: f64) -> f64 {
    2.0 * PI / ell * (PI / 2.0 - (ell / 2.0).sinh().atan())
}

fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0 && ell <= max_collar_ell()) {
        return Err(Error::Domain(format!(
            "ell = {ell} outside the collar regime (0, 2 arsinh(1)]"
        )));
    }
    Ok(())
}

/// Conformal factor `rho_ell(s)`; requires `|s| <= X(ell)`.
pub fn conformal_factor(ell: f64, s: f64) -> Result<f64> {
    CollarGeometry::new(ell)?.rho(s)
}

/// The hyperbolic collar around a geodesic of length `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollarGeometry {
    ell: f64,
    half_length: f64,
}

impl CollarGeometry {
    pub fn new(ell: f64) -> Result<Self> {
        check_ell(ell)?;
        Ok(Self {
            ell,
            half_length: half_length_unchecked(ell),
        })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// `X(ell)`.
    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn rho(&self, s: f64) -> Result<f64> {
        // a few ulps of slack so that grid endpoints computed as s_min + j*h pass
        if s.abs() > self.half_length * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "|s| = {} exceeds the collar half-length {}",
                s.abs(),
                self.half_length
            )));
        }
        Ok(self.rho_unchecked(s))
    }

    /// `rho` without the range check; callers guarantee `|s| <= X`.
    pub(crate) fn rho_unchecked(&self, s: f64) -> f64 {
        self.ell / (2.0 * PI * (self.ell * s / (2.0 * PI)).cos())
    }

    /// `d/ds log rho = (ell / 2 pi) tan(ell s / 2 pi) = rho sin(ell s / 2 pi)` up to sign.
    pub fn log_rho_derivative(&self, s: f64) -> f64 {
        let x = self.ell * s / (2.0 * PI);
        self.ell / (2.0 * PI) * x.tan()
    }

    /// Conformal factor at the collar end, `ell / (2 pi tanh(ell/2))`.
    pub fn rho_at_end(&self) -> f64 {
        self.ell / (2.0 * PI * (self.ell / 2.0).tanh())
    }
}

/// Result of [`conformal_factor_bounds_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConformalBounds {
    /// `Lambda * rho(X - Lambda)`.
    pub end_ratio: f64,
    /// `1 / end_ratio`.
    pub reciprocal: f64,
    /// Largest sampled value of `rho^2(s') e^{-|s-s'|/2} / rho^2(s)`.
    pub max_exponential_comparison: f64,
}

/// Measures the two-sided bound `rho(X - Lambda) ~ 1/Lambda` near the collar ends
/// and the exponential comparison `rho^2(s') e^{-|s-s'|/2} <= C rho^2(s)` on a
/// uniform sample of `samples` points of the collar.
pub fn conformal_factor_bounds_check(ell: f64, lambda: f64, samples: usize) -> Result<ConformalBounds> {
    let geom = CollarGeometry::new(ell)?;
    let x = geom.half_length();
    if !(1.0..=x).contains(&lambda) {
        return Err(Error::Domain(format!(
            "Lambda = {lambda} outside [1, X(ell)] = [1, {x}]"
        )));
    }
    let end_ratio = lambda * geom.rho_unchecked(x - lambda);

    let n = samples.max(2);
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let s = -x + 2.0 * x * i as f64 / (n - 1) as f64;
            (s, geom.rho_unchecked(s).powi(2))
        })
        .collect();
    let mut worst = 0.0f64;
    for &(s, r2) in &pts {
        for &(sp, r2p) in &pts {
            worst = worst.max(r2p * (-(s - sp).abs() / 2.0).exp() / r2);
        }
    }
    Ok(ConformalBounds {
        end_ratio,
        reciprocal: 1.0 / end_ratio,
        max_exponential_comparison: worst,
    })
}

/// Flat unit-area torus generated by the lattice `2 pi Z + (A + iB) Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    twist: f64,
    height: f64,
}

impl TorusGeometry {
    /// `twist = A` in `(-pi, pi]`, `height = B > 0` with `|A + iB| >= 2 pi`.
    pub fn new(twist: f64, height: f64) -> Result<Self> {
        if !(twist > -PI && twist <= PI) {
            return Err(Error::Domain(format!("twist A = {twist} outside (-pi, pi]")));
        }
        if !(height > 0.0) {
            return Err(Error::Domain(format!("height B = {height} must be positive")));
        }
        if twist.hypot(height) < 2.0 * PI {
            return Err(Error::Domain(format!(
                "|A + iB| = {} below 2 pi; lattice not in the fundamental domain",
                twist.hypot(height)
            )));
        }
        Ok(Self { twist, height })
    }

    pub fn twist(&self) -> f64 {
        self.twist
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Constant conformal factor `(2 pi B)^{-1/2}` making the area one.
    pub fn rho(&self) -> f64 {
        (2.0 * PI * self.height).powf(-0.5)
    }

    /// Length of the shortest closed geodesic, `2 inj = 2 pi rho`.
    pub fn sys_length(&self) -> f64 {
        2.0 * PI * self.rho()
    }

    /// Height `B` whose systole equals `ell` (inverse of [`Self::sys_length`]).
    pub fn height_for_sys_length(ell: f64) -> f64 {
        // ell = 2 pi (2 pi B)^{-1/2}  =>  B = 2 pi / ell^2
        2.0 * PI / (ell * ell)
    }
}
