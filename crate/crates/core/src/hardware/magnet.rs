//! Thermal stability of a single-domain magnet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Largest `U/kT` whose retention time is still reported as a number.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetParams {
    /// Saturation magnetization (A/m).
    pub ms: f64,
    /// Uniaxial anisotropy field (A/m).
    pub hk: f64,
    /// Volume (m³).
    pub volume: f64,
    /// Temperature (K).
    pub temperature: f64,
    /// Attempt time (s).
    pub tau0: f64,
    /// Take `Ms·Hk·Ω/2` as is, for inputs already in energy-compatible
    /// (CGS-style) units. Off by default, which multiplies by μ0.
    #[serde(default)]
    pub raw_product: bool,
}

impl MagnetParams {
    /// A soft in-plane magnet: Ms = 8e5 A/m, Hk = 8e3 A/m, a 10 nm cube at
    /// 300 K with τ₀ = 1 ns.
    pub fn soft() -> Self {
        Self {
            ms: 8e5,
            hk: 8e3,
            volume: 1e-24,
            temperature: 300.0,
            tau0: 1e-9,
            raw_product: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ms", self.ms),
            ("hk", self.hk),
            ("volume", self.volume),
            ("temperature", self.temperature),
            ("tau0", self.tau0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and strictly positive"));
            }
        }
        Ok(())
    }

    pub fn thermal_energy(&self) -> f64 {
        K_B * self.temperature
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Barrier {
    pub joules: f64,
    pub over_kt: f64,
}

/// `U = μ0·Ms·Hk·Ω/2`, also as a multiple of `k_B·T`.
pub fn barrier_energy(p: &MagnetParams) -> Result<Barrier> {
    p.validate()?;
    let mut u = p.ms * p.hk * p.volume / 2.0;
    if !p.raw_product {
        u *= MU0;
    }
    Ok(Barrier {
        joules: u,
        over_kt: u / p.thermal_energy(),
    })
}

/// `τ = τ₀·exp(U/kT)`. Exponents above [`MAX_EXPONENT`] are reported as
/// [`Error::Saturation`] instead of an infinite or meaningless time.
pub fn retention_time(u_over_kt: f64, tau0: f64) -> Result<f64> {
    if !u_over_kt.is_finite() {
        return Err(Error::NonFinite("U/kT"));
    }
    if !(tau0 > 0.0 && tau0.is_finite()) {
        return Err(Error::param("tau0", "must be finite and strictly positive"));
    }
    if u_over_kt > MAX_EXPONENT {
        return Err(Error::Saturation(format!(
            "retention time for U/kT = {u_over_kt} exceeds exp({MAX_EXPONENT})"
        )));
    }
    Ok(tau0 * u_over_kt.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub u_over_kt: f64,
    pub tau_s: f64,
}

/// Retention time over `u_over_kt` values.
pub fn retention_sweep(u_over_kt: &[f64], tau0: f64) -> Result<Vec<RetentionPoint>> {
    u_over_kt
        .iter()
        .map(|&u| {
            Ok(RetentionPoint {
                u_over_kt: u,
                tau_s: retention_time(u, tau0)?,
            })
        })
        .collect()
}
