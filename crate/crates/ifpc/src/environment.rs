//! Ambient air, Mach number, inlet totals and dynamic pressure.
//!
//! Altitude enters as the NED `z` coordinate in metres. Engine-facing
//! quantities use kilometres for `H` and bar-scale pressure (1.01325 at sea
//! level) so the tabulated atmosphere constants apply unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported altitude band, km.
pub const H_MAX_KM: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtmosphereParams {
    /// Density at the reference height, kg/m³.
    pub rho0: f64,
    /// Reference height, m.
    pub h0: f64,
    /// Density scale height, m.
    pub he: f64,
    pub kappa: f64,
    /// Gas constant, J/(kg·K).
    pub r_gas: f64,
}

impl Default for AtmosphereParams {
    fn default() -> Self {
        Self {
            rho0: 1.225,
            h0: 0.0,
            he: 8500.0,
            kappa: 1.4,
            r_gas: 287.05,
        }
    }
}

impl AtmosphereParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("atmosphere.rho0", self.rho0),
            ("atmosphere.he", self.he),
            ("atmosphere.kappa", self.kappa),
            ("atmosphere.r_gas", self.r_gas),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.kappa <= 1.0 {
            return Err(Error::config("atmosphere.kappa", "must exceed 1"));
        }
        if !self.h0.is_finite() {
            return Err(Error::config("atmosphere.h0", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientConditions {
    pub t_s0: f64,
    pub p_s0: f64,
    pub rho: f64,
    /// Altitude, km.
    pub h_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InletConditions {
    pub ma: f64,
    pub t_t1: f64,
    pub p_t1: f64,
    pub sigma_in: f64,
    pub t_t2: f64,
    pub p_t2: f64,
}

pub fn ambient_conditions(z: f64, params: &AtmosphereParams) -> Result<AmbientConditions> {
    let h_km = -z * 1e-3;
    if !(0.0..=H_MAX_KM).contains(&h_km) {
        return Err(Error::Envelope {
            guard: "altitude outside 0..30 km",
            value: h_km,
        });
    }
    let (t_s0, p_s0) = if h_km <= 11.0 {
        (
            288.15 - 6.5 * h_km,
            1.01325 * (1.0 - h_km / 44.308).powf(5.2553),
        )
    } else {
        (216.5, 0.22615 * ((11.0 - h_km) / 6.338).exp())
    };
    let rho = params.rho0 * (-(-z - params.h0) / params.he).exp();
    Ok(AmbientConditions {
        t_s0,
        p_s0,
        rho,
        h_km,
    })
}

pub fn mach_number(v: f64, t_s0: f64, kappa: f64, r_gas: f64) -> f64 {
    v / (kappa * r_gas * t_s0).sqrt()
}

pub fn inlet_conditions(ma: f64, ambient: &AmbientConditions, kappa: f64) -> InletConditions {
    let factor = 1.0 + 0.5 * (kappa - 1.0) * ma * ma;
    let t_t1 = ambient.t_s0 * factor;
    let p_t1 = ambient.p_s0 * factor.powf(kappa / (kappa - 1.0));
    let sigma_in = if ma <= 1.0 {
        1.0
    } else {
        1.0 - 0.075 * (ma - 1.0).powf(1.35)
    };
    InletConditions {
        ma,
        t_t1,
        p_t1,
        sigma_in,
        t_t2: t_t1,
        p_t2: p_t1 * sigma_in,
    }
}

pub fn dynamic_pressure(v: f64, rho: f64) -> f64 {
    0.5 * rho * v * v
}
