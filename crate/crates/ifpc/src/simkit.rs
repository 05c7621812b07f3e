//! Fixed-step integration, angle arithmetic and command filtering.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub method: Method,
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("integrator.dt", "must be positive"));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(Error::config("integrator.duration", "must be at least dt"));
        }
        Ok(())
    }

    /// Number of steps on the uniform grid.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// One classical RK4 step of `x' = f(t, x)`.
///
/// `f` writes the derivative into its output slice. A non-finite derivative
/// component aborts with the stage time.
pub fn rk4_step<F>(mut f: F, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let mut stage = |t: f64, xs: &[f64], out: &mut [f64]| -> Result<()> {
        f(t, xs, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFault { time: t });
        }
        Ok(())
    };

    stage(t, x, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    stage(t + 0.5 * dt, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    stage(t + 0.5 * dt, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    stage(t + dt, &tmp, &mut k4)?;

    Ok((0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Signed shortest difference `a - b`, in (-π, π].
pub fn wrap_angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Maps any angle into (-π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = x.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandFilterState {
    pub value: f64,
    pub rate: f64,
    pub natural_frequency: f64,
    pub damping: f64,
}

impl CommandFilterState {
    pub fn new(value: f64, natural_frequency: f64, damping: f64) -> Self {
        Self {
            value,
            rate: 0.0,
            natural_frequency,
            damping,
        }
    }
}

/// Second-order tracker `v'' = ω²(u − v) − 2ζω v'`, raw input held over `dt`.
pub fn command_filter_step(fs: CommandFilterState, raw_command: f64, dt: f64) -> CommandFilterState {
    filter_step(fs, dt, |v| raw_command - v)
}

/// As [`command_filter_step`] for an angle: the tracking error is taken
/// along the shortest arc, so `value` stays continuous across the ±π seam.
pub fn command_filter_step_angle(fs: CommandFilterState, raw_command: f64, dt: f64) -> CommandFilterState {
    filter_step(fs, dt, |v| wrap_angle_diff(raw_command, v))
}

fn filter_step(fs: CommandFilterState, dt: f64, err: impl Fn(f64) -> f64) -> CommandFilterState {
    let w = fs.natural_frequency;
    let z = fs.damping;
    let deriv = |v: f64, r: f64| (r, w * w * err(v) - 2.0 * z * w * r);

    let (a1, b1) = deriv(fs.value, fs.rate);
    let (a2, b2) = deriv(fs.value + 0.5 * dt * a1, fs.rate + 0.5 * dt * b1);
    let (a3, b3) = deriv(fs.value + 0.5 * dt * a2, fs.rate + 0.5 * dt * b2);
    let (a4, b4) = deriv(fs.value + dt * a3, fs.rate + dt * b3);

    CommandFilterState {
        value: fs.value + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        rate: fs.rate + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        ..fs
    }
}
