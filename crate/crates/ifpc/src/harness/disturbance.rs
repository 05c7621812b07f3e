//! External disturbance profiles and their seeded realisation.
//!
//! Every profile is bounded and its time derivative vanishes as `t → ∞`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::airframe::DisturbanceVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: Vec<f64>,
    },
    /// `value · (1 − e^{−t/tau})`, starting at `start`.
    RampToConstant {
        value: Vec<f64>,
        tau: f64,
        #[serde(default)]
        start: f64,
    },
    /// `amplitude · e^{−decay·t} · sin(ω t + φ)`, phase drawn from the seed.
    DecayingSine {
        amplitude: Vec<f64>,
        frequency: f64,
        decay: f64,
    },
}

impl Profile {
    fn dim(&self) -> usize {
        match self {
            Profile::Constant { value } | Profile::RampToConstant { value, .. } => value.len(),
            Profile::DecayingSine { amplitude, .. } => amplitude.len(),
        }
    }

    fn validate(&self, field: &str, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::config(field, format!("expects {dim} component(s), got {}", self.dim())));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Profile::Constant { value } if !finite(value) => Err(Error::config(field, "value must be finite")),
            Profile::RampToConstant { value, tau, start } => {
                if !finite(value) || !(*tau > 0.0) || !(*start >= 0.0) {
                    Err(Error::config(field, "needs finite value, tau > 0 and start >= 0"))
                } else {
                    Ok(())
                }
            }
            Profile::DecayingSine { amplitude, frequency, decay } => {
                // A positive decay keeps the derivative vanishing.
                if !finite(amplitude) || !(*decay > 0.0) || !frequency.is_finite() {
                    Err(Error::config(field, "needs finite amplitude and frequency, decay > 0"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Profiles per channel; components of a channel are summed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceConfig {
    /// `d_p`, m/s.
    pub position: Vec<Profile>,
    /// `d_V`, m/s².
    pub airspeed: Vec<Profile>,
    /// `(d_γ, d_χ)`, rad/s.
    pub direction: Vec<Profile>,
    /// `(d_α, d_β, d_μ)`, rad/s.
    pub euler: Vec<Profile>,
    /// `d_ω`, rad/s².
    pub rates: Vec<Profile>,
    /// Fractional loss of delivered thrust, in [0, 1).
    pub thrust_loss: Vec<Profile>,
}

const CHANNELS: [(&str, usize); 6] = [
    ("position", 3),
    ("airspeed", 1),
    ("direction", 2),
    ("euler", 3),
    ("rates", 3),
    ("thrust_loss", 1),
];

impl DisturbanceConfig {
    fn channels(&self) -> [&Vec<Profile>; 6] {
        [
            &self.position,
            &self.airspeed,
            &self.direction,
            &self.euler,
            &self.rates,
            &self.thrust_loss,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, dim), profiles) in CHANNELS.iter().zip(self.channels()) {
            for (i, p) in profiles.iter().enumerate() {
                p.validate(&format!("disturbances.{name}[{i}]"), *dim)?;
            }
        }
        // Worst case of the summed thrust-loss components.
        let bound: f64 = self
            .thrust_loss
            .iter()
            .map(|p| match p {
                Profile::Constant { value } | Profile::RampToConstant { value, .. } => value[0].abs(),
                Profile::DecayingSine { amplitude, .. } => amplitude[0].abs(),
            })
            .sum();
        if bound >= 0.9 {
            return Err(Error::config("disturbances.thrust_loss", "total magnitude must stay below 0.9"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.channels().iter().all(|c| c.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Realised {
    Ramp { value: Vec<f64>, tau: f64, start: f64 },
    Sine { amplitude: Vec<f64>, omega: f64, decay: f64, phase: f64 },
}

impl Realised {
    fn add_into(&self, t: f64, out: &mut [f64]) {
        match self {
            Realised::Ramp { value, tau, start } => {
                let f = if t <= *start {
                    0.0
                } else if tau.is_infinite() {
                    1.0
                } else {
                    -(-(t - start) / tau).exp_m1()
                };
                for (o, v) in out.iter_mut().zip(value) {
                    *o += v * f;
                }
            }
            Realised::Sine { amplitude, omega, decay, phase } => {
                let f = (-decay * t).exp() * (omega * t + phase).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o += a * f;
                }
            }
        }
    }
}

/// Disturbance signals at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceSample {
    pub airframe: DisturbanceVector,
    pub thrust_loss: f64,
}

/// Deterministic realisation shared by every variant of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceRealisation {
    channels: Vec<Vec<Realised>>,
}

impl DisturbanceRealisation {
    pub fn new(cfg: &DisturbanceConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = cfg
            .channels()
            .iter()
            .map(|profiles| {
                profiles
                    .iter()
                    .map(|p| match p {
                        Profile::Constant { value } => Realised::Ramp {
                            value: value.clone(),
                            tau: f64::INFINITY,
                            start: 0.0,
                        },
                        Profile::RampToConstant { value, tau, start } => Realised::Ramp {
                            value: value.clone(),
                            tau: *tau,
                            start: *start,
                        },
                        Profile::DecayingSine { amplitude, frequency, decay } => Realised::Sine {
                            amplitude: amplitude.clone(),
                            omega: 2.0 * std::f64::consts::PI * frequency,
                            decay: *decay,
                            phase: rng.random_range(0.0..2.0 * std::f64::consts::PI),
                        },
                    })
                    .collect()
            })
            .collect();
        Self { channels }
    }

    fn channel(&self, idx: usize, t: f64, out: &mut [f64]) {
        for r in &self.channels[idx] {
            r.add_into(t, out);
        }
    }

    pub fn sample(&self, t: f64) -> DisturbanceSample {
        let mut p = [0.0; 3];
        let mut v = [0.0; 1];
        let mut psi = [0.0; 2];
        let mut th = [0.0; 3];
        let mut w = [0.0; 3];
        let mut loss = [0.0; 1];
        self.channel(0, t, &mut p);
        self.channel(1, t, &mut v);
        self.channel(2, t, &mut psi);
        self.channel(3, t, &mut th);
        self.channel(4, t, &mut w);
        self.channel(5, t, &mut loss);
        DisturbanceSample {
            airframe: DisturbanceVector {
                d_x: p[0],
                d_y: p[1],
                d_z: p[2],
                d_v: v[0],
                d_gamma: psi[0],
                d_chi: psi[1],
                d_alpha: th[0],
                d_beta: th[1],
                d_mu: th[2],
                d_omega: w,
            },
            thrust_loss: loss[0],
        }
    }
}
