//! Extended disturbance observers.
//!
//! Each channel estimates a state `s` and a lumped disturbance `d` from
//! `ṡ = known + w·d`:
//!
//! ```text
//! ŝ' = known + w·d̂ + k_o1 (s − ŝ)
//! d̂' = k_o2 (s − ŝ)
//! ```
//!
//! The error system has matrix `[[−k_o1, w], [−k_o2, 0]]`, which is Hurwitz
//! iff `k_o1 > 0` and `k_o2·w > 0`.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkit;
use crate::turbojet::LinearEngineModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverGains {
    pub k_o1: f64,
    pub k_o2: f64,
}

impl Default for ObserverGains {
    fn default() -> Self {
        Self { k_o1: 20.0, k_o2: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzCheck {
    pub hurwitz: bool,
    pub eigenvalues: [Complex<f64>; 2],
}

impl HurwitzCheck {
    /// Decay rate of the slowest mode, `-max Re λ`.
    pub fn slowest_rate(&self) -> f64 {
        -self.eigenvalues[0].re.max(self.eigenvalues[1].re)
    }

    /// Magnitude of the fastest eigenvalue.
    pub fn fastest_magnitude(&self) -> f64 {
        self.eigenvalues[0].norm().max(self.eigenvalues[1].norm())
    }
}

/// Eigenvalues of `λ² + k_o1 λ + k_o2 w = 0`.
pub fn check_hurwitz(k_o1: f64, k_o2: f64, w: f64) -> HurwitzCheck {
    let c = k_o2 * w;
    let disc = k_o1 * k_o1 - 4.0 * c;
    let eigenvalues = if disc >= 0.0 {
        let r = disc.sqrt();
        [Complex::new((-k_o1 - r) / 2.0, 0.0), Complex::new((-k_o1 + r) / 2.0, 0.0)]
    } else {
        let i = (-disc).sqrt() / 2.0;
        [Complex::new(-k_o1 / 2.0, -i), Complex::new(-k_o1 / 2.0, i)]
    };
    HurwitzCheck {
        hurwitz: k_o1 > 0.0 && c > 0.0,
        eigenvalues,
    }
}

/// One observer channel of arbitrary dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub s_hat: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub gains: ObserverGains,
    pub w: f64,
}

impl ObserverState {
    /// Starts at `ŝ = s0`, `d̂ = 0`. Fails unless the gains are Hurwitz.
    pub fn new(s0: &[f64], gains: ObserverGains, w: f64) -> Result<Self> {
        if !check_hurwitz(gains.k_o1, gains.k_o2, w).hurwitz {
            return Err(Error::NotHurwitz {
                k_o1: gains.k_o1,
                k_o2: gains.k_o2,
                w,
            });
        }
        Ok(Self {
            s_hat: s0.to_vec(),
            d_hat: vec![0.0; s0.len()],
            gains,
            w,
        })
    }

    pub fn dim(&self) -> usize {
        self.s_hat.len()
    }

    pub fn error_matrix(&self) -> nalgebra::Matrix2<f64> {
        nalgebra::Matrix2::new(-self.gains.k_o1, self.w, -self.gains.k_o2, 0.0)
    }
}

/// Writes `(ŝ', d̂')` for packed `[ŝ, d̂]` into `out`.
pub fn observer_rates(gains: &ObserverGains, w: f64, packed: &[f64], s: &[f64], known: &[f64], out: &mut [f64]) {
    let n = s.len();
    for i in 0..n {
        let innov = s[i] - packed[i];
        out[i] = known[i] + w * packed[n + i] + gains.k_o1 * innov;
        out[n + i] = gains.k_o2 * innov;
    }
}

/// One RK4 step holding the measurement and known dynamics constant.
pub fn observer_step(obs: &ObserverState, s_measured: &[f64], known: &[f64], dt: f64) -> Result<ObserverState> {
    let n = obs.dim();
    if s_measured.len() != n || known.len() != n {
        return Err(Error::EstimationFault("channel dimension mismatch"));
    }
    if !(dt > 0.0) || s_measured.iter().chain(known).any(|v| !v.is_finite()) {
        return Err(Error::EstimationFault("non-finite observer input"));
    }
    let packed: Vec<f64> = obs.s_hat.iter().chain(&obs.d_hat).copied().collect();
    let next = simkit::rk4_step(
        |_, x, dx| {
            observer_rates(&obs.gains, obs.w, x, s_measured, known, dx);
            Ok(())
        },
        0.0,
        &packed,
        dt,
    )
    .map_err(|_| Error::EstimationFault("observer integration produced non-finite values"))?;
    Ok(ObserverState {
        s_hat: next[..n].to_vec(),
        d_hat: next[n..].to_vec(),
        gains: obs.gains,
        w: obs.w,
    })
}

/// Bank channels in stepping and packing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Position,
    Airspeed,
    Direction,
    Euler,
    Rates,
    Rotor,
    ThrustSurrogate,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Position,
        Channel::Airspeed,
        Channel::Direction,
        Channel::Euler,
        Channel::Rates,
        Channel::Rotor,
        Channel::ThrustSurrogate,
    ];

    pub fn dim(self) -> usize {
        match self {
            Channel::Position | Channel::Euler | Channel::Rates => 3,
            Channel::Direction => 2,
            Channel::Airspeed | Channel::Rotor | Channel::ThrustSurrogate => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Position => "position",
            Channel::Airspeed => "airspeed",
            Channel::Direction => "direction",
            Channel::Euler => "euler",
            Channel::Rates => "rates",
            Channel::Rotor => "rotor",
            Channel::ThrustSurrogate => "thrust",
        }
    }
}

/// How `d̂_ΔT` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThrustEstimateMode {
    /// The airspeed channel runs on the linear thrust model and its estimate,
    /// divided by `g_v`, is taken as `d̂_ΔT`.
    #[default]
    Lumped,
    /// A dedicated channel on `s = ∫ΔT_true dt`; validation only, since it
    /// reads the true thrust.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankGains {
    pub position: ObserverGains,
    pub airspeed: ObserverGains,
    pub direction: ObserverGains,
    pub euler: ObserverGains,
    pub rates: ObserverGains,
    pub rotor: ObserverGains,
    pub thrust: ObserverGains,
}

impl BankGains {
    pub fn get(&self, c: Channel) -> ObserverGains {
        match c {
            Channel::Position => self.position,
            Channel::Airspeed => self.airspeed,
            Channel::Direction => self.direction,
            Channel::Euler => self.euler,
            Channel::Rates => self.rates,
            Channel::Rotor => self.rotor,
            Channel::ThrustSurrogate => self.thrust,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in Channel::ALL {
            let g = self.get(c);
            if !check_hurwitz(g.k_o1, g.k_o2, 1.0).hurwitz {
                return Err(Error::config(
                    format!("observers.{}", c.name()),
                    format!("gains k_o1 = {}, k_o2 = {} are not Hurwitz", g.k_o1, g.k_o2),
                ));
            }
        }
        Ok(())
    }
}

/// Per-channel values in bank order: measurements, known dynamics or estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelSignals {
    pub position: [f64; 3],
    pub airspeed: f64,
    pub direction: [f64; 2],
    pub euler: [f64; 3],
    pub rates: [f64; 3],
    pub rotor: f64,
    pub thrust: f64,
}

impl ChannelSignals {
    pub fn get(&self, c: Channel) -> &[f64] {
        match c {
            Channel::Position => &self.position,
            Channel::Airspeed => std::slice::from_ref(&self.airspeed),
            Channel::Direction => &self.direction,
            Channel::Euler => &self.euler,
            Channel::Rates => &self.rates,
            Channel::Rotor => std::slice::from_ref(&self.rotor),
            Channel::ThrustSurrogate => std::slice::from_ref(&self.thrust),
        }
    }

    pub fn get_mut(&mut self, c: Channel) -> &mut [f64] {
        match c {
            Channel::Position => &mut self.position,
            Channel::Airspeed => std::slice::from_mut(&mut self.airspeed),
            Channel::Direction => &mut self.direction,
            Channel::Euler => &mut self.euler,
            Channel::Rates => &mut self.rates,
            Channel::Rotor => std::slice::from_mut(&mut self.rotor),
            Channel::ThrustSurrogate => std::slice::from_mut(&mut self.thrust),
        }
    }
}

/// All channels, packed as consecutive `[ŝ, d̂]` blocks in [`Channel::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverBank {
    pub gains: BankGains,
    pub mode: ThrustEstimateMode,
    state: Vec<f64>,
}

impl ObserverBank {
    pub const PACKED_LEN: usize = 2 * (3 + 1 + 2 + 3 + 3 + 1 + 1);

    pub fn new(initial: &ChannelSignals, gains: BankGains, mode: ThrustEstimateMode) -> Result<Self> {
        let mut state = Vec::with_capacity(Self::PACKED_LEN);
        for c in Channel::ALL {
            let obs = ObserverState::new(initial.get(c), gains.get(c), 1.0)?;
            state.extend(&obs.s_hat);
            state.extend(&obs.d_hat);
        }
        Ok(Self { gains, mode, state })
    }

    fn offset(c: Channel) -> usize {
        Channel::ALL
            .iter()
            .take_while(|&&k| k != c)
            .map(|k| 2 * k.dim())
            .sum()
    }

    pub fn packed(&self) -> &[f64] {
        &self.state
    }

    pub fn set_packed(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != Self::PACKED_LEN || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::EstimationFault("observer bank state invalid"));
        }
        self.state.copy_from_slice(x);
        Ok(())
    }

    pub fn channel(&self, c: Channel) -> ObserverState {
        let o = Self::offset(c);
        let n = c.dim();
        ObserverState {
            s_hat: self.state[o..o + n].to_vec(),
            d_hat: self.state[o + n..o + 2 * n].to_vec(),
            gains: self.gains.get(c),
            w: 1.0,
        }
    }

    fn collect(&self, second: bool) -> ChannelSignals {
        let mut out = ChannelSignals::default();
        for c in Channel::ALL {
            let o = Self::offset(c) + if second { c.dim() } else { 0 };
            out.get_mut(c).copy_from_slice(&self.state[o..o + c.dim()]);
        }
        out
    }

    pub fn state_estimates(&self) -> ChannelSignals {
        self.collect(false)
    }

    pub fn disturbance_estimates(&self) -> ChannelSignals {
        self.collect(true)
    }

    /// Bank derivative for packed state `x`; used inside the plant's RK4 stages.
    pub fn rates(gains: &BankGains, x: &[f64], measured: &ChannelSignals, known: &ChannelSignals, out: &mut [f64]) {
        for c in Channel::ALL {
            let o = Self::offset(c);
            let n = c.dim();
            observer_rates(
                &gains.get(c),
                1.0,
                &x[o..o + 2 * n],
                measured.get(c),
                known.get(c),
                &mut out[o..o + 2 * n],
            );
        }
    }
}

/// Rotor and thrust disturbance estimates handed to the fuel-flow loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThrustEstimates {
    pub d_hat_dn: f64,
    pub d_hat_dt: f64,
    /// Airspeed-channel estimate left for the airspeed loop.
    pub d_hat_v: f64,
    /// Set when `(Δn, ΔW_f)` lies outside the linear model's validity radius.
    pub outside_validity: bool,
}

/// Splits bank estimates into `(d̂_Δn, d̂_ΔT, d̂_V)` according to the mode.
///
/// In lumped mode the airspeed estimate, which absorbs `g_v·d_ΔT + d_V`, is
/// converted into a thrust estimate and `d̂_V` is reported as zero.
pub fn thrust_channel_estimates(
    linear: &LinearEngineModel,
    dn: f64,
    dwf: f64,
    d_hat: &ChannelSignals,
    mode: ThrustEstimateMode,
    g_v: f64,
) -> Result<ThrustEstimates> {
    let outside_validity = dn.abs().max(dwf.abs()) > linear.validity_radius;
    let (d_hat_dt, d_hat_v) = match mode {
        ThrustEstimateMode::Lumped => {
            if g_v.abs() < 1e-12 {
                return Err(Error::Singular {
                    what: "airspeed input gain g_v",
                    condition: f64::INFINITY,
                });
            }
            (d_hat.airspeed / g_v, 0.0)
        }
        ThrustEstimateMode::Truth => (d_hat.thrust, d_hat.airspeed),
    };
    Ok(ThrustEstimates {
        d_hat_dn: d_hat.rotor,
        d_hat_dt,
        d_hat_v,
        outside_validity,
    })
}
