//! Single-spool turbojet: component stations, continuity balance, rotor
//! dynamics, trim and small-signal linearisation.
//!
//! Pressures are bar-scale (1.01325 at sea level) and converted to pascals
//! wherever a mass flow or force is formed. The turbine map's second field
//! is the corrected specific work `L_t/T_t4` in J/(kg·K); station records
//! report `L_t` as shaft power in watts.

pub mod maps;

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::environment::{self, AmbientConditions, InletConditions};
use crate::error::{Error, Result};
pub use maps::CharacteristicMaps;

const BAR: f64 = 1e5;
/// Relative continuity residual at which the balance is accepted.
pub const BALANCE_TOL: f64 = 1e-12;
/// Bound every accepted solve must satisfy.
pub const RESIDUAL_BOUND: f64 = 1e-8;
const BALANCE_MAX_ITER: usize = 50;
const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineParams {
    pub kappa: f64,
    pub r_gas: f64,
    pub c_p: f64,
    pub h_u: f64,
    pub eta_b: f64,
    pub sigma_b: f64,
    pub eta_m: f64,
    pub j_r: f64,
    pub a8: f64,
    pub n_d: f64,
    pub t_t2d: f64,
    pub t_t4d: f64,
    pub pi_c_min: f64,
    pub pi_c_max: f64,
    pub w_g4cor_min: f64,
    pub w_g4cor_max: f64,
    /// Nozzle flow constant; derived from `kappa` and `r_gas` when `None`.
    pub k_m: Option<f64>,
    pub w_f_min: f64,
    pub w_f_max: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            kappa: 1.4,
            r_gas: 287.05,
            c_p: 1005.0,
            h_u: 4.3e7,
            eta_b: 0.95,
            sigma_b: 0.95,
            eta_m: 0.98,
            j_r: 5e-5,
            a8: 6.3e-4,
            n_d: 120_000.0,
            t_t2d: 288.15,
            t_t4d: 1100.0,
            pi_c_min: 1.05,
            pi_c_max: 3.6,
            w_g4cor_min: 0.04,
            w_g4cor_max: 0.12,
            k_m: None,
            w_f_min: 3e-4,
            w_f_max: 3e-3,
        }
    }
}

impl EngineParams {
    pub fn k_m(&self) -> f64 {
        self.k_m.unwrap_or_else(|| {
            let k = self.kappa;
            (k / self.r_gas * (2.0 / (k + 1.0)).powf((k + 1.0) / (k - 1.0))).sqrt()
        })
    }

    pub fn critical_pressure_ratio(&self) -> f64 {
        let k = self.kappa;
        ((k + 1.0) / 2.0).powf(k / (k - 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("engine.kappa", self.kappa),
            ("engine.r_gas", self.r_gas),
            ("engine.c_p", self.c_p),
            ("engine.h_u", self.h_u),
            ("engine.eta_b", self.eta_b),
            ("engine.sigma_b", self.sigma_b),
            ("engine.eta_m", self.eta_m),
            ("engine.j_r", self.j_r),
            ("engine.a8", self.a8),
            ("engine.n_d", self.n_d),
            ("engine.t_t2d", self.t_t2d),
            ("engine.t_t4d", self.t_t4d),
            ("engine.pi_c_min", self.pi_c_min),
            ("engine.pi_c_max", self.pi_c_max),
            ("engine.w_g4cor_min", self.w_g4cor_min),
            ("engine.w_g4cor_max", self.w_g4cor_max),
            ("engine.w_f_min", self.w_f_min),
            ("engine.w_f_max", self.w_f_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("engine.eta_b", self.eta_b),
            ("engine.sigma_b", self.sigma_b),
            ("engine.eta_m", self.eta_m),
        ] {
            if v > 1.0 {
                return Err(Error::config(name, "must not exceed 1"));
            }
        }
        if self.kappa <= 1.0 {
            return Err(Error::config("engine.kappa", "must exceed 1"));
        }
        if self.pi_c_max <= self.pi_c_min {
            return Err(Error::config("engine.pi_c_max", "must exceed pi_c_min"));
        }
        if self.w_g4cor_max <= self.w_g4cor_min {
            return Err(Error::config("engine.w_g4cor_max", "must exceed w_g4cor_min"));
        }
        if self.w_f_max <= self.w_f_min {
            return Err(Error::config("engine.w_f_max", "must exceed w_f_min"));
        }
        if let Some(k) = self.k_m {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::config("engine.k_m", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Airspeed and ambient state seen by the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightCondition {
    pub v: f64,
    pub ambient: AmbientConditions,
}

impl FlightCondition {
    pub fn inlet(&self, params: &EngineParams) -> InletConditions {
        let ma = environment::mach_number(self.v, self.ambient.t_s0, params.kappa, params.r_gas);
        environment::inlet_conditions(ma, &self.ambient, params.kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressorOut {
    pub n_c_cor: f64,
    pub z_c: f64,
    pub pi_c: f64,
    pub w_a2cor: f64,
    pub eta_c: f64,
    pub t_t2: f64,
    pub p_t2: f64,
    pub t_t3: f64,
    pub p_t3: f64,
    pub w_a2: f64,
    pub w_a3: f64,
    pub l_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurnerOut {
    pub w_f: f64,
    pub f_g: f64,
    pub t_t3: f64,
    pub t_t4: f64,
    pub p_t4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbineOut {
    pub n_t_cor: f64,
    pub w_t: f64,
    pub w_g4cor: f64,
    /// Corrected specific work `L_t/T_t4`, J/(kg·K).
    pub work: f64,
    pub eta_t: f64,
    pub t_t4: f64,
    pub p_t4: f64,
    pub l_t: f64,
    pub t_t5: f64,
    pub pi_t: f64,
    pub p_t5: f64,
    pub w_g4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NozzleOut {
    pub t_t7: f64,
    pub p_t7: f64,
    pub choked: bool,
    pub ma8: f64,
    pub p_s8: f64,
    pub t_s8: f64,
    pub v8: f64,
    pub q: f64,
    pub w_g8: f64,
    pub thrust: f64,
}

/// Every station quantity at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineStations {
    pub n: f64,
    pub n_c_cor: f64,
    pub n_t_cor: f64,
    pub z_c: f64,
    pub w_t: f64,
    pub t_t1: f64,
    pub t_t2: f64,
    pub t_t3: f64,
    pub t_t4: f64,
    pub t_t5: f64,
    pub t_t7: f64,
    pub t_s8: f64,
    pub p_t1: f64,
    pub p_t2: f64,
    pub p_t3: f64,
    pub p_t4: f64,
    pub p_t5: f64,
    pub p_t7: f64,
    pub p_s8: f64,
    pub pi_c: f64,
    pub pi_t: f64,
    pub sigma_in: f64,
    pub eta_c: f64,
    pub eta_t: f64,
    pub w_a2: f64,
    pub w_a3: f64,
    pub w_g4: f64,
    pub w_g8: f64,
    pub w_f: f64,
    pub f_g: f64,
    pub l_c: f64,
    pub l_t: f64,
    pub ma8: f64,
    pub q: f64,
    pub v8: f64,
    pub thrust: f64,
    pub choked: bool,
    /// `(W_g4 − W_a3 − W_f)/W_a3`.
    pub residual_mass: f64,
    /// `(W_g8 − W_g4)/W_a3`.
    pub residual_nozzle: f64,
}

impl EngineStations {
    pub fn residuals(&self) -> [f64; 2] {
        [self.residual_mass, self.residual_nozzle]
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_mass.abs().max(self.residual_nozzle.abs())
    }
}

pub fn compressor_eval(
    n: f64,
    z_c: f64,
    inlet: &InletConditions,
    params: &EngineParams,
    maps: &CharacteristicMaps,
) -> Result<CompressorOut> {
    let n_c_cor = n * params.t_t2d.sqrt() / (params.n_d * inlet.t_t2.sqrt());
    let axes = ("n_c_cor", "z_c");
    let pi_c = maps.compressor.first.eval("compressor", axes, n_c_cor, z_c)?;
    let w_a2cor = maps.compressor.second.eval("compressor", axes, n_c_cor, z_c)?;
    let eta_c = maps.compressor.eta.eval("compressor", axes, n_c_cor, z_c)?;
    if eta_c <= 0.0 {
        return Err(Error::Infeasible("compressor efficiency nonpositive"));
    }
    let k = params.kappa;
    let w_a2 = corrected_to_actual(w_a2cor, inlet.p_t2, inlet.t_t2);
    let t_t3 = compressor_exit_temperature(inlet.t_t2, pi_c, eta_c, k);
    Ok(CompressorOut {
        n_c_cor,
        z_c,
        pi_c,
        w_a2cor,
        eta_c,
        t_t2: inlet.t_t2,
        p_t2: inlet.p_t2,
        t_t3,
        p_t3: inlet.p_t2 * pi_c,
        w_a2,
        w_a3: w_a2,
        l_c: w_a2 * params.c_p * (t_t3 - inlet.t_t2),
    })
}

pub fn compressor_exit_temperature(t_t2: f64, pi_c: f64, eta_c: f64, kappa: f64) -> f64 {
    t_t2 * ((pi_c.powf((kappa - 1.0) / kappa) - 1.0) / eta_c + 1.0)
}

/// Isentropic-efficiency expansion ratio; `None` when the bracket is nonpositive.
pub fn turbine_pressure_ratio(t_t4: f64, t_t5: f64, eta_t: f64, kappa: f64) -> Option<f64> {
    let bracket = 1.0 - (1.0 - t_t5 / t_t4) / eta_t;
    (bracket > 0.0).then(|| bracket.powf(-kappa / (kappa - 1.0)))
}

/// Standard corrected-flow conversion, reference 1.01325 bar and 288.15 K.
fn corrected_to_actual(w_cor: f64, p_t: f64, t_t: f64) -> f64 {
    w_cor * p_t / (1.01325 * (t_t / 288.15).sqrt())
}

pub fn burner_eval(w_f: f64, comp: &CompressorOut, params: &EngineParams) -> BurnerOut {
    let f_g = w_f / comp.w_a3;
    BurnerOut {
        w_f,
        f_g,
        t_t3: comp.t_t3,
        t_t4: comp.t_t3 + f_g * params.h_u * params.eta_b / params.c_p,
        p_t4: params.sigma_b * comp.p_t3,
    }
}

pub fn turbine_eval(
    n: f64,
    w_t: f64,
    burner: &BurnerOut,
    params: &EngineParams,
    maps: &CharacteristicMaps,
) -> Result<TurbineOut> {
    if !(burner.t_t4 > 0.0) {
        return Err(Error::Infeasible("turbine inlet temperature nonpositive"));
    }
    let n_t_cor = n * params.t_t4d.sqrt() / (params.n_d * burner.t_t4.sqrt());
    let axes = ("n_t_cor", "w_t");
    let w_g4cor = maps.turbine.first.eval("turbine", axes, n_t_cor, w_t)?;
    let work = maps.turbine.second.eval("turbine", axes, n_t_cor, w_t)?;
    let eta_t = maps.turbine.eta.eval("turbine", axes, n_t_cor, w_t)?;
    if eta_t <= 0.0 {
        return Err(Error::Infeasible("turbine efficiency nonpositive"));
    }
    let k = params.kappa;
    let w_g4 = corrected_to_actual(w_g4cor, burner.p_t4, burner.t_t4);
    let specific = burner.t_t4 * work;
    let t_t5 = burner.t_t4 - specific / params.c_p;
    let pi_t = turbine_pressure_ratio(burner.t_t4, t_t5, eta_t, k)
        .ok_or(Error::Infeasible("turbine expansion bracket nonpositive"))?;
    Ok(TurbineOut {
        n_t_cor,
        w_t,
        w_g4cor,
        work,
        eta_t,
        t_t4: burner.t_t4,
        p_t4: burner.p_t4,
        l_t: w_g4 * specific,
        t_t5,
        pi_t,
        p_t5: burner.p_t4 / pi_t,
        w_g4,
    })
}

/// Normalised corrected-flow function, `q(1) = 1`.
pub fn flow_function(ma: f64, kappa: f64) -> f64 {
    let k = kappa;
    ma * ((2.0 / (k + 1.0)) * (1.0 + 0.5 * (k - 1.0) * ma * ma)).powf(-(k + 1.0) / (2.0 * (k - 1.0)))
}

pub fn nozzle_eval(turb: &TurbineOut, ambient: &AmbientConditions, v: f64, params: &EngineParams) -> NozzleOut {
    let k = params.kappa;
    let t_t7 = turb.t_t5;
    let p_t7 = turb.p_t5;
    let pi_cr = params.critical_pressure_ratio();
    let ratio = p_t7 / ambient.p_s0;
    let choked = ratio >= pi_cr;
    let (p_s8, ma8) = if choked {
        (p_t7 / pi_cr, 1.0)
    } else {
        // Below ambient there is no outflow; the balance steers away from it.
        let r = ratio.max(1.0);
        (ambient.p_s0, (2.0 * (r.powf((k - 1.0) / k) - 1.0) / (k - 1.0)).sqrt())
    };
    let t_s8 = t_t7 / (1.0 + 0.5 * (k - 1.0) * ma8 * ma8);
    let v8 = ma8 * (k * params.r_gas * t_s8).sqrt();
    let q = flow_function(ma8, k);
    let w_g8 = params.k_m() * params.a8 * q * p_t7 * BAR / t_t7.sqrt();
    let thrust = w_g8 * (v8 - v) + params.a8 * (p_s8 - ambient.p_s0) * BAR;
    NozzleOut {
        t_t7,
        p_t7,
        choked,
        ma8,
        p_s8,
        t_s8,
        v8,
        q,
        w_g8,
        thrust,
    }
}

/// Station record at a trial `(z_c, w_t)`, balanced or not.
pub fn engine_stations(
    n: f64,
    w_f: f64,
    z_c: f64,
    w_t: f64,
    flight: &FlightCondition,
    params: &EngineParams,
    maps: &CharacteristicMaps,
) -> Result<EngineStations> {
    let inlet = flight.inlet(params);
    let comp = compressor_eval(n, z_c, &inlet, params, maps)?;
    let burn = burner_eval(w_f, &comp, params);
    let turb = turbine_eval(n, w_t, &burn, params, maps)?;
    let noz = nozzle_eval(&turb, &flight.ambient, flight.v, params);
    Ok(EngineStations {
        n,
        n_c_cor: comp.n_c_cor,
        n_t_cor: turb.n_t_cor,
        z_c,
        w_t,
        t_t1: inlet.t_t1,
        t_t2: inlet.t_t2,
        t_t3: comp.t_t3,
        t_t4: burn.t_t4,
        t_t5: turb.t_t5,
        t_t7: noz.t_t7,
        t_s8: noz.t_s8,
        p_t1: inlet.p_t1,
        p_t2: inlet.p_t2,
        p_t3: comp.p_t3,
        p_t4: burn.p_t4,
        p_t5: turb.p_t5,
        p_t7: noz.p_t7,
        p_s8: noz.p_s8,
        pi_c: comp.pi_c,
        pi_t: turb.pi_t,
        sigma_in: inlet.sigma_in,
        eta_c: comp.eta_c,
        eta_t: turb.eta_t,
        w_a2: comp.w_a2,
        w_a3: comp.w_a3,
        w_g4: turb.w_g4,
        w_g8: noz.w_g8,
        w_f,
        f_g: burn.f_g,
        l_c: comp.l_c,
        l_t: turb.l_t,
        ma8: noz.ma8,
        q: noz.q,
        v8: noz.v8,
        thrust: noz.thrust,
        choked: noz.choked,
        residual_mass: (turb.w_g4 - comp.w_a3 - w_f) / comp.w_a3,
        residual_nozzle: (noz.w_g8 - turb.w_g4) / comp.w_a3,
    })
}

/// Caller-owned warm start for [`engine_balance`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BalanceWarmStart {
    pub guess: Option<(f64, f64)>,
    jacobian: Option<Matrix2<f64>>,
    pub last_iterations: usize,
}

impl BalanceWarmStart {
    pub fn cold() -> Self {
        Self::default()
    }
}

fn residual_vec(st: &EngineStations) -> Vector2<f64> {
    Vector2::new(st.residual_mass, st.residual_nozzle)
}

/// Solves both continuity equations for `(z_c, w_t)` by damped Newton with
/// a forward-difference Jacobian, reused across iterations and calls while
/// it keeps contracting.
pub fn engine_balance(
    n: f64,
    w_f: f64,
    flight: &FlightCondition,
    params: &EngineParams,
    maps: &CharacteristicMaps,
    warm: &mut BalanceWarmStart,
) -> Result<EngineStations> {
    let eval = |x: &Vector2<f64>| engine_stations(n, w_f, x[0], x[1], flight, params, maps);

    let (mut x, mut st) = starting_point(warm, &eval)?;
    let mut jac = warm.jacobian;
    let mut f = residual_vec(&st);

    for it in 0..BALANCE_MAX_ITER {
        if f.amax() < BALANCE_TOL {
            warm.guess = Some((x[0], x[1]));
            warm.jacobian = jac;
            warm.last_iterations = it;
            return Ok(st);
        }
        let mut fresh = false;
        let j = match jac {
            Some(j) => j,
            None => {
                fresh = true;
                finite_difference_jacobian(&x, &f, &eval)?
            }
        };
        match damped_step(&x, &f, &j, &eval) {
            Some((xn, sn)) => {
                let fnew = residual_vec(&sn);
                // A reused Jacobian that stops contracting is refreshed.
                jac = if !fresh && fnew.amax() > 0.25 * f.amax() { None } else { Some(j) };
                x = xn;
                st = sn;
                f = fnew;
            }
            None if !fresh => jac = None,
            None => break,
        }
    }

    warm.jacobian = None;
    let boxed = |v: f64| v <= 0.0 || v >= 1.0;
    if boxed(x[0]) || boxed(x[1]) {
        return Err(Error::BalanceEnvelope { z_c: x[0], w_t: x[1] });
    }
    Err(Error::BalanceFailure {
        iterations: BALANCE_MAX_ITER,
        residuals: [f[0], f[1]],
    })
}

fn starting_point(
    warm: &BalanceWarmStart,
    eval: &impl Fn(&Vector2<f64>) -> Result<EngineStations>,
) -> Result<(Vector2<f64>, EngineStations)> {
    if let Some((z, w)) = warm.guess {
        let x = Vector2::new(z, w);
        if let Ok(st) = eval(&x) {
            return Ok((x, st));
        }
    }
    // Cold start: the feasible seed with the smallest residual.
    let mut best: Option<(Vector2<f64>, EngineStations)> = None;
    let mut first_err = None;
    for i in 1..10 {
        for j in 1..10 {
            let x = Vector2::new(i as f64 / 10.0, j as f64 / 10.0);
            match eval(&x) {
                Ok(st) => {
                    if best.as_ref().is_none_or(|(_, b)| st.max_residual() < b.max_residual()) {
                        best = Some((x, st));
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::Infeasible("no feasible balance seed")))
}

fn finite_difference_jacobian(
    x: &Vector2<f64>,
    f: &Vector2<f64>,
    eval: &impl Fn(&Vector2<f64>) -> Result<EngineStations>,
) -> Result<Matrix2<f64>> {
    let mut j = Matrix2::zeros();
    for k in 0..2 {
        // Step inward at the upper bound so the probe stays in the box.
        let h = if x[k] + JACOBIAN_STEP <= 1.0 { JACOBIAN_STEP } else { -JACOBIAN_STEP };
        let mut xp = *x;
        xp[k] += h;
        let fp = residual_vec(&eval(&xp)?);
        j.set_column(k, &((fp - f) / h));
    }
    Ok(j)
}

/// Newton step with halving until the residual norm decreases.
fn damped_step(
    x: &Vector2<f64>,
    f: &Vector2<f64>,
    j: &Matrix2<f64>,
    eval: &impl Fn(&Vector2<f64>) -> Result<EngineStations>,
) -> Option<(Vector2<f64>, EngineStations)> {
    let dx = j.try_inverse()? * (-f);
    let mut lambda = 1.0;
    while lambda > 1e-6 {
        let xn = (x + lambda * dx).map(|v| v.clamp(0.0, 1.0));
        if let Ok(st) = eval(&xn) {
            if residual_vec(&st).amax() < f.amax() {
                return Some((xn, st));
            }
        }
        lambda *= 0.5;
    }
    None
}

/// Spool acceleration, rpm/s.
pub fn rotor_derivative(n: f64, st: &EngineStations, params: &EngineParams) -> f64 {
    (params.eta_m * st.l_t - st.l_c) / (n * params.j_r * (PI / 30.0).powi(2))
}

/// Balanced stations plus `ṅ`.
pub fn engine_point(
    n: f64,
    w_f: f64,
    flight: &FlightCondition,
    params: &EngineParams,
    maps: &CharacteristicMaps,
    warm: &mut BalanceWarmStart,
) -> Result<(EngineStations, f64)> {
    let st = engine_balance(n, w_f, flight, params, maps, warm)?;
    Ok((st, rotor_derivative(n, &st, params)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrimTarget {
    Thrust(f64),
    Speed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineTrim {
    pub n0: f64,
    pub w_f0: f64,
    pub t0: f64,
    pub n_dot: f64,
    pub stations: EngineStations,
}

const TRIM_NDOT_TOL: f64 = 1e-7;

/// Fuel flow holding `ṅ = 0` at speed `n`.
fn equilibrium_fuel(
    n: f64,
    flight: &FlightCondition,
    params: &EngineParams,
    maps: &CharacteristicMaps,
    warm: &mut BalanceWarmStart,
) -> Result<(f64, EngineStations, f64)> {
    let ndot = |wf: f64, warm: &mut BalanceWarmStart| engine_point(n, wf, flight, params, maps, warm);

    // Bracket on a coarse fuel sweep; ṅ rises with fuel.
    let sweep = 24;
    let mut lo: Option<(f64, f64)> = None;
    let mut hi: Option<(f64, f64)> = None;
    for i in 0..=sweep {
        let wf = params.w_f_min + (params.w_f_max - params.w_f_min) * i as f64 / sweep as f64;
        let mut w = BalanceWarmStart::cold();
        let Ok((_, nd)) = ndot(wf, &mut w) else { continue };
        if nd <= 0.0 {
            lo = Some((wf, nd));
        } else {
            hi = Some((wf, nd));
            break;
        }
    }
    let (Some((mut a, mut fa)), Some((mut b, mut fb))) = (lo, hi) else {
        return Err(Error::TrimFailure(format!("no fuel flow within limits balances the spool at n = {n}")));
    };

    let mut x = a - fa * (b - a) / (fb - fa);
    for _ in 0..200 {
        let (st, f) = ndot(x, warm)?;
        if f.abs() < TRIM_NDOT_TOL || (b - a) < 1e-15 * b {
            return Ok((x, st, f));
        }
        if f <= 0.0 {
            a = x;
            fa = f;
        } else {
            b = x;
            fb = f;
        }
        // Newton from the current point, falling back to regula falsi / bisection.
        let h = 1e-7 * x;
        let (_, fh) = ndot(x + h, &mut warm.clone())?;
        let slope = (fh - f) / h;
        let mut next = x - f / slope;
        if !(next > a && next < b) {
            next = a - fa * (b - a) / (fb - fa);
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
        }
        x = next;
    }
    Err(Error::TrimFailure(format!("fuel iteration did not converge at n = {n}")))
}

/// Equilibrium `(n_0, W_f0, T_0)` meeting a thrust or speed target.
pub fn trim_engine(
    target: TrimTarget,
    flight: &FlightCondition,
    params: &EngineParams,
    maps: &CharacteristicMaps,
) -> Result<EngineTrim> {
    let mut warm = BalanceWarmStart::cold();
    let finish = |n: f64, (wf, st, nd): (f64, EngineStations, f64)| EngineTrim {
        n0: n,
        w_f0: wf,
        t0: st.thrust,
        n_dot: nd,
        stations: st,
    };
    match target {
        TrimTarget::Speed(n) => {
            if !(n > 0.0) {
                return Err(Error::TrimFailure("speed target must be positive".into()));
            }
            Ok(finish(n, equilibrium_fuel(n, flight, params, maps, &mut warm)?))
        }
        TrimTarget::Thrust(t) => {
            if !(t > 0.0) {
                return Err(Error::TrimFailure("thrust target must be positive".into()));
            }
            let thrust_err = |n: f64, warm: &mut BalanceWarmStart| {
                equilibrium_fuel(n, flight, params, maps, warm).map(|eq| (eq.1.thrust - t, eq))
            };
            // Equilibrium thrust rises with speed; bracket on a sweep.
            let mut lo: Option<(f64, f64)> = None;
            let mut hi: Option<(f64, f64)> = None;
            for i in 0..=30 {
                let n = params.n_d * (0.3 + 0.8 * i as f64 / 30.0);
                let Ok((e, _)) = thrust_err(n, &mut BalanceWarmStart::cold()) else { continue };
                if e <= 0.0 {
                    lo = Some((n, e));
                } else {
                    hi = Some((n, e));
                    break;
                }
            }
            let (Some((mut a, mut fa)), Some((mut b, mut fb))) = (lo, hi) else {
                return Err(Error::TrimFailure(format!("thrust {t} N not reachable at equilibrium")));
            };
            let mut n = a - fa * (b - a) / (fb - fa);
            for _ in 0..100 {
                let (e, eq) = thrust_err(n, &mut warm)?;
                if e.abs() < 1e-10 * t {
                    return Ok(finish(n, eq));
                }
                if e <= 0.0 {
                    a = n;
                    fa = e;
                } else {
                    b = n;
                    fb = e;
                }
                let h = 1e-6 * n;
                let (eh, _) = thrust_err(n + h, &mut warm.clone())?;
                let mut next = n - e * h / (eh - e);
                if !(next > a && next < b) {
                    next = a - fa * (b - a) / (fb - fa);
                    if !(next > a && next < b) {
                        next = 0.5 * (a + b);
                    }
                }
                n = next;
            }
            Err(Error::TrimFailure("speed iteration did not converge".into()))
        }
    }
}

/// Small-signal model `Δṅ = a_n Δn + b_n ΔW_f`, `ΔT = c_n Δn + d_n ΔW_f`
/// in relative deviations about `(n_0, W_f0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearEngineModel {
    pub t0: f64,
    pub n0: f64,
    pub w_f0: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub c_n: f64,
    pub d_n: f64,
    pub validity_radius: f64,
}

impl LinearEngineModel {
    pub fn dn_dot(&self, dn: f64, dwf: f64) -> f64 {
        self.a_n * dn + self.b_n * dwf
    }

    pub fn dt(&self, dn: f64, dwf: f64) -> f64 {
        self.c_n * dn + self.d_n * dwf
    }

    /// Eigenvalue of the thrust-compensated speed reference generator.
    pub fn reference_pole(&self) -> f64 {
        (self.b_n / self.d_n) * (self.a_n * self.d_n / self.b_n - self.c_n)
    }
}

/// Nonlinear engine in the normalised coordinates of [`LinearEngineModel`].
pub struct NormalisedEngine<'a> {
    pub n0: f64,
    pub w_f0: f64,
    pub t0: f64,
    pub flight: FlightCondition,
    pub params: &'a EngineParams,
    pub maps: &'a CharacteristicMaps,
}

impl NormalisedEngine<'_> {
    /// `(Δṅ, ΔT)` at relative deviations `(Δn, ΔW_f)`.
    pub fn eval(&self, dn: f64, dwf: f64) -> Result<(f64, f64)> {
        let n = self.n0 * (1.0 + dn);
        let mut warm = BalanceWarmStart::cold();
        let (st, nd) = engine_point(n, self.w_f0 * (1.0 + dwf), &self.flight, self.params, self.maps, &mut warm)?;
        Ok((nd / self.n0, (st.thrust - self.t0) / self.t0))
    }
}

const LIN_STEP: f64 = 1e-4;
const LIN_TOL: f64 = 0.05;

fn central(eng: &NormalisedEngine, axis: usize, h: f64) -> Result<(f64, f64)> {
    let at = |s: f64| if axis == 0 { eng.eval(s, 0.0) } else { eng.eval(0.0, s) };
    let (p_nd, p_t) = at(h)?;
    let (m_nd, m_t) = at(-h)?;
    Ok(((p_nd - m_nd) / (2.0 * h), (p_t - m_t) / (2.0 * h)))
}

/// Whether the linear prediction is within 5 % at `(Δn, ΔW_f)`.
pub fn linear_prediction_ok(lin: &LinearEngineModel, eng: &NormalisedEngine, dn: f64, dwf: f64) -> Result<bool> {
    let (nd, t) = eng.eval(dn, dwf)?;
    let ok = |lin: f64, nl: f64| (lin - nl).abs() < LIN_TOL * nl.abs() + 1e-6;
    Ok(ok(lin.dn_dot(dn, dwf), nd) && ok(lin.dt(dn, dwf), t))
}

/// Coefficients by Richardson-refined central differences, plus the largest
/// single-axis perturbation over which the 5 % prediction bound holds.
pub fn linearize(
    n0: f64,
    w_f0: f64,
    flight: &FlightCondition,
    params: &EngineParams,
    maps: &CharacteristicMaps,
) -> Result<LinearEngineModel> {
    let mut warm = BalanceWarmStart::cold();
    let st0 = engine_balance(n0, w_f0, flight, params, maps, &mut warm)?;
    let eng = NormalisedEngine {
        n0,
        w_f0,
        t0: st0.thrust,
        flight: *flight,
        params,
        maps,
    };
    let richardson = |axis: usize| -> Result<(f64, f64)> {
        let (a1, c1) = central(&eng, axis, LIN_STEP)?;
        let (a2, c2) = central(&eng, axis, 0.5 * LIN_STEP)?;
        Ok(((4.0 * a2 - a1) / 3.0, (4.0 * c2 - c1) / 3.0))
    };
    let (a_n, c_n) = richardson(0)?;
    let (b_n, d_n) = richardson(1)?;
    for (name, v) in [("a_n", a_n), ("b_n", b_n), ("c_n", c_n), ("d_n", d_n)] {
        if v.abs() < 1e-9 {
            return Err(Error::Assumption(format!("{name} = {v:e} is numerically zero")));
        }
    }
    if a_n >= 0.0 {
        return Err(Error::Assumption(format!("a_n = {a_n} is not negative (unstable spool)")));
    }
    let mut lin = LinearEngineModel {
        t0: st0.thrust,
        n0,
        w_f0,
        a_n,
        b_n,
        c_n,
        d_n,
        validity_radius: 0.0,
    };

    let mut r = 1e-3;
    while r <= 0.5 {
        let probes = [(r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r)];
        let all_ok = probes
            .iter()
            .all(|&(dn, dwf)| linear_prediction_ok(&lin, &eng, dn, dwf).unwrap_or(false));
        if !all_ok {
            break;
        }
        lin.validity_radius = r;
        r *= 1.25;
    }
    Ok(lin)
}
