//! Hierarchical trajectory controller.
//!
//! Outer loop: a motion-state planner turns position error into desired
//! airspeed and path angles. Attitude: three backstepping steps from path
//! angles to aerodynamic force, to aerodynamic angles, to body rates and
//! surface deflections. Propulsion: a desired relative thrust is turned into
//! a rotor speed reference with thrust compensation and then a fuel flow.
//!
//! Every derivative of a desired signal comes from a second-order command
//! filter; the raw command itself is the reference the error is taken from.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::airframe::{self, AffineTerms, ControlSurfaces, UavState};
use crate::error::{Error, Result};
use crate::estimation::{ChannelSignals, ThrustEstimates};
use crate::simkit::{self, CommandFilterState};
use crate::turbojet::LinearEngineModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    pub k_p: f64,
    pub k_psi: f64,
    pub k_theta: f64,
    pub k_omega: f64,
    pub k_v: f64,
    pub k_dn: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_p: 0.5,
            k_psi: 2.0,
            k_theta: 5.0,
            k_omega: 10.0,
            k_v: 1.0,
            k_dn: 5.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gains.k_p", self.k_p),
            ("gains.k_psi", self.k_psi),
            ("gains.k_theta", self.k_theta),
            ("gains.k_omega", self.k_omega),
            ("gains.k_v", self.k_v),
            ("gains.k_dn", self.k_dn),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Command filter bandwidths per loop and the planner airspeed floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    /// `V_d`, `γ_d`, `χ_d`.
    pub outer: f64,
    /// `α_d`, `β_d`, `μ_d`.
    pub attitude: f64,
    /// `ω_d`.
    pub rate: f64,
    pub damping: f64,
    pub v_floor: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            outer: 20.0,
            attitude: 20.0,
            rate: 40.0,
            damping: 1.0,
            v_floor: 5.0,
        }
    }
}

impl FilterSettings {
    pub fn validate(&self, gains: &ControllerGains) -> Result<()> {
        for (name, v) in [
            ("filters.outer", self.outer),
            ("filters.attitude", self.attitude),
            ("filters.rate", self.rate),
            ("filters.damping", self.damping),
            ("filters.v_floor", self.v_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        for (name, w, k) in [
            ("filters.outer", self.outer, gains.k_psi.max(gains.k_v)),
            ("filters.attitude", self.attitude, gains.k_theta),
            ("filters.rate", self.rate, gains.k_omega),
        ] {
            if w < 4.0 * k {
                return Err(Error::config(name, format!("bandwidth {w} below four times loop gain {k}")));
            }
        }
        Ok(())
    }
}

/// Which estimates the control laws consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Compensation {
    pub thrust: bool,
    pub disturbance: bool,
}

impl Default for Compensation {
    fn default() -> Self {
        Self {
            thrust: true,
            disturbance: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectorySample {
    pub p: Vector3<f64>,
    pub p_dot: Vector3<f64>,
}

/// Desired position and velocity as functions of time.
pub trait DesiredTrajectory {
    fn sample(&self, t: f64) -> TrajectorySample;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionPlan {
    pub v_ed: Vector3<f64>,
    pub v_d: f64,
    pub gamma_d: f64,
    pub chi_d: f64,
    /// Set when `V_d` was raised to the floor.
    pub floored: bool,
}

/// Airspeed and path angles reproducing a velocity vector exactly.
pub fn extract_motion_state(v: &Vector3<f64>) -> (f64, f64, f64) {
    let horizontal = v[0].hypot(v[1]);
    (v.norm(), (-v[2]).atan2(horizontal), v[1].atan2(v[0]))
}

pub fn motion_state_plan(
    e_p: &Vector3<f64>,
    d_hat_p: &Vector3<f64>,
    p_d_dot: &Vector3<f64>,
    k_p: f64,
    v_floor: f64,
) -> MotionPlan {
    let v_ed = -k_p * e_p - d_hat_p + p_d_dot;
    let (v, gamma_d, chi_d) = extract_motion_state(&v_ed);
    let floored = v < v_floor;
    MotionPlan {
        v_ed,
        v_d: v.max(v_floor),
        gamma_d,
        chi_d,
        floored,
    }
}

/// `(γ − γ_d, χ − χ_d)` with the heading difference along the shortest arc.
pub fn direction_error(psi: &Vector2<f64>, psi_d: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(psi[0] - psi_d[0], simkit::wrap_angle_diff(psi[1], psi_d[1]))
}

/// Desired aerodynamic force and the `(α_d, β_d)` producing it.
pub fn flight_direction_step1(
    psi: &Vector2<f64>,
    psi_d: &Vector2<f64>,
    psi_d_dot: &Vector2<f64>,
    d_hat_psi: &Vector2<f64>,
    terms: &AffineTerms,
    k_psi: f64,
) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let e = direction_error(psi, psi_d);
    let g_inv = airframe::inverse2(&terms.g_psi, "g_psi")?;
    let f_ad = -(g_inv * (k_psi * e + terms.f_psi + d_hat_psi - psi_d_dot));
    let gf_inv = airframe::inverse2(&terms.g_f, "g_F")?;
    Ok((f_ad, gf_inv * (f_ad - terms.f_f)))
}

pub fn attitude_step2(
    theta: &Vector3<f64>,
    theta_d: &Vector3<f64>,
    theta_d_dot: &Vector3<f64>,
    d_hat_theta: &Vector3<f64>,
    terms: &AffineTerms,
    k_theta: f64,
) -> Result<Vector3<f64>> {
    let g_inv = airframe::inverse3(&terms.g_theta, "g_theta")?;
    Ok(-(g_inv * (k_theta * (theta - theta_d) + terms.f_theta + d_hat_theta - theta_d_dot)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCommand {
    pub m_d: Vector3<f64>,
    pub delta: ControlSurfaces,
    /// Deflections before clamping.
    pub delta_raw: ControlSurfaces,
    pub saturated: bool,
}

/// Moment closing `ė_ω = −k_ω e_ω` and the deflections producing it,
/// clamped to `±delta_limit`.
pub fn rate_step3(
    omega: &Vector3<f64>,
    omega_d: &Vector3<f64>,
    omega_d_dot: &Vector3<f64>,
    d_hat_omega: &Vector3<f64>,
    terms: &AffineTerms,
    k_omega: f64,
    delta_limit: f64,
) -> Result<RateCommand> {
    let j: Matrix3<f64> = airframe::inverse3(&terms.g_omega, "g_omega")?;
    let m_d = j * (-k_omega * (omega - omega_d) - terms.f_omega - d_hat_omega + omega_d_dot);
    let gm_inv = airframe::inverse3(&terms.g_m, "g_M")?;
    let raw = gm_inv * (m_d - terms.f_m);
    let clamped = raw.map(|d| d.clamp(-delta_limit, delta_limit));
    Ok(RateCommand {
        m_d,
        delta: ControlSurfaces::from_vector(&clamped),
        delta_raw: ControlSurfaces::from_vector(&raw),
        saturated: clamped != raw,
    })
}

/// Relative thrust command `ΔT_d` closing `ė_V = −k_v e_V`.
pub fn airspeed_aux(v: f64, v_d: f64, v_d_dot: f64, d_hat_v: f64, f_v: f64, g_v: f64, k_v: f64) -> Result<f64> {
    if g_v.abs() < 1e-9 {
        return Err(Error::Singular {
            what: "g_v",
            condition: f64::INFINITY,
        });
    }
    Ok(-(k_v * (v - v_d) + f_v + d_hat_v - v_d_dot) / g_v)
}

/// Right-hand side of the rotor speed reference generator.
pub fn rotor_ref_rate(dn_d: f64, dt_d: f64, d_hat_dn: f64, d_hat_dt: f64, lin: &LinearEngineModel) -> f64 {
    let r = lin.b_n / lin.d_n;
    r * (lin.a_n * lin.d_n / lin.b_n - lin.c_n) * dn_d + r * dt_d + d_hat_dn - r * d_hat_dt
}

/// One RK4 step of the reference generator with inputs held; returns the
/// next `Δn_d` and the rate at the start of the step.
pub fn rotor_ref_step(
    dn_d: f64,
    dt_d: f64,
    d_hat_dn: f64,
    d_hat_dt: f64,
    lin: &LinearEngineModel,
    dt: f64,
) -> (f64, f64) {
    let f = |x: f64| rotor_ref_rate(x, dt_d, d_hat_dn, d_hat_dt, lin);
    let k1 = f(dn_d);
    let k2 = f(dn_d + 0.5 * dt * k1);
    let k3 = f(dn_d + 0.5 * dt * k2);
    let k4 = f(dn_d + dt * k3);
    (dn_d + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1)
}

/// Relative fuel-flow command `ΔW_f` closing `ė_Δn = −k_Δn e_Δn`.
pub fn fuel_flow_law(dn: f64, dn_d: f64, dn_d_dot: f64, d_hat_dn: f64, lin: &LinearEngineModel, k_dn: f64) -> f64 {
    -(k_dn * (dn - dn_d) + lin.a_n * dn - dn_d_dot + d_hat_dn) / lin.b_n
}

/// Bank angle for a coordinated turn at heading rate `χ̇_d`.
pub fn coordinated_turn(v: f64, chi_d_dot: f64, g: f64) -> f64 {
    (v * chi_d_dot / g).atan()
}

/// Everything the controller commands in one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommandSet {
    pub v_ed: Vector3<f64>,
    pub v_d: f64,
    pub v_d_dot: f64,
    pub gamma_d: f64,
    pub chi_d: f64,
    pub psi_d_dot: Vector2<f64>,
    pub f_ad: Vector2<f64>,
    pub theta_d: Vector2<f64>,
    pub mu_d: f64,
    /// `(α_d, β_d, μ_d)`.
    pub big_theta_d: Vector3<f64>,
    pub big_theta_d_dot: Vector3<f64>,
    pub omega_d: Vector3<f64>,
    pub omega_d_dot: Vector3<f64>,
    pub m_d: Vector3<f64>,
    pub delta: ControlSurfaces,
    pub dt_d: f64,
    pub dn_d: f64,
    pub dn_d_dot: f64,
    pub dwf: f64,
    pub w_f: f64,
    pub planner_floored: bool,
    pub surface_saturated: bool,
    pub fuel_saturated: bool,
}

/// Per-step inputs sampled at the start of the step.
#[derive(Debug, Clone, Copy)]
pub struct ControllerInputs<'a> {
    pub state: &'a UavState,
    pub trajectory: TrajectorySample,
    pub terms: &'a AffineTerms,
    /// Bank disturbance estimates.
    pub d_hat: &'a ChannelSignals,
    pub thrust: ThrustEstimates,
    /// `(n − n_0)/n_0`.
    pub dn: f64,
    pub g: f64,
    pub delta_limit: f64,
    pub w_f_limits: (f64, f64),
}

/// Filter states and the rotor reference integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub gains: ControllerGains,
    pub filters: FilterSettings,
    pub compensation: Compensation,
    pub linear: LinearEngineModel,
    /// Constant bank command used instead of the coordinated-turn law.
    pub mu_d_override: Option<f64>,
    v_f: CommandFilterState,
    gamma_f: CommandFilterState,
    chi_f: CommandFilterState,
    big_theta_f: [CommandFilterState; 3],
    omega_f: [CommandFilterState; 3],
    dn_d: f64,
    primed: bool,
}

impl Controller {
    pub fn new(
        gains: ControllerGains,
        filters: FilterSettings,
        compensation: Compensation,
        linear: LinearEngineModel,
    ) -> Self {
        let blank = CommandFilterState::new(0.0, 1.0, 1.0);
        Self {
            gains,
            filters,
            compensation,
            linear,
            mu_d_override: None,
            v_f: blank,
            gamma_f: blank,
            chi_f: blank,
            big_theta_f: [blank; 3],
            omega_f: [blank; 3],
            dn_d: 0.0,
            primed: false,
        }
    }

    pub fn dn_d(&self) -> f64 {
        self.dn_d
    }

    /// Filters start at rest on their first raw command.
    fn filter(&self, fs: &mut CommandFilterState, raw: f64, wn: f64, angle: bool, dt: f64) {
        if !self.primed {
            *fs = CommandFilterState::new(raw, wn, self.filters.damping);
        }
        *fs = if angle {
            simkit::command_filter_step_angle(*fs, raw, dt)
        } else {
            simkit::command_filter_step(*fs, raw, dt)
        };
    }

    /// Computes the commands for one step and advances the internal filters.
    pub fn step(&mut self, inp: &ControllerInputs, dt: f64) -> Result<CommandSet> {
        let k = self.gains;
        let fl = self.filters;
        let s = inp.state;
        let t = inp.terms;
        let zero_if = |on: bool, v: f64| if on { v } else { 0.0 };
        let dc = self.compensation.disturbance;
        let dh = inp.d_hat;
        let d_hat_p = Vector3::from(dh.position).map(|v| zero_if(dc, v));
        let d_hat_psi = Vector2::from(dh.direction).map(|v| zero_if(dc, v));
        let d_hat_theta = Vector3::from(dh.euler).map(|v| zero_if(dc, v));
        let d_hat_omega = Vector3::from(dh.rates).map(|v| zero_if(dc, v));
        let d_hat_v = zero_if(dc, inp.thrust.d_hat_v);
        let d_hat_dt = zero_if(self.compensation.thrust, inp.thrust.d_hat_dt);
        let d_hat_dn = inp.thrust.d_hat_dn;

        let e_p = s.position() - inp.trajectory.p;
        let plan = motion_state_plan(&e_p, &d_hat_p, &inp.trajectory.p_dot, k.k_p, fl.v_floor);

        let mut v_f = self.v_f;
        let mut gamma_f = self.gamma_f;
        let mut chi_f = self.chi_f;
        self.filter(&mut v_f, plan.v_d, fl.outer, false, dt);
        self.filter(&mut gamma_f, plan.gamma_d, fl.outer, false, dt);
        self.filter(&mut chi_f, plan.chi_d, fl.outer, true, dt);

        let mu_d = self
            .mu_d_override
            .unwrap_or_else(|| coordinated_turn(s.v, chi_f.rate, inp.g));
        let psi_d = Vector2::new(plan.gamma_d, plan.chi_d);
        let psi_d_dot = Vector2::new(gamma_f.rate, chi_f.rate);
        let (f_ad, theta_d) = flight_direction_step1(&s.psi(), &psi_d, &psi_d_dot, &d_hat_psi, t, k.k_psi)?;

        let big_theta_d = Vector3::new(theta_d[0], theta_d[1], mu_d);
        let mut big_theta_f = self.big_theta_f;
        for i in 0..3 {
            self.filter(&mut big_theta_f[i], big_theta_d[i], fl.attitude, false, dt);
        }
        let big_theta_d_dot = Vector3::from_fn(|i, _| big_theta_f[i].rate);
        let omega_d = attitude_step2(&s.theta(), &big_theta_d, &big_theta_d_dot, &d_hat_theta, t, k.k_theta)?;

        let mut omega_f = self.omega_f;
        for i in 0..3 {
            self.filter(&mut omega_f[i], omega_d[i], fl.rate, false, dt);
        }
        let omega_d_dot = Vector3::from_fn(|i, _| omega_f[i].rate);
        let rate = rate_step3(&s.omega(), &omega_d, &omega_d_dot, &d_hat_omega, t, k.k_omega, inp.delta_limit)?;

        let dt_d = airspeed_aux(s.v, plan.v_d, v_f.rate, d_hat_v, t.f_v, t.g_v, k.k_v)?;
        let dn_d = self.dn_d;
        let (dn_d_next, dn_d_dot) = rotor_ref_step(dn_d, dt_d, d_hat_dn, d_hat_dt, &self.linear, dt);
        let dwf = fuel_flow_law(inp.dn, dn_d, dn_d_dot, d_hat_dn, &self.linear, k.k_dn);
        let w_f_raw = self.linear.w_f0 * (1.0 + dwf);
        let w_f = w_f_raw.clamp(inp.w_f_limits.0, inp.w_f_limits.1);

        self.v_f = v_f;
        self.gamma_f = gamma_f;
        self.chi_f = chi_f;
        self.big_theta_f = big_theta_f;
        self.omega_f = omega_f;
        self.dn_d = dn_d_next;
        self.primed = true;

        Ok(CommandSet {
            v_ed: plan.v_ed,
            v_d: plan.v_d,
            v_d_dot: v_f.rate,
            gamma_d: plan.gamma_d,
            chi_d: plan.chi_d,
            psi_d_dot,
            f_ad,
            theta_d,
            mu_d,
            big_theta_d,
            big_theta_d_dot,
            omega_d,
            omega_d_dot,
            m_d: rate.m_d,
            delta: rate.delta,
            dt_d,
            dn_d,
            dn_d_dot,
            dwf,
            w_f,
            planner_floored: plan.floored,
            surface_saturated: rate.saturated,
            fuel_saturated: w_f != w_f_raw,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lin() -> LinearEngineModel {
        LinearEngineModel {
            t0: 14.0,
            n0: 60_000.0,
            w_f0: 1e-3,
            a_n: -0.8,
            b_n: 1.0,
            c_n: 1.55,
            d_n: 0.63,
            validity_radius: 0.03,
        }
    }

    #[test]
    fn planner_examples() {
        let z = Vector3::zeros();
        let p = motion_state_plan(&z, &z, &Vector3::new(20.0, 0.0, 0.0), 0.5, 5.0);
        assert_eq!((p.v_d, p.gamma_d, p.chi_d), (20.0, 0.0, 0.0));
        let p = motion_state_plan(&z, &z, &Vector3::new(0.0, 20.0, 0.0), 0.5, 5.0);
        assert!((p.chi_d - PI / 2.0).abs() < 1e-15);
        let p = motion_state_plan(&z, &z, &Vector3::new(10.0, 0.0, -10.0), 0.5, 5.0);
        assert!((p.v_d - 14.1421356).abs() < 1e-6);
        assert!((p.gamma_d - PI / 4.0).abs() < 1e-15 && p.chi_d == 0.0);
        let p = motion_state_plan(&z, &z, &Vector3::new(1.0, 0.0, 0.0), 0.5, 5.0);
        assert!(p.floored && p.v_d == 5.0);
    }

    #[test]
    fn airspeed_aux_examples() {
        assert_eq!(airspeed_aux(2.0, 0.0, 0.0, 0.0, 0.5, 2.0, 1.0).unwrap(), -1.25);
        assert_eq!(airspeed_aux(5.0, 5.0, 0.0, 0.0, -2.0 * 0.3, 2.0, 1.0).unwrap(), 0.3);
        assert!(airspeed_aux(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn fuel_flow_example() {
        let l = LinearEngineModel { a_n: -0.5, b_n: 2.0, ..lin() };
        assert!((fuel_flow_law(0.1, 0.0, 0.0, 0.0, &l, 1.0) + 0.025).abs() < 1e-15);
    }

    #[test]
    fn coordinated_turn_examples() {
        assert_eq!(coordinated_turn(30.0, 0.0, 9.81), 0.0);
        assert!((coordinated_turn(9.81, 1.0, 9.81) - PI / 4.0).abs() < 1e-15);
        assert_eq!(coordinated_turn(30.0, -0.2, 9.81), -coordinated_turn(30.0, 0.2, 9.81));
    }

    #[test]
    fn rotor_reference_fixed_point() {
        let l = lin();
        let dt_d = 0.05;
        let mut x = 0.0;
        for _ in 0..20_000 {
            x = rotor_ref_step(x, dt_d, 0.0, 0.0, &l, 1e-3).0;
        }
        let expect = dt_d / (l.c_n - l.a_n * l.d_n / l.b_n);
        assert!((x - expect).abs() < 1e-10 * expect.abs());
    }

    #[test]
    fn gains_validation_names_field() {
        let g = ControllerGains { k_p: -1.0, ..Default::default() };
        let e = g.validate().unwrap_err().to_string();
        assert!(e.contains("gains.k_p"), "{e}");
    }
}
