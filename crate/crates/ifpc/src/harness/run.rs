//! Closed-loop simulation: airframe, engine, observers and controller on
//! one uniform grid.
//!
//! Plant, engine spool and observers form one augmented state integrated by
//! RK4. The controller is evaluated once per step and its surface and fuel
//! commands are held over the step.

use nalgebra::Vector3;
use serde::Serialize;

use crate::airframe::{
    self, AffineInputs, AirframeTrim, ControlSurfaces, DisturbanceVector, UavState,
};
use crate::environment::ambient_conditions;
use crate::error::{Error, Result};
use crate::estimation::{self, ChannelSignals, ObserverBank, ThrustEstimateMode};
use crate::guidance::{CommandSet, Compensation, Controller, ControllerInputs, DesiredTrajectory};
use crate::harness::config::{Scenario, ScenarioConfig};
use crate::harness::disturbance::{DisturbanceRealisation, DisturbanceSample};
use crate::harness::log::{compute_metrics, FaultRecord, RunLog, RunMetrics, COLUMNS};
use crate::harness::trajectory::SegmentTrajectory;
use crate::simkit::{self, wrap_angle_diff};
use crate::turbojet::{
    self, maps::CharacteristicMaps, BalanceWarmStart, EngineStations, EngineTrim, FlightCondition,
    LinearEngineModel, TrimTarget,
};

const N_IDX: usize = 12;
const BANK: usize = 13;
const SURR: usize = BANK + ObserverBank::PACKED_LEN;
const STATE_LEN: usize = SURR + 1;

/// Trimmed start shared by every variant of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub airframe: AirframeTrim,
    pub engine: EngineTrim,
    pub linear: LinearEngineModel,
    pub state: UavState,
}

/// Wings-level airframe trim and the engine equilibrium delivering its thrust.
pub fn trim_scenario(scn: &Scenario) -> Result<(AirframeTrim, EngineTrim, UavState)> {
    let cfg = &scn.config;
    let ic = &cfg.initial;
    let z = -ic.altitude;
    let af = airframe::trim_wings_level(ic.v, 0.0, z, &cfg.airframe, &cfg.atmosphere)?;
    let flight = FlightCondition {
        v: ic.v,
        ambient: ambient_conditions(z, &cfg.atmosphere)?,
    };
    let eng = turbojet::trim_engine(TrimTarget::Thrust(af.thrust), &flight, &cfg.engine, &scn.maps)?;
    let state = UavState {
        x: ic.north,
        y: ic.east,
        z,
        v: ic.v,
        chi: ic.heading,
        alpha: af.alpha,
        ..Default::default()
    };
    Ok((af, eng, state))
}

pub fn operating_point(scn: &Scenario) -> Result<OperatingPoint> {
    let (af, eng, state) = trim_scenario(scn)?;
    let cfg = &scn.config;
    let flight = FlightCondition {
        v: state.v,
        ambient: ambient_conditions(state.z, &cfg.atmosphere)?,
    };
    let linear = turbojet::linearize(eng.n0, eng.w_f0, &flight, &cfg.engine, &scn.maps)?;
    if !(linear.reference_pole() < 0.0) {
        return Err(Error::Assumption(format!(
            "rotor reference generator pole {} is not negative",
            linear.reference_pole()
        )));
    }
    Ok(OperatingPoint {
        airframe: af,
        engine: eng,
        linear,
        state,
    })
}

/// Everything a run needs beyond the configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub op: OperatingPoint,
    pub trajectory: SegmentTrajectory,
    pub disturbances: DisturbanceRealisation,
}

pub fn prepare(scn: &Scenario) -> Result<Prepared> {
    let cfg = &scn.config;
    let op = operating_point(scn)?;
    let s = &op.state;
    let trajectory = SegmentTrajectory::new(
        &cfg.trajectory,
        s.position(),
        s.chi,
        s.v,
        cfg.integrator.duration,
    )?;
    Ok(Prepared {
        op,
        trajectory,
        disturbances: DisturbanceRealisation::new(&cfg.disturbances, cfg.seed),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub compensation: Compensation,
    /// With the controller off, surfaces and fuel stay at their trim values.
    pub controller_enabled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: RunLog,
    pub metrics: RunMetrics,
}

/// Runs the scenario as configured.
pub fn run_closed_loop(scn: &Scenario) -> Result<RunOutput> {
    let prep = prepare(scn)?;
    Ok(run_prepared(
        scn,
        &prep,
        RunOptions {
            compensation: scn.config.compensation,
            controller_enabled: true,
        },
    ))
}

/// Values captured at the start of a step for logging.
struct StageRecord {
    stations: EngineStations,
    thrust: f64,
    n_dot: f64,
    dist: DisturbanceSample,
}

struct Plant<'a> {
    cfg: &'a ScenarioConfig,
    maps: &'a CharacteristicMaps,
    lin: &'a LinearEngineModel,
    dist: &'a DisturbanceRealisation,
    warm: BalanceWarmStart,
    delta: ControlSurfaces,
    w_f: f64,
    dwf: f64,
    alpha_dot_prev: f64,
    d_hat_dt: f64,
}

impl Plant<'_> {
    fn deriv(&mut self, t: f64, x: &[f64], out: &mut [f64]) -> Result<StageRecord> {
        let cfg = self.cfg;
        let lin = self.lin;
        let s = UavState::from_slice(&x[..12]);
        let n = x[N_IDX];
        if !(n > 0.0) {
            return Err(Error::Envelope {
                guard: "rotor speed nonpositive",
                value: n,
            });
        }
        let flight = FlightCondition {
            v: s.v,
            ambient: ambient_conditions(s.z, &cfg.atmosphere)?,
        };
        let st = turbojet::engine_balance(n, self.w_f, &flight, &cfg.engine, self.maps, &mut self.warm)?;
        let n_dot = turbojet::rotor_derivative(n, &st, &cfg.engine);
        let dist = self.dist.sample(t);
        let thrust = st.thrust * (1.0 - dist.thrust_loss);

        let af = &cfg.airframe;
        let atmo = &cfg.atmosphere;
        let plant = airframe::uav_derivatives(&s, thrust, &self.delta, &dist.airframe, af, atmo, self.alpha_dot_prev)?;
        out[..12].copy_from_slice(&plant.to_array());
        out[N_IDX] = n_dot;

        let dn = n / lin.n0 - 1.0;
        let dt_lin = lin.c_n * dn + lin.d_n * self.dwf;
        let t_lin = lin.t0 * (1.0 + dt_lin);
        let t_est = lin.t0 * (1.0 + dt_lin + self.d_hat_dt);
        let zero = DisturbanceVector::default();
        let known = airframe::uav_derivatives(&s, t_est, &self.delta, &zero, af, atmo, self.alpha_dot_prev)?;
        let v_known = match cfg.thrust_estimate {
            ThrustEstimateMode::Lumped => {
                known.v - (t_est - t_lin) * s.alpha.cos() * s.beta.cos() / af.m
            }
            ThrustEstimateMode::Truth => known.v,
        };

        let measured = ChannelSignals {
            position: [s.x, s.y, s.z],
            airspeed: s.v,
            direction: [s.gamma, s.chi],
            euler: [s.alpha, s.beta, s.mu],
            rates: [s.p, s.q, s.r],
            rotor: dn,
            thrust: x[SURR],
        };
        let known = ChannelSignals {
            position: [known.x, known.y, known.z],
            airspeed: v_known,
            direction: [known.gamma, known.chi],
            euler: [known.alpha, known.beta, known.mu],
            rates: [known.p, known.q, known.r],
            rotor: lin.a_n * dn + lin.b_n * self.dwf,
            thrust: dt_lin,
        };
        ObserverBank::rates(&cfg.observers, &x[BANK..SURR], &measured, &known, &mut out[BANK..SURR]);
        out[SURR] = thrust / lin.t0 - 1.0;

        Ok(StageRecord {
            stations: st,
            thrust,
            n_dot,
            dist,
        })
    }
}

/// Runs one variant from a prepared operating point. Runtime faults end the
/// run early and are recorded in the log.
pub fn run_prepared(scn: &Scenario, prep: &Prepared, opts: RunOptions) -> RunOutput {
    let mut log = RunLog::default();
    if let Err(e) = simulate(scn, prep, opts, &mut log) {
        let time = log.rows.last().map_or(0.0, |r| r[0]);
        let time = match e {
            Error::IntegrationFault { time } => time,
            _ => time,
        };
        log.fault = Some(FaultRecord {
            time,
            message: e.to_string(),
        });
    }
    let metrics = compute_metrics(&log);
    RunOutput { log, metrics }
}

fn simulate(scn: &Scenario, prep: &Prepared, opts: RunOptions, log: &mut RunLog) -> Result<()> {
    let cfg = &scn.config;
    let op = &prep.op;
    let lin = &op.linear;
    let dt = cfg.integrator.dt;
    let steps = cfg.integrator.steps();
    let stride = cfg.output.stride(dt);
    let af = &cfg.airframe;

    let s0 = op.state;
    let initial = ChannelSignals {
        position: [s0.x, s0.y, s0.z],
        airspeed: s0.v,
        direction: [s0.gamma, s0.chi],
        euler: [s0.alpha, s0.beta, s0.mu],
        rates: [s0.p, s0.q, s0.r],
        rotor: 0.0,
        thrust: 0.0,
    };
    let mut bank = ObserverBank::new(&initial, cfg.observers, cfg.thrust_estimate)?;
    let mut x = Vec::with_capacity(STATE_LEN);
    x.extend(s0.to_array());
    x.push(op.engine.n0);
    x.extend(bank.packed());
    x.push(0.0);

    let mut ctrl = Controller::new(cfg.gains, cfg.filters, opts.compensation, *lin);
    ctrl.mu_d_override = cfg.mu_d_override;
    let trim_delta = ControlSurfaces {
        delta_e: op.airframe.delta_e,
        ..Default::default()
    };
    let mut plant = Plant {
        cfg,
        maps: &scn.maps,
        lin,
        dist: &prep.disturbances,
        warm: BalanceWarmStart::cold(),
        delta: trim_delta,
        w_f: op.engine.w_f0,
        dwf: 0.0,
        alpha_dot_prev: 0.0,
        d_hat_dt: 0.0,
    };
    let mut scratch = vec![0.0; STATE_LEN];

    for k in 0..=steps {
        let t = k as f64 * dt;
        let s = UavState::from_slice(&x[..12]);
        bank.set_packed(&x[BANK..SURR])?;
        let d_hat = bank.disturbance_estimates();
        let dn = x[N_IDX] / lin.n0 - 1.0;

        let g_v = lin.t0 * s.alpha.cos() * s.beta.cos() / af.m;
        let est = estimation::thrust_channel_estimates(lin, dn, plant.dwf, &d_hat, cfg.thrust_estimate, g_v)?;
        let d_hat_dt = if opts.compensation.thrust { est.d_hat_dt } else { 0.0 };
        let traj = prep.trajectory.sample(t);

        let cmd = if opts.controller_enabled {
            let q_bar = airframe::state_dynamic_pressure(&s, &cfg.atmosphere)?;
            let inputs = AffineInputs {
                thrust: lin.t0 * (1.0 + lin.c_n * dn + lin.d_n * plant.dwf + d_hat_dt),
                t0: lin.t0,
                alpha_dot_coeff: plant.alpha_dot_prev,
                alpha_dot_kin: plant.alpha_dot_prev,
                delta_prev: plant.delta,
            };
            let terms = airframe::affine_terms(&s, q_bar, &inputs, af)?;
            ctrl.step(
                &ControllerInputs {
                    state: &s,
                    trajectory: traj,
                    terms: &terms,
                    d_hat: &d_hat,
                    thrust: est,
                    dn,
                    g: af.g,
                    delta_limit: af.delta_limit,
                    w_f_limits: (cfg.engine.w_f_min, cfg.engine.w_f_max),
                },
                dt,
            )?
        } else {
            CommandSet {
                delta: trim_delta,
                w_f: op.engine.w_f0,
                ..Default::default()
            }
        };

        plant.delta = cmd.delta;
        plant.w_f = cmd.w_f;
        plant.dwf = cmd.w_f / lin.w_f0 - 1.0;
        plant.d_hat_dt = d_hat_dt;

        if k % stride == 0 {
            let rec = plant.deriv(t, &x, &mut scratch)?;
            let ctx = RowContext {
                t,
                s: &s,
                traj_p: traj.p,
                traj_v: traj.p_dot,
                cmd: &cmd,
                lin,
                dn,
                dwf: plant.dwf,
                d_hat: &d_hat,
                d_hat_dt_used: d_hat_dt,
                d_hat_dt_est: est.d_hat_dt,
                rec: &rec,
                outside_validity: est.outside_validity,
            };
            log.rows.push(ctx.row());
        }
        if k == steps {
            break;
        }

        let next = simkit::rk4_step(
            |tt, xx, out| plant.deriv(tt, xx, out).map(|_| ()),
            t,
            &x,
            dt,
        )?;
        plant.alpha_dot_prev = (next[6] - x[6]) / dt;
        x = next;
    }
    Ok(())
}

struct RowContext<'a> {
    t: f64,
    s: &'a UavState,
    traj_p: Vector3<f64>,
    traj_v: Vector3<f64>,
    cmd: &'a CommandSet,
    lin: &'a LinearEngineModel,
    dn: f64,
    dwf: f64,
    d_hat: &'a ChannelSignals,
    d_hat_dt_used: f64,
    d_hat_dt_est: f64,
    rec: &'a StageRecord,
    outside_validity: bool,
}

impl RowContext<'_> {
    fn row(&self) -> Vec<f64> {
        let s = self.s;
        let c = self.cmd;
        let l = self.lin;
        let st = &self.rec.stations;
        let d = &self.rec.dist.airframe;
        let dh = self.d_hat;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let e_p = s.position() - self.traj_p;
        let t_est = l.t0 * (1.0 + l.c_n * self.dn + l.d_n * self.dwf + self.d_hat_dt_used);

        let mut r = Vec::with_capacity(COLUMNS.len());
        r.push(self.t);
        r.extend(s.to_array());
        r.extend(self.traj_p.iter());
        r.extend(self.traj_v.iter());
        r.extend(e_p.iter());
        r.extend([c.v_d, c.v_d_dot, c.gamma_d, c.chi_d, c.psi_d_dot[0], c.psi_d_dot[1]]);
        r.extend(c.big_theta_d.iter());
        r.extend(c.big_theta_d_dot.iter());
        r.extend(c.omega_d.iter());
        r.extend([s.v - c.v_d, s.gamma - c.gamma_d, wrap_angle_diff(s.chi, c.chi_d)]);
        r.extend((s.theta() - c.big_theta_d).iter());
        r.extend((s.omega() - c.omega_d).iter());
        r.extend(c.f_ad.iter());
        r.extend(c.m_d.iter());
        r.extend(c.delta.as_vector().iter());
        r.extend([c.dt_d, c.dn_d, c.dn_d_dot, c.dwf]);
        r.extend([
            st.n,
            self.dn,
            st.w_f,
            self.rec.thrust,
            t_est,
            l.t0 * (1.0 + c.dt_d),
            st.thrust,
        ]);
        r.extend([st.residual_mass, st.residual_nozzle, st.z_c, st.w_t, st.t_t4]);
        r.extend(dh.position);
        r.push(dh.airspeed);
        r.extend(dh.direction);
        r.extend(dh.euler);
        r.extend(dh.rates);
        r.extend([dh.rotor, self.d_hat_dt_est, dh.thrust]);
        r.extend([d.d_x, d.d_y, d.d_z, d.d_v, d.d_gamma, d.d_chi, d.d_alpha, d.d_beta, d.d_mu]);
        r.extend(d.d_omega);
        let true_dt = self.rec.thrust / l.t0 - 1.0;
        r.extend([
            self.rec.n_dot / l.n0 - l.a_n * self.dn - l.b_n * self.dwf,
            true_dt - l.c_n * self.dn - l.d_n * self.dwf,
            self.rec.dist.thrust_loss,
        ]);
        r.extend([
            flag(c.planner_floored),
            flag(c.surface_saturated),
            flag(c.fuel_saturated),
            flag(self.outside_validity),
        ]);
        debug_assert_eq!(r.len(), COLUMNS.len());
        r
    }
}
