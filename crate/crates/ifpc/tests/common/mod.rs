//! Oracles shared by the module tests and the acceptance target.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use ifpc::airframe::{
    self, AffineInputs, AirframeParams, ControlSurfaces, DisturbanceVector, UavState,
};
use ifpc::environment::{ambient_conditions, AtmosphereParams};
use ifpc::estimation::{
    check_hurwitz, BankGains, Channel, ChannelSignals, ObserverBank, ObserverGains, ObserverState,
    ThrustEstimateMode,
};
use ifpc::guidance::{self, extract_motion_state, FilterSettings};
use ifpc::harness::{load_scenario, Scenario};
use ifpc::simkit::{self, CommandFilterState};
use ifpc::turbojet::{
    self, maps::CharacteristicMaps, BalanceWarmStart, EngineParams, FlightCondition, LinearEngineModel,
    NormalisedEngine, TrimTarget,
};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn shipped_path() -> PathBuf {
    scenario_dir().join("example_climb_turn.toml")
}

pub fn shipped() -> Scenario {
    load_scenario(&shipped_path()).expect("shipped scenario loads")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a − b| / max(|b|, 1)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

// ---------------------------------------------------------------- observers

fn signals_from(flat: &[f64]) -> ChannelSignals {
    let mut out = ChannelSignals::default();
    let mut k = 0;
    for c in Channel::ALL {
        for v in out.get_mut(c) {
            *v = flat[k];
            k += 1;
        }
    }
    out
}

pub const BANK_DIM: usize = 14;

#[derive(Debug, Clone)]
pub struct ChannelDecay {
    pub channel: &'static str,
    /// `‖e(T)‖ / ‖e(0)‖` at `T = 10/|λ|max`.
    pub ratio: f64,
    pub window: f64,
    /// Fitted decay rate over the second half of the window.
    pub fitted_rate: f64,
    pub analytic_rate: f64,
}

/// Whole bank against plants `ṡ = known(t) + d` with constant `d`,
/// integrated jointly by RK4. The bank starts at `ŝ = s + state_offset·(…)`
/// and `d̂ = 0`; a zero offset is the construction convention.
pub fn observer_decay(gains: &BankGains, state_offset: f64, dt: f64) -> Vec<ChannelDecay> {
    let d: Vec<f64> = (0..BANK_DIM).map(|i| 0.5 - 0.13 * i as f64).collect();
    let known = |t: f64| -> Vec<f64> { (0..BANK_DIM).map(|i| (t + i as f64).cos()).collect() };
    let s0: Vec<f64> = (0..BANK_DIM).map(|i| 1.0 + 0.1 * i as f64).collect();
    let s_hat0: Vec<f64> = s0.iter().enumerate().map(|(i, v)| v + state_offset * (1.0 - 0.1 * i as f64)).collect();
    let bank = ObserverBank::new(&signals_from(&s_hat0), *gains, ThrustEstimateMode::Lumped).unwrap();

    let window = Channel::ALL
        .iter()
        .map(|&c| {
            let g = gains.get(c);
            10.0 / check_hurwitz(g.k_o1, g.k_o2, 1.0).fastest_magnitude()
        })
        .fold(0.0, f64::max);

    let mut x: Vec<f64> = s0.iter().chain(bank.packed()).copied().collect();
    let steps = (window / dt).round() as usize;
    let mut history: Vec<(f64, Vec<f64>)> = vec![(0.0, x.clone())];
    for k in 0..steps {
        let t = k as f64 * dt;
        x = simkit::rk4_step(
            |t, x, dx| {
                let kn = known(t);
                for i in 0..BANK_DIM {
                    dx[i] = kn[i] + d[i];
                }
                ObserverBank::rates(gains, &x[BANK_DIM..], &signals_from(&x[..BANK_DIM]), &signals_from(&kn), &mut dx[BANK_DIM..]);
                Ok(())
            },
            t,
            &x,
            dt,
        )
        .unwrap();
        history.push(((k + 1) as f64 * dt, x.clone()));
    }

    let mut out = Vec::new();
    let mut flat = 0;
    let mut packed = BANK_DIM;
    for c in Channel::ALL {
        let n = c.dim();
        let g = gains.get(c);
        let h = check_hurwitz(g.k_o1, g.k_o2, 1.0);
        let t_c = 10.0 / h.fastest_magnitude();
        let norm_at = |x: &[f64]| -> f64 {
            (0..n)
                .map(|i| {
                    let es = x[flat + i] - x[packed + i];
                    let ed = d[flat + i] - x[packed + n + i];
                    es * es + ed * ed
                })
                .sum::<f64>()
                .sqrt()
        };
        let at = |t: f64| -> f64 {
            let k = ((t / dt).round() as usize).min(history.len() - 1);
            norm_at(&history[k].1)
        };
        let e0 = at(0.0);
        let e_end = at(t_c);
        let e_half = at(0.5 * t_c);
        out.push(ChannelDecay {
            channel: c.name(),
            ratio: e_end / e0,
            window: t_c,
            fitted_rate: (e_half / e_end).ln() / (0.5 * t_c),
            analytic_rate: h.slowest_rate(),
        });
        flat += n;
        packed += 2 * n;
    }
    out
}

pub fn criterion_observers() -> Outcome {
    let decays = observer_decay(&BankGains::default(), 0.0, 1e-4);
    let mut pass = true;
    let mut worst_ratio: f64 = 0.0;
    let mut rate_span = (f64::INFINITY, 0.0f64);
    for d in &decays {
        let rate_ok = d.fitted_rate >= 0.5 * d.analytic_rate && d.fitted_rate <= 2.0 * d.analytic_rate;
        pass &= d.ratio < 1e-3 && rate_ok;
        worst_ratio = worst_ratio.max(d.ratio);
        let r = d.fitted_rate / d.analytic_rate;
        rate_span = (rate_span.0.min(r), rate_span.1.max(r));
    }
    // Informational: an initial state-estimate offset excites the
    // non-normal transient of the repeated eigenvalue.
    let offset = observer_decay(&BankGains::default(), 0.2, 1e-4)
        .iter()
        .map(|d| d.ratio)
        .fold(0.0, f64::max);
    Outcome::new(
        pass,
        format!(
            "{} channels from s_hat = s, d_hat = 0: worst |e(T)|/|e(0)| = {worst_ratio:.2e} (< 1e-3), fitted/analytic rate in [{:.3}, {:.3}] (within [0.5, 2]); with a 0.2 state offset the ratio is {offset:.2e}",
            decays.len(),
            rate_span.0,
            rate_span.1
        ),
    )
}

/// Single-channel observer step under ZOH for the property tests.
pub fn zoh_channel_error(gains: ObserverGains, d: f64, steps: usize, dt: f64) -> f64 {
    let mut obs = ObserverState::new(&[0.0], gains, 1.0).unwrap();
    let mut s = 0.0;
    for _ in 0..steps {
        obs = ifpc::estimation::observer_step(&obs, &[s], &[0.0], dt).unwrap();
        s += d * dt;
    }
    (obs.d_hat[0] - d).abs()
}

// ---------------------------------------------------------- decomposition

pub fn random_state(r: &mut ChaCha8Rng) -> UavState {
    UavState {
        x: r.random_range(-500.0..500.0),
        y: r.random_range(-500.0..500.0),
        z: -r.random_range(0.0..3000.0),
        v: r.random_range(15.0..60.0),
        gamma: r.random_range(-0.5..0.5),
        chi: r.random_range(-PI..PI),
        alpha: r.random_range(-0.2..0.3),
        beta: r.random_range(-0.3..0.3),
        mu: r.random_range(-1.0..1.0),
        p: r.random_range(-1.0..1.0),
        q: r.random_range(-1.0..1.0),
        r: r.random_range(-1.0..1.0),
    }
}

/// Largest relative mismatch per channel `[p, V, ψ, Θ, ω]` between the
/// affine reconstruction and the full derivative.
pub fn decomposition_mismatch(count: usize, seed: u64) -> [f64; 5] {
    let params = AirframeParams::small_uav();
    let atmo = AtmosphereParams::default();
    let mut r = rng(seed);
    let mut worst = [0.0f64; 5];
    for _ in 0..count {
        let s = random_state(&mut r);
        let t0 = r.random_range(8.0..20.0);
        let thrust = t0 * r.random_range(0.7..1.3);
        let delta = ControlSurfaces {
            delta_e: r.random_range(-0.3..0.3),
            delta_a: r.random_range(-0.3..0.3),
            delta_r: r.random_range(-0.3..0.3),
        };
        let alpha_dot_prev = r.random_range(-1.0..1.0);
        let full = airframe::uav_derivatives(&s, thrust, &delta, &DisturbanceVector::default(), &params, &atmo, alpha_dot_prev)
            .unwrap();
        let q_bar = airframe::state_dynamic_pressure(&s, &atmo).unwrap();
        let mut inp = AffineInputs {
            thrust,
            t0,
            alpha_dot_coeff: alpha_dot_prev,
            alpha_dot_kin: 0.0,
            delta_prev: delta,
        };
        // α̇ from the first kinematic row, then fed to the μ row.
        let a0 = airframe::affine_terms(&s, q_bar, &inp, &params).unwrap();
        inp.alpha_dot_kin = (a0.f_theta + a0.g_theta * s.omega())[0];
        let a = airframe::affine_terms(&s, q_bar, &inp, &params).unwrap();

        let p_dot = a.f_p;
        let v_dot = a.f_v + a.g_v * (thrust - t0) / t0;
        let f_a = a.f_a(s.alpha, s.beta);
        let psi_dot = a.psi_dot(&f_a);
        let theta_dot = a.f_theta + a.g_theta * s.omega();
        let omega_dot = a.f_omega + a.g_omega * a.moment(&delta);

        let upd = |w: &mut f64, rec: &[f64], reference: &[f64]| {
            for (x, y) in rec.iter().zip(reference) {
                *w = w.max(rel_err(*x, *y));
            }
        };
        upd(&mut worst[0], p_dot.as_slice(), &[full.x, full.y, full.z]);
        upd(&mut worst[1], &[v_dot], &[full.v]);
        upd(&mut worst[2], psi_dot.as_slice(), &[full.gamma, full.chi]);
        upd(&mut worst[3], theta_dot.as_slice(), &[full.alpha, full.beta, full.mu]);
        upd(&mut worst[4], omega_dot.as_slice(), &[full.p, full.q, full.r]);
    }
    worst
}

pub fn criterion_decomposition() -> Outcome {
    let w = decomposition_mismatch(1000, 7);
    let max = w.iter().copied().fold(0.0, f64::max);
    Outcome::new(
        max < 1e-9,
        format!("1000 states, max relative mismatch p {:.1e}, V {:.1e}, psi {:.1e}, Theta {:.1e}, omega {:.1e} (< 1e-9)", w[0], w[1], w[2], w[3], w[4]),
    )
}

// ----------------------------------------------------------------- engine

pub struct EngineSetup {
    pub params: EngineParams,
    pub maps: CharacteristicMaps,
    pub flight: FlightCondition,
}

pub fn engine_setup() -> EngineSetup {
    let scn = shipped();
    let ic = &scn.config.initial;
    let flight = FlightCondition {
        v: ic.v,
        ambient: ambient_conditions(-ic.altitude, &scn.config.atmosphere).unwrap(),
    };
    EngineSetup {
        params: scn.config.engine.clone(),
        maps: scn.maps,
        flight,
    }
}

/// `(n, W_f)` pairs spread over the spool range, equilibrium fuel scaled off-design.
pub fn balance_points(e: &EngineSetup) -> Vec<(f64, f64)> {
    [(0.42, 1.0), (0.5, 1.04), (0.6, 0.96), (0.75, 1.0), (0.9, 1.02)]
        .iter()
        .map(|&(frac, scale)| {
            let n = frac * e.params.n_d;
            let trim = turbojet::trim_engine(TrimTarget::Speed(n), &e.flight, &e.params, &e.maps)
                .unwrap_or_else(|err| panic!("trim at n = {n}: {err}"));
            (n, trim.w_f0 * scale)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct GridMatch {
    pub newton: (f64, f64),
    pub grid: (f64, f64),
    pub newton_residual: f64,
    pub grid_residual: f64,
}

impl GridMatch {
    /// Offset in grid cells, per axis.
    pub fn cells(&self, cells: usize) -> (f64, f64) {
        let h = 1.0 / cells as f64;
        ((self.newton.0 - self.grid.0).abs() / h, (self.newton.1 - self.grid.1).abs() / h)
    }
}

/// Exhaustive search of `max |residual|` over a `(cells+1)²` lattice on `[0, 1]²`.
pub fn grid_search(e: &EngineSetup, n: f64, w_f: f64, cells: usize) -> ((f64, f64), f64) {
    let mut best = ((f64::NAN, f64::NAN), f64::INFINITY);
    for i in 0..=cells {
        let z = i as f64 / cells as f64;
        for j in 0..=cells {
            let w = j as f64 / cells as f64;
            if let Ok(st) = turbojet::engine_stations(n, w_f, z, w, &e.flight, &e.params, &e.maps) {
                let r = st.max_residual();
                if r < best.1 {
                    best = ((z, w), r);
                }
            }
        }
    }
    best
}

pub fn balance_vs_grid(e: &EngineSetup, n: f64, w_f: f64, cells: usize) -> GridMatch {
    let mut warm = BalanceWarmStart::cold();
    let st = turbojet::engine_balance(n, w_f, &e.flight, &e.params, &e.maps, &mut warm).unwrap();
    let (grid, grid_residual) = grid_search(e, n, w_f, cells);
    GridMatch {
        newton: (st.z_c, st.w_t),
        grid,
        newton_residual: st.max_residual(),
        grid_residual,
    }
}

/// Fraction of accepted cold solves and their worst residual over random inputs.
pub fn random_balance_residuals(e: &EngineSetup, count: usize, seed: u64) -> (usize, f64) {
    let mut r = rng(seed);
    let mut accepted = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let n = r.random_range(0.35..1.0) * e.params.n_d;
        let w_f = r.random_range(e.params.w_f_min..e.params.w_f_max);
        let mut warm = BalanceWarmStart::cold();
        if let Ok(st) = turbojet::engine_balance(n, w_f, &e.flight, &e.params, &e.maps, &mut warm) {
            accepted += 1;
            worst = worst.max(st.max_residual());
        }
    }
    (accepted, worst)
}

pub fn criterion_balance() -> Outcome {
    let e = engine_setup();
    let points = balance_points(&e);
    let matches: Vec<GridMatch> = std::thread::scope(|sc| {
        let handles: Vec<_> = points
            .iter()
            .map(|&(n, w_f)| {
                let e = &e;
                sc.spawn(move || balance_vs_grid(e, n, w_f, 2000))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let (accepted, worst_random) = random_balance_residuals(&e, 200, 11);
    let worst_cells = matches
        .iter()
        .map(|m| {
            let (a, b) = m.cells(2000);
            a.max(b)
        })
        .fold(0.0, f64::max);
    let worst_newton = matches.iter().map(|m| m.newton_residual).fold(0.0, f64::max).max(worst_random);
    Outcome::new(
        worst_cells <= 1.0 + 1e-9 && worst_newton < 1e-8 && accepted > 0,
        format!(
            "5 points, Newton vs 2001^2 grid offset <= {worst_cells:.3} cells (<= 1); worst accepted residual {worst_newton:.1e} over {} solves (< 1e-8)",
            accepted + matches.len()
        ),
    )
}

pub struct LinearCheck {
    pub lin: LinearEngineModel,
    /// Worst `|lin − nl| / max(|nl|, Σ|linear terms|)` over all probes.
    pub worst_dn_dot: f64,
    pub worst_dt: f64,
    /// Worst plain `|lin − nl| / |nl|` over the on-axis probes.
    pub worst_axis: f64,
    pub probes: usize,
}

/// Prediction error of the linear model on rings at `r/2` and `r/4`,
/// 16 directions each.
///
/// Off-axis, `ΔT` or `Δṅ` passes through zero where the two linear terms
/// cancel, so the error is taken relative to the larger of the nonlinear
/// response and the summed magnitude of the linear terms.
pub fn linear_prediction_check(e: &EngineSetup, n0: f64, w_f0: f64) -> LinearCheck {
    let lin = turbojet::linearize(n0, w_f0, &e.flight, &e.params, &e.maps).unwrap();
    let eng = NormalisedEngine {
        n0,
        w_f0,
        t0: lin.t0,
        flight: e.flight,
        params: &e.params,
        maps: &e.maps,
    };
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut probes = 0;
    for scale in [0.5, 0.25] {
        let m = scale * lin.validity_radius * (1.0 - 1e-9);
        for k in 0..16 {
            let th = 2.0 * PI * k as f64 / 16.0;
            let (dn, dwf) = if k % 4 == 0 {
                // Exact axis points.
                [(m, 0.0), (0.0, m), (-m, 0.0), (0.0, -m)][k / 4]
            } else {
                (m * th.cos(), m * th.sin())
            };
            let (nd, dt) = eng.eval(dn, dwf).unwrap();
            let terms_nd = [lin.a_n * dn, lin.b_n * dwf];
            let terms_dt = [lin.c_n * dn, lin.d_n * dwf];
            let err = |terms: [f64; 2], nl: f64| {
                let scale = nl.abs().max(terms[0].abs() + terms[1].abs());
                ((terms[0] + terms[1] - nl).abs() / scale, (terms[0] + terms[1] - nl).abs() / nl.abs())
            };
            let (e_nd, r_nd) = err(terms_nd, nd);
            let (e_dt, r_dt) = err(terms_dt, dt);
            worst.0 = worst.0.max(e_nd);
            worst.1 = worst.1.max(e_dt);
            if k % 4 == 0 {
                worst.2 = worst.2.max(r_nd).max(r_dt);
            }
            probes += 1;
        }
    }
    LinearCheck {
        lin,
        worst_dn_dot: worst.0,
        worst_dt: worst.1,
        worst_axis: worst.2,
        probes,
    }
}

pub fn criterion_linearization() -> Outcome {
    let scn = shipped();
    let e = engine_setup();
    let (_, trim, _) = ifpc::harness::run::trim_scenario(&scn).unwrap();
    let c = linear_prediction_check(&e, trim.n0, trim.w_f0);
    Outcome::new(
        c.lin.a_n < 0.0
            && c.lin.validity_radius > 0.0
            && c.worst_dn_dot < 0.05
            && c.worst_dt < 0.05
            && c.worst_axis < 0.05,
        format!(
            "a_n = {:.4} (< 0), radius {:.4}, {} probes inside r/2: worst error dn_dot {:.2}%, dT {:.2}%, on-axis relative {:.2}% (< 5%)",
            c.lin.a_n,
            c.lin.validity_radius,
            c.probes,
            100.0 * c.worst_dn_dot,
            100.0 * c.worst_dt,
            100.0 * c.worst_axis
        ),
    )
}

// ------------------------------------------------------------- subsystems

#[derive(Debug, Clone, Copy)]
pub struct DirectionResult {
    pub gains: (f64, f64, f64),
    pub e_psi: f64,
    pub e_theta: f64,
    pub e_omega: f64,
}

/// Flight-direction cascade on the full rotational dynamics with airspeed
/// and position frozen, constant disturbances, and disturbance observers
/// on ψ, Θ and ω.
pub fn direction_subsystem(k_psi: f64, k_theta: f64, k_omega: f64, duration: f64) -> DirectionResult {
    let params = AirframeParams::small_uav();
    let atmo = AtmosphereParams::default();
    let v0 = 35.0;
    let z = -100.0;
    let trim = airframe::trim_wings_level(v0, 0.0, z, &params, &atmo).unwrap();
    let dist = DisturbanceVector {
        d_gamma: 0.005,
        d_chi: -0.005,
        d_alpha: 0.01,
        d_beta: -0.01,
        d_mu: 0.01,
        d_omega: [0.05, -0.05, 0.05],
        ..Default::default()
    };
    let psi_d = Vector2::new(0.05, 0.3);
    let mu_d = 0.0;
    let filters = FilterSettings {
        attitude: 4.0 * k_theta.max(5.0),
        rate: 4.0 * k_omega.max(10.0),
        ..FilterSettings::default()
    };
    let dt = 1e-3;
    let gains = ObserverGains::default();

    let mut s = UavState {
        z,
        v: v0,
        alpha: trim.alpha,
        ..Default::default()
    };
    let mut delta = ControlSurfaces {
        delta_e: trim.delta_e,
        ..Default::default()
    };
    let mut obs_psi = ObserverState::new(&[s.gamma, s.chi], gains, 1.0).unwrap();
    let mut obs_theta = ObserverState::new(&[s.alpha, s.beta, s.mu], gains, 1.0).unwrap();
    let mut obs_omega = ObserverState::new(&[s.p, s.q, s.r], gains, 1.0).unwrap();
    let mut theta_f: Option<[CommandFilterState; 3]> = None;
    let mut omega_f: Option<[CommandFilterState; 3]> = None;
    let mut alpha_dot_prev = 0.0;
    let mut last = DirectionResult {
        gains: (k_psi, k_theta, k_omega),
        e_psi: f64::NAN,
        e_theta: f64::NAN,
        e_omega: f64::NAN,
    };
    let steps = (duration / dt).round() as usize;
    for _ in 0..steps {
        let q_bar = airframe::state_dynamic_pressure(&s, &atmo).unwrap();
        let zero = DisturbanceVector::default();
        let known = airframe::uav_derivatives(&s, trim.thrust, &delta, &zero, &params, &atmo, alpha_dot_prev).unwrap();
        let inp = AffineInputs {
            thrust: trim.thrust,
            t0: trim.thrust,
            alpha_dot_coeff: alpha_dot_prev,
            alpha_dot_kin: known.alpha,
            delta_prev: delta,
        };
        let terms = airframe::affine_terms(&s, q_bar, &inp, &params).unwrap();

        let d_psi = Vector2::from_column_slice(&obs_psi.d_hat);
        let d_theta = Vector3::from_column_slice(&obs_theta.d_hat);
        let d_omega = Vector3::from_column_slice(&obs_omega.d_hat);
        let (_, ab_d) = guidance::flight_direction_step1(&s.psi(), &psi_d, &Vector2::zeros(), &d_psi, &terms, k_psi).unwrap();
        let big_theta_d = Vector3::new(ab_d[0], ab_d[1], mu_d);
        let tf = theta_f.get_or_insert_with(|| {
            [0, 1, 2].map(|i| CommandFilterState::new(big_theta_d[i], filters.attitude, filters.damping))
        });
        for i in 0..3 {
            tf[i] = simkit::command_filter_step(tf[i], big_theta_d[i], dt);
        }
        let theta_d_dot = Vector3::new(tf[0].rate, tf[1].rate, tf[2].rate);
        let omega_d = guidance::attitude_step2(&s.theta(), &big_theta_d, &theta_d_dot, &d_theta, &terms, k_theta).unwrap();
        let of = omega_f.get_or_insert_with(|| {
            [0, 1, 2].map(|i| CommandFilterState::new(omega_d[i], filters.rate, filters.damping))
        });
        for i in 0..3 {
            of[i] = simkit::command_filter_step(of[i], omega_d[i], dt);
        }
        let omega_d_dot = Vector3::new(of[0].rate, of[1].rate, of[2].rate);
        let cmd = guidance::rate_step3(&s.omega(), &omega_d, &omega_d_dot, &d_omega, &terms, k_omega, params.delta_limit).unwrap();

        last.e_psi = guidance::direction_error(&s.psi(), &psi_d).norm();
        last.e_theta = (s.theta() - big_theta_d).norm();
        last.e_omega = (s.omega() - omega_d).norm();

        delta = cmd.delta;
        obs_psi = ifpc::estimation::observer_step(&obs_psi, &[s.gamma, s.chi], &[known.gamma, known.chi], dt).unwrap();
        obs_theta = ifpc::estimation::observer_step(&obs_theta, &[s.alpha, s.beta, s.mu], &[known.alpha, known.beta, known.mu], dt).unwrap();
        obs_omega = ifpc::estimation::observer_step(&obs_omega, &[s.p, s.q, s.r], &[known.p, known.q, known.r], dt).unwrap();

        let x: Vec<f64> = s.to_array().to_vec();
        let ad = alpha_dot_prev;
        let next = simkit::rk4_step(
            |_, x, dx| {
                let st = UavState::from_slice(x);
                let d = airframe::uav_derivatives(&st, trim.thrust, &delta, &dist, &params, &atmo, ad)?;
                dx.copy_from_slice(&d.to_array());
                // Airspeed and position frozen.
                dx[0] = 0.0;
                dx[1] = 0.0;
                dx[2] = 0.0;
                dx[3] = 0.0;
                Ok(())
            },
            0.0,
            &x,
            dt,
        )
        .unwrap();
        let s_next = UavState::from_slice(&next);
        alpha_dot_prev = (s_next.alpha - s.alpha) / dt;
        s = s_next;
    }
    last
}

#[derive(Debug, Clone, Copy)]
pub struct AirspeedResult {
    pub gains: (f64, f64),
    pub e_v: f64,
    pub e_dn: f64,
}

/// Airspeed loop on `V̇ = f_v(V) + g_v ΔT + d_V` with the engine replaced
/// by its small-signal model plus constant rotor and thrust disturbances.
pub fn airspeed_subsystem(lin: &LinearEngineModel, k_v: f64, k_dn: f64, duration: f64) -> AirspeedResult {
    let params = AirframeParams::small_uav();
    let atmo = AtmosphereParams::default();
    let v0 = 35.0;
    let z = -100.0;
    let trim = airframe::trim_wings_level(v0, 0.0, z, &params, &atmo).unwrap();
    let frozen = UavState {
        z,
        v: v0,
        alpha: trim.alpha,
        ..Default::default()
    };
    let delta = ControlSurfaces {
        delta_e: trim.delta_e,
        ..Default::default()
    };
    let t0 = trim.thrust;
    let lin = LinearEngineModel { t0, ..*lin };
    let (d_v, d_dn, d_dt) = (0.05, 0.01, -0.03);
    let v_d = v0 + 1.0;
    let dt = 1e-3;
    let gains = ObserverGains::default();

    let terms_at = |v: f64| {
        let s = UavState { v, ..frozen };
        let q_bar = airframe::state_dynamic_pressure(&s, &atmo).unwrap();
        let inp = AffineInputs {
            thrust: t0,
            t0,
            alpha_dot_coeff: 0.0,
            alpha_dot_kin: 0.0,
            delta_prev: delta,
        };
        airframe::affine_terms(&s, q_bar, &inp, &params).unwrap()
    };

    // [V, Δn]
    let mut x = vec![v0, 0.0];
    let mut obs_v = ObserverState::new(&[v0], gains, 1.0).unwrap();
    let mut obs_n = ObserverState::new(&[0.0], gains, 1.0).unwrap();
    let mut dn_d = 0.0;
    let mut out = AirspeedResult {
        gains: (k_v, k_dn),
        e_v: f64::NAN,
        e_dn: f64::NAN,
    };
    let steps = (duration / dt).round() as usize;
    for _ in 0..steps {
        let (v, dn) = (x[0], x[1]);
        let a = terms_at(v);
        let d_hat = ChannelSignals {
            airspeed: obs_v.d_hat[0],
            rotor: obs_n.d_hat[0],
            ..Default::default()
        };
        let est = ifpc::estimation::thrust_channel_estimates(&lin, dn, 0.0, &d_hat, ThrustEstimateMode::Lumped, a.g_v).unwrap();
        let dt_d = guidance::airspeed_aux(v, v_d, 0.0, est.d_hat_v, a.f_v, a.g_v, k_v).unwrap();
        let (dn_d_next, dn_d_dot) = guidance::rotor_ref_step(dn_d, dt_d, est.d_hat_dn, est.d_hat_dt, &lin, dt);
        let dwf = guidance::fuel_flow_law(dn, dn_d, dn_d_dot, est.d_hat_dn, &lin, k_dn);

        out.e_v = v - v_d;
        out.e_dn = dn - dn_d;

        let known_v = a.f_v + a.g_v * lin.dt(dn, dwf);
        let known_n = lin.dn_dot(dn, dwf);
        obs_v = ifpc::estimation::observer_step(&obs_v, &[v], &[known_v], dt).unwrap();
        obs_n = ifpc::estimation::observer_step(&obs_n, &[dn], &[known_n], dt).unwrap();
        dn_d = dn_d_next;

        x = simkit::rk4_step(
            |_, x, dx| {
                let a = terms_at(x[0]);
                let dt_true = lin.dt(x[1], dwf) + d_dt;
                dx[0] = a.f_v + a.g_v * dt_true + d_v;
                dx[1] = lin.dn_dot(x[1], dwf) + d_dn;
                Ok(())
            },
            0.0,
            &x,
            dt,
        )
        .unwrap();
    }
    out
}

pub const SUBSYSTEM_GAINS: [f64; 3] = [2.0, 5.0, 10.0];

pub fn criterion_subsystems() -> Outcome {
    let scn = shipped();
    let op = ifpc::harness::run::operating_point(&scn).unwrap();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut runs = 0;
    let dirs: Vec<DirectionResult> = std::thread::scope(|sc| {
        let hs: Vec<_> = SUBSYSTEM_GAINS
            .iter()
            .flat_map(|&a| SUBSYSTEM_GAINS.iter().flat_map(move |&b| SUBSYSTEM_GAINS.iter().map(move |&c| (a, b, c))))
            .map(|(a, b, c)| sc.spawn(move || direction_subsystem(a, b, c, 30.0)))
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for d in &dirs {
        worst.0 = worst.0.max(d.e_psi);
        worst.1 = worst.1.max(d.e_theta);
        worst.2 = worst.2.max(d.e_omega);
        runs += 1;
    }
    for &kv in &SUBSYSTEM_GAINS {
        for &kn in &SUBSYSTEM_GAINS {
            let r = airspeed_subsystem(&op.linear, kv, kn, 30.0);
            worst.3 = worst.3.max(r.e_v.abs());
            runs += 1;
        }
    }
    let ok = |v: f64, b: f64| v.is_finite() && v < b;
    Outcome::new(
        ok(worst.0, 1e-3) && ok(worst.1, 1e-3) && ok(worst.2, 1e-3) && ok(worst.3, 0.01),
        format!(
            "{runs} gain combinations from {{2,5,10}}: worst final |e_psi| {:.1e}, |e_Theta| {:.1e}, |e_omega| {:.1e} (< 1e-3), |e_V| {:.1e} m/s (< 0.01)",
            worst.0, worst.1, worst.2, worst.3
        ),
    )
}

// --------------------------------------------------------------- numerics

/// Global error of RK4 on `ẋ = x cos t`, `x(0) = 1`, at `t = 2`.
pub fn rk4_global_error(dt: f64) -> f64 {
    let steps = (2.0 / dt).round() as usize;
    let mut x = vec![1.0];
    for k in 0..steps {
        x = simkit::rk4_step(
            |t, x, dx| {
                dx[0] = x[0] * t.cos();
                Ok(())
            },
            k as f64 * dt,
            &x,
            dt,
        )
        .unwrap();
    }
    (x[0] - 2f64.sin().exp()).abs()
}

/// Worst `‖f_p(extract(v)) − v‖∞` over random vectors.
pub fn planner_inverse_worst(count: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let v = Vector3::new(r.random_range(-60.0..60.0), r.random_range(-60.0..60.0), r.random_range(-60.0..60.0));
        let (speed, gamma, chi) = extract_motion_state(&v);
        if speed == 0.0 {
            continue;
        }
        worst = worst.max((airframe::f_p(speed, gamma, chi) - v).amax());
    }
    worst
}

pub fn criterion_numerics() -> Outcome {
    let ratios: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&h| rk4_global_error(h) / rk4_global_error(h / 2.0)).collect();
    let worst = planner_inverse_worst(100_000, 3);
    let ratios_ok = ratios.iter().all(|r| (14.0..=18.0).contains(r));
    Outcome::new(
        ratios_ok && worst <= 1e-12,
        format!(
            "RK4 error ratios {:?} (in [14, 18]); planner inverse worst {worst:.1e} over 1e5 vectors (<= 1e-12)",
            ratios.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}
