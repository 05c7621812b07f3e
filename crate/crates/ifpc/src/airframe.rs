//! Fixed-wing airframe: coefficient buildup, forces and moments, the
//! 12-state equations of motion and the control-affine split used by the
//! controller.
//!
//! Frames: position is NED (z down), velocity is described by airspeed `V`,
//! flight-path angle `γ` and heading `χ`; the attitude relative to the wind
//! is `(α, β, μ)`; body rates are `(p, q, r)`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::environment::{self, AtmosphereParams};
use crate::error::{Error, Result};

/// Guard on `|cos γ|` and `|cos β|`.
pub const COS_GUARD: f64 = 1e-3;
/// Condition number beyond which a gain matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    pub gamma: f64,
    pub chi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl UavState {
    pub const LEN: usize = 12;

    pub fn to_array(&self) -> [f64; 12] {
        [
            self.x, self.y, self.z, self.v, self.gamma, self.chi, self.alpha, self.beta, self.mu,
            self.p, self.q, self.r,
        ]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            x: s[0],
            y: s[1],
            z: s[2],
            v: s[3],
            gamma: s[4],
            chi: s[5],
            alpha: s[6],
            beta: s[7],
            mu: s[8],
            p: s[9],
            q: s[10],
            r: s[11],
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn psi(&self) -> Vector2<f64> {
        Vector2::new(self.gamma, self.chi)
    }

    pub fn theta(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, self.mu)
    }

    pub fn omega(&self) -> Vector3<f64> {
        Vector3::new(self.p, self.q, self.r)
    }
}

/// Non-dimensional stability and control derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeroDerivatives {
    pub cl0: f64,
    pub cl_alpha: f64,
    pub cl_alpha_dot: f64,
    pub cl_q: f64,
    pub cl_de: f64,
    pub cd0: f64,
    pub cd_de: f64,
    pub cd_da: f64,
    pub cd_dr: f64,
    pub cy_beta: f64,
    pub cy_p: f64,
    pub cy_r: f64,
    pub cy_da: f64,
    pub cy_dr: f64,
    pub croll_beta: f64,
    pub croll_p: f64,
    pub croll_r: f64,
    pub croll_da: f64,
    pub croll_dr: f64,
    pub cm0: f64,
    pub cm_alpha: f64,
    pub cm_q: f64,
    pub cm_alpha_dot: f64,
    pub cm_de: f64,
    pub cn_beta: f64,
    pub cn_p: f64,
    pub cn_r: f64,
    pub cn_da: f64,
    pub cn_dr: f64,
}

/// Omitted fields take the [`AirframeParams::small_uav`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AirframeParams {
    pub m: f64,
    pub g: f64,
    /// Inertia tensor, row-major, kg·m².
    pub inertia: [[f64; 3]; 3],
    pub s: f64,
    pub b: f64,
    pub c_bar: f64,
    pub e: f64,
    /// Aspect ratio; `b²/S` when omitted.
    pub ar: Option<f64>,
    pub v_min: f64,
    /// Symmetric surface deflection limit, rad.
    pub delta_limit: f64,
    pub aero: AeroDerivatives,
}

impl Default for AirframeParams {
    fn default() -> Self {
        Self::small_uav()
    }
}

impl Default for AeroDerivatives {
    fn default() -> Self {
        AirframeParams::small_uav().aero
    }
}

impl AirframeParams {
    /// A 13.5 kg small-UAV dataset (Aerosonde-class geometry and derivatives).
    pub fn small_uav() -> Self {
        let jx = 0.8244;
        let jy = 1.135;
        let jz = 1.759;
        let jxz = 0.1204;
        Self {
            m: 13.5,
            g: 9.81,
            inertia: [[jx, 0.0, -jxz], [0.0, jy, 0.0], [-jxz, 0.0, jz]],
            s: 0.55,
            b: 2.8956,
            c_bar: 0.18994,
            e: 0.9,
            ar: None,
            v_min: 5.0,
            delta_limit: 30f64.to_radians(),
            aero: AeroDerivatives {
                cl0: 0.28,
                cl_alpha: 3.45,
                cl_alpha_dot: 0.8,
                cl_q: 0.0,
                cl_de: -0.36,
                cd0: 0.03,
                cd_de: 0.01,
                cd_da: 0.0,
                cd_dr: 0.0,
                cy_beta: -0.98,
                cy_p: 0.0,
                cy_r: 0.0,
                cy_da: 0.0,
                cy_dr: -0.17,
                croll_beta: -0.12,
                croll_p: -0.26,
                croll_r: 0.14,
                croll_da: 0.08,
                croll_dr: 0.105,
                cm0: -0.02338,
                cm_alpha: -0.38,
                cm_q: -3.6,
                cm_alpha_dot: -2.5,
                cm_de: -0.5,
                cn_beta: 0.25,
                cn_p: 0.022,
                cn_r: -0.35,
                cn_da: 0.06,
                cn_dr: -0.032,
            },
        }
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.ar.unwrap_or(self.b * self.b / self.s)
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.inertia[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("airframe.m", self.m),
            ("airframe.g", self.g),
            ("airframe.s", self.s),
            ("airframe.b", self.b),
            ("airframe.c_bar", self.c_bar),
            ("airframe.e", self.e),
            ("airframe.v_min", self.v_min),
            ("airframe.delta_limit", self.delta_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if let Some(ar) = self.ar {
            if !(ar > 0.0 && ar.is_finite()) {
                return Err(Error::config("airframe.ar", "must be positive"));
            }
        }
        let j = self.inertia_matrix();
        if (j - j.transpose()).abs().max() > 1e-12 * j.abs().max() {
            return Err(Error::config("airframe.inertia", "must be symmetric"));
        }
        if j.cholesky().is_none() {
            return Err(Error::config("airframe.inertia", "must be positive definite"));
        }
        if self.aero.cl_alpha == 0.0 {
            return Err(Error::config("airframe.aero.cl_alpha", "must be nonzero"));
        }
        if self.aero.cy_beta == 0.0 {
            return Err(Error::config("airframe.aero.cy_beta", "must be nonzero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSurfaces {
    pub delta_e: f64,
    pub delta_a: f64,
    pub delta_r: f64,
}

impl ControlSurfaces {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.delta_e, self.delta_a, self.delta_r)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            delta_e: v[0],
            delta_a: v[1],
            delta_r: v[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceVector {
    pub d_x: f64,
    pub d_y: f64,
    pub d_z: f64,
    pub d_v: f64,
    pub d_gamma: f64,
    pub d_chi: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_mu: f64,
    pub d_omega: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroCoefficients {
    pub c_lift: f64,
    pub c_side: f64,
    pub c_drag: f64,
    pub c_roll: f64,
    pub c_pitch: f64,
    pub c_yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcesMoments {
    pub lift: f64,
    pub side: f64,
    pub drag: f64,
    pub moment: Vector3<f64>,
}

fn airspeed_guard(v: f64, params: &AirframeParams) -> Result<()> {
    if v > params.v_min {
        Ok(())
    } else {
        Err(Error::Envelope {
            guard: "airspeed at or below V_min",
            value: v,
        })
    }
}

fn envelope_guard(s: &UavState, params: &AirframeParams) -> Result<()> {
    airspeed_guard(s.v, params)?;
    if s.gamma.cos().abs() <= COS_GUARD {
        return Err(Error::Envelope {
            guard: "|cos(gamma)| below guard",
            value: s.gamma,
        });
    }
    if s.beta.cos().abs() <= COS_GUARD {
        return Err(Error::Envelope {
            guard: "|cos(beta)| below guard",
            value: s.beta,
        });
    }
    Ok(())
}

pub fn aero_coefficients(
    s: &UavState,
    delta: &ControlSurfaces,
    alpha_dot_prev: f64,
    params: &AirframeParams,
) -> Result<AeroCoefficients> {
    airspeed_guard(s.v, params)?;
    let a = &params.aero;
    let kc = params.c_bar / (2.0 * s.v);
    let kb = params.b / (2.0 * s.v);

    let c_lift = a.cl0
        + a.cl_alpha * s.alpha
        + kc * (a.cl_alpha_dot * alpha_dot_prev + a.cl_q * s.q)
        + a.cl_de * delta.delta_e;
    let induced = (c_lift - a.cl0).powi(2) / (std::f64::consts::PI * params.e * params.aspect_ratio());
    let c_drag = a.cd0
        + induced
        + a.cd_de * delta.delta_e
        + a.cd_da * delta.delta_a
        + a.cd_dr * delta.delta_r;
    let c_side = a.cy_beta * s.beta
        + kb * (a.cy_p * s.p + a.cy_r * s.r)
        + a.cy_da * delta.delta_a
        + a.cy_dr * delta.delta_r;
    let c_roll = a.croll_beta * s.beta
        + kb * (a.croll_p * s.p + a.croll_r * s.r)
        + a.croll_da * delta.delta_a
        + a.croll_dr * delta.delta_r;
    let c_pitch = a.cm0
        + a.cm_alpha * s.alpha
        + kc * (a.cm_q * s.q + a.cm_alpha_dot * alpha_dot_prev)
        + a.cm_de * delta.delta_e;
    let c_yaw = a.cn_beta * s.beta
        + kb * (a.cn_p * s.p + a.cn_r * s.r)
        + a.cn_da * delta.delta_a
        + a.cn_dr * delta.delta_r;

    Ok(AeroCoefficients {
        c_lift,
        c_side,
        c_drag,
        c_roll,
        c_pitch,
        c_yaw,
    })
}

pub fn forces_and_moments(q_bar: f64, c: &AeroCoefficients, params: &AirframeParams) -> ForcesMoments {
    let qs = q_bar * params.s;
    ForcesMoments {
        lift: qs * c.c_lift,
        side: qs * c.c_side,
        drag: qs * c.c_drag,
        moment: Vector3::new(
            qs * params.b * c.c_roll,
            qs * params.c_bar * c.c_pitch,
            qs * params.b * c.c_yaw,
        ),
    }
}

/// Dynamic pressure at the state's altitude.
pub fn state_dynamic_pressure(s: &UavState, atmo: &AtmosphereParams) -> Result<f64> {
    let amb = environment::ambient_conditions(s.z, atmo)?;
    Ok(environment::dynamic_pressure(s.v, amb.rho))
}

/// `(γ̇, χ̇)` from the force equations, excluding disturbances.
fn path_rates(s: &UavState, thrust: f64, lift: f64, side: f64, params: &AirframeParams) -> (f64, f64) {
    let (sa, ca) = s.alpha.sin_cos();
    let (sb, _) = s.beta.sin_cos();
    let (sm, cm) = s.mu.sin_cos();
    let cg = s.gamma.cos();
    let mv = params.m * s.v;
    let gamma_dot = ((thrust * ca * sb - side) * sm + (thrust * sa + lift) * cm) / mv
        - params.g * cg / s.v;
    let chi_dot = ((-thrust * ca * sb + side) * cm + (thrust * sa + lift) * sm) / (mv * cg);
    (gamma_dot, chi_dot)
}

/// Kinematic `(α̇, β̇, μ̇)` given body rates and path-angle rates.
///
/// `alpha_dot_in` feeds the `sin β · α̇` term of `μ̇`; pass `None` to use the
/// `α̇` computed on the first line.
fn euler_rates(
    s: &UavState,
    gamma_dot: f64,
    chi_dot: f64,
    d: &DisturbanceVector,
    alpha_dot_in: Option<f64>,
) -> Vector3<f64> {
    let (sa, ca) = s.alpha.sin_cos();
    let (sb, cb) = s.beta.sin_cos();
    let (sm, cm) = s.mu.sin_cos();
    let (sg, cg) = s.gamma.sin_cos();
    let alpha_dot = s.q - ca * sb / cb * s.p - sa * sb / cb * s.r - cm / cb * gamma_dot
        - cg * sm / cb * chi_dot
        + d.d_alpha;
    let beta_dot = sa * s.p - ca * s.r - sm * gamma_dot + cg * cm * chi_dot + d.d_beta;
    let ad = alpha_dot_in.unwrap_or(alpha_dot);
    let mu_dot = ca * cb * s.p + sb * s.q + sa * cb * s.r + sb * ad + sg * chi_dot + d.d_mu;
    Vector3::new(alpha_dot, beta_dot, mu_dot)
}

/// Full state derivative.
pub fn uav_derivatives(
    s: &UavState,
    thrust: f64,
    delta: &ControlSurfaces,
    d: &DisturbanceVector,
    params: &AirframeParams,
    atmo: &AtmosphereParams,
    alpha_dot_prev: f64,
) -> Result<UavState> {
    envelope_guard(s, params)?;
    let q_bar = state_dynamic_pressure(s, atmo)?;
    let coeffs = aero_coefficients(s, delta, alpha_dot_prev, params)?;
    let fm = forces_and_moments(q_bar, &coeffs, params);

    let ca = s.alpha.cos();
    let cb = s.beta.cos();
    let (sg, cg) = s.gamma.sin_cos();
    let (sc, cc) = s.chi.sin_cos();

    let (gd, cd) = path_rates(s, thrust, fm.lift, fm.side, params);
    let gamma_dot = gd + d.d_gamma;
    let chi_dot = cd + d.d_chi;
    let theta_dot = euler_rates(s, gamma_dot, chi_dot, d, None);

    let j = params.inertia_matrix();
    let j_inv = inverse3(&j, "inertia tensor")?;
    let w = s.omega();
    let w_dot = j_inv * (fm.moment - w.cross(&(j * w))) + Vector3::from(d.d_omega);

    Ok(UavState {
        x: s.v * cg * cc + d.d_x,
        y: s.v * cg * sc + d.d_y,
        z: -s.v * sg + d.d_z,
        v: (thrust * ca * cb - fm.drag) / params.m - params.g * sg + d.d_v,
        gamma: gamma_dot,
        chi: chi_dot,
        alpha: theta_dot[0],
        beta: theta_dot[1],
        mu: theta_dot[2],
        p: w_dot[0],
        q: w_dot[1],
        r: w_dot[2],
    })
}

/// Inputs to [`affine_terms`] that are not part of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineInputs {
    /// Thrust used in the path-angle dynamics, N.
    pub thrust: f64,
    /// Engine equilibrium thrust `T_0`, N.
    pub t0: f64,
    /// `α̇` used in the coefficient buildup.
    pub alpha_dot_coeff: f64,
    /// `α̇` used in the kinematic `sin β · α̇` term.
    pub alpha_dot_kin: f64,
    /// Surface deflections held from the previous step.
    pub delta_prev: ControlSurfaces,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTerms {
    pub f_p: Vector3<f64>,
    pub f_v: f64,
    pub g_v: f64,
    pub f_psi: Vector2<f64>,
    pub g_psi: Matrix2<f64>,
    pub f_theta: Vector3<f64>,
    pub g_theta: Matrix3<f64>,
    pub f_omega: Vector3<f64>,
    pub g_omega: Matrix3<f64>,
    pub f_f: Vector2<f64>,
    pub g_f: Matrix2<f64>,
    pub f_m: Vector3<f64>,
    pub g_m: Matrix3<f64>,
}

pub fn f_p(v: f64, gamma: f64, chi: f64) -> Vector3<f64> {
    let (sg, cg) = gamma.sin_cos();
    let (sc, cc) = chi.sin_cos();
    Vector3::new(v * cg * cc, v * cg * sc, -v * sg)
}

pub fn affine_terms(
    s: &UavState,
    q_bar: f64,
    inp: &AffineInputs,
    params: &AirframeParams,
) -> Result<AffineTerms> {
    envelope_guard(s, params)?;
    let a = &params.aero;
    let m = params.m;
    let v = s.v;
    let (sa, ca) = s.alpha.sin_cos();
    let (sb, cb) = s.beta.sin_cos();
    let (sm, cm) = s.mu.sin_cos();
    let (sg, cg) = s.gamma.sin_cos();
    let t = inp.thrust;
    let dp = &inp.delta_prev;

    let coeffs = aero_coefficients(s, dp, inp.alpha_dot_coeff, params)?;
    let fm = forces_and_moments(q_bar, &coeffs, params);

    let g_v = inp.t0 * ca * cb / m;
    let f_v = -fm.drag / m - params.g * sg + g_v;

    let f_psi = Vector2::new(
        t * (ca * sb * sm + sa * cm) / (m * v) - params.g * cg / v,
        t * (-ca * sb * cm + sa * sm) / (m * v * cg),
    );
    let g_psi = Matrix2::new(cm, -sm, sm / cg, cm / cg) / (m * v);

    let qs = q_bar * params.s;
    let kc = params.c_bar / (2.0 * v);
    let kb = params.b / (2.0 * v);
    let f_f = qs
        * Vector2::new(
            a.cl0 + (a.cl_alpha_dot * inp.alpha_dot_coeff + a.cl_q * s.q) * kc + a.cl_de * dp.delta_e,
            (a.cy_p * s.p + a.cy_r * s.r) * kb + a.cy_da * dp.delta_a + a.cy_dr * dp.delta_r,
        );
    let g_f = qs * Matrix2::new(a.cl_alpha, 0.0, 0.0, a.cy_beta);

    let f_m = qs
        * Vector3::new(
            params.b * (a.croll_beta * s.beta + (a.croll_p * s.p + a.croll_r * s.r) * kb),
            params.c_bar * (a.cm0 + a.cm_alpha * s.alpha + (a.cm_q * s.q + a.cm_alpha_dot * inp.alpha_dot_coeff) * kc),
            params.b * (a.cn_beta * s.beta + (a.cn_p * s.p + a.cn_r * s.r) * kb),
        );
    let g_m = qs
        * Matrix3::new(
            0.0,
            params.b * a.croll_da,
            params.b * a.croll_dr,
            params.c_bar * a.cm_de,
            0.0,
            0.0,
            0.0,
            params.b * a.cn_da,
            params.b * a.cn_dr,
        );

    // Path-angle rates implied by the current aerodynamic force.
    let f_a = Vector2::new(fm.lift, fm.side);
    let psi_dot = f_psi + g_psi * f_a;
    let f_theta = Vector3::new(
        -cm / cb * psi_dot[0] - cg * sm / cb * psi_dot[1],
        -sm * psi_dot[0] + cg * cm * psi_dot[1],
        sb * inp.alpha_dot_kin + sg * psi_dot[1],
    );
    let g_theta = Matrix3::new(
        -ca * sb / cb,
        1.0,
        -sa * sb / cb,
        sa,
        0.0,
        -ca,
        ca * cb,
        sb,
        sa * cb,
    );

    let j = params.inertia_matrix();
    let g_omega = inverse3(&j, "inertia tensor")?;
    let w = s.omega();
    let f_omega = -(g_omega * w.cross(&(j * w)));

    Ok(AffineTerms {
        f_p: f_p(v, s.gamma, s.chi),
        f_v,
        g_v,
        f_psi,
        g_psi,
        f_theta,
        g_theta,
        f_omega,
        g_omega,
        f_f,
        g_f,
        f_m,
        g_m,
    })
}

impl AffineTerms {
    /// Path-angle rates reconstructed from the decomposition for a given `F_a`.
    pub fn psi_dot(&self, f_a: &Vector2<f64>) -> Vector2<f64> {
        self.f_psi + self.g_psi * f_a
    }

    pub fn f_a(&self, alpha: f64, beta: f64) -> Vector2<f64> {
        self.f_f + self.g_f * Vector2::new(alpha, beta)
    }

    pub fn moment(&self, delta: &ControlSurfaces) -> Vector3<f64> {
        self.f_m + self.g_m * delta.as_vector()
    }
}

/// 1-norm condition number estimate.
fn condition_1<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>, inv: &nalgebra::SMatrix<f64, N, N>) -> f64 {
    let norm1 = |a: &nalgebra::SMatrix<f64, N, N>| {
        (0..N)
            .map(|j| a.column(j).abs().sum())
            .fold(0.0_f64, f64::max)
    };
    norm1(m) * norm1(inv)
}

pub fn inverse2(m: &Matrix2<f64>, what: &'static str) -> Result<Matrix2<f64>> {
    let inv = m.try_inverse().ok_or(Error::Singular {
        what,
        condition: f64::INFINITY,
    })?;
    let c = condition_1(m, &inv);
    if !(c <= MAX_CONDITION) {
        return Err(Error::Singular { what, condition: c });
    }
    Ok(inv)
}

pub fn inverse3(m: &Matrix3<f64>, what: &'static str) -> Result<Matrix3<f64>> {
    let inv = m.try_inverse().ok_or(Error::Singular {
        what,
        condition: f64::INFINITY,
    })?;
    let c = condition_1(m, &inv);
    if !(c <= MAX_CONDITION) {
        return Err(Error::Singular { what, condition: c });
    }
    Ok(inv)
}

/// Wings-level trim at the given state's airspeed, altitude and path angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AirframeTrim {
    pub alpha: f64,
    pub delta_e: f64,
    pub thrust: f64,
}

/// Solves `V̇ = γ̇ = q̇ = 0` for `(α, δ_e, T)` with `β = μ = 0` and `ω = 0`.
pub fn trim_wings_level(
    v: f64,
    gamma: f64,
    z: f64,
    params: &AirframeParams,
    atmo: &AtmosphereParams,
) -> Result<AirframeTrim> {
    let residual = |x: &Vector3<f64>| -> Result<Vector3<f64>> {
        let s = UavState {
            z,
            v,
            gamma,
            alpha: x[0],
            ..Default::default()
        };
        let delta = ControlSurfaces {
            delta_e: x[1],
            ..Default::default()
        };
        let d = uav_derivatives(&s, x[2], &delta, &DisturbanceVector::default(), params, atmo, 0.0)?;
        Ok(Vector3::new(d.v, d.gamma, d.q))
    };
    let mut x = Vector3::new(0.05, 0.0, 0.1 * params.m * params.g);
    for _ in 0..50 {
        let f = residual(&x)?;
        if f.amax() < 1e-13 {
            return Ok(AirframeTrim {
                alpha: x[0],
                delta_e: x[1],
                thrust: x[2],
            });
        }
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            let h = 1e-7 * x[k].abs().max(1e-3);
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            jac.set_column(k, &((residual(&xp)? - residual(&xm)?) / (2.0 * h)));
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or(Error::Singular { what: "trim Jacobian", condition: f64::INFINITY })?;
        x += dx;
    }
    Err(Error::TrimFailure("airframe trim did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_params() -> AirframeParams {
        let mut p = AirframeParams::small_uav();
        p.aero.cl0 = 0.2;
        p.aero.cl_alpha = 4.0;
        p.aero.cd0 = 0.02;
        p.e = 0.9;
        p.ar = Some(8.0);
        p
    }

    #[test]
    fn bias_only_coefficients() {
        let p = AirframeParams::small_uav();
        let s = UavState { v: 30.0, ..Default::default() };
        let c = aero_coefficients(&s, &ControlSurfaces::default(), 0.0, &p).unwrap();
        assert_eq!(c.c_lift, p.aero.cl0);
        assert_eq!(c.c_drag, p.aero.cd0);
        assert_eq!((c.c_side, c.c_roll, c.c_yaw), (0.0, 0.0, 0.0));
        assert_eq!(c.c_pitch, p.aero.cm0);
    }

    #[test]
    fn lift_and_induced_drag() {
        let p = simple_params();
        let s = UavState { v: 30.0, alpha: 0.1, ..Default::default() };
        let c = aero_coefficients(&s, &ControlSurfaces::default(), 0.0, &p).unwrap();
        assert!((c.c_lift - 0.6).abs() < 1e-15);
        let expect = 0.02 + 0.16 / (std::f64::consts::PI * 0.9 * 8.0);
        assert!((c.c_drag - expect).abs() < 1e-15);
        assert!((c.c_drag - 0.02707).abs() < 1e-5);
    }

    #[test]
    fn airspeed_guard_rejects_slow_flight() {
        let p = AirframeParams::small_uav();
        let s = UavState { v: 5.0, ..Default::default() };
        assert!(matches!(
            aero_coefficients(&s, &ControlSurfaces::default(), 0.0, &p),
            Err(Error::Envelope { .. })
        ));
    }

    #[test]
    fn force_examples() {
        let mut p = AirframeParams::small_uav();
        p.s = 0.5;
        p.b = 2.0;
        let zero = AeroCoefficients { c_lift: 0.6, c_side: 0.1, c_drag: 0.05, c_roll: 0.01, c_pitch: 0.0, c_yaw: 0.0 };
        let f = forces_and_moments(0.0, &zero, &p);
        assert_eq!((f.lift, f.side, f.drag), (0.0, 0.0, 0.0));
        assert_eq!(f.moment, Vector3::zeros());
        let f = forces_and_moments(1000.0, &zero, &p);
        assert_eq!(f.lift, 300.0);
        assert_eq!(f.moment[0], 10.0);
    }

    #[test]
    fn gravity_only_flight_path_rate() {
        let mut p = AirframeParams::small_uav();
        p.aero = AeroDerivatives { ..zero_aero() };
        let s = UavState { v: 20.0, z: -100.0, ..Default::default() };
        let d = uav_derivatives(&s, 0.0, &ControlSurfaces::default(), &DisturbanceVector::default(), &p, &AtmosphereParams::default(), 0.0).unwrap();
        assert!((d.gamma + p.g / 20.0).abs() < 1e-15);
    }

    #[test]
    fn additive_position_disturbance() {
        let p = AirframeParams::small_uav();
        let s = UavState { v: 20.0, z: -100.0, ..Default::default() };
        let dist = DisturbanceVector { d_x: 1.0, ..Default::default() };
        let d = uav_derivatives(&s, 10.0, &ControlSurfaces::default(), &dist, &p, &AtmosphereParams::default(), 0.0).unwrap();
        assert_eq!(d.x, 21.0);
    }

    #[test]
    fn wings_level_trim_is_equilibrium() {
        let p = AirframeParams::small_uav();
        let atmo = AtmosphereParams::default();
        let t = trim_wings_level(35.0, 0.0, -100.0, &p, &atmo).unwrap();
        let s = UavState { z: -100.0, v: 35.0, alpha: t.alpha, ..Default::default() };
        let delta = ControlSurfaces { delta_e: t.delta_e, ..Default::default() };
        let d = uav_derivatives(&s, t.thrust, &delta, &DisturbanceVector::default(), &p, &atmo, 0.0).unwrap();
        assert!(d.v.abs() < 1e-12 && d.gamma.abs() < 1e-12 && d.chi.abs() < 1e-12);
        assert!((d.x - 35.0).abs() < 1e-12 && d.y.abs() < 1e-12 && d.z.abs() < 1e-12);
        assert!(t.thrust > 5.0 && t.thrust < 30.0, "{}", t.thrust);
    }

    #[test]
    fn g_psi_at_zero_bank() {
        let p = AirframeParams::small_uav();
        let s = UavState { v: 30.0, gamma: 0.2, z: -100.0, ..Default::default() };
        let inp = AffineInputs { thrust: 10.0, t0: 10.0, alpha_dot_coeff: 0.0, alpha_dot_kin: 0.0, delta_prev: ControlSurfaces::default() };
        let a = affine_terms(&s, 500.0, &inp, &p).unwrap();
        let mv = p.m * 30.0;
        let expect = Matrix2::new(1.0 / mv, 0.0, 0.0, 1.0 / (mv * 0.2f64.cos()));
        assert!((a.g_psi - expect).abs().max() < 1e-15);
        assert_eq!(a.f_omega, Vector3::zeros());
        assert!((a.g_omega * p.inertia_matrix() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn g_theta_determinant() {
        let p = AirframeParams::small_uav();
        let s = UavState { v: 30.0, alpha: 0.3, beta: -0.4, mu: 0.7, gamma: 0.1, z: -100.0, ..Default::default() };
        let inp = AffineInputs { thrust: 10.0, t0: 10.0, alpha_dot_coeff: 0.0, alpha_dot_kin: 0.0, delta_prev: ControlSurfaces::default() };
        let a = affine_terms(&s, 500.0, &inp, &p).unwrap();
        assert!((a.g_theta.determinant() + 1.0 / 0.4f64.cos()).abs() < 1e-12);
        let mv = p.m * 30.0;
        assert!((a.g_psi.determinant() - 1.0 / (mv * mv * 0.1f64.cos())).abs() < 1e-15);
    }

    fn zero_aero() -> AeroDerivatives {
        AeroDerivatives {
            cl0: 0.0, cl_alpha: 1.0, cl_alpha_dot: 0.0, cl_q: 0.0, cl_de: 0.0,
            cd0: 0.0, cd_de: 0.0, cd_da: 0.0, cd_dr: 0.0,
            cy_beta: 1.0, cy_p: 0.0, cy_r: 0.0, cy_da: 0.0, cy_dr: 0.0,
            croll_beta: 0.0, croll_p: 0.0, croll_r: 0.0, croll_da: 0.0, croll_dr: 0.0,
            cm0: 0.0, cm_alpha: 0.0, cm_q: 0.0, cm_alpha_dot: 0.0, cm_de: 0.0,
            cn_beta: 0.0, cn_p: 0.0, cn_r: 0.0, cn_da: 0.0, cn_dr: 0.0,
        }
    }
}
