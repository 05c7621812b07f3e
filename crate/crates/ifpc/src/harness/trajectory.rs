//! Piecewise desired trajectories built from line, arc and climb segments.
//!
//! Ground speed is constant. Turn rate and path angle move between segment
//! values along smoothstep ramps, so the desired velocity is C¹ and the
//! desired position C². Position is tabulated on a fine grid and
//! interpolated with cubic Hermite polynomials using the exact velocity.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{DesiredTrajectory, TrajectorySample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Segment {
    /// Straight and level.
    Line { duration: f64 },
    /// Level turn; positive `turn_rate` is clockwise seen from above.
    Arc { duration: f64, turn_rate: f64, ramp: f64 },
    /// Straight climb (or descent) at path angle `gamma`, ramped in and out.
    Climb { duration: f64, gamma: f64, ramp: f64 },
    /// Same as `line`; marks steady flight between maneuvers.
    Hold { duration: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Segment::Line { duration }
            | Segment::Hold { duration }
            | Segment::Arc { duration, .. }
            | Segment::Climb { duration, .. } => duration,
        }
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let field = |f: &str| format!("trajectory[{index}].{f}");
        let d = self.duration();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::config(field("duration"), "must be positive"));
        }
        let ramp_ok = |r: f64| r >= 0.0 && 2.0 * r <= d;
        match *self {
            Segment::Arc { turn_rate, ramp, .. } => {
                if !turn_rate.is_finite() {
                    return Err(Error::config(field("turn_rate"), "must be finite"));
                }
                if !ramp_ok(ramp) {
                    return Err(Error::config(field("ramp"), "must lie in [0, duration/2]"));
                }
            }
            Segment::Climb { gamma, ramp, .. } => {
                if !(gamma.abs() < 1.0) {
                    return Err(Error::config(field("gamma"), "must be below 1 rad in magnitude"));
                }
                if !ramp_ok(ramp) {
                    return Err(Error::config(field("ramp"), "must lie in [0, duration/2]"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// `∫₀ᵘ smoothstep`.
fn smoothstep_integral(u: f64) -> f64 {
    let c = u.clamp(0.0, 1.0);
    c * c * c - 0.5 * c * c * c * c + (u - 1.0).max(0.0) * 1.0
}

/// Trapezoid-like envelope of height 1 with smoothstep flanks.
fn envelope(tau: f64, duration: f64, ramp: f64) -> f64 {
    if ramp == 0.0 {
        return 1.0;
    }
    smoothstep(tau / ramp).min(smoothstep((duration - tau) / ramp))
}

/// `∫₀^τ envelope`.
fn envelope_integral(tau: f64, duration: f64, ramp: f64) -> f64 {
    if ramp == 0.0 {
        return tau;
    }
    let rise = ramp * smoothstep_integral((tau / ramp).min(1.0));
    let flat = (tau.min(duration - ramp) - ramp).max(0.0);
    let fall_start = duration - ramp;
    let fall = if tau > fall_start {
        // Mirror of the rise: ∫ over [D−r, τ] of S((D−t)/r) dt.
        ramp * (smoothstep_integral(1.0) - smoothstep_integral((duration - tau) / ramp))
    } else {
        0.0
    };
    rise + flat + fall
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Placed {
    start: f64,
    chi0: f64,
    seg: Segment,
}

/// Tabulated trajectory from a segment list.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrajectory {
    speed: f64,
    placed: Vec<Placed>,
    end: f64,
    chi_end: f64,
    h: f64,
    nodes: Vec<Vector3<f64>>,
}

impl SegmentTrajectory {
    /// Knot spacing for the position table, s.
    pub const KNOT_SPACING: f64 = 0.01;

    pub fn new(segments: &[Segment], p0: Vector3<f64>, chi0: f64, speed: f64, horizon: f64) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            s.validate(i)?;
        }
        if !(speed > 0.0) {
            return Err(Error::config("initial.v", "trajectory speed must be positive"));
        }
        let mut placed = Vec::with_capacity(segments.len());
        let mut t = 0.0;
        let mut chi = chi0;
        for &seg in segments {
            placed.push(Placed { start: t, chi0: chi, seg });
            if let Segment::Arc { duration, turn_rate, ramp } = seg {
                chi += turn_rate * envelope_integral(duration, duration, ramp);
            }
            t += seg.duration();
        }
        let mut traj = Self {
            speed,
            placed,
            end: t,
            chi_end: chi,
            h: Self::KNOT_SPACING,
            nodes: Vec::new(),
        };
        traj.tabulate(p0, horizon.max(t));
        Ok(traj)
    }

    /// Path angle and heading at time `t`.
    pub fn angles(&self, t: f64) -> (f64, f64) {
        if t >= self.end {
            return (0.0, self.chi_end);
        }
        let i = self.placed.partition_point(|p| p.start <= t).saturating_sub(1);
        let Some(p) = self.placed.get(i) else {
            return (0.0, self.chi_end);
        };
        let tau = (t - p.start).max(0.0);
        match p.seg {
            Segment::Line { .. } | Segment::Hold { .. } => (0.0, p.chi0),
            Segment::Arc { duration, turn_rate, ramp } => {
                (0.0, p.chi0 + turn_rate * envelope_integral(tau, duration, ramp))
            }
            Segment::Climb { duration, gamma, ramp } => (gamma * envelope(tau, duration, ramp), p.chi0),
        }
    }

    /// Heading rate at `t`.
    pub fn turn_rate(&self, t: f64) -> f64 {
        let i = self.placed.partition_point(|p| p.start <= t).saturating_sub(1);
        match self.placed.get(i) {
            Some(Placed {
                start,
                seg: Segment::Arc { duration, turn_rate, ramp },
                ..
            }) if t < self.end => turn_rate * envelope(t - start, *duration, *ramp),
            _ => 0.0,
        }
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        let (g, c) = self.angles(t);
        crate::airframe::f_p(self.speed, g, c)
    }

    /// `∫ v dt` over `[t0, t1]` by three-point Gauss–Legendre, split at
    /// segment joins where the heading rate may jump.
    fn displacement(&self, t0: f64, t1: f64) -> Vector3<f64> {
        let w = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let x = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
        let mut acc = Vector3::zeros();
        let mut a = t0;
        let joins = self.placed.iter().map(|p| p.start).chain([self.end]);
        for b in joins.filter(|&j| j > t0 && j < t1).chain([t1]) {
            let len = b - a;
            for j in 0..3 {
                acc += len * w[j] * self.velocity(a + x[j] * len);
            }
            a = b;
        }
        acc
    }

    fn tabulate(&mut self, p0: Vector3<f64>, horizon: f64) {
        let n = (horizon / self.h).ceil() as usize + 2;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut p = p0;
        nodes.push(p);
        for k in 0..n {
            let t0 = k as f64 * self.h;
            p += self.displacement(t0, t0 + self.h);
            nodes.push(p);
        }
        self.nodes = nodes;
    }
}

impl DesiredTrajectory for SegmentTrajectory {
    fn sample(&self, t: f64) -> TrajectorySample {
        let last = self.nodes.len() - 2;
        let k = ((t / self.h).floor().max(0.0) as usize).min(last);
        let t0 = k as f64 * self.h;
        TrajectorySample {
            p: self.nodes[k] + self.displacement(t0, t.max(t0)),
            p_dot: self.velocity(t),
        }
    }
}
