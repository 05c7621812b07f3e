//! Run log: a uniform-grid table of named `f64` columns, its CSV form and
//! the metrics derived from it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the CSV column layout.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Column names with unit suffixes, in file order.
///
/// Suffixes: `_m`, `_mps`, `_mps2`, `_rad`, `_radps`, `_radps2`, `_n`,
/// `_nm`, `_rpm`, `_kgps`, `_k`, `_s`, `_1ps` (relative rate, 1/s),
/// `_rel` (relative to the engine trim), `_nd` (non-dimensional map
/// coordinate), `_flag` (0 or 1).
pub const COLUMNS: &[&str] = &[
    "time_s",
    "x_m", "y_m", "z_m", "v_mps", "gamma_rad", "chi_rad", "alpha_rad", "beta_rad", "mu_rad",
    "p_radps", "q_radps", "r_radps",
    "xd_m", "yd_m", "zd_m", "vxd_mps", "vyd_mps", "vzd_mps",
    "ex_m", "ey_m", "ez_m",
    "v_d_mps", "v_d_dot_mps2", "gamma_d_rad", "chi_d_rad", "gamma_d_dot_radps", "chi_d_dot_radps",
    "alpha_d_rad", "beta_d_rad", "mu_d_rad", "alpha_d_dot_radps", "beta_d_dot_radps", "mu_d_dot_radps",
    "p_d_radps", "q_d_radps", "r_d_radps",
    "e_v_mps", "e_gamma_rad", "e_chi_rad", "e_alpha_rad", "e_beta_rad", "e_mu_rad",
    "e_p_radps", "e_q_radps", "e_r_radps",
    "lift_d_n", "side_d_n", "m_d_roll_nm", "m_d_pitch_nm", "m_d_yaw_nm",
    "delta_e_rad", "delta_a_rad", "delta_r_rad",
    "dt_d_rel", "dn_d_rel", "dn_d_dot_1ps", "dwf_rel",
    "n_rpm", "dn_rel", "w_f_kgps", "thrust_n", "thrust_est_n", "thrust_cmd_n", "thrust_engine_n",
    "residual_mass_rel", "residual_nozzle_rel", "z_c_nd", "w_t_nd", "t_t4_k",
    "dhat_x_mps", "dhat_y_mps", "dhat_z_mps", "dhat_v_mps2", "dhat_gamma_radps", "dhat_chi_radps",
    "dhat_alpha_radps", "dhat_beta_radps", "dhat_mu_radps", "dhat_p_radps2", "dhat_q_radps2", "dhat_r_radps2",
    "dhat_dn_1ps", "dhat_dt_rel", "dhat_dt_truth_rel",
    "d_x_mps", "d_y_mps", "d_z_mps", "d_v_mps2", "d_gamma_radps", "d_chi_radps",
    "d_alpha_radps", "d_beta_radps", "d_mu_radps", "d_p_radps2", "d_q_radps2", "d_r_radps2",
    "d_dn_1ps", "d_dt_rel", "thrust_loss_rel",
    "planner_floor_flag", "surface_sat_flag", "fuel_sat_flag", "linear_invalid_flag",
];

pub fn column_index(name: &str) -> Option<usize> {
    COLUMNS.iter().position(|&c| c == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub time: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub rows: Vec<Vec<f64>>,
    pub fault: Option<FaultRecord>,
}

impl RunLog {
    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = column_index(name).unwrap_or_else(|| panic!("unknown column {name}"));
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let csv_err = |e: csv::Error| Error::Csv(format!("{}: {e}", path.display()));
        w.write_record(COLUMNS).map_err(csv_err)?;
        let mut buf: Vec<String> = Vec::with_capacity(COLUMNS.len());
        for row in &self.rows {
            buf.clear();
            buf.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&buf).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    /// Parses the CSV layout written by [`RunLog::write_csv`].
    pub fn from_csv_reader<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers().map_err(|e| Error::Csv(format!("{source}: {e}")))?;
        if header.len() != COLUMNS.len() || header.iter().zip(COLUMNS).any(|(a, b)| a != *b) {
            return Err(Error::Csv(format!("{source}: header does not match schema v{CSV_SCHEMA_VERSION}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(format!("{source}: {e}")))?;
            if rec.len() != COLUMNS.len() {
                return Err(Error::Csv(format!("{source}: row {} has {} fields", i + 2, rec.len())));
            }
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Csv(format!("{source}: row {}: {e}", i + 2)))?;
            rows.push(row);
        }
        Ok(Self { rows, fault: None })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisMetrics {
    pub axis: String,
    pub rms: f64,
    /// Mean `|e|` over the final 10 % of the run.
    pub steady_state: f64,
    /// Time after which `|e|` stays within 5 % of its peak; `None` if it never does.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub axes: Vec<AxisMetrics>,
    /// Largest `|T_est − T|/T` over the run.
    pub max_thrust_estimate_error: f64,
    /// Mean `|T_est − T|/T` over the final 10 %.
    pub final_thrust_estimate_error: f64,
    pub surface_saturation_fraction: f64,
    pub fuel_saturation_fraction: f64,
    pub planner_floor_fraction: f64,
    pub max_balance_residual: f64,
    pub samples: usize,
}

impl RunMetrics {
    pub fn axis(&self, name: &str) -> Option<&AxisMetrics> {
        self.axes.iter().find(|a| a.axis == name)
    }

    /// Largest steady-state error among the horizontal axes.
    pub fn horizontal_steady_state(&self) -> f64 {
        self.axes
            .iter()
            .filter(|a| a.axis != "z")
            .map(|a| a.steady_state)
            .fold(0.0, f64::max)
    }
}

fn final_tenth(n: usize) -> usize {
    n - (n / 10).max(1)
}

pub fn compute_metrics(log: &RunLog) -> RunMetrics {
    let n = log.rows.len();
    let t = log.column("time_s");
    let tail = if n == 0 { 0 } else { final_tenth(n) };
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };

    let axes = [("x", "ex_m"), ("y", "ey_m"), ("z", "ez_m")]
        .iter()
        .map(|(axis, col)| {
            let e: Vec<f64> = log.column(col).iter().map(|v| v.abs()).collect();
            let rms = mean(&e.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
            let peak = e.iter().copied().fold(0.0, f64::max);
            let band = 0.05 * peak;
            let settling_time = match e.iter().rposition(|&v| v > band) {
                None => t.first().copied(),
                Some(i) if i + 1 < n => Some(t[i + 1]),
                Some(_) => None,
            };
            AxisMetrics {
                axis: axis.to_string(),
                rms,
                steady_state: mean(&e[tail..]),
                settling_time,
            }
        })
        .collect();

    let thrust = log.column("thrust_n");
    let est = log.column("thrust_est_n");
    let rel: Vec<f64> = thrust.iter().zip(&est).map(|(a, b)| ((b - a) / a).abs()).collect();
    let frac = |col: &str| mean(&log.column(col));
    let resid = log
        .column("residual_mass_rel")
        .iter()
        .chain(&log.column("residual_nozzle_rel"))
        .map(|v| v.abs())
        .fold(0.0, f64::max);

    RunMetrics {
        axes,
        max_thrust_estimate_error: rel.iter().copied().fold(0.0, f64::max),
        final_thrust_estimate_error: mean(&rel[tail..]),
        surface_saturation_fraction: frac("surface_sat_flag"),
        fuel_saturation_fraction: frac("fuel_sat_flag"),
        planner_floor_fraction: frac("planner_floor_flag"),
        max_balance_residual: resid,
        samples: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_names_unique() {
        let mut v = COLUMNS.to_vec();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), COLUMNS.len());
    }

    #[test]
    fn settling_time_of_decay() {
        let ex = column_index("ex_m").unwrap();
        let mut log = RunLog::default();
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            let mut row = vec![0.0; COLUMNS.len()];
            row[0] = t;
            row[ex] = (-t).exp();
            row[column_index("thrust_n").unwrap()] = 10.0;
            row[column_index("thrust_est_n").unwrap()] = 10.0;
            log.rows.push(row);
        }
        let m = compute_metrics(&log);
        let st = m.axis("x").unwrap().settling_time.unwrap();
        assert!((st - 20f64.ln()).abs() < 0.011, "{st}");
        assert_eq!(m.axis("y").unwrap().settling_time, Some(0.0));
    }
}
