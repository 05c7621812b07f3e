//! Ablation suite and the files a run leaves behind: per-variant CSV logs,
//! an ablation table and a JSON manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::guidance::Compensation;
use crate::harness::config::{MapSource, Scenario};
use crate::harness::log::{FaultRecord, RunMetrics, COLUMNS, CSV_SCHEMA_VERSION};
use crate::harness::run::{prepare, run_prepared, OperatingPoint, RunOptions, RunOutput};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Variant {
    pub name: &'static str,
    pub compensation: Compensation,
}

pub const VARIANTS: [Variant; 3] = [
    Variant {
        name: "full",
        compensation: Compensation {
            thrust: true,
            disturbance: true,
        },
    },
    Variant {
        name: "no-thrust-comp",
        compensation: Compensation {
            thrust: false,
            disturbance: true,
        },
    },
    Variant {
        name: "no-disturbance-comp",
        compensation: Compensation {
            thrust: true,
            disturbance: false,
        },
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRun {
    pub variant: Variant,
    pub output: RunOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub axis: String,
    pub rms_m: f64,
    pub steady_state_m: f64,
    pub settling_time_s: Option<f64>,
    pub final_thrust_estimate_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub op: OperatingPoint,
    pub runs: Vec<VariantRun>,
}

impl AblationReport {
    pub fn run(&self, name: &str) -> Option<&RunOutput> {
        self.runs.iter().find(|r| r.variant.name == name).map(|r| &r.output)
    }

    /// One row per variant and axis.
    pub fn table(&self) -> Vec<AblationRow> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.output.metrics.axes.iter().map(move |a| AblationRow {
                    variant: r.variant.name.to_string(),
                    axis: a.axis.clone(),
                    rms_m: a.rms,
                    steady_state_m: a.steady_state,
                    settling_time_s: a.settling_time,
                    final_thrust_estimate_error: r.output.metrics.final_thrust_estimate_error,
                })
            })
            .collect()
    }
}

/// Runs every variant on the same trim and disturbance realisation, in parallel.
pub fn run_ablation_suite(scn: &Scenario, variants: &[Variant]) -> Result<AblationReport> {
    let prep = prepare(scn)?;
    let runs = std::thread::scope(|sc| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&variant| {
                let prep = &prep;
                sc.spawn(move || VariantRun {
                    variant,
                    output: run_prepared(
                        scn,
                        prep,
                        RunOptions {
                            compensation: variant.compensation,
                            controller_enabled: true,
                        },
                    ),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant thread panicked"))
            .collect()
    });
    Ok(AblationReport { op: prep.op, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub path: Option<PathBuf>,
    pub config_sha256: String,
    pub seed: u64,
    /// `"synthetic"` or the map file path.
    pub maps: String,
    pub maps_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantEntry {
    pub name: String,
    pub compensation: Compensation,
    /// CSV path relative to the manifest.
    pub csv: String,
    pub metrics: RunMetrics,
    pub fault: Option<FaultRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: &'static str,
    pub tool: ToolInfo,
    pub scenario: ScenarioInfo,
    pub operating_point: OperatingPoint,
    pub csv_schema_version: u32,
    pub columns: Vec<&'static str>,
    pub variants: Vec<VariantEntry>,
    /// Ablation table path relative to the manifest.
    pub table: Option<String>,
}

impl Manifest {
    pub fn has_fault(&self) -> bool {
        self.variants.iter().any(|v| v.fault.is_some())
    }
}

fn scenario_info(scn: &Scenario, path: Option<&Path>) -> ScenarioInfo {
    let (maps, maps_sha256) = match &scn.map_source {
        MapSource::Synthetic => ("synthetic".to_string(), None),
        MapSource::File { path, sha256 } => (path.display().to_string(), Some(sha256.clone())),
    };
    ScenarioInfo {
        name: scn.config.name.clone(),
        path: path.map(Path::to_path_buf),
        config_sha256: scn.config.hash(),
        seed: scn.config.seed,
        maps,
        maps_sha256,
    }
}

fn manifest(kind: &'static str, scn: &Scenario, path: Option<&Path>, op: OperatingPoint) -> Manifest {
    Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        kind,
        tool: ToolInfo {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        },
        scenario: scenario_info(scn, path),
        operating_point: op,
        csv_schema_version: CSV_SCHEMA_VERSION,
        columns: COLUMNS.to_vec(),
        variants: Vec::new(),
        table: None,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest serialises");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn entry(name: &str, comp: Compensation, out: &RunOutput, dir: &Path) -> Result<VariantEntry> {
    let csv = format!("{name}.csv");
    out.log.write_csv(&dir.join(&csv))?;
    Ok(VariantEntry {
        name: name.to_string(),
        compensation: comp,
        csv,
        metrics: out.metrics.clone(),
        fault: out.log.fault.clone(),
    })
}

/// Runs the scenario as configured and writes `run.csv`, `metrics.json`
/// and `manifest.json` into `out_dir`.
pub fn write_simulation(scn: &Scenario, scenario_path: Option<&Path>, out_dir: &Path) -> Result<Manifest> {
    create_dir(out_dir)?;
    let prep = prepare(scn)?;
    let comp = scn.config.compensation;
    let out = run_prepared(
        scn,
        &prep,
        RunOptions {
            compensation: comp,
            controller_enabled: true,
        },
    );
    let mut m = manifest("simulate", scn, scenario_path, prep.op);
    m.variants.push(entry("run", comp, &out, out_dir)?);
    write_json(&out_dir.join("metrics.json"), &out.metrics)?;
    write_json(&out_dir.join("manifest.json"), &m)?;
    Ok(m)
}

/// Runs the ablation suite and writes one CSV per variant, `ablation.csv`
/// and `manifest.json` into `out_dir`.
pub fn write_ablation(scn: &Scenario, scenario_path: Option<&Path>, out_dir: &Path) -> Result<Manifest> {
    create_dir(out_dir)?;
    let report = run_ablation_suite(scn, &VARIANTS)?;
    let mut m = manifest("ablate", scn, scenario_path, report.op);
    for r in &report.runs {
        m.variants.push(entry(r.variant.name, r.variant.compensation, &r.output, out_dir)?);
    }
    let table_path = out_dir.join("ablation.csv");
    let mut w = csv::Writer::from_path(&table_path).map_err(|e| Error::Csv(format!("{}: {e}", table_path.display())))?;
    for row in report.table() {
        w.serialize(&row).map_err(|e| Error::Csv(format!("{}: {e}", table_path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&table_path, e))?;
    m.table = Some("ablation.csv".into());
    write_json(&out_dir.join("manifest.json"), &m)?;
    Ok(m)
}
