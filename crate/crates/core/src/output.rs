//! Run artifacts on disk.
//!
//! A run produces three files with stable schemas and deterministic bytes,
//! so re-running the same scenario must reproduce them bit for bit:
//!
//! * `timeseries.csv` — decimated per-phase loading, reference frequency,
//!   bus voltage magnitudes and unbalance metrics;
//! * `events.json` — the ordered event log;
//! * `summary.json` — headline metrics and per-group energy.

use crate::engine::{EventRecord, RunComparison, RunMetrics, SimulationResult};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot encode {what}: {source}")]
    Json {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const TIMESERIES_HEADER: &str = "t,S_a,S_b,S_c,f_star,V_a,V_b,V_c,PUF,VUF";

/// Render the time series as CSV text.
pub fn timeseries_csv(result: &SimulationResult) -> String {
    let s = &result.series;
    let mut out = String::with_capacity(64 * (s.len() + 1));
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    for i in 0..s.len() {
        out.push_str(&format!(
            "{:.3},{:.6},{:.6},{:.6},{:.4},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            s.t[i],
            s.s_a[i],
            s.s_b[i],
            s.s_c[i],
            s.f_star[i],
            s.v_a[i],
            s.v_b[i],
            s.v_c[i],
            s.puf[i],
            s.vuf[i],
        ));
    }
    out
}

/// The `events.json` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventsFile {
    pub schema_version: u32,
    pub scenario: String,
    pub events: Vec<EventRecord>,
}

pub fn events_json(result: &SimulationResult) -> Result<String, OutputError> {
    let doc = EventsFile {
        schema_version: 1,
        scenario: result.scenario_name.clone(),
        events: result.events.clone(),
    };
    serde_json::to_string_pretty(&doc).map_err(|source| OutputError::Json {
        what: "events",
        source,
    })
}

/// The `summary.json` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub topology_fingerprint: String,
    pub metrics: RunMetrics,
    pub group_energy_mwh: Vec<GroupEnergy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupEnergy {
    pub group: String,
    pub energy_mwh: f64,
}

impl RunSummary {
    pub fn from_result(result: &SimulationResult) -> Self {
        Self {
            schema_version: 1,
            scenario: result.scenario_name.clone(),
            seed: result.seed,
            config_fingerprint: result.fingerprint.clone(),
            topology_fingerprint: result.topology_fingerprint.clone(),
            metrics: result.metrics.clone(),
            group_energy_mwh: result
                .group_energy_mwh
                .iter()
                .map(|(group, energy)| GroupEnergy {
                    group: group.clone(),
                    energy_mwh: *energy,
                })
                .collect(),
        }
    }
}

pub fn summary_json(result: &SimulationResult) -> Result<String, OutputError> {
    serde_json::to_string_pretty(&RunSummary::from_result(result)).map_err(|source| {
        OutputError::Json {
            what: "summary",
            source,
        }
    })
}

/// Write `timeseries.csv`, `events.json` and `summary.json` into `dir`,
/// creating the directory if needed.
pub fn write_outputs(result: &SimulationResult, dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, text: String| -> Result<(), OutputError> {
        let path = dir.join(name);
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(text.as_bytes()).map_err(io_err(&path))
    };
    write("timeseries.csv", timeseries_csv(result))?;
    write("events.json", events_json(result)?)?;
    write("summary.json", summary_json(result)?)?;
    Ok(())
}

/// Render a side-by-side comparison as CSV text.
pub fn comparison_csv(cmp: &RunComparison) -> String {
    let mut out = String::with_capacity(64 * (cmp.rows.len() + 1));
    out.push_str("t,S_total_a,S_total_b,f_a,f_b,PUF_a,PUF_b,VUF_a,VUF_b\n");
    for r in &cmp.rows {
        out.push_str(&format!(
            "{:.3},{:.6},{:.6},{:.4},{:.4},{:.6},{:.6},{:.6},{:.6}\n",
            r.t,
            r.s_total_a,
            r.s_total_b,
            r.f_a,
            r.f_b,
            r.puf_a,
            r.puf_b,
            r.vuf_a,
            r.vuf_b,
        ));
    }
    out
}

pub fn write_comparison(cmp: &RunComparison, path: &Path) -> Result<(), OutputError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    fs::write(path, comparison_csv(cmp)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::scenario::scenario_from_str;

    const TINY: &str = r#"
[meta]
name = "tiny"

[sim]
horizon_s = 1.0
dt_s = 0.01
seed = 3
record_every_steps = 25

[electrical]
bess_rating_kva = 1000.0

[reserve]
mode = "none"

[profiles]
[[profiles.synth]]
id = "flat"
base_kva = 300.0

[[group]]
id = "LG1"
switch = "S1"
close_s = 0.0

[[device]]
id = "d"
group = "LG1"
phase = "abc"
kind = "non_controllable"
rated_kva = 300.0
profile = "flat"
"#;

    fn tiny_result() -> crate::engine::SimulationResult {
        run(&scenario_from_str(TINY, None).unwrap()).unwrap()
    }

    #[test]
    fn timeseries_rows_follow_the_frozen_format() {
        let result = tiny_result();
        let csv = timeseries_csv(&result);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TIMESERIES_HEADER);
        assert_eq!(lines.len(), 1 + 4); // 100 steps, every 25th recorded
        // 300 kVA spread over three phases on a 1000 kVA per-phase base.
        assert_eq!(
            lines[1],
            "0.000,0.100000,0.100000,0.100000,60.0000,1.000000,1.000000,1.000000,0.000000,0.000000"
        );
        assert!(lines[2].starts_with("0.250,0.100000,"));
    }

    #[test]
    fn summary_round_trips_through_json() {
        let result = tiny_result();
        let text = summary_json(&result).unwrap();
        let back: RunSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, RunSummary::from_result(&result));
        assert_eq!(back.schema_version, 1);
        assert_eq!(back.metrics, result.metrics);
        assert_eq!(back.group_energy_mwh.len(), 1);
    }

    #[test]
    fn events_round_trip_and_rerun_is_byte_identical() {
        let a = events_json(&tiny_result()).unwrap();
        let b = events_json(&tiny_result()).unwrap();
        assert_eq!(a, b);
        let doc: EventsFile = serde_json::from_str(&a).unwrap();
        assert_eq!(doc.scenario, "tiny");
        assert_eq!(doc.events.len(), 1); // just the S1 closure
        assert_eq!(doc.events[0].subject, "S1");
    }

    #[test]
    fn write_outputs_creates_all_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("runs/tiny");
        write_outputs(&tiny_result(), &nested).unwrap();
        for name in ["timeseries.csv", "events.json", "summary.json"] {
            let path = nested.join(name);
            assert!(path.is_file(), "{name} missing");
            assert!(fs::metadata(&path).unwrap().len() > 0);
        }
    }

    #[test]
    fn comparison_csv_aligns_runs() {
        let a = tiny_result();
        let b = tiny_result();
        let cmp = crate::engine::compare_runs(&a, &b).unwrap();
        let csv = comparison_csv(&cmp);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,S_total_a,S_total_b,f_a,f_b,PUF_a,PUF_b,VUF_a,VUF_b");
        assert_eq!(
            lines[1],
            "0.000,0.300000,0.300000,60.0000,60.0000,0.000000,0.000000,0.000000,0.000000"
        );
    }
}
