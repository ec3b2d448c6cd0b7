//! Scenario files: parsing, validation, overrides and fingerprints.
//!
//! A scenario is a single TOML document describing the plant (converter
//! rating, feeder constants, groups, devices, profiles) and the control
//! configuration (reserve supervision mode, setpoints, device timing).
//! Parsing is strict: unknown keys are rejected, and validation reports
//! *every* problem it can find in one pass rather than stopping at the
//! first, so a scenario can be fixed in one edit cycle.

use crate::grid::{
    DeviceKind, DutyCycle, FeederElectrical, LoadDevice, LoadGroup, MotorLoad, Topology,
};
use crate::phase::{FrequencyHz, PhaseAttachment, PhaseTriplet};
use crate::profiles::{load_profiles, synth_profiles, LoadProfileSet, ProfileError, SynthProfileSpec};
use crate::reserve::{ControlMode, ReserveParams};
use crate::shedding::max_tripping_delay_bound;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario failed validation:\n{}", format_issues(.0))]
    Invalid(Vec<String>),
    #[error("override path {0}")]
    OverridePath(String),
    #[error("override value {0}")]
    OverrideValue(String),
    #[error("cannot load profile data: {0}")]
    Profile(#[from] ProfileError),
    #[error("cannot serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
}

fn format_issues(issues: &[String]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

// ---------------------------------------------------------------------------
// Raw document shape (mirrors the TOML structure one to one)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    meta: RawMeta,
    sim: RawSim,
    electrical: RawElectrical,
    reserve: RawReserve,
    #[serde(default)]
    ufls: RawUfls,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topology: Option<RawTopology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motor: Option<RawMotor>,
    profiles: RawProfiles,
    #[serde(rename = "group")]
    groups: Vec<RawGroup>,
    #[serde(rename = "device", default)]
    devices: Vec<RawDevice>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    name: String,
    #[serde(default)]
    description: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    horizon_s: f64,
    dt_s: f64,
    seed: u64,
    #[serde(default = "one")]
    record_every_steps: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElectrical {
    bess_rating_kva: f64,
    #[serde(default = "default_resistance")]
    feeder_resistance_pu: f64,
    #[serde(default = "default_reactance")]
    feeder_reactance_pu: f64,
    #[serde(default = "default_sag_gain")]
    voltage_sag_gain: f64,
    #[serde(default = "default_voltage_tau")]
    voltage_time_constant_s: f64,
}

fn default_resistance() -> f64 {
    0.01
}
fn default_reactance() -> f64 {
    0.05
}
fn default_sag_gain() -> f64 {
    0.03
}
fn default_voltage_tau() -> f64 {
    0.2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReserve {
    /// "none", "per_phase" or "sectionalizer".
    mode: String,
    #[serde(default = "default_s_pr")]
    s_pr: f64,
    #[serde(default = "default_s_th_low")]
    s_th_low: f64,
    #[serde(default = "default_ds_th")]
    ds_th: f64,
    #[serde(default = "default_tau_trigger_normal")]
    tau_trigger_normal_s: f64,
    #[serde(default = "default_tau_trigger_motor")]
    tau_trigger_motor_s: f64,
    #[serde(default = "default_tau_th_rec")]
    tau_th_rec_s: f64,
    #[serde(default = "default_tau_th_f")]
    tau_th_f_s: f64,
    #[serde(default = "default_f_ramp")]
    f_ramp_hz_per_s: f64,
    /// Defaults to one simulation step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rocolp_window_s: Option<f64>,
    #[serde(default = "default_stage_dwell")]
    stage_dwell_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stages_hz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_setpoints_hz: Option<[f64; 3]>,
}

fn default_s_pr() -> f64 {
    0.1
}
fn default_s_th_low() -> f64 {
    0.87
}
fn default_ds_th() -> f64 {
    0.5
}
fn default_tau_trigger_normal() -> f64 {
    0.02
}
fn default_tau_trigger_motor() -> f64 {
    10.0
}
fn default_tau_th_rec() -> f64 {
    0.02
}
fn default_tau_th_f() -> f64 {
    1.0
}
fn default_f_ramp() -> f64 {
    0.5
}
fn default_stage_dwell() -> f64 {
    15.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawUfls {
    deadband_hz: f64,
    tau1_max_s: f64,
    tau2_s: f64,
    tau_rand_max_s: f64,
}

impl Default for RawUfls {
    fn default() -> Self {
        Self {
            deadband_hz: 0.05,
            tau1_max_s: 10.0,
            tau2_s: 900.0,
            tau_rand_max_s: 180.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tie_switch: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    id: String,
    switch: String,
    close_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ufls_setpoint_hz: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    id: String,
    group: String,
    phase: PhaseAttachment,
    kind: DeviceKind,
    rated_kva: f64,
    profile: String,
    /// Expands into `count` devices named `{id}_1` .. `{id}_count`, each
    /// with its own random substream but shared parameters.
    #[serde(default = "one")]
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duty: Option<RawDuty>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDuty {
    period_s: f64,
    on_fraction: f64,
    #[serde(default)]
    offset_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMotor {
    group: String,
    rated_kva: f64,
    surge_multiplier: f64,
    surge_duration_s: f64,
    running_fraction: f64,
    start_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfiles {
    #[serde(default = "default_spacing")]
    spacing_s: f64,
    /// Path to a CSV file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    synth: Vec<SynthProfileSpec>,
}

fn default_spacing() -> f64 {
    10.0
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

/// Device trip/restore timing shared by every participating device; the
/// per-device trigger setpoints are derived from the control mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UflsTimings {
    pub deadband_hz: f64,
    pub tau1_max_s: f64,
    pub tau2_s: f64,
    pub tau_rand_max_s: f64,
}

/// Fully resolved, validated scenario ready to simulate.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub horizon_s: f64,
    pub dt_s: f64,
    pub seed: u64,
    pub record_every_steps: usize,
    pub electrical: FeederElectrical,
    pub reserve: ReserveParams,
    pub ufls: UflsTimings,
    pub topology: Topology,
    pub devices: Vec<LoadDevice>,
    pub motor: Option<MotorLoad>,
    pub profiles: LoadProfileSet,
    raw: RawScenario,
}

/// Parse scenario text into a TOML value without interpreting it. Syntax
/// errors carry line/column positions from the TOML parser.
pub fn parse_scenario_str(text: &str) -> Result<toml::Value, ScenarioError> {
    Ok(text.parse::<toml::Value>()?)
}

/// Read, parse and resolve a scenario file. Profile CSV paths are taken
/// relative to the scenario's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = fs::read_to_string(path)?;
    let value = parse_scenario_str(&text)?;
    resolve_scenario(value, path.parent())
}

/// Parse and resolve a scenario from text (tests and embedded scenarios).
pub fn scenario_from_str(text: &str, base_dir: Option<&Path>) -> Result<ScenarioConfig, ScenarioError> {
    resolve_scenario(parse_scenario_str(text)?, base_dir)
}

/// Parse one `path=value` override. Values use TOML literal syntax; a bare
/// word that is not valid TOML is taken as a string, so
/// `reserve.mode=per_phase` works without extra quoting.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value), ScenarioError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        ScenarioError::OverrideValue(format!("`{spec}` is not of the form path=value"))
    })?;
    let (path, raw) = (path.trim(), raw.trim());
    if path.is_empty() {
        return Err(ScenarioError::OverrideValue(format!(
            "`{spec}` has an empty path"
        )));
    }
    let parsed: Result<toml::Value, _> = format!("v = {raw}").parse();
    let value = match parsed {
        Ok(doc) => doc.get("v").cloned().ok_or_else(|| {
            ScenarioError::OverrideValue(format!("`{raw}` did not parse to a value"))
        })?,
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((path.to_string(), value))
}

/// Replace the value at a dotted `path` (array elements addressed by
/// index, e.g. `group.2.close_s`). The path must already exist in the
/// document; creating new keys through overrides is not allowed, which
/// catches typos before they silently do nothing.
pub fn apply_override(
    root: &mut toml::Value,
    path: &str,
    value: toml::Value,
) -> Result<(), ScenarioError> {
    let segments: Vec<&str> = path.split('.').collect();
    let mut cursor = root;
    for (i, seg) in segments.iter().enumerate() {
        let here = cursor;
        let slot = if let Ok(idx) = seg.parse::<usize>() {
            let arr = here.as_array_mut().ok_or_else(|| {
                ScenarioError::OverridePath(format!(
                    "`{path}`: `{}` is not an array",
                    segments[..i].join(".")
                ))
            })?;
            let len = arr.len();
            arr.get_mut(idx).ok_or_else(|| {
                ScenarioError::OverridePath(format!(
                    "`{path}`: index {idx} is out of range (length {len})"
                ))
            })?
        } else {
            let table = here.as_table_mut().ok_or_else(|| {
                ScenarioError::OverridePath(format!(
                    "`{path}`: `{}` is not a table",
                    segments[..i].join(".")
                ))
            })?;
            table.get_mut(*seg).ok_or_else(|| {
                ScenarioError::OverridePath(format!(
                    "`{path}`: the scenario has no key `{seg}` here"
                ))
            })?
        };
        if i + 1 == segments.len() {
            // Keep float-typed fields float when the override was typed
            // as a bare integer.
            *slot = match (&slot, value) {
                (toml::Value::Float(_), toml::Value::Integer(n)) => toml::Value::Float(n as f64),
                (_, other) => other,
            };
            return Ok(());
        }
        cursor = slot;
    }
    Err(ScenarioError::OverridePath(format!("`{path}` is empty")))
}

/// Apply a batch of `path=value` override specs in order.
pub fn apply_overrides(root: &mut toml::Value, specs: &[String]) -> Result<(), ScenarioError> {
    for spec in specs {
        let (path, value) = parse_override(spec)?;
        apply_override(root, &path, value)?;
    }
    Ok(())
}

/// Interpret and validate a parsed document into a runnable configuration.
pub fn resolve_scenario(
    value: toml::Value,
    base_dir: Option<&Path>,
) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = value.try_into()?;
    let mut issues = validate(&raw);

    // Profile data. Structural problems above already doomed the scenario;
    // still try to surface reference errors together with them when the
    // profile source is self-contained.
    let profiles = match build_profiles(&raw, base_dir) {
        Ok(set) => Some(set),
        Err(e) => {
            issues.push(format!("profiles: {e}"));
            None
        }
    };
    if let Some(set) = &profiles {
        if set.sample_times().first().is_some_and(|&t0| t0 > 0.0) {
            issues.push(format!(
                "profiles: data starts at t = {} s but the simulation starts at t = 0",
                set.sample_times()[0]
            ));
        }
        for dev in &raw.devices {
            if set.index_of(&dev.profile).is_none() {
                issues.push(format!(
                    "device `{}` references unknown profile `{}`",
                    dev.id, dev.profile
                ));
            }
        }
    }
    if !issues.is_empty() {
        return Err(ScenarioError::Invalid(issues));
    }
    let profiles = profiles.expect("profile issues already handled");

    // Topology and groups.
    let groups: Vec<LoadGroup> = raw
        .groups
        .iter()
        .map(|g| LoadGroup {
            id: g.id.clone(),
            switch: g.switch.clone(),
            close_s: g.close_s,
            ufls_setpoint: g.ufls_setpoint_hz.map(FrequencyHz),
        })
        .collect();
    let topology = Topology {
        groups,
        tie_switch: raw.topology.as_ref().and_then(|t| t.tie_switch.clone()),
    };

    // Devices, with count expansion.
    let mut devices = Vec::new();
    for dev in &raw.devices {
        let group = topology
            .groups
            .iter()
            .position(|g| g.id == dev.group)
            .expect("validated group reference");
        let profile = profiles
            .index_of(&dev.profile)
            .expect("validated profile reference");
        let duty = dev.duty.as_ref().map(|d| DutyCycle {
            period_s: d.period_s,
            on_fraction: d.on_fraction,
            offset_s: d.offset_s,
        });
        for k in 1..=dev.count {
            let id = if dev.count == 1 {
                dev.id.clone()
            } else {
                format!("{}_{k}", dev.id)
            };
            devices.push(LoadDevice {
                id,
                group,
                attachment: dev.phase,
                kind: dev.kind,
                rated_kva: dev.rated_kva,
                profile,
                duty,
            });
        }
    }

    let motor = raw.motor.as_ref().map(|m| MotorLoad {
        group: topology
            .groups
            .iter()
            .position(|g| g.id == m.group)
            .expect("validated motor group"),
        rated_kva: m.rated_kva,
        surge_multiplier: m.surge_multiplier,
        surge_duration_s: m.surge_duration_s,
        running_fraction: m.running_fraction,
        start_s: m.start_s,
    });

    let electrical = FeederElectrical {
        base_kva: raw.electrical.bess_rating_kva,
        feeder_resistance_pu: raw.electrical.feeder_resistance_pu,
        feeder_reactance_pu: raw.electrical.feeder_reactance_pu,
        voltage_sag_gain: raw.electrical.voltage_sag_gain,
        voltage_time_constant_s: raw.electrical.voltage_time_constant_s,
    };

    let mode = match raw.reserve.mode.as_str() {
        "none" => ControlMode::Disabled,
        "per_phase" => {
            let sp = raw.reserve.phase_setpoints_hz.expect("validated");
            ControlMode::PerPhase {
                setpoints: PhaseTriplet::new(
                    FrequencyHz(sp[0]),
                    FrequencyHz(sp[1]),
                    FrequencyHz(sp[2]),
                ),
            }
        }
        "sectionalizer" => ControlMode::Sectionalizer {
            stages: raw
                .reserve
                .stages_hz
                .as_ref()
                .expect("validated")
                .iter()
                .copied()
                .map(FrequencyHz)
                .collect(),
            stage_dwell_s: raw.reserve.stage_dwell_s,
        },
        _ => unreachable!("validated mode"),
    };
    let reserve = ReserveParams {
        s_pr: raw.reserve.s_pr,
        s_th_low: raw.reserve.s_th_low,
        ds_th: raw.reserve.ds_th,
        tau_trigger_normal_s: raw.reserve.tau_trigger_normal_s,
        tau_trigger_motor_s: raw.reserve.tau_trigger_motor_s,
        tau_th_rec_s: raw.reserve.tau_th_rec_s,
        tau_th_f_s: raw.reserve.tau_th_f_s,
        f_ramp_hz_per_s: raw.reserve.f_ramp_hz_per_s,
        rocolp_window_s: raw.reserve.rocolp_window_s.unwrap_or(raw.sim.dt_s),
        mode,
    };
    let ufls = UflsTimings {
        deadband_hz: raw.ufls.deadband_hz,
        tau1_max_s: raw.ufls.tau1_max_s,
        tau2_s: raw.ufls.tau2_s,
        tau_rand_max_s: raw.ufls.tau_rand_max_s,
    };

    Ok(ScenarioConfig {
        name: raw.meta.name.clone(),
        description: raw.meta.description.clone(),
        horizon_s: raw.sim.horizon_s,
        dt_s: raw.sim.dt_s,
        seed: raw.sim.seed,
        record_every_steps: raw.sim.record_every_steps,
        electrical,
        reserve,
        ufls,
        topology,
        devices,
        motor,
        profiles,
        raw,
    })
}

fn build_profiles(
    raw: &RawScenario,
    base_dir: Option<&Path>,
) -> Result<LoadProfileSet, ScenarioError> {
    match (&raw.profiles.csv, raw.profiles.synth.is_empty()) {
        (Some(path), true) => {
            let full: PathBuf = match base_dir {
                Some(dir) => dir.join(path),
                None => PathBuf::from(path),
            };
            let file = fs::File::open(&full)
                .map_err(|e| ScenarioError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", full.display()))))?;
            Ok(load_profiles(file)?)
        }
        (None, false) => Ok(synth_profiles(
            &raw.profiles.synth,
            raw.profiles.spacing_s,
            raw.sim.horizon_s,
            raw.sim.seed,
        )),
        (Some(_), false) => Err(ScenarioError::Invalid(vec![
            "use either profiles.csv or [[profiles.synth]] entries, not both".into(),
        ])),
        (None, true) => Err(ScenarioError::Invalid(vec![
            "no profile source: provide profiles.csv or [[profiles.synth]] entries".into(),
        ])),
    }
}

/// Structural validation. Returns every issue found; an empty list means
/// the scenario is acceptable.
fn validate(raw: &RawScenario) -> Vec<String> {
    let mut issues = Vec::new();
    let mut push = |msg: String| issues.push(msg);

    if raw.meta.name.trim().is_empty() {
        push("meta.name must not be empty".into());
    }
    if !(raw.sim.dt_s > 0.0 && raw.sim.dt_s <= 1.0) {
        push(format!("sim.dt_s ({}) must be in (0, 1]", raw.sim.dt_s));
    }
    if !(raw.sim.horizon_s > 0.0) || raw.sim.horizon_s < raw.sim.dt_s {
        push(format!(
            "sim.horizon_s ({}) must be positive and at least one step",
            raw.sim.horizon_s
        ));
    }
    if raw.sim.record_every_steps == 0 {
        push("sim.record_every_steps must be at least 1".into());
    }
    if !(raw.electrical.bess_rating_kva > 0.0) {
        push(format!(
            "electrical.bess_rating_kva ({}) must be positive",
            raw.electrical.bess_rating_kva
        ));
    }
    if raw.electrical.voltage_sag_gain < 0.0 {
        push("electrical.voltage_sag_gain must not be negative".into());
    }
    if !(raw.electrical.voltage_time_constant_s > 0.0) {
        push("electrical.voltage_time_constant_s must be positive".into());
    }

    // Reserve supervision.
    let r = &raw.reserve;
    if !(r.s_pr > 0.0 && r.s_pr < 1.0) {
        push(format!("reserve.s_pr ({}) must be in (0, 1)", r.s_pr));
    }
    let upper = 1.0 - r.s_pr;
    if !(r.s_th_low > 0.0 && r.s_th_low < upper) {
        push(format!(
            "reserve.s_th_low ({}) must lie below the trigger threshold 1 - s_pr = {upper}",
            r.s_th_low
        ));
    }
    if !(r.ds_th > 0.0) {
        push(format!("reserve.ds_th ({}) must be positive", r.ds_th));
    }
    for (name, v) in [
        ("tau_trigger_normal_s", r.tau_trigger_normal_s),
        ("tau_trigger_motor_s", r.tau_trigger_motor_s),
        ("tau_th_rec_s", r.tau_th_rec_s),
        ("tau_th_f_s", r.tau_th_f_s),
    ] {
        if !(v > 0.0) {
            push(format!("reserve.{name} ({v}) must be positive"));
        }
    }
    if !(r.f_ramp_hz_per_s > 0.0) {
        push(format!(
            "reserve.f_ramp_hz_per_s ({}) must be positive",
            r.f_ramp_hz_per_s
        ));
    }
    if let Some(w) = r.rocolp_window_s {
        if !(w > 0.0) {
            push(format!("reserve.rocolp_window_s ({w}) must be positive"));
        }
    }

    // Device timing.
    let u = &raw.ufls;
    if !(u.deadband_hz > 0.0) {
        push(format!("ufls.deadband_hz ({}) must be positive", u.deadband_hz));
    }
    if !(u.tau1_max_s > 0.0) {
        push(format!("ufls.tau1_max_s ({}) must be positive", u.tau1_max_s));
    }
    if u.tau2_s < 0.0 {
        push("ufls.tau2_s must not be negative".into());
    }
    if u.tau_rand_max_s < 0.0 {
        push("ufls.tau_rand_max_s must not be negative".into());
    }

    // Groups and topology.
    if raw.groups.is_empty() {
        push("at least one [[group]] is required".into());
    }
    for (i, g) in raw.groups.iter().enumerate() {
        if g.id.trim().is_empty() {
            push(format!("group #{}: id must not be empty", i + 1));
        }
        if g.close_s < 0.0 {
            push(format!("group `{}`: close_s must not be negative", g.id));
        }
        if raw.groups[..i].iter().any(|o| o.id == g.id) {
            push(format!("duplicate group id `{}`", g.id));
        }
        if raw.groups[..i].iter().any(|o| o.switch == g.switch) {
            push(format!("switch `{}` feeds more than one group", g.switch));
        }
    }
    if let Some(tie) = raw.topology.as_ref().and_then(|t| t.tie_switch.as_ref()) {
        if raw.groups.iter().any(|g| &g.switch == tie) {
            push(format!(
                "tie switch `{tie}` collides with a group sectionalizer"
            ));
        }
    }

    // Control-mode specifics and the set of setpoints the broadcast signal
    // can park at.
    let mut setpoints: Vec<f64> = Vec::new();
    match r.mode.as_str() {
        "none" => {
            if r.stages_hz.is_some() || r.phase_setpoints_hz.is_some() {
                push("reserve.mode \"none\" does not take stages_hz or phase_setpoints_hz".into());
            }
        }
        "per_phase" => match r.phase_setpoints_hz {
            Some(sp) => {
                setpoints.extend_from_slice(&sp);
                for (i, a) in sp.iter().enumerate() {
                    for b in sp.iter().skip(i + 1) {
                        if (a - b).abs() <= 2.0 * u.deadband_hz {
                            push(format!(
                                "phase setpoints {a} Hz and {b} Hz are closer than two deadbands; \
                                 their trip bands overlap"
                            ));
                        }
                    }
                }
            }
            None => push("reserve.mode \"per_phase\" requires reserve.phase_setpoints_hz".into()),
        },
        "sectionalizer" => match &r.stages_hz {
            Some(stages) if stages.is_empty() => {
                push("reserve.stages_hz must not be empty".into())
            }
            Some(stages) => {
                setpoints.extend_from_slice(stages);
                if !(r.stage_dwell_s > 0.0) {
                    push(format!(
                        "reserve.stage_dwell_s ({}) must be positive",
                        r.stage_dwell_s
                    ));
                }
                if r.stage_dwell_s <= u.tau1_max_s {
                    push(format!(
                        "reserve.stage_dwell_s ({}) must exceed ufls.tau1_max_s ({}); otherwise \
                         the ladder escalates before devices at the current stage have had a \
                         chance to trip",
                        r.stage_dwell_s, u.tau1_max_s
                    ));
                }
                for w in stages.windows(2) {
                    if w[1] >= w[0] {
                        push(format!(
                            "reserve.stages_hz must be strictly decreasing ({} then {})",
                            w[0], w[1]
                        ));
                    } else if w[0] - w[1] <= 2.0 * u.deadband_hz {
                        push(format!(
                            "stages {} Hz and {} Hz are closer than two deadbands; their trip \
                             bands overlap",
                            w[0], w[1]
                        ));
                    }
                }
                for s in stages {
                    let matched = raw
                        .groups
                        .iter()
                        .any(|g| g.ufls_setpoint_hz.is_some_and(|sp| (sp - s).abs() < 1e-9));
                    if !matched {
                        push(format!(
                            "stage {s} Hz has no group with that trip setpoint; the signal would \
                             park there with nothing listening"
                        ));
                    }
                }
            }
            None => push("reserve.mode \"sectionalizer\" requires reserve.stages_hz".into()),
        },
        other => push(format!(
            "reserve.mode `{other}` is not one of \"none\", \"per_phase\", \"sectionalizer\""
        )),
    }
    setpoints.extend(raw.groups.iter().filter_map(|g| g.ufls_setpoint_hz));

    // Every configured setpoint must sit where the protection-curve bound
    // is defined, and the worst-case tripping delay must clear the bound
    // at the deepest one.
    let mut domain_ok = true;
    for sp in &setpoints {
        if !(57.0..=60.0).contains(sp) {
            push(format!(
                "setpoint {sp} Hz is outside the 57-60 Hz domain of the tripping-delay bound"
            ));
            domain_ok = false;
        }
    }
    if domain_ok {
        if let Some(min_sp) = setpoints.iter().copied().reduce(f64::min) {
            if let Ok(bound) = max_tripping_delay_bound(FrequencyHz(min_sp)) {
                if u.tau1_max_s >= bound {
                    push(format!(
                        "ufls.tau1_max_s ({}) violates the stability bound: at the deepest \
                         setpoint {min_sp} Hz the maximum tripping delay must stay below \
                         {bound:.3} s",
                        u.tau1_max_s
                    ));
                }
            }
        }
    }

    // Devices.
    let mut expanded: Vec<String> = Vec::new();
    for dev in &raw.devices {
        if dev.id.trim().is_empty() {
            push("device with empty id".into());
        }
        if dev.count == 0 {
            push(format!("device `{}`: count must be at least 1", dev.id));
        }
        if !(dev.rated_kva > 0.0) {
            push(format!("device `{}`: rated_kva must be positive", dev.id));
        }
        if !raw.groups.iter().any(|g| g.id == dev.group) {
            push(format!(
                "device `{}` references unknown group `{}`",
                dev.id, dev.group
            ));
        }
        if let Some(d) = &dev.duty {
            if !(d.period_s > 0.0) {
                push(format!("device `{}`: duty.period_s must be positive", dev.id));
            }
            if !(0.0..=1.0).contains(&d.on_fraction) {
                push(format!(
                    "device `{}`: duty.on_fraction must be within [0, 1]",
                    dev.id
                ));
            }
        }
        for k in 1..=dev.count.max(1) {
            let id = if dev.count <= 1 {
                dev.id.clone()
            } else {
                format!("{}_{k}", dev.id)
            };
            if expanded.contains(&id) {
                push(format!("duplicate device id `{id}` after count expansion"));
            }
            expanded.push(id);
        }
    }

    // Motor.
    if let Some(m) = &raw.motor {
        if !raw.groups.iter().any(|g| g.id == m.group) {
            push(format!("motor references unknown group `{}`", m.group));
        }
        if !(m.rated_kva > 0.0) {
            push("motor.rated_kva must be positive".into());
        }
        if m.surge_multiplier < 1.0 {
            push(format!(
                "motor.surge_multiplier ({}) must be at least 1",
                m.surge_multiplier
            ));
        }
        if m.surge_duration_s < 0.0 {
            push("motor.surge_duration_s must not be negative".into());
        }
        if !(0.0..=1.0).contains(&m.running_fraction) {
            push(format!(
                "motor.running_fraction ({}) must be within [0, 1]",
                m.running_fraction
            ));
        }
        if m.start_s < 0.0 {
            push("motor.start_s must not be negative".into());
        }
    }

    // Profiles (structure only; data loading happens afterwards).
    if !(raw.profiles.spacing_s > 0.0) {
        push(format!(
            "profiles.spacing_s ({}) must be positive",
            raw.profiles.spacing_s
        ));
    }
    for (i, spec) in raw.profiles.synth.iter().enumerate() {
        if spec.id.trim().is_empty() {
            push(format!("profiles.synth #{}: id must not be empty", i + 1));
        }
        if spec.base_kva < 0.0 {
            push(format!("profile `{}`: base_kva must not be negative", spec.id));
        }
        if spec.noise_kva < 0.0 {
            push(format!("profile `{}`: noise_kva must not be negative", spec.id));
        }
        if raw.profiles.synth[..i].iter().any(|o| o.id == spec.id) {
            push(format!("duplicate profile id `{}`", spec.id));
        }
    }

    issues
}

impl ScenarioConfig {
    /// Canonical TOML rendering: defaults filled in, key order fixed.
    /// Parsing the canonical form and re-rendering it yields the same text.
    pub fn canonical_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(&self.raw)?)
    }

    /// Hash of the full canonical scenario; two runs with equal
    /// fingerprints are byte-for-byte reproducible.
    pub fn fingerprint(&self) -> String {
        let canonical = self.canonical_toml().expect("canonical form serializes");
        hex_digest(canonical.as_bytes())
    }

    /// Hash of the plant alone: timing grid, electrical constants, groups
    /// (minus their trip setpoints), devices, motor and profiles. Control
    /// configuration and the seed are excluded, so runs that differ only
    /// in supervision strategy share a topology fingerprint and can be
    /// compared series against series.
    pub fn topology_fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct PlantView<'a> {
            horizon_s: f64,
            dt_s: f64,
            record_every_steps: usize,
            electrical: &'a RawElectrical,
            groups: Vec<(&'a str, &'a str, f64)>,
            tie_switch: Option<&'a str>,
            motor: &'a Option<RawMotor>,
            profiles: &'a RawProfiles,
            devices: &'a [RawDevice],
        }
        let view = PlantView {
            horizon_s: self.raw.sim.horizon_s,
            dt_s: self.raw.sim.dt_s,
            record_every_steps: self.raw.sim.record_every_steps,
            electrical: &self.raw.electrical,
            groups: self
                .raw
                .groups
                .iter()
                .map(|g| (g.id.as_str(), g.switch.as_str(), g.close_s))
                .collect(),
            tie_switch: self
                .raw
                .topology
                .as_ref()
                .and_then(|t| t.tie_switch.as_deref()),
            motor: &self.raw.motor,
            profiles: &self.raw.profiles,
            devices: &self.raw.devices,
        };
        hex_digest(serde_json::to_vec(&view).expect("plant view serializes").as_slice())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}
