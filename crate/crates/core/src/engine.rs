//! Fixed-step simulation engine.
//!
//! Each tick advances the world in a fixed order so that runs are exactly
//! reproducible:
//!
//! 1. the black-start schedule closes sectionalizers whose time has come;
//! 2. feeder connectivity is evaluated using the relay states decided on
//!    the *previous* tick (devices react to the grid, never within-tick);
//! 3. energized, effectively-on loads are aggregated per phase;
//! 4. the reserve supervisor runs and broadcasts the frequency reference;
//! 5. every powered shedding controller advances against that reference;
//! 6. the voltage model, metrics and recorders observe the step.
//!
//! All randomness comes from per-entity substreams of the scenario seed,
//! so device order, thread count and recording rate can never change the
//! outcome.

use crate::grid::{
    aggregate_with_groups, BusVoltages, GridError, VoltageModel,
};
use crate::phase::{puf, vuf, Phase, PhaseTriplet, NOMINAL_HZ};
use crate::profiles::ProfileError;
use crate::reserve::{step_bess, BessControllerState, ReserveEvent};
use crate::rng::substream_rng;
use crate::scenario::ScenarioConfig;
use crate::shedding::{
    step_device, ShedTransition, TriggerSetpoints, UflsDeviceState, UflsParams,
};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("simulation aborted at t = {t} s: {reason}")]
    Aborted { t: f64, reason: String },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("runs are not comparable: {0}")]
    NotComparable(String),
}

/// What happened in a run, one record per occurrence, in deterministic
/// order (time, then a fixed within-tick sequence).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub seq: u64,
    pub kind: EventKind,
    /// Switch id, device id, or "bess" for supervisor decisions.
    pub subject: String,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SwitchClosed,
    FreqTrigger,
    SetpointChange,
    RecoveryStart,
    ReserveExhausted,
    Shed,
    Restore,
}

/// Headline numbers for a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub energy_served_mwh: f64,
    pub max_freq_deviation_hz: f64,
    pub max_pcc_voltage_deviation_pu: f64,
    pub puf_mean: f64,
    pub puf_max: f64,
    pub vuf_mean_percent: f64,
    pub vuf_max_percent: f64,
    /// Number of confirmed reserve-shortfall episodes.
    pub ufls_event_count: usize,
    /// Autonomous responders configured by the control mode.
    pub device_count_participating: usize,
}

/// Decimated time series of the run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesBundle {
    pub t: Vec<f64>,
    pub s_a: Vec<f64>,
    pub s_b: Vec<f64>,
    pub s_c: Vec<f64>,
    pub f_star: Vec<f64>,
    pub v_a: Vec<f64>,
    pub v_b: Vec<f64>,
    pub v_c: Vec<f64>,
    /// 0.0 where undefined (no load served).
    pub puf: Vec<f64>,
    pub vuf: Vec<f64>,
}

impl SeriesBundle {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Effective on/off state of every device at each recorded sample, packed
/// eight devices per byte.
#[derive(Clone, Debug, PartialEq)]
pub struct OnOffSeries {
    pub device_ids: Vec<String>,
    row_bytes: usize,
    bits: Vec<u8>,
}

impl OnOffSeries {
    fn new(device_ids: Vec<String>) -> Self {
        let row_bytes = device_ids.len().div_ceil(8);
        Self {
            device_ids,
            row_bytes,
            bits: Vec::new(),
        }
    }

    fn push_row(&mut self, states: &[bool]) {
        debug_assert_eq!(states.len(), self.device_ids.len());
        let start = self.bits.len();
        self.bits.resize(start + self.row_bytes, 0);
        for (i, &on) in states.iter().enumerate() {
            if on {
                self.bits[start + i / 8] |= 1 << (i % 8);
            }
        }
    }

    pub fn samples(&self) -> usize {
        if self.row_bytes == 0 {
            0
        } else {
            self.bits.len() / self.row_bytes
        }
    }

    pub fn get(&self, sample: usize, device: usize) -> bool {
        let byte = self.bits[sample * self.row_bytes + device / 8];
        byte & (1 << (device % 8)) != 0
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub scenario_name: String,
    pub seed: u64,
    pub fingerprint: String,
    pub topology_fingerprint: String,
    pub metrics: RunMetrics,
    /// Energy served per group, in group order, MWh.
    pub group_energy_mwh: Vec<(String, f64)>,
    pub events: Vec<EventRecord>,
    pub series: SeriesBundle,
    pub on_off: OnOffSeries,
}

enum ParticipantSite {
    /// Sectionalizer of this group; its relay gates the whole group.
    Switch { group: usize },
    /// Individual load; its relay gates only itself.
    Device { index: usize },
}

/// One autonomous shedding controller plus its private random stream.
struct Participant {
    id: String,
    site: ParticipantSite,
    params: UflsParams,
    state: UflsDeviceState,
    rng: ChaCha8Rng,
    powered: bool,
}

fn build_participants(cfg: &ScenarioConfig) -> Vec<Participant> {
    use crate::reserve::ControlMode;
    let timing = |trigger: TriggerSetpoints| UflsParams {
        trigger,
        deadband_hz: cfg.ufls.deadband_hz,
        tau1_max_s: cfg.ufls.tau1_max_s,
        fixed_tau1_s: None,
        tau2_s: cfg.ufls.tau2_s,
        tau_rand_max_s: cfg.ufls.tau_rand_max_s,
    };
    let mut participants = Vec::new();
    match &cfg.reserve.mode {
        ControlMode::Disabled => {}
        ControlMode::Sectionalizer { .. } => {
            for (g, group) in cfg.topology.groups.iter().enumerate() {
                if let Some(setpoint) = group.ufls_setpoint {
                    let params = timing(TriggerSetpoints::Single(setpoint));
                    let mut rng = substream_rng(cfg.seed, "ufls-switch", &group.switch);
                    let state = UflsDeviceState::init(&params, &mut rng);
                    participants.push(Participant {
                        id: group.switch.clone(),
                        site: ParticipantSite::Switch { group: g },
                        params,
                        state,
                        rng,
                        powered: false,
                    });
                }
            }
        }
        ControlMode::PerPhase { setpoints } => {
            for (i, dev) in cfg.devices.iter().enumerate() {
                if !dev.kind.is_controllable() {
                    continue;
                }
                let trigger = match dev.attachment.single() {
                    Some(p) => TriggerSetpoints::Single(setpoints[p]),
                    None => TriggerSetpoints::AnyOf(vec![
                        setpoints[Phase::A],
                        setpoints[Phase::B],
                        setpoints[Phase::C],
                    ]),
                };
                let params = timing(trigger);
                let mut rng = substream_rng(cfg.seed, "ufls-device", &dev.id);
                let state = UflsDeviceState::init(&params, &mut rng);
                participants.push(Participant {
                    id: dev.id.clone(),
                    site: ParticipantSite::Device { index: i },
                    params,
                    state,
                    rng,
                    powered: false,
                });
            }
        }
    }
    participants
}

/// Run a resolved scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationResult, EngineError> {
    let dt = cfg.dt_s;
    let n_steps = (cfg.horizon_s / dt).round() as usize;
    let n_groups = cfg.topology.groups.len();
    let n_devices = cfg.devices.len();

    let mut participants = build_participants(cfg);
    let switch_participant: Vec<Option<usize>> = (0..n_groups)
        .map(|g| {
            participants
                .iter()
                .position(|p| matches!(p.site, ParticipantSite::Switch { group } if group == g))
        })
        .collect();
    let device_participant: Vec<Option<usize>> = (0..n_devices)
        .map(|i| {
            participants
                .iter()
                .position(|p| matches!(p.site, ParticipantSite::Device { index } if index == i))
        })
        .collect();

    // Prime the aggregation at t = 0 so the supervisor's step-change
    // detector and the voltage model start from the actual initial load
    // rather than an artificial jump out of nowhere.
    let initial = {
        let scheduled: Vec<bool> = cfg.topology.groups.iter().map(|g| 0.0 >= g.close_s).collect();
        let live = cfg.topology.live_groups(&scheduled);
        let on: Vec<bool> = cfg
            .devices
            .iter()
            .map(|d| d.duty.as_ref().is_none_or(|duty| duty.is_on(0.0)))
            .collect();
        aggregate_with_groups(
            &cfg.devices,
            &on,
            &live,
            cfg.motor.as_ref(),
            &cfg.profiles,
            0.0,
            cfg.electrical.base_kva,
            0,
        )?
        .0
    };
    let mut controller = BessControllerState::new(initial);
    let mut voltage = VoltageModel::new(initial);

    let mut events: Vec<EventRecord> = Vec::new();
    let mut scheduled_prev = vec![false; n_groups];

    let mut series = SeriesBundle::default();
    let mut on_off = OnOffSeries::new(cfg.devices.iter().map(|d| d.id.clone()).collect());

    let mut energy_kvas = 0.0f64; // kVA * s
    let mut group_energy_kvas = vec![0.0f64; n_groups];
    let mut max_f_dev = 0.0f64;
    let mut max_v_dev = 0.0f64;
    let mut puf_sum = 0.0f64;
    let mut puf_n = 0usize;
    let mut puf_max = 0.0f64;
    let mut vuf_sum = 0.0f64;
    let mut vuf_n = 0usize;
    let mut vuf_max = 0.0f64;
    let mut trigger_count = 0usize;

    let mut on = vec![false; n_devices];

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let push_event = |events: &mut Vec<EventRecord>, kind, subject: String, detail: String| {
            let seq = events.len() as u64;
            events.push(EventRecord {
                t,
                seq,
                kind,
                subject,
                detail,
            });
        };

        // 1. Black-start schedule.
        let scheduled: Vec<bool> = cfg
            .topology
            .groups
            .iter()
            .map(|g| t >= g.close_s)
            .collect();
        for (g, group) in cfg.topology.groups.iter().enumerate() {
            if scheduled[g] && !scheduled_prev[g] {
                push_event(
                    &mut events,
                    EventKind::SwitchClosed,
                    group.switch.clone(),
                    format!("sectionalizer closed on schedule, feeding group {}", group.id),
                );
            }
        }

        // Switch-mounted controllers are powered from their own terminal:
        // available once the switch is scheduled in, regardless of relay
        // state. (Re)initialize on power-up.
        for (g, &sp) in switch_participant.iter().enumerate() {
            if let Some(pi) = sp {
                let p = &mut participants[pi];
                if scheduled[g] && !p.powered {
                    p.state = UflsDeviceState::init(&p.params, &mut p.rng);
                }
                p.powered = scheduled[g];
            }
        }

        // 2. Connectivity from scheduled state and relay decisions made on
        // previous ticks.
        let effective_closed: Vec<bool> = (0..n_groups)
            .map(|g| {
                scheduled[g]
                    && switch_participant[g]
                        .map(|pi| participants[pi].state.u)
                        .unwrap_or(true)
            })
            .collect();
        let live = cfg.topology.live_groups(&effective_closed);

        // Load-side controllers are powered from the outlet they guard;
        // a re-energized group comes back with fresh, re-randomized state.
        for (i, &dp) in device_participant.iter().enumerate() {
            if let Some(pi) = dp {
                let group = cfg.devices[i].group;
                let p = &mut participants[pi];
                if live[group] && !p.powered {
                    p.state = UflsDeviceState::init(&p.params, &mut p.rng);
                }
                p.powered = live[group];
            }
        }

        // 3. Effective device states and per-phase aggregation.
        for (i, dev) in cfg.devices.iter().enumerate() {
            let native = dev.duty.as_ref().is_none_or(|duty| duty.is_on(t));
            let relay = device_participant[i]
                .map(|pi| participants[pi].state.u)
                .unwrap_or(true);
            on[i] = native && relay && live[dev.group];
        }
        let (s, per_group) = aggregate_with_groups(
            &cfg.devices,
            &on,
            &live,
            cfg.motor.as_ref(),
            &cfg.profiles,
            t,
            cfg.electrical.base_kva,
            n_groups,
        )?;
        if !s.is_finite() {
            return Err(EngineError::Aborted {
                t,
                reason: "aggregate loading is not finite".into(),
            });
        }

        // 4. Reserve supervision and the broadcast reference.
        for ev in step_bess(&mut controller, &cfg.reserve, s, dt) {
            match ev {
                ReserveEvent::TriggerSet { f_set, motor_load } => {
                    trigger_count += 1;
                    let cause = if motor_load {
                        " after motor-start classification"
                    } else {
                        ""
                    };
                    push_event(
                        &mut events,
                        EventKind::FreqTrigger,
                        "bess".into(),
                        format!(
                            "reserve shortfall confirmed{cause}; reference heading to {} Hz",
                            f_set.hz()
                        ),
                    );
                }
                ReserveEvent::SetpointChanged { f_set } => push_event(
                    &mut events,
                    EventKind::SetpointChange,
                    "bess".into(),
                    format!("reference heading to {} Hz", f_set.hz()),
                ),
                ReserveEvent::RecoveryStarted => push_event(
                    &mut events,
                    EventKind::RecoveryStart,
                    "bess".into(),
                    format!("reserve recovered; reference heading to {NOMINAL_HZ} Hz"),
                ),
                ReserveEvent::Exhausted => push_event(
                    &mut events,
                    EventKind::ReserveExhausted,
                    "bess".into(),
                    "deepest stage held a full dwell without relief".into(),
                ),
            }
        }
        let f_star = controller.f_star;
        if !f_star.in_envelope() {
            return Err(EngineError::Aborted {
                t,
                reason: format!("broadcast frequency {f_star} left the sane envelope"),
            });
        }

        // 5. Autonomous device reactions to the fresh reference.
        for p in participants.iter_mut() {
            if !p.powered {
                continue;
            }
            match step_device(&mut p.state, &p.params, f_star, dt, &mut p.rng) {
                Some(ShedTransition::Tripped) => {
                    let detail = match p.site {
                        ParticipantSite::Switch { group } => format!(
                            "sectionalizer opened, shedding group {} (delay {:.2} s)",
                            cfg.topology.groups[group].id, p.state.tau1_s
                        ),
                        ParticipantSite::Device { .. } => {
                            format!("load relay opened (delay {:.2} s)", p.state.tau1_s)
                        }
                    };
                    push_event(&mut events, EventKind::Shed, p.id.clone(), detail);
                }
                Some(ShedTransition::Restored) => {
                    let detail = match p.site {
                        ParticipantSite::Switch { group } => format!(
                            "sectionalizer reclosed, restoring group {}",
                            cfg.topology.groups[group].id
                        ),
                        ParticipantSite::Device { .. } => "load relay reclosed".into(),
                    };
                    push_event(&mut events, EventKind::Restore, p.id.clone(), detail);
                }
                None => {}
            }
        }

        // 6. Voltages, metrics, recording.
        let BusVoltages { pcc, load_bus } = voltage.step(s, &cfg.electrical, dt);
        let pcc_mags = PhaseTriplet::new(pcc.a.mag(), pcc.b.mag(), pcc.c.mag());
        if !pcc_mags.is_finite() {
            return Err(EngineError::Aborted {
                t,
                reason: "bus voltages are not finite".into(),
            });
        }

        energy_kvas += s.total() * cfg.electrical.base_kva * dt;
        for (g, sg) in per_group.iter().enumerate() {
            group_energy_kvas[g] += sg.total() * cfg.electrical.base_kva * dt;
        }
        max_f_dev = max_f_dev.max((f_star.hz() - NOMINAL_HZ).abs());
        for p in Phase::ALL {
            max_v_dev = max_v_dev.max((pcc_mags[p] - 1.0).abs());
        }
        let puf_now = match puf(&s) {
            Ok(v) => {
                puf_sum += v;
                puf_n += 1;
                puf_max = puf_max.max(v);
                v
            }
            Err(_) => 0.0,
        };
        let vuf_now = match vuf(&load_bus) {
            Ok(v) => {
                vuf_sum += v;
                vuf_n += 1;
                vuf_max = vuf_max.max(v);
                v
            }
            Err(_) => 0.0,
        };

        if k % cfg.record_every_steps == 0 {
            series.t.push(t);
            series.s_a.push(s.a);
            series.s_b.push(s.b);
            series.s_c.push(s.c);
            series.f_star.push(f_star.hz());
            series.v_a.push(pcc_mags.a);
            series.v_b.push(pcc_mags.b);
            series.v_c.push(pcc_mags.c);
            series.puf.push(puf_now);
            series.vuf.push(vuf_now);
            on_off.push_row(&on);
        }

        scheduled_prev = scheduled;
    }

    let to_mwh = |kva_s: f64| kva_s / 3600.0 / 1000.0;
    let metrics = RunMetrics {
        energy_served_mwh: to_mwh(energy_kvas),
        max_freq_deviation_hz: max_f_dev,
        max_pcc_voltage_deviation_pu: max_v_dev,
        puf_mean: if puf_n > 0 { puf_sum / puf_n as f64 } else { 0.0 },
        puf_max,
        vuf_mean_percent: if vuf_n > 0 { vuf_sum / vuf_n as f64 } else { 0.0 },
        vuf_max_percent: vuf_max,
        ufls_event_count: trigger_count,
        device_count_participating: participants.len(),
    };
    let group_energy_mwh = cfg
        .topology
        .groups
        .iter()
        .zip(&group_energy_kvas)
        .map(|(g, &e)| (g.id.clone(), to_mwh(e)))
        .collect();

    Ok(SimulationResult {
        scenario_name: cfg.name.clone(),
        seed: cfg.seed,
        fingerprint: cfg.fingerprint(),
        topology_fingerprint: cfg.topology_fingerprint(),
        metrics,
        group_energy_mwh,
        events,
        series,
        on_off,
    })
}

/// One aligned sample of two compared runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub t: f64,
    pub s_total_a: f64,
    pub s_total_b: f64,
    pub f_a: f64,
    pub f_b: f64,
    pub puf_a: f64,
    pub puf_b: f64,
    pub vuf_a: f64,
    pub vuf_b: f64,
}

/// Side-by-side view of two runs over the same plant.
#[derive(Clone, Debug)]
pub struct RunComparison {
    pub name_a: String,
    pub name_b: String,
    pub metrics_a: RunMetrics,
    pub metrics_b: RunMetrics,
    pub rows: Vec<CompareRow>,
}

/// Align two runs sample by sample. Refuses to compare runs whose plants
/// differ (the numbers would be meaningless).
pub fn compare_runs(a: &SimulationResult, b: &SimulationResult) -> Result<RunComparison, EngineError> {
    if a.topology_fingerprint != b.topology_fingerprint {
        return Err(EngineError::NotComparable(format!(
            "`{}` and `{}` describe different plants (topology fingerprints {} vs {})",
            a.scenario_name,
            b.scenario_name,
            &a.topology_fingerprint[..12],
            &b.topology_fingerprint[..12],
        )));
    }
    debug_assert_eq!(a.series.len(), b.series.len());
    let rows = (0..a.series.len().min(b.series.len()))
        .map(|i| CompareRow {
            t: a.series.t[i],
            s_total_a: a.series.s_a[i] + a.series.s_b[i] + a.series.s_c[i],
            s_total_b: b.series.s_a[i] + b.series.s_b[i] + b.series.s_c[i],
            f_a: a.series.f_star[i],
            f_b: b.series.f_star[i],
            puf_a: a.series.puf[i],
            puf_b: b.series.puf[i],
            vuf_a: a.series.vuf[i],
            vuf_b: b.series.vuf[i],
        })
        .collect();
    Ok(RunComparison {
        name_a: a.scenario_name.clone(),
        name_b: b.scenario_name.clone(),
        metrics_a: a.metrics.clone(),
        metrics_b: b.metrics.clone(),
        rows,
    })
}
