//! Power-reserve supervision at the grid-forming converter.
//!
//! The converter watches its own per-phase loading. When any phase eats
//! into the configured reserve margin for long enough, the controller
//! lowers the broadcast frequency reference toward a shedding setpoint;
//! devices out in the field react on their own (see [`crate::shedding`]).
//! Once every phase is back below the release threshold the reference
//! ramps back to nominal. A step-change detector distinguishes motor
//! starting surges from genuine load growth and stretches the trigger
//! confirmation so surges ride through without shedding anything.
//!
//! Timers that decide *escalation* (advancing to a deeper stage) and
//! *release* (ramping back to nominal) only run while the reference sits
//! exactly on its target. This guarantees the broadcast signal always
//! completes its excursion to a setpoint before the controller moves on,
//! so field devices see clean, full-depth plateaus rather than aborted
//! ramps.
//!
//! Every confirmation timer compares against its threshold *before*
//! accumulating the current step, i.e. it measures completed steps. A
//! threshold of 0.02 s therefore fires exactly 0.02 s of wall time after
//! its condition appeared at any step size whose multiples hit 0.02 s,
//! which keeps event timestamps stable under step-size refinement.

use crate::phase::{FrequencyHz, Phase, PhaseTriplet};
use std::collections::VecDeque;

/// How the controller translates a confirmed reserve shortfall into a
/// frequency setpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlMode {
    /// Monitor only; the reference never leaves nominal.
    Disabled,
    /// Broadcast the setpoint assigned to the most loaded phase so that
    /// only devices on that phase shed.
    PerPhase { setpoints: PhaseTriplet<FrequencyHz> },
    /// Walk a descending ladder of group setpoints, pausing `stage_dwell_s`
    /// of settled time on each rung before escalating to the next.
    Sectionalizer {
        stages: Vec<FrequencyHz>,
        stage_dwell_s: f64,
    },
}

/// Controller tuning. Loadings are in per-unit of the converter's
/// per-phase capability.
#[derive(Clone, Debug, PartialEq)]
pub struct ReserveParams {
    /// Reserve margin to defend; the trigger threshold is `1 - s_pr`.
    pub s_pr: f64,
    /// Release threshold; recovery needs every phase below this.
    pub s_th_low: f64,
    /// Per-phase step change (over the detector window) at or above which
    /// the loading rise is classified as a motor start.
    pub ds_th: f64,
    pub tau_trigger_normal_s: f64,
    pub tau_trigger_motor_s: f64,
    /// Settled time below `s_th_low` before the reference releases.
    pub tau_th_rec_s: f64,
    /// Persistence required before switching to a different phase's
    /// setpoint while triggered.
    pub tau_th_f_s: f64,
    pub f_ramp_hz_per_s: f64,
    /// Lookback of the step-change detector.
    pub rocolp_window_s: f64,
    pub mode: ControlMode,
}

impl ReserveParams {
    /// Loading at which the reserve margin is considered consumed.
    pub fn upper_threshold(&self) -> f64 {
        1.0 - self.s_pr
    }
}

/// True when a loading step change is big enough to be a motor start.
/// The boundary itself classifies as motor.
pub fn step_change_is_motor(ds: f64, ds_th: f64) -> bool {
    ds >= ds_th
}

/// Controller-level occurrences, translated into the run event log by the
/// engine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReserveEvent {
    /// Shortfall confirmed; the reference is heading for its first setpoint.
    TriggerSet {
        f_set: FrequencyHz,
        motor_load: bool,
    },
    /// Escalated to a deeper stage or switched to another phase's setpoint.
    SetpointChanged { f_set: FrequencyHz },
    /// Every phase back under the release threshold; heading to nominal.
    RecoveryStarted,
    /// The deepest stage was held for a full dwell without relief.
    Exhausted,
}

/// Mutable controller state.
#[derive(Clone, Debug)]
pub struct BessControllerState {
    /// Broadcast frequency reference.
    pub f_star: FrequencyHz,
    /// Target the reference is ramping toward.
    pub f_set: FrequencyHz,
    /// Raw shortfall condition (any phase at/above the trigger threshold).
    pub lpr: bool,
    /// Confirmed shortfall.
    pub triggered: bool,
    /// Deepest-stage-exhausted latch (sectionalizer mode).
    pub exhausted: bool,
    t_trigger: f64,
    t_rec: f64,
    t_pending: f64,
    t_stage: f64,
    /// Confirmation delay latched for the current shortfall episode.
    episode_delay_s: f64,
    motor_latched: bool,
    stage: Option<usize>,
    active_phase: Option<Phase>,
    pending_phase: Option<Phase>,
    history: VecDeque<PhaseTriplet>,
}

impl BessControllerState {
    /// Controller at rest, with the step-change detector seeded so the very
    /// first sample is not itself a step.
    pub fn new(initial_s: PhaseTriplet) -> Self {
        let mut history = VecDeque::new();
        history.push_back(initial_s);
        Self {
            f_star: FrequencyHz::NOMINAL,
            f_set: FrequencyHz::NOMINAL,
            lpr: false,
            triggered: false,
            exhausted: false,
            t_trigger: 0.0,
            t_rec: 0.0,
            t_pending: 0.0,
            t_stage: 0.0,
            episode_delay_s: 0.0,
            motor_latched: false,
            stage: None,
            active_phase: None,
            pending_phase: None,
            history,
        }
    }

    /// Stage index currently committed (sectionalizer mode).
    pub fn stage(&self) -> Option<usize> {
        self.stage
    }

    /// Phase whose setpoint is currently committed (per-phase mode).
    pub fn active_phase(&self) -> Option<Phase> {
        self.active_phase
    }
}

/// Move a rate-limited reference one step toward its target, landing
/// exactly on the target (bit-equal) once within one step of it.
pub fn ramp_reference(
    f_star: FrequencyHz,
    f_set: FrequencyHz,
    ramp_hz_per_s: f64,
    dt: f64,
) -> FrequencyHz {
    let step = ramp_hz_per_s * dt;
    let diff = f_set.hz() - f_star.hz();
    if diff.abs() <= step {
        f_set
    } else {
        FrequencyHz(f_star.hz() + step * diff.signum())
    }
}

/// Most loaded phase among those at/above the trigger threshold. Ties
/// resolve in phase order a, b, c.
fn worst_exceeding_phase(s: PhaseTriplet, up: f64) -> Option<Phase> {
    let mut best: Option<Phase> = None;
    for p in Phase::ALL {
        if s[p] >= up && best.is_none_or(|b| s[p] > s[b]) {
            best = Some(p);
        }
    }
    best
}

/// Advance the controller by one step of `dt`, given the current per-phase
/// loading `s`. Returns whatever controller-level events fired this step.
pub fn step_bess(
    state: &mut BessControllerState,
    params: &ReserveParams,
    s: PhaseTriplet,
    dt: f64,
) -> Vec<ReserveEvent> {
    let mut events = Vec::new();
    if params.mode == ControlMode::Disabled {
        return events;
    }
    let up = params.upper_threshold();

    // Step-change detector: compare against the sample one window back.
    let window_steps = (params.rocolp_window_s / dt).round().max(1.0) as usize;
    state.history.push_back(s);
    while state.history.len() > window_steps + 1 {
        state.history.pop_front();
    }
    let reference = *state.history.front().expect("history is never empty");
    let ds = Phase::ALL
        .iter()
        .map(|&p| (s[p] - reference[p]).abs())
        .fold(0.0, f64::max);

    // Shortfall episode bookkeeping. The confirmation delay is latched per
    // episode: one qualifying step change anywhere in the episode stretches
    // it to the motor value, and a cleared condition resets the latch.
    let lpr_now = Phase::ALL.iter().any(|&p| s[p] >= up);
    if lpr_now {
        if !state.lpr {
            state.t_trigger = 0.0;
            state.motor_latched = false;
            state.episode_delay_s = params.tau_trigger_normal_s;
        }
        if !state.motor_latched && step_change_is_motor(ds, params.ds_th) {
            state.motor_latched = true;
            state.episode_delay_s = params.tau_trigger_motor_s;
        }
    } else {
        state.t_trigger = 0.0;
        state.motor_latched = false;
    }
    state.lpr = lpr_now;

    // Trigger confirmation and the initial setpoint commitment.
    if !state.triggered && lpr_now && state.t_trigger >= state.episode_delay_s {
        state.triggered = true;
        state.t_rec = 0.0;
        match &params.mode {
            ControlMode::PerPhase { setpoints } => {
                let phase = worst_exceeding_phase(s, up).unwrap_or_else(|| s.argmax());
                state.active_phase = Some(phase);
                state.pending_phase = None;
                state.t_pending = 0.0;
                state.f_set = setpoints[phase];
            }
            ControlMode::Sectionalizer { stages, .. } => {
                state.stage = Some(0);
                state.t_stage = 0.0;
                state.f_set = stages[0];
            }
            ControlMode::Disabled => unreachable!(),
        }
        events.push(ReserveEvent::TriggerSet {
            f_set: state.f_set,
            motor_load: state.motor_latched,
        });
    }
    if lpr_now {
        state.t_trigger += dt;
    }

    let settled = state.f_star == state.f_set;
    if state.triggered {
        match &params.mode {
            ControlMode::PerPhase { setpoints } => {
                // Follow the worst exceeding phase, but only commit a switch
                // after the candidate has persisted; while nothing exceeds,
                // hold the current setpoint and wait for recovery.
                match worst_exceeding_phase(s, up) {
                    Some(c) if Some(c) != state.active_phase => {
                        if state.pending_phase != Some(c) {
                            state.pending_phase = Some(c);
                            state.t_pending = 0.0;
                        }
                        if state.t_pending >= params.tau_th_f_s {
                            state.active_phase = Some(c);
                            state.pending_phase = None;
                            state.t_pending = 0.0;
                            state.f_set = setpoints[c];
                            events.push(ReserveEvent::SetpointChanged { f_set: state.f_set });
                        } else {
                            state.t_pending += dt;
                        }
                    }
                    _ => {
                        state.pending_phase = None;
                        state.t_pending = 0.0;
                    }
                }
            }
            ControlMode::Sectionalizer {
                stages,
                stage_dwell_s,
            } => {
                // Escalate only after a full dwell of settled time with the
                // shortfall still present.
                if lpr_now && settled {
                    if state.t_stage >= *stage_dwell_s {
                        let k = state.stage.unwrap_or(0);
                        if k + 1 < stages.len() {
                            state.stage = Some(k + 1);
                            state.t_stage = 0.0;
                            state.f_set = stages[k + 1];
                            events.push(ReserveEvent::SetpointChanged { f_set: state.f_set });
                        } else if !state.exhausted {
                            state.exhausted = true;
                            events.push(ReserveEvent::Exhausted);
                        }
                    } else {
                        state.t_stage += dt;
                    }
                } else if !lpr_now {
                    state.t_stage = 0.0;
                }
            }
            ControlMode::Disabled => unreachable!(),
        }

        // Release: every phase under the low threshold, reference settled,
        // held for the recovery confirmation time.
        let relieved = Phase::ALL.iter().all(|&p| s[p] < params.s_th_low);
        if relieved && settled {
            if state.t_rec >= params.tau_th_rec_s {
                state.triggered = false;
                state.exhausted = false;
                state.stage = None;
                state.active_phase = None;
                state.pending_phase = None;
                state.t_rec = 0.0;
                state.t_pending = 0.0;
                state.t_stage = 0.0;
                state.f_set = FrequencyHz::NOMINAL;
                events.push(ReserveEvent::RecoveryStarted);
            } else {
                state.t_rec += dt;
            }
        } else {
            state.t_rec = 0.0;
        }
    }

    state.f_star = ramp_reference(state.f_star, state.f_set, params.f_ramp_hz_per_s, dt);
    events
}
