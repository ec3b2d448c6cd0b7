//! Autonomous under-frequency trip/restore behaviour.
//!
//! Participating devices never communicate. Each one watches the broadcast
//! frequency on its own terminals and trips itself after a private random
//! delay once the signal sits inside the deadband around one of its assigned
//! setpoints. After a mandatory off period plus a second private random
//! delay it closes back in. The randomization staggers both shedding and
//! reconnection so neither arrives as a single block load change.

use crate::phase::FrequencyHz;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SheddingError {
    #[error(
        "frequency {0} Hz is outside the 57-60 Hz range where the \
         tripping-delay stability bound is defined"
    )]
    BoundDomain(f64),
}

/// Frequency setpoints a device reacts to. Single-phase devices carry the
/// setpoint of their own phase; three-phase devices react to any of the
/// per-phase setpoints since they draw from all three.
#[derive(Clone, Debug, PartialEq)]
pub enum TriggerSetpoints {
    Single(FrequencyHz),
    AnyOf(Vec<FrequencyHz>),
}

/// Trip/restore timing parameters for one device.
#[derive(Clone, Debug, PartialEq)]
pub struct UflsParams {
    pub trigger: TriggerSetpoints,
    /// Half-width of the band around each setpoint.
    pub deadband_hz: f64,
    /// Upper end of the uniform tripping-delay draw.
    pub tau1_max_s: f64,
    /// Pinned tripping delay (skips the draw); used by tests and by
    /// scenarios that want reproducible single-device behaviour.
    pub fixed_tau1_s: Option<f64>,
    /// Mandatory off period after a trip.
    pub tau2_s: f64,
    /// Upper end of the uniform extra reconnection-delay draw.
    pub tau_rand_max_s: f64,
}

/// Where a device currently is in its trip/restore cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShedMode {
    /// On, frequency outside every assigned band.
    Armed,
    /// On, inside a band, accumulating time toward the trip delay.
    TimingTrip,
    /// Off, serving the mandatory off period.
    Shed,
    /// Off, mandatory period served, waiting out the random extra delay.
    Recovering,
}

/// Emitted by [`step_device`] when the relay contact changes state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShedTransition {
    Tripped,
    Restored,
}

/// Per-device shedding state. `u` is the relay contact: the device can only
/// draw power while `u` is true (and its native on/off state allows it).
#[derive(Clone, Debug, PartialEq)]
pub struct UflsDeviceState {
    pub mode: ShedMode,
    /// Time accumulated inside a trip band.
    pub t1: f64,
    /// Time accumulated since the trip.
    pub t_off: f64,
    pub tau1_s: f64,
    pub tau_rand_s: f64,
    pub u: bool,
}

fn uniform_delay(max_s: f64, rng: &mut impl Rng) -> f64 {
    if max_s > 0.0 {
        rng.gen_range(0.0..max_s)
    } else {
        0.0
    }
}

/// Draw the private (tripping, extra reconnection) delays for one device.
pub fn draw_delays(params: &UflsParams, rng: &mut impl Rng) -> (f64, f64) {
    let tau1 = params
        .fixed_tau1_s
        .unwrap_or_else(|| uniform_delay(params.tau1_max_s, rng));
    let tau_rand = uniform_delay(params.tau_rand_max_s, rng);
    (tau1, tau_rand)
}

impl UflsDeviceState {
    /// Fresh, armed state with newly drawn delays. Also used when a device
    /// controller regains power after an outage: any partial timing from
    /// before the outage is deliberately lost.
    pub fn init(params: &UflsParams, rng: &mut impl Rng) -> Self {
        let (tau1_s, tau_rand_s) = draw_delays(params, rng);
        Self {
            mode: ShedMode::Armed,
            t1: 0.0,
            t_off: 0.0,
            tau1_s,
            tau_rand_s,
            u: true,
        }
    }
}

/// True when `f` lies within the deadband of one of the trigger setpoints.
/// Both edges are inclusive; a nanohertz guard keeps representational
/// rounding (59.85 - 59.80 is slightly above 0.05 in binary) from flipping
/// membership exactly at an edge.
pub fn band_match(trigger: &TriggerSetpoints, f: FrequencyHz, deadband_hz: f64) -> bool {
    let hit = |th: &FrequencyHz| (f.hz() - th.hz()).abs() <= deadband_hz + 1e-9;
    match trigger {
        TriggerSetpoints::Single(th) => hit(th),
        TriggerSetpoints::AnyOf(list) => list.iter().any(hit),
    }
}

/// Largest tripping delay that still clears the under-frequency protection
/// curve when the broadcast signal is parked at `f_min`:
/// `10^(1.7373 * f_min - 100.116)` seconds. Only defined for 57-60 Hz.
pub fn max_tripping_delay_bound(f_min: FrequencyHz) -> Result<f64, SheddingError> {
    let hz = f_min.hz();
    if !(57.0..=60.0).contains(&hz) {
        return Err(SheddingError::BoundDomain(hz));
    }
    Ok(10f64.powf(1.7373 * hz - 100.116))
}

/// Advance one device by `dt`. The trip timer accumulates (`t1 += dt`,
/// including the step that enters the band) rather than being recomputed
/// from a step count, so trip instants reflect the integration the device
/// hardware would actually perform. Leaving the band resets the timer.
///
/// When a trip fires, the amount by which the trip timer overshot its
/// delay (at most one step) is credited to the off clock. The combined
/// trip-plus-restore interval is therefore quantized once, not twice, and
/// refining the step size moves the restore instant by less than one
/// original step.
pub fn step_device(
    state: &mut UflsDeviceState,
    params: &UflsParams,
    f: FrequencyHz,
    dt: f64,
    rng: &mut impl Rng,
) -> Option<ShedTransition> {
    if !state.u {
        state.t_off += dt;
        if state.t_off >= params.tau2_s + state.tau_rand_s {
            *state = UflsDeviceState::init(params, rng);
            return Some(ShedTransition::Restored);
        }
        if state.t_off >= params.tau2_s {
            state.mode = ShedMode::Recovering;
        }
        return None;
    }
    if band_match(&params.trigger, f, params.deadband_hz) {
        state.mode = ShedMode::TimingTrip;
        state.t1 += dt;
        if state.t1 >= state.tau1_s {
            state.mode = ShedMode::Shed;
            state.u = false;
            state.t_off = state.t1 - state.tau1_s;
            state.t1 = 0.0;
            return Some(ShedTransition::Tripped);
        }
    } else {
        state.mode = ShedMode::Armed;
        state.t1 = 0.0;
    }
    None
}

/// Whether a device is actually drawing power: its native/scheduled state
/// must be on and its shedding relay closed.
pub fn effective_on(native_on: bool, state: &UflsDeviceState) -> bool {
    native_on && state.u
}

/// Two-sided Kolmogorov-Smirnov distance between `samples` (values in
/// [0, 1]) and the uniform distribution. Sorts the slice in place.
pub fn ks_uniform_statistic(samples: &mut [f64]) -> f64 {
    samples.sort_by(|x, y| x.partial_cmp(y).expect("NaN sample"));
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        d = d.max((x - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - x).abs());
    }
    d
}

/// Asymptotic critical value of the two-sided KS statistic at the
/// one-percent significance level.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276236307187293 / (n as f64).sqrt()
}
