//! Aggregated feeder model.
//!
//! The distribution network is reduced to a radial chain of load groups,
//! each fed through its own sectionalizer, plus one optional normally-open
//! tie switch. Loads are lumped per phase; the network itself is replaced
//! by per-phase power aggregation and a parametric point-of-common-coupling
//! voltage model (first-order recovery plus a sag proportional to step load
//! changes). There is no power-flow solve.

use crate::phase::{FrequencyHz, Phase, PhaseAttachment, PhaseTriplet, Phasor};
use crate::profiles::{LoadProfileSet, ProfileError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("unknown switch id `{0}`")]
    UnknownSwitch(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Load class. Only appliances and smart meters participate in per-phase
/// shedding; non-controllable loads never do.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    NonControllable,
    Appliance,
    SmartMeter,
}

impl DeviceKind {
    pub fn is_controllable(self) -> bool {
        !matches!(self, DeviceKind::NonControllable)
    }
}

/// Native on/off duty cycle of a device (thermostat-like behaviour that
/// exists independently of any shedding logic).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DutyCycle {
    pub period_s: f64,
    pub on_fraction: f64,
    /// Deterministic per-device desynchronization offset.
    pub offset_s: f64,
}

impl DutyCycle {
    pub fn is_on(&self, t: f64) -> bool {
        if self.on_fraction >= 1.0 {
            return true;
        }
        let phase = (t + self.offset_s).rem_euclid(self.period_s);
        phase < self.on_fraction * self.period_s
    }
}

/// One load behind a group's sectionalizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadDevice {
    pub id: String,
    /// Index into [`Topology::groups`].
    pub group: usize,
    pub attachment: PhaseAttachment,
    pub kind: DeviceKind,
    /// Nameplate rating; demand itself comes from the referenced profile.
    pub rated_kva: f64,
    /// Index into the scenario's [`LoadProfileSet`].
    pub profile: usize,
    pub duty: Option<DutyCycle>,
}

/// Three-phase motor with a fixed-duration starting surge. The surge and
/// running demand are split equally over the three phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotorLoad {
    /// Index of the host group.
    pub group: usize,
    pub rated_kva: f64,
    pub surge_multiplier: f64,
    pub surge_duration_s: f64,
    pub running_fraction: f64,
    pub start_s: f64,
}

/// Per-phase motor demand at time `t`, in per-unit on `base_kva`.
/// Zero before start, `rated * surge_multiplier` during the surge window,
/// `rated * running_fraction` afterwards.
pub fn motor_demand(motor: &MotorLoad, t: f64, base_kva: f64) -> PhaseTriplet {
    let kva = if t < motor.start_s {
        0.0
    } else if t < motor.start_s + motor.surge_duration_s {
        motor.rated_kva * motor.surge_multiplier
    } else {
        motor.rated_kva * motor.running_fraction
    };
    PhaseTriplet::splat(kva / 3.0 / base_kva)
}

/// A load group and the sectionalizer feeding it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadGroup {
    pub id: String,
    pub switch: String,
    /// Black-start closing time of the sectionalizer.
    pub close_s: f64,
    /// Trip setpoint when the group participates in staged shedding.
    pub ufls_setpoint: Option<FrequencyHz>,
}

/// Radial chain of load groups. Group 0 is electrically closest to the
/// point of common coupling; a group is energized only when its own and
/// every upstream sectionalizer is closed. The optional tie switch is
/// normally open and never closes (no loops).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub groups: Vec<LoadGroup>,
    pub tie_switch: Option<String>,
}

impl Topology {
    pub fn switch_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.switch == name)
    }

    /// Energized mask over groups, given each sectionalizer's effective
    /// closed state (indexed like `groups`).
    pub fn live_groups(&self, closed: &[bool]) -> Vec<bool> {
        let mut live = Vec::with_capacity(self.groups.len());
        let mut chain = true;
        for &c in closed.iter().take(self.groups.len()) {
            chain = chain && c;
            live.push(chain);
        }
        live
    }

    /// Ids of devices that are energized under `switch_states` (keyed by
    /// sectionalizer id, which must cover every sectionalizer).
    pub fn connected_devices(
        &self,
        devices: &[LoadDevice],
        switch_states: &BTreeMap<String, bool>,
    ) -> Result<BTreeSet<String>, GridError> {
        let mut closed = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let state = switch_states
                .get(&g.switch)
                .ok_or_else(|| GridError::UnknownSwitch(g.switch.clone()))?;
            closed.push(*state);
        }
        for name in switch_states.keys() {
            let known =
                self.switch_index(name).is_some() || self.tie_switch.as_deref() == Some(name.as_str());
            if !known {
                return Err(GridError::UnknownSwitch(name.clone()));
            }
        }
        let live = self.live_groups(&closed);
        Ok(devices
            .iter()
            .filter(|d| live[d.group])
            .map(|d| d.id.clone())
            .collect())
    }
}

/// Electrical constants of the reduced feeder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederElectrical {
    /// Per-unit power base in kVA (the per-phase converter capability).
    pub base_kva: f64,
    /// Per-unit series impedance between the PCC and the lumped load bus.
    pub feeder_resistance_pu: f64,
    pub feeder_reactance_pu: f64,
    /// PCC voltage dip per per-unit step load change.
    pub voltage_sag_gain: f64,
    /// First-order PCC voltage recovery time constant.
    pub voltage_time_constant_s: f64,
}

impl FeederElectrical {
    pub fn impedance(&self) -> Complex64 {
        Complex64::new(self.feeder_resistance_pu, self.feeder_reactance_pu)
    }
}

/// Sum the demands of energized, effectively-on devices per phase, plus the
/// motor when its host group is energized, in per-unit on `base_kva`.
/// `on` is indexed like `devices`; `live` like the topology's groups.
pub fn aggregate_phase_power(
    devices: &[LoadDevice],
    on: &[bool],
    live: &[bool],
    motor: Option<&MotorLoad>,
    profiles: &LoadProfileSet,
    t: f64,
    base_kva: f64,
) -> Result<PhaseTriplet, GridError> {
    let (total, _) = aggregate_with_groups(devices, on, live, motor, profiles, t, base_kva, 0)?;
    Ok(total)
}

/// [`aggregate_phase_power`] variant that also returns per-group totals
/// (`n_groups` entries) for energy accounting.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_with_groups(
    devices: &[LoadDevice],
    on: &[bool],
    live: &[bool],
    motor: Option<&MotorLoad>,
    profiles: &LoadProfileSet,
    t: f64,
    base_kva: f64,
    n_groups: usize,
) -> Result<(PhaseTriplet, Vec<PhaseTriplet>), GridError> {
    let mut per_group = vec![PhaseTriplet::ZERO; n_groups];
    let mut total = PhaseTriplet::ZERO;
    let mut add = |group: usize, demand: PhaseTriplet| {
        total.a += demand.a;
        total.b += demand.b;
        total.c += demand.c;
        if group < per_group.len() {
            per_group[group].a += demand.a;
            per_group[group].b += demand.b;
            per_group[group].c += demand.c;
        }
    };
    for (i, dev) in devices.iter().enumerate() {
        if !live[dev.group] || !on[i] {
            continue;
        }
        let kva = profiles.value(dev.profile, t)?;
        let demand = match dev.attachment.single() {
            Some(p) => {
                let mut d = PhaseTriplet::ZERO;
                d[p] = kva;
                d
            }
            None => PhaseTriplet::splat(kva / 3.0),
        };
        add(dev.group, demand);
    }
    if let Some(m) = motor {
        if live.get(m.group).copied().unwrap_or(false) {
            add(m.group, motor_demand(m, t, 1.0));
        }
    }
    let scale = |s: PhaseTriplet| s.map(|x| x / base_kva);
    Ok((scale(total), per_group.into_iter().map(scale).collect()))
}

/// PCC and load-bus voltages for one step.
#[derive(Clone, Copy, Debug)]
pub struct BusVoltages {
    pub pcc: PhaseTriplet<Phasor>,
    pub load_bus: PhaseTriplet<Phasor>,
}

/// Parametric voltage model: per-phase PCC magnitude relaxes first-order
/// toward 1.0 p.u. and dips by `voltage_sag_gain * |step change of S|`;
/// the load bus sits behind the feeder impedance, so unbalanced power
/// produces unbalanced load-bus voltages.
#[derive(Clone, Debug)]
pub struct VoltageModel {
    pcc_mag: PhaseTriplet,
    prev_s: PhaseTriplet,
}

/// Reference angles: 0, -120, +120 degrees.
fn phase_angle(p: Phase) -> f64 {
    match p {
        Phase::A => 0.0,
        Phase::B => -2.0 * std::f64::consts::PI / 3.0,
        Phase::C => 2.0 * std::f64::consts::PI / 3.0,
    }
}

impl VoltageModel {
    pub fn new(initial_s: PhaseTriplet) -> Self {
        Self {
            pcc_mag: PhaseTriplet::splat(1.0),
            prev_s: initial_s,
        }
    }

    pub fn step(&mut self, s: PhaseTriplet, electrical: &FeederElectrical, dt: f64) -> BusVoltages {
        let z = electrical.impedance();
        let mut pcc = PhaseTriplet::splat(Phasor::new(1.0, 0.0));
        let mut load_bus = pcc;
        for p in Phase::ALL {
            let step_change = (s[p] - self.prev_s[p]).abs();
            let mut mag = self.pcc_mag[p];
            mag += dt / electrical.voltage_time_constant_s * (1.0 - mag);
            mag -= electrical.voltage_sag_gain * step_change;
            mag = mag.clamp(0.0, 2.0);
            self.pcc_mag[p] = mag;
            let v = Complex64::from_polar(mag, phase_angle(p));
            // Constant-power load current at unity power factor: I = (S/V)*.
            let i = (Complex64::new(s[p], 0.0) / v).conj();
            pcc[p] = Phasor::from_complex(v);
            load_bus[p] = Phasor::from_complex(v - z * i);
        }
        self.prev_s = s;
        BusVoltages { pcc, load_bus }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::vuf;
    use crate::profiles::load_profiles;

    fn chain(n: usize) -> Topology {
        Topology {
            groups: (0..n)
                .map(|i| LoadGroup {
                    id: format!("LG{}", i + 1),
                    switch: format!("S{}", i + 1),
                    close_s: 0.0,
                    ufls_setpoint: None,
                })
                .collect(),
            tie_switch: Some("S6".into()),
        }
    }

    fn device(id: &str, group: usize, attachment: PhaseAttachment, profile: usize) -> LoadDevice {
        LoadDevice {
            id: id.into(),
            group,
            attachment,
            kind: DeviceKind::NonControllable,
            rated_kva: 300.0,
            profile,
            duty: None,
        }
    }

    #[test]
    fn open_switch_disconnects_everything_downstream() {
        let topo = chain(5);
        let devices: Vec<LoadDevice> = (0..5)
            .map(|g| device(&format!("d{}", g + 1), g, PhaseAttachment::A, 0))
            .collect();
        let mut states: BTreeMap<String, bool> =
            (1..=5).map(|i| (format!("S{i}"), true)).collect();
        states.insert("S4".into(), false);
        states.insert("S6".into(), false);
        let connected = topo.connected_devices(&devices, &states).unwrap();
        let got: Vec<&str> = connected.iter().map(String::as_str).collect();
        assert_eq!(got, vec!["d1", "d2", "d3"]);
    }

    #[test]
    fn unknown_switch_is_rejected() {
        let topo = chain(2);
        let devices = vec![device("d1", 0, PhaseAttachment::A, 0)];
        let states: BTreeMap<String, bool> = [("S1".into(), true)].into();
        assert!(matches!(
            topo.connected_devices(&devices, &states),
            Err(GridError::UnknownSwitch(_))
        ));
        let states: BTreeMap<String, bool> =
            [("S1".into(), true), ("S2".into(), true), ("S9".into(), true)].into();
        assert!(matches!(
            topo.connected_devices(&devices, &states),
            Err(GridError::UnknownSwitch(_))
        ));
    }

    #[test]
    fn motor_demand_windows() {
        let motor = MotorLoad {
            group: 1,
            rated_kva: 400.0,
            surge_multiplier: 6.0,
            surge_duration_s: 6.0,
            running_fraction: 1.0,
            start_s: 50.0,
        };
        let before = motor_demand(&motor, 49.99, 3000.0);
        assert_eq!(before, PhaseTriplet::ZERO);
        let surge = motor_demand(&motor, 52.0, 3000.0);
        for p in Phase::ALL {
            assert!((surge[p] - 0.26666666666666666).abs() < 1e-12);
        }
        let running = motor_demand(&motor, 56.0, 3000.0);
        for p in Phase::ALL {
            assert!((running[p] - 0.044444444444444446).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_matches_hand_arithmetic() {
        let profiles = load_profiles("t,p300\n0,300\n".as_bytes()).unwrap();
        let single = vec![device("d1", 0, PhaseAttachment::A, 0)];
        let s = aggregate_phase_power(&single, &[true], &[true], None, &profiles, 0.0, 3000.0)
            .unwrap();
        assert_eq!(s, PhaseTriplet::new(0.1, 0.0, 0.0));

        let three = vec![device("d1", 0, PhaseAttachment::ThreePhase, 0)];
        let s = aggregate_phase_power(&three, &[true], &[true], None, &profiles, 0.0, 3000.0)
            .unwrap();
        for p in Phase::ALL {
            assert!((s[p] - 0.03333333333333333).abs() < 1e-12);
        }
        // Three-phase loads land on all phases identically, bit for bit.
        assert_eq!(s.a, s.b);
        assert_eq!(s.b, s.c);

        let off = aggregate_phase_power(&three, &[false], &[true], None, &profiles, 0.0, 3000.0)
            .unwrap();
        assert_eq!(off, PhaseTriplet::ZERO);
    }

    #[test]
    fn turning_a_device_off_never_raises_any_phase() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let profiles = load_profiles("t,p\n0,50\n".as_bytes()).unwrap();
        for _ in 0..200 {
            let n = rng.gen_range(1..20usize);
            let devices: Vec<LoadDevice> = (0..n)
                .map(|i| {
                    let att = match rng.gen_range(0..4) {
                        0 => PhaseAttachment::A,
                        1 => PhaseAttachment::B,
                        2 => PhaseAttachment::C,
                        _ => PhaseAttachment::ThreePhase,
                    };
                    device(&format!("d{i}"), 0, att, 0)
                })
                .collect();
            let mut on = vec![true; n];
            let base = aggregate_phase_power(&devices, &on, &[true], None, &profiles, 0.0, 1000.0)
                .unwrap();
            let victim = rng.gen_range(0..n);
            on[victim] = false;
            let less = aggregate_phase_power(&devices, &on, &[true], None, &profiles, 0.0, 1000.0)
                .unwrap();
            for p in Phase::ALL {
                assert!(less[p] <= base[p] + 1e-15);
            }
        }
    }

    #[test]
    fn duty_cycle_windows() {
        let duty = DutyCycle {
            period_s: 100.0,
            on_fraction: 0.7,
            offset_s: 0.0,
        };
        assert!(duty.is_on(0.0));
        assert!(duty.is_on(69.9));
        assert!(!duty.is_on(70.0));
        assert!(!duty.is_on(99.9));
        assert!(duty.is_on(100.0));
    }

    #[test]
    fn unbalanced_power_shows_up_as_load_bus_unbalance() {
        let electrical = FeederElectrical {
            base_kva: 3000.0,
            feeder_resistance_pu: 0.01,
            feeder_reactance_pu: 0.05,
            voltage_sag_gain: 0.03,
            voltage_time_constant_s: 0.2,
        };
        let s = PhaseTriplet::new(0.9, 0.6, 0.6);
        let mut model = VoltageModel::new(s);
        let buses = model.step(s, &electrical, 0.01);

        // Oracle: direct complex arithmetic with the same inputs.
        let z = Complex64::new(0.01, 0.05);
        for p in Phase::ALL {
            let v = buses.pcc[p].to_complex();
            let expect = v - z * (Complex64::new(s[p], 0.0) / v).conj();
            let got = buses.load_bus[p].to_complex();
            assert!((got - expect).norm() < 1e-12);
        }
        let pcc_vuf = vuf(&buses.pcc).unwrap();
        let load_vuf = vuf(&buses.load_bus).unwrap();
        assert!(pcc_vuf < 1e-9, "balanced PCC, got VUF {pcc_vuf}");
        assert!(load_vuf > 0.1, "expected visible unbalance, got {load_vuf}");
    }

    #[test]
    fn step_load_change_dips_the_pcc_voltage_then_recovers() {
        let electrical = FeederElectrical {
            base_kva: 3000.0,
            feeder_resistance_pu: 0.01,
            feeder_reactance_pu: 0.05,
            voltage_sag_gain: 0.03,
            voltage_time_constant_s: 0.2,
        };
        let mut model = VoltageModel::new(PhaseTriplet::ZERO);
        let s = PhaseTriplet::splat(0.8);
        let first = model.step(s, &electrical, 0.01);
        let dip = first.pcc.a.mag();
        assert!((dip - (1.0 - 0.03 * 0.8)).abs() < 1e-9);
        let mut last = first;
        for _ in 0..200 {
            last = model.step(s, &electrical, 0.01);
        }
        assert!(last.pcc.a.mag() > 0.999, "recovered to {}", last.pcc.a.mag());
    }
}
