//! End-to-end checks of the bundled scenario files: they must load, share
//! a plant where intended, and play out their designed storylines.

use gridshed_core::engine::{run, EventKind, SimulationResult};
use gridshed_core::scenario::{load_scenario, ScenarioConfig};
use std::path::PathBuf;

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn load(name: &str) -> ScenarioConfig {
    load_scenario(&bundled(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn all_bundled_scenarios_validate() {
    for name in [
        "case1.scenario",
        "case2.scenario",
        "baseline.scenario",
        "motor.scenario",
    ] {
        let cfg = load(name);
        assert!(cfg.horizon_s > 0.0);
    }
}

#[test]
fn shared_plant_scenarios_are_comparable() {
    let case1 = load("case1.scenario");
    let case2 = load("case2.scenario");
    let baseline = load("baseline.scenario");
    let motor = load("motor.scenario");
    assert_eq!(case1.topology_fingerprint(), case2.topology_fingerprint());
    assert_eq!(case1.topology_fingerprint(), baseline.topology_fingerprint());
    // Different horizon and an extra motor: not comparable by design.
    assert_ne!(case1.topology_fingerprint(), motor.topology_fingerprint());
    // The full configs still differ.
    assert_ne!(case1.fingerprint(), case2.fingerprint());
    assert_ne!(case1.fingerprint(), baseline.fingerprint());
}

fn kinds_and_subjects(result: &SimulationResult) -> Vec<(EventKind, &str)> {
    result
        .events
        .iter()
        .map(|e| (e.kind, e.subject.as_str()))
        .collect()
}

#[test]
fn case1_plays_out_the_designed_storyline() {
    let result = run(&load("case1.scenario")).unwrap();
    let log = kinds_and_subjects(&result);

    use EventKind::*;
    let expected: Vec<(EventKind, &str)> = vec![
        (SwitchClosed, "S1"),
        (SwitchClosed, "S2"),
        (SwitchClosed, "S3"),
        (SwitchClosed, "S4"),
        (SwitchClosed, "S5"),
        // Growth crosses 900 kVA at t = 340: stage 0 sheds the tail group.
        (FreqTrigger, "bess"),
        (Shed, "S5"),
        (RecoveryStart, "bess"),
        // Second crossing at t = 420: LG5 is already dark, the ladder
        // escalates after its 15 s dwell and stage 1 sheds LG4.
        (FreqTrigger, "bess"),
        (SetpointChange, "bess"),
        (Shed, "S4"),
        (RecoveryStart, "bess"),
        // Lockouts expire: S5 recloses into a dark section, then S4
        // brings both groups back at once and one episode sheds both.
        (Restore, "S5"),
        (Restore, "S4"),
        (FreqTrigger, "bess"),
        (Shed, "S5"),
        (SetpointChange, "bess"),
        (Shed, "S4"),
        (RecoveryStart, "bess"),
        // Final reclosures hold against the declined profile.
        (Restore, "S5"),
        (Restore, "S4"),
    ];
    // The two final restores may arrive in either order.
    let mut log_sorted_tail = log.clone();
    let n = log_sorted_tail.len();
    if n >= 2 {
        log_sorted_tail[n - 2..].sort_by_key(|(_, s)| std::cmp::Reverse(*s));
    }
    assert_eq!(
        log_sorted_tail, expected,
        "unexpected storyline:\n{:#?}",
        result.events
    );

    let t_of = |idx: usize| result.events[idx].t;
    // Designed profile crossings, +-10 s.
    assert!((t_of(5) - 340.0).abs() <= 10.0, "first trigger at {}", t_of(5));
    assert!((t_of(8) - 420.0).abs() <= 10.0, "second trigger at {}", t_of(8));
    // Trip delays are bounded by 10 s after the band is reached.
    assert!(t_of(6) - t_of(5) <= 10.5);
    // Stage dwell before escalation.
    let dwell = t_of(9) - t_of(8);
    assert!((15.0..16.5).contains(&dwell), "dwell was {dwell}");
    // Lockouts: 900 s plus up to 180 s of stagger.
    let s5_off = t_of(12) - t_of(6);
    assert!(
        (900.0..1080.1).contains(&s5_off),
        "S5 lockout was {s5_off}"
    );
    let s4_off = t_of(13) - t_of(10);
    assert!(
        (900.0..1080.1).contains(&s4_off),
        "S4 lockout was {s4_off}"
    );
    // The reconnection trigger rides on S4's reclosure.
    assert!(t_of(14) - t_of(13) < 1.0);
    // Deepest engaged stage determines the worst excursion exactly.
    assert!((result.metrics.max_freq_deviation_hz - 0.45).abs() < 1e-9);
    assert_eq!(result.metrics.ufls_event_count, 3);
    assert_eq!(result.metrics.device_count_participating, 5);

    // Everything is back in service at the end: full declined loading.
    let last = result.series.len() - 1;
    let s_end = result.series.s_a[last];
    assert!((s_end - 0.745).abs() < 0.01, "final phase-a loading {s_end}");
    assert!(result.series.f_star[last] == 60.0);
}

#[test]
fn per_phase_mode_outperforms_group_shedding() {
    let case1 = run(&load("case1.scenario")).unwrap();
    let case2 = run(&load("case2.scenario")).unwrap();
    let baseline = run(&load("baseline.scenario")).unwrap();

    // The baseline never sheds and never moves the reference.
    assert_eq!(baseline.metrics.ufls_event_count, 0);
    assert_eq!(baseline.metrics.max_freq_deviation_hz, 0.0);
    assert_eq!(baseline.metrics.device_count_participating, 0);

    // Per-phase shedding engages only the deepest (phase-a) setpoint.
    assert!(case2.metrics.ufls_event_count >= 1);
    assert!(
        (case2.metrics.max_freq_deviation_hz - 0.75).abs() < 1e-9,
        "case2 worst excursion {}",
        case2.metrics.max_freq_deviation_hz
    );
    assert_eq!(case2.metrics.device_count_participating, 95);

    // Shedding appliances on the overloaded phase serves more energy than
    // dropping whole groups, and keeps the tail groups mostly in service.
    assert!(
        case2.metrics.energy_served_mwh > case1.metrics.energy_served_mwh,
        "case2 {} MWh vs case1 {} MWh",
        case2.metrics.energy_served_mwh,
        case1.metrics.energy_served_mwh
    );
    let tail_energy = |r: &SimulationResult| -> f64 {
        r.group_energy_mwh
            .iter()
            .filter(|(g, _)| g == "LG4" || g == "LG5")
            .map(|(_, e)| e)
            .sum()
    };
    assert!(
        tail_energy(&case2) > tail_energy(&case1),
        "tail groups: case2 {} MWh vs case1 {} MWh",
        tail_energy(&case2),
        tail_energy(&case1)
    );

    // Unbalance directionality: targeting the heavy phase keeps the mean
    // unbalance at or below the untreated baseline, while group shedding
    // makes the worst case at least as bad.
    assert!(
        case2.metrics.puf_mean <= baseline.metrics.puf_mean,
        "case2 mean PUF {} vs baseline {}",
        case2.metrics.puf_mean,
        baseline.metrics.puf_mean
    );
    assert!(
        case1.metrics.puf_max >= baseline.metrics.puf_max,
        "case1 max PUF {} vs baseline {}",
        case1.metrics.puf_max,
        baseline.metrics.puf_max
    );
}

#[test]
fn motor_surge_rides_through_but_longer_surge_triggers() {
    let cfg = load("motor.scenario");
    let result = run(&cfg).unwrap();
    assert_eq!(result.metrics.ufls_event_count, 0, "{:#?}", result.events);
    assert!(result.events.iter().all(|e| e.kind == EventKind::SwitchClosed));
    // The surge really did cross the trigger level.
    let peak = result
        .series
        .s_a
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    assert!(peak > 0.9, "surge peaked at {peak}");
    assert_eq!(result.metrics.max_freq_deviation_hz, 0.0);

    // Stretch the surge beyond the 10 s motor confirmation delay.
    let text = std::fs::read_to_string(bundled("motor.scenario")).unwrap();
    let mut value = gridshed_core::scenario::parse_scenario_str(&text).unwrap();
    gridshed_core::scenario::apply_overrides(&mut value, &["motor.surge_duration_s=12.0".into()])
        .unwrap();
    let cfg = gridshed_core::scenario::resolve_scenario(value, None).unwrap();
    let result = run(&cfg).unwrap();
    assert_eq!(result.metrics.ufls_event_count, 1, "{:#?}", result.events);
    let trigger = result
        .events
        .iter()
        .find(|e| e.kind == EventKind::FreqTrigger)
        .unwrap();
    assert!((trigger.t - 80.0).abs() < 0.05, "trigger at {}", trigger.t);
    assert!(trigger.detail.contains("motor"), "{}", trigger.detail);
    // Nothing sheds: the only group listening at 59.85 Hz is not yet
    // energized in this 120 s window.
    assert!(result.events.iter().all(|e| e.kind != EventKind::Shed));
}
