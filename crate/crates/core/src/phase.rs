//! Per-phase quantities and three-phase math.
//!
//! Everything downstream of the feeder model works in per-phase triplets:
//! apparent power in per-unit, voltage phasors, and the unbalance metrics
//! derived from them. Phasor angles are radians normalized to (-pi, pi].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Nominal system frequency in Hz.
pub const NOMINAL_HZ: f64 = 60.0;

/// One phase of the three-phase system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn label(self) -> &'static str {
        match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Where a load hangs off the feeder: a single phase or all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseAttachment {
    A,
    B,
    C,
    #[serde(rename = "abc")]
    ThreePhase,
}

impl PhaseAttachment {
    /// The attached phase for single-phase loads, `None` for three-phase.
    pub fn single(self) -> Option<Phase> {
        match self {
            PhaseAttachment::A => Some(Phase::A),
            PhaseAttachment::B => Some(Phase::B),
            PhaseAttachment::C => Some(Phase::C),
            PhaseAttachment::ThreePhase => None,
        }
    }
}

/// One scalar value per phase. Units are carried by context (p.u., kVA, Hz).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTriplet<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T> PhaseTriplet<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> PhaseTriplet<U> {
        PhaseTriplet {
            a: f(self.a),
            b: f(self.b),
            c: f(self.c),
        }
    }
}

impl<T: Copy> PhaseTriplet<T> {
    pub fn splat(v: T) -> Self {
        Self { a: v, b: v, c: v }
    }
}

impl<T> Index<Phase> for PhaseTriplet<T> {
    type Output = T;

    fn index(&self, p: Phase) -> &T {
        match p {
            Phase::A => &self.a,
            Phase::B => &self.b,
            Phase::C => &self.c,
        }
    }
}

impl<T> IndexMut<Phase> for PhaseTriplet<T> {
    fn index_mut(&mut self, p: Phase) -> &mut T {
        match p {
            Phase::A => &mut self.a,
            Phase::B => &mut self.b,
            Phase::C => &mut self.c,
        }
    }
}

impl PhaseTriplet<f64> {
    pub const ZERO: Self = Self {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn total(&self) -> f64 {
        self.a + self.b + self.c
    }

    pub fn avg(&self) -> f64 {
        self.total() / 3.0
    }

    pub fn max(&self) -> f64 {
        self.a.max(self.b).max(self.c)
    }

    pub fn all(&self, mut pred: impl FnMut(f64) -> bool) -> bool {
        pred(self.a) && pred(self.b) && pred(self.c)
    }

    pub fn any(&self, mut pred: impl FnMut(f64) -> bool) -> bool {
        pred(self.a) || pred(self.b) || pred(self.c)
    }

    /// Phase with the largest value. Ties resolve in phase order a < b < c.
    pub fn argmax(&self) -> Phase {
        let mut best = Phase::A;
        if self.b > self[best] {
            best = Phase::B;
        }
        if self.c > self[best] {
            best = Phase::C;
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

/// Normalize an angle in radians into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Magnitude/angle pair. The angle is normalized to (-pi, pi] and the
/// magnitude is non-negative by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phasor {
    mag: f64,
    ang_rad: f64,
}

impl Phasor {
    pub fn new(mag: f64, ang_rad: f64) -> Self {
        assert!(mag >= 0.0, "phasor magnitude must be non-negative");
        Self {
            mag,
            ang_rad: normalize_angle(ang_rad),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z.norm(), z.arg())
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.mag, self.ang_rad)
    }

    pub fn mag(self) -> f64 {
        self.mag
    }

    pub fn ang_rad(self) -> f64 {
        self.ang_rad
    }
}

/// System frequency in hertz.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyHz(pub f64);

impl FrequencyHz {
    pub const NOMINAL: FrequencyHz = FrequencyHz(NOMINAL_HZ);

    pub fn hz(self) -> f64 {
        self.0
    }

    /// Sanity envelope for any value seen during a simulation.
    pub fn in_envelope(self) -> bool {
        self.0.is_finite() && (55.0..=65.0).contains(&self.0)
    }
}

impl fmt::Display for FrequencyHz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("voltage unbalance is undefined: positive-sequence magnitude is zero")]
    ZeroPositiveSequence,
    #[error("power unbalance is undefined: mean phase power is zero")]
    ZeroMeanPower,
}

/// Rotation operator exp(j*2*pi/3).
fn rot() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI / 3.0)
}

/// Symmetrical-component decomposition of a set of phase voltages.
/// Returns (zero, positive, negative) sequence phasors. Phase order is
/// a-b-c with a balanced positive set rotating -120 degrees per phase.
pub fn sequence_components(v: &PhaseTriplet<Phasor>) -> (Phasor, Phasor, Phasor) {
    let a = rot();
    let a2 = a * a;
    let (va, vb, vc) = (v.a.to_complex(), v.b.to_complex(), v.c.to_complex());
    let v0 = (va + vb + vc) / 3.0;
    let v1 = (va + a * vb + a2 * vc) / 3.0;
    let v2 = (va + a2 * vb + a * vc) / 3.0;
    (
        Phasor::from_complex(v0),
        Phasor::from_complex(v1),
        Phasor::from_complex(v2),
    )
}

/// Inverse of [`sequence_components`]: rebuilds phase voltages from the
/// (zero, positive, negative) sequence set.
pub fn phases_from_sequence(v0: Phasor, v1: Phasor, v2: Phasor) -> PhaseTriplet<Phasor> {
    let a = rot();
    let a2 = a * a;
    let (z0, z1, z2) = (v0.to_complex(), v1.to_complex(), v2.to_complex());
    PhaseTriplet {
        a: Phasor::from_complex(z0 + z1 + z2),
        b: Phasor::from_complex(z0 + a2 * z1 + a * z2),
        c: Phasor::from_complex(z0 + a * z1 + a2 * z2),
    }
}

/// Voltage unbalance factor in percent: 100 * |negative| / |positive|.
pub fn vuf(v: &PhaseTriplet<Phasor>) -> Result<f64, MetricError> {
    let (_, v1, v2) = sequence_components(v);
    if v1.mag() == 0.0 {
        return Err(MetricError::ZeroPositiveSequence);
    }
    Ok(100.0 * v2.mag() / v1.mag())
}

/// Power unbalance factor: the worst per-phase deviation from the mean
/// phase power, as a fraction of the mean.
pub fn puf(s: &PhaseTriplet) -> Result<f64, MetricError> {
    let avg = s.avg();
    if avg <= 0.0 {
        return Err(MetricError::ZeroMeanPower);
    }
    let dev = (s.a - avg).abs().max((s.b - avg).abs()).max((s.c - avg).abs());
    Ok(dev / avg)
}
