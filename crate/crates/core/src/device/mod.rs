//! Dual-chamber SVT/VT discrimination devices.
//!
//! Devices are event-stream transducers: they consume sensed atrial and
//! ventricular activations in time order and occasionally emit a verdict.
//! They never see where a beat originated.

mod closed_loop;
mod gdt;
mod mdt;
mod offline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use closed_loop::{simulate_arm, ArmError, ArmRun, DeviceObserver};
pub use gdt::Gdt;
pub use mdt::Mdt;
pub use offline::{read_inputs, run_offline, write_verdicts};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("input at {time} ms arrived after input at {previous} ms")]
    OutOfOrder { previous: f64, time: f64 },
    #[error("detection config: {0}")]
    Config(String),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputKind {
    A,
    V,
}

/// One sensed activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceInput {
    pub time: f64,
    pub kind: InputKind,
    /// Morphology verdict of the shock channel; always false for atrial inputs.
    pub tachy_marker: bool,
}

impl DeviceInput {
    pub fn atrial(time: f64) -> Self {
        DeviceInput {
            time,
            kind: InputKind::A,
            tachy_marker: false,
        }
    }

    pub fn ventricular(time: f64, tachy_marker: bool) -> Self {
        DeviceInput {
            time,
            kind: InputKind::V,
            tachy_marker,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "VT_therapy")]
    VtTherapy,
    #[serde(rename = "SVT_withhold")]
    SvtWithhold,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::VtTherapy => "VT_therapy",
            Decision::SvtWithhold => "SVT_withhold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceVerdict {
    pub time: f64,
    pub decision: Decision,
}

/// Detection thresholds shared by both devices. Each device reads the fields
/// its algorithm uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// V-V intervals shorter than this are in the tachycardia zone, ms.
    pub vt_interval_threshold: f64,
    /// Mean (GDT) or median (MDT) V-V below this is treated as VT without
    /// further discrimination, ms.
    pub svt_upper_interval: f64,
    /// Number of recent V-V intervals examined by the rate criterion.
    pub detection_window: usize,
    /// GDT: fast intervals needed within the window. MDT: consecutive fast
    /// intervals needed.
    pub detection_count: usize,
    /// Time the rate criterion must hold before classification, ms.
    pub duration_ms: f64,
    /// V-V range above which the ventricular rhythm counts as unstable, ms.
    pub stability_ms: f64,
    /// `(x, y)`: at least `x` of the last `y` V beats flagged by morphology.
    pub morphology_vote: (usize, usize),
    /// Mean A-A below this is in the atrial fibrillation zone, ms.
    pub af_zone_interval: f64,
    /// Ventricular rate must exceed the atrial rate by this much to count as
    /// V > A, beats/min.
    pub rate_margin_bpm: f64,
}

impl DetectionConfig {
    pub fn gdt_default() -> Self {
        DetectionConfig {
            vt_interval_threshold: 400.0,
            svt_upper_interval: 250.0,
            detection_window: 10,
            detection_count: 8,
            duration_ms: 2500.0,
            stability_ms: 50.0,
            morphology_vote: (3, 10),
            af_zone_interval: 350.0,
            rate_margin_bpm: 10.0,
        }
    }

    pub fn mdt_default() -> Self {
        DetectionConfig {
            detection_window: 12,
            detection_count: 12,
            duration_ms: 0.0,
            ..Self::gdt_default()
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let err = |m: String| Err(DeviceError::Config(m));
        for (name, v) in [
            ("vt_interval_threshold", self.vt_interval_threshold),
            ("svt_upper_interval", self.svt_upper_interval),
            ("stability_ms", self.stability_ms),
            ("af_zone_interval", self.af_zone_interval),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("duration_ms", self.duration_ms),
            ("rate_margin_bpm", self.rate_margin_bpm),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.detection_count == 0 || self.detection_count > self.detection_window {
            return err(format!(
                "detection_count {} must lie in [1, detection_window={}]",
                self.detection_count, self.detection_window
            ));
        }
        let (x, y) = self.morphology_vote;
        if x == 0 || x > y {
            return err(format!(
                "morphology_vote ({x}, {y}) must satisfy 1 <= x <= y"
            ));
        }
        Ok(())
    }
}

/// A discrimination algorithm fed one sensed event at a time.
pub trait Discriminator: Send {
    fn name(&self) -> &'static str;

    fn sense(&mut self, input: DeviceInput) -> Result<Option<DeviceVerdict>, DeviceError>;
}

/// Device that never delivers therapy.
#[derive(Debug, Clone, Default)]
pub struct NeverFires;

impl Discriminator for NeverFires {
    fn name(&self) -> &'static str {
        "none"
    }

    fn sense(&mut self, _input: DeviceInput) -> Result<Option<DeviceVerdict>, DeviceError> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceKind {
    #[serde(rename = "gdt")]
    Gdt,
    #[serde(rename = "mdt")]
    Mdt,
}

impl DeviceKind {
    pub fn build(self, cfg: &DetectionConfig) -> Result<Box<dyn Discriminator>, DeviceError> {
        Ok(match self {
            DeviceKind::Gdt => Box::new(Gdt::new(*cfg)?),
            DeviceKind::Mdt => Box::new(Mdt::new(*cfg)?),
        })
    }
}

/// Rejects inputs that go back in time.
#[derive(Debug, Clone, Default)]
pub(crate) struct OrderCheck {
    last: Option<f64>,
}

impl OrderCheck {
    pub(crate) fn check(&mut self, time: f64) -> Result<(), DeviceError> {
        if let Some(previous) = self.last {
            if time < previous || time.is_nan() {
                return Err(DeviceError::OutOfOrder { previous, time });
            }
        }
        self.last = Some(time);
        Ok(())
    }
}

/// Fixed-capacity FIFO of the most recent values.
#[derive(Debug, Clone)]
pub(crate) struct Recent<T> {
    buf: std::collections::VecDeque<T>,
    cap: usize,
}

impl<T: Copy> Recent<T> {
    pub(crate) fn new(cap: usize) -> Self {
        Recent {
            buf: std::collections::VecDeque::with_capacity(cap + 1),
            cap,
        }
    }

    pub(crate) fn push(&mut self, v: T) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
        }
        self.buf.push_back(v);
    }

    pub(crate) fn len(&self) -> usize {
        self.buf.len()
    }

    pub(crate) fn is_full(&self) -> bool {
        self.buf.len() == self.cap
    }

    pub(crate) fn clear(&mut self) {
        self.buf.clear();
    }

    pub(crate) fn iter(&self) -> impl DoubleEndedIterator<Item = &T> + ExactSizeIterator {
        self.buf.iter()
    }

    /// The last `n` values (fewer if not available), oldest first.
    pub(crate) fn last_n(&self, n: usize) -> impl Iterator<Item = &T> {
        self.buf.iter().skip(self.buf.len().saturating_sub(n))
    }
}

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub(crate) fn median(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Beats per minute of a mean interval; an absent interval is rate 0.
pub(crate) fn rate_bpm(interval: Option<f64>) -> f64 {
    match interval {
        Some(i) if i > 0.0 => 60_000.0 / i,
        _ => 0.0,
    }
}

pub(crate) fn range(xs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}
