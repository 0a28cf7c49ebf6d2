//! Ground-truth adjudication of delivered therapies, and per-trial comparison
//! of the two arms of an iteration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heart::HeartEvent;
use crate::patient::{RhythmMode, VentricularMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjudicationError {
    #[error("trace has no rhythm mode annotations")]
    MissingModes,
    #[error(
        "mode annotations must start at time 0 and be non-decreasing (entry {index} at {time} ms)"
    )]
    BadModes { index: usize, time: f64 },
    #[error("therapy at {time} ms lies outside [0, {bound}]")]
    TherapyOutOfRange { time: f64, bound: f64 },
    #[error("invalid adjudication setting: {0}")]
    Config(String),
}

/// The rhythm mode entered at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeChange {
    pub time: f64,
    pub mode: RhythmMode,
}

/// Heart events of one arm with the patient's ground-truth mode history.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedTrace {
    pub time_bound: f64,
    /// Mode at time 0 followed by every change, in time order.
    pub modes: Vec<ModeChange>,
    /// Therapy delivery times, in time order.
    pub therapies: Vec<f64>,
    pub events: Vec<HeartEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjudicationConfig {
    /// Minimum continuous VT time that justifies therapy, ms.
    pub persistence_ms: f64,
    /// How long after a qualifying VT episode ends a therapy still counts
    /// as its treatment, ms.
    pub lookback_ms: f64,
}

impl Default for AdjudicationConfig {
    fn default() -> Self {
        AdjudicationConfig {
            persistence_ms: 1000.0,
            lookback_ms: 3000.0,
        }
    }
}

impl AdjudicationConfig {
    pub fn validate(&self) -> Result<(), AdjudicationError> {
        for (name, v) in [
            ("persistence_ms", self.persistence_ms),
            ("lookback_ms", self.lookback_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(AdjudicationError::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A maximal interval `[start, end)` of ventricular tachycardia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VtEpisode {
    pub start: f64,
    pub end: f64,
    /// Still in VT at the simulation bound.
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub n_inappropriate: usize,
    pub first_inappropriate_ms: Option<f64>,
    /// First inappropriate therapy time, or the bound when there was none.
    pub survival_time_ms: f64,
    pub n_appropriate: usize,
    /// Qualifying VT episodes that ended on their own without therapy.
    pub n_missed: usize,
}

impl ArmOutcome {
    /// Outcome with the given inappropriate therapy times and nothing else.
    pub fn from_inappropriate(times: &[f64], time_bound: f64) -> Self {
        let first = times.iter().copied().reduce(f64::min);
        ArmOutcome {
            n_inappropriate: times.len(),
            first_inappropriate_ms: first,
            survival_time_ms: first.unwrap_or(time_bound),
            n_appropriate: 0,
            n_missed: 0,
        }
    }
}

/// Extracts the VT episodes of a mode history ending at `time_bound`.
pub fn vt_episodes(
    modes: &[ModeChange],
    time_bound: f64,
) -> Result<Vec<VtEpisode>, AdjudicationError> {
    if modes.is_empty() {
        return Err(AdjudicationError::MissingModes);
    }
    let mut prev = 0.0;
    for (index, m) in modes.iter().enumerate() {
        let bad = if index == 0 {
            m.time != 0.0
        } else {
            m.time < prev
        };
        if bad || m.time.is_nan() {
            return Err(AdjudicationError::BadModes {
                index,
                time: m.time,
            });
        }
        prev = m.time;
    }
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for m in modes {
        match (m.mode.ventricular, open) {
            (VentricularMode::Vt, None) => open = Some(m.time),
            (VentricularMode::NsrV, Some(start)) => {
                if m.time > start {
                    out.push(VtEpisode {
                        start,
                        end: m.time,
                        censored: false,
                    });
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        out.push(VtEpisode {
            start,
            end: time_bound,
            censored: true,
        });
    }
    Ok(out)
}

/// Whether a therapy at `t` treats a persistent VT: some episode had lasted
/// at least `persistence_ms` by `t` (or by its end, if it ended before `t`)
/// and ended no more than `lookback_ms` before `t`.
pub fn is_appropriate(t: f64, episodes: &[VtEpisode], cfg: &AdjudicationConfig) -> bool {
    episodes.iter().any(|e| {
        e.start <= t && e.end.min(t) - e.start >= cfg.persistence_ms && e.end >= t - cfg.lookback_ms
    })
}

/// Classifies every therapy of `trace` against its mode annotations.
pub fn adjudicate_arm(
    trace: &AnnotatedTrace,
    cfg: &AdjudicationConfig,
) -> Result<ArmOutcome, AdjudicationError> {
    cfg.validate()?;
    let episodes = vt_episodes(&trace.modes, trace.time_bound)?;
    let mut outcome = ArmOutcome {
        n_inappropriate: 0,
        first_inappropriate_ms: None,
        survival_time_ms: trace.time_bound,
        n_appropriate: 0,
        n_missed: 0,
    };
    for &t in &trace.therapies {
        if !(0.0..=trace.time_bound).contains(&t) {
            return Err(AdjudicationError::TherapyOutOfRange {
                time: t,
                bound: trace.time_bound,
            });
        }
        if is_appropriate(t, &episodes, cfg) {
            outcome.n_appropriate += 1;
        } else {
            outcome.n_inappropriate += 1;
            if outcome.first_inappropriate_ms.is_none_or(|f| t < f) {
                outcome.first_inappropriate_ms = Some(t);
            }
        }
    }
    outcome.survival_time_ms = outcome.first_inappropriate_ms.unwrap_or(trace.time_bound);
    outcome.n_missed = episodes
        .iter()
        .filter(|e| !e.censored && e.end - e.start >= cfg.persistence_ms)
        .filter(|e| {
            !trace
                .therapies
                .iter()
                .any(|&t| t >= e.start && t <= e.end + cfg.lookback_ms)
        })
        .count();
    Ok(outcome)
}

/// Per-iteration comparison statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Check {
    Tie = 0,
    GdtWins = 1,
    MdtWins = 2,
}

impl Check {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Check> {
        match v {
            0 => Some(Check::Tie),
            1 => Some(Check::GdtWins),
            2 => Some(Check::MdtWins),
            _ => None,
        }
    }

    /// The check with the arm labels exchanged.
    pub fn swapped(self) -> Check {
        match self {
            Check::Tie => Check::Tie,
            Check::GdtWins => Check::MdtWins,
            Check::MdtWins => Check::GdtWins,
        }
    }

    fn from_ordering(o: Option<std::cmp::Ordering>) -> Check {
        match o {
            Some(std::cmp::Ordering::Greater) => Check::GdtWins,
            Some(std::cmp::Ordering::Less) => Check::MdtWins,
            _ => Check::Tie,
        }
    }
}

/// A GDT win is an iteration where only the MDT arm had an inappropriate therapy.
pub fn compare_trial1(gdt: &ArmOutcome, mdt: &ArmOutcome) -> Check {
    match (gdt.n_inappropriate == 0, mdt.n_inappropriate == 0) {
        (true, false) => Check::GdtWins,
        (false, true) => Check::MdtWins,
        _ => Check::Tie,
    }
}

/// The arm with the longer survival time wins.
pub fn compare_trial2(gdt: &ArmOutcome, mdt: &ArmOutcome) -> Check {
    Check::from_ordering(gdt.survival_time_ms.partial_cmp(&mdt.survival_time_ms))
}

/// Cohort-level statistic of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CohortStatistic {
    /// Mean event-free survival time per group.
    MeanSurvival { gdt: f64, mdt: f64 },
    /// Hazard ratio GDT/MDT; `None` when it is not identifiable.
    HazardRatio(Option<f64>),
}

/// Cohort comparison: longer mean survival wins, or a hazard ratio below 1
/// means GDT wins. The flag marks an undefined hazard ratio, scored as a tie.
pub fn compare_cohort(stat: CohortStatistic) -> (Check, bool) {
    match stat {
        CohortStatistic::MeanSurvival { gdt, mdt } => {
            (Check::from_ordering(gdt.partial_cmp(&mdt)), false)
        }
        CohortStatistic::HazardRatio(Some(hr)) if hr.is_finite() && hr > 0.0 => {
            (Check::from_ordering(1.0f64.partial_cmp(&hr)), false)
        }
        CohortStatistic::HazardRatio(_) => (Check::Tie, true),
    }
}
