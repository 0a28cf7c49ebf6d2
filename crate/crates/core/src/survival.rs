//! Two-group survival statistics: Kaplan-Meier curves, restricted mean
//! survival time and the Cox proportional-hazards ratio.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvivalError {
    #[error("no survival records")]
    Empty,
    #[error("record with invalid time {0}")]
    BadTime(f64),
    #[error("horizon {horizon} is before the last curve knot {last}")]
    HorizonTooShort { horizon: f64, last: f64 },
    #[error("cohort needs both groups, found only {0:?}")]
    OneGroup(Group),
    #[error("no events in the cohort")]
    NoEvents,
    #[error("non-identifiable HR: the partial likelihood has no maximum in [-20, 20]")]
    NonIdentifiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "GDT")]
    Gdt,
    #[serde(rename = "MDT")]
    Mdt,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Gdt => "GDT",
            Group::Mdt => "MDT",
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Gdt => Group::Mdt,
            Group::Mdt => Group::Gdt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    /// True when the event happened at `time`; false when censored there.
    pub event: bool,
    pub group: Group,
}

/// Right-continuous step function given by its knots, starting at `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub knots: Vec<(f64, f64)>,
}

impl SurvivalCurve {
    /// Survival probability at `t`.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|(k, _)| *k <= t);
        if i == 0 {
            1.0
        } else {
            self.knots[i - 1].1
        }
    }
}

fn check_times(records: &[SurvivalRecord]) -> Result<(), SurvivalError> {
    if records.is_empty() {
        return Err(SurvivalError::Empty);
    }
    match records
        .iter()
        .find(|r| !(r.time.is_finite() && r.time >= 0.0))
    {
        Some(r) => Err(SurvivalError::BadTime(r.time)),
        None => Ok(()),
    }
}

/// Product-limit estimate over `records` (group labels are ignored). At a
/// time with both events and censorings, the events come first.
pub fn kaplan_meier(records: &[SurvivalRecord]) -> Result<SurvivalCurve, SurvivalError> {
    check_times(records)?;
    let mut sorted: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut knots = vec![(0.0, 1.0)];
    let mut at_risk = sorted.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut deaths = 0;
        while j < sorted.len() && sorted[j].0 == t {
            deaths += usize::from(sorted[j].1);
            j += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            if t == 0.0 {
                knots[0].1 = s;
            } else {
                knots.push((t, s));
            }
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(SurvivalCurve { knots })
}

/// Area under `curve` on `[0, horizon]`.
pub fn mean_survival_time(curve: &SurvivalCurve, horizon: f64) -> Result<f64, SurvivalError> {
    let last = curve.knots.last().map_or(0.0, |k| k.0);
    if horizon < last {
        return Err(SurvivalError::HorizonTooShort { horizon, last });
    }
    let mut area = 0.0;
    for (i, &(t, s)) in curve.knots.iter().enumerate() {
        let next = curve.knots.get(i + 1).map_or(horizon, |k| k.0);
        area += s * (next - t);
    }
    Ok(area)
}

/// Risk-set summary at one distinct event time.
#[derive(Debug, Clone, Copy)]
struct EventTime {
    /// Events in total and in the GDT group.
    d: f64,
    d1: f64,
    /// At risk in the MDT and GDT groups.
    n0: f64,
    n1: f64,
}

fn event_times(records: &[SurvivalRecord]) -> Vec<EventTime> {
    let mut times: Vec<f64> = records.iter().filter(|r| r.event).map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .into_iter()
        .map(|t| {
            let mut e = EventTime {
                d: 0.0,
                d1: 0.0,
                n0: 0.0,
                n1: 0.0,
            };
            for r in records.iter().filter(|r| r.time >= t) {
                let gdt = r.group == Group::Gdt;
                if gdt {
                    e.n1 += 1.0;
                } else {
                    e.n0 += 1.0;
                }
                if r.event && r.time == t {
                    e.d += 1.0;
                    if gdt {
                        e.d1 += 1.0;
                    }
                }
            }
            e
        })
        .collect()
}

/// Breslow log partial likelihood of the GDT indicator coefficient.
pub fn cox_log_partial_likelihood(records: &[SurvivalRecord], beta: f64) -> f64 {
    event_times(records)
        .iter()
        .map(|e| e.d1 * beta - e.d * (e.n0 + e.n1 * beta.exp()).ln())
        .sum()
}

/// Score and observed information at `beta`.
fn score_info(events: &[EventTime], beta: f64) -> (f64, f64) {
    let w = beta.exp();
    events.iter().fold((0.0, 0.0), |(u, i), e| {
        let denom = e.n0 + e.n1 * w;
        let p = e.n1 * w / denom;
        (u + e.d1 - e.d * p, i + e.d * p * (1.0 - p))
    })
}

const BETA_BOUND: f64 = 20.0;

/// Maximum partial likelihood estimate of the GDT coefficient, by Newton
/// iteration safeguarded with bisection on `[-20, 20]`.
pub fn cox_beta(records: &[SurvivalRecord]) -> Result<f64, SurvivalError> {
    check_times(records)?;
    for g in [Group::Gdt, Group::Mdt] {
        if records.iter().all(|r| r.group == g) {
            return Err(SurvivalError::OneGroup(g));
        }
    }
    let events = event_times(records);
    if events.is_empty() {
        return Err(SurvivalError::NoEvents);
    }
    let (mut lo, mut hi) = (-BETA_BOUND, BETA_BOUND);
    // zero information means no event time had both groups at risk, and the
    // likelihood is flat in beta
    if score_info(&events, 0.0).1 == 0.0
        || score_info(&events, lo).0 < 0.0
        || score_info(&events, hi).0 > 0.0
    {
        return Err(SurvivalError::NonIdentifiable);
    }
    let mut beta = 0.0;
    for _ in 0..200 {
        let (u, info) = score_info(&events, beta);
        // the score is decreasing in beta
        if u > 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let newton = beta + u / info;
        let next = if info > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - beta).abs();
        beta = next;
        if u.abs() < 1e-8 && step < 1e-12 {
            break;
        }
    }
    if score_info(&events, beta).0.abs() >= 1e-8 {
        return Err(SurvivalError::NonIdentifiable);
    }
    Ok(beta)
}

/// Hazard ratio GDT/MDT.
pub fn cox_hazard_ratio(records: &[SurvivalRecord]) -> Result<f64, SurvivalError> {
    cox_beta(records).map(f64::exp)
}

/// Writes records as `time_ms,event,group` CSV rows with a header.
pub fn write_records_csv<W: Write>(w: W, records: &[SurvivalRecord]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_ms", "event", "group"])?;
    for r in records {
        out.write_record([
            r.time.to_string(),
            u8::from(r.event).to_string(),
            r.group.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
