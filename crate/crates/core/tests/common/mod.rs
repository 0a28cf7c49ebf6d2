#![allow(dead_code)]

use pretrial_core::heart::{HeartHandles, ORIGIN_VENTRICULAR};
use pretrial_core::patient::{sample_patient, PatientModel, PatientParameters, PopulationSpec};
use pretrial_core::sta::{run, ChannelEvent, ChannelId, NetworkState, Observer, RunConfig};
use pretrial_core::survival::{cox_log_partial_likelihood, Group, SurvivalRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

/// Watches a patient run for heart-model invariant violations while
/// delivering a Therapy every `therapy_period` ms.
pub struct Auditor {
    h: HeartHandles,
    therapy_period: f64,
    next_therapy: f64,
    last_a: Option<f64>,
    /// The atrial clock was reset since `last_a`.
    a_reset: bool,
    last_av_out: Option<f64>,
    last_v_cond: Option<f64>,
    last_v: Option<f64>,
    vt_before: bool,
    /// A therapy ended a VT episode; the next V_in must be conducted.
    expect_conducted: bool,
    pub violations: Vec<String>,
    pub a_intervals_checked: usize,
    pub conductions_checked: usize,
    pub v_spacings_checked: usize,
    pub therapies: usize,
    pub vt_therapies_checked: usize,
    pub a_count: usize,
    pub v_count: usize,
    /// (origin was ventricular, marker) for every V_in.
    pub markers: Vec<(bool, bool)>,
}

impl Auditor {
    pub fn new(h: HeartHandles, therapy_period: f64) -> Self {
        Auditor {
            h,
            therapy_period,
            next_therapy: therapy_period,
            last_a: None,
            a_reset: false,
            last_av_out: None,
            last_v_cond: None,
            last_v: None,
            vt_before: false,
            expect_conducted: false,
            violations: Vec::new(),
            a_intervals_checked: 0,
            conductions_checked: 0,
            v_spacings_checked: 0,
            therapies: 0,
            vt_therapies_checked: 0,
            a_count: 0,
            v_count: 0,
            markers: Vec::new(),
        }
    }

    fn violation(&mut self, msg: String) {
        if self.violations.len() < 20 {
            self.violations.push(msg);
        }
    }
}

impl Observer for Auditor {
    fn on_event(&mut self, ev: &ChannelEvent, s: &NetworkState, inject: &mut Vec<ChannelId>) {
        let h = self.h;
        let t = ev.time;
        let ch = ev.channel;
        if ch == h.a_in {
            self.a_count += 1;
            if let (Some(la), false) = (self.last_a, self.a_reset) {
                let (lo, hi) = (s.var(h.a_cycle_min), s.var(h.a_cycle_max));
                let gap = t - la;
                if gap < lo - EPS || gap > hi + EPS {
                    self.violation(format!("A_in interval {gap} at {t} outside [{lo}, {hi}]"));
                }
                self.a_intervals_checked += 1;
            }
            self.last_a = Some(t);
            self.a_reset = false;
            if self.therapy_period > 0.0 && t >= self.next_therapy {
                inject.push(h.therapy);
                self.next_therapy += self.therapy_period;
            }
        } else if ch == h.at_onset || ch == h.at_offset {
            self.a_reset = true;
        } else if ch == h.av_out {
            if self.last_a != Some(t) {
                self.violation(format!("AV_out at {t} without an A_in at the same instant"));
            }
            self.last_av_out = Some(t);
        } else if ch == h.v_cond {
            let (lo, hi) = (s.var(h.av_delay_min), s.var(h.av_delay_max));
            match self.last_av_out {
                Some(s0) if t - s0 >= lo - EPS && t - s0 <= hi + EPS => {}
                other => self.violation(format!("V_cond at {t}: delay from AV_out {other:?} outside [{lo}, {hi}]")),
            }
            self.last_av_out = None;
            self.last_v_cond = Some(t);
            self.conductions_checked += 1;
        } else if ch == h.v_in {
            self.v_count += 1;
            let ventricular = s.var(h.origin) == ORIGIN_VENTRICULAR;
            self.markers.push((ventricular, s.var(h.tachy) == 1.0));
            if let Some(lv) = self.last_v {
                let erp = s.var(h.v_erp);
                if t - lv < erp - EPS {
                    self.violation(format!("V_in at {t} only {} ms after the previous one (erp {erp})", t - lv));
                }
                self.v_spacings_checked += 1;
            }
            if !ventricular && self.last_v_cond != Some(t) {
                self.violation(format!("conducted V_in at {t} without V_cond"));
            }
            if self.expect_conducted {
                if ventricular {
                    self.violation(format!("first V_in after VT therapy at {t} is ventricular"));
                }
                self.vt_therapies_checked += 1;
                self.expect_conducted = false;
            }
            self.last_v = Some(t);
        } else if ch == h.vt_onset {
            // a fresh episode before the next beat makes the check moot
            self.expect_conducted = false;
        } else if ch == h.therapy {
            self.therapies += 1;
            if s.var(h.atrial_mode) != 0.0 || s.var(h.ventricular_mode) != 0.0 {
                self.violation(format!(
                    "after Therapy at {t}: modes ({}, {})",
                    s.var(h.atrial_mode),
                    s.var(h.ventricular_mode)
                ));
            }
            self.a_reset = true;
            self.last_av_out = None;
            if self.vt_before {
                self.expect_conducted = true;
            }
        }
        self.vt_before = s.var(h.ventricular_mode) == 1.0;
    }
}

pub fn sampled_patient(seed: u64) -> PatientParameters {
    sample_patient(&PopulationSpec::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Runs one patient under periodic therapy and returns the auditor.
pub fn audit_patient(params: &PatientParameters, seed: u64, bound: f64, therapy_period: f64) -> Auditor {
    let model = PatientModel::build(params).unwrap();
    let mut auditor = Auditor::new(model.heart, therapy_period);
    run(&model.network, &RunConfig::new(seed, bound).unwrap(), &mut auditor).unwrap();
    auditor
}

pub fn rec(time: f64, event: bool, group: Group) -> SurvivalRecord {
    SurvivalRecord { time, event, group }
}

/// Three subjects per group with distinct event times; one MDT subject censored.
pub fn cox_fixture() -> Vec<SurvivalRecord> {
    vec![
        rec(2.0, true, Group::Gdt),
        rec(4.0, true, Group::Gdt),
        rec(7.0, true, Group::Gdt),
        rec(3.0, true, Group::Mdt),
        rec(6.0, true, Group::Mdt),
        rec(9.0, false, Group::Mdt),
    ]
}

/// Hazard ratio maximising the partial likelihood over a uniform grid on
/// `[-5, 5]` with step `1e-4`.
pub fn grid_hazard_ratio(records: &[SurvivalRecord]) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=100_000 {
        let beta = -5.0 + i as f64 * 1e-4;
        let ll = cox_log_partial_likelihood(records, beta);
        if ll > best.0 {
            best = (ll, beta);
        }
    }
    best.1.exp()
}

pub fn swap_groups(records: &[SurvivalRecord]) -> Vec<SurvivalRecord> {
    records
        .iter()
        .map(|r| SurvivalRecord {
            group: r.group.other(),
            ..*r
        })
        .collect()
}
