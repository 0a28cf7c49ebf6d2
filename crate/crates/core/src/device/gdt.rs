//! RhythmID-style discrimination: an X-of-Y rate criterion sustained for a
//! duration, then rate comparison, morphology vote and stability checks.

use super::{
    mean, range, rate_bpm, Decision, DetectionConfig, DeviceError, DeviceInput, DeviceVerdict,
    Discriminator, InputKind, OrderCheck, Recent,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Monitoring,
    /// Rate criterion met since the given time.
    Sustaining {
        since: f64,
    },
    /// Classified SVT during the current episode; keeps re-classifying.
    Withholding,
    /// Therapy delivered; waits for a slow V-V interval.
    AwaitRearm,
}

#[derive(Debug, Clone)]
pub struct Gdt {
    cfg: DetectionConfig,
    order: OrderCheck,
    last_a: Option<f64>,
    last_v: Option<f64>,
    aa: Recent<f64>,
    vv: Recent<f64>,
    markers: Recent<bool>,
    phase: Phase,
}

impl Gdt {
    pub fn new(cfg: DetectionConfig) -> Result<Self, DeviceError> {
        cfg.validate()?;
        Ok(Gdt {
            cfg,
            order: OrderCheck::default(),
            last_a: None,
            last_v: None,
            aa: Recent::new(cfg.detection_window),
            vv: Recent::new(cfg.detection_window),
            markers: Recent::new(cfg.morphology_vote.1),
            phase: Phase::Monitoring,
        })
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.cfg
    }

    fn rate_criterion(&self) -> bool {
        self.vv.is_full()
            && self
                .vv
                .iter()
                .filter(|&&i| i < self.cfg.vt_interval_threshold)
                .count()
                >= self.cfg.detection_count
    }

    fn classify(&self) -> Decision {
        let mean_vv = mean(self.vv.iter().copied());
        if mean_vv.is_some_and(|m| m < self.cfg.svt_upper_interval) {
            return Decision::VtTherapy;
        }
        let mean_aa = mean(self.aa.iter().copied());
        if rate_bpm(mean_vv) - rate_bpm(mean_aa) >= self.cfg.rate_margin_bpm {
            return Decision::VtTherapy;
        }
        let (x, _) = self.cfg.morphology_vote;
        if self.markers.iter().filter(|&&m| m).count() >= x {
            return Decision::VtTherapy;
        }
        let af_zone = mean_aa.is_some_and(|m| m < self.cfg.af_zone_interval);
        if af_zone && range(self.vv.iter().copied()) > self.cfg.stability_ms {
            // atrial fibrillation with an irregular ventricular response
            return Decision::SvtWithhold;
        }
        Decision::SvtWithhold
    }

    fn on_v(&mut self, t: f64, marker: bool) -> Option<DeviceVerdict> {
        let interval = self.last_v.map(|lv| t - lv);
        self.last_v = Some(t);
        if let Some(i) = interval {
            self.vv.push(i);
        }
        self.markers.push(marker);

        if self.phase == Phase::AwaitRearm {
            if interval.is_some_and(|i| i >= self.cfg.vt_interval_threshold) {
                self.phase = Phase::Monitoring;
            }
            return None;
        }
        if !self.rate_criterion() {
            self.phase = Phase::Monitoring;
            return None;
        }
        let since = match self.phase {
            Phase::Monitoring => {
                self.phase = Phase::Sustaining { since: t };
                t
            }
            Phase::Sustaining { since } => since,
            Phase::Withholding => f64::NEG_INFINITY,
            Phase::AwaitRearm => unreachable!(),
        };
        if t - since < self.cfg.duration_ms {
            return None;
        }
        match self.classify() {
            Decision::VtTherapy => {
                self.phase = Phase::AwaitRearm;
                self.vv.clear();
                self.markers.clear();
                Some(DeviceVerdict {
                    time: t,
                    decision: Decision::VtTherapy,
                })
            }
            Decision::SvtWithhold => {
                let first = self.phase != Phase::Withholding;
                self.phase = Phase::Withholding;
                first.then_some(DeviceVerdict {
                    time: t,
                    decision: Decision::SvtWithhold,
                })
            }
        }
    }
}

impl Discriminator for Gdt {
    fn name(&self) -> &'static str {
        "GDT"
    }

    fn sense(&mut self, input: DeviceInput) -> Result<Option<DeviceVerdict>, DeviceError> {
        self.order.check(input.time)?;
        Ok(match input.kind {
            InputKind::A => {
                if let Some(la) = self.last_a {
                    self.aa.push(input.time - la);
                }
                self.last_a = Some(input.time);
                None
            }
            InputKind::V => self.on_v(input.time, input.tachy_marker),
        })
    }
}
