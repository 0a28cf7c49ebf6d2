//! PRLogic-style discrimination: a consecutive fast-interval counter, then
//! rate comparison and P:R pattern analysis.

use super::{
    median, range, rate_bpm, Decision, DetectionConfig, DeviceError, DeviceInput, DeviceVerdict,
    Discriminator, InputKind, OrderCheck, Recent,
};

/// Number of recent V-V intervals examined by the pattern rules.
const PATTERN_BEATS: usize = 8;
/// Maximum A-to-V latency spread of a stable 1:1 rhythm, ms.
const LATENCY_STABILITY_MS: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct Mdt {
    cfg: DetectionConfig,
    order: OrderCheck,
    last_a: Option<f64>,
    last_v: Option<f64>,
    aa: Recent<f64>,
    vv: Recent<f64>,
    /// A events inside each V-V interval.
    a_per_vv: Recent<usize>,
    /// Time from the last A to each V that had an A since the previous V.
    latency: Recent<f64>,
    a_since_v: usize,
    counter: usize,
    armed: bool,
    svt_reported: bool,
}

impl Mdt {
    pub fn new(cfg: DetectionConfig) -> Result<Self, DeviceError> {
        cfg.validate()?;
        Ok(Mdt {
            cfg,
            order: OrderCheck::default(),
            last_a: None,
            last_v: None,
            aa: Recent::new(cfg.detection_window),
            vv: Recent::new(cfg.detection_window),
            a_per_vv: Recent::new(PATTERN_BEATS),
            latency: Recent::new(PATTERN_BEATS),
            a_since_v: 0,
            counter: 0,
            armed: true,
            svt_reported: false,
        })
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.cfg
    }

    fn classify(&self) -> Decision {
        let med_vv = median(self.vv.iter().copied());
        if med_vv.is_some_and(|m| m < self.cfg.svt_upper_interval) {
            return Decision::VtTherapy;
        }
        let med_aa = median(self.aa.iter().copied());
        let (v_rate, a_rate) = (rate_bpm(med_vv), rate_bpm(med_aa));
        if v_rate - a_rate > self.cfg.rate_margin_bpm {
            return Decision::VtTherapy;
        }
        let pattern: Vec<usize> = self.a_per_vv.last_n(PATTERN_BEATS).copied().collect();
        let full = pattern.len() == PATTERN_BEATS;
        if full
            && pattern.iter().all(|&n| n == 1)
            && self.latency.len() == PATTERN_BEATS
            && range(self.latency.iter().copied()) < LATENCY_STABILITY_MS
        {
            return Decision::SvtWithhold;
        }
        let multi = pattern.iter().filter(|&&n| n >= 2).count();
        if full && a_rate > v_rate && 2 * multi > PATTERN_BEATS {
            return Decision::SvtWithhold;
        }
        // dissociated atrial and ventricular activity
        Decision::VtTherapy
    }

    fn on_v(&mut self, t: f64, _marker: bool) -> Option<DeviceVerdict> {
        let a_count = std::mem::take(&mut self.a_since_v);
        let lv = self.last_v.replace(t)?;
        let interval = t - lv;
        self.vv.push(interval);
        self.a_per_vv.push(a_count);
        if a_count > 0 {
            if let Some(la) = self.last_a {
                self.latency.push(t - la);
            }
        }

        if interval < self.cfg.vt_interval_threshold {
            self.counter += 1;
        } else {
            self.counter = 0;
            self.armed = true;
            self.svt_reported = false;
        }
        if !self.armed || self.counter < self.cfg.detection_count {
            return None;
        }
        match self.classify() {
            Decision::VtTherapy => {
                self.armed = false;
                self.counter = 0;
                Some(DeviceVerdict {
                    time: t,
                    decision: Decision::VtTherapy,
                })
            }
            Decision::SvtWithhold => {
                let first = !self.svt_reported;
                self.svt_reported = true;
                first.then_some(DeviceVerdict {
                    time: t,
                    decision: Decision::SvtWithhold,
                })
            }
        }
    }
}

impl Discriminator for Mdt {
    fn name(&self) -> &'static str {
        "MDT"
    }

    fn sense(&mut self, input: DeviceInput) -> Result<Option<DeviceVerdict>, DeviceError> {
        self.order.check(input.time)?;
        Ok(match input.kind {
            InputKind::A => {
                if let Some(la) = self.last_a {
                    self.aa.push(input.time - la);
                }
                self.last_a = Some(input.time);
                self.a_since_v += 1;
                None
            }
            InputKind::V => self.on_v(input.time, input.tachy_marker),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merge(mut a: Vec<DeviceInput>, v: Vec<DeviceInput>) -> Vec<DeviceInput> {
        a.extend(v);
        a.sort_by(|x, y| x.time.total_cmp(&y.time));
        a
    }

    fn periodic(start: f64, period: f64, until: f64) -> impl Iterator<Item = f64> {
        (0..)
            .map(move |k| start + k as f64 * period)
            .take_while(move |t| *t <= until)
    }

    fn verdicts(cfg: DetectionConfig, inputs: &[DeviceInput]) -> Vec<DeviceVerdict> {
        let mut d = Mdt::new(cfg).unwrap();
        inputs.iter().filter_map(|i| d.sense(*i).unwrap()).collect()
    }

    #[test]
    fn dissociated_rhythm_gets_therapy() {
        let a = periodic(137.0, 900.0, 10_000.0)
            .map(DeviceInput::atrial)
            .collect();
        let v = periodic(320.0, 320.0, 10_000.0)
            .map(|t| DeviceInput::ventricular(t, false))
            .collect();
        let out = verdicts(DetectionConfig::mdt_default(), &merge(a, v));
        // 12 fast intervals end at the 13th V: 13 * 320 = 4160 ms
        assert_eq!(
            out,
            vec![DeviceVerdict {
                time: 4160.0,
                decision: Decision::VtTherapy
            }]
        );
    }

    #[test]
    fn atrial_flutter_two_to_one() {
        let a: Vec<_> = periodic(250.0, 250.0, 20_000.0)
            .map(DeviceInput::atrial)
            .collect();
        // every second A conducted after 120 ms
        let v: Vec<_> = periodic(370.0, 500.0, 20_000.0)
            .map(|t| DeviceInput::ventricular(t, false))
            .collect();
        let inputs = merge(a, v);
        assert!(verdicts(DetectionConfig::mdt_default(), &inputs).is_empty());

        let cfg = DetectionConfig {
            vt_interval_threshold: 510.0,
            ..DetectionConfig::mdt_default()
        };
        let out = verdicts(cfg, &inputs);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].decision, Decision::SvtWithhold);
        // 12 fast intervals end at the 13th V
        assert_eq!(out[0].time, 370.0 + 12.0 * 500.0);
    }

    #[test]
    fn stable_one_to_one_is_withheld() {
        let a = periodic(300.0, 330.0, 20_000.0)
            .map(DeviceInput::atrial)
            .collect();
        let v = periodic(450.0, 330.0, 20_000.0)
            .map(|t| DeviceInput::ventricular(t, true))
            .collect();
        let out = verdicts(DetectionConfig::mdt_default(), &merge(a, v));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].decision, Decision::SvtWithhold);
    }

    #[test]
    fn empty_stream_no_verdict() {
        assert!(verdicts(DetectionConfig::mdt_default(), &[]).is_empty());
    }

    #[test]
    fn rearms_only_after_slow_interval() {
        let mut v: Vec<_> = periodic(300.0, 300.0, 9000.0)
            .map(|t| DeviceInput::ventricular(t, false))
            .collect();
        let out = verdicts(DetectionConfig::mdt_default(), &v);
        assert_eq!(out.len(), 1);
        v.extend(periodic(9600.0, 300.0, 20_000.0).map(|t| DeviceInput::ventricular(t, false)));
        let out = verdicts(DetectionConfig::mdt_default(), &v);
        assert_eq!(out.len(), 2);
    }
}
