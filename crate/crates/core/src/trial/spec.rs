//! Trial configuration file: TOML with every field validated and defaults
//! filled in.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrialError;
use crate::adjudication::AdjudicationConfig;
use crate::device::DetectionConfig;
use crate::sprt::SprtConfig;

/// Default simulated time per arm, ms.
pub const DEFAULT_TIME_BOUND_MS: f64 = 1_000_000.0;

/// Outcome probabilities of the synthetic pipeline, see [`super::synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub p1: f64,
    pub p2: f64,
}

/// Fully resolved trial configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSpec {
    pub trial_id: u8,
    pub seed: u64,
    pub time_bound_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cohort_n: Option<usize>,
    /// Population table overriding the built-in defaults.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub trace: bool,
    pub sprt: SprtConfig,
    pub gdt: DetectionConfig,
    pub mdt: DetectionConfig,
    pub adjudication: AdjudicationConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    trial_id: Option<i64>,
    seed: Option<u64>,
    time_bound_ms: Option<f64>,
    cohort_n: Option<i64>,
    population: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    trace: Option<bool>,
    #[serde(default)]
    sprt: RawSprt,
    #[serde(default)]
    gdt: RawDetection,
    #[serde(default)]
    mdt: RawDetection,
    #[serde(default)]
    adjudication: RawAdjudication,
    synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSprt {
    alpha: Option<f64>,
    beta: Option<f64>,
    delta: Option<f64>,
    max_iterations: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    vt_interval_threshold: Option<f64>,
    svt_upper_interval: Option<f64>,
    detection_window: Option<usize>,
    detection_count: Option<usize>,
    duration_ms: Option<f64>,
    stability_ms: Option<f64>,
    morphology_vote: Option<(usize, usize)>,
    af_zone_interval: Option<f64>,
    rate_margin_bpm: Option<f64>,
}

impl RawDetection {
    fn apply(self, base: DetectionConfig) -> DetectionConfig {
        DetectionConfig {
            vt_interval_threshold: self
                .vt_interval_threshold
                .unwrap_or(base.vt_interval_threshold),
            svt_upper_interval: self.svt_upper_interval.unwrap_or(base.svt_upper_interval),
            detection_window: self.detection_window.unwrap_or(base.detection_window),
            detection_count: self.detection_count.unwrap_or(base.detection_count),
            duration_ms: self.duration_ms.unwrap_or(base.duration_ms),
            stability_ms: self.stability_ms.unwrap_or(base.stability_ms),
            morphology_vote: self.morphology_vote.unwrap_or(base.morphology_vote),
            af_zone_interval: self.af_zone_interval.unwrap_or(base.af_zone_interval),
            rate_margin_bpm: self.rate_margin_bpm.unwrap_or(base.rate_margin_bpm),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdjudication {
    persistence_ms: Option<f64>,
    lookback_ms: Option<f64>,
}

fn field(name: &'static str, message: impl Into<String>) -> TrialError {
    TrialError::Config {
        field: name,
        message: message.into(),
    }
}

impl TrialSpec {
    /// Spec with defaults for everything but the trial and seed.
    pub fn new(trial_id: u8, seed: u64) -> Self {
        TrialSpec {
            trial_id,
            seed,
            time_bound_ms: DEFAULT_TIME_BOUND_MS,
            cohort_n: None,
            population: None,
            output_dir: PathBuf::from("out"),
            trace: false,
            sprt: SprtConfig::default(),
            gdt: DetectionConfig::gdt_default(),
            mdt: DetectionConfig::mdt_default(),
            adjudication: AdjudicationConfig::default(),
            synthetic: None,
        }
    }

    /// Parses and validates a TOML spec. Relative paths stay as written.
    pub fn from_toml_str(text: &str) -> Result<Self, TrialError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| TrialError::Parse(e.to_string()))?;
        let trial_id = raw.trial_id.ok_or_else(|| field("trial_id", "missing"))?;
        let trial_id = u8::try_from(trial_id)
            .map_err(|_| field("trial_id", format!("must be 1-4, got {trial_id}")))?;
        let seed = raw.seed.ok_or_else(|| field("seed", "missing"))?;
        let cohort_n = match raw.cohort_n {
            Some(n) if n < 1 => {
                return Err(field("cohort_n", format!("must be at least 1, got {n}")))
            }
            Some(n) => Some(n as usize),
            None => None,
        };
        let base_sprt = SprtConfig::default();
        let base_adj = AdjudicationConfig::default();
        let spec = TrialSpec {
            trial_id,
            seed,
            time_bound_ms: raw.time_bound_ms.unwrap_or(DEFAULT_TIME_BOUND_MS),
            cohort_n,
            population: raw.population,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            trace: raw.trace.unwrap_or(false),
            sprt: SprtConfig {
                alpha: raw.sprt.alpha.unwrap_or(base_sprt.alpha),
                beta: raw.sprt.beta.unwrap_or(base_sprt.beta),
                delta: raw.sprt.delta.unwrap_or(base_sprt.delta),
                max_iterations: raw.sprt.max_iterations.unwrap_or(base_sprt.max_iterations),
            },
            gdt: raw.gdt.apply(DetectionConfig::gdt_default()),
            mdt: raw.mdt.apply(DetectionConfig::mdt_default()),
            adjudication: AdjudicationConfig {
                persistence_ms: raw
                    .adjudication
                    .persistence_ms
                    .unwrap_or(base_adj.persistence_ms),
                lookback_ms: raw.adjudication.lookback_ms.unwrap_or(base_adj.lookback_ms),
            },
            synthetic: raw.synthetic,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec file; a relative `population` path is resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, TrialError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrialError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut spec = Self::from_toml_str(&text)?;
        if let Some(p) = &spec.population {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    spec.population = Some(dir.join(p));
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TrialError> {
        if !(1..=4).contains(&self.trial_id) {
            return Err(field(
                "trial_id",
                format!("must be 1-4, got {}", self.trial_id),
            ));
        }
        if !(self.time_bound_ms.is_finite() && self.time_bound_ms > 0.0) {
            return Err(field(
                "time_bound_ms",
                format!("must be positive, got {}", self.time_bound_ms),
            ));
        }
        match (self.is_cohort_trial(), self.cohort_n) {
            (true, None) => {
                return Err(field(
                    "cohort_n",
                    format!("required for trial {}", self.trial_id),
                ))
            }
            (false, Some(_)) => {
                return Err(field(
                    "cohort_n",
                    format!("only applies to trials 3 and 4, not {}", self.trial_id),
                ))
            }
            (true, Some(0)) => return Err(field("cohort_n", "must be at least 1")),
            _ => {}
        }
        self.sprt
            .validate()
            .map_err(|e| field("sprt", e.to_string()))?;
        self.gdt
            .validate()
            .map_err(|e| field("gdt", e.to_string()))?;
        self.mdt
            .validate()
            .map_err(|e| field("mdt", e.to_string()))?;
        self.adjudication
            .validate()
            .map_err(|e| field("adjudication", e.to_string()))?;
        if let Some(s) = self.synthetic {
            for p in [s.p1, s.p2] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(field(
                        "synthetic",
                        format!("probabilities must lie in [0, 1], got {p}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_cohort_trial(&self) -> bool {
        matches!(self.trial_id, 3 | 4)
    }

    /// TOML of the effective configuration; parsing it gives back this spec.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("trial spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_gets_defaults() {
        let s = TrialSpec::from_toml_str("trial_id = 1\nseed = 42\n").unwrap();
        assert_eq!(s.time_bound_ms, 1_000_000.0);
        assert_eq!(s.sprt.alpha, 0.05);
        assert_eq!(s.sprt.beta, 0.05);
        assert_eq!(s.sprt.delta, 0.05);
        assert_eq!(s, TrialSpec::new(1, 42));
    }

    #[test]
    fn cohort_trial_requires_cohort_n() {
        let e = TrialSpec::from_toml_str("trial_id = 3\nseed = 1\n").unwrap_err();
        assert!(e.to_string().contains("cohort_n"), "{e}");
        let e = TrialSpec::from_toml_str("trial_id = 1\nseed = 1\ncohort_n = 5\n").unwrap_err();
        assert!(e.to_string().contains("cohort_n"), "{e}");
    }

    #[test]
    fn duplicate_key_is_a_parse_error() {
        let e = TrialSpec::from_toml_str("trial_id = 1\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(e, TrialError::Parse(_)), "{e}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let e =
            TrialSpec::from_toml_str("trial_id = 1\nseed = 1\n[sprt\nalpha = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(TrialSpec::from_toml_str("trial_id = 1\nseed = 1\nbogus = 2\n").is_err());
        assert!(TrialSpec::from_toml_str("trial_id = 1\nseed = 1\n[gdt]\nbogus = 2\n").is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let s = TrialSpec::from_toml_str(
            "trial_id = 4\nseed = 9\ncohort_n = 25\n[sprt]\nalpha = 0.01\n[mdt]\nvt_interval_threshold = 510\n[synthetic]\np1 = 0.2\np2 = 0.4\n",
        )
        .unwrap();
        assert_eq!(s.sprt.alpha, 0.01);
        assert_eq!(s.sprt.beta, 0.05);
        assert_eq!(s.mdt.vt_interval_threshold, 510.0);
        assert_eq!(s.mdt.detection_count, 12);
        assert_eq!(s.synthetic, Some(SyntheticSpec { p1: 0.2, p2: 0.4 }));
    }

    #[test]
    fn echo_round_trips() {
        let s = TrialSpec::from_toml_str("trial_id = 3\nseed = 5\ncohort_n = 25\ntrace = true\n")
            .unwrap();
        let again = TrialSpec::from_toml_str(&s.echo()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let e =
            TrialSpec::from_toml_str("trial_id = 1\nseed = 1\n[sprt]\nalpha = 0.7\n").unwrap_err();
        assert!(e.to_string().contains("sprt"), "{e}");
        let e = TrialSpec::from_toml_str("trial_id = 7\nseed = 1\n").unwrap_err();
        assert!(e.to_string().contains("trial_id"), "{e}");
        let e =
            TrialSpec::from_toml_str("trial_id = 1\nseed = 1\ntime_bound_ms = 0\n").unwrap_err();
        assert!(e.to_string().contains("time_bound_ms"), "{e}");
    }
}
