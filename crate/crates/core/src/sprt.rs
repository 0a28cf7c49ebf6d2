//! Paired sequential probability ratio test.
//!
//! Each iteration yields a pair `(x1, x2)`. Only discordant pairs carry
//! information; among them `q = P(x1 = 1 | discordant)` is tested with
//! H0: `q >= 1/2 + delta` against H1: `q <= 1/2 - delta`. Accepting H1 means
//! the first property holds less often than the second.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjudication::Check;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SprtError {
    #[error("invalid SPRT setting: {0}")]
    Config(String),
    #[error("pair ingested after the test reached {0:?}")]
    AlreadyDecided(SprtDecision),
    #[error("check value {0} is not 0, 1 or 2")]
    BadCheck(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SprtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub max_iterations: u64,
}

impl Default for SprtConfig {
    fn default() -> Self {
        SprtConfig {
            alpha: 0.05,
            beta: 0.05,
            delta: 0.05,
            max_iterations: 100_000,
        }
    }
}

impl SprtConfig {
    pub fn validate(&self) -> Result<(), SprtError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
        ] {
            if !(v > 0.0 && v < 0.5) {
                return Err(SprtError::Config(format!(
                    "{name} must lie in (0, 0.5), got {v}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(SprtError::Config(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn q0(&self) -> f64 {
        0.5 + self.delta
    }

    pub fn q1(&self) -> f64 {
        0.5 - self.delta
    }

    /// Log-likelihood ratio increment of a `(1, 0)` pair.
    pub fn step_first(&self) -> f64 {
        (self.q1() / self.q0()).ln()
    }

    /// Log-likelihood ratio increment of a `(0, 1)` pair.
    pub fn step_second(&self) -> f64 {
        ((1.0 - self.q1()) / (1.0 - self.q0())).ln()
    }

    /// `ln A`: accept H1 at or above.
    pub fn upper(&self) -> f64 {
        ((1.0 - self.beta) / self.alpha).ln()
    }

    /// `ln B`: accept H0 at or below.
    pub fn lower(&self) -> f64 {
        (self.beta / (1.0 - self.alpha)).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SprtDecision {
    #[serde(rename = "undecided")]
    Undecided,
    #[serde(rename = "accept_H0")]
    AcceptH0,
    #[serde(rename = "accept_H1")]
    AcceptH1,
    #[serde(rename = "inconclusive_cap")]
    InconclusiveCap,
}

impl SprtDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            SprtDecision::Undecided => "undecided",
            SprtDecision::AcceptH0 => "accept_H0",
            SprtDecision::AcceptH1 => "accept_H1",
            SprtDecision::InconclusiveCap => "inconclusive_cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtState {
    pub log_lr: f64,
    pub m_discordant: u64,
    /// Discordant pairs of the form `(1, 0)`.
    pub t_count: u64,
    pub iterations: u64,
    pub decision: SprtDecision,
}

impl Default for SprtState {
    fn default() -> Self {
        SprtState {
            log_lr: 0.0,
            m_discordant: 0,
            t_count: 0,
            iterations: 0,
            decision: SprtDecision::Undecided,
        }
    }
}

/// The sequential test: a config and the running state.
#[derive(Debug, Clone)]
pub struct Sprt {
    cfg: SprtConfig,
    state: SprtState,
}

impl Sprt {
    pub fn new(cfg: SprtConfig) -> Result<Self, SprtError> {
        cfg.validate()?;
        Ok(Sprt {
            cfg,
            state: SprtState::default(),
        })
    }

    pub fn config(&self) -> &SprtConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SprtState {
        &self.state
    }

    pub fn decision(&self) -> SprtDecision {
        self.state.decision
    }

    /// Adds one pair and returns the updated state.
    pub fn ingest(&mut self, x1: bool, x2: bool) -> Result<SprtState, SprtError> {
        let s = &mut self.state;
        if s.decision != SprtDecision::Undecided {
            return Err(SprtError::AlreadyDecided(s.decision));
        }
        s.iterations += 1;
        if x1 != x2 {
            s.m_discordant += 1;
            if x1 {
                s.t_count += 1;
            }
            // closed form keeps the statistic free of accumulated rounding
            s.log_lr = s.t_count as f64 * self.cfg.step_first()
                + (s.m_discordant - s.t_count) as f64 * self.cfg.step_second();
        }
        if s.log_lr >= self.cfg.upper() {
            s.decision = SprtDecision::AcceptH1;
        } else if s.log_lr <= self.cfg.lower() {
            s.decision = SprtDecision::AcceptH0;
        } else if s.iterations >= self.cfg.max_iterations {
            s.decision = SprtDecision::InconclusiveCap;
        }
        Ok(*s)
    }
}

/// `1 -> (1, 0)`, `2 -> (0, 1)`, `0 -> (0, 0)`.
pub fn map_check_to_pair(check: Check) -> (bool, bool) {
    match check {
        Check::Tie => (false, false),
        Check::GdtWins => (true, false),
        Check::MdtWins => (false, true),
    }
}

/// Like [`map_check_to_pair`] on a raw value.
pub fn map_check_value(value: u8) -> Result<(bool, bool), SprtError> {
    Check::from_value(value)
        .map(map_check_to_pair)
        .ok_or(SprtError::BadCheck(value))
}

/// Pulls pairs from `source` until a decision or the cap. Returns the final
/// state, whose `iterations` is the number of pairs consumed.
pub fn run_test<E, I>(source: I, cfg: SprtConfig) -> Result<SprtState, E>
where
    I: IntoIterator<Item = Result<(bool, bool), E>>,
    E: From<SprtError>,
{
    let mut test = Sprt::new(cfg)?;
    for pair in source {
        let (x1, x2) = pair?;
        let s = test.ingest(x1, x2)?;
        if s.decision != SprtDecision::Undecided {
            return Ok(s);
        }
    }
    Ok(*test.state())
}

/// Wald's approximation of the expected number of discordant pairs until a
/// decision when each discordant pair is `(1, 0)` with probability `q`.
pub fn expected_discordant_pairs(cfg: &SprtConfig, q: f64) -> f64 {
    let (a, b) = (cfg.step_first(), cfg.step_second());
    let (ln_a, ln_b) = (cfg.upper(), cfg.lower());
    let drift = q * a + (1.0 - q) * b;
    if drift.abs() < 1e-12 {
        // zero drift: E[N] = -ln A ln B / E[Z^2]
        let second = q * a * a + (1.0 - q) * b * b;
        return -ln_a * ln_b / second;
    }
    // h solves q e^{h a} + (1 - q) e^{h b} = 1; for the symmetric increments
    // used here (a = -b) it has the closed form below.
    let h = (q / (1.0 - q)).ln() / b;
    let oc = {
        let (ha, hb) = (h * ln_a, h * ln_b);
        // L = (e^{h lnA} - 1) / (e^{h lnA} - e^{h lnB}), with limits
        if ha > 700.0 {
            1.0
        } else if hb > 700.0 {
            0.0
        } else {
            (ha.exp() - 1.0) / (ha.exp() - hb.exp())
        }
    };
    (oc * ln_b + (1.0 - oc) * ln_a) / drift
}

/// Expected iterations until a decision when a fraction `p_discordant` of
/// iterations is discordant.
pub fn expected_iterations(cfg: &SprtConfig, q: f64, p_discordant: f64) -> f64 {
    expected_discordant_pairs(cfg, q) / p_discordant
}
