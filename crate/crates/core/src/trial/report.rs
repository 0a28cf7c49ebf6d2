//! Trial reports: a structured result file and a human-readable summary.

use std::path::Path;

use serde::Serialize;

use super::spec::TrialSpec;
use super::TrialError;
use crate::sprt::{SprtDecision, SprtState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial_id: u8,
    pub decision: SprtDecision,
    pub iterations_used: u64,
    pub max_iterations: u64,
    pub discordant_count: u64,
    /// Discordant iterations won by GDT.
    pub gdt_wins: u64,
    pub mdt_wins: u64,
    pub discordant_fraction: f64,
    pub log_lr: f64,
    /// Wald's expected iterations at the observed discordance.
    pub wald_expected_iterations: Option<f64>,
    /// Iterations computed ahead of the decision and discarded.
    pub surplus_iterations_dropped: u64,
    /// Iterations whose hazard ratio was undefined.
    pub degenerate_iterations: u64,
    pub per_iteration_csv: String,
    pub config_echo: String,
    pub wall_clock_s: f64,
    pub engine_version: String,
    pub summary: String,
}

/// What the alternative hypothesis asserts, per trial.
fn finding(trial_id: u8) -> &'static str {
    match trial_id {
        1 => "GDT has higher chance of inappropriate therapy compared to MDT",
        2 => "GDT has shorter event-free survival time compared to MDT",
        3 => "GDT has shorter mean event-free survival time compared to MDT",
        _ => "GDT has higher hazard compared to MDT",
    }
}

/// Decision sentence in hypothesis-test vocabulary.
pub fn decision_sentence(trial_id: u8, decision: SprtDecision, max_iterations: u64) -> String {
    match decision {
        SprtDecision::AcceptH1 => format!("H0 rejected, H1 accepted: {}", finding(trial_id)),
        SprtDecision::AcceptH0 => format!(
            "H0 accepted, H1 rejected: not the case that {}",
            finding(trial_id)
        ),
        SprtDecision::InconclusiveCap => {
            format!("no decision: iteration cap of {max_iterations} reached without crossing either threshold")
        }
        SprtDecision::Undecided => {
            "no decision: the pair stream ended before a threshold was crossed".into()
        }
    }
}

impl TrialReport {
    pub fn new(
        spec: &TrialSpec,
        state: SprtState,
        surplus: u64,
        degenerate: u64,
        per_iteration_csv: String,
        wall_clock_s: f64,
        wald_expected_iterations: Option<f64>,
    ) -> Self {
        let discordant_fraction = if state.iterations == 0 {
            0.0
        } else {
            state.m_discordant as f64 / state.iterations as f64
        };
        TrialReport {
            trial_id: spec.trial_id,
            decision: state.decision,
            iterations_used: state.iterations,
            max_iterations: spec.sprt.max_iterations,
            discordant_count: state.m_discordant,
            gdt_wins: state.t_count,
            mdt_wins: state.m_discordant - state.t_count,
            discordant_fraction,
            log_lr: state.log_lr,
            wald_expected_iterations,
            surplus_iterations_dropped: surplus,
            degenerate_iterations: degenerate,
            per_iteration_csv,
            config_echo: spec.echo(),
            wall_clock_s,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            summary: decision_sentence(spec.trial_id, state.decision, spec.sprt.max_iterations),
        }
    }

    /// Multi-line summary for terminals.
    pub fn render(&self) -> String {
        let mut s = format!("trial {}: {}\n", self.trial_id, self.summary);
        s.push_str(&format!(
            "iterations used: {} (cap {}), surplus dropped: {}\n",
            self.iterations_used, self.max_iterations, self.surplus_iterations_dropped
        ));
        s.push_str(&format!(
            "discordant: {} ({:.4} of iterations; GDT wins {}, MDT wins {})\n",
            self.discordant_count, self.discordant_fraction, self.gdt_wins, self.mdt_wins
        ));
        if let Some(w) = self.wald_expected_iterations {
            s.push_str(&format!(
                "Wald expected iterations at observed discordance: {w:.0}\n"
            ));
        }
        if self.degenerate_iterations > 0 {
            s.push_str(&format!(
                "degenerate iterations (undefined HR): {}\n",
                self.degenerate_iterations
            ));
        }
        s.push_str(&format!(
            "per-iteration results: {}\n",
            self.per_iteration_csv
        ));
        s.push_str(&format!("wall clock: {:.1} s\n", self.wall_clock_s));
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<(), TrialError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|source| TrialError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
