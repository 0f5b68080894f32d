//! Metrics reports: a JSON document with the config echoed, and a plain
//! text table.

use std::fmt::Write;

use blockdrive_core::env::EnvConfig;
use blockdrive_core::eval::{EpisodeOutcome, Metrics};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct FailedEpisode {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub metrics: Option<Metrics>,
    /// Episodes that could not run; they are not part of the rates.
    pub failures: Vec<FailedEpisode>,
    pub config: EnvConfig,
}

impl Report {
    pub fn new(
        policy: &str,
        seeds: Vec<u64>,
        outcomes: &[EpisodeOutcome],
        metrics: Option<Metrics>,
        config: EnvConfig,
    ) -> Self {
        let failures = outcomes
            .iter()
            .filter_map(|o| o.as_ref().err())
            .map(|f| FailedEpisode {
                seed: f.seed,
                error: f.error.to_string(),
            })
            .collect();
        Self {
            policy: policy.to_string(),
            seeds,
            metrics,
            failures,
            config,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self)?)?;
        s.push('\n');
        Ok(s)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18}{}", "policy", self.policy);
        match &self.metrics {
            Some(m) => {
                let _ = writeln!(out, "{:<18}{}", "episodes", m.episodes);
                for (name, v) in [
                    ("success_rate", m.success_rate),
                    ("out_of_road_rate", m.out_of_road_rate),
                    ("crash_rate", m.crash_rate),
                    ("max_step_rate", m.max_step_rate),
                    ("mean_return", m.mean_return),
                    ("mean_cost", m.mean_cost),
                ] {
                    let _ = writeln!(out, "{name:<18}{v:.4}");
                }
            }
            None => {
                let _ = writeln!(out, "{:<18}0", "episodes");
            }
        }
        let _ = writeln!(out, "{:<18}{}", "failed", self.failures.len());
        out
    }
}
