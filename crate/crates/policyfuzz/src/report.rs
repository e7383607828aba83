//! The campaign report document. Field names are stable and documented in
//! docs/report-schema.md; reports round-trip through JSON losslessly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appscript::TypeCheckStats;
use crate::config::{Budget, CampaignConfig};
use crate::fuzzer::{CampaignOutcome, CampaignStats};
use crate::oracle::{Granularity, OracleOutcome, ResourceId, WeaknessReport};
use crate::synth::SynthOptions;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse report: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub budget: Budget,
    pub workers: usize,
    pub engines: Vec<String>,
    pub rng_seed: u64,
    pub granularity: Granularity,
    pub synth: SynthOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub iterations: u64,
    pub aborts: u64,
    pub routing_misses: u64,
    pub corpus_size: u64,
    pub unique_responses: u64,
    pub distinct_edges: u64,
    pub max_session_bits: u32,
    pub infeasible_requests: u64,
    pub type_checks: TypeCheckStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEntry {
    pub resource: ResourceId,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInfo {
    pub total_accesses: u64,
    pub distinct_resources: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub app: String,
    /// Unix seconds; the only field two otherwise identical runs differ in.
    pub timestamp_unix: u64,
    pub config: ReportConfig,
    pub stats: ReportStats,
    pub threshold: ThresholdInfo,
    pub frequency: Vec<FrequencyEntry>,
    pub weaknesses: Vec<WeaknessReport>,
}

impl CampaignReport {
    pub fn assemble(
        app: &str,
        config: &CampaignConfig,
        outcome: &CampaignOutcome,
        oracle: &OracleOutcome,
    ) -> Self {
        let stats: &CampaignStats = &outcome.stats;
        CampaignReport {
            schema_version: SCHEMA_VERSION,
            app: app.to_string(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: ReportConfig {
                budget: config.budget,
                workers: config.workers,
                engines: config
                    .policy
                    .engines
                    .iter()
                    .map(|e| e.id().to_string())
                    .collect(),
                rng_seed: config.rng_seed,
                granularity: config.granularity,
                synth: config.synth,
            },
            stats: ReportStats {
                iterations: stats.iterations,
                aborts: stats.aborts,
                routing_misses: stats.routing_misses,
                corpus_size: outcome.corpus_size as u64,
                unique_responses: stats.unique_responses,
                distinct_edges: outcome.edges.len() as u64,
                max_session_bits: stats.max_session_bits,
                infeasible_requests: stats.infeasible_requests,
                type_checks: stats.type_checks,
            },
            threshold: ThresholdInfo {
                total_accesses: oracle.frequency.total,
                distinct_resources: oracle.frequency.counts.len() as u64,
                mean: oracle.frequency.mean(),
            },
            frequency: oracle
                .frequency
                .counts
                .iter()
                .map(|(resource, count)| FrequencyEntry {
                    resource: resource.clone(),
                    count: *count,
                })
                .collect(),
            weaknesses: oracle.reports.clone(),
        }
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.emit()).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Equality modulo the timestamp field.
    pub fn same_modulo_timestamp(&self, other: &Self) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.timestamp_unix = 0;
        b.timestamp_unix = 0;
        a == b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::Verdict;
    use crate::oracle::WeaknessClass;

    fn sample() -> CampaignReport {
        CampaignReport {
            schema_version: SCHEMA_VERSION,
            app: "demo".into(),
            timestamp_unix: 1_700_000_000,
            config: ReportConfig {
                budget: Budget::iterations(100),
                workers: 1,
                engines: vec!["chromium-corb".into()],
                rng_seed: 7,
                granularity: Granularity::Table,
                synth: SynthOptions::default(),
            },
            stats: ReportStats {
                iterations: 100,
                aborts: 3,
                routing_misses: 1,
                corpus_size: 4,
                unique_responses: 5,
                distinct_edges: 9,
                max_session_bits: 2,
                infeasible_requests: 0,
                type_checks: TypeCheckStats::default(),
            },
            threshold: ThresholdInfo {
                total_accesses: 5,
                distinct_resources: 2,
                mean: 2.5,
            },
            frequency: vec![FrequencyEntry {
                resource: ResourceId {
                    granularity: Granularity::Table,
                    table: "pages".into(),
                    constraint_digest: String::new(),
                },
                count: 4,
            }],
            weaknesses: vec![WeaknessReport {
                app: "demo".into(),
                url: "/api.app".into(),
                seed: 3,
                engine_id: "chromium-corb".into(),
                engine_verdict: Verdict::Allow,
                oracle_verdict: Verdict::Block,
                resource: ResourceId {
                    granularity: Granularity::Table,
                    table: "secrets".into(),
                    constraint_digest: String::new(),
                },
                count: 1,
                threshold: 2.5,
                response_digest: "abc".into(),
                class: WeaknessClass::JsonArray,
            }],
        }
    }

    #[test]
    fn report_round_trips() {
        let report = sample();
        let text = report.emit();
        let back = CampaignReport::parse(&text).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn timestamp_is_ignored_by_modulo_comparison() {
        let a = sample();
        let mut b = sample();
        b.timestamp_unix += 100;
        assert!(a.same_modulo_timestamp(&b));
        b.app = "other".into();
        assert!(!a.same_modulo_timestamp(&b));
    }
}
