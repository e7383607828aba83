//! The post-campaign confidentiality oracle: count how often each database
//! resource was touched across the sink, threshold at the mean, and flag
//! engine ALLOW decisions on responses whose resources sit below it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fuzzer::SinkEntry;
use crate::http::{HttpResponse, Verdict};
use crate::policy::sniff::{sniff_html, sniff_json, sniff_xml};

/// Resource counting unit: whole tables (coarse) or constraint-identified
/// rows (fine).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Table,
    Row,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Table => "table",
            Granularity::Row => "row",
        })
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Granularity::Table),
            "row" => Ok(Granularity::Row),
            other => Err(format!("unknown granularity {other:?} (table|row)")),
        }
    }
}

/// One counted resource. At TABLE granularity the digest is empty; ROW
/// ids are equal exactly when table and digest agree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceId {
    pub granularity: Granularity,
    pub table: String,
    pub constraint_digest: String,
}

impl ResourceId {
    fn from_access(granularity: Granularity, table: &str, row_digest: &str) -> Self {
        ResourceId {
            granularity,
            table: table.to_string(),
            constraint_digest: match granularity {
                Granularity::Table => String::new(),
                Granularity::Row => row_digest.to_string(),
            },
        }
    }

    /// The TABLE-granularity resource this ROW resource refines into.
    pub fn coarsened(&self) -> ResourceId {
        ResourceId {
            granularity: Granularity::Table,
            table: self.table.clone(),
            constraint_digest: String::new(),
        }
    }
}

/// Access counts over the whole campaign plus the exact mean threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub counts: BTreeMap<ResourceId, u64>,
    pub total: u64,
}

impl FrequencyTable {
    pub fn mean(&self) -> f64 {
        if self.counts.is_empty() {
            0.0
        } else {
            self.total as f64 / self.counts.len() as f64
        }
    }

    /// Exact `count < mean` without floating point:
    /// count * resources < total.
    pub fn below_mean(&self, count: u64) -> bool {
        (count as u128) * (self.counts.len() as u128) < self.total as u128
    }
}

/// Pattern tag describing how a weakness-bearing response dodges sniffing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeaknessClass {
    JsonArray,
    MalformedJsonKey,
    PrependedContent,
    Unclassified,
}

impl fmt::Display for WeaknessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeaknessClass::JsonArray => "JSON_ARRAY",
            WeaknessClass::MalformedJsonKey => "MALFORMED_JSON_KEY",
            WeaknessClass::PrependedContent => "PREPENDED_CONTENT",
            WeaknessClass::Unclassified => "UNCLASSIFIED",
        })
    }
}

/// A sink entry the oracle judged confidential but an engine allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeaknessReport {
    pub app: String,
    pub url: String,
    pub seed: u32,
    pub engine_id: String,
    pub engine_verdict: Verdict,
    pub oracle_verdict: Verdict,
    pub resource: ResourceId,
    pub count: u64,
    pub threshold: f64,
    pub response_digest: String,
    pub class: WeaknessClass,
}

/// Full oracle output: the frequency table, which sink entries it would
/// block, and the disagreement reports.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub granularity: Granularity,
    pub frequency: FrequencyTable,
    /// Indexes into the sink of entries judged confidential.
    pub blocked_entries: Vec<usize>,
    pub reports: Vec<WeaknessReport>,
}

fn build_frequency(sink: &[SinkEntry], granularity: Granularity) -> FrequencyTable {
    let mut counts: BTreeMap<ResourceId, u64> = BTreeMap::new();
    let mut total = 0u64;
    for entry in sink {
        for access in &entry.access_log {
            let id = ResourceId::from_access(granularity, &access.table, &access.row_digest);
            *counts.entry(id).or_insert(0) += 1;
            total += 1;
        }
    }
    FrequencyTable { counts, total }
}

/// Run the oracle over a finished campaign's sink. Strictly post-hoc: the
/// sink is immutable here. An empty sink yields an empty report list.
pub fn run_oracle(sink: &[SinkEntry], granularity: Granularity, app: &str) -> OracleOutcome {
    let frequency = build_frequency(sink, granularity);
    let mut blocked_entries = Vec::new();
    let mut reports = Vec::new();
    for (idx, entry) in sink.iter().enumerate() {
        // The offending resource is the rarest one the response touched.
        let offending = entry
            .access_log
            .iter()
            .map(|access| {
                let id = ResourceId::from_access(granularity, &access.table, &access.row_digest);
                let count = frequency.counts.get(&id).copied().unwrap_or(0);
                (count, id)
            })
            .filter(|(count, _)| frequency.below_mean(*count))
            .min();
        let Some((count, resource)) = offending else {
            continue;
        };
        blocked_entries.push(idx);
        if !entry.request.cross_origin() {
            continue;
        }
        let class = classify_weakness(&entry.response);
        for decision in entry.decisions.values() {
            if decision.verdict != Verdict::Allow {
                continue;
            }
            reports.push(WeaknessReport {
                app: app.to_string(),
                url: entry.url.clone(),
                seed: entry.seed,
                engine_id: decision.engine_id.clone(),
                engine_verdict: Verdict::Allow,
                oracle_verdict: Verdict::Block,
                resource: resource.clone(),
                count,
                threshold: frequency.mean(),
                response_digest: entry.response_digest.clone(),
                class,
            });
        }
    }
    OracleOutcome {
        granularity,
        frequency,
        blocked_entries,
        reports,
    }
}

fn first_non_ws(body: &[u8]) -> Option<u8> {
    body.iter()
        .copied()
        .find(|b| !matches!(b, b' ' | b'\t' | b'\n' | b'\r'))
}

/// True when the first JSON key contains a raw control character.
fn has_malformed_first_key(body: &[u8]) -> bool {
    if first_non_ws(body) != Some(b'{') {
        return false;
    }
    let start = body.iter().position(|&b| b == b'{').unwrap_or(0);
    let mut i = start + 1;
    while i < body.len() && matches!(body[i], b' ' | b'\t' | b'\n' | b'\r') {
        i += 1;
    }
    if body.get(i) != Some(&b'"') {
        return false;
    }
    i += 1;
    while i < body.len() {
        match body[i] {
            b'\\' => i += 2,
            b'"' => return false,
            b if b <= 0x1f => return true,
            _ => i += 1,
        }
    }
    false
}

/// A non-matching prefix sitting in front of content that would sniff as
/// protected (JSON/XML/HTML).
fn has_prepended_protected_content(body: &[u8]) -> bool {
    let Some(pos) = body.iter().position(|&b| matches!(b, b'{' | b'<')) else {
        return false;
    };
    if pos == 0
        || body[..pos]
            .iter()
            .all(|b| matches!(b, b' ' | b'\t' | b'\n' | b'\r'))
    {
        return false;
    }
    let suffix = &body[pos..];
    sniff_json(suffix).matches || sniff_xml(suffix).matches || sniff_html(suffix).matches
}

/// Tag the code pattern a weakness-bearing response exhibits.
pub fn classify_weakness(response: &HttpResponse) -> WeaknessClass {
    let body = response.body();
    if first_non_ws(body) == Some(b'[') {
        return WeaknessClass::JsonArray;
    }
    if has_malformed_first_key(body) {
        return WeaknessClass::MalformedJsonKey;
    }
    if has_prepended_protected_content(body) {
        return WeaknessClass::PrependedContent;
    }
    WeaknessClass::Unclassified
}
