//! The campaign driver: a coverage-guided loop over (URL, seed) inputs.
//! Inputs are drawn uniformly from the corpus and the unvisited link
//! frontier, mutated, executed through the synthesis runtime, judged by
//! every configured policy engine, and archived in the result sink when
//! the response is new.

mod bitmap;
mod mutate;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::appscript::{execute, extract_links, parse_program, Edge, Program, TypeCheckStats};
use crate::config::CampaignConfig;
use crate::digest::digest_chunks;
use crate::http::{HttpRequest, HttpResponse, PolicyDecision, Scheme};
use crate::synth::{ResourceAccess, SynthHub};

pub use bitmap::CoverageBitmap;
pub use mutate::{mutate, mutate_with_strategy, CorpusEntry, MutationStrategy};

#[derive(Debug, Error)]
pub enum AppLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: crate::appscript::SyntaxError,
    },
    #[error("no index.app entry point in {0}")]
    NoEntry(String),
}

/// A loaded application: one program per routable `*.app` endpoint; the
/// campaign starts at `/index.app`. Each endpoint gets a block-id offset
/// so edges from different files never alias in the app-wide bitmap.
pub struct AppSet {
    pub app_id: String,
    programs: BTreeMap<String, Program>,
    block_offsets: BTreeMap<String, u32>,
}

pub const ENTRY_URL: &str = "/index.app";

impl AppSet {
    pub fn load(dir: &Path) -> Result<Self, AppLoadError> {
        let app_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "app".to_string());
        let mut programs = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|source| AppLoadError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "app").unwrap_or(false))
            .collect();
        paths.sort();
        for path in paths {
            let source = std::fs::read_to_string(&path).map_err(|source| AppLoadError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let route = format!("/{name}");
            let program = parse_program(&source, &route).map_err(|source| AppLoadError::Parse {
                path: path.display().to_string(),
                source,
            })?;
            programs.insert(route, program);
        }
        if !programs.contains_key(ENTRY_URL) {
            return Err(AppLoadError::NoEntry(dir.display().to_string()));
        }
        let mut block_offsets = BTreeMap::new();
        let mut next = 0u32;
        for (route, program) in &programs {
            block_offsets.insert(route.clone(), next);
            next += program.block_count() as u32;
        }
        Ok(AppSet {
            app_id,
            programs,
            block_offsets,
        })
    }

    pub fn routes(&self) -> impl Iterator<Item = &str> {
        self.programs.keys().map(|s| s.as_str())
    }

    pub fn program(&self, route: &str) -> Option<&Program> {
        self.programs.get(route)
    }

    /// Translate a program-local edge map into app-global block ids.
    pub fn globalize_metrics(
        &self,
        route: &str,
        metrics: &BTreeMap<Edge, u32>,
    ) -> BTreeMap<Edge, u32> {
        let offset = self.block_offsets.get(route).copied().unwrap_or(0);
        let shift = |b: u32| {
            if b == crate::appscript::ENTRY_BLOCK {
                b
            } else {
                b + offset
            }
        };
        metrics
            .iter()
            .map(|((prev, cur), count)| ((shift(*prev), shift(*cur)), *count))
            .collect()
    }
}

/// One archived unique response with everything the oracle needs.
#[derive(Debug, Clone)]
pub struct SinkEntry {
    pub url: String,
    pub seed: u32,
    pub request: HttpRequest,
    pub response: HttpResponse,
    pub response_digest: String,
    pub access_log: Vec<ResourceAccess>,
    pub decisions: BTreeMap<String, PolicyDecision>,
}

/// Decimal digit runs canonicalized to `#`, so seed-varying synthesized
/// numbers do not flood the sink with near-identical responses.
fn canonical_body(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len());
    let mut in_digits = false;
    for &b in body {
        if b.is_ascii_digit() {
            if !in_digits {
                out.push(b'#');
                in_digits = true;
            }
        } else {
            in_digits = false;
            out.push(b);
        }
    }
    out
}

/// Sink identity of a response: status, MIME essence and the
/// digit-canonicalized body.
pub fn response_digest(resp: &HttpResponse) -> String {
    let status = resp.status().to_string();
    let ct = resp.content_type().unwrap_or("NONE").to_string();
    let body = canonical_body(resp.body());
    digest_chunks([status.as_bytes(), ct.as_bytes(), body.as_slice()])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CampaignStats {
    pub iterations: u64,
    pub aborts: u64,
    pub routing_misses: u64,
    pub admissions: u64,
    pub new_coverage_events: u64,
    pub unique_responses: u64,
    pub max_session_bits: u32,
    pub infeasible_requests: u64,
    pub type_checks: TypeCheckStats,
}

pub struct CampaignOutcome {
    pub sink: Vec<SinkEntry>,
    pub stats: CampaignStats,
    pub corpus_size: usize,
    /// Distinct basic-block edges covered across the whole campaign.
    pub edges: BTreeSet<Edge>,
}

struct CampaignState {
    corpus: Vec<CorpusEntry>,
    frontier: Vec<String>,
    seen_urls: HashSet<String>,
    visited: HashSet<(String, u32)>,
    bitmap: CoverageBitmap,
    sink: Vec<SinkEntry>,
    sink_digests: HashSet<String>,
    edges: BTreeSet<Edge>,
    stats: CampaignStats,
    stop: bool,
}

impl CampaignState {
    fn new() -> Self {
        let mut seen_urls = HashSet::new();
        seen_urls.insert(ENTRY_URL.to_string());
        CampaignState {
            corpus: Vec::new(),
            frontier: vec![ENTRY_URL.to_string()],
            seen_urls,
            visited: HashSet::new(),
            bitmap: CoverageBitmap::new(),
            sink: Vec::new(),
            sink_digests: HashSet::new(),
            edges: BTreeSet::new(),
            stats: CampaignStats::default(),
            stop: false,
        }
    }
}

/// Run one campaign over one application. Deterministic when
/// `config.workers == 1`: all randomness flows from `config.rng_seed`.
pub fn run_campaign(apps: &AppSet, config: &CampaignConfig) -> CampaignOutcome {
    let hub = SynthHub::new(config.synth);
    let state = Mutex::new(CampaignState::new());
    let deadline = config.budget.max_time().map(|d| Instant::now() + d);

    if config.workers <= 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        run_worker(apps, config, &hub, &state, &mut rng, deadline);
    } else {
        std::thread::scope(|scope| {
            for worker in 0..config.workers {
                let hub = &hub;
                let state = &state;
                let mut rng =
                    ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(worker as u64));
                scope.spawn(move || run_worker(apps, config, hub, state, &mut rng, deadline));
            }
        });
    }

    let state = state.into_inner().unwrap();
    CampaignOutcome {
        sink: state.sink,
        stats: state.stats,
        corpus_size: state.corpus.len(),
        edges: state.edges,
    }
}

fn run_worker(
    apps: &AppSet,
    config: &CampaignConfig,
    hub: &SynthHub,
    state: &Mutex<CampaignState>,
    rng: &mut ChaCha8Rng,
    deadline: Option<Instant>,
) {
    loop {
        // Selection and bookkeeping under the lock; execution outside.
        let entry = {
            let mut st = state.lock().unwrap();
            if st.stop {
                return;
            }
            if let Some(max) = config.budget.max_iterations {
                if st.stats.iterations >= max {
                    st.stop = true;
                    return;
                }
            }
            if let Some(deadline) = deadline {
                if Instant::now() >= deadline {
                    st.stop = true;
                    return;
                }
            }
            st.stats.iterations += 1;

            if st.corpus.is_empty() && st.frontier.is_empty() {
                st.frontier.push(ENTRY_URL.to_string());
            }
            let corpus_len = st.corpus.len();
            let total = corpus_len + st.frontier.len();
            let idx = rng.gen_range(0..total);
            let picked = if idx < corpus_len {
                st.corpus[idx].clone()
            } else {
                let url = st.frontier.remove(idx - corpus_len);
                match HttpRequest::parse_url(Scheme::Https, &url, true) {
                    Ok(request) => CorpusEntry {
                        request,
                        seed: rng.gen(),
                    },
                    Err(_) => {
                        st.stats.routing_misses += 1;
                        continue;
                    }
                }
            };
            let mutated = mutate(&picked, rng);
            st.visited
                .insert((mutated.request.url_string(), mutated.seed));
            mutated
        };

        let Some(program) = apps.program(entry.request.path()) else {
            state.lock().unwrap().stats.routing_misses += 1;
            continue;
        };
        let result = execute(program, &entry.request, entry.seed, hub);

        let mut st = state.lock().unwrap();
        st.stats.type_checks.merge(&result.type_checks);
        st.stats.max_session_bits = st.stats.max_session_bits.max(result.bits_consumed);
        if !result.session_feasible {
            st.stats.infeasible_requests += 1;
        }
        if result.aborted {
            st.stats.aborts += 1;
            continue;
        }
        let metrics = apps.globalize_metrics(entry.request.path(), &result.metrics);
        st.edges.extend(metrics.keys().copied());

        for link in extract_links(&result.response) {
            let resolved = crate::appscript::resolve_link(entry.request.path(), &link);
            if st.seen_urls.insert(resolved.clone()) {
                st.frontier.push(resolved);
            }
        }

        if st.bitmap.is_new_coverage(&metrics) {
            st.bitmap.merge(&metrics);
            st.corpus.push(entry.clone());
            st.stats.admissions += 1;
            st.stats.new_coverage_events += 1;
        }

        let digest = response_digest(&result.response);
        if st.sink_digests.insert(digest.clone()) {
            let decisions: BTreeMap<String, PolicyDecision> = config
                .policy
                .engines
                .iter()
                .map(|engine| {
                    let d = engine.check(
                        &result.response,
                        &config.policy.protected,
                        &config.policy.orb,
                    );
                    (d.engine_id.clone(), d)
                })
                .collect();
            st.stats.unique_responses += 1;
            st.sink.push(SinkEntry {
                url: entry.request.url_string(),
                seed: entry.seed,
                request: entry.request.clone(),
                response: result.response,
                response_digest: digest,
                access_log: result.access_log,
                decisions,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::Scheme;

    #[test]
    fn digit_runs_collapse_in_digests() {
        let a = HttpResponse::new(
            Scheme::Https,
            200,
            vec![("Content-Type".into(), "application/json".into())],
            b"{\"a\":1}".to_vec(),
        )
        .unwrap();
        let b = HttpResponse::new(
            Scheme::Https,
            200,
            vec![("Content-Type".into(), "application/json".into())],
            b"{\"a\":23}".to_vec(),
        )
        .unwrap();
        assert_eq!(response_digest(&a), response_digest(&b));

        let c = HttpResponse::new(
            Scheme::Https,
            200,
            vec![("Content-Type".into(), "text/html".into())],
            b"{\"a\":1}".to_vec(),
        )
        .unwrap();
        assert_ne!(response_digest(&a), response_digest(&c));

        assert_eq!(response_digest(&a), response_digest(&a));
    }
}
