//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Campaign-running criteria serialize on a shared lock so
//! wall-clock budgets are not distorted by test parallelism.
//!
//! Run with: cargo test -p policyfuzz --test acceptance -- --nocapture

mod common;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use policyfuzz::appscript::execute;
use policyfuzz::config::{Budget, CampaignConfig};
use policyfuzz::fuzzer::{response_digest, run_campaign, AppSet, CampaignOutcome, SinkEntry};
use policyfuzz::http::{HttpRequest, Scheme};
use policyfuzz::oracle::{run_oracle, Granularity, WeaknessClass};
use policyfuzz::policy::sniff_json;
use policyfuzz::report::CampaignReport;
use policyfuzz::synth::{SynthHub, SynthOptions};

use common::{check_replay_case, corpus_dir, fixture_path, generate_query};

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn campaign(
    app: &str,
    budget: Budget,
    rng_seed: u64,
    synth: SynthOptions,
) -> (AppSet, CampaignConfig, CampaignOutcome) {
    let dir = corpus_dir(app);
    let apps = AppSet::load(&dir).expect("bundled app loads");
    let mut config = CampaignConfig::new(&dir);
    config.budget = budget;
    config.rng_seed = rng_seed;
    config.synth = synth;
    config.validate().unwrap();
    let outcome = run_campaign(&apps, &config);
    (apps, config, outcome)
}

fn pass(n: u32, what: &str) {
    println!("ACCEPTANCE {n} ({what}): PASS");
}

#[test]
fn acceptance_1_weakness_class_reproduction() {
    let _guard = heavy();
    let started = Instant::now();
    let cases = [
        ("json-array", WeaknessClass::JsonArray),
        ("malformed-json", WeaknessClass::MalformedJsonKey),
        ("prepended-warning", WeaknessClass::PrependedContent),
    ];
    for (app, expected_class) in cases {
        let (apps, config, outcome) = campaign(
            app,
            Budget::time(Duration::from_secs(30)),
            1,
            SynthOptions::default(),
        );
        let oracle = run_oracle(&outcome.sink, Granularity::Table, &apps.app_id);
        let matching: Vec<_> = oracle
            .reports
            .iter()
            .filter(|r| r.engine_id == "chromium-corb" && r.class == expected_class)
            .collect();
        assert!(
            !matching.is_empty(),
            "{app}: no chromium-corb report with class {expected_class} \
             ({} iterations, {} sink entries, reports: {:?})",
            outcome.stats.iterations,
            outcome.sink.len(),
            oracle
                .reports
                .iter()
                .map(|r| (&r.engine_id, r.class))
                .collect::<Vec<_>>(),
        );
        if expected_class == WeaknessClass::JsonArray {
            let webkit_json_array = oracle
                .reports
                .iter()
                .any(|r| r.engine_id == "webkit-corb" && r.class == WeaknessClass::JsonArray);
            assert!(
                !webkit_json_array,
                "{app}: webkit-corb must block the array response"
            );
        }
        let _ = config;
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(120),
        "took {elapsed:?}, expected under 2 minutes"
    );
    pass(1, "weakness-class reproduction");
}

#[test]
fn acceptance_2_sniffer_truth_table() {
    // The four named examples plus twenty bodies covering arrays, escaped
    // vs raw control characters, whitespace prefixes and prepended text.
    let cases: [(&[u8], bool); 24] = [
        (b"{\"a\":1}", true),
        (b"{\"\x17-raw-control-char\":\"s\"}", false),
        (b"[1,2,3]", false),
        (b"Warning: undefined index in /app.php{\"a\":1}", false),
        (b"", false),
        (b"   {\"k\":1}", true),
        (b"\t\n{\"k\":\"v\"}", true),
        (b"{ \"k\":1}", true),
        (b"{\"\":1}", true),
        (b"{\"a", false),
        (b"{", false),
        (b"{\"a\\\"b\":1}", true),
        (b"{\"a\\\\\":1}", true),
        (b"{\"a\\\x17b\":1}", true),
        (b"{\"\x00\":1}", false),
        (b"{\"\x1f\":1}", false),
        (b"{\"a b\":1}", true),
        (b"[{\"a\":1}]", false),
        (b"war{\"a\":1}", false),
        (b" [1]", false),
        (b"{\"key_with_more\":[1,2]}", true),
        (b"{'a':1}", false),
        (b"x", false),
        (b"{\"a\\", false),
    ];
    for (i, (body, expected)) in cases.iter().enumerate() {
        let verdict = sniff_json(body);
        assert_eq!(
            verdict.matches,
            *expected,
            "fixture {i} ({:?}) expected matches={expected}",
            String::from_utf8_lossy(body)
        );
        assert!(verdict.consumed_prefix_len <= body.len());
    }
    pass(2, "sniffer truth table, 24/24 fixtures");
}

#[test]
fn acceptance_3_replay_soundness_1000_queries() {
    let started = Instant::now();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0xac3);
    let mut checked = 0usize;
    let mut skipped = 0usize;
    while checked < 1000 {
        let case = generate_query(&mut rng);
        match check_replay_case(&case) {
            Ok(true) => checked += 1,
            Ok(false) => skipped += 1,
            Err(e) => panic!("replay mismatch: {e}"),
        }
        assert!(skipped < 4000, "generator keeps producing unsolvable cases");
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(60),
        "took {elapsed:?}, budget is 60s"
    );
    pass(
        3,
        &format!("replay soundness, 1000 queries in {elapsed:.2?} ({skipped} unsat skips)"),
    );
}

#[test]
fn acceptance_4_type_inference_effect() {
    let _guard = heavy();
    let budget = Budget::iterations(500);
    let (_, _, with) = campaign("typed-fields", budget, 5, SynthOptions::default());
    let (_, _, without) = campaign(
        "typed-fields",
        budget,
        5,
        SynthOptions {
            type_inference: false,
            ..Default::default()
        },
    );
    let frac = |t: &policyfuzz::appscript::TypeCheckStats| {
        assert!(t.cmp_total > 0, "no comparison generations observed");
        t.cmp_correct as f64 / t.cmp_total as f64
    };
    let on = frac(&with.stats.type_checks);
    let off = frac(&without.stats.type_checks);
    let delta_pp = (on - off) * 100.0;
    assert!(
        delta_pp >= 10.0,
        "comparison correct-type fraction: {on:.3} with inference vs {off:.3} without \
         ({delta_pp:.1}pp, need >= 10pp)"
    );
    pass(
        4,
        &format!("type-inference effect, +{delta_pp:.1}pp on comparisons"),
    );
}

#[test]
fn acceptance_5_auth_bypass_coverage_effect() {
    let _guard = heavy();
    // Every bundled app whose source gates behavior on session or cookie
    // state must cover strictly more edges with session synthesis on.
    let gated_apps: Vec<String> = std::fs::read_dir(corpus_dir(""))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter(|e| {
            std::fs::read_dir(e.path()).unwrap().any(|f| {
                let f = match f {
                    Ok(f) => f,
                    Err(_) => return false,
                };
                std::fs::read_to_string(f.path())
                    .map(|s| s.contains("isset(session[") || s.contains("isset(cookie["))
                    .unwrap_or(false)
            })
        })
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    assert!(gated_apps.contains(&"auth-gated".to_string()));

    let budget = Budget::iterations(400);
    for app in &gated_apps {
        let (_, _, with) = campaign(app, budget, 5, SynthOptions::default());
        let (_, _, without) = campaign(
            app,
            budget,
            5,
            SynthOptions {
                session_synthesis: false,
                ..Default::default()
            },
        );
        let on = with.edges.len();
        let off = without.edges.len();
        assert!(
            on > off,
            "{app}: {on} edges with session synthesis vs {off} without"
        );
        if app == "auth-gated" {
            assert!(
                on as f64 >= 1.5 * off as f64,
                "auth-gated: {on} vs {off} edges, need >= 1.5x"
            );
        }
    }
    pass(
        5,
        &format!("auth-bypass coverage effect on {:?}", gated_apps),
    );
}

#[test]
fn acceptance_6_session_feasibility() {
    let _guard = heavy();
    let (_, _, outcome) = campaign(
        "auth-gated",
        Budget::iterations(1000),
        7,
        SynthOptions::default(),
    );
    assert_eq!(outcome.stats.iterations, 1000);
    assert_eq!(
        outcome.stats.infeasible_requests, 0,
        "every request's final constraint cache must be satisfiable"
    );
    assert!(
        outcome.stats.max_session_bits <= 32,
        "bit budget exceeded: {}",
        outcome.stats.max_session_bits
    );
    pass(
        6,
        &format!(
            "session feasibility over 1000 requests, observed max {} bits",
            outcome.stats.max_session_bits
        ),
    );
}

#[test]
fn acceptance_7_determinism() {
    let _guard = heavy();
    let run = || {
        let (apps, config, outcome) = campaign(
            "auth-gated",
            Budget::iterations(300),
            9,
            SynthOptions::default(),
        );
        let oracle = run_oracle(&outcome.sink, config.granularity, &apps.app_id);
        CampaignReport::assemble(&apps.app_id, &config, &outcome, &oracle)
    };
    let first = run();
    let second = run();
    assert!(
        first.same_modulo_timestamp(&second),
        "reports differ:\n{}\n---\n{}",
        first.emit(),
        second.emit()
    );
    pass(7, "deterministic single-worker reports");
}

#[derive(serde::Deserialize)]
struct OracleFixture {
    requests: Vec<FixtureRequest>,
    table: FixtureExpectation,
    row: FixtureExpectation,
}

#[derive(serde::Deserialize)]
struct FixtureRequest {
    url: String,
    seed: u32,
}

#[derive(serde::Deserialize)]
struct FixtureExpectation {
    /// table name -> sorted per-resource counts at this granularity
    frequency: BTreeMap<String, Vec<u64>>,
    blocked: Vec<usize>,
}

#[test]
fn acceptance_8_oracle_hand_check() {
    let fixture: OracleFixture = serde_json::from_str(
        &std::fs::read_to_string(fixture_path("oracle_multi_table.json")).unwrap(),
    )
    .unwrap();
    let dir = corpus_dir("multi-table");
    let apps = AppSet::load(&dir).unwrap();
    let hub = SynthHub::new(SynthOptions::default());
    let config = CampaignConfig::new(&dir);

    let mut sink: Vec<SinkEntry> = Vec::new();
    for req in &fixture.requests {
        let request = HttpRequest::parse_url(Scheme::Https, &req.url, true).unwrap();
        let program = apps.program(request.path()).expect("fixture route exists");
        let result = execute(program, &request, req.seed, &hub);
        assert!(
            !result.aborted,
            "{} seed {} aborted: {:?}",
            req.url, req.seed, result.abort_reason
        );
        let digest = response_digest(&result.response);
        assert!(
            !sink.iter().any(|e| e.response_digest == digest),
            "fixture responses must be pairwise unique"
        );
        let decisions = config
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
        sink.push(SinkEntry {
            url: request.url_string(),
            seed: req.seed,
            request,
            response: result.response,
            response_digest: digest,
            access_log: result.access_log,
            decisions,
        });
    }

    for (granularity, expectation) in [
        (Granularity::Table, &fixture.table),
        (Granularity::Row, &fixture.row),
    ] {
        let outcome = run_oracle(&sink, granularity, &apps.app_id);
        let mut got: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for (resource, count) in &outcome.frequency.counts {
            got.entry(resource.table.clone()).or_default().push(*count);
        }
        for counts in got.values_mut() {
            counts.sort();
        }
        assert_eq!(got, expectation.frequency, "{granularity} frequency table");
        assert_eq!(
            outcome.blocked_entries, expectation.blocked,
            "{granularity} blocked set"
        );
    }
    pass(8, "oracle hand-check at both granularities");
}
