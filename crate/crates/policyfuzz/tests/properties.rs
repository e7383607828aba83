//! Property tests for the framework's structural invariants: header semantics, engine
//! relationships, edge-metric soundness over generated programs, and
//! campaign-level guarantees on the bundled corpus.

mod common;

use proptest::prelude::*;

use policyfuzz::appscript::{execute, parse_program, ENTRY_BLOCK};
use policyfuzz::config::{Budget, CampaignConfig, PolicyConfig};
use policyfuzz::fuzzer::{run_campaign, AppSet};
use policyfuzz::http::{parse_content_type, HttpRequest, HttpResponse, Reason, Scheme, Verdict};
use policyfuzz::policy::{corb_check_chromium, corb_check_webkit, orb_check, sniff_json};
use policyfuzz::synth::{SynthHub, SynthOptions};

use common::corpus_dir;

fn any_scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Http), Just(Scheme::Https), Just(Scheme::Other)]
}

fn header_name() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z-]{0,10}"
}

proptest! {
    #[test]
    fn header_lookup_is_case_insensitive_last_wins(
        base in header_name(),
        values in proptest::collection::vec("[ -~&&[^\r\n]]{0,12}", 1..5),
        flips in proptest::collection::vec(any::<bool>(), 1..5),
        noise in proptest::collection::vec((header_name(), "[ -~&&[^\r\n]]{0,12}"), 0..4),
    ) {
        // Insert the same logical header several times in random case,
        // interleaved with unrelated headers.
        let mut headers: Vec<(String, String)> = Vec::new();
        let mut last = None;
        for (i, value) in values.iter().enumerate() {
            let cased: String = base
                .chars()
                .map(|c| if flips[i % flips.len()] { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
                .collect();
            headers.push((cased, value.clone()));
            last = Some(value.clone());
            if let Some((n, v)) = noise.get(i) {
                if !n.eq_ignore_ascii_case(&base) {
                    headers.push((n.clone(), v.clone()));
                }
            }
        }
        let resp = HttpResponse::new(Scheme::Https, 200, headers, vec![]).unwrap();
        prop_assert_eq!(resp.header(&base.to_ascii_uppercase()), last.as_deref());
    }

    #[test]
    fn parse_content_type_is_idempotent(raw in "[ -~]{0,30}") {
        if let Some(essence) = parse_content_type(&raw) {
            prop_assert_eq!(parse_content_type(&essence), Some(essence.clone()));
        }
    }

    #[test]
    fn capture_round_trips(
        scheme in any_scheme(),
        status in 100u16..=599,
        headers in proptest::collection::vec(
            (header_name(), "[ -~&&[^\r\n]]{0,16}"),
            0..5
        ),
        body in proptest::collection::vec(any::<u8>(), 0..200),
    ) {
        let resp = HttpResponse::new(scheme, status, headers, body).unwrap();
        let back = HttpResponse::from_capture(&resp.to_capture()).unwrap();
        prop_assert_eq!(resp, back);
    }

    #[test]
    fn non_http_schemes_are_allowed_by_every_engine(
        ct in prop_oneof![Just(Some("application/json")), Just(Some("text/html")), Just(None)],
        body in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        let policy = PolicyConfig::default();
        let headers = ct
            .map(|c| vec![("Content-Type".to_string(), c.to_string())])
            .unwrap_or_default();
        let resp = HttpResponse::new(Scheme::Other, 200, headers, body).unwrap();
        prop_assert_eq!(corb_check_chromium(&resp, &policy.protected).verdict, Verdict::Allow);
        prop_assert_eq!(corb_check_webkit(&resp, &policy.protected).verdict, Verdict::Allow);
        prop_assert_eq!(orb_check(&resp, &policy.orb).verdict, Verdict::Allow);
    }

    #[test]
    fn webkit_block_implies_chromium_block_or_sniff_mismatch(
        scheme in any_scheme(),
        ct in prop_oneof![
            Just("application/json"), Just("text/xml"), Just("text/html"),
            Just("text/plain"), Just("image/png"), Just("text/css"),
        ],
        body in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        let policy = PolicyConfig::default();
        let headers = vec![("Content-Type".to_string(), ct.to_string())];
        let resp = HttpResponse::new(scheme, 200, headers, body).unwrap();
        let webkit = corb_check_webkit(&resp, &policy.protected);
        let chromium = corb_check_chromium(&resp, &policy.protected);
        if webkit.verdict == Verdict::Block {
            prop_assert!(
                chromium.verdict == Verdict::Block || chromium.reason == Reason::SniffMismatch,
                "webkit blocked but chromium said {:?}", chromium
            );
        }
        // Engines are pure: a second call agrees.
        prop_assert_eq!(corb_check_chromium(&resp, &policy.protected), chromium);
    }

    #[test]
    fn sniff_json_consumption_is_bounded(body in proptest::collection::vec(any::<u8>(), 0..128)) {
        let v = sniff_json(&body);
        prop_assert!(v.consumed_prefix_len <= body.len());
        if v.matches {
            // Never reads past the quote closing the first key.
            let consumed = &body[..v.consumed_prefix_len];
            prop_assert_eq!(consumed.last(), Some(&b'"'));
        }
    }
}

/// A tiny generated program: statements rendered to source so the whole
/// parse/number/execute pipeline is exercised.
#[derive(Debug, Clone)]
enum GenStmt {
    Echo(String),
    EchoParam(String),
    AssignCmp(String, i64, i64),
    If(Box<GenCond>, Vec<GenStmt>, Vec<GenStmt>),
}

#[derive(Debug, Clone)]
enum GenCond {
    ParamSet(String),
    SessionSet(String),
    LitCmp(i64, i64),
}

fn render(stmts: &[GenStmt], out: &mut String) {
    for stmt in stmts {
        match stmt {
            GenStmt::Echo(s) => out.push_str(&format!("echo \"{s}\";\n")),
            GenStmt::EchoParam(p) => out.push_str(&format!(
                "if (isset(param[\"{p}\"])) {{ echo param[\"{p}\"]; }}\n"
            )),
            GenStmt::AssignCmp(name, a, b) => out.push_str(&format!("{name} = {a} < {b};\n")),
            GenStmt::If(cond, then_branch, else_branch) => {
                let cond_src = match &**cond {
                    GenCond::ParamSet(p) => format!("isset(param[\"{p}\"])"),
                    GenCond::SessionSet(k) => format!("isset(session[\"{k}\"])"),
                    GenCond::LitCmp(a, b) => format!("{a} <= {b}"),
                };
                out.push_str(&format!("if ({cond_src}) {{\n"));
                render(then_branch, out);
                out.push_str("} else {\n");
                render(else_branch, out);
                out.push_str("}\n");
            }
        }
    }
}

fn gen_stmt() -> impl Strategy<Value = GenStmt> {
    let leaf = prop_oneof![
        "[a-z]{1,6}".prop_map(GenStmt::Echo),
        "[a-z]{1,4}".prop_map(GenStmt::EchoParam),
        ("[a-z]{1,4}", -5i64..5, -5i64..5).prop_map(|(n, a, b)| GenStmt::AssignCmp(n, a, b)),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        (
            prop_oneof![
                "[a-z]{1,4}".prop_map(GenCond::ParamSet),
                "[a-z]{1,4}".prop_map(GenCond::SessionSet),
                (-5i64..5, -5i64..5).prop_map(|(a, b)| GenCond::LitCmp(a, b)),
            ],
            proptest::collection::vec(inner.clone(), 0..3),
            proptest::collection::vec(inner, 0..3),
        )
            .prop_map(|(c, t, e)| GenStmt::If(Box::new(c), t, e))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_metrics_are_sound_for_generated_programs(
        stmts in proptest::collection::vec(gen_stmt(), 1..6),
        seed in any::<u32>(),
        with_param in any::<bool>(),
    ) {
        let mut source = String::new();
        render(&stmts, &mut source);
        let program = parse_program(&source, "gen.app").unwrap();
        let params = if with_param {
            vec![("a".to_string(), "1".to_string())]
        } else {
            vec![]
        };
        let request = HttpRequest::new(Scheme::Https, "/gen.app", params, true).unwrap();
        let hub = SynthHub::new(SynthOptions::default());
        let result = execute(&program, &request, seed, &hub);

        for edge in result.metrics.keys() {
            prop_assert!(
                program.static_edges().contains(edge),
                "edge {edge:?} not in static set {:?}\nsource:\n{source}",
                program.static_edges()
            );
        }
        if result.response.status() == 200 {
            prop_assert!(result.metrics.contains_key(&(ENTRY_BLOCK, 0)));
        }

        // Weak bijection: replaying the same seed against a fresh hub
        // yields the same decisions and the same response bytes.
        let hub2 = SynthHub::new(SynthOptions::default());
        let replay = execute(&program, &request, seed, &hub2);
        prop_assert_eq!(&result.session_trace, &replay.session_trace);
        prop_assert_eq!(result.response, replay.response);
    }
}

#[test]
fn static_app_sink_has_exactly_one_entry_regardless_of_budget() {
    let dir = corpus_dir("static-page");
    let apps = AppSet::load(&dir).unwrap();
    for iterations in [50u64, 500] {
        let mut config = CampaignConfig::new(&dir);
        config.budget = Budget::iterations(iterations);
        config.rng_seed = 13;
        let outcome = run_campaign(&apps, &config);
        assert_eq!(outcome.sink.len(), 1);
        // Corpus admission happened exactly once: the first input covered
        // everything there is to cover.
        assert_eq!(outcome.corpus_size, 1);
        assert_eq!(outcome.stats.admissions, outcome.stats.new_coverage_events);
    }
}

#[test]
fn array_app_sink_contains_the_engine_disagreement() {
    let dir = corpus_dir("json-array");
    let apps = AppSet::load(&dir).unwrap();
    let mut config = CampaignConfig::new(&dir);
    config.budget = Budget::iterations(1200);
    config.rng_seed = 42;
    let outcome = run_campaign(&apps, &config);
    let contrast = outcome.sink.iter().find(|entry| {
        entry.decisions.get("chromium-corb").map(|d| d.verdict) == Some(Verdict::Allow)
            && entry.decisions.get("webkit-corb").map(|d| d.verdict) == Some(Verdict::Block)
    });
    assert!(
        contrast.is_some(),
        "no sink entry where the engines disagree"
    );

    // Sink decisions are total: every entry carries every engine. And the
    // frontier is sound: every archived URL routes to a real endpoint,
    // since inputs only come from the entry URL, corpus mutations (which
    // preserve the path) and extracted links.
    let routes: Vec<&str> = apps.routes().collect();
    for entry in &outcome.sink {
        let keys: Vec<&String> = entry.decisions.keys().collect();
        assert_eq!(
            keys.len(),
            config.policy.engines.len(),
            "decisions: {keys:?}"
        );
        assert!(routes.contains(&entry.request.path()), "{}", entry.url);
    }
}

#[test]
fn campaign_taint_and_lazy_concretization_hold_on_auth_app() {
    // The gate key is only ever used by isset, so it must never be
    // concretized into the global session cache.
    let dir = corpus_dir("auth-gated");
    let apps = AppSet::load(&dir).unwrap();
    let hub = SynthHub::new(SynthOptions::default());
    let program = apps.program("/index.app").unwrap();
    for seed in 0..32u32 {
        let request = HttpRequest::new(Scheme::Https, "/index.app", vec![], true).unwrap();
        let result = execute(program, &request, seed, &hub);
        assert!(!result.aborted);
        assert!(
            !hub.sessions()
                .has_entry(seed, policyfuzz::synth::SessionKind::Session, "is_auth"),
            "isset-only key was concretized for seed {seed}"
        );
    }
}

#[test]
fn multi_worker_campaign_completes_with_shared_state() {
    let dir = corpus_dir("json-array");
    let apps = AppSet::load(&dir).unwrap();
    let mut config = CampaignConfig::new(&dir);
    config.budget = Budget::iterations(400);
    config.workers = 4;
    config.rng_seed = 17;
    let outcome = run_campaign(&apps, &config);
    assert_eq!(outcome.stats.iterations, 400);
    assert!(outcome.stats.unique_responses > 0);
    for entry in &outcome.sink {
        assert_eq!(entry.decisions.len(), config.policy.engines.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Two executions with equal programs, requests, seeds and cache
    /// contents produce equal results, whatever the corpus app.
    #[test]
    fn no_hidden_state_across_corpus_apps(
        seed in any::<u32>(),
        app_idx in 0usize..4,
    ) {
        let app = ["json-array", "malformed-json", "auth-gated", "typed-fields"][app_idx];
        let dir = corpus_dir(app);
        let apps = AppSet::load(&dir).unwrap();
        let program = apps.program("/index.app").unwrap();
        let request = HttpRequest::new(Scheme::Https, "/index.app", vec![], true).unwrap();
        let run = || {
            let hub = SynthHub::new(SynthOptions::default());
            execute(program, &request, seed, &hub)
        };
        let a = run();
        let b = run();
        prop_assert_eq!(a.response, b.response);
        prop_assert_eq!(a.metrics, b.metrics);
        prop_assert_eq!(a.access_log, b.access_log);
        prop_assert_eq!(a.bits_consumed, b.bits_consumed);
    }
}
