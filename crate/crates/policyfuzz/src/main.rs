//! Command-line front end: batch campaigns, single-response checks and the
//! synthesis debugging verbs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use policyfuzz::appscript::execute;
use policyfuzz::config::{Budget, CampaignConfig, PolicyConfig};
use policyfuzz::fuzzer::{run_campaign, AppSet};
use policyfuzz::http::{HttpRequest, HttpResponse, Scheme};
use policyfuzz::oracle::{run_oracle, Granularity};
use policyfuzz::report::CampaignReport;
use policyfuzz::synth::{SynthHub, SynthOptions, ValueType};

#[derive(Parser)]
#[command(
    name = "policyfuzz",
    about = "Fuzz simulated web applications and difference browser read-blocking policies against a state-aware oracle",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuzz one application directory and write a weakness report.
    Run(RunArgs),
    /// Print each engine's decision for a captured response.
    CheckResponse {
        /// Capture file: STATUS line, H header lines, blank line, body.
        capture: PathBuf,
        #[arg(long)]
        policy_config: Option<PathBuf>,
    },
    /// Synthesize a result set for a SQL query and print it as TSV.
    SynthQuery {
        sql: String,
        #[arg(long)]
        seed: u32,
        /// Type hints to apply first, as field=int|str|bool.
        #[arg(long, value_name = "FIELD=TYPE")]
        hint: Vec<String>,
    },
    /// Execute one request and print the session decision trace.
    SynthSession {
        #[arg(long)]
        app: PathBuf,
        #[arg(long)]
        url: String,
        #[arg(long)]
        seed: u32,
        #[arg(long)]
        trace: bool,
    },
    /// List the endpoints of every app under a corpus directory.
    CorpusList {
        #[arg(long)]
        apps: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Application directory (one *.app file per endpoint, index.app entry).
    #[arg(long)]
    apps: PathBuf,
    /// "30s", "1500ms" wall clock or "500it" iterations; first limit wins.
    #[arg(long, default_value = "180s")]
    budget: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Comma-separated engine ids.
    #[arg(long, value_delimiter = ',')]
    engines: Vec<String>,
    /// Master RNG seed; campaigns with workers=1 are reproducible in it.
    #[arg(long, default_value_t = 1)]
    seed_rng: u64,
    #[arg(long, default_value = "table")]
    granularity: Granularity,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    #[arg(long)]
    policy_config: Option<PathBuf>,
    /// Baseline mode: discard runtime type hints.
    #[arg(long)]
    no_type_inference: bool,
    /// Baseline mode: treat sessions and cookies as absent.
    #[arg(long)]
    no_session_synthesis: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage problems exit 1 (clap would default to 2).
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::CheckResponse {
            capture,
            policy_config,
        } => cmd_check_response(&capture, policy_config.as_deref()),
        Command::SynthQuery { sql, seed, hint } => cmd_synth_query(&sql, seed, &hint),
        Command::SynthSession {
            app,
            url,
            seed,
            trace,
        } => cmd_synth_session(&app, &url, seed, trace),
        Command::CorpusList { apps } => cmd_corpus_list(&apps),
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut policy = PolicyConfig::resolve(args.policy_config.as_deref())?;
    if !args.engines.is_empty() {
        policy.engines = args
            .engines
            .iter()
            .map(|id| policyfuzz::policy::EngineKind::from_id(id))
            .collect::<Result<Vec<_>, _>>()?;
    }
    let config = CampaignConfig {
        apps_dir: args.apps.clone(),
        budget: Budget::parse(&args.budget)?,
        workers: args.workers,
        rng_seed: args.seed_rng,
        granularity: args.granularity,
        policy,
        synth: SynthOptions {
            type_inference: !args.no_type_inference,
            session_synthesis: !args.no_session_synthesis,
        },
    };
    config.validate()?;

    let apps = AppSet::load(&args.apps)?;
    let outcome = run_campaign(&apps, &config);
    let oracle = run_oracle(&outcome.sink, config.granularity, &apps.app_id);
    let report = CampaignReport::assemble(&apps.app_id, &config, &outcome, &oracle);
    report.write_to(&args.report)?;

    println!(
        "{}: {} iterations, {} unique responses, {} corpus entries, {} weaknesses -> {}",
        apps.app_id,
        outcome.stats.iterations,
        outcome.stats.unique_responses,
        outcome.corpus_size,
        report.weaknesses.len(),
        args.report.display(),
    );
    for weakness in &report.weaknesses {
        println!(
            "  {} {} allowed {} (count {} < mean {:.2}) class {}",
            weakness.engine_id,
            weakness.url,
            weakness.resource.table,
            weakness.count,
            weakness.threshold,
            weakness.class,
        );
    }
    Ok(if report.weaknesses.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_check_response(
    capture: &std::path::Path,
    policy_config: Option<&std::path::Path>,
) -> anyhow::Result<ExitCode> {
    let policy = PolicyConfig::resolve(policy_config)?;
    let data = std::fs::read(capture)
        .with_context(|| format!("cannot read capture {}", capture.display()))?;
    let response = HttpResponse::from_capture(&data)?;
    for engine in &policy.engines {
        let decision = engine.check(&response, &policy.protected, &policy.orb);
        println!("{decision}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth_query(sql: &str, seed: u32, hints: &[String]) -> anyhow::Result<ExitCode> {
    let hub = SynthHub::new(SynthOptions::default());
    hub.queries().add(sql, seed).map_err(|e| anyhow!("{e}"))?;
    for hint in hints {
        let (field, ty) = hint
            .split_once('=')
            .ok_or_else(|| anyhow!("hint must look like field=int|str|bool: {hint:?}"))?;
        let ty: ValueType = ty.parse().map_err(|e| anyhow!("{e}"))?;
        hub.queries().notify(sql, field, ty);
    }
    let result = hub
        .queries()
        .materialize(sql, seed)
        .map_err(|e| anyhow!("{e}"))?;
    match result {
        None => println!("(no fields known yet; the query names none and nothing was read)"),
        Some(result) => {
            let mut columns: Vec<String> = result
                .rows
                .first()
                .map(|row| row.keys().cloned().collect())
                .unwrap_or_default();
            columns.sort();
            println!("{}", columns.join("\t"));
            for row in &result.rows {
                let line: Vec<String> = columns
                    .iter()
                    .map(|c| row.get(c).map(|v| v.to_string()).unwrap_or_default())
                    .collect();
                println!("{}", line.join("\t"));
            }
            println!("# rows: {}, digest: {}", result.rows.len(), result.digest);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth_session(
    app: &std::path::Path,
    url: &str,
    seed: u32,
    trace: bool,
) -> anyhow::Result<ExitCode> {
    let apps = AppSet::load(app)?;
    let request = HttpRequest::parse_url(Scheme::Https, url, true)?;
    let program = apps
        .program(request.path())
        .ok_or_else(|| anyhow!("no endpoint {} in {}", request.path(), app.display()))?;
    let hub = SynthHub::new(SynthOptions::default());
    let result = execute(program, &request, seed, &hub);
    println!(
        "status {} body {} bytes, {} decision bits",
        result.response.status(),
        result.response.body().len(),
        result.bits_consumed,
    );
    if trace {
        println!("decisions:");
        for entry in &result.session_trace {
            match entry.decision {
                Some(d) => println!(
                    "  {}[{}] {} -> {} ({} bit{})",
                    entry.kind,
                    entry.key,
                    entry.op,
                    d,
                    entry.bits_consumed,
                    if entry.bits_consumed == 1 { "" } else { "s" },
                ),
                None => println!("  {}[{}] {}", entry.kind, entry.key, entry.op),
            }
        }
    }
    println!("rcache:");
    for (key, formula) in &result.session_constraints {
        println!("  {key}: {formula}");
    }
    if let Some(reason) = &result.abort_reason {
        println!("aborted: {reason}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_corpus_list(apps_root: &std::path::Path) -> anyhow::Result<ExitCode> {
    let mut dirs: Vec<PathBuf> = Vec::new();
    if apps_root.join("index.app").exists() {
        dirs.push(apps_root.to_path_buf());
    } else {
        for entry in std::fs::read_dir(apps_root)
            .with_context(|| format!("cannot read {}", apps_root.display()))?
        {
            let path = entry?.path();
            if path.is_dir() && path.join("index.app").exists() {
                dirs.push(path);
            }
        }
        dirs.sort();
    }
    if dirs.is_empty() {
        bail!("no apps under {}", apps_root.display());
    }
    for dir in dirs {
        let apps = AppSet::load(&dir)?;
        let routes: Vec<&str> = apps.routes().collect();
        println!("{}: {}", apps.app_id, routes.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}
