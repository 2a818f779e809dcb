use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agentos_cli::agents::{build_fleet, Fleet};
use agentos_cli::chat::run_chat;
use agentos_cli::config::{parse_override, resolve_port, Settings};
use agentos_cli::gateway::Gateway;
use agentos_core::harness::BasicSuite;
use agentos_core::ledger::{load_genesis, load_performance};
use agentos_core::{load_character, validate_character};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agentos", version, about = "Run, chat with, validate and benchmark agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat KEY=VALUE settings file (environment and flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Setting override, repeatable: --set KEY=VALUE.
    #[arg(long = "set", value_parser = parse_override)]
    set: Vec<(String, String)>,
}

impl ConfigArgs {
    fn settings(&self) -> anyhow::Result<Settings> {
        Settings::load(self.config.as_deref(), &self.set)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP gateway for one or more characters.
    Start {
        #[arg(long, required = true, num_args = 1..)]
        character: Vec<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Chat with a character in the terminal.
    Chat {
        #[arg(long)]
        character: PathBuf,
        #[arg(long, default_value = "terminal-user")]
        user: String,
        #[arg(long, default_value = "terminal")]
        room: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Check a character file; exits 1 when it has violations.
    Validate {
        #[arg(long)]
        character: PathBuf,
    },
    /// Run a benchmark suite and write a JSON report.
    Bench {
        #[arg(long, default_value = "basic")]
        suite: String,
        #[arg(long)]
        character: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Scripted model rules (falls back to the MODEL_SCRIPT setting).
        #[arg(long)]
        script: Option<PathBuf>,
        /// Ledger genesis (falls back to LEDGER_GENESIS).
        #[arg(long)]
        genesis: Option<PathBuf>,
        /// Token and recommender fixtures (falls back to LEDGER_FIXTURES).
        #[arg(long)]
        performance: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Start { character, port, host, cfg } => start(&character, port, &host, &cfg),
        Command::Chat { character, user, room, cfg } => chat(&character, &user, &room, &cfg),
        Command::Validate { character } => validate(&character),
        Command::Bench { suite, character, report, script, genesis, performance, cfg } => bench(
            &suite,
            &character,
            &report,
            [script, genesis, performance],
            &cfg,
        ),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn start(characters: &[PathBuf], port: Option<u16>, host: &str, cfg: &ConfigArgs) -> anyhow::Result<ExitCode> {
    let settings = cfg.settings()?;
    let port = resolve_port(port, &settings, |k| std::env::var(k).ok())?;
    let fleet = build_fleet(characters, &settings)?;
    fleet.start_clients()?;
    let media = fleet.media_dir(&settings);
    let served = tokio::runtime::Runtime::new()?.block_on(serve(fleet.clone(), media, host, port));
    let stopped = fleet.shutdown();
    served?;
    stopped?;
    Ok(ExitCode::SUCCESS)
}

async fn serve(fleet: Fleet, media: PathBuf, host: &str, port: u16) -> anyhow::Result<()> {
    let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    for a in &fleet.agents {
        tracing::info!(id = a.agent_id(), name = a.agent_name(), "agent ready");
    }
    tracing::info!("listening on http://{}", listener.local_addr()?);
    let app = Gateway::new(fleet).router(media);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    tracing::info!("shutting down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        () = ctrl_c => {}
        () = term => {}
    }
}

fn chat(character: &Path, user: &str, room: &str, cfg: &ConfigArgs) -> anyhow::Result<ExitCode> {
    let settings = cfg.settings()?;
    let fleet = build_fleet(&[character.to_path_buf()], &settings)?;
    fleet.start_clients()?;
    let rt = fleet.agents[0].clone();
    println!("Chatting with {}. Type /quit to leave, /state to inspect.", rt.agent_name());
    let stdin = std::io::stdin();
    let chatted = run_chat(&rt, user, room, stdin.lock(), std::io::stdout());
    let stopped = fleet.shutdown();
    chatted?;
    stopped?;
    Ok(ExitCode::SUCCESS)
}

fn validate(path: &Path) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => {
            println!("<root>: malformed JSON: {e}");
            return Ok(ExitCode::FAILURE);
        }
    };
    let violations = validate_character(&doc);
    if violations.is_empty() {
        println!("ok");
        return Ok(ExitCode::SUCCESS);
    }
    for v in &violations {
        println!("{v}");
    }
    Ok(ExitCode::FAILURE)
}

fn bench(
    suite: &str,
    character: &Path,
    report: &Path,
    [script, genesis, performance]: [Option<PathBuf>; 3],
    cfg: &ConfigArgs,
) -> anyhow::Result<ExitCode> {
    anyhow::ensure!(suite == "basic", "unknown suite `{suite}` (available: basic)");
    let settings = cfg.settings()?;
    let pick = |flag: Option<PathBuf>, key: &str| -> anyhow::Result<PathBuf> {
        flag.or_else(|| settings.get(key).map(PathBuf::from))
            .with_context(|| format!("missing input: pass the flag or set {key}"))
    };
    let script = pick(script, "MODEL_SCRIPT")?;
    let genesis = pick(genesis, "LEDGER_GENESIS")?;
    let performance = pick(performance, "LEDGER_FIXTURES")?;
    let suite = BasicSuite {
        character: load_character(character)?,
        script: std::fs::read_to_string(&script)
            .with_context(|| format!("reading {}", script.display()))?,
        genesis: load_genesis(&genesis)?,
        performance: load_performance(&performance)?,
        settings: settings.explicit().clone(),
        order: Vec::new(),
    };
    let result = suite.run()?;
    std::fs::write(report, result.to_json_pretty())
        .with_context(|| format!("writing {}", report.display()))?;
    for t in &result.tasks {
        let mark = if t.pass { "pass" } else { "FAIL" };
        println!("{mark} {} {}", t.id, t.diagnostic);
    }
    println!("{}/{} passed, report at {}", result.passed, result.total, report.display());
    Ok(ExitCode::SUCCESS)
}
