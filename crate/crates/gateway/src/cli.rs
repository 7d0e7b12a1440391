//! Command line: `serve`, `run` and `models search`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use edgeai_core::agent::{Orchestrator, Planner, RemotePlanner, ScriptedPlanner};
use edgeai_core::registry::{FixtureBackend, HubBackend, ModelBackend, ModelRegistry};
use edgeai_core::runner::run_scenario_files;
use edgeai_core::scenario::ScenarioConfig;
use edgeai_core::sim::{SimTime, TICK_MS};
use edgeai_core::world::World;

use crate::Gateway;

pub const PLANNER_TIMEOUT: Duration = Duration::from_secs(30);
const HUB_TIMEOUT: Duration = Duration::from_secs(10);
/// Wall-clock period of the realtime driver.
const DRIVER_PERIOD: Duration = Duration::from_millis(50);

/// Exit code for a run that ended short of COMPLETE.
pub const EXIT_INCOMPLETE: i32 = 1;
/// Exit code for unreadable inputs.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "edgeai", version, about = "Edge AI service provisioning over a simulated 5G network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// HTTP API, event stream and E2 listener.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        scenario: PathBuf,
        /// Simulated ms per wall-clock ms; without it time moves only on POST /sim/advance.
        #[arg(long)]
        realtime_ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also accept external xApps on this port.
        #[arg(long)]
        e2_port: Option<u16>,
    },
    /// Headless run of a scripted conversation.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Model registry queries.
    Models {
        #[command(subcommand)]
        command: ModelsCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModelsCommand {
    Search {
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value_t = BackendArg::Fixture)]
        backend: BackendArg,
        #[arg(long, default_value_t = 10)]
        limit: usize,
        #[arg(long, default_value = "fixtures/models")]
        fixture_dir: PathBuf,
        #[arg(long, default_value = "https://huggingface.co")]
        hub_url: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Hub,
    Fixture,
}

/// Remote planner when its endpoint is configured, scripted otherwise.
pub fn planner_from_env() -> Box<dyn Planner> {
    match RemotePlanner::from_env(PLANNER_TIMEOUT) {
        Some(p) => Box::new(p),
        None => Box::new(ScriptedPlanner),
    }
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run {
            scenario,
            script,
            seed,
            out,
        } => run(&scenario, &script, seed, &out),
        Command::Models {
            command:
                ModelsCommand::Search {
                    task,
                    backend,
                    limit,
                    fixture_dir,
                    hub_url,
                },
        } => search(&task, backend, limit, &fixture_dir, &hub_url),
        Command::Serve {
            port,
            host,
            scenario,
            realtime_ratio,
            seed,
            e2_port,
        } => {
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_ERROR;
                }
            };
            match rt.block_on(serve(&host, port, &scenario, realtime_ratio, seed, e2_port)) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_ERROR
                }
            }
        }
    }
}

fn run(scenario: &std::path::Path, script: &std::path::Path, seed: u64, out: &std::path::Path) -> i32 {
    let result = match run_scenario_files(scenario, script, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    if let Err(e) = std::fs::write(out, result.to_json()) {
        eprintln!("error: writing {}: {e}", out.display());
        return EXIT_ERROR;
    }
    if result.is_complete() {
        println!("COMPLETE at t={} ms, result written to {}", result.final_t_ms, out.display());
        0
    } else {
        let stage = result.failing_stage.unwrap_or(result.final_stage);
        eprintln!("run stopped in stage {stage} (final stage {})", result.final_stage);
        if let Some(e) = &result.script_error {
            eprintln!("{e}");
        }
        if let Some(f) = result.session.as_ref().and_then(|s| s.failure.as_ref()) {
            eprintln!("failure: {f}");
        }
        EXIT_INCOMPLETE
    }
}

fn search(task: &str, backend: BackendArg, limit: usize, fixture_dir: &std::path::Path, hub_url: &str) -> i32 {
    let b: Box<dyn ModelBackend> = match backend {
        BackendArg::Hub => Box::new(HubBackend::new(hub_url, HUB_TIMEOUT)),
        BackendArg::Fixture => match FixtureBackend::load(fixture_dir) {
            Ok(f) => Box::new(f),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_ERROR;
            }
        },
    };
    match ModelRegistry::new(b).search_models(task, limit) {
        Ok(cards) => {
            println!("{}", serde_json::to_string_pretty(&cards).expect("cards serialize"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn gateway_for(scenario: &std::path::Path, seed: Option<u64>) -> Result<Gateway, String> {
    let cfg = ScenarioConfig::load(scenario).map_err(|e| e.to_string())?;
    let world = World::from_scenario(&cfg, seed.unwrap_or(cfg.seed)).map_err(|e| e.to_string())?;
    Ok(Gateway::new(Orchestrator::new(world, planner_from_env())))
}

/// Sim time to add per driver period at `ratio`, carrying the remainder.
pub fn realtime_step(ratio: f64, period: Duration, carry: &mut f64) -> SimTime {
    *carry += ratio * period.as_secs_f64() * 1000.0;
    let ticks = (*carry / TICK_MS as f64).floor();
    *carry -= ticks * TICK_MS as f64;
    ticks as SimTime * TICK_MS
}

async fn drive(gw: Arc<Gateway>, ratio: f64) {
    let mut iv = tokio::time::interval(DRIVER_PERIOD);
    iv.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut carry = 0.0;
    loop {
        iv.tick().await;
        let ms = realtime_step(ratio, DRIVER_PERIOD, &mut carry);
        if ms == 0 {
            continue;
        }
        let g = gw.clone();
        match tokio::task::spawn_blocking(move || g.with(|o| o.advance(ms))).await {
            Ok(Ok(())) => {}
            Ok(Err(e)) => eprintln!("advance failed: {e}"),
            Err(e) => eprintln!("advance panicked: {e}"),
        }
    }
}

pub async fn serve(
    host: &str,
    port: u16,
    scenario: &std::path::Path,
    realtime_ratio: Option<f64>,
    seed: Option<u64>,
    e2_port: Option<u16>,
) -> Result<(), String> {
    if let Some(r) = realtime_ratio {
        if !(r.is_finite() && r > 0.0) {
            return Err(format!("--realtime-ratio must be positive, got {r}"));
        }
    }
    let gw = Arc::new(gateway_for(scenario, seed)?);
    let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| format!("bad address: {e}"))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| e.to_string())?;
    let local = listener.local_addr().map_err(|e| e.to_string())?;
    println!("listening on http://{local}");
    if let Some(p) = e2_port {
        let e2 = tokio::net::TcpListener::bind((host, p)).await.map_err(|e| e.to_string())?;
        println!("e2 on {}", e2.local_addr().map_err(|e| e.to_string())?);
        tokio::spawn(crate::e2::serve(e2, gw.clone()));
    }
    if let Some(r) = realtime_ratio {
        tokio::spawn(drive(gw.clone(), r));
    }
    axum::serve(listener, crate::api::router(gw))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
