use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use tracing::Level;
use tunebench_service::api::{build_report, report_text, RecommendResponse, DEFAULT_CATALOG_LIMIT};
use tunebench_service::ingest::{ingest, IngestOptions};
use tunebench_service::sim::run_eval_sim;
use tunebench_service::{spawn_server, Config, Engine, FileStore, LlmMode, Store};

#[derive(Parser)]
#[command(name = "tunebench", version, about = "Music recommendation workbench: ingest, serve, recommend, evaluate")]
struct Cli {
    /// Store directory; defaults to $DATA_DIR or ./data.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the served catalog and load listening histories.
    Ingest {
        /// Catalog rows (JSON array, or CSV with song_name,artists,genres).
        catalog: PathBuf,
        /// History rows (JSON array).
        histories: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        top_genres: usize,
        #[arg(long, default_value_t = DEFAULT_CATALOG_LIMIT)]
        sample: usize,
        #[arg(long, default_value_t = 30)]
        top_played: usize,
    },
    /// Recommend for one user with one engine.
    Recommend {
        #[arg(long)]
        user: String,
        #[arg(long)]
        engine: Engine,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Back the LLM engines with offline heuristic models.
        #[arg(long)]
        offline: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the HTTP service.
    Serve {
        /// Defaults to $PORT or 8080.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        offline: bool,
    },
    /// Print the per-model report of completed sessions.
    Report {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run one blind session end to end with a simulated rater and offline models.
    EvalSim {
        #[arg(long)]
        user: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn open_store(config: &Config) -> anyhow::Result<Arc<dyn Store>> {
    let store = FileStore::open(&config.data_dir)
        .with_context(|| format!("opening store at {}", config.data_dir.display()))?;
    Ok(Arc::new(store))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let level = match cli.command {
        Command::Serve { .. } => Level::INFO,
        _ => Level::WARN,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    let mut config = Config::from_env()?;
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    let loopback = SocketAddr::from(([127, 0, 0, 1], 0));

    match cli.command {
        Command::Ingest {
            catalog,
            histories,
            seed,
            top_genres,
            sample,
            top_played,
        } => {
            let store = open_store(&config)?;
            let options = IngestOptions {
                seed,
                top_genres,
                sample,
                top_played,
            };
            let summary = ingest(store.as_ref(), &catalog, &histories, options)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Recommend {
            user,
            engine,
            k,
            offline,
            format,
        } => {
            if offline {
                config.llm_mode = LlmMode::Offline;
            }
            let store = open_store(&config)?;
            // The LLM agents read their data from a running service.
            let server = spawn_server(store, config, loopback).await?;
            let run = server.state.engines().run(engine, &user, k).await?;
            let response = RecommendResponse::new(user, run);
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&response)?),
                Format::Text => {
                    for t in &response.recommendations {
                        println!("{:>2}. {} - {} [{}]", t.rank, t.song_name, t.artist_name, t.genre);
                    }
                    println!("inference time: {:.3} s", response.inference_seconds);
                }
            }
        }
        Command::Serve { port, offline } => {
            if offline {
                config.llm_mode = LlmMode::Offline;
            }
            let port = port.unwrap_or(config.port);
            let store = open_store(&config)?;
            let server = spawn_server(store, config, SocketAddr::from(([0, 0, 0, 0], port))).await?;
            tracing::info!(addr = %server.addr, "listening");
            tokio::signal::ctrl_c().await?;
            tracing::info!("shutting down");
        }
        Command::Report { format } => {
            let store = open_store(&config)?;
            let body = build_report(store.as_ref()).map_err(|e| anyhow::anyhow!("{e:?}"))?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&body)?),
                Format::Text => print!("{}", report_text(&body)),
            }
        }
        Command::EvalSim { user, seed, format } => {
            config.llm_mode = LlmMode::Offline;
            let store = open_store(&config)?;
            let server = spawn_server(store, config, loopback).await?;
            let outcome = run_eval_sim(&server.base_url(), &user, seed).await?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&outcome)?),
                Format::Text => {
                    println!("session {}", outcome.session_id);
                    print!("{}", report_text(&outcome.report));
                }
            }
        }
    }
    Ok(())
}
