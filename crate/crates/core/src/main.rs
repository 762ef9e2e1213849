use annoforge::config::Config;
use annoforge::formats::ClusterDocument;
use annoforge::metrics::{partition_from_documents, GoldDocument};
use annoforge::server::{serve, TaskStore};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "annoforge",
    version,
    about = "Annotation server and scoring tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the annotation HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Persistence root. ANNOFORGE_DATA takes precedence when set.
        #[arg(long, default_value = "annoforge-data")]
        data: PathBuf,
        /// JSON config with layout parameters and palette.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a cluster document against gold annotations.
    Metrics {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Also report the Rand index.
        #[arg(long)]
        rand: bool,
    },
}

/// Failures map to exit code 1 for IO and 2 for bad input.
enum Failure {
    Io(String),
    Input(String),
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let outcome = match Cli::parse().command {
        Command::Serve {
            port,
            host,
            data,
            config,
        } => run_serve(port, &host, data, config.as_deref()),
        Command::Metrics { system, gold, rand } => run_metrics(&system, &gold, rand),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run_serve(port: u16, host: &str, data: PathBuf, config: Option<&Path>) -> Result<(), Failure> {
    let data = std::env::var_os("ANNOFORGE_DATA")
        .map(PathBuf::from)
        .unwrap_or(data);
    let config = match config {
        Some(path) => Config::load(path).map_err(|e| match e {
            annoforge::config::ConfigError::Io { .. } => Failure::Io(e.to_string()),
            annoforge::config::ConfigError::Invalid(_) => Failure::Input(e.to_string()),
        })?,
        None => Config::default(),
    };
    let store = TaskStore::open(&data, config).map_err(|e| Failure::Io(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::Io(format!("cannot bind {host}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Failure::Io(e.to_string()))?;
        tracing::info!(%addr, data = %data.display(), "listening");
        // Scripts started with --port 0 read the bound address from stdout.
        println!("listening on http://{addr}");
        std::io::Write::flush(&mut std::io::stdout()).map_err(|e| Failure::Io(e.to_string()))?;
        serve(listener, Arc::new(store))
            .await
            .map_err(|e| Failure::Io(e.to_string()))
    })
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn run_metrics(system: &Path, gold: &Path, rand: bool) -> Result<(), Failure> {
    let input = |e: &dyn std::fmt::Display| Failure::Input(e.to_string());
    let system = ClusterDocument::from_json(&read(system)?).map_err(|e| input(&e))?;
    let gold = GoldDocument::from_json(&read(gold)?).map_err(|e| input(&e))?;
    let partition = partition_from_documents(&system, &gold).map_err(|e| input(&e))?;
    println!("purity: {:.4}", partition.purity().map_err(|e| input(&e))?);
    if rand {
        println!(
            "rand_index: {:.4}",
            partition.rand_index().map_err(|e| input(&e))?
        );
    }
    Ok(())
}
