use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;

use pursuit_core::AgentParams;
use pursuit_service::{router, AppState, Engines, LogStore};

/// HTTP service for live play.
#[derive(Parser)]
#[command(name = "pursuit-service", version)]
struct Args {
    #[arg(long, env = "PURSUIT_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "PURSUIT_PORT", default_value_t = 8080)]
    port: u16,
    /// Directory of `*.task` files; the bundled experiment set when absent.
    #[arg(long, env = "PURSUIT_FIXTURE_DIR")]
    fixture_dir: Option<PathBuf>,
    /// Where session logs and the session index are written.
    #[arg(long, env = "PURSUIT_LOG_DIR", default_value = "logs")]
    log_dir: PathBuf,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let tasks = match &args.fixture_dir {
        Some(dir) => Engines::tasks_from_dir(dir)?,
        None => Engines::builtin_tasks(),
    };
    eprintln!("solving {} tasks", tasks.len());
    let engines = tokio::task::spawn_blocking(move || Engines::build(tasks, &AgentParams::default())).await??;
    let state = AppState::new(Arc::new(engines), LogStore::open(&args.log_dir)?);
    let restored = state.recover()?;
    eprintln!("restored {restored} sessions from {}", args.log_dir.display());
    let addr = SocketAddr::new(args.host, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{addr}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
