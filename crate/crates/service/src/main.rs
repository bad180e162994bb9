use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use clap::Parser;

use sisco_core::ingest::load_configured;
use sisco_service::config::Config;
use sisco_service::{app, AppState, SessionStore};

#[tokio::main]
async fn main() -> ExitCode {
    let config = Config::parse();
    let bundle = match load_configured(config.manifest.as_deref(), config.tree.as_deref()) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("sisco-service: {e}");
            return ExitCode::from(1);
        }
    };
    let ttl = Duration::from_secs(config.session_ttl);
    let sessions = match &config.journal {
        None => SessionStore::new(ttl),
        Some(path) => {
            let engine = sisco_core::engine::DecisionEngine::new(&bundle.tree, &bundle.procedure_sets, &bundle.kb);
            match SessionStore::with_journal(ttl, path, &engine, SystemTime::now()) {
                Ok((store, report)) => {
                    for (line, reason) in &report.skipped {
                        eprintln!("sisco-service: journal line {line} skipped: {reason}");
                    }
                    store
                }
                Err(e) => {
                    eprintln!("sisco-service: journal {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
        }
    };
    let state = Arc::new(AppState::new(bundle, sessions));
    let listener = match tokio::net::TcpListener::bind(config.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("sisco-service: cannot listen on {}: {e}", config.listen);
            return ExitCode::from(2);
        }
    };
    eprintln!("sisco-service: listening on {}", config.listen);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app(state)).with_graceful_shutdown(shutdown).await {
        eprintln!("sisco-service: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
