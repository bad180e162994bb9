use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone, Parser)]
#[command(name = "sisco-service", version, about = "ICD-9-CM coding support service")]
pub struct Config {
    /// Address to listen on.
    #[arg(long, env = "SISCO_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,

    /// Source manifest; the bundled sample data when omitted.
    #[arg(long, env = "SISCO_MANIFEST")]
    pub manifest: Option<PathBuf>,

    /// Decision-tree file replacing the one listed in the manifest.
    #[arg(long, env = "SISCO_TREE")]
    pub tree: Option<PathBuf>,

    /// Idle seconds before an unanswered session is cancelled.
    #[arg(long, env = "SISCO_SESSION_TTL", default_value_t = DEFAULT_SESSION_TTL.as_secs())]
    pub session_ttl: u64,

    /// Append-only session journal, replayed at startup.
    #[arg(long, env = "SISCO_JOURNAL")]
    pub journal: Option<PathBuf>,
}
