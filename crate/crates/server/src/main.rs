use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::http::HeaderValue;
use clap::Parser;
use meflex_core::{
    AgentRegistry, AgentSettings, Agents, HttpProvider, ProjectStore, ProviderConfig,
    SamplingParams, TopicCatalog,
};
use meflex_server::{router, AppState, Autosaver, DEFAULT_AUTOSAVE_DEBOUNCE};
use tower_http::cors::{AllowHeaders, AllowMethods, CorsLayer};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

/// Backend service for the Meflex idea canvas.
///
/// The LLM endpoint is configured through LLM_BASE_URL, LLM_API_KEY and LLM_MODEL.
#[derive(Debug, Parser)]
#[command(name = "meflex-server", version)]
struct Args {
    /// Port to listen on.
    #[arg(long, default_value_t = 8787)]
    port: u16,

    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,

    /// Directory holding `*.meflex.json` project files. Without it projects live in memory only.
    #[arg(long)]
    data_dir: Option<PathBuf>,

    /// Agent template file (TOML). Defaults to the bundled templates.
    #[arg(long)]
    agents_config: Option<PathBuf>,

    /// Topic catalog file (TOML). Defaults to the bundled catalog.
    #[arg(long)]
    topics_config: Option<PathBuf>,

    /// Browser origin allowed by CORS. Repeat for several origins.
    #[arg(long = "cors-origin", default_value = "http://localhost:5173")]
    cors_origins: Vec<String>,

    /// Do not request a meta-reflection automatically when a node is extended.
    #[arg(long)]
    no_auto_meta_reflection: bool,

    /// Sampling temperature for every agent.
    #[arg(long, default_value_t = meflex_core::llm::DEFAULT_TEMPERATURE)]
    temperature: f64,

    /// Completion token limit for every agent.
    #[arg(long, default_value_t = meflex_core::llm::DEFAULT_MAX_OUTPUT_TOKENS)]
    max_output_tokens: u32,

    /// Provider request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,

    /// Retries for transport errors, 429 and 5xx responses (at most 5).
    #[arg(long, default_value_t = 3)]
    max_retries: u32,

    /// Autosave debounce in milliseconds.
    #[arg(long, default_value_t = DEFAULT_AUTOSAVE_DEBOUNCE.as_millis() as u64)]
    autosave_debounce_ms: u64,
}

fn cors(origins: &[String]) -> Result<CorsLayer, String> {
    let origins = origins
        .iter()
        .map(|origin| HeaderValue::from_str(origin).map_err(|_| format!("invalid CORS origin `{origin}`")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorsLayer::new()
        .allow_origin(origins)
        .allow_methods(AllowMethods::mirror_request())
        .allow_headers(AllowHeaders::mirror_request()))
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();

    let registry = match &args.agents_config {
        Some(path) => AgentRegistry::from_path(path)?,
        None => AgentRegistry::default(),
    };
    let topics = match &args.topics_config {
        Some(path) => TopicCatalog::from_path(path)?,
        None => TopicCatalog::default(),
    };

    let mut provider_config = ProviderConfig::from_env();
    provider_config.timeout = Duration::from_secs(args.timeout_secs);
    provider_config.max_retries = args.max_retries;
    if provider_config.api_key.is_empty() {
        warn!("LLM_API_KEY is not set; agent requests will likely be rejected");
    }
    let sampling = SamplingParams {
        temperature: args.temperature,
        max_output_tokens: args.max_output_tokens,
        model: provider_config.model.clone(),
    };
    sampling.validate()?;
    info!(base_url = %provider_config.base_url, model = %provider_config.model, "LLM provider configured");
    let provider = HttpProvider::new(provider_config)?;

    let agents = Agents::new(
        registry,
        AgentSettings {
            sampling,
            ..AgentSettings::default()
        },
    );
    let mut builder = AppState::builder(Arc::new(provider))
        .agents(agents)
        .topics(topics)
        .auto_meta_reflection(!args.no_auto_meta_reflection);

    if let Some(dir) = &args.data_dir {
        let store = Arc::new(ProjectStore::open(dir)?);
        let (projects, failures) = store.load_all()?;
        for (path, err) in &failures {
            warn!(path = %path.display(), error = %err, "skipping unreadable project file");
        }
        info!(count = projects.len(), dir = %dir.display(), "loaded projects");
        builder = builder
            .projects(projects)
            .autosave(Autosaver::new(store, Duration::from_millis(args.autosave_debounce_ms)));
    } else {
        warn!("no --data-dir given; projects are kept in memory only");
    }
    let state = builder.build();

    let app = router(state.clone()).layer(cors(&args.cors_origins)?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(%addr, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    tokio::task::spawn_blocking(move || state.flush()).await?;
    Ok(())
}
