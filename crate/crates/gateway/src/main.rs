use std::path::PathBuf;
use std::sync::Arc;

use minuteman_core::{
    asr, summarizer, Pipeline, PipelineConfig, PreprocessConfig, RetryPolicy, Summarizer,
    SystemClock, Transcriber,
};
use minuteman_gateway::{router, AppState};

fn env_or(name: &str, default: &str) -> String {
    std::env::var(name).unwrap_or_else(|_| default.to_string())
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let bind = env_or("BIND_ADDR", "127.0.0.1:8080");
    let asr_url = env_or("ASR_URL", "mock:");
    let summ_url = env_or("SUMM_URL", "mock:");
    let static_dir = std::env::var_os("STATIC_DIR").map(PathBuf::from);

    let cfg = PipelineConfig::new(
        Transcriber::new(asr::backend_from_url(&asr_url)?, RetryPolicy::default()),
        Summarizer::new(
            summarizer::backend_from_url(&summ_url)?,
            PreprocessConfig::default(),
            RetryPolicy::default(),
        ),
    );
    let pipeline = Arc::new(Pipeline::start(&cfg, Arc::new(SystemClock::default())));
    let app = router(AppState::new(pipeline), static_dir);

    let listener = tokio::net::TcpListener::bind(&bind).await?;
    log::info!(
        "listening on {} (asr {asr_url}, summarizer {summ_url})",
        listener.local_addr()?
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
