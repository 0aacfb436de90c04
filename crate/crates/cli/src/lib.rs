//! Configuration, orchestration and reporting for the `cma` command-line tool.

pub mod commands;
pub mod config;
pub mod verify;

/// Sizes the global worker pool from `CMA_THREADS` when set.
pub fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("CMA_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("CMA_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            anyhow::bail!("CMA_THREADS must be a positive integer, got `{v}`");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
