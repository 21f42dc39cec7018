use std::process::ExitCode;

use clap::Parser;
use voxelview::cli::{exit_code, run, Cli, Outcome};

/// Caps rayon's worker count from `VOXELVIEW_THREADS` (0 or unset = auto).
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("VOXELVIEW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("VOXELVIEW_THREADS must be a non-negative integer, got '{raw}'"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
