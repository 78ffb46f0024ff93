use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wavephase_cli::runner::output_dir;
use wavephase_cli::{parse_config, run_experiment, CliError};

#[derive(Parser, Debug)]
#[command(name = "wavephase", version, about = "Run a wavephase experiment from a JSON config")]
struct Args {
    /// Experiment configuration file.
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to WAVEPHASE_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("WAVEPHASE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("WAVEPHASE_THREADS is not a thread count: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(args: Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg = parse_config(&text)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(n) = threads(args.threads)? {
        if n == 0 {
            return Err(CliError::Validation("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let out = output_dir(&cfg, args.out);
    let manifest = run_experiment(&cfg, &out)?;
    println!("{}: wrote {} files to {}", manifest.kind, manifest.files.len() + 1, out.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
