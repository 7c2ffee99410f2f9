use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wfh_core::cli::{self, Experiment, RunOptions};
use wfh_core::Error;

#[derive(Parser)]
#[command(
    name = "wfh",
    version,
    about = "Weak-value wavefunction reconstruction and digital holography"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON, schema 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the per-pixel loop (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write wall-clock timings to timings.json.
    #[arg(long, global = true)]
    timings: bool,
    #[arg(long, global = true, hide = true)]
    inject_sigma_r_fault: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the input mode (and masked object field) as WFH1 files.
    Prepare,
    /// Reconstruct the configured mode and write the weak-value map and report.
    Reconstruct,
    /// Run the imaging pipeline on the configured mask.
    Holography,
    /// Run the built-in invariant suites.
    Validate,
}

fn experiment(args: &Args) -> Result<Experiment, Error> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        msg: "this command needs --config <path>".into(),
    })?;
    Experiment::load(path, args.seed)
}

fn run(args: &Args) -> Result<i32, Error> {
    let opts = RunOptions {
        timings: args.timings,
        flip_sigma_r: args.inject_sigma_r_fault,
    };
    match args.command {
        Command::Prepare => {
            for p in cli::cmd_prepare(&experiment(args)?, opts)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Reconstruct => {
            let exp = experiment(args)?;
            let r = cli::cmd_reconstruct(&exp, opts)?;
            println!(
                "{}: fidelity {:.10} valid {:.4} settings/pixel {} -> {}",
                r.scheme.as_str(),
                r.fidelity,
                r.valid_fraction,
                r.settings_per_pixel,
                exp.output_dir.display()
            );
        }
        Command::Holography => {
            let exp = experiment(args)?;
            let r = cli::cmd_holography(&exp, opts)?;
            println!(
                "object-plane fidelity {:.6} phase rmse {:.4} rad -> {}",
                r.pipeline.fidelity,
                r.pipeline.phase_rmse,
                exp.output_dir.display()
            );
        }
        Command::Validate => {
            let results = cli::cmd_validate(opts);
            for r in &results {
                println!("{r}");
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if !failed.is_empty() {
                println!("failed suites: {}", failed.join(", "));
                return Ok(cli::EXIT_VALIDATION);
            }
        }
    }
    Ok(cli::EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(cli::EXIT_CONFIG as u8);
        }
    }
    let code = match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
