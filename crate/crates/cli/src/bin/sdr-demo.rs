//! Toy transceiver demo: repetition-coded BPSK over AWGN through the
//! pipelined runtime, reporting FER/BER and per-stage time shares.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sigflow::sdr::{build_chain, default_plan_config, run_pipelined, run_sequential, ChainConfig};
use sigflow::PlanConfig;

#[derive(Parser, Debug)]
#[command(
    name = "sdr-demo",
    about = "Toy BPSK transceiver on the pipelined runtime"
)]
struct Args {
    /// Information bits per frame.
    #[arg(long, default_value_t = 1024)]
    k: usize,

    /// Repetition factor (odd).
    #[arg(long, default_value_t = 3)]
    rep: usize,

    /// Eb/N0 in dB.
    #[arg(long, default_value_t = 4.0)]
    ebn0: f64,

    /// Frames to process.
    #[arg(long, default_value_t = 10_000)]
    frames: u64,

    /// Pipeline plan file (TOML). Defaults to the built-in 4-stage plan.
    #[arg(long)]
    plan: Option<PathBuf>,

    /// Workers for the decode stage of the built-in plan.
    #[arg(long, default_value_t = 1)]
    decode_workers: usize,

    /// Master seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Write the per-stage statistics CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Run the whole chain as one sequence instead of a pipeline.
    #[arg(long)]
    sequential: bool,

    /// Print the effective plan as TOML and exit.
    #[arg(long)]
    print_plan: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_plan(args: &Args) -> Result<PlanConfig, String> {
    match &args.plan {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
            PlanConfig::from_toml_str(&text).map_err(|e| e.to_string())
        }
        None => Ok(default_plan_config(args.decode_workers)),
    }
}

fn run(args: &Args) -> Result<(), String> {
    let cfg = ChainConfig {
        k: args.k,
        rep: args.rep,
        ebn0_db: args.ebn0,
        seed: args.seed,
        frames: args.frames,
    };

    if args.print_plan {
        let plan = load_plan(args)?;
        // resolving validates the task names against the actual chain
        let handles = build_chain(&cfg).map_err(|e| e.to_string())?;
        plan.resolve(&handles.graph).map_err(|e| e.to_string())?;
        print!("{}", plan.to_toml());
        return Ok(());
    }

    let (report, mode) = if args.sequential {
        (
            run_sequential(&cfg).map_err(|e| e.to_string())?,
            "sequential",
        )
    } else {
        let plan = load_plan(args)?;
        (
            run_pipelined(&cfg, &plan).map_err(|e| e.to_string())?,
            "pipelined",
        )
    };

    println!("{}", report.summary_line(&cfg, mode));
    if let Some(pipe) = &report.pipeline {
        let csv = pipe.to_csv(Some(cfg.k as u64));
        match &args.csv {
            Some(path) => {
                std::fs::write(path, &csv).map_err(|e| e.to_string())?;
                println!("wrote {}", path.display());
            }
            None => print!("{csv}"),
        }
    }
    Ok(())
}
