//! Micro-benchmark driver: runs MB1-MB4, prints a per-class overhead
//! table, and optionally sweeps the compute-task granularity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sigflow::bench::{
    measure_floor, run_bench, sweep_csv, sweep_overhead, BenchSpec, Benchmark, OverheadReport,
    DEFAULT_TOTAL_COMPUTE,
};

#[derive(Parser, Debug)]
#[command(name = "bench", about = "Scheduler micro-benchmarks (MB1-MB4)")]
struct Args {
    /// Benchmark to run (1-4). Omit to run all four.
    #[arg(long)]
    mb: Option<u32>,

    /// Busy-wait duration of each compute task, microseconds.
    #[arg(long = "task-us", default_value_t = 4)]
    task_us: u64,

    /// Total number of compute-task executions.
    #[arg(long, default_value_t = DEFAULT_TOTAL_COMPUTE)]
    total: u64,

    /// Repeat each measurement and report the median (sweep mode).
    #[arg(long, default_value_t = 5)]
    runs: usize,

    /// Pin the worker to this execution unit.
    #[arg(long)]
    pin: Option<usize>,

    /// Write results as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Sweep these comma-separated task durations (us) and report the
    /// relative overhead per point instead of the table.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<u64>>,

    /// Disable per-task timing (counts stay exact; the per-class time
    /// columns read zero).
    #[arg(long)]
    no_timing: bool,

    /// Measure and print the per-class floor costs, then exit.
    #[arg(long)]
    floor: bool,
}

fn selected(args: &Args) -> Result<Vec<Benchmark>, String> {
    match args.mb {
        None => Ok(vec![
            Benchmark::Mb1,
            Benchmark::Mb2,
            Benchmark::Mb3,
            Benchmark::Mb4,
        ]),
        Some(i) => Benchmark::from_index(i)
            .map(|b| vec![b])
            .ok_or_else(|| format!("--mb must be 1..4, got {i}")),
    }
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

fn run(args: &Args) -> Result<(), String> {
    if args.floor {
        let f = measure_floor(1_000_000, args.runs.max(1)).map_err(|e| e.to_string())?;
        println!(
            "per-invocation floors: compute wrapper {:.0} ns, select {:.0} ns, commute {:.0} ns, iterate {:.0} ns (clock read {:.0} ns)",
            f.compute_wrapper_ns, f.select_ns, f.commute_ns, f.iterate_ns, f.clock_read_ns
        );
        return Ok(());
    }

    let benches = selected(args)?;

    if let Some(durations) = &args.sweep {
        let mut csv = String::from("benchmark,duration_us,overhead_pct\n");
        for mb in &benches {
            let points =
                sweep_overhead(*mb, durations, args.total, args.runs).map_err(|e| e.to_string())?;
            println!("{}:", mb.label());
            for p in &points {
                println!("  {:>4} us  overhead {:.2}%", p.duration_us, p.overhead_pct);
                csv.push_str(&format!(
                    "{},{},{:.4}\n",
                    mb.label(),
                    p.duration_us,
                    p.overhead_pct
                ));
            }
            let _ = sweep_csv(&points);
        }
        if let Some(path) = &args.csv {
            std::fs::write(path, csv).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        return Ok(());
    }

    let mut table = OverheadReport::markdown_header();
    let mut csv = OverheadReport::csv_header().to_string();
    for mb in benches {
        let mut spec = BenchSpec::new(mb)
            .with_duration_us(args.task_us)
            .with_total(args.total)
            .with_pin(args.pin);
        spec.timing = !args.no_timing;
        let report = run_bench(&spec).map_err(|e| e.to_string())?;
        table.push_str(&report.to_markdown_row());
        csv.push_str(&report.to_csv_row());
        eprintln!(
            "{}: {} passes, run {:.2} ms, theoretical {:.2} ms, overhead {:.2}%",
            report.label,
            report.seq_exec,
            report.run_time.as_secs_f64() * 1e3,
            report.theoretical.as_secs_f64() * 1e3,
            report.overhead_pct()
        );
    }
    println!("\n{table}");
    if let Some(path) = &args.csv {
        std::fs::write(path, csv).map_err(|e| e.to_string())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
