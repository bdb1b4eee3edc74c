//! Micro-benchmark harness: four fixed task-graph shapes exercising the
//! scheduler, with per-class overhead accounting.
//!
//! All four run a configurable number of compute tasks of a configurable
//! busy-wait duration on a single worker:
//!
//! * MB1 - a chain of three compute tasks;
//! * MB2 - a for loop of 10 iterations around three compute tasks;
//! * MB3 - nested for loops (outer 2, inner 5) around three compute tasks;
//! * MB4 - a three-way switch with paths of 3/2/1 compute tasks and a
//!   cyclic path driver.
//!
//! The report splits the measured run time into the theoretical compute
//! time, per-class overheads (compute wrapper, select, commute, iterate)
//! and a residual.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::affinity;
use crate::blocks::{add_compute, Block};
use crate::error::{BuildError, ExecError};
use crate::frame::{ElemKind, ElemSpec};
use crate::graph::{Graph, TaskClass, TaskId};
use crate::sequence::Sequence;
use crate::switcher::{add_cyclic_control, add_for_loop, Switcher};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Benchmark {
    Mb1,
    Mb2,
    Mb3,
    Mb4,
}

impl Benchmark {
    pub fn label(self) -> &'static str {
        match self {
            Benchmark::Mb1 => "MB1",
            Benchmark::Mb2 => "MB2",
            Benchmark::Mb3 => "MB3",
            Benchmark::Mb4 => "MB4",
        }
    }

    pub fn from_index(i: u32) -> Option<Self> {
        match i {
            1 => Some(Benchmark::Mb1),
            2 => Some(Benchmark::Mb2),
            3 => Some(Benchmark::Mb3),
            4 => Some(Benchmark::Mb4),
            _ => None,
        }
    }

    /// Compute tasks executed per sequence pass.
    pub fn compute_per_pass(self) -> u64 {
        match self {
            Benchmark::Mb1 => 3,
            // 3 compute tasks x 10 iterations
            Benchmark::Mb2 => 30,
            // 3 compute tasks x 5 inner x 2 outer
            Benchmark::Mb3 => 30,
            // cyclic paths of 3, 2, 1: average 2 per pass, exact per 3
            Benchmark::Mb4 => 2,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error(
        "{benchmark}: total {total} not divisible into whole passes (needs a multiple of {needs})"
    )]
    SpecInconsistent {
        benchmark: &'static str,
        total: u64,
        needs: u64,
    },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// One micro-benchmark configuration.
#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub benchmark: Benchmark,
    pub task_duration: Duration,
    pub total_compute_tasks: u64,
    pub pin: Option<usize>,
    pub timing: bool,
}

pub const DEFAULT_TOTAL_COMPUTE: u64 = 1_125_000;
pub const DEFAULT_TASK_US: u64 = 4;

impl BenchSpec {
    pub fn new(benchmark: Benchmark) -> Self {
        Self {
            benchmark,
            task_duration: Duration::from_micros(DEFAULT_TASK_US),
            total_compute_tasks: DEFAULT_TOTAL_COMPUTE,
            pin: None,
            timing: true,
        }
    }

    pub fn with_duration_us(mut self, us: u64) -> Self {
        self.task_duration = Duration::from_micros(us);
        self
    }

    pub fn with_total(mut self, total: u64) -> Self {
        self.total_compute_tasks = total;
        self
    }

    /// CI-scale variant: 1/100 of the default load.
    pub fn ci_scale(mut self) -> Self {
        self.total_compute_tasks = DEFAULT_TOTAL_COMPUTE / 100;
        self
    }

    pub fn with_pin(mut self, unit: Option<usize>) -> Self {
        self.pin = unit;
        self
    }

    /// Number of sequence executions needed to run the configured total.
    pub fn passes(&self) -> Result<u64, BenchError> {
        // MB4 additionally needs whole control cycles for exact counts
        let needs = match self.benchmark {
            Benchmark::Mb1 => 3,
            Benchmark::Mb2 | Benchmark::Mb3 => 30,
            Benchmark::Mb4 => 6,
        };
        if self.total_compute_tasks == 0 || self.total_compute_tasks % needs != 0 {
            return Err(BenchError::SpecInconsistent {
                benchmark: self.benchmark.label(),
                total: self.total_compute_tasks,
                needs,
            });
        }
        Ok(self.total_compute_tasks / self.benchmark.compute_per_pass())
    }

    pub fn theoretical(&self) -> Duration {
        self.task_duration * self.total_compute_tasks as u32
    }
}

/// Per-class accounting row.
#[derive(Clone, Debug)]
pub struct ClassRow {
    pub class: TaskClass,
    pub exec_count: u64,
    /// For compute: wrapper overhead (measured minus theoretical). For
    /// control-flow classes: the full measured time.
    pub time: Duration,
}

/// Overhead breakdown of one benchmark run.
#[derive(Clone, Debug)]
pub struct OverheadReport {
    pub label: &'static str,
    pub seq_exec: u64,
    pub run_time: Duration,
    pub theoretical: Duration,
    pub classes: Vec<ClassRow>,
    /// Residual time not attributed to any task execution.
    pub other: Duration,
}

impl OverheadReport {
    pub fn class(&self, class: TaskClass) -> Option<&ClassRow> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn overhead_pct(&self) -> f64 {
        let th = self.theoretical.as_secs_f64();
        if th <= 0.0 {
            return f64::INFINITY;
        }
        (self.run_time.as_secs_f64() - th) / th * 100.0
    }

    pub fn markdown_header() -> String {
        let mut s = String::new();
        s.push_str("| Label | Seq. exec. | Run time (ms) | C exec. | C time (ms) | sel exec. | sel time (ms) | com exec. | com time (ms) | iter exec. | iter time (ms) | Other (ms) |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        s
    }

    pub fn to_markdown_row(&self) -> String {
        let cell = |c: TaskClass| -> (String, String) {
            match self.class(c) {
                Some(r) => (
                    r.exec_count.to_string(),
                    format!("{:.2}", r.time.as_secs_f64() * 1e3),
                ),
                None => ("--".into(), "--".into()),
            }
        };
        let (ce, ct) = cell(TaskClass::Compute);
        let (se, st) = cell(TaskClass::Select);
        let (me, mt) = cell(TaskClass::Commute);
        let (ie, it) = cell(TaskClass::Iterate);
        format!(
            "| {} | {} | {:.2} | {} | {} | {} | {} | {} | {} | {} | {} | {:.2} |\n",
            self.label,
            self.seq_exec,
            self.run_time.as_secs_f64() * 1e3,
            ce,
            ct,
            se,
            st,
            me,
            mt,
            ie,
            it,
            self.other.as_secs_f64() * 1e3
        )
    }

    pub fn csv_header() -> &'static str {
        "label,seq_exec,run_time_ms,c_exec,c_time_ms,sel_exec,sel_time_ms,com_exec,com_time_ms,iter_exec,iter_time_ms,other_ms\n"
    }

    pub fn to_csv_row(&self) -> String {
        let cell = |c: TaskClass| -> (u64, f64) {
            self.class(c)
                .map(|r| (r.exec_count, r.time.as_secs_f64() * 1e3))
                .unwrap_or((0, 0.0))
        };
        let (ce, ct) = cell(TaskClass::Compute);
        let (se, st) = cell(TaskClass::Select);
        let (me, mt) = cell(TaskClass::Commute);
        let (ie, it) = cell(TaskClass::Iterate);
        format!(
            "{},{},{:.3},{},{:.3},{},{:.3},{},{:.3},{},{:.3},{:.3}\n",
            self.label,
            self.seq_exec,
            self.run_time.as_secs_f64() * 1e3,
            ce,
            ct,
            se,
            st,
            me,
            mt,
            ie,
            it,
            self.other.as_secs_f64() * 1e3
        )
    }
}

const BENCH_ELEMS: usize = 16;

fn spec16() -> ElemSpec {
    ElemSpec::new(ElemKind::Real32, BENCH_ELEMS)
}

fn chain_computes(
    g: &mut Graph,
    n: usize,
    dur: Duration,
    from: crate::graph::SocketId,
    prefix: &str,
) -> (Vec<Block>, crate::graph::SocketId) {
    let mut blocks = Vec::with_capacity(n);
    let mut prev = from;
    for i in 0..n {
        let b = add_compute(g, &format!("{prefix}{i}"), dur, spec16(), true);
        g.bind(b.input.unwrap(), prev).unwrap();
        prev = b.output.unwrap();
        blocks.push(b);
    }
    (blocks, prev)
}

/// Build the benchmark graph; returns the graph and its first tasks.
pub fn build_benchmark(bench: Benchmark, dur: Duration) -> (Graph, Vec<TaskId>) {
    let mut g = Graph::new();
    match bench {
        Benchmark::Mb1 => {
            let c0 = add_compute(&mut g, "c0", dur, spec16(), false);
            let (_, _) = chain_computes(&mut g, 2, dur, c0.output.unwrap(), "c");
            (g, vec![c0.task])
        }
        Benchmark::Mb2 => {
            let lp = add_for_loop(&mut g, "loop", 10, ElemKind::Real32, BENCH_ELEMS);
            // the exit path feeds the entry input of the next pass
            g.bind(lp.entry, lp.exit).unwrap();
            let (_, end) = chain_computes(&mut g, 3, dur, lp.body_out, "c");
            g.bind(lp.body_return, end).unwrap();
            (g, vec![lp.switcher.select])
        }
        Benchmark::Mb3 => {
            let outer = add_for_loop(&mut g, "outer", 2, ElemKind::Real32, BENCH_ELEMS);
            let inner = add_for_loop(&mut g, "inner", 5, ElemKind::Real32, BENCH_ELEMS);
            g.bind(outer.entry, outer.exit).unwrap();
            g.bind(inner.entry, outer.body_out).unwrap();
            let (_, end) = chain_computes(&mut g, 3, dur, inner.body_out, "c");
            g.bind(inner.body_return, end).unwrap();
            g.bind(outer.body_return, inner.exit).unwrap();
            (g, vec![outer.switcher.select])
        }
        Benchmark::Mb4 => {
            let (ctl, data_out, ctrl_out) = add_cyclic_control(&mut g, "cycle", 3, spec16());
            let sw = Switcher::new(&mut g, "switch", 3, ElemKind::Real32, BENCH_ELEMS);
            g.bind(sw.commute_data_in, data_out).unwrap();
            g.bind(sw.commute_ctrl_in, ctrl_out).unwrap();
            for (path, n) in [(0usize, 3usize), (1, 2), (2, 1)] {
                let (_, end) =
                    chain_computes(&mut g, n, dur, sw.commute_outs[path], &format!("p{path}c"));
                g.bind(sw.select_ins[path], end).unwrap();
            }
            (g, vec![ctl])
        }
    }
}

/// Run one benchmark and account for where the time went.
pub fn run_bench(spec: &BenchSpec) -> Result<OverheadReport, BenchError> {
    let passes = spec.passes()?;
    if let Some(unit) = spec.pin {
        affinity::pin_current_to(unit);
    }
    let (mut g, first) = build_benchmark(spec.benchmark, spec.task_duration);
    let mut seq = Sequence::build(&mut g, &first, &[])?;
    seq.set_timing(spec.timing);

    let t0 = Instant::now();
    let report = seq.exec_passes(passes)?;
    let run_time = t0.elapsed();

    let theoretical = spec.theoretical();
    let mut classes = Vec::new();
    let mut attributed = Duration::ZERO;
    for class in [
        TaskClass::Compute,
        TaskClass::Select,
        TaskClass::Commute,
        TaskClass::Iterate,
    ] {
        let count = report.class_count(class);
        if count == 0 {
            continue;
        }
        let measured = report.class_total(class);
        attributed += measured;
        let time = if class == TaskClass::Compute {
            measured.saturating_sub(theoretical)
        } else {
            measured
        };
        classes.push(ClassRow {
            class,
            exec_count: count,
            time,
        });
    }
    let other = run_time.saturating_sub(attributed);
    Ok(OverheadReport {
        label: spec.benchmark.label(),
        seq_exec: passes,
        run_time,
        theoretical,
        classes,
        other,
    })
}

/// One point of the overhead-vs-granularity curve.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub duration_us: u64,
    /// Median relative overhead over the runs, in percent.
    pub overhead_pct: f64,
    pub samples: Vec<f64>,
}

/// Sweep the compute-task duration and report the relative overhead per
/// point (median of `runs`).
pub fn sweep_overhead(
    bench: Benchmark,
    durations_us: &[u64],
    total_compute_tasks: u64,
    runs: usize,
) -> Result<Vec<SweepPoint>, BenchError> {
    let mut out = Vec::with_capacity(durations_us.len());
    for &us in durations_us {
        let spec = BenchSpec::new(bench)
            .with_duration_us(us)
            .with_total(total_compute_tasks);
        let mut samples = Vec::with_capacity(runs);
        for _ in 0..runs.max(1) {
            samples.push(run_bench(&spec)?.overhead_pct());
        }
        out.push(SweepPoint {
            duration_us: us,
            overhead_pct: median(&samples),
            samples,
        });
    }
    Ok(out)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    use std::fmt::Write;
    let mut s = String::from("duration_us,overhead_pct\n");
    for p in points {
        let _ = writeln!(s, "{},{:.4}", p.duration_us, p.overhead_pct);
    }
    s
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Per-invocation floor costs of the runtime, in nanoseconds.
#[derive(Clone, Debug)]
pub struct FloorReport {
    pub compute_wrapper_ns: f64,
    pub select_ns: f64,
    pub commute_ns: f64,
    pub iterate_ns: f64,
    /// Cost of one monotonic clock read, reported separately because the
    /// per-task timing itself pays it twice per invocation.
    pub clock_read_ns: f64,
}

/// Measure per-class floors with zero-duration compute tasks: at least
/// `invocations` executions of each control-flow class, median of `runs`.
pub fn measure_floor(invocations: u64, runs: usize) -> Result<FloorReport, BenchError> {
    // MB2 executes select/commute/iterate 11x per pass and compute 30x
    let passes = invocations.div_ceil(11);
    let mut sel = Vec::new();
    let mut com = Vec::new();
    let mut iter = Vec::new();
    let mut comp = Vec::new();
    for _ in 0..runs.max(1) {
        let (mut g, first) = build_benchmark(Benchmark::Mb2, Duration::ZERO);
        let mut seq = Sequence::build(&mut g, &first, &[])?;
        let report = seq.exec_passes(passes)?;
        let mean = |class: TaskClass| -> f64 {
            let n = report.class_count(class).max(1);
            report.class_total(class).as_nanos() as f64 / n as f64
        };
        sel.push(mean(TaskClass::Select));
        com.push(mean(TaskClass::Commute));
        iter.push(mean(TaskClass::Iterate));
        comp.push(mean(TaskClass::Compute));
    }
    let clock = {
        let mut samples = Vec::with_capacity(runs.max(1));
        for _ in 0..runs.max(1) {
            let n = 1_000_000u64;
            let t0 = Instant::now();
            for _ in 0..n {
                std::hint::black_box(Instant::now());
            }
            samples.push(t0.elapsed().as_nanos() as f64 / n as f64);
        }
        median(&samples)
    };
    Ok(FloorReport {
        compute_wrapper_ns: median(&comp),
        select_ns: median(&sel),
        commute_ns: median(&com),
        iterate_ns: median(&iter),
        clock_read_ns: clock,
    })
}
