//! Per-stage time repartition and throughput reporting.

use std::time::Duration;

/// Where one stage's worker time went, as shares of the workers' wall
/// time. Wait shares count only blocked time; copy shares are zero in
/// copy-less mode; task share is the rest, so the five sum to 100%.
#[derive(Clone, Debug)]
pub struct StageStats {
    pub stage: usize,
    pub workers: usize,
    pub passes: u64,
    pub aborted_passes: u64,
    /// Sum of the stage workers' wall times.
    pub worker_wall: Duration,
    pub push_wait_pct: f64,
    pub pull_wait_pct: f64,
    pub push_copy_pct: f64,
    pub pull_copy_pct: f64,
    pub task_pct: f64,
}

impl StageStats {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        stage: usize,
        workers: usize,
        passes: u64,
        aborted_passes: u64,
        worker_wall: Duration,
        push_wait_ns: u64,
        pull_wait_ns: u64,
        push_copy_ns: u64,
        pull_copy_ns: u64,
    ) -> Self {
        let wall_ns = worker_wall.as_nanos().max(1) as f64;
        let pct = |ns: u64| ns as f64 / wall_ns * 100.0;
        let push_wait_pct = pct(push_wait_ns);
        let pull_wait_pct = pct(pull_wait_ns);
        let push_copy_pct = pct(push_copy_ns);
        let pull_copy_pct = pct(pull_copy_ns);
        let task_pct =
            (100.0 - push_wait_pct - pull_wait_pct - push_copy_pct - pull_copy_pct).max(0.0);
        Self {
            stage,
            workers,
            passes,
            aborted_passes,
            worker_wall,
            push_wait_pct,
            pull_wait_pct,
            push_copy_pct,
            pull_copy_pct,
            task_pct,
        }
    }

    pub fn shares_sum(&self) -> f64 {
        self.push_wait_pct
            + self.pull_wait_pct
            + self.push_copy_pct
            + self.pull_copy_pct
            + self.task_pct
    }
}

/// Result of one pipeline run.
#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub stages: Vec<StageStats>,
    /// Completed passes of the final stage (frames delivered to the sink).
    pub sink_passes: u64,
    pub wall: Duration,
    /// (pushed, pulled) frame-set counts per boundary after drain.
    pub adaptor_flow: Vec<(u64, u64)>,
}

impl PipelineReport {
    pub fn throughput_fps(&self) -> f64 {
        self.sink_passes as f64 / self.wall.as_secs_f64().max(f64::MIN_POSITIVE)
    }

    /// Information throughput given the number of useful bits per frame.
    pub fn throughput_mbps(&self, bits_per_frame: u64) -> f64 {
        self.throughput_fps() * bits_per_frame as f64 / 1e6
    }

    /// Per-stage CSV: wait/copy/task shares plus throughput.
    pub fn to_csv(&self, bits_per_frame: Option<u64>) -> String {
        use std::fmt::Write;
        let mut out = String::from(
            "stage,workers,passes,push_wait_pct,pull_wait_pct,push_copy_pct,pull_copy_pct,task_pct,frames_per_s,mbps\n",
        );
        let wall_s = self.wall.as_secs_f64().max(f64::MIN_POSITIVE);
        for s in &self.stages {
            let fps = s.passes as f64 / s.workers.max(1) as f64 / wall_s * s.workers as f64;
            let mbps = bits_per_frame.map(|b| fps * b as f64 / 1e6).unwrap_or(0.0);
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.1},{:.3}",
                s.stage,
                s.workers,
                s.passes,
                s.push_wait_pct,
                s.pull_wait_pct,
                s.push_copy_pct,
                s.pull_copy_pct,
                s.task_pct,
                fps,
                mbps
            );
        }
        out
    }
}
