//! Per-task execution statistics and their CSV export.

use std::time::Duration;

use crate::graph::{TaskClass, TaskId};

/// One row of per-task accounting.
#[derive(Clone, Debug)]
pub struct TaskStatRow {
    pub task: TaskId,
    pub name: String,
    pub class: TaskClass,
    pub exec_count: u64,
    pub total: Duration,
}

impl TaskStatRow {
    pub fn mean(&self) -> Duration {
        if self.exec_count == 0 {
            Duration::ZERO
        } else {
            self.total / self.exec_count as u32
        }
    }
}

/// Result of a sequence execution.
#[derive(Clone, Debug)]
pub struct ExecReport {
    /// Completed (non-aborted) passes; equals the number of times the
    /// stop condition was evaluated.
    pub passes: u64,
    /// Pass attempts cut short by an abort.
    pub aborted_passes: u64,
    pub wall: Duration,
    pub tasks: Vec<TaskStatRow>,
}

impl ExecReport {
    pub fn task(&self, name: &str) -> Option<&TaskStatRow> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn class_count(&self, class: TaskClass) -> u64 {
        self.tasks
            .iter()
            .filter(|t| t.class == class)
            .map(|t| t.exec_count)
            .sum()
    }

    pub fn class_total(&self, class: TaskClass) -> Duration {
        self.tasks
            .iter()
            .filter(|t| t.class == class)
            .map(|t| t.total)
            .sum()
    }

    /// CSV with one row per task: task, exec_count, total_ms, mean_us,
    /// share_pct (share of wall time).
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("task,exec_count,total_ms,mean_us,share_pct\n");
        let wall = self.wall.as_secs_f64().max(f64::MIN_POSITIVE);
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{:.2}",
                t.name,
                t.exec_count,
                t.total.as_secs_f64() * 1e3,
                t.mean().as_secs_f64() * 1e6,
                t.total.as_secs_f64() / wall * 100.0
            );
        }
        out
    }
}
