//! Sequences: statically scheduled, repeatedly executed regions of a
//! task graph.
//!
//! A sequence is built from the first (and optionally last) tasks of a
//! region. Execution repeats the schedule until the stop condition
//! returns true (`true` means stop); a task abort cuts the current pass
//! short and restarts at the first task without evaluating the stop
//! condition.

mod build;
mod exec;
mod stats;

pub use build::{SequencePlan, SubSeqKind, SubSequence};
pub use stats::{ExecReport, TaskStatRow};

pub(crate) use build::{analyze, analyze_scoped, CompiledTask};
pub(crate) use exec::{run_pass, AdaptorHooks, ExecState, HookFlow, NoHooks, PassOutcome};

use std::sync::Arc;
use std::time::Instant;

use crate::error::{BuildError, ExecError};
use crate::graph::{Graph, ModuleId, TaskId};
use crate::state::ModuleState;

/// A built sequence: immutable compiled schedule plus the prototype
/// execution state (buffers, module states, counters).
pub struct Sequence {
    plan: Arc<SequencePlan>,
    state: ExecState,
}

impl Sequence {
    /// Analyze the region without consuming any module state. Useful for
    /// introspection and determinism checks; building the same graph
    /// twice yields byte-identical descriptions.
    pub fn analyze(
        g: &Graph,
        first: &[TaskId],
        last: &[TaskId],
    ) -> Result<SequencePlan, BuildError> {
        analyze(g, first, last)
    }

    /// Analyze the region and capture execution state.
    pub fn build(g: &mut Graph, first: &[TaskId], last: &[TaskId]) -> Result<Self, BuildError> {
        let plan = analyze(g, first, last)?;
        let state = ExecState::from_plan(&plan, g).map_err(|msg| {
            // the only failure is a consumed module state
            let module = plan
                .modules
                .iter()
                .find(|m| msg.contains(&m.name))
                .map(|m| (m.id, m.name.clone()))
                .unwrap_or((ModuleId(0), msg.clone()));
            BuildError::StateMoved {
                module: module.0,
                name: module.1,
            }
        })?;
        Ok(Self {
            plan: Arc::new(plan),
            state,
        })
    }

    pub(crate) fn into_state(self) -> ExecState {
        self.state
    }

    pub fn plan(&self) -> &SequencePlan {
        &self.plan
    }

    pub(crate) fn plan_arc(&self) -> Arc<SequencePlan> {
        Arc::clone(&self.plan)
    }

    pub(crate) fn state_mut(&mut self) -> &mut ExecState {
        &mut self.state
    }

    /// The static schedule, in execution order.
    pub fn schedule(&self) -> Vec<TaskId> {
        self.plan.schedule()
    }

    pub fn sub_sequences(&self) -> Vec<SubSequence> {
        self.plan.sub_sequences()
    }

    pub fn describe(&self) -> String {
        self.plan.describe()
    }

    /// Disable (or re-enable) per-task timing; counting stays exact
    /// either way. Disabling removes the two clock reads per task, which
    /// matters when measuring the runtime's own floor.
    pub fn set_timing(&mut self, on: bool) {
        self.state.set_timing(on);
    }

    /// Record the last `cap` task executions (pass serial, task) for
    /// ordering audits in tests. Off by default.
    pub fn enable_exec_log(&mut self, cap: usize) {
        self.state.enable_exec_log(cap);
    }

    pub fn exec_log(&self) -> Vec<(u64, TaskId)> {
        self.state.exec_log()
    }

    /// Access a module's state inside this sequence (the prototype
    /// replica), e.g. to read monitor counters after a run.
    pub fn module_state_mut<T: ModuleState + 'static>(
        &mut self,
        module: ModuleId,
    ) -> Option<&mut T> {
        self.state.module_state_mut(&self.plan, module)
    }

    pub fn module_state<T: ModuleState + 'static>(&self, module: ModuleId) -> Option<&T> {
        self.state.module_state_ref(&self.plan, module)
    }

    /// Execute the schedule repeatedly until `stop` returns true. The
    /// condition is evaluated exactly once after every completed pass;
    /// aborted passes restart at the first task without evaluating it.
    pub fn exec(&mut self, mut stop: impl FnMut() -> bool) -> Result<ExecReport, ExecError> {
        let t0 = Instant::now();
        let mut passes = 0u64;
        let mut aborted = 0u64;
        loop {
            match run_pass(&self.plan, &mut self.state, &mut NoHooks)? {
                PassOutcome::Completed => {
                    passes += 1;
                    if stop() {
                        break;
                    }
                }
                PassOutcome::Aborted => aborted += 1,
                PassOutcome::Shutdown => unreachable!("no adaptors outside pipelines"),
            }
        }
        Ok(self.report(passes, aborted, t0))
    }

    /// Convenience: run exactly `n` completed passes.
    pub fn exec_passes(&mut self, n: u64) -> Result<ExecReport, ExecError> {
        let mut done = 0u64;
        self.exec(move || {
            done += 1;
            done >= n
        })
    }

    fn report(&self, passes: u64, aborted: u64, t0: Instant) -> ExecReport {
        ExecReport {
            passes,
            aborted_passes: aborted,
            wall: t0.elapsed(),
            tasks: self.stats_rows(),
        }
    }

    /// Per-task statistics accumulated so far (across exec calls).
    pub fn stats_rows(&self) -> Vec<TaskStatRow> {
        self.plan
            .tasks
            .iter()
            .enumerate()
            .map(|(i, ct)| TaskStatRow {
                task: ct.id,
                name: ct.full_name.clone(),
                class: ct.class,
                exec_count: self.state.counts[i],
                total: std::time::Duration::from_nanos(self.state.total_ns[i]),
            })
            .collect()
    }
}
