//! Sequence duplication: synchronization-free deep copies for parallel
//! execution.
//!
//! Duplication clones module states and frame buffers per replica; the
//! compiled schedule and task code are shared read-only. Replicas share
//! no writable storage, so there is nothing to synchronize. When pinning
//! is given, each replica's deep copy runs on the thread pinned to its
//! target execution unit (first-touch locality).

use std::sync::Arc;
use std::time::Instant;

use crate::affinity;
use crate::error::{CloneError, ExecError};
use crate::graph::{ModuleId, TaskId};
use crate::sequence::{
    run_pass, ExecReport, ExecState, NoHooks, PassOutcome, Sequence, SequencePlan,
};
use crate::state::ModuleState;

/// How many replicas to create and where to run them.
#[derive(Clone, Debug, Default)]
pub struct CloneSpec {
    pub replicas: usize,
    /// One execution unit per replica; replicas float when absent.
    pub pinning: Option<Vec<usize>>,
}

impl CloneSpec {
    pub fn new(replicas: usize) -> Self {
        Self {
            replicas,
            pinning: None,
        }
    }

    pub fn pinned(replicas: usize, units: Vec<usize>) -> Self {
        Self {
            replicas,
            pinning: Some(units),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), CloneError> {
        if self.replicas == 0 {
            return Err(CloneError::ZeroReplicas);
        }
        if let Some(p) = &self.pinning {
            if p.len() != self.replicas {
                return Err(CloneError::PinningLength {
                    given: p.len(),
                    expected: self.replicas,
                });
            }
            let available = affinity::execution_units();
            if let Some(bad) = p.iter().find(|u| **u >= available) {
                return Err(CloneError::PinningInvalid {
                    unit: *bad,
                    available,
                });
            }
        }
        Ok(())
    }
}

/// Disjoint replicas of one sequence. The original stays untouched; every
/// replica-task maps back to the same task id in the shared plan.
pub struct ReplicaSet {
    plan: Arc<SequencePlan>,
    replicas: Vec<ExecState>,
    pinning: Option<Vec<usize>>,
}

impl Sequence {
    /// Duplicate this sequence. Fails with the offending module name when
    /// any module in the schedule is sequential-only. The original is
    /// left untouched.
    pub fn duplicate(&mut self, spec: &CloneSpec) -> Result<ReplicaSet, CloneError> {
        spec.validate()?;
        let plan = self.plan_arc();
        let mut replicas = Vec::with_capacity(spec.replicas);
        for r in 0..spec.replicas {
            let unit = spec.pinning.as_ref().map(|p| p[r]);
            let replica = clone_on_unit(self.state_mut(), &plan, r, unit)?;
            replicas.push(replica);
        }
        Ok(ReplicaSet {
            plan,
            replicas,
            pinning: spec.pinning.clone(),
        })
    }
}

/// Deep-copy the prototype state, running the copy on a thread pinned to
/// the unit that will execute the replica (first-touch locality). The
/// prototype is lent to the clone thread exclusively (it is not `Sync`),
/// which is fine: the scope joins before returning.
pub(crate) fn clone_on_unit(
    proto: &mut ExecState,
    plan: &Arc<SequencePlan>,
    worker: usize,
    unit: Option<usize>,
) -> Result<ExecState, CloneError> {
    match unit {
        None => proto.clone_replica(plan, worker),
        Some(u) => std::thread::scope(|s| {
            s.spawn(move || {
                affinity::pin_current_to(u);
                proto.clone_replica(plan, worker)
            })
            .join()
            .expect("first-touch clone thread panicked")
        }),
    }
}

impl ReplicaSet {
    pub fn replica_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn plan(&self) -> &SequencePlan {
        &self.plan
    }

    /// Replica-task to original-task mapping (the schedule is shared, so
    /// it is the identity on task ids, replica by replica).
    pub fn provenance(&self, replica: usize) -> Vec<(TaskId, TaskId)> {
        assert!(replica < self.replicas.len());
        self.plan.schedule().into_iter().map(|t| (t, t)).collect()
    }

    pub fn set_timing(&mut self, on: bool) {
        for r in &mut self.replicas {
            r.set_timing(on);
        }
    }

    /// Inspect one replica's module state.
    pub fn module_state<T: ModuleState + 'static>(
        &self,
        replica: usize,
        module: ModuleId,
    ) -> Option<&T> {
        self.replicas[replica].module_state_ref(&self.plan, module)
    }

    pub fn module_state_mut<T: ModuleState + 'static>(
        &mut self,
        replica: usize,
        module: ModuleId,
    ) -> Option<&mut T> {
        self.replicas[replica].module_state_mut(&self.plan, module)
    }

    /// Execute every replica on its own worker thread and join them.
    /// `make_stop` builds one stop condition per replica.
    pub fn exec_all<F>(
        &mut self,
        make_stop: impl Fn(usize) -> F,
    ) -> Result<Vec<ExecReport>, ExecError>
    where
        F: FnMut() -> bool + Send,
    {
        let plan = &self.plan;
        let pinning = self.pinning.clone();
        let results: Vec<Result<ExecReport, ExecError>> = std::thread::scope(|s| {
            let mut handles = Vec::new();
            for (r, st) in self.replicas.iter_mut().enumerate() {
                let mut stop = make_stop(r);
                let unit = pinning.as_ref().map(|p| p[r]);
                let plan = Arc::clone(plan);
                handles.push(s.spawn(move || {
                    if let Some(u) = unit {
                        affinity::pin_current_to(u);
                    }
                    drive_replica(&plan, st, &mut stop)
                }));
            }
            handles
                .into_iter()
                .map(|h| h.join().expect("replica worker panicked"))
                .collect()
        });
        results.into_iter().collect()
    }
}

fn drive_replica(
    plan: &Arc<SequencePlan>,
    st: &mut ExecState,
    stop: &mut (impl FnMut() -> bool + Send),
) -> Result<ExecReport, ExecError> {
    let t0 = Instant::now();
    let mut passes = 0u64;
    let mut aborted = 0u64;
    loop {
        match run_pass(plan, st, &mut NoHooks)? {
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
    Ok(ExecReport {
        passes,
        aborted_passes: aborted,
        wall: t0.elapsed(),
        tasks: plan
            .tasks
            .iter()
            .enumerate()
            .map(|(i, ct)| crate::sequence::TaskStatRow {
                task: ct.id,
                name: ct.full_name.clone(),
                class: ct.class,
                exec_count: st.counts[i],
                total: std::time::Duration::from_nanos(st.total_ns[i]),
            })
            .collect(),
    })
}
