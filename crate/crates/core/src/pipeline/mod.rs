//! Pipelining: splitting a bound task graph into stages stitched by
//! adaptors.
//!
//! Each stage is a sequence run by dedicated workers (optionally
//! duplicated); boundaries get a 1->n, n->1 or 1->1 adaptor depending on
//! which side is replicated. Boundary edges are re-bound through the
//! adaptor's push/pull tasks, and sockets consumed beyond the adjacent
//! stage are relayed through every intervening adaptor so their data
//! stays in step with the frames on the direct path.

mod adaptor;
mod config;
mod exec;
mod stats;

pub use adaptor::{CopyMode, WaitMode};
pub use config::PlanConfig;
pub use stats::{PipelineReport, StageStats};

pub(crate) use adaptor::{Acquire, Adaptor, AdaptorKind, Cursor};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{CloneError, PipelineError};
use crate::frame::ElemSpec;
use crate::graph::{AdaptorRole, Graph, ModuleId, SocketId, TaskClass, TaskId, TaskKind};
use crate::replication::clone_on_unit;
use crate::sequence::{ExecState, Sequence, SequencePlan, TaskStatRow};
use crate::state::{ModuleState, Stateless};

/// One pipeline stage: the region bounded by `first`/`last`, how many
/// workers execute it and where they are pinned.
#[derive(Clone, Debug)]
pub struct StageSpec {
    pub first: Vec<TaskId>,
    pub last: Vec<TaskId>,
    pub workers: usize,
    pub pinning: Option<Vec<usize>>,
}

impl StageSpec {
    pub fn new(first: Vec<TaskId>, last: Vec<TaskId>) -> Self {
        Self {
            first,
            last,
            workers: 1,
            pinning: None,
        }
    }

    pub fn replicated(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn pinned(mut self, units: Vec<usize>) -> Self {
        self.pinning = Some(units);
        self
    }
}

/// Full pipeline description: stage partition, per-adaptor buffer
/// capacity, wait and copy policy.
#[derive(Clone, Debug)]
pub struct PipelinePlan {
    /// Validation anchor; must live in the first stage.
    pub entry: TaskId,
    pub stages: Vec<StageSpec>,
    pub capacity: usize,
    pub wait: WaitMode,
    pub copy: CopyMode,
}

impl PipelinePlan {
    pub fn new(entry: TaskId, stages: Vec<StageSpec>) -> Self {
        Self {
            entry,
            stages,
            capacity: 1,
            wait: WaitMode::Passive,
            copy: CopyMode::Copyless,
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_wait(mut self, wait: WaitMode) -> Self {
        self.wait = wait;
        self
    }

    pub fn with_copy(mut self, copy: CopyMode) -> Self {
        self.copy = copy;
        self
    }
}

pub(crate) struct StageRt {
    pub plan: Arc<SequencePlan>,
    pub replicas: Vec<ExecState>,
    pub pinning: Option<Vec<usize>>,
}

/// A built pipeline, ready to execute.
pub struct Pipeline {
    pub(crate) stages: Vec<StageRt>,
    pub(crate) adaptors: Vec<Arc<Adaptor>>,
    pub(crate) poisoned: bool,
    copy: CopyMode,
}

/// A boundary-crossing logical edge: one origin socket and its consumers
/// grouped by stage.
struct Crossing {
    origin: SocketId,
    spec: ElemSpec,
    consumers: BTreeMap<usize, Vec<SocketId>>,
}

impl Pipeline {
    /// Analyze the plan, insert adaptor tasks, rebind boundary sockets,
    /// duplicate replicated stages and take ownership of the graph.
    pub fn build(mut g: Graph, plan: &PipelinePlan) -> Result<Self, PipelineError> {
        if plan.capacity == 0 {
            return Err(PipelineError::CapacityZero);
        }
        assert!(
            !plan.stages.is_empty(),
            "a pipeline needs at least one stage"
        );
        let nstages = plan.stages.len();

        for (i, st) in plan.stages.iter().enumerate() {
            assert!(st.workers >= 1, "stage {i} declares zero workers");
            if let Some(p) = &st.pinning {
                if p.len() != st.workers {
                    return Err(PipelineError::Clone(CloneError::PinningLength {
                        given: p.len(),
                        expected: st.workers,
                    }));
                }
                let available = crate::affinity::execution_units();
                if let Some(bad) = p.iter().find(|u| **u >= available) {
                    return Err(PipelineError::Clone(CloneError::PinningInvalid {
                        unit: *bad,
                        available,
                    }));
                }
            }
        }

        // ---- membership: every task in exactly one stage --------------------
        let full = Sequence::analyze(&g, &plan.stages[0].first, &plan.stages[nstages - 1].last)
            .map_err(|source| PipelineError::StageBuild { stage: 0, source })?;
        let mut in_full = vec![false; g.task_count()];
        for t in full.schedule() {
            in_full[t.index()] = true;
        }

        // stages are analyzed in order: a source already assigned to an
        // earlier stage (or outside the pipeline region entirely) counts
        // as pre-visited, other stages' first tasks bound the traversal,
        // and tasks the traversal cannot reach are left for later stages
        let mut stage_of: Vec<Option<usize>> = vec![None; g.task_count()];
        for (i, st) in plan.stages.iter().enumerate() {
            let blocked: Vec<TaskId> = plan
                .stages
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, s)| s.first.iter().copied())
                .collect();
            let external: Vec<bool> = (0..g.task_count())
                .map(|t| stage_of[t].is_some() || !in_full[t])
                .collect();
            let p = crate::sequence::analyze_scoped(
                &g,
                &st.first,
                &st.last,
                &blocked,
                Some(external),
                true,
            )
            .map_err(|source| PipelineError::StageBuild { stage: i, source })?;
            for t in p.schedule() {
                if let Some(prev) = stage_of[t.index()] {
                    return Err(PipelineError::DoublyAssigned {
                        task: t,
                        name: g.task_full_name(t),
                        first: prev,
                        second: i,
                    });
                }
                stage_of[t.index()] = Some(i);
            }
        }
        for t in full.schedule() {
            if stage_of[t.index()].is_none() {
                return Err(PipelineError::Unassigned {
                    task: t,
                    name: g.task_full_name(t),
                });
            }
        }
        if stage_of[plan.entry.index()] != Some(0) {
            return Err(PipelineError::EntryOutsideFirstStage {
                task: plan.entry,
                name: g.task_full_name(plan.entry),
            });
        }

        // ---- boundary analysis ----------------------------------------------
        for b in 0..nstages.saturating_sub(1) {
            if plan.stages[b].workers > 1 && plan.stages[b + 1].workers > 1 {
                return Err(PipelineError::AdjacentReplicated {
                    upstream: b,
                    downstream: b + 1,
                });
            }
        }
        // replicated stages need every module cloneable (checked again at
        // duplication; failing early avoids mutating the graph first)
        for t in g.task_ids().collect::<Vec<_>>() {
            if let Some(si) = stage_of[t.index()] {
                if plan.stages[si].workers > 1 {
                    let m = g.task_module(t);
                    if !g.module_cloneability(m).is_cloneable() {
                        return Err(PipelineError::Clone(CloneError::NotCloneable {
                            module: m,
                            name: g.module_name(m).to_owned(),
                        }));
                    }
                }
            }
        }

        let mut crossings: Vec<Crossing> = Vec::new();
        for t in g.task_ids().collect::<Vec<_>>() {
            let Some(so) = stage_of[t.index()] else {
                continue;
            };
            for out in g.task_outputs(t).to_vec() {
                let mut consumers: BTreeMap<usize, Vec<SocketId>> = BTreeMap::new();
                for sink in g.socket_sinks(out).to_vec() {
                    let sink_task = g.socket_task(sink);
                    let Some(si) = stage_of[sink_task.index()] else {
                        continue;
                    };
                    if si < so {
                        return Err(PipelineError::BackwardEdge {
                            from: g.task_full_name(t),
                            to: g.task_full_name(sink_task),
                            from_stage: so,
                            to_stage: si,
                        });
                    }
                    if si > so {
                        consumers.entry(si).or_default().push(sink);
                    }
                }
                if !consumers.is_empty() {
                    crossings.push(Crossing {
                        origin: out,
                        spec: g.socket_spec(out),
                        consumers,
                    });
                }
            }
        }
        crossings.sort_by_key(|c| c.origin);

        // ---- adaptor insertion ----------------------------------------------
        // current upstream-local source of each crossing (relays hop from
        // pull output to pull output)
        let mut local_src: BTreeMap<SocketId, SocketId> =
            crossings.iter().map(|c| (c.origin, c.origin)).collect();
        let mut pull_tasks: Vec<TaskId> = Vec::new();
        let mut adaptor_meta: Vec<(AdaptorKind, usize, Vec<ElemSpec>)> = Vec::new();

        for b in 0..nstages.saturating_sub(1) {
            let entries: Vec<&Crossing> = crossings
                .iter()
                .filter(|c| {
                    let so = stage_of[g.socket_task(c.origin).index()].unwrap();
                    so <= b && c.consumers.keys().any(|s| *s > b)
                })
                .collect();
            if entries.is_empty() {
                return Err(PipelineError::DisconnectedStages {
                    upstream: b,
                    downstream: b + 1,
                });
            }
            let (u, d) = (plan.stages[b].workers, plan.stages[b + 1].workers);
            let kind = if d > 1 {
                AdaptorKind::OneToN
            } else if u > 1 {
                AdaptorKind::NToOne
            } else {
                AdaptorKind::OneToOne
            };
            let fanout = u.max(d);
            let specs: Vec<ElemSpec> = entries.iter().map(|e| e.spec).collect();

            let module = g.add_module(
                &format!("adp{b}"),
                crate::state::Cloneability::Cloneable,
                Box::new(Stateless),
            );
            let push = g.add_task_full(module, "push", TaskKind::Standard, TaskClass::Other, None);
            g.set_adaptor(push, AdaptorRole::Push, b);
            let pull = g.add_task_full(module, "pull", TaskKind::Standard, TaskClass::Other, None);
            g.set_adaptor(pull, AdaptorRole::Pull, b);

            for (c, e) in entries.iter().enumerate() {
                let spec = e.spec;
                let sock_in = g.add_input(push, &format!("in{c}"), spec.kind, spec.count);
                g.bind(sock_in, local_src[&e.origin])
                    .expect("adaptor input binding");
                let sock_out = g.add_output(pull, &format!("out{c}"), spec.kind, spec.count);
                if let Some(cons) = e.consumers.get(&(b + 1)) {
                    for target in cons {
                        g.rebind_input(*target, sock_out)
                            .expect("boundary rebinding");
                    }
                }
                local_src.insert(e.origin, sock_out);
            }
            pull_tasks.push(pull);
            adaptor_meta.push((kind, fanout, specs));
        }

        // ---- stage sequences over the rewired graph -------------------------
        let mut stages_rt: Vec<StageRt> = Vec::new();
        for (i, st) in plan.stages.iter().enumerate() {
            let mut firsts: Vec<TaskId> = Vec::new();
            if i > 0 {
                firsts.push(pull_tasks[i - 1]);
            }
            for f in &st.first {
                if !firsts.contains(f) {
                    firsts.push(*f);
                }
            }
            // non-final stages flow into their push task naturally; only
            // the final stage keeps its declared lasts
            let lasts: Vec<TaskId> = if i == nstages - 1 {
                st.last.clone()
            } else {
                Vec::new()
            };
            let seq = Sequence::build(&mut g, &firsts, &lasts)
                .map_err(|source| PipelineError::StageBuild { stage: i, source })?;
            let plan_arc = seq.plan_arc();
            let mut proto = seq.into_state();
            let mut replicas = Vec::with_capacity(st.workers);
            for r in 1..st.workers {
                let unit = st.pinning.as_ref().map(|p| p[r]);
                replicas.push(clone_on_unit(&mut proto, &plan_arc, r, unit)?);
            }
            replicas.insert(0, proto);
            stages_rt.push(StageRt {
                plan: plan_arc,
                replicas,
                pinning: st.pinning.clone(),
            });
        }

        let adaptors = adaptor_meta
            .into_iter()
            .enumerate()
            .map(|(b, (kind, fanout, specs))| {
                Arc::new(Adaptor::new(
                    kind,
                    fanout,
                    plan.capacity,
                    &specs,
                    plan.wait,
                    plan.copy,
                    plan.stages[b].workers,
                ))
            })
            .collect();

        Ok(Self {
            stages: stages_rt,
            adaptors,
            poisoned: false,
            copy: plan.copy,
        })
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn copy_mode(&self) -> CopyMode {
        self.copy
    }

    pub fn stage_schedule(&self, stage: usize) -> Vec<TaskId> {
        self.stages[stage].plan.schedule()
    }

    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for (i, st) in self.stages.iter().enumerate() {
            let _ = writeln!(s, "stage {i} (workers={}):", st.replicas.len());
            let _ = write!(s, "{}", st.plan.describe());
        }
        s
    }

    /// Disable per-task timing in every replica.
    pub fn set_timing(&mut self, on: bool) {
        for st in &mut self.stages {
            for r in &mut st.replicas {
                r.set_timing(on);
            }
        }
    }

    /// Inspect a module's state across all stages and replicas (e.g. sum
    /// monitor counters after a run).
    pub fn module_states<T: ModuleState + 'static>(&self, module: ModuleId) -> Vec<&T> {
        let mut out = Vec::new();
        for st in &self.stages {
            for r in &st.replicas {
                if let Some(s) = r.module_state_ref::<T>(&st.plan, module) {
                    out.push(s);
                }
            }
        }
        out
    }

    /// Per-stage per-task statistics, summed across replicas.
    pub fn stage_task_rows(&self, stage: usize) -> Vec<TaskStatRow> {
        let st = &self.stages[stage];
        st.plan
            .tasks
            .iter()
            .enumerate()
            .map(|(i, ct)| TaskStatRow {
                task: ct.id,
                name: ct.full_name.clone(),
                class: ct.class,
                exec_count: st.replicas.iter().map(|r| r.counts[i]).sum(),
                total: std::time::Duration::from_nanos(
                    st.replicas.iter().map(|r| r.total_ns[i]).sum(),
                ),
            })
            .collect()
    }
}
