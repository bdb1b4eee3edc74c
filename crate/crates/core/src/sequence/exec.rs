//! Pass execution: runs a compiled schedule against per-replica state.
//!
//! All mutable run-time data (frame buffers, socket-to-buffer mapping,
//! module states, counters) lives in [`ExecState`]; the plan itself is
//! immutable and shared. One `ExecState` is owned by exactly one worker,
//! so interior mutability is plain `RefCell`.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{CloneError, ExecError};
use crate::frame::FrameBuffer;
use crate::graph::{AdaptorRole, Graph, ModuleId, TaskId, TaskKind};
use crate::sequence::build::{CompiledTask, SequencePlan};
use crate::state::{ModuleState, SwitcherState};
use crate::task::{InputFrames, OutputFrames, TaskCtx, TaskStatus};

/// Mutable execution state of one sequence replica.
pub struct ExecState {
    pub(crate) buffers: Vec<RefCell<FrameBuffer>>,
    /// socket id -> index into `buffers`; remapped by commute/select
    /// forwarding and by copy-less handle exchange.
    pub(crate) sock_buf: Vec<Option<usize>>,
    /// parallel to `SequencePlan::modules`
    pub(crate) states: Vec<Box<dyn ModuleState>>,
    pub(crate) pass_serial: u64,
    pub(crate) counts: Vec<u64>,
    pub(crate) total_ns: Vec<u64>,
    pub(crate) timing: bool,
    pub(crate) worker: usize,
    pub(crate) log: Option<ExecLog>,
}

pub(crate) struct ExecLog {
    pub cap: usize,
    pub entries: VecDeque<(u64, TaskId)>,
}

impl ExecState {
    /// Build the prototype state for a plan. Cloneable module states are
    /// snapshotted (the graph keeps its copy, so further builds over the
    /// same modules stay possible); sequential-only states are moved out,
    /// which makes a second build over them fail.
    pub(crate) fn from_plan(plan: &SequencePlan, g: &mut Graph) -> Result<Self, String> {
        let mut states = Vec::with_capacity(plan.modules.len());
        for slot in &plan.modules {
            if slot.cloneability.is_cloneable() {
                match g.peek_state(slot.id).and_then(|s| s.clone_state()) {
                    Some(c) => states.push(c),
                    None => {
                        return Err(format!(
                            "module '{}' is declared cloneable but its state has no clone hook (or was consumed)",
                            slot.name
                        ))
                    }
                }
            } else {
                match g.take_state(slot.id) {
                    Some(s) => states.push(s),
                    None => {
                        return Err(format!(
                            "state of sequential-only module '{}' was already consumed by a previous build",
                            slot.name
                        ))
                    }
                }
            }
        }
        Ok(Self::with_states(plan, states, 0))
    }

    pub(crate) fn with_states(
        plan: &SequencePlan,
        states: Vec<Box<dyn ModuleState>>,
        worker: usize,
    ) -> Self {
        let mut buffers = Vec::with_capacity(plan.buffers.len());
        let mut sock_buf = vec![None; plan.socket_slots];
        for tpl in &plan.buffers {
            buffers.push(RefCell::new(FrameBuffer::new(tpl.spec)));
            sock_buf[tpl.socket.index()] = Some(buffers.len() - 1);
        }
        Self {
            buffers,
            sock_buf,
            states,
            pass_serial: 0,
            counts: vec![0; plan.tasks.len()],
            total_ns: vec![0; plan.tasks.len()],
            timing: true,
            worker,
            log: None,
        }
    }

    /// Deep copy for duplication: fresh buffers, cloned module states.
    /// Fails naming the first module that cannot be cloned.
    pub(crate) fn clone_replica(
        &self,
        plan: &SequencePlan,
        worker: usize,
    ) -> Result<Self, CloneError> {
        let mut states = Vec::with_capacity(self.states.len());
        for (i, s) in self.states.iter().enumerate() {
            let slot = &plan.modules[i];
            if !slot.cloneability.is_cloneable() {
                return Err(CloneError::NotCloneable {
                    module: slot.id,
                    name: slot.name.clone(),
                });
            }
            match s.clone_state() {
                Some(c) => states.push(c),
                None => {
                    return Err(CloneError::NotCloneable {
                        module: slot.id,
                        name: slot.name.clone(),
                    })
                }
            }
        }
        let mut st = Self::with_states(plan, states, worker);
        st.timing = self.timing;
        Ok(st)
    }

    pub(crate) fn reset_control_states(&mut self) {
        for s in &mut self.states {
            s.reset_control();
        }
    }

    pub fn set_timing(&mut self, on: bool) {
        self.timing = on;
    }

    pub fn enable_exec_log(&mut self, cap: usize) {
        self.log = Some(ExecLog {
            cap,
            entries: VecDeque::new(),
        });
    }

    pub fn exec_log(&self) -> Vec<(u64, TaskId)> {
        self.log
            .as_ref()
            .map(|l| l.entries.iter().copied().collect())
            .unwrap_or_default()
    }

    pub(crate) fn module_state_mut<T: ModuleState + 'static>(
        &mut self,
        plan: &SequencePlan,
        module: ModuleId,
    ) -> Option<&mut T> {
        let slot = plan.modules.iter().position(|m| m.id == module)?;
        self.states[slot].downcast_mut::<T>()
    }

    pub(crate) fn module_state_ref<T: ModuleState + 'static>(
        &self,
        plan: &SequencePlan,
        module: ModuleId,
    ) -> Option<&T> {
        let slot = plan.modules.iter().position(|m| m.id == module)?;
        self.states[slot].downcast_ref::<T>()
    }
}

/// Result of one full pass attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PassOutcome {
    Completed,
    Aborted,
    /// A pipeline adaptor signalled shutdown (upstream dry or stop).
    Shutdown,
}

pub(crate) enum HookFlow {
    Done,
    Shutdown,
}

/// Pipeline integration point: push/pull tasks are dispatched through
/// this trait so the sequence engine stays independent of the adaptor
/// machinery.
pub(crate) trait AdaptorHooks {
    fn run(
        &mut self,
        role: AdaptorRole,
        adaptor_idx: usize,
        task: &CompiledTask,
        st: &mut ExecState,
    ) -> Result<HookFlow, ExecError>;
}

/// Hooks for plain (non-pipelined) sequences: adaptor tasks are a bug.
pub(crate) struct NoHooks;

impl AdaptorHooks for NoHooks {
    fn run(
        &mut self,
        _role: AdaptorRole,
        _idx: usize,
        task: &CompiledTask,
        _st: &mut ExecState,
    ) -> Result<HookFlow, ExecError> {
        Err(ExecError::TaskFailure {
            task: task.id,
            name: task.full_name.clone(),
            message: "adaptor task executed outside a pipeline".into(),
        })
    }
}

enum Step {
    Status(TaskStatus),
    Shutdown,
}

pub(crate) fn run_pass(
    plan: &SequencePlan,
    st: &mut ExecState,
    hooks: &mut dyn AdaptorHooks,
) -> Result<PassOutcome, ExecError> {
    st.pass_serial += 1;
    let mut node = plan.entry;
    loop {
        let n = &plan.nodes[node];
        let mut branch_path: Option<usize> = None;
        for &ti in &n.tasks {
            match exec_one(plan, st, ti, hooks)? {
                Step::Status(TaskStatus::Ok) => {}
                Step::Status(TaskStatus::Abort) => {
                    st.reset_control_states();
                    return Ok(PassOutcome::Aborted);
                }
                Step::Status(TaskStatus::Path(p)) => branch_path = Some(p),
                Step::Shutdown => return Ok(PassOutcome::Shutdown),
            }
        }
        let next = if n.branch {
            let p = branch_path.expect("branch node must end with a commute");
            n.succ[p]
        } else {
            n.succ.first().copied().flatten()
        };
        match next {
            Some(i) => node = i,
            None => return Ok(PassOutcome::Completed),
        }
    }
}

fn exec_one(
    plan: &SequencePlan,
    st: &mut ExecState,
    ti: usize,
    hooks: &mut dyn AdaptorHooks,
) -> Result<Step, ExecError> {
    let ct = &plan.tasks[ti];
    st.counts[ti] += 1;
    if let Some(log) = &mut st.log {
        if log.entries.len() == log.cap {
            log.entries.pop_front();
        }
        log.entries.push_back((st.pass_serial, ct.id));
    }
    let t0 = st.timing.then(Instant::now);
    let result = match ct.adaptor {
        Some((role, idx)) => match hooks.run(role, idx, ct, st)? {
            HookFlow::Done => Ok(Step::Status(TaskStatus::Ok)),
            HookFlow::Shutdown => Ok(Step::Shutdown),
        },
        None => match ct.kind {
            TaskKind::Standard | TaskKind::Control => run_body(st, ct, ti).map(Step::Status),
            TaskKind::Commute => run_commute(st, ct).map(Step::Status),
            TaskKind::Select => run_select(st, ct).map(Step::Status),
        },
    };
    if let Some(t0) = t0 {
        st.total_ns[ti] += t0.elapsed().as_nanos() as u64;
    }
    result
}

fn run_body(st: &mut ExecState, ct: &CompiledTask, _ti: usize) -> Result<TaskStatus, ExecError> {
    // unbound inputs are a dispatch error for non-select tasks
    for (i, src) in ct.input_sources.iter().enumerate() {
        let ok = src.is_some_and(|s| st.sock_buf[s.index()].is_some());
        if !ok {
            return Err(ExecError::UnboundInput {
                task: ct.id,
                name: ct.full_name.clone(),
                input: i,
            });
        }
    }
    let body = ct.body.as_ref().expect("standard task without body");

    let (states, buffers, sock_buf) = (&mut st.states, &st.buffers, &st.sock_buf);
    let state = states[ct.module_slot].as_mut();

    // buffer routing can make an input alias one of this task's own
    // outputs (a one-task loop body reads its previous iteration); such
    // inputs are snapshotted so the output stays exclusively writable
    let aliases_output = |b: usize| ct.output_ids.iter().any(|s| sock_buf[s.index()] == Some(b));
    let mut in_frames = crate::task::FrameVec::with_capacity(ct.input_sources.len());
    for src in &ct.input_sources {
        in_frames.push(src.and_then(|s| sock_buf[s.index()]).map(|b| {
            if aliases_output(b) {
                crate::task::InFrame::Owned(buffers[b].borrow().clone())
            } else {
                crate::task::InFrame::Borrowed(buffers[b].borrow())
            }
        }));
    }
    let ins = InputFrames { frames: in_frames };
    let mut out_frames = crate::task::FrameVec::with_capacity(ct.output_ids.len());
    for s in &ct.output_ids {
        let b = sock_buf[s.index()].expect("output socket has a buffer");
        out_frames.push(buffers[b].borrow_mut());
    }
    let outs = OutputFrames { frames: out_frames };
    let in_gen = ins
        .frames
        .as_slice()
        .iter()
        .flatten()
        .map(|f| f.get().generation())
        .max();
    let mut ctx = TaskCtx {
        ins,
        outs,
        worker: st.worker,
        pass: st.pass_serial - 1,
    };
    let result = body(&mut ctx, state);
    // generation propagation: outputs inherit the newest input frame;
    // tasks without inputs stamp their own execution index
    let gen = in_gen.unwrap_or(st.counts[_ti] - 1);
    for f in ctx.outs.frames.as_mut_slice() {
        f.set_generation(gen);
    }
    drop(ctx);
    result.map_err(|e| ExecError::TaskFailure {
        task: ct.id,
        name: ct.full_name.clone(),
        message: e.0,
    })
}

fn run_commute(st: &mut ExecState, ct: &CompiledTask) -> Result<TaskStatus, ExecError> {
    let paths = ct.output_ids.len();
    let ctrl_src =
        ct.input_sources
            .last()
            .copied()
            .flatten()
            .ok_or_else(|| ExecError::UnboundInput {
                task: ct.id,
                name: ct.full_name.clone(),
                input: ct.input_sources.len().saturating_sub(1),
            })?;
    let ctrl_buf = st.sock_buf[ctrl_src.index()].expect("ctrl source has a buffer");
    let value = i64::from(
        st.buffers[ctrl_buf]
            .borrow()
            .ints()
            .expect("control socket carries a single i32")[0],
    );
    if value < 0 || value as usize >= paths {
        return Err(ExecError::PathOutOfRange {
            task: ct.id,
            name: ct.full_name.clone(),
            value,
            paths,
        });
    }
    let path = value as usize;
    // route the data frame to output #path without touching elements
    let data_src = ct.input_sources[0].ok_or_else(|| ExecError::UnboundInput {
        task: ct.id,
        name: ct.full_name.clone(),
        input: 0,
    })?;
    let data_buf = st.sock_buf[data_src.index()].expect("data source has a buffer");
    st.sock_buf[ct.output_ids[path].index()] = Some(data_buf);
    if let Some(sw) = st.states[ct.module_slot].downcast_mut::<SwitcherState>() {
        sw.selected_path = path;
    }
    Ok(TaskStatus::Path(path))
}

fn run_select(st: &mut ExecState, ct: &CompiledTask) -> Result<TaskStatus, ExecError> {
    let path = st.states[ct.module_slot]
        .downcast_ref::<SwitcherState>()
        .map(|sw| sw.selected_path)
        .expect("select task requires a switcher state");
    let buf = ct
        .input_sources
        .get(path)
        .copied()
        .flatten()
        .and_then(|s| st.sock_buf[s.index()]);
    let buf = buf.ok_or_else(|| ExecError::SelectedInputEmpty {
        task: ct.id,
        name: ct.full_name.clone(),
        path,
    })?;
    st.sock_buf[ct.output_ids[0].index()] = Some(buf);
    Ok(TaskStatus::Path(path))
}
