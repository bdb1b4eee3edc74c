//! Task graph construction: modules, tasks, sockets and binding.
//!
//! A module groups tasks that share private state. Tasks expose typed,
//! directional sockets; connecting an input socket to an output socket is
//! called binding and forms the graph edges. An input holds at most one
//! source; an output may feed any number of inputs. Bound peers must agree
//! on element kind and count.
//!
//! Construction is single-threaded. Once sequences are built from the
//! graph the structure is frozen (the only later mutation is the
//! documented socket rebinding performed by pipeline construction).

use std::cell::RefCell;
use std::fmt;

use crate::error::{BindError, BuildError, ExecError};
use crate::frame::{ElemKind, ElemSpec, FrameBuffer};
use crate::state::{Cloneability, ModuleState, SwitcherState};
use crate::task::{InputFrames, OutputFrames, TaskBody, TaskCtx, TaskStatus};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub(crate) usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(ModuleId, "m");
id_type!(TaskId, "t");
id_type!(SocketId, "s");

/// Direction of a socket, immutable after creation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SocketDir {
    Input,
    Output,
}

/// Role of a task in the schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Ordinary data-processing task.
    Standard,
    /// Routes its data input to one of k exclusive output paths.
    Commute,
    /// Forwards one of k exclusive input paths to its output.
    Select,
    /// Emits path decisions on a control socket (loop/switch drivers).
    Control,
}

/// Accounting class used by the overhead reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskClass {
    Compute,
    Select,
    Commute,
    Iterate,
    Other,
}

impl TaskClass {
    pub fn label(self) -> &'static str {
        match self {
            TaskClass::Compute => "compute",
            TaskClass::Select => "select",
            TaskClass::Commute => "commute",
            TaskClass::Iterate => "iterate",
            TaskClass::Other => "other",
        }
    }
}

/// Adaptor role carried by pipeline-inserted tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum AdaptorRole {
    Push,
    Pull,
}

#[derive(Clone)]
pub(crate) struct SocketEntry {
    pub name: String,
    pub task: TaskId,
    pub dir: SocketDir,
    pub index_in_task: usize,
    pub spec: ElemSpec,
    /// For inputs: the unique bound source, if any.
    pub source: Option<SocketId>,
    /// For outputs: bound sinks in binding order.
    pub sinks: Vec<SocketId>,
}

#[derive(Clone)]
pub(crate) struct TaskEntry {
    pub name: String,
    pub module: ModuleId,
    pub kind: TaskKind,
    pub class: TaskClass,
    pub inputs: Vec<SocketId>,
    pub outputs: Vec<SocketId>,
    pub body: Option<TaskBody>,
    /// Input indices in the order they were bound.
    pub bind_order: Vec<usize>,
    /// For commute tasks: the select of the same switcher.
    pub paired_select: Option<TaskId>,
    /// For pipeline adaptor tasks: role and adaptor table index.
    pub adaptor: Option<(AdaptorRole, usize)>,
}

pub(crate) struct ModuleEntry {
    pub name: String,
    pub cloneability: Cloneability,
    pub state: Option<Box<dyn ModuleState>>,
    pub tasks: Vec<TaskId>,
}

/// Scratch storage for direct single-task execution on the graph itself
/// (outside any built sequence). Discarded whenever the graph mutates.
struct DirectExec {
    buffers: Vec<RefCell<FrameBuffer>>,
    /// socket id -> current buffer index
    map: Vec<Option<usize>>,
    exec_counts: Vec<u64>,
}

/// The task graph under construction.
#[derive(Default)]
pub struct Graph {
    modules: Vec<ModuleEntry>,
    tasks: Vec<TaskEntry>,
    sockets: Vec<SocketEntry>,
    direct: Option<DirectExec>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_module(
        &mut self,
        name: &str,
        cloneability: Cloneability,
        state: Box<dyn ModuleState>,
    ) -> ModuleId {
        self.modules.push(ModuleEntry {
            name: name.to_owned(),
            cloneability,
            state: Some(state),
            tasks: Vec::new(),
        });
        ModuleId(self.modules.len() - 1)
    }

    /// Add a standard task with the given behavior.
    pub fn add_task(&mut self, module: ModuleId, name: &str, body: TaskBody) -> TaskId {
        self.add_task_full(
            module,
            name,
            TaskKind::Standard,
            TaskClass::Other,
            Some(body),
        )
    }

    pub(crate) fn add_task_full(
        &mut self,
        module: ModuleId,
        name: &str,
        kind: TaskKind,
        class: TaskClass,
        body: Option<TaskBody>,
    ) -> TaskId {
        let id = TaskId(self.tasks.len());
        self.tasks.push(TaskEntry {
            name: name.to_owned(),
            module,
            kind,
            class,
            inputs: Vec::new(),
            outputs: Vec::new(),
            body,
            bind_order: Vec::new(),
            paired_select: None,
            adaptor: None,
        });
        self.modules[module.0].tasks.push(id);
        self.direct = None;
        id
    }

    pub(crate) fn set_paired_select(&mut self, commute: TaskId, select: TaskId) {
        self.tasks[commute.0].paired_select = Some(select);
    }

    pub(crate) fn set_adaptor(&mut self, task: TaskId, role: AdaptorRole, index: usize) {
        self.tasks[task.0].adaptor = Some((role, index));
    }

    pub fn set_task_class(&mut self, task: TaskId, class: TaskClass) {
        self.tasks[task.0].class = class;
    }

    pub fn add_input(
        &mut self,
        task: TaskId,
        name: &str,
        kind: ElemKind,
        count: usize,
    ) -> SocketId {
        self.add_socket(task, name, SocketDir::Input, ElemSpec::new(kind, count))
    }

    pub fn add_output(
        &mut self,
        task: TaskId,
        name: &str,
        kind: ElemKind,
        count: usize,
    ) -> SocketId {
        self.add_socket(task, name, SocketDir::Output, ElemSpec::new(kind, count))
    }

    fn add_socket(&mut self, task: TaskId, name: &str, dir: SocketDir, spec: ElemSpec) -> SocketId {
        let id = SocketId(self.sockets.len());
        let index_in_task = match dir {
            SocketDir::Input => {
                self.tasks[task.0].inputs.push(id);
                self.tasks[task.0].inputs.len() - 1
            }
            SocketDir::Output => {
                self.tasks[task.0].outputs.push(id);
                self.tasks[task.0].outputs.len() - 1
            }
        };
        self.sockets.push(SocketEntry {
            name: name.to_owned(),
            task,
            dir,
            index_in_task,
            spec,
            source: None,
            sinks: Vec::new(),
        });
        self.direct = None;
        id
    }

    /// Bind an input socket to an output socket.
    pub fn bind(&mut self, input: SocketId, output: SocketId) -> Result<(), BindError> {
        {
            let inp = &self.sockets[input.0];
            let out = &self.sockets[output.0];
            if inp.dir != SocketDir::Input {
                return Err(BindError::NotAnInput(input));
            }
            if out.dir != SocketDir::Output {
                return Err(BindError::NotAnOutput(output));
            }
            if inp.task == out.task {
                return Err(BindError::SelfBind { task: inp.task });
            }
            if let Some(existing) = inp.source {
                return Err(BindError::AlreadyBound {
                    input,
                    bound_to: existing,
                });
            }
            if inp.spec != out.spec {
                return Err(BindError::TypeMismatch {
                    input_spec: inp.spec,
                    output_spec: out.spec,
                });
            }
        }
        self.sockets[input.0].source = Some(output);
        self.sockets[output.0].sinks.push(input);
        let (task, idx) = {
            let inp = &self.sockets[input.0];
            (inp.task, inp.index_in_task)
        };
        self.tasks[task.0].bind_order.push(idx);
        self.direct = None;
        Ok(())
    }

    /// Move an input socket onto a new source. Used by pipeline
    /// construction when boundary edges are re-routed through adaptors.
    pub(crate) fn rebind_input(
        &mut self,
        input: SocketId,
        new_output: SocketId,
    ) -> Result<(), BindError> {
        if let Some(old) = self.sockets[input.0].source.take() {
            self.sockets[old.0].sinks.retain(|s| *s != input);
        }
        // keep the original bind-order record; rebinding preserves the
        // task's observable input ordering
        let order_backup = {
            let task = self.sockets[input.0].task;
            self.tasks[task.0].bind_order.clone()
        };
        self.bind(input, new_output)?;
        let task = self.sockets[input.0].task;
        self.tasks[task.0].bind_order = order_backup;
        self.direct = None;
        Ok(())
    }

    // ---- introspection ----------------------------------------------------

    pub fn module_count(&self) -> usize {
        self.modules.len()
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn socket_count(&self) -> usize {
        self.sockets.len()
    }

    pub fn module_ids(&self) -> impl Iterator<Item = ModuleId> {
        (0..self.modules.len()).map(ModuleId)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = TaskId> {
        (0..self.tasks.len()).map(TaskId)
    }

    pub fn module_name(&self, m: ModuleId) -> &str {
        &self.modules[m.0].name
    }

    pub fn module_cloneability(&self, m: ModuleId) -> Cloneability {
        self.modules[m.0].cloneability
    }

    pub fn module_tasks(&self, m: ModuleId) -> &[TaskId] {
        &self.modules[m.0].tasks
    }

    pub fn task_name(&self, t: TaskId) -> &str {
        &self.tasks[t.0].name
    }

    /// `module.task`, the unique human-readable task identifier.
    pub fn task_full_name(&self, t: TaskId) -> String {
        format!(
            "{}.{}",
            self.modules[self.tasks[t.0].module.0].name, self.tasks[t.0].name
        )
    }

    pub fn task_kind(&self, t: TaskId) -> TaskKind {
        self.tasks[t.0].kind
    }

    pub fn task_class(&self, t: TaskId) -> TaskClass {
        self.tasks[t.0].class
    }

    pub fn task_module(&self, t: TaskId) -> ModuleId {
        self.tasks[t.0].module
    }

    /// Input sockets in declaration order (stable, independent of binding
    /// order).
    pub fn task_inputs(&self, t: TaskId) -> &[SocketId] {
        &self.tasks[t.0].inputs
    }

    pub fn task_outputs(&self, t: TaskId) -> &[SocketId] {
        &self.tasks[t.0].outputs
    }

    /// Input indices in the order their bindings were recorded.
    pub fn task_bind_order(&self, t: TaskId) -> &[usize] {
        &self.tasks[t.0].bind_order
    }

    pub fn input(&self, t: TaskId, i: usize) -> SocketId {
        self.tasks[t.0].inputs[i]
    }

    pub fn output(&self, t: TaskId, i: usize) -> SocketId {
        self.tasks[t.0].outputs[i]
    }

    pub fn socket_name(&self, s: SocketId) -> &str {
        &self.sockets[s.0].name
    }

    pub fn socket_task(&self, s: SocketId) -> TaskId {
        self.sockets[s.0].task
    }

    pub fn socket_dir(&self, s: SocketId) -> SocketDir {
        self.sockets[s.0].dir
    }

    pub fn socket_spec(&self, s: SocketId) -> ElemSpec {
        self.sockets[s.0].spec
    }

    pub fn socket_source(&self, s: SocketId) -> Option<SocketId> {
        self.sockets[s.0].source
    }

    pub fn socket_sinks(&self, s: SocketId) -> &[SocketId] {
        &self.sockets[s.0].sinks
    }

    pub fn socket_index_in_task(&self, s: SocketId) -> usize {
        self.sockets[s.0].index_in_task
    }

    /// Look a task up by `module.task` name.
    pub fn find_task(&self, full_name: &str) -> Option<TaskId> {
        self.task_ids()
            .find(|t| self.task_full_name(*t) == full_name)
    }

    pub(crate) fn task_entry(&self, t: TaskId) -> &TaskEntry {
        &self.tasks[t.0]
    }

    pub(crate) fn take_state(&mut self, m: ModuleId) -> Option<Box<dyn ModuleState>> {
        self.modules[m.0].state.take()
    }

    pub(crate) fn peek_state(&self, m: ModuleId) -> Option<&dyn ModuleState> {
        self.modules[m.0].state.as_deref()
    }

    /// Borrow the state of a module for inspection or configuration while
    /// the graph still owns it (before any sequence build consumed it).
    pub fn module_state_mut<T: ModuleState + 'static>(&mut self, m: ModuleId) -> Option<&mut T> {
        self.modules[m.0]
            .state
            .as_mut()
            .and_then(|s| s.downcast_mut::<T>())
    }

    /// Full-graph binding audit: direction, uniqueness and spec agreement
    /// of every recorded binding.
    pub fn verify_bindings(&self) -> Result<(), String> {
        for (i, sock) in self.sockets.iter().enumerate() {
            let id = SocketId(i);
            match sock.dir {
                SocketDir::Input => {
                    if !sock.sinks.is_empty() {
                        return Err(format!("input {id} has sinks"));
                    }
                    if let Some(src) = sock.source {
                        let s = &self.sockets[src.0];
                        if s.dir != SocketDir::Output {
                            return Err(format!("source of {id} is not an output"));
                        }
                        if s.spec != sock.spec {
                            return Err(format!("spec mismatch across binding into {id}"));
                        }
                        if !s.sinks.contains(&id) {
                            return Err(format!("binding {src}->{id} not mirrored"));
                        }
                    }
                }
                SocketDir::Output => {
                    if sock.source.is_some() {
                        return Err(format!("output {id} has a source"));
                    }
                    let mut seen = Vec::new();
                    for sink in &sock.sinks {
                        if seen.contains(sink) {
                            return Err(format!("duplicate sink {sink} on {id}"));
                        }
                        seen.push(*sink);
                        let sk = &self.sockets[sink.0];
                        if sk.source != Some(id) {
                            return Err(format!("sink {sink} of {id} not mirrored"));
                        }
                        if sk.spec != sock.spec {
                            return Err(format!("spec mismatch across binding {id}->{sink}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Deterministic DOT dump of tasks, sockets and bindings.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "digraph tasks {{");
        let _ = writeln!(out, "  rankdir=LR;");
        for (i, task) in self.tasks.iter().enumerate() {
            let mut label = format!("{} [{:?}]", self.task_full_name(TaskId(i)), task.kind);
            for (k, s) in task.inputs.iter().enumerate() {
                let sock = &self.sockets[s.0];
                let _ = write!(
                    label,
                    "\\nin{}: {} {}[{}]",
                    k,
                    sock.name,
                    sock.spec.kind.short_name(),
                    sock.spec.count
                );
            }
            for (k, s) in task.outputs.iter().enumerate() {
                let sock = &self.sockets[s.0];
                let _ = write!(
                    label,
                    "\\nout{}: {} {}[{}]",
                    k,
                    sock.name,
                    sock.spec.kind.short_name(),
                    sock.spec.count
                );
            }
            let _ = writeln!(out, "  {} [shape=box,label=\"{}\"];", TaskId(i), label);
        }
        for sock in &self.sockets {
            if sock.dir != SocketDir::Output {
                continue;
            }
            for sink in &sock.sinks {
                let sk = &self.sockets[sink.0];
                let _ = writeln!(
                    out,
                    "  {} -> {} [label=\"out{}->in{} {}[{}]\"];",
                    sock.task,
                    sk.task,
                    sock.index_in_task,
                    sk.index_in_task,
                    sock.spec.kind.short_name(),
                    sock.spec.count
                );
            }
        }
        let _ = writeln!(out, "}}");
        out
    }

    // ---- direct single-task execution --------------------------------------

    fn ensure_direct(&mut self) {
        if self.direct.is_some() {
            return;
        }
        let mut buffers = Vec::new();
        let mut map = vec![None; self.sockets.len()];
        for (i, sock) in self.sockets.iter().enumerate() {
            if sock.dir == SocketDir::Output {
                buffers.push(RefCell::new(FrameBuffer::new(sock.spec)));
                map[i] = Some(buffers.len() - 1);
            }
        }
        self.direct = Some(DirectExec {
            buffers,
            map,
            exec_counts: vec![0; self.tasks.len()],
        });
    }

    /// Resolve the buffer currently backing an input socket.
    fn direct_in_buf(&self, s: SocketId) -> Option<usize> {
        let src = self.sockets[s.0].source?;
        self.direct.as_ref().and_then(|d| d.map[src.0])
    }

    /// Write into a bound input's backing buffer, for driving single tasks
    /// in tests and small tools.
    pub fn poke_input(&mut self, s: SocketId, fill: impl FnOnce(&mut FrameBuffer)) {
        self.ensure_direct();
        let idx = self
            .direct_in_buf(s)
            .expect("poke_input requires a bound input");
        let d = self.direct.as_ref().unwrap();
        fill(&mut d.buffers[idx].borrow_mut());
    }

    /// Read the buffer currently backing an output socket.
    pub fn peek_output<R>(&mut self, s: SocketId, read: impl FnOnce(&FrameBuffer) -> R) -> R {
        self.ensure_direct();
        let d = self.direct.as_ref().unwrap();
        let idx = d.map[s.0].expect("peek_output requires an output socket");
        read(&d.buffers[idx].borrow())
    }

    /// Execute one task directly on the graph, outside any sequence.
    ///
    /// Inputs must be bound and populated (see [`Graph::poke_input`]).
    pub fn execute_task(&mut self, t: TaskId) -> Result<TaskStatus, ExecError> {
        self.ensure_direct();
        let kind = self.tasks[t.0].kind;
        if kind != TaskKind::Select {
            for (i, s) in self.tasks[t.0].inputs.iter().enumerate() {
                if self.sockets[s.0].source.is_none() {
                    return Err(ExecError::UnboundInput {
                        task: t,
                        name: self.task_full_name(t),
                        input: i,
                    });
                }
            }
        }
        match kind {
            TaskKind::Standard | TaskKind::Control => self.direct_run_body(t),
            TaskKind::Commute => self.direct_run_commute(t),
            TaskKind::Select => self.direct_run_select(t),
        }
    }

    fn direct_run_body(&mut self, t: TaskId) -> Result<TaskStatus, ExecError> {
        let module = self.tasks[t.0].module;
        let mut state = self.modules[module.0]
            .state
            .take()
            .expect("module state consumed by a sequence build");
        let body = self.tasks[t.0]
            .body
            .clone()
            .expect("standard task without body");
        let d = self.direct.as_mut().unwrap();
        d.exec_counts[t.0] += 1;
        let count = d.exec_counts[t.0];
        let d = self.direct.as_ref().unwrap();

        let out_bids: Vec<usize> = self.tasks[t.0]
            .outputs
            .iter()
            .map(|s| d.map[s.0].unwrap())
            .collect();
        let mut in_frames = crate::task::FrameVec::with_capacity(self.tasks[t.0].inputs.len());
        for s in &self.tasks[t.0].inputs {
            in_frames.push(
                self.sockets[s.0]
                    .source
                    .and_then(|src| d.map[src.0])
                    .map(|b| {
                        if out_bids.contains(&b) {
                            crate::task::InFrame::Owned(d.buffers[b].borrow().clone())
                        } else {
                            crate::task::InFrame::Borrowed(d.buffers[b].borrow())
                        }
                    }),
            );
        }
        let ins = InputFrames { frames: in_frames };
        let mut out_frames = crate::task::FrameVec::with_capacity(self.tasks[t.0].outputs.len());
        for s in &self.tasks[t.0].outputs {
            out_frames.push(d.buffers[d.map[s.0].unwrap()].borrow_mut());
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
            worker: 0,
            pass: count - 1,
        };
        let result = body(&mut ctx, state.as_mut());
        let gen = in_gen.unwrap_or(count - 1);
        for frame in ctx.outs.frames.as_mut_slice() {
            frame.set_generation(gen);
        }
        drop(ctx);
        self.modules[module.0].state = Some(state);
        result.map_err(|e| ExecError::TaskFailure {
            task: t,
            name: self.task_full_name(t),
            message: e.0,
        })
    }

    fn direct_run_commute(&mut self, t: TaskId) -> Result<TaskStatus, ExecError> {
        let module = self.tasks[t.0].module;
        let paths = self.tasks[t.0].outputs.len();
        let ctrl_sock = *self.tasks[t.0].inputs.last().expect("commute without ctrl");
        let data_sock = self.tasks[t.0].inputs[0];
        let d = self.direct.as_ref().unwrap();
        let ctrl_buf = self.sockets[ctrl_sock.0]
            .source
            .and_then(|src| d.map[src.0])
            .expect("bound ctrl input has a buffer");
        let value = i64::from(
            d.buffers[ctrl_buf]
                .borrow()
                .ints()
                .expect("ctrl socket carries i32")[0],
        );
        if value < 0 || value as usize >= paths {
            return Err(ExecError::PathOutOfRange {
                task: t,
                name: self.task_full_name(t),
                value,
                paths,
            });
        }
        let path = value as usize;
        let data_buf = self.direct_in_buf(data_sock).expect("bound data input");
        let out_sock = self.tasks[t.0].outputs[path];
        self.direct.as_mut().unwrap().map[out_sock.0] = Some(data_buf);
        if let Some(state) = self.modules[module.0].state.as_mut() {
            if let Some(sw) = state.downcast_mut::<SwitcherState>() {
                sw.selected_path = path;
            }
        }
        Ok(TaskStatus::Path(path))
    }

    fn direct_run_select(&mut self, t: TaskId) -> Result<TaskStatus, ExecError> {
        let module = self.tasks[t.0].module;
        let path = self.modules[module.0]
            .state
            .as_ref()
            .and_then(|s| s.downcast_ref::<SwitcherState>())
            .map(|sw| sw.selected_path)
            .expect("select task requires a switcher state");
        let in_sock = self.tasks[t.0].inputs[path];
        let buf = self
            .direct_in_buf(in_sock)
            .ok_or_else(|| ExecError::SelectedInputEmpty {
                task: t,
                name: self.task_full_name(t),
                path,
            })?;
        let out_sock = self.tasks[t.0].outputs[0];
        self.direct.as_mut().unwrap().map[out_sock.0] = Some(buf);
        Ok(TaskStatus::Path(path))
    }
}

/// Convenience: build a BuildError::UnknownTask if the id is out of range.
pub(crate) fn check_task(g: &Graph, t: TaskId) -> Result<(), BuildError> {
    if t.0 < g.task_count() {
        Ok(())
    } else {
        Err(BuildError::UnknownTask(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Stateless;
    use crate::task::TaskResult;
    use std::sync::Arc;

    fn identity_body(ctx: &mut TaskCtx<'_>, _s: &mut dyn ModuleState) -> TaskResult {
        let src = ctx.ins.frame(0).clone();
        ctx.outs.frame_mut(0).copy_from(&src);
        Ok(TaskStatus::Ok)
    }

    fn abort_body(_ctx: &mut TaskCtx<'_>, _s: &mut dyn ModuleState) -> TaskResult {
        Ok(TaskStatus::Abort)
    }

    fn feeder(g: &mut Graph, count: usize) -> (TaskId, SocketId) {
        let m = g.add_module("feed", Cloneability::Cloneable, Box::new(Stateless));
        let t = g.add_task(m, "feed", Arc::new(identity_body));
        let out = g.add_output(t, "out", ElemKind::Real32, count);
        (t, out)
    }

    #[test]
    fn identity_task_passes_elements_through() {
        let mut g = Graph::new();
        let (_, src_out) = feeder(&mut g, 3);
        let m = g.add_module("id", Cloneability::Cloneable, Box::new(Stateless));
        let t = g.add_task(m, "copy", Arc::new(identity_body));
        let tin = g.add_input(t, "in", ElemKind::Real32, 3);
        let tout = g.add_output(t, "out", ElemKind::Real32, 3);
        g.bind(tin, src_out).unwrap();
        g.poke_input(tin, |f| {
            f.reals_mut().unwrap().copy_from_slice(&[1.0, 2.0, 3.0])
        });
        assert_eq!(g.execute_task(t).unwrap(), TaskStatus::Ok);
        assert_eq!(
            g.peek_output(tout, |f| f.reals().unwrap().to_vec()),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn abort_status_is_control_flow_not_an_error() {
        let mut g = Graph::new();
        let m = g.add_module("ab", Cloneability::Cloneable, Box::new(Stateless));
        let t = g.add_task(m, "try", Arc::new(abort_body));
        let _out = g.add_output(t, "out", ElemKind::Byte, 1);
        assert_eq!(g.execute_task(t).unwrap(), TaskStatus::Abort);
    }

    #[test]
    fn unbound_input_is_an_execution_error() {
        let mut g = Graph::new();
        let m = g.add_module("id", Cloneability::Cloneable, Box::new(Stateless));
        let t = g.add_task(m, "copy", Arc::new(identity_body));
        let _tin = g.add_input(t, "in", ElemKind::Real32, 3);
        let _tout = g.add_output(t, "out", ElemKind::Real32, 3);
        match g.execute_task(t) {
            Err(crate::error::ExecError::UnboundInput { input: 0, .. }) => {}
            other => panic!("expected UnboundInput, got {other:?}"),
        }
    }

    #[test]
    fn dot_dump_lists_tasks_sockets_and_bindings() {
        let mut g = Graph::new();
        let (_, src_out) = feeder(&mut g, 2);
        let m = g.add_module("m", Cloneability::Cloneable, Box::new(Stateless));
        let t = g.add_task(m, "run", Arc::new(identity_body));
        let tin = g.add_input(t, "in", ElemKind::Real32, 2);
        let _tout = g.add_output(t, "out", ElemKind::Complex32, 2);
        g.bind(tin, src_out).unwrap();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph tasks {"));
        assert!(dot.contains("feed.feed"));
        assert!(dot.contains("m.run"));
        assert!(dot.contains("out0: out r32[2]"));
        assert!(dot.contains("out0: out c32[2]"));
        assert!(dot.contains("t0 -> t1"));
    }

    #[test]
    fn complex_sockets_bind_by_spec() {
        let mut g = Graph::new();
        let m = g.add_module("cx", Cloneability::Cloneable, Box::new(Stateless));
        let a = g.add_task(m, "a", Arc::new(identity_body));
        let a_out = g.add_output(a, "out", ElemKind::Complex32, 4);
        let m2 = g.add_module("cx2", Cloneability::Cloneable, Box::new(Stateless));
        let b = g.add_task(m2, "b", Arc::new(identity_body));
        let b_in = g.add_input(b, "in", ElemKind::Complex32, 4);
        let b_in_real = g.add_input(b, "in2", ElemKind::Real32, 4);
        g.bind(b_in, a_out).unwrap();
        assert!(matches!(
            g.bind(b_in_real, a_out),
            Err(crate::error::BindError::TypeMismatch { .. })
        ));
    }
}
