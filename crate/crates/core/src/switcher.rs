//! Switcher: the control-flow module behind loops and switches.
//!
//! A switcher owns two tasks sharing one piece of state (the selected
//! path): `commute` routes its data input to one of k exclusive output
//! paths according to a control value, `select` forwards one of k
//! exclusive input paths to its output according to the shared state.
//! Neither task touches frame elements; routing is a buffer-handle
//! remap, so its cost is independent of the frame size.
//!
//! The selected path starts at the highest index (k-1). In a loop this
//! makes the first select read the entry input, and since a completed
//! pass leaves the commute on its exit path (also k-1), the invariant
//! restores itself every pass. After an abort the state is reset
//! explicitly.

use crate::frame::{ElemKind, ElemSpec};
use crate::graph::{Graph, ModuleId, SocketId, TaskClass, TaskId, TaskKind};
use crate::state::{Cloneability, ModuleState, SwitcherState};
use crate::task::{TaskCtx, TaskStatus};

/// Handles to a switcher's tasks and sockets.
#[derive(Clone, Debug)]
pub struct Switcher {
    pub module: ModuleId,
    pub select: TaskId,
    pub commute: TaskId,
    /// k exclusive select inputs; index k-1 is the entry path.
    pub select_ins: Vec<SocketId>,
    pub select_out: SocketId,
    pub commute_data_in: SocketId,
    pub commute_ctrl_in: SocketId,
    /// k exclusive commute outputs; index k-1 is the exit path of a loop.
    pub commute_outs: Vec<SocketId>,
}

impl Switcher {
    /// Create a switcher module with `paths` exclusive paths carrying
    /// frames of the given spec.
    pub fn new(g: &mut Graph, name: &str, paths: usize, kind: ElemKind, count: usize) -> Self {
        assert!(paths >= 1);
        let module = g.add_module(
            name,
            Cloneability::Cloneable,
            Box::new(SwitcherState::new(paths)),
        );
        let select = g.add_task_full(module, "select", TaskKind::Select, TaskClass::Select, None);
        let commute = g.add_task_full(
            module,
            "commute",
            TaskKind::Commute,
            TaskClass::Commute,
            None,
        );
        g.set_paired_select(commute, select);

        let select_ins = (0..paths)
            .map(|p| g.add_input(select, &format!("in{p}"), kind, count))
            .collect();
        let select_out = g.add_output(select, "out", kind, count);
        let commute_data_in = g.add_input(commute, "data", kind, count);
        let commute_ctrl_in = g.add_input(commute, "ctrl", ElemKind::Int32, 1);
        let commute_outs = (0..paths)
            .map(|p| g.add_output(commute, &format!("out{p}"), kind, count))
            .collect();

        Self {
            module,
            select,
            commute,
            select_ins,
            select_out,
            commute_data_in,
            commute_ctrl_in,
            commute_outs,
        }
    }

    pub fn paths(&self) -> usize {
        self.commute_outs.len()
    }
}

/// Loop counter driving a for-loop: emits the body path n times, then the
/// exit path once, then starts over.
#[derive(Clone, Debug)]
pub struct ForControlState {
    pub iterations: u64,
    count: u64,
}

impl ForControlState {
    pub fn new(iterations: u64) -> Self {
        assert!(iterations >= 1);
        Self {
            iterations,
            count: 0,
        }
    }
}

impl ModuleState for ForControlState {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        Some(Box::new(ForControlState::new(self.iterations)))
    }

    fn reset_control(&mut self) {
        self.count = 0;
    }
}

/// Create a for-loop control task: one ignored data input, one control
/// output. Emits path 0 (body) `iterations` times per enclosing pass then
/// path 1 (exit) once, resetting afterwards.
pub fn add_for_control(
    g: &mut Graph,
    name: &str,
    iterations: u64,
    data: ElemSpec,
) -> (TaskId, SocketId, SocketId) {
    let module = g.add_module(
        name,
        Cloneability::Cloneable,
        Box::new(ForControlState::new(iterations)),
    );
    fn body(ctx: &mut TaskCtx<'_>, state: &mut dyn ModuleState) -> crate::task::TaskResult {
        let s = state
            .downcast_mut::<ForControlState>()
            .expect("for-control state");
        s.count += 1;
        let path = if s.count <= s.iterations {
            0
        } else {
            s.count = 0;
            1
        };
        ctx.outs.ints(0)[0] = path;
        Ok(TaskStatus::Ok)
    }
    let task = g.add_task_full(
        module,
        "iterate",
        TaskKind::Control,
        TaskClass::Iterate,
        Some(std::sync::Arc::new(body)),
    );
    let input = g.add_input(task, "in", data.kind, data.count);
    let ctrl = g.add_output(task, "ctrl", ElemKind::Int32, 1);
    (task, input, ctrl)
}

/// Cyclic path driver for switches: emits 0,1,...,k-1,0,... and carries a
/// dummy data frame for the commute.
#[derive(Clone, Debug)]
pub struct CyclicControlState {
    pub paths: usize,
    next: usize,
}

impl CyclicControlState {
    pub fn new(paths: usize) -> Self {
        Self { paths, next: 0 }
    }
}

impl ModuleState for CyclicControlState {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        Some(Box::new(CyclicControlState::new(self.paths)))
    }

    fn reset_control(&mut self) {
        self.next = 0;
    }
}

/// Create a source-style control task with a data output (zeros) and a
/// cyclic control output.
pub fn add_cyclic_control(
    g: &mut Graph,
    name: &str,
    paths: usize,
    data: ElemSpec,
) -> (TaskId, SocketId, SocketId) {
    let module = g.add_module(
        name,
        Cloneability::Cloneable,
        Box::new(CyclicControlState::new(paths)),
    );
    fn body(ctx: &mut TaskCtx<'_>, state: &mut dyn ModuleState) -> crate::task::TaskResult {
        let s = state
            .downcast_mut::<CyclicControlState>()
            .expect("cyclic-control state");
        let path = s.next;
        s.next = (s.next + 1) % s.paths;
        ctx.outs.ints(1)[0] = path as i32;
        Ok(TaskStatus::Ok)
    }
    let task = g.add_task_full(
        module,
        "iterate",
        TaskKind::Control,
        TaskClass::Iterate,
        Some(std::sync::Arc::new(body)),
    );
    let data_out = g.add_output(task, "data", data.kind, data.count);
    let ctrl = g.add_output(task, "ctrl", ElemKind::Int32, 1);
    (task, data_out, ctrl)
}

/// A wired for-loop: select + control + commute of one switcher, ready to
/// have a body chained from `body_out` back into `body_return`.
#[derive(Clone, Debug)]
pub struct ForLoop {
    pub switcher: Switcher,
    pub control: TaskId,
    /// Bind the loop input here (select entry input, index 1).
    pub entry: SocketId,
    /// First body task reads from here (commute path 0).
    pub body_out: SocketId,
    /// Last body task binds back into here (select input 0).
    pub body_return: SocketId,
    /// Downstream continues from here (commute path 1).
    pub exit: SocketId,
}

/// Wire select -> iterate/commute for a for-loop of `iterations` body
/// executions per pass.
pub fn add_for_loop(
    g: &mut Graph,
    name: &str,
    iterations: u64,
    kind: ElemKind,
    count: usize,
) -> ForLoop {
    let sw = Switcher::new(g, name, 2, kind, count);
    let (control, ctrl_in, ctrl_out) = add_for_control(
        g,
        &format!("{name}_ctl"),
        iterations,
        ElemSpec::new(kind, count),
    );
    // binding order matters: the control task is traversed (and scheduled)
    // before the commute
    g.bind(ctrl_in, sw.select_out).unwrap();
    g.bind(sw.commute_data_in, sw.select_out).unwrap();
    g.bind(sw.commute_ctrl_in, ctrl_out).unwrap();
    ForLoop {
        entry: sw.select_ins[1],
        body_out: sw.commute_outs[0],
        body_return: sw.select_ins[0],
        exit: sw.commute_outs[1],
        switcher: sw,
        control,
    }
}
