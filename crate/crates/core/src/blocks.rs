//! Small reusable blocks: tagged sources, busy-wait compute, collectors.
//! Used by the benchmark harness, the tests and the demo tooling.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::frame::{ElemKind, ElemSpec};
use crate::graph::{Graph, ModuleId, SocketId, TaskClass, TaskId, TaskKind};
use crate::state::{Cloneability, ModuleState, Stateless};
use crate::task::{TaskCtx, TaskStatus};

/// Busy-wait for `dur` on the monotonic clock. The clock is read at least
/// once even for zero durations, so every invocation pays the same fixed
/// cost. The loop polls the clock without a pause hint: vDSO clock reads
/// are cheap, while PAUSE can trap on virtualized hosts and stretch the
/// wait by microseconds.
pub fn active_wait(dur: Duration) {
    let t0 = Instant::now();
    while t0.elapsed() < dur {}
}

/// Handles to a single-task block.
#[derive(Clone, Copy, Debug)]
pub struct Block {
    pub module: ModuleId,
    pub task: TaskId,
    pub input: Option<SocketId>,
    pub output: Option<SocketId>,
}

/// Source emitting Int32 frames tagged with the pass index at element 0
/// and a cheap deterministic pattern elsewhere.
pub fn add_tag_source(g: &mut Graph, name: &str, count: usize) -> Block {
    let module = g.add_module(name, Cloneability::Cloneable, Box::new(Stateless));
    fn body(ctx: &mut TaskCtx<'_>, _s: &mut dyn ModuleState) -> crate::task::TaskResult {
        let pass = ctx.pass;
        let data = ctx.outs.ints(0);
        data[0] = pass as i32;
        for (i, v) in data.iter_mut().enumerate().skip(1) {
            *v = (pass as i32).wrapping_mul(31).wrapping_add(i as i32);
        }
        Ok(TaskStatus::Ok)
    }
    let task = g.add_task(module, "generate", Arc::new(body));
    let output = g.add_output(task, "out", ElemKind::Int32, count);
    Block {
        module,
        task,
        input: None,
        output: Some(output),
    }
}

struct BusyState {
    dur: Duration,
}

impl ModuleState for BusyState {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        Some(Box::new(BusyState { dur: self.dur }))
    }
}

/// Pass-through block that burns `dur` of CPU per frame and copies its
/// input to its output.
pub fn add_busy_passthrough(
    g: &mut Graph,
    name: &str,
    dur: Duration,
    kind: ElemKind,
    count: usize,
) -> Block {
    let module = g.add_module(name, Cloneability::Cloneable, Box::new(BusyState { dur }));
    fn body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
        let dur = s.downcast_ref::<BusyState>().expect("busy state").dur;
        let src = ctx.ins.frame(0).clone();
        ctx.outs.frame_mut(0).copy_from(&src);
        active_wait(dur);
        Ok(TaskStatus::Ok)
    }
    let task = g.add_task(module, "work", Arc::new(body));
    let input = g.add_input(task, "in", kind, count);
    let output = g.add_output(task, "out", kind, count);
    Block {
        module,
        task,
        input: Some(input),
        output: Some(output),
    }
}

/// Pure compute task: an active wait of the configured duration, no
/// allocation, elements untouched. The benchmark harness' C task.
pub fn add_compute(
    g: &mut Graph,
    name: &str,
    dur: Duration,
    spec: ElemSpec,
    with_input: bool,
) -> Block {
    let module = g.add_module(name, Cloneability::Cloneable, Box::new(BusyState { dur }));
    fn body(_ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
        active_wait(s.downcast_ref::<BusyState>().expect("busy state").dur);
        Ok(TaskStatus::Ok)
    }
    let task = g.add_task_full(
        module,
        "work",
        TaskKind::Standard,
        TaskClass::Compute,
        Some(Arc::new(body)),
    );
    let input = with_input.then(|| g.add_input(task, "in", spec.kind, spec.count));
    let output = g.add_output(task, "out", spec.kind, spec.count);
    Block {
        module,
        task,
        input,
        output: Some(output),
    }
}

/// What a collector saw: generations and checksums in arrival order.
#[derive(Clone, Debug, Default)]
pub struct CollectorState {
    pub gens: Vec<u64>,
    pub checksums: Vec<u64>,
    pub first_elems: Vec<i32>,
}

impl ModuleState for CollectorState {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        Some(Box::new(CollectorState::default()))
    }
}

/// Sink recording the generation, checksum and first element of every
/// frame it receives.
pub fn add_collector(g: &mut Graph, name: &str, kind: ElemKind, count: usize) -> Block {
    let module = g.add_module(
        name,
        Cloneability::Cloneable,
        Box::new(CollectorState::default()),
    );
    fn body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
        let frame = ctx.ins.frame(0);
        let gen = frame.generation();
        let sum = frame.checksum();
        let first = frame.ints().map(|v| v[0]).unwrap_or(0);
        let st = s.downcast_mut::<CollectorState>().expect("collector state");
        st.gens.push(gen);
        st.checksums.push(sum);
        st.first_elems.push(first);
        Ok(TaskStatus::Ok)
    }
    let task = g.add_task(module, "collect", Arc::new(body));
    let input = g.add_input(task, "in", kind, count);
    Block {
        module,
        task,
        input: Some(input),
        output: None,
    }
}
