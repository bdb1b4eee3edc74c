//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use sigflow::{
    Cloneability, ElemKind, Graph, ModuleState, SocketId, Stateless, TaskCtx, TaskId, TaskStatus,
};

/// Run `f` on its own thread and panic if it exceeds `limit` (deadlock
/// guard for pipeline shutdown tests).
pub fn with_watchdog<T: Send + 'static>(
    limit: Duration,
    label: &str,
    f: impl FnOnce() -> T + Send + 'static,
) -> T {
    let (tx, rx) = mpsc::channel();
    let handle = thread::spawn(move || {
        let _ = tx.send(f());
    });
    match rx.recv_timeout(limit) {
        Ok(v) => {
            handle.join().expect("watchdog worker panicked");
            v
        }
        Err(_) => panic!("watchdog: '{label}' did not finish within {limit:?}"),
    }
}

pub struct TaskHandles {
    pub task: TaskId,
    pub ins: Vec<SocketId>,
    pub out: SocketId,
}

/// A task with `n_ins` inputs that copies its first input to its output.
pub fn add_join_task(g: &mut Graph, name: &str, n_ins: usize, count: usize) -> TaskHandles {
    fn body(ctx: &mut TaskCtx<'_>, _s: &mut dyn ModuleState) -> sigflow::TaskResult {
        if ctx.ins.len() > 0 && ctx.outs.len() > 0 {
            let src = ctx.ins.frame(0).clone();
            ctx.outs.frame_mut(0).copy_from(&src);
        }
        Ok(TaskStatus::Ok)
    }
    let m = g.add_module(name, Cloneability::Cloneable, Box::new(Stateless));
    let task = g.add_task(m, "run", Arc::new(body));
    let ins = (0..n_ins)
        .map(|i| g.add_input(task, &format!("in{i}"), ElemKind::Int32, count))
        .collect();
    let out = g.add_output(task, "out", ElemKind::Int32, count);
    TaskHandles { task, ins, out }
}

/// State for a task that aborts whenever its input tag has the given
/// parity.
#[derive(Clone)]
pub struct AbortParity {
    pub parity: i32,
}

impl ModuleState for AbortParity {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        Some(Box::new(self.clone()))
    }
}

pub fn add_abort_on_parity(g: &mut Graph, name: &str, parity: i32, count: usize) -> TaskHandles {
    fn body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> sigflow::TaskResult {
        let parity = s
            .downcast_ref::<AbortParity>()
            .expect("parity state")
            .parity;
        let tag = ctx.ins.ints(0)[0];
        if tag.rem_euclid(2) == parity {
            return Ok(TaskStatus::Abort);
        }
        let src = ctx.ins.frame(0).clone();
        ctx.outs.frame_mut(0).copy_from(&src);
        Ok(TaskStatus::Ok)
    }
    let m = g.add_module(
        name,
        Cloneability::Cloneable,
        Box::new(AbortParity { parity }),
    );
    let task = g.add_task(m, "run", Arc::new(body));
    let ins = vec![g.add_input(task, "in", ElemKind::Int32, count)];
    let out = g.add_output(task, "out", ElemKind::Int32, count);
    TaskHandles { task, ins, out }
}
