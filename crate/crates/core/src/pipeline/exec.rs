//! Pipeline execution: one worker per stage replica, coordinated
//! shutdown, drain-on-stop.
//!
//! The stop condition is evaluated on the final stage's completed passes.
//! Once it fires, first-stage workers quit at their next pass boundary,
//! downstream stages keep consuming until their upstream runs dry, and
//! the final stage pulls any in-flight frames without processing them, so
//! every adaptor ends balanced (pushed == pulled) and the sink's output
//! is a deterministic prefix of the stream.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::affinity;
use crate::error::{ExecError, PipelineError};
use crate::graph::AdaptorRole;
use crate::pipeline::stats::{PipelineReport, StageStats};
use crate::pipeline::{Acquire, Adaptor, CopyMode, Cursor, Pipeline};
use crate::sequence::{
    run_pass, AdaptorHooks, CompiledTask, ExecState, HookFlow, PassOutcome, SequencePlan,
};

pub(crate) struct PipeShared {
    stop: AtomicBool,
    fail: AtomicBool,
    fail_info: Mutex<Option<(usize, usize, ExecError)>>,
}

struct SinkCtl<'a> {
    completed: u64,
    stop: &'a mut (dyn FnMut() -> bool + Send),
}

/// Blocked-time and copy-time accounting of one worker.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct AdaptorTimes {
    pub push_wait_ns: u64,
    pub pull_wait_ns: u64,
    pub push_copy_ns: u64,
    pub pull_copy_ns: u64,
}

impl AdaptorTimes {
    fn add(&mut self, o: &AdaptorTimes) {
        self.push_wait_ns += o.push_wait_ns;
        self.pull_wait_ns += o.pull_wait_ns;
        self.push_copy_ns += o.push_copy_ns;
        self.pull_copy_ns += o.pull_copy_ns;
    }
}

struct WorkerResult {
    passes: u64,
    aborted: u64,
    wall: Duration,
    times: AdaptorTimes,
}

/// Adaptor dispatch for one worker: owns the cursors and the wait/copy
/// accounting, reads and writes the worker's stage-local buffers.
struct WorkerHooks<'a> {
    adaptors: &'a [Arc<Adaptor>],
    shared: &'a PipeShared,
    replica: usize,
    cursors: Vec<Cursor>,
    times: AdaptorTimes,
}

impl<'a> WorkerHooks<'a> {
    fn new(adaptors: &'a [Arc<Adaptor>], shared: &'a PipeShared, replica: usize) -> Self {
        Self {
            adaptors,
            shared,
            replica,
            cursors: adaptors.iter().map(|a| a.cursor()).collect(),
            times: AdaptorTimes::default(),
        }
    }
}

impl AdaptorHooks for WorkerHooks<'_> {
    fn run(
        &mut self,
        role: AdaptorRole,
        idx: usize,
        task: &CompiledTask,
        st: &mut ExecState,
    ) -> Result<HookFlow, ExecError> {
        let a = &self.adaptors[idx];
        let cursor = &mut self.cursors[idx];
        match role {
            AdaptorRole::Push => {
                let col = a.producer_column(cursor, self.replica);
                let pos = cursor.pos[col];
                let t0 = Instant::now();
                match a.wait_push(col, pos, &self.shared.fail) {
                    Acquire::Ready => {}
                    _ => return Ok(HookFlow::Shutdown),
                }
                self.times.push_wait_ns += t0.elapsed().as_nanos() as u64;
                let copy = a.copy;
                let mut copy_ns = 0u64;
                a.fill_slot(col, pos, |frames| {
                    for (c, src) in task.input_sources.iter().enumerate() {
                        let sock = src.expect("push inputs are bound by construction");
                        let bid = st.sock_buf[sock.index()].expect("crossing source has a buffer");
                        match copy {
                            CopyMode::DeepCopy => {
                                let t = Instant::now();
                                frames[c].copy_from(&st.buffers[bid].borrow());
                                copy_ns += t.elapsed().as_nanos() as u64;
                            }
                            CopyMode::Copyless => {
                                std::mem::swap(&mut *st.buffers[bid].borrow_mut(), &mut frames[c]);
                            }
                        }
                    }
                });
                self.times.push_copy_ns += copy_ns;
                a.advance_producer(cursor, col);
                Ok(HookFlow::Done)
            }
            AdaptorRole::Pull => {
                let col = a.consumer_column(cursor, self.replica);
                let pos = cursor.pos[col];
                let t0 = Instant::now();
                match a.wait_pull(col, pos, &self.shared.fail) {
                    Acquire::Ready => {}
                    Acquire::Dry | Acquire::Interrupted => return Ok(HookFlow::Shutdown),
                }
                self.times.pull_wait_ns += t0.elapsed().as_nanos() as u64;
                let copy = a.copy;
                let mut copy_ns = 0u64;
                a.take_slot(col, pos, |frames| {
                    for (c, out) in task.output_ids.iter().enumerate() {
                        let bid = st.sock_buf[out.index()].expect("pull outputs have buffers");
                        match copy {
                            CopyMode::DeepCopy => {
                                let t = Instant::now();
                                st.buffers[bid].borrow_mut().copy_from(&frames[c]);
                                copy_ns += t.elapsed().as_nanos() as u64;
                            }
                            CopyMode::Copyless => {
                                std::mem::swap(&mut *st.buffers[bid].borrow_mut(), &mut frames[c]);
                            }
                        }
                    }
                });
                self.times.pull_copy_ns += copy_ns;
                a.advance_consumer(cursor, col);
                Ok(HookFlow::Done)
            }
        }
    }
}

fn stage_worker(
    plan: &Arc<SequencePlan>,
    st: &mut ExecState,
    stage: usize,
    nstages: usize,
    replica: usize,
    adaptors: &[Arc<Adaptor>],
    shared: &PipeShared,
    sink: &Mutex<SinkCtl<'_>>,
    pin: Option<usize>,
) -> WorkerResult {
    if let Some(u) = pin {
        affinity::pin_current_to(u);
    }
    st.worker = replica;
    let mut hooks = WorkerHooks::new(adaptors, shared, replica);
    let is_first = stage == 0;
    let is_last = stage == nstages - 1;
    let t0 = Instant::now();
    let mut passes = 0u64;
    let mut aborted = 0u64;

    loop {
        if shared.fail.load(Ordering::SeqCst) {
            break;
        }
        if shared.stop.load(Ordering::SeqCst) {
            if is_first {
                // producers stop first
                break;
            }
            if is_last {
                // pull the in-flight frames without processing them
                drain_discard(plan, st, &mut hooks);
                break;
            }
            // middle stages keep going until their upstream runs dry
        }
        match run_pass(plan, st, &mut hooks) {
            Ok(PassOutcome::Completed) => {
                passes += 1;
                if is_last {
                    let mut ctl = sink.lock().expect("sink control mutex");
                    ctl.completed += 1;
                    if (ctl.stop)() {
                        shared.stop.store(true, Ordering::SeqCst);
                    }
                }
            }
            Ok(PassOutcome::Aborted) => aborted += 1,
            Ok(PassOutcome::Shutdown) => break,
            Err(e) => {
                shared.fail.store(true, Ordering::SeqCst);
                let mut info = shared.fail_info.lock().expect("fail info mutex");
                if info.is_none() {
                    *info = Some((stage, replica, e));
                }
                break;
            }
        }
    }
    // exit protocol: no more frames flow downstream from this worker
    if stage + 1 < nstages {
        adaptors[stage].producer_exited();
    }
    WorkerResult {
        passes,
        aborted,
        wall: t0.elapsed(),
        times: hooks.times,
    }
}

fn drain_discard(plan: &Arc<SequencePlan>, st: &mut ExecState, hooks: &mut WorkerHooks<'_>) {
    let pulls: Vec<usize> = plan
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t.adaptor, Some((AdaptorRole::Pull, _))))
        .map(|(i, _)| i)
        .collect();
    if pulls.is_empty() {
        return;
    }
    'outer: loop {
        for ti in &pulls {
            let ct = &plan.tasks[*ti];
            let (role, idx) = ct.adaptor.expect("pull task");
            match hooks.run(role, idx, ct, st) {
                Ok(HookFlow::Done) => {}
                Ok(HookFlow::Shutdown) | Err(_) => break 'outer,
            }
        }
    }
}

impl Pipeline {
    /// Run until `stop` (evaluated after each completed final-stage pass)
    /// returns true, then drain and join all workers.
    pub fn exec(
        &mut self,
        stop: impl FnMut() -> bool + Send,
    ) -> Result<PipelineReport, PipelineError> {
        self.exec_inner(stop, false)
    }

    /// Run until the final stage has completed exactly `frames` passes.
    /// With `frames == 0` the pipeline shuts down immediately and cleanly.
    pub fn exec_frames(&mut self, frames: u64) -> Result<PipelineReport, PipelineError> {
        let mut done = 0u64;
        let stop = move || {
            done += 1;
            done >= frames
        };
        self.exec_inner(stop, frames == 0)
    }

    fn exec_inner(
        &mut self,
        mut stop: impl FnMut() -> bool + Send,
        stop_before_start: bool,
    ) -> Result<PipelineReport, PipelineError> {
        if self.poisoned {
            return Err(PipelineError::Poisoned);
        }
        let nstages = self.stages.len();
        let shared = PipeShared {
            stop: AtomicBool::new(stop_before_start),
            fail: AtomicBool::new(false),
            fail_info: Mutex::new(None),
        };
        for (b, a) in self.adaptors.iter().enumerate() {
            a.reset(self.stages[b].replicas.len());
        }
        let sink = Mutex::new(SinkCtl {
            completed: 0,
            stop: &mut stop,
        });

        let t0 = Instant::now();
        let adaptors = &self.adaptors;
        let sharedr = &shared;
        let sinkr = &sink;
        let results: Vec<Vec<WorkerResult>> = std::thread::scope(|scope| {
            let mut per_stage = Vec::new();
            for (si, stage) in self.stages.iter_mut().enumerate() {
                let plan = &stage.plan;
                let pinning = stage.pinning.clone();
                let mut handles = Vec::new();
                for (r, st) in stage.replicas.iter_mut().enumerate() {
                    let pin = pinning.as_ref().map(|p| p[r]);
                    let plan = Arc::clone(plan);
                    handles.push(scope.spawn(move || {
                        stage_worker(&plan, st, si, nstages, r, adaptors, sharedr, sinkr, pin)
                    }));
                }
                per_stage.push(handles);
            }
            per_stage
                .into_iter()
                .map(|hs| {
                    hs.into_iter()
                        .map(|h| h.join().expect("pipeline worker panicked"))
                        .collect()
                })
                .collect()
        });
        let wall = t0.elapsed();

        if shared.fail.load(Ordering::SeqCst) {
            self.poisoned = true;
            let (stage, replica, source) = shared
                .fail_info
                .lock()
                .expect("fail info mutex")
                .take()
                .expect("failure recorded");
            return Err(PipelineError::WorkerFailure {
                stage,
                replica,
                source,
            });
        }

        let sink_passes = results[nstages - 1].iter().map(|r| r.passes).sum();
        let stages = results
            .iter()
            .enumerate()
            .map(|(si, workers)| {
                let mut times = AdaptorTimes::default();
                for w in workers {
                    times.add(&w.times);
                }
                let worker_wall: Duration = workers.iter().map(|w| w.wall).sum();
                StageStats::new(
                    si,
                    workers.len(),
                    workers.iter().map(|w| w.passes).sum(),
                    workers.iter().map(|w| w.aborted).sum(),
                    worker_wall,
                    times.push_wait_ns,
                    times.pull_wait_ns,
                    times.push_copy_ns,
                    times.pull_copy_ns,
                )
            })
            .collect();

        Ok(PipelineReport {
            stages,
            sink_passes,
            wall,
            adaptor_flow: self
                .adaptors
                .iter()
                .map(|a| {
                    (
                        a.pushed.load(Ordering::Relaxed),
                        a.pulled.load(Ordering::Relaxed),
                    )
                })
                .collect(),
        })
    }
}
