//! Task execution surface: status codes, bodies and the frame views a
//! body receives.
//!
//! Input frames are exposed read-only, output frames writable; the split
//! is enforced by the types handed to the body. Abort is a status, not an
//! error: it is control flow (restart the enclosing sequence pass), while
//! body errors are failures that stop execution.

use std::cell::{Ref, RefMut};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex32;

use crate::frame::FrameBuffer;
use crate::state::ModuleState;

/// Outcome of one task execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskStatus {
    /// Outputs populated, continue with the schedule.
    Ok,
    /// Restart the enclosing sequence pass at its first task.
    Abort,
    /// Path index produced by commute/select bookkeeping.
    Path(usize),
}

/// Failure reported by a task body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BodyError(pub String);

impl fmt::Display for BodyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BodyError {}

impl From<&str> for BodyError {
    fn from(s: &str) -> Self {
        BodyError(s.to_owned())
    }
}

impl From<String> for BodyError {
    fn from(s: String) -> Self {
        BodyError(s)
    }
}

pub type TaskResult = Result<TaskStatus, BodyError>;

/// Behavior of a task. The closure is shared between sequence replicas;
/// per-replica data lives in the module state passed alongside.
pub type TaskBody = Arc<dyn Fn(&mut TaskCtx<'_>, &mut dyn ModuleState) -> TaskResult + Send + Sync>;

/// Frame-view storage that stays off the heap for the common socket
/// counts. Dispatch builds one of these per task invocation, so the
/// inline path matters for sub-microsecond task floors.
pub(crate) enum FrameVec<T> {
    Inline(arrayvec::ArrayVec<T, 4>),
    Heap(Vec<T>),
}

impl<T> FrameVec<T> {
    pub(crate) fn with_capacity(n: usize) -> Self {
        if n <= 4 {
            FrameVec::Inline(arrayvec::ArrayVec::new())
        } else {
            FrameVec::Heap(Vec::with_capacity(n))
        }
    }

    pub(crate) fn push(&mut self, v: T) {
        match self {
            FrameVec::Inline(a) => a.push(v),
            FrameVec::Heap(v2) => v2.push(v),
        }
    }

    pub(crate) fn as_slice(&self) -> &[T] {
        match self {
            FrameVec::Inline(a) => a,
            FrameVec::Heap(v) => v,
        }
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        match self {
            FrameVec::Inline(a) => a,
            FrameVec::Heap(v) => v,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.as_slice().len()
    }
}

/// One input frame: usually a shared borrow of a pool buffer; an owned
/// snapshot when the input would alias one of the task's own outputs
/// (single-task loop bodies read what they wrote last iteration).
pub(crate) enum InFrame<'a> {
    Borrowed(Ref<'a, FrameBuffer>),
    Owned(FrameBuffer),
}

impl InFrame<'_> {
    pub(crate) fn get(&self) -> &FrameBuffer {
        match self {
            InFrame::Borrowed(r) => r,
            InFrame::Owned(f) => f,
        }
    }
}

/// Read-only views over the input frames, in declaration order.
pub struct InputFrames<'a> {
    pub(crate) frames: FrameVec<Option<InFrame<'a>>>,
}

impl InputFrames<'_> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.len() == 0
    }

    /// The whole frame, generation included.
    pub fn frame(&self, i: usize) -> &FrameBuffer {
        self.frames.as_slice()[i]
            .as_ref()
            .map(InFrame::get)
            .expect("input socket is unbound; the runtime checks this before dispatch")
    }

    pub fn bytes(&self, i: usize) -> &[u8] {
        self.frame(i).bytes().expect("input is not a byte frame")
    }

    pub fn ints(&self, i: usize) -> &[i32] {
        self.frame(i).ints().expect("input is not an i32 frame")
    }

    pub fn reals(&self, i: usize) -> &[f32] {
        self.frame(i).reals().expect("input is not an f32 frame")
    }

    pub fn cplx(&self, i: usize) -> &[Complex32] {
        self.frame(i).cplx().expect("input is not a complex frame")
    }
}

/// Writable views over the output frames, in declaration order.
pub struct OutputFrames<'a> {
    pub(crate) frames: FrameVec<RefMut<'a, FrameBuffer>>,
}

impl OutputFrames<'_> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.len() == 0
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut FrameBuffer {
        &mut self.frames.as_mut_slice()[i]
    }

    pub fn bytes(&mut self, i: usize) -> &mut [u8] {
        self.frame_mut(i)
            .bytes_mut()
            .expect("output is not a byte frame")
    }

    pub fn ints(&mut self, i: usize) -> &mut [i32] {
        self.frame_mut(i)
            .ints_mut()
            .expect("output is not an i32 frame")
    }

    pub fn reals(&mut self, i: usize) -> &mut [f32] {
        self.frame_mut(i)
            .reals_mut()
            .expect("output is not an f32 frame")
    }

    pub fn cplx(&mut self, i: usize) -> &mut [Complex32] {
        self.frame_mut(i)
            .cplx_mut()
            .expect("output is not a complex frame")
    }
}

/// Everything a task body sees for one invocation.
///
/// `ins` and `outs` are separate fields so a body can hold a read view and
/// a write view at the same time:
///
/// ```ignore
/// let src = ctx.ins.reals(0);
/// let dst = ctx.outs.reals(0);
/// ```
pub struct TaskCtx<'a> {
    pub ins: InputFrames<'a>,
    pub outs: OutputFrames<'a>,
    /// Index of the worker executing this replica (0 for sequential runs).
    pub worker: usize,
    /// Serial number of the enclosing pass (counts aborted attempts too).
    pub pass: u64,
}
