//! A multicore streaming-dataflow runtime for signal-processing chains.
//!
//! Stateful tasks grouped into modules expose typed sockets; binding
//! sockets forms a task graph. A depth-first analysis turns a bound
//! region into a [`Sequence`]: a static schedule of sub-sequences with
//! loops and switches built from switcher modules. Sequences execute
//! repeatedly under a stop condition, can be duplicated for
//! synchronization-free parallelism, and can be split into pipeline
//! stages stitched by ordering-preserving adaptors with optional
//! copy-less buffer-handle exchange.
//!
//! ```
//! use sigflow::{blocks, Graph, Sequence};
//!
//! let mut g = Graph::new();
//! let src = blocks::add_tag_source(&mut g, "src", 8);
//! let sink = blocks::add_collector(&mut g, "sink", sigflow::ElemKind::Int32, 8);
//! g.bind(sink.input.unwrap(), src.output.unwrap()).unwrap();
//!
//! let mut seq = Sequence::build(&mut g, &[src.task], &[sink.task]).unwrap();
//! let report = seq.exec_passes(3).unwrap();
//! assert_eq!(report.passes, 3);
//! ```

pub mod affinity;
pub mod bench;
pub mod blocks;
mod error;
mod frame;
mod graph;
mod pipeline;
mod replication;
pub mod sdr;
mod sequence;
mod state;
mod switcher;
mod task;

pub use error::{BindError, BuildError, CloneError, ExecError, PipelineError, PlanConfigError};
pub use frame::{ElemKind, ElemSpec, FrameBuffer, FramePayload};
pub use graph::{Graph, ModuleId, SocketDir, SocketId, TaskClass, TaskId, TaskKind};
pub use pipeline::{
    CopyMode, Pipeline, PipelinePlan, PipelineReport, PlanConfig, StageSpec, StageStats, WaitMode,
};
pub use replication::{CloneSpec, ReplicaSet};
pub use sequence::{ExecReport, Sequence, SequencePlan, SubSeqKind, SubSequence, TaskStatRow};
pub use state::{AsAny, Cloneability, ModuleState, Stateless, SwitcherState};
pub use switcher::{
    add_cyclic_control, add_for_control, add_for_loop, CyclicControlState, ForControlState,
    ForLoop, Switcher,
};
pub use task::{BodyError, InputFrames, OutputFrames, TaskBody, TaskCtx, TaskResult, TaskStatus};
