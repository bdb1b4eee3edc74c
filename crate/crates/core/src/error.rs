//! Error types for graph construction, sequence analysis, execution,
//! duplication and pipelining.

use thiserror::Error;

use crate::frame::ElemSpec;
use crate::graph::{ModuleId, SocketId, TaskId};

/// Errors raised while binding sockets.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum BindError {
    #[error("input socket {input:?} is already bound to {bound_to:?}")]
    AlreadyBound { input: SocketId, bound_to: SocketId },
    #[error("socket specs disagree: input {input_spec:?} vs output {output_spec:?}")]
    TypeMismatch {
        input_spec: ElemSpec,
        output_spec: ElemSpec,
    },
    #[error("both sockets belong to task {task:?}")]
    SelfBind { task: TaskId },
    #[error("expected an input socket, got {0:?}")]
    NotAnInput(SocketId),
    #[error("expected an output socket, got {0:?}")]
    NotAnOutput(SocketId),
}

/// Errors raised while analyzing a task graph into a sequence.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("no first tasks given")]
    EmptyFirstTasks,
    #[error("cycle without a select task involving {task_names:?}")]
    Cycle { task_names: Vec<String> },
    #[error("declared last task '{name}' was never reached")]
    Unreachable { task: TaskId, name: String },
    #[error("task '{name}' has an unbound input socket #{input}")]
    DanglingInput {
        task: TaskId,
        name: String,
        input: usize,
    },
    #[error("commute '{name}' path {path} leads nowhere schedulable")]
    UnresolvedPath {
        task: TaskId,
        name: String,
        path: usize,
    },
    #[error("module '{name}' state was already consumed by a previous build")]
    StateMoved { module: ModuleId, name: String },
    #[error("task id {0:?} does not exist in this graph")]
    UnknownTask(TaskId),
}

/// Errors raised while executing tasks or sequences.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("task '{name}' has an unbound input socket #{input}")]
    UnboundInput {
        task: TaskId,
        name: String,
        input: usize,
    },
    #[error("task '{name}' failed: {message}")]
    TaskFailure {
        task: TaskId,
        name: String,
        message: String,
    },
    #[error("commute '{name}' got control value {value} outside [0, {paths})")]
    PathOutOfRange {
        task: TaskId,
        name: String,
        value: i64,
        paths: usize,
    },
    #[error("select '{name}' has no populated frame on selected input {path}")]
    SelectedInputEmpty {
        task: TaskId,
        name: String,
        path: usize,
    },
}

/// Errors raised while duplicating sequences.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CloneError {
    #[error("module '{name}' cannot be cloned (sequential-only)")]
    NotCloneable { module: ModuleId, name: String },
    #[error("pinning list has {given} entries but {expected} workers")]
    PinningLength { given: usize, expected: usize },
    #[error("execution unit {unit} is outside the available range (0..{available})")]
    PinningInvalid { unit: usize, available: usize },
    #[error("replica count must be at least 1")]
    ZeroReplicas,
}

/// Errors raised while building or running a pipeline.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("task '{name}' is not assigned to any stage")]
    Unassigned { task: TaskId, name: String },
    #[error("task '{name}' is assigned to stages {first} and {second}")]
    DoublyAssigned {
        task: TaskId,
        name: String,
        first: usize,
        second: usize,
    },
    #[error("entry task '{name}' is not inside stage 1")]
    EntryOutsideFirstStage { task: TaskId, name: String },
    #[error("adaptor buffer capacity must be at least 1")]
    CapacityZero,
    #[error(
        "stages {upstream} and {downstream} are both replicated; a boundary needs a singular side"
    )]
    AdjacentReplicated { upstream: usize, downstream: usize },
    #[error("no data crosses the boundary between stages {upstream} and {downstream}")]
    DisconnectedStages { upstream: usize, downstream: usize },
    #[error("edge from '{from}' (stage {from_stage}) feeds '{to}' in earlier stage {to_stage}")]
    BackwardEdge {
        from: String,
        to: String,
        from_stage: usize,
        to_stage: usize,
    },
    #[error("stage {stage}: {source}")]
    StageBuild {
        stage: usize,
        #[source]
        source: BuildError,
    },
    #[error(transparent)]
    Clone(#[from] CloneError),
    #[error("worker for stage {stage} replica {replica} failed: {source}")]
    WorkerFailure {
        stage: usize,
        replica: usize,
        #[source]
        source: ExecError,
    },
    #[error("pipeline state is poisoned by a previous failed run")]
    Poisoned,
}

/// Errors raised while resolving a declarative pipeline plan.
#[derive(Debug, Error)]
pub enum PlanConfigError {
    #[error("failed to parse plan: {0}")]
    Parse(String),
    #[error("unknown task name '{0}'")]
    UnknownTaskName(String),
    #[error("plan has no stages")]
    NoStages,
    #[error("unknown wait mode '{0}' (expected 'active' or 'passive')")]
    BadWaitMode(String),
    #[error("unknown copy mode '{0}' (expected 'deep_copy' or 'copyless')")]
    BadCopyMode(String),
}
