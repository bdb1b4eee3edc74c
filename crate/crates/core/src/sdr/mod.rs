//! Toy transceiver demo: PRNG bit source, repetition code, BPSK over
//! AWGN, a stateful whitener forced into its own sequential stage, an
//! iterative cleanup loop, majority decoding and error monitoring.
//!
//! The chain exercises the whole runtime at desk scale: pipelining with
//! a replicated decode stage, a sequential-only bottleneck stage, a
//! switcher loop inside a stage, and a relay (the source bits feed the
//! monitor several stages downstream).

pub mod blocks;

use thiserror::Error;

use crate::error::{BuildError, ExecError, PipelineError, PlanConfigError};
use crate::frame::ElemKind;
use crate::graph::{Graph, ModuleId, TaskId};
use crate::pipeline::{Pipeline, PipelineReport, PlanConfig};
use crate::sequence::Sequence;
use crate::switcher::add_for_loop;

use blocks::{add_chain_blocks, add_clip, MonitorState, SinkState};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Plan(#[from] PlanConfigError),
}

/// Configuration of the transceiver chain.
#[derive(Clone, Debug)]
pub struct ChainConfig {
    /// Information bits per frame.
    pub k: usize,
    /// Repetition factor (odd, so majority decoding is well defined).
    pub rep: usize,
    /// Eb/N0 in dB.
    pub ebn0_db: f64,
    pub seed: u64,
    pub frames: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), DemoError> {
        if self.k == 0 {
            return Err(DemoError::Config("k must be at least 1".into()));
        }
        if self.rep == 0 || self.rep % 2 == 0 {
            return Err(DemoError::Config(format!(
                "repetition factor must be odd and positive, got {}",
                self.rep
            )));
        }
        Ok(())
    }

    /// Noise standard deviation for unit-energy BPSK symbols:
    /// sigma^2 = 1 / (2 * rep * 10^(EbN0_dB/10)).
    pub fn sigma(&self) -> f32 {
        let ebn0 = 10f64.powf(self.ebn0_db / 10.0);
        (1.0 / (2.0 * self.rep as f64 * ebn0)).sqrt() as f32
    }

    pub fn codeword_len(&self) -> usize {
        self.k * self.rep
    }
}

/// The built chain graph plus the task handles a plan needs.
pub struct ChainHandles {
    pub graph: Graph,
    pub source: TaskId,
    pub encode: TaskId,
    pub modulate: TaskId,
    pub add_noise: TaskId,
    pub scramble: TaskId,
    pub descramble: TaskId,
    pub demodulate: TaskId,
    pub decode: TaskId,
    pub observe: TaskId,
    pub collect: TaskId,
    pub monitor_module: ModuleId,
    pub sink_module: ModuleId,
}

/// Cleanup-loop iterations (fixed small refinement loop in the receiver).
pub const CLEANUP_ITERATIONS: u64 = 2;
const LLR_CLIP: f32 = 30.0;

/// Build the transmitter + channel + receiver graph.
pub fn build_chain(cfg: &ChainConfig) -> Result<ChainHandles, DemoError> {
    cfg.validate()?;
    let mut g = Graph::new();
    let n = cfg.codeword_len();
    let tasks = add_chain_blocks(&mut g, cfg.k, cfg.rep, cfg.sigma(), cfg.seed);

    // iterative cleanup: a for-loop around the LLR clipper
    let lp = add_for_loop(&mut g, "cleanup", CLEANUP_ITERATIONS, ElemKind::Real32, n);
    g.bind(lp.entry, tasks.demod_out).unwrap();
    let (_clip, clip_in, clip_out) = add_clip(&mut g, n, LLR_CLIP);
    g.bind(clip_in, lp.body_out).unwrap();
    g.bind(lp.body_return, clip_out).unwrap();
    g.bind(tasks.decode_in, lp.exit).unwrap();

    Ok(ChainHandles {
        graph: g,
        source: tasks.source,
        encode: tasks.encode,
        modulate: tasks.modulate,
        add_noise: tasks.add_noise,
        scramble: tasks.scramble,
        descramble: tasks.descramble,
        demodulate: tasks.demodulate,
        decode: tasks.decode,
        observe: tasks.observe,
        collect: tasks.collect,
        monitor_module: tasks.monitor_module,
        sink_module: tasks.sink_module,
    })
}

/// The default 4-stage decomposition: front end | whitener (sequential)
/// | demod+decode (replicable) | monitor+sink. The error monitor rides in
/// the final stage so its counters cover exactly the frames the run
/// delivers (middle stages keep processing while the pipeline drains).
pub fn default_plan_config(decode_workers: usize) -> PlanConfig {
    PlanConfig::from_toml_str(&format!(
        r#"
entry = "source.generate"
capacity = 2

[[stage]]
first = ["source.generate"]
last = ["channel.add_noise"]

[[stage]]
first = ["whitener.scramble"]
last = ["whitener.descramble"]

[[stage]]
first = ["modem.demodulate"]
last = ["decoder.decode"]
workers = {decode_workers}

[[stage]]
first = ["monitor.observe"]
last = ["sink.collect"]
"#
    ))
    .expect("default plan parses")
}

/// Result of a chain run.
#[derive(Clone, Debug)]
pub struct ChainReport {
    pub frames: u64,
    pub fer: f64,
    pub ber: f64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub info_bits: u64,
    pub wall: std::time::Duration,
    /// Information throughput in Mb/s.
    pub throughput_mbps: f64,
    pub sink_gens: Vec<u64>,
    pub sink_data: Vec<u8>,
    pub pipeline: Option<PipelineReport>,
}

impl ChainReport {
    pub fn summary_line(&self, cfg: &ChainConfig, mode: &str) -> String {
        format!(
            "mode={} frames={} k={} rep={} ebn0={}dB fer={:.6} ber={:.8} throughput={:.3}Mb/s elapsed={:.3}s",
            mode,
            self.frames,
            cfg.k,
            cfg.rep,
            cfg.ebn0_db,
            self.fer,
            self.ber,
            self.throughput_mbps,
            self.wall.as_secs_f64()
        )
    }
}

fn assemble_report(
    cfg: &ChainConfig,
    monitor: MonitorState,
    sink: SinkState,
    wall: std::time::Duration,
    pipeline: Option<PipelineReport>,
) -> ChainReport {
    let info_bits = monitor.frames_seen * cfg.k as u64;
    ChainReport {
        frames: monitor.frames_seen,
        fer: monitor.fer(),
        ber: monitor.ber(cfg.k),
        frame_errors: monitor.frame_errors,
        bit_errors: monitor.bit_errors,
        info_bits,
        wall,
        throughput_mbps: info_bits as f64 / wall.as_secs_f64().max(f64::MIN_POSITIVE) / 1e6,
        sink_gens: sink.gens,
        sink_data: sink.data,
        pipeline,
    }
}

/// Run the whole chain as a single sequence on the calling thread.
pub fn run_sequential(cfg: &ChainConfig) -> Result<ChainReport, DemoError> {
    let handles = build_chain(cfg)?;
    let ChainHandles {
        mut graph,
        source,
        collect,
        monitor_module,
        sink_module,
        ..
    } = handles;
    let mut seq = Sequence::build(&mut graph, &[source], &[collect])?;
    let report = seq.exec_passes(cfg.frames)?;
    let monitor = seq
        .module_state::<MonitorState>(monitor_module)
        .cloned()
        .unwrap_or_default();
    let sink = seq
        .module_state::<SinkState>(sink_module)
        .cloned()
        .unwrap_or_default();
    Ok(assemble_report(cfg, monitor, sink, report.wall, None))
}

/// Run the chain through a pipeline described by a declarative plan.
pub fn run_pipelined(cfg: &ChainConfig, plan: &PlanConfig) -> Result<ChainReport, DemoError> {
    let handles = build_chain(cfg)?;
    let resolved = plan.resolve(&handles.graph)?;
    let monitor_module = handles.monitor_module;
    let sink_module = handles.sink_module;
    let mut pipeline = Pipeline::build(handles.graph, &resolved)?;
    let report = pipeline.exec_frames(cfg.frames)?;

    let mut monitor = MonitorState::default();
    for m in pipeline.module_states::<MonitorState>(monitor_module) {
        monitor.merge(m);
    }
    let sink = pipeline
        .module_states::<SinkState>(sink_module)
        .first()
        .map(|s| SinkState {
            gens: s.gens.clone(),
            data: s.data.clone(),
        })
        .unwrap_or_default();
    let wall = report.wall;
    Ok(assemble_report(cfg, monitor, sink, wall, Some(report)))
}
