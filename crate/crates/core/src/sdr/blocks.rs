//! Blocks of the toy transceiver chain: PRNG source, repetition code,
//! BPSK modem, AWGN channel, LFSR whitener, LLR clipper, majority
//! decoder, error monitor and byte sink.
//!
//! Determinism contract: the source and the channel derive a fresh RNG
//! per frame from (master seed, stream id, frame generation), so the
//! samples a frame sees do not depend on where or when it is processed.
//! Pipelined and sequential runs are bit-identical because of this.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::frame::ElemKind;
use crate::graph::{Graph, ModuleId, SocketId, TaskId};
use crate::state::{Cloneability, ModuleState};
use crate::task::{TaskCtx, TaskStatus};

/// SplitMix64-style key derivation for per-frame RNG streams.
fn mix64(seed: u64, stream: u64, generation: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(generation.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn frame_rng(seed: u64, stream: u64, generation: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed, stream, generation))
}

macro_rules! clone_impl {
    () => {
        fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
            Some(Box::new(self.clone()))
        }
    };
}

#[derive(Clone, Debug)]
pub struct SourceState {
    pub seed: u64,
}
impl ModuleState for SourceState {
    clone_impl!();
}

#[derive(Clone, Debug)]
pub struct EncoderState {
    pub rep: usize,
}
impl ModuleState for EncoderState {
    clone_impl!();
}

#[derive(Clone, Debug)]
pub struct ModemState {
    pub sigma: f32,
}
impl ModuleState for ModemState {
    clone_impl!();
}

#[derive(Clone, Debug)]
pub struct ChannelState {
    pub seed: u64,
    pub sigma: f32,
}
impl ModuleState for ChannelState {
    clone_impl!();
}

/// Persistent LFSR whitener. The register survives across frames (the
/// stream position depends on every frame processed so far), which is a
/// genuine sequential dependency: this module cannot be duplicated.
#[derive(Debug)]
pub struct WhitenerState {
    lfsr: u16,
    snapshot: u16,
}

impl WhitenerState {
    pub fn new() -> Self {
        Self {
            lfsr: 0xace1,
            snapshot: 0xace1,
        }
    }

    fn step(r: &mut u16) -> f32 {
        let bit = (*r ^ (*r >> 2) ^ (*r >> 3) ^ (*r >> 5)) & 1;
        *r = (*r >> 1) | (bit << 15);
        if bit == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl Default for WhitenerState {
    fn default() -> Self {
        Self::new()
    }
}

impl ModuleState for WhitenerState {
    // no clone hook: the stream position is a writable dependency on the
    // whole past, so duplication is refused
}

#[derive(Clone, Debug)]
pub struct ClipState {
    pub limit: f32,
}
impl ModuleState for ClipState {
    clone_impl!();
}

#[derive(Clone, Debug)]
pub struct DecoderState {
    pub k: usize,
    pub rep: usize,
}
impl ModuleState for DecoderState {
    clone_impl!();
}

/// Error counting. FER = frame_errors / frames_seen, BER = bit_errors /
/// (frames_seen * k); counters only ever grow.
#[derive(Clone, Debug, Default)]
pub struct MonitorState {
    pub frames_seen: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
}

impl MonitorState {
    pub fn fer(&self) -> f64 {
        if self.frames_seen == 0 {
            0.0
        } else {
            self.frame_errors as f64 / self.frames_seen as f64
        }
    }

    pub fn ber(&self, k: usize) -> f64 {
        if self.frames_seen == 0 {
            0.0
        } else {
            self.bit_errors as f64 / (self.frames_seen as f64 * k as f64)
        }
    }

    pub fn merge(&mut self, other: &MonitorState) {
        self.frames_seen += other.frames_seen;
        self.frame_errors += other.frame_errors;
        self.bit_errors += other.bit_errors;
    }
}

impl ModuleState for MonitorState {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        // replicas count their own share and are merged afterwards
        Some(Box::new(MonitorState::default()))
    }
}

/// Decoded bytes plus the generation of every frame, in arrival order.
#[derive(Clone, Debug, Default)]
pub struct SinkState {
    pub gens: Vec<u64>,
    pub data: Vec<u8>,
}

impl ModuleState for SinkState {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        Some(Box::new(SinkState::default()))
    }
}

pub(crate) struct ChainTasks {
    pub source: TaskId,
    pub encode: TaskId,
    pub modulate: TaskId,
    pub add_noise: TaskId,
    pub scramble: TaskId,
    pub descramble: TaskId,
    pub demodulate: TaskId,
    pub demod_out: SocketId,
    pub decode: TaskId,
    pub decode_in: SocketId,
    pub observe: TaskId,
    pub collect: TaskId,
    pub monitor_module: ModuleId,
    pub sink_module: ModuleId,
}

/// Add every data block of the chain (everything except the cleanup
/// loop, which the caller wires between `demod_out` and `decode_in`).
pub(crate) fn add_chain_blocks(
    g: &mut Graph,
    k: usize,
    rep: usize,
    sigma: f32,
    seed: u64,
) -> ChainTasks {
    let n = k * rep;

    let m_src = g.add_module(
        "source",
        Cloneability::Cloneable,
        Box::new(SourceState { seed }),
    );
    let source = g.add_task(m_src, "generate", Arc::new(source_body));
    let source_out = g.add_output(source, "bits", ElemKind::Byte, k);

    let m_enc = g.add_module(
        "encoder",
        Cloneability::Cloneable,
        Box::new(EncoderState { rep }),
    );
    let encode = g.add_task(m_enc, "encode", Arc::new(encode_body));
    let enc_in = g.add_input(encode, "bits", ElemKind::Byte, k);
    let enc_out = g.add_output(encode, "codeword", ElemKind::Byte, n);
    g.bind(enc_in, source_out).unwrap();

    let m_modem = g.add_module(
        "modem",
        Cloneability::Cloneable,
        Box::new(ModemState { sigma }),
    );
    let modulate = g.add_task(m_modem, "modulate", Arc::new(modulate_body));
    let mod_in = g.add_input(modulate, "bits", ElemKind::Byte, n);
    let mod_out = g.add_output(modulate, "symbols", ElemKind::Real32, n);
    g.bind(mod_in, enc_out).unwrap();

    let m_chan = g.add_module(
        "channel",
        Cloneability::Cloneable,
        Box::new(ChannelState { seed, sigma }),
    );
    let add_noise = g.add_task(m_chan, "add_noise", Arc::new(channel_body));
    let chan_in = g.add_input(add_noise, "symbols", ElemKind::Real32, n);
    let chan_out = g.add_output(add_noise, "noisy", ElemKind::Real32, n);
    g.bind(chan_in, mod_out).unwrap();

    let m_whiten = g.add_module(
        "whitener",
        Cloneability::SequentialOnly,
        Box::new(WhitenerState::new()),
    );
    let scramble = g.add_task(m_whiten, "scramble", Arc::new(scramble_body));
    let scr_in = g.add_input(scramble, "in", ElemKind::Real32, n);
    let scr_out = g.add_output(scramble, "out", ElemKind::Real32, n);
    g.bind(scr_in, chan_out).unwrap();

    let descramble = g.add_task(m_whiten, "descramble", Arc::new(descramble_body));
    let descr_in = g.add_input(descramble, "in", ElemKind::Real32, n);
    let descr_out = g.add_output(descramble, "out", ElemKind::Real32, n);
    g.bind(descr_in, scr_out).unwrap();

    let demodulate = g.add_task(m_modem, "demodulate", Arc::new(demodulate_body));
    let demod_in = g.add_input(demodulate, "noisy", ElemKind::Real32, n);
    let demod_out = g.add_output(demodulate, "llr", ElemKind::Real32, n);
    g.bind(demod_in, descr_out).unwrap();

    let m_dec = g.add_module(
        "decoder",
        Cloneability::Cloneable,
        Box::new(DecoderState { k, rep }),
    );
    let decode = g.add_task(m_dec, "decode", Arc::new(decode_body));
    let decode_in = g.add_input(decode, "llr", ElemKind::Real32, n);
    let dec_out = g.add_output(decode, "bits", ElemKind::Byte, k);

    let monitor_module = g.add_module(
        "monitor",
        Cloneability::Cloneable,
        Box::new(MonitorState::default()),
    );
    let observe = g.add_task(monitor_module, "observe", Arc::new(observe_body));
    let obs_dec_in = g.add_input(observe, "decoded", ElemKind::Byte, k);
    let obs_ref_in = g.add_input(observe, "reference", ElemKind::Byte, k);
    let obs_out = g.add_output(observe, "decoded_out", ElemKind::Byte, k);
    g.bind(obs_dec_in, dec_out).unwrap();
    g.bind(obs_ref_in, source_out).unwrap();

    let sink_module = g.add_module(
        "sink",
        Cloneability::Cloneable,
        Box::new(SinkState::default()),
    );
    let collect = g.add_task(sink_module, "collect", Arc::new(collect_body));
    let sink_in = g.add_input(collect, "bits", ElemKind::Byte, k);
    g.bind(sink_in, obs_out).unwrap();

    ChainTasks {
        source,
        encode,
        modulate,
        add_noise,
        scramble,
        descramble,
        demodulate,
        demod_out,
        decode,
        decode_in,
        observe,
        collect,
        monitor_module,
        sink_module,
    }
}

fn source_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let seed = s.downcast_ref::<SourceState>().expect("source state").seed;
    let mut rng = frame_rng(seed, 1, ctx.pass);
    for b in ctx.outs.bytes(0) {
        *b = rng.gen_range(0..2u8);
    }
    Ok(TaskStatus::Ok)
}

fn encode_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let rep = s.downcast_ref::<EncoderState>().expect("encoder state").rep;
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let src = ins.bytes(0);
    for (i, b) in outs.bytes(0).iter_mut().enumerate() {
        *b = src[i / rep];
    }
    Ok(TaskStatus::Ok)
}

fn modulate_body(ctx: &mut TaskCtx<'_>, _s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let bits = ins.bytes(0);
    for (x, b) in outs.reals(0).iter_mut().zip(bits) {
        *x = 1.0 - 2.0 * f32::from(*b);
    }
    Ok(TaskStatus::Ok)
}

fn channel_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let st = s.downcast_ref::<ChannelState>().expect("channel state");
    let gen = ctx.ins.frame(0).generation();
    let mut rng = frame_rng(st.seed, 2, gen);
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let x = ins.reals(0);
    for (y, x) in outs.reals(0).iter_mut().zip(x) {
        let noise: f32 = rng.sample(StandardNormal);
        *y = x + st.sigma * noise;
    }
    Ok(TaskStatus::Ok)
}

fn scramble_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let st = s.downcast_mut::<WhitenerState>().expect("whitener state");
    st.snapshot = st.lfsr;
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let x = ins.reals(0);
    for (y, x) in outs.reals(0).iter_mut().zip(x) {
        *y = x * WhitenerState::step(&mut st.lfsr);
    }
    Ok(TaskStatus::Ok)
}

fn descramble_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let st = s.downcast_mut::<WhitenerState>().expect("whitener state");
    let mut r = st.snapshot;
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let x = ins.reals(0);
    for (y, x) in outs.reals(0).iter_mut().zip(x) {
        *y = x * WhitenerState::step(&mut r);
    }
    Ok(TaskStatus::Ok)
}

fn demodulate_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let sigma = s.downcast_ref::<ModemState>().expect("modem state").sigma;
    let scale = 2.0 / (sigma * sigma);
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let y = ins.reals(0);
    for (llr, y) in outs.reals(0).iter_mut().zip(y) {
        *llr = scale * y;
    }
    Ok(TaskStatus::Ok)
}

fn decode_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let st = s.downcast_ref::<DecoderState>().expect("decoder state");
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let llr = ins.reals(0);
    for (i, b) in outs.bytes(0).iter_mut().enumerate() {
        let ones = llr[i * st.rep..(i + 1) * st.rep]
            .iter()
            .filter(|v| **v < 0.0)
            .count();
        *b = u8::from(2 * ones > st.rep);
    }
    Ok(TaskStatus::Ok)
}

fn observe_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let decoded = ins.bytes(0);
    let reference = ins.bytes(1);
    let errors = decoded
        .iter()
        .zip(reference)
        .filter(|(a, b)| a != b)
        .count() as u64;
    outs.bytes(0).copy_from_slice(decoded);
    let st = s.downcast_mut::<MonitorState>().expect("monitor state");
    st.frames_seen += 1;
    st.bit_errors += errors;
    st.frame_errors += u64::from(errors > 0);
    Ok(TaskStatus::Ok)
}

fn collect_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let frame = ctx.ins.frame(0);
    let gen = frame.generation();
    let bytes = frame.bytes().expect("sink expects bytes");
    let st = s.downcast_mut::<SinkState>().expect("sink state");
    st.gens.push(gen);
    st.data.extend_from_slice(bytes);
    Ok(TaskStatus::Ok)
}

fn clip_body(ctx: &mut TaskCtx<'_>, s: &mut dyn ModuleState) -> crate::task::TaskResult {
    let limit = s.downcast_ref::<ClipState>().expect("clip state").limit;
    let (ins, outs) = (&ctx.ins, &mut ctx.outs);
    let x = ins.reals(0);
    for (y, x) in outs.reals(0).iter_mut().zip(x) {
        *y = x.clamp(-limit, limit);
    }
    Ok(TaskStatus::Ok)
}

/// The LLR clipper used inside the cleanup loop: clamps to +/- limit,
/// preserving hard decisions.
pub(crate) fn add_clip(g: &mut Graph, n: usize, limit: f32) -> (TaskId, SocketId, SocketId) {
    let m = g.add_module(
        "clip",
        Cloneability::Cloneable,
        Box::new(ClipState { limit }),
    );
    let task = g.add_task(m, "clamp", Arc::new(clip_body));
    let input = g.add_input(task, "in", ElemKind::Real32, n);
    let output = g.add_output(task, "out", ElemKind::Real32, n);
    (task, input, output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rng_is_keyed_by_generation() {
        let mut a = frame_rng(42, 1, 7);
        let mut b = frame_rng(42, 1, 7);
        let mut c = frame_rng(42, 1, 8);
        let (xa, xb, xc): (u64, u64, u64) = (a.gen(), b.gen(), c.gen());
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn whitener_descramble_inverts_scramble() {
        let mut st = WhitenerState::new();
        let x: Vec<f32> = (0..64).map(|i| (i as f32) - 31.5).collect();
        // scramble two frames back to back, undoing each with the snapshot
        for _ in 0..2 {
            st.snapshot = st.lfsr;
            let scrambled: Vec<f32> = x
                .iter()
                .map(|v| v * WhitenerState::step(&mut st.lfsr))
                .collect();
            let mut r = st.snapshot;
            let restored: Vec<f32> = scrambled
                .iter()
                .map(|v| v * WhitenerState::step(&mut r))
                .collect();
            assert_eq!(restored, x);
        }
    }

    #[test]
    fn whitener_stream_is_stateful_across_frames() {
        let mut st = WhitenerState::new();
        let first: Vec<f32> = (0..8).map(|_| WhitenerState::step(&mut st.lfsr)).collect();
        let second: Vec<f32> = (0..8).map(|_| WhitenerState::step(&mut st.lfsr)).collect();
        assert_ne!(first, second);
    }
}
