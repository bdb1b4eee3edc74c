//! Frames: the fixed-size batches of elements that flow through sockets.
//!
//! Every socket is declared with an element kind and a per-frame element
//! count; a [`FrameBuffer`] holds exactly one frame plus a generation
//! counter (the frame's index in the stream). Generations live on buffers,
//! not sockets, so handle rotation across pipeline boundaries keeps the
//! ordering audit intact.

use num_complex::Complex32;

/// Element type carried by a socket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElemKind {
    /// 8-bit raw data (bits, bytes).
    Byte,
    /// 32-bit signed integer (control values, tags).
    Int32,
    /// 32-bit real sample.
    Real32,
    /// 32-bit complex sample (two f32).
    Complex32,
}

impl ElemKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ElemKind::Byte => "u8",
            ElemKind::Int32 => "i32",
            ElemKind::Real32 => "r32",
            ElemKind::Complex32 => "c32",
        }
    }
}

/// Element kind plus per-frame element count. The unit of binding
/// compatibility: two sockets can only be bound if their specs agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElemSpec {
    pub kind: ElemKind,
    pub count: usize,
}

impl ElemSpec {
    pub fn new(kind: ElemKind, count: usize) -> Self {
        Self { kind, count }
    }
}

/// Typed frame storage. The variant is fixed at allocation; binding rules
/// guarantee producer and consumer always agree on it.
#[derive(Clone, Debug)]
pub enum FramePayload {
    Byte(Vec<u8>),
    Int32(Vec<i32>),
    Real32(Vec<f32>),
    Complex32(Vec<Complex32>),
}

impl FramePayload {
    fn new(spec: ElemSpec) -> Self {
        match spec.kind {
            ElemKind::Byte => FramePayload::Byte(vec![0; spec.count]),
            ElemKind::Int32 => FramePayload::Int32(vec![0; spec.count]),
            ElemKind::Real32 => FramePayload::Real32(vec![0.0; spec.count]),
            ElemKind::Complex32 => {
                FramePayload::Complex32(vec![Complex32::new(0.0, 0.0); spec.count])
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FramePayload::Byte(v) => v.len(),
            FramePayload::Int32(v) => v.len(),
            FramePayload::Real32(v) => v.len(),
            FramePayload::Complex32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ElemKind {
        match self {
            FramePayload::Byte(_) => ElemKind::Byte,
            FramePayload::Int32(_) => ElemKind::Int32,
            FramePayload::Real32(_) => ElemKind::Real32,
            FramePayload::Complex32(_) => ElemKind::Complex32,
        }
    }
}

/// One frame in flight: payload plus its generation (stream index).
#[derive(Clone, Debug)]
pub struct FrameBuffer {
    payload: FramePayload,
    generation: u64,
}

impl FrameBuffer {
    pub fn new(spec: ElemSpec) -> Self {
        Self {
            payload: FramePayload::new(spec),
            generation: 0,
        }
    }

    pub fn spec(&self) -> ElemSpec {
        ElemSpec::new(self.payload.kind(), self.payload.len())
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn set_generation(&mut self, gen: u64) {
        self.generation = gen;
    }

    pub fn payload(&self) -> &FramePayload {
        &self.payload
    }

    pub fn bytes(&self) -> Option<&[u8]> {
        match &self.payload {
            FramePayload::Byte(v) => Some(v),
            _ => None,
        }
    }

    pub fn bytes_mut(&mut self) -> Option<&mut [u8]> {
        match &mut self.payload {
            FramePayload::Byte(v) => Some(v),
            _ => None,
        }
    }

    pub fn ints(&self) -> Option<&[i32]> {
        match &self.payload {
            FramePayload::Int32(v) => Some(v),
            _ => None,
        }
    }

    pub fn ints_mut(&mut self) -> Option<&mut [i32]> {
        match &mut self.payload {
            FramePayload::Int32(v) => Some(v),
            _ => None,
        }
    }

    pub fn reals(&self) -> Option<&[f32]> {
        match &self.payload {
            FramePayload::Real32(v) => Some(v),
            _ => None,
        }
    }

    pub fn reals_mut(&mut self) -> Option<&mut [f32]> {
        match &mut self.payload {
            FramePayload::Real32(v) => Some(v),
            _ => None,
        }
    }

    pub fn cplx(&self) -> Option<&[Complex32]> {
        match &self.payload {
            FramePayload::Complex32(v) => Some(v),
            _ => None,
        }
    }

    pub fn cplx_mut(&mut self) -> Option<&mut [Complex32]> {
        match &mut self.payload {
            FramePayload::Complex32(v) => Some(v),
            _ => None,
        }
    }

    /// Copy payload and generation from another frame of the same spec.
    pub fn copy_from(&mut self, other: &FrameBuffer) {
        debug_assert_eq!(self.spec(), other.spec());
        match (&mut self.payload, &other.payload) {
            (FramePayload::Byte(d), FramePayload::Byte(s)) => d.copy_from_slice(s),
            (FramePayload::Int32(d), FramePayload::Int32(s)) => d.copy_from_slice(s),
            (FramePayload::Real32(d), FramePayload::Real32(s)) => d.copy_from_slice(s),
            (FramePayload::Complex32(d), FramePayload::Complex32(s)) => d.copy_from_slice(s),
            _ => panic!("frame copy between mismatched payload kinds"),
        }
        self.generation = other.generation;
    }

    /// FNV-1a over the raw element bytes. Used by tests and audits to prove
    /// that routing never touches payload contents.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        match &self.payload {
            FramePayload::Byte(v) => v.iter().for_each(|b| eat(*b)),
            FramePayload::Int32(v) => v.iter().flat_map(|x| x.to_le_bytes()).for_each(&mut eat),
            FramePayload::Real32(v) => v.iter().flat_map(|x| x.to_le_bytes()).for_each(&mut eat),
            FramePayload::Complex32(v) => v
                .iter()
                .flat_map(|x| [x.re.to_le_bytes(), x.im.to_le_bytes()])
                .flatten()
                .for_each(&mut eat),
        }
        h
    }
}
