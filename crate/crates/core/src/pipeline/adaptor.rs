//! Inter-stage adaptors: bounded, order-preserving producer-consumer
//! handoff.
//!
//! An adaptor owns a 2-D array of slots, one column per replica of the
//! replicated side and one row per unit of buffer capacity, each slot
//! holding one frame per crossing socket. The singular side walks the
//! columns round-robin (one step per push or pull), which preserves the
//! global frame order; the replicated side only ever touches its own
//! column. Every column is therefore single-producer single-consumer: a
//! full/empty flag with acquire/release ordering hands a slot from one
//! side to the other, and the frame contents written before a push are
//! visible after the matching pull.
//!
//! In deep-copy mode frame elements are copied in and out of the slot;
//! in copy-less mode the slot's buffers and the stage-local buffers are
//! exchanged, rotating the handles through a fixed pool without touching
//! elements.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::frame::{ElemSpec, FrameBuffer};

/// Shape of the boundary an adaptor decouples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaptorKind {
    /// Singular producer, replicated consumers.
    OneToN,
    /// Replicated producers, singular consumer.
    NToOne,
    /// Both sides singular.
    OneToOne,
}

/// How a blocked push/pull waits for its slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitMode {
    /// Busy-spin with a relaxation hint.
    Active,
    /// Yield, then bounded sleep between retries.
    #[default]
    Passive,
}

/// What moves across the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopyMode {
    /// Elements are copied into and out of the slot buffers.
    DeepCopy,
    /// Buffer handles are exchanged cyclically; elements never move.
    #[default]
    Copyless,
}

struct Slot {
    full: AtomicBool,
    frames: Mutex<Vec<FrameBuffer>>,
}

struct Column {
    slots: Vec<Slot>,
}

/// One stage boundary's synchronization structure. Shared by the workers
/// on both sides.
pub(crate) struct Adaptor {
    pub kind: AdaptorKind,
    pub fanout: usize,
    pub capacity: usize,
    pub wait: WaitMode,
    pub copy: CopyMode,
    columns: Vec<Column>,
    /// Upstream workers that have not exited yet; when this reaches zero
    /// a consumer finding its column empty knows the stream is dry.
    pub producers_live: AtomicUsize,
    pub pushed: AtomicU64,
    pub pulled: AtomicU64,
}

/// Per-worker cursor over one adaptor (round-robin position and per
/// column ring positions). Owned by the worker, never shared.
#[derive(Clone, Debug)]
pub(crate) struct Cursor {
    pub rr: usize,
    pub pos: Vec<usize>,
}

impl Cursor {
    fn new(fanout: usize) -> Self {
        Self {
            rr: 0,
            pos: vec![0; fanout],
        }
    }
}

/// Outcome of a blocking slot acquisition.
pub(crate) enum Acquire {
    Ready,
    /// The pipeline is failing or stopping; abandon the pass.
    Interrupted,
    /// Consumer side only: producers are gone and the column is empty.
    Dry,
}

impl Adaptor {
    pub fn new(
        kind: AdaptorKind,
        fanout: usize,
        capacity: usize,
        specs: &[ElemSpec],
        wait: WaitMode,
        copy: CopyMode,
        producers: usize,
    ) -> Self {
        let columns = (0..fanout)
            .map(|_| Column {
                slots: (0..capacity)
                    .map(|_| Slot {
                        full: AtomicBool::new(false),
                        frames: Mutex::new(specs.iter().map(|s| FrameBuffer::new(*s)).collect()),
                    })
                    .collect(),
            })
            .collect();
        Self {
            kind,
            fanout,
            capacity,
            wait,
            copy,
            columns,
            producers_live: AtomicUsize::new(producers),
            pushed: AtomicU64::new(0),
            pulled: AtomicU64::new(0),
        }
    }

    pub fn cursor(&self) -> Cursor {
        Cursor::new(self.fanout)
    }

    /// Reset between runs: empty slots, fresh counters.
    pub fn reset(&self, producers: usize) {
        for col in &self.columns {
            for slot in &col.slots {
                slot.full.store(false, Ordering::Relaxed);
            }
        }
        self.producers_live.store(producers, Ordering::SeqCst);
        self.pushed.store(0, Ordering::Relaxed);
        self.pulled.store(0, Ordering::Relaxed);
    }

    pub fn producer_exited(&self) {
        self.producers_live.fetch_sub(1, Ordering::SeqCst);
    }

    fn wait_step(&self, spins: &mut u32) {
        *spins += 1;
        match self.wait {
            WaitMode::Active => {
                std::hint::spin_loop();
                // stay responsive on oversubscribed hosts
                if *spins % 8192 == 0 {
                    std::thread::yield_now();
                }
            }
            WaitMode::Passive => {
                if *spins < 64 {
                    std::thread::yield_now();
                } else {
                    std::thread::sleep(std::time::Duration::from_micros(50));
                }
            }
        }
    }

    pub fn producer_column(&self, cursor: &Cursor, replica: usize) -> usize {
        match self.kind {
            AdaptorKind::NToOne => replica,
            _ => cursor.rr,
        }
    }

    pub fn consumer_column(&self, cursor: &Cursor, replica: usize) -> usize {
        match self.kind {
            AdaptorKind::OneToN => replica,
            _ => cursor.rr,
        }
    }

    /// Block until the producer-side slot is free.
    pub fn wait_push(&self, col: usize, pos: usize, interrupted: &AtomicBool) -> Acquire {
        let slot = &self.columns[col].slots[pos];
        let mut spins = 0u32;
        while slot.full.load(Ordering::Acquire) {
            if interrupted.load(Ordering::Relaxed) {
                return Acquire::Interrupted;
            }
            self.wait_step(&mut spins);
        }
        Acquire::Ready
    }

    /// Block until the consumer-side slot is full, or the stream is dry.
    pub fn wait_pull(&self, col: usize, pos: usize, interrupted: &AtomicBool) -> Acquire {
        let slot = &self.columns[col].slots[pos];
        let mut spins = 0u32;
        loop {
            if slot.full.load(Ordering::Acquire) {
                return Acquire::Ready;
            }
            if self.producers_live.load(Ordering::SeqCst) == 0 {
                // recheck after the producer count went to zero: its last
                // push happens-before the decrement
                if slot.full.load(Ordering::Acquire) {
                    return Acquire::Ready;
                }
                return Acquire::Dry;
            }
            if interrupted.load(Ordering::Relaxed) {
                return Acquire::Interrupted;
            }
            self.wait_step(&mut spins);
        }
    }

    /// Fill the slot from the producer's local buffers and publish it.
    /// `exchange` receives the slot's frame vector.
    pub fn fill_slot(&self, col: usize, pos: usize, exchange: impl FnOnce(&mut Vec<FrameBuffer>)) {
        let slot = &self.columns[col].slots[pos];
        {
            let mut frames = slot.frames.lock().expect("slot mutex");
            exchange(&mut frames);
        }
        slot.full.store(true, Ordering::Release);
        self.pushed.fetch_add(1, Ordering::Relaxed);
    }

    /// Take the slot's content on the consumer side and release it.
    pub fn take_slot(&self, col: usize, pos: usize, exchange: impl FnOnce(&mut Vec<FrameBuffer>)) {
        let slot = &self.columns[col].slots[pos];
        {
            let mut frames = slot.frames.lock().expect("slot mutex");
            exchange(&mut frames);
        }
        slot.full.store(false, Ordering::Release);
        self.pulled.fetch_add(1, Ordering::Relaxed);
    }

    pub fn advance_producer(&self, cursor: &mut Cursor, col: usize) {
        cursor.pos[col] = (cursor.pos[col] + 1) % self.capacity;
        if self.kind != AdaptorKind::NToOne {
            cursor.rr = (cursor.rr + 1) % self.fanout;
        }
    }

    pub fn advance_consumer(&self, cursor: &mut Cursor, col: usize) {
        cursor.pos[col] = (cursor.pos[col] + 1) % self.capacity;
        if self.kind != AdaptorKind::OneToN {
            cursor.rr = (cursor.rr + 1) % self.fanout;
        }
    }
}
