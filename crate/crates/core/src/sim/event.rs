use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::boost::BufferedLearner;

/// Event kinds, in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    ClientRoundStart,
    UploadArrival,
    BroadcastArrival,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    None,
    Upload(Vec<BufferedLearner>),
    Broadcast {
        interval: u32,
        aggregation_count: u64,
        ensemble_len: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimEvent {
    /// Virtual seconds.
    pub time: f64,
    pub kind: EventKind,
    pub client_id: usize,
    pub payload: Payload,
}

impl SimEvent {
    pub fn round_start(time: f64, client_id: usize) -> Self {
        SimEvent {
            time,
            kind: EventKind::ClientRoundStart,
            client_id,
            payload: Payload::None,
        }
    }

    /// Total order used by the queue: time, kind, client.
    pub fn order_key(&self, other: &SimEvent) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.client_id.cmp(&other.client_id))
    }
}

struct Entry {
    event: SimEvent,
    seq: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .event
            .order_key(&self.event)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Future event set ordered by `(time, kind, client_id, insertion)`.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn push(&mut self, event: SimEvent) {
        assert!(
            event.time >= self.now,
            "event at {} scheduled in the past (now {})",
            event.time,
            self.now
        );
        self.heap.push(Entry {
            event,
            seq: self.seq,
        });
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let entry = self.heap.pop()?;
        self.now = entry.event.time;
        Some(entry.event)
    }
}
