//! Discrete-event simulation of the federation.
//!
//! Asynchronous modes: each client loops independently. After receiving a
//! broadcast it runs `interval` local rounds (each costing its
//! `compute_time`), ships its buffer (one `link_latency`), and waits for
//! the server's reply (another `link_latency`). The server aggregates
//! every upload on arrival, re-evaluates validation error, steps the
//! interval controller, and answers only the uploading client.
//!
//! Synchronous baseline: barrier rounds. Every client gets the round
//! broadcast, runs one local round and uploads; the server aggregates all
//! uploads of the round at once, when the last one arrives, and
//! broadcasts to every client. A round in which nobody uploads ends after
//! the longest `2 * latency + compute` among clients and is re-broadcast.
//!
//! Message sizes (bytes): every message carries a 24-byte header; an
//! upload adds 40 bytes per learner; a broadcast adds 16 bytes (interval
//! and aggregation count) plus 8 bytes per ensemble member the recipient
//! has not been sent yet.

mod asynchronous;
pub mod client;
pub mod event;
pub mod server;
mod synchronous;

use serde::{Deserialize, Serialize};

use crate::boost::Ensemble;
use crate::config::{ExperimentConfig, Mode};
use crate::datagen::{self, Dataset};
use crate::error::Result;
use crate::metrics::MetricsRecord;
use crate::rng::Stream;
use crate::stump::Stump;

pub use client::{client_local_round, flush_and_upload, ClientProfile, ClientState, RoundOutcome};
pub use event::{EventKind, EventQueue, Payload, SimEvent};
pub use server::{server_aggregate, AggregationOutcome, ServerState, Upload};

pub const HEADER_BYTES: u64 = 24;
pub const LEARNER_BYTES: u64 = 40;
pub const BROADCAST_BODY_BYTES: u64 = 16;
pub const MEMBER_DELTA_BYTES: u64 = 8;

pub fn upload_bytes(learners: usize) -> u64 {
    HEADER_BYTES + LEARNER_BYTES * learners as u64
}

pub fn broadcast_bytes(new_members: usize) -> u64 {
    HEADER_BYTES + BROADCAST_BODY_BYTES + MEMBER_DELTA_BYTES * new_members as u64
}

/// A trained (non-discarded) weak learner as it left the client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerRecord {
    pub client_id: usize,
    pub local_seq: u64,
    /// Virtual time at the start of the round that produced it.
    pub time: f64,
    pub stump: Stump,
    pub raw_epsilon: f64,
    pub alpha: f64,
    pub snapshot_round: u64,
    /// Distribution the stump was trained on, when recording is enabled.
    pub distribution: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    pub client_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    MaxAggregations,
    MaxVirtualTime,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundStats {
    pub local_rounds: u64,
    pub dropped: u64,
    pub discarded: u64,
    pub trained: u64,
}

/// Everything a run produced. Immutable once returned.
#[derive(Clone, Debug)]
pub struct SimTrace {
    pub mode: Mode,
    /// One record for the initial evaluation, then one per aggregation.
    pub records: Vec<MetricsRecord>,
    /// Cumulative trained learners at each record.
    pub learners_at_record: Vec<u64>,
    pub events: Vec<TraceEvent>,
    pub learners: Vec<LearnerRecord>,
    pub ensemble: Ensemble,
    pub stats: RoundStats,
    pub converged_at: Option<u64>,
    pub stop_reason: StopReason,
}

impl SimTrace {
    pub fn final_record(&self) -> &MetricsRecord {
        self.records
            .last()
            .expect("trace always has the initial record")
    }
}

/// Data and client resources shared by every mode of one experiment.
#[derive(Clone, Debug)]
pub struct Federation {
    /// Union of all client shards.
    pub train: Dataset,
    pub validation: Dataset,
    pub shards: Vec<Dataset>,
    pub profiles: Vec<ClientProfile>,
}

impl Federation {
    pub fn build(config: &ExperimentConfig) -> Result<Federation> {
        config.validate()?;
        let d = &config.dataset;
        let (pos, neg) = datagen::class_counts(d.n, d.imbalance_ratio);
        let data = datagen::generate_two_class(pos, neg, d.dimension, d.sigma, d.seed)?;
        let (train, validation) = datagen::split_holdout(&data, d.validation_fraction, d.seed)?;
        let p = &config.partition;
        let shards = datagen::partition_dirichlet(&train, p.clients, p.concentration, p.seed)?;

        let c = &config.clients;
        let mut rng = Stream::new(c.seed, "latency");
        let profiles = (0..p.clients)
            .map(|_| ClientProfile {
                compute_time: rng.uniform_range(c.compute_time.lo, c.compute_time.hi),
                link_latency: rng.uniform_range(c.link_latency.lo, c.link_latency.hi),
                dropout_prob: rng.uniform_range(c.dropout.lo, c.dropout.hi),
            })
            .collect();
        Ok(Federation {
            train,
            validation,
            shards,
            profiles,
        })
    }

    fn clients(&self, config: &ExperimentConfig, record_distributions: bool) -> Vec<ClientState> {
        self.shards
            .iter()
            .zip(&self.profiles)
            .enumerate()
            .map(|(id, (shard, profile))| {
                let mut c = ClientState::new(
                    id,
                    shard.clone(),
                    *profile,
                    config.clients.dropout_burst,
                    config.algorithm.eps_floor,
                    config.clients.seed,
                );
                c.record_distributions(record_distributions);
                c
            })
            .collect()
    }
}

/// Runner with optional instrumentation.
pub struct Simulation<'a> {
    config: &'a ExperimentConfig,
    federation: Option<&'a Federation>,
    record_distributions: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Self {
        Simulation {
            config,
            federation: None,
            record_distributions: false,
        }
    }

    /// Reuse prebuilt data instead of regenerating it from the config.
    pub fn with_federation(mut self, federation: &'a Federation) -> Self {
        self.federation = Some(federation);
        self
    }

    /// Keep each learner's training distribution in the trace.
    pub fn record_distributions(mut self, on: bool) -> Self {
        self.record_distributions = on;
        self
    }

    pub fn run(&self) -> Result<SimTrace> {
        self.run_mode(self.config.mode)
    }

    pub fn run_mode(&self, mode: Mode) -> Result<SimTrace> {
        self.config.validate()?;
        let owned;
        let federation = match self.federation {
            Some(f) => f,
            None => {
                owned = Federation::build(self.config)?;
                &owned
            }
        };
        let clients = federation.clients(self.config, self.record_distributions);
        match mode {
            Mode::Synchronous => synchronous::run(self.config, federation, clients),
            Mode::AsyncFixed | Mode::AsyncAdaptive => {
                asynchronous::run(self.config, mode, federation, clients)
            }
        }
    }
}

/// Runs the mode named in `config`.
pub fn run_simulation(config: &ExperimentConfig) -> Result<SimTrace> {
    Simulation::new(config).run()
}

pub fn mode_synchronous_baseline(config: &ExperimentConfig) -> Result<SimTrace> {
    Simulation::new(config).run_mode(Mode::Synchronous)
}

/// Counters and records shared by both drivers.
pub(crate) struct Recorder {
    mode: Mode,
    records: Vec<MetricsRecord>,
    learners_at_record: Vec<u64>,
    events: Vec<TraceEvent>,
    learners: Vec<LearnerRecord>,
    stats: RoundStats,
    uploads: u64,
    broadcasts: u64,
    bytes: u64,
    /// Uploads decided but not yet sent: `(send_time, bytes)`.
    pending_uploads: Vec<(f64, u64)>,
    convergence: crate::metrics::ConvergenceTracker,
}

impl Recorder {
    pub(crate) fn new(config: &ExperimentConfig, mode: Mode) -> Self {
        Recorder {
            mode,
            records: Vec::new(),
            learners_at_record: Vec::new(),
            events: Vec::new(),
            learners: Vec::new(),
            stats: RoundStats::default(),
            uploads: 0,
            broadcasts: 0,
            bytes: 0,
            pending_uploads: Vec::new(),
            convergence: crate::metrics::ConvergenceTracker::new(&config.convergence),
        }
    }

    pub(crate) fn event(&mut self, time: f64, kind: EventKind, client_id: usize) {
        self.events.push(TraceEvent {
            time,
            kind,
            client_id,
        });
    }

    /// Counts an upload once virtual time reaches `send_time`.
    pub(crate) fn upload(&mut self, send_time: f64, bytes: u64) {
        self.pending_uploads.push((send_time, bytes));
    }

    fn settle_uploads(&mut self, now: f64) {
        let (due, later): (Vec<_>, Vec<_>) =
            self.pending_uploads.iter().partition(|(t, _)| *t <= now);
        for (_, bytes) in due {
            self.uploads += 1;
            self.bytes += bytes;
        }
        self.pending_uploads = later;
    }

    pub(crate) fn broadcast(&mut self, bytes: u64) {
        self.broadcasts += 1;
        self.bytes += bytes;
    }

    pub(crate) fn round(&mut self, outcome: RoundOutcome) {
        self.stats.local_rounds += 1;
        match outcome {
            RoundOutcome::Dropped => self.stats.dropped += 1,
            RoundOutcome::Discarded { .. } => self.stats.discarded += 1,
            RoundOutcome::Trained(record) => {
                self.stats.trained += 1;
                self.learners.push(record);
            }
        }
    }

    /// Appends a record; returns true once convergence has been reached.
    pub(crate) fn record(
        &mut self,
        aggregation_index: u64,
        virtual_time: f64,
        validation_error: f64,
        training_error: f64,
        current_interval: u32,
    ) -> bool {
        self.settle_uploads(virtual_time);
        let record = MetricsRecord {
            aggregation_index,
            virtual_time,
            cumulative_uploads: self.uploads,
            cumulative_broadcasts: self.broadcasts,
            cumulative_bytes: self.bytes,
            validation_error,
            training_error,
            current_interval,
        };
        self.convergence.observe(&record);
        self.records.push(record);
        self.learners_at_record.push(self.stats.trained);
        self.convergence.converged_at().is_some()
    }

    pub(crate) fn finish(self, ensemble: Ensemble, stop_reason: StopReason) -> SimTrace {
        SimTrace {
            mode: self.mode,
            converged_at: self.convergence.converged_at(),
            records: self.records,
            learners_at_record: self.learners_at_record,
            events: self.events,
            learners: self.learners,
            ensemble,
            stats: self.stats,
            stop_reason,
        }
    }
}
