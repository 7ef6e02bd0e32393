use serde::{Deserialize, Serialize};

use crate::boost::{update_distribution, BufferedLearner};
use crate::datagen::Dataset;
use crate::error::Result;
use crate::rng::Stream;
use crate::stump::{train_stump, DistributionVector, Stump};

use super::event::{EventKind, Payload, SimEvent};
use super::LearnerRecord;

/// Per-client resources, drawn once at setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub compute_time: f64,
    pub link_latency: f64,
    pub dropout_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RoundOutcome {
    Dropped,
    /// Best stump had raw error >= 0.5; nothing buffered, distribution kept.
    Discarded {
        stump: Stump,
        raw_epsilon: f64,
    },
    Trained(LearnerRecord),
}

#[derive(Clone, Debug)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: Dataset,
    pub dist: DistributionVector,
    pub buffer: Vec<BufferedLearner>,
    pub rounds_until_sync: u32,
    pub snapshot_round: u64,
    pub compute_time: f64,
    pub link_latency: f64,
    pub dropout_prob: f64,
    /// Last interval received from the server.
    pub interval: u32,
    dropout_burst: u32,
    burst_left: u32,
    next_seq: u64,
    eps_floor: f64,
    dropout_rng: Stream,
    record_distributions: bool,
}

impl ClientState {
    pub fn new(
        client_id: usize,
        shard: Dataset,
        profile: ClientProfile,
        dropout_burst: u32,
        eps_floor: f64,
        seed: u64,
    ) -> Self {
        let dist = DistributionVector::uniform(shard.len());
        ClientState {
            client_id,
            shard,
            dist,
            buffer: Vec::new(),
            rounds_until_sync: 0,
            snapshot_round: 0,
            compute_time: profile.compute_time,
            link_latency: profile.link_latency,
            dropout_prob: profile.dropout_prob,
            interval: 1,
            dropout_burst: dropout_burst.max(1),
            burst_left: 0,
            next_seq: 0,
            eps_floor,
            dropout_rng: Stream::new(seed, &format!("dropout/{client_id}")),
            record_distributions: false,
        }
    }

    pub fn record_distributions(&mut self, on: bool) {
        self.record_distributions = on;
    }

    /// Adopts a broadcast: new snapshot round and a fresh countdown.
    pub fn receive_broadcast(&mut self, interval: u32, aggregation_count: u64) {
        self.interval = interval;
        self.snapshot_round = aggregation_count;
        self.rounds_until_sync = interval;
    }

    fn draw_dropout(&mut self) -> bool {
        // One draw per round regardless of outcome keeps the stream aligned
        // across modes.
        let u = self.dropout_rng.uniform();
        if self.burst_left > 0 {
            self.burst_left -= 1;
            return true;
        }
        if u < self.dropout_prob {
            self.burst_left = self.dropout_burst - 1;
            return true;
        }
        false
    }

    /// One local boosting round starting at virtual time `now`.
    pub fn local_round(&mut self, now: f64) -> Result<RoundOutcome> {
        if self.draw_dropout() {
            return Ok(RoundOutcome::Dropped);
        }
        let (stump, raw_epsilon) = train_stump(&self.shard, &self.dist)?;
        self.rounds_until_sync = self.rounds_until_sync.saturating_sub(1);
        if raw_epsilon >= 0.5 {
            return Ok(RoundOutcome::Discarded { stump, raw_epsilon });
        }
        let learner = BufferedLearner::from_raw(
            stump,
            raw_epsilon,
            self.eps_floor,
            self.client_id,
            self.snapshot_round,
            self.next_seq,
        )?;
        self.next_seq += 1;
        let distribution = self
            .record_distributions
            .then(|| self.dist.weights().to_vec());
        let update = update_distribution(&self.dist, &stump, learner.alpha, &self.shard)?;
        self.dist = update.dist;
        let record = LearnerRecord {
            client_id: self.client_id,
            local_seq: learner.local_seq,
            time: now,
            stump,
            raw_epsilon,
            alpha: learner.alpha,
            snapshot_round: learner.snapshot_round,
            distribution,
        };
        self.buffer.push(learner);
        Ok(RoundOutcome::Trained(record))
    }

    /// Ships the buffer once the countdown reaches zero. An empty buffer
    /// sends nothing and restarts the countdown.
    pub fn flush(&mut self, now: f64) -> Option<SimEvent> {
        debug_assert_eq!(self.rounds_until_sync, 0);
        if self.buffer.is_empty() {
            self.rounds_until_sync = self.interval;
            return None;
        }
        let learners = std::mem::take(&mut self.buffer);
        Some(SimEvent {
            time: now + self.link_latency,
            kind: EventKind::UploadArrival,
            client_id: self.client_id,
            payload: Payload::Upload(learners),
        })
    }
}

pub fn client_local_round(client: &mut ClientState, now: f64) -> Result<RoundOutcome> {
    client.local_round(now)
}

pub fn flush_and_upload(client: &mut ClientState, now: f64) -> Option<SimEvent> {
    client.flush(now)
}
