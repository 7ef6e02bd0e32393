use crate::boost::{BufferedLearner, Ensemble, MarginCache};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::scheduler::{self, Adjustment, SchedulerParams, SchedulerState};

use super::broadcast_bytes;
use super::event::{EventKind, Payload, SimEvent};

/// One client's shipped buffer.
#[derive(Clone, Debug)]
pub struct Upload {
    pub client_id: usize,
    pub learners: Vec<BufferedLearner>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationOutcome {
    /// Aggregation count after this step.
    pub aggregation_count: u64,
    pub taus: Vec<u64>,
    pub validation_error: f64,
    pub training_error: f64,
    pub interval: u32,
    pub adjustment: Adjustment,
}

/// The aggregator: global ensemble, aggregation counter and interval
/// controller. Validation and training errors are tracked through running
/// margins rather than re-evaluating the whole ensemble each time.
#[derive(Clone, Debug)]
pub struct ServerState {
    pub ensemble: Ensemble,
    pub aggregation_count: u64,
    pub scheduler: SchedulerState,
    pub params: SchedulerParams,
    pub validation: Dataset,
    train: Dataset,
    val_margins: MarginCache,
    train_margins: MarginCache,
    /// Ensemble length each client has been sent so far.
    sent_members: Vec<usize>,
}

impl ServerState {
    pub fn new(
        lambda: f64,
        params: SchedulerParams,
        initial_interval: u32,
        validation: Dataset,
        train: Dataset,
        clients: usize,
    ) -> Self {
        ServerState {
            ensemble: Ensemble::new(lambda),
            aggregation_count: 0,
            scheduler: SchedulerState::new(initial_interval, &params),
            params,
            val_margins: MarginCache::new(&validation),
            train_margins: MarginCache::new(&train),
            validation,
            train,
            sent_members: vec![0; clients],
        }
    }

    pub fn validation_error(&self) -> f64 {
        self.val_margins.error(&self.validation)
    }

    pub fn training_error(&self) -> f64 {
        self.train_margins.error(&self.train)
    }

    /// Evaluates the (empty) starting ensemble and seeds the controller.
    pub fn initial_evaluation(&mut self) -> (f64, f64) {
        let val = self.validation_error();
        self.scheduler = scheduler::next_interval(self.scheduler, &self.params, val);
        (val, self.training_error())
    }

    /// Applies one aggregation covering `uploads`. Members are appended in
    /// `(client_id, local_seq)` order with staleness
    /// `tau = (count_after - 1) - snapshot_round`, floored at zero.
    pub fn aggregate(&mut self, uploads: &[Upload]) -> Result<AggregationOutcome> {
        self.aggregation_count += 1;
        let applied_at = self.aggregation_count - 1;
        let mut learners: Vec<&BufferedLearner> =
            uploads.iter().flat_map(|u| u.learners.iter()).collect();
        learners.sort_by_key(|l| (l.client_id, l.local_seq));

        let mut taus = Vec::with_capacity(learners.len());
        for learner in learners {
            let tau = applied_at.saturating_sub(learner.snapshot_round);
            let member = self
                .ensemble
                .push(learner.clone(), tau, self.aggregation_count);
            let (stump, weight) = (member.learner.stump, member.effective_weight);
            self.val_margins.add(&self.validation, &stump, weight)?;
            self.train_margins.add(&self.train, &stump, weight)?;
            taus.push(tau);
        }
        let validation_error = self.validation_error();
        let (next, adjustment) = scheduler::step(self.scheduler, &self.params, validation_error);
        self.scheduler = next;
        Ok(AggregationOutcome {
            aggregation_count: self.aggregation_count,
            taus,
            validation_error,
            training_error: self.training_error(),
            interval: self.scheduler.interval,
            adjustment,
        })
    }

    /// Broadcast of the current snapshot and interval to one client,
    /// with its modelled size in bytes.
    pub fn broadcast_to(&mut self, client_id: usize, now: f64, latency: f64) -> (SimEvent, u64) {
        let len = self.ensemble.len();
        let delta = len - self.sent_members[client_id];
        self.sent_members[client_id] = len;
        let event = SimEvent {
            time: now + latency,
            kind: EventKind::BroadcastArrival,
            client_id,
            payload: Payload::Broadcast {
                interval: self.scheduler.interval,
                aggregation_count: self.aggregation_count,
                ensemble_len: len,
            },
        };
        (event, broadcast_bytes(delta))
    }
}

/// Handles one `UploadArrival`: aggregates it and answers the uploader.
pub fn server_aggregate(
    server: &mut ServerState,
    arrival: SimEvent,
    uploader_latency: f64,
) -> Result<(AggregationOutcome, SimEvent, u64)> {
    if arrival.kind != EventKind::UploadArrival {
        return Err(Error::invalid(format!(
            "expected an upload, got {:?}",
            arrival.kind
        )));
    }
    let Payload::Upload(learners) = arrival.payload else {
        return Err(Error::invalid("upload event without learners"));
    };
    let outcome = server.aggregate(&[Upload {
        client_id: arrival.client_id,
        learners,
    }])?;
    let (broadcast, bytes) = server.broadcast_to(arrival.client_id, arrival.time, uploader_latency);
    Ok((outcome, broadcast, bytes))
}
