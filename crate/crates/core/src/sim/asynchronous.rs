use crate::config::{ExperimentConfig, Mode};
use crate::error::Result;

use super::client::ClientState;
use super::event::{EventKind, EventQueue, Payload, SimEvent};
use super::server::{ServerState, Upload};
use super::{upload_bytes, Federation, Recorder, SimTrace, StopReason};

pub(super) fn run(
    config: &ExperimentConfig,
    mode: Mode,
    federation: &Federation,
    mut clients: Vec<ClientState>,
) -> Result<SimTrace> {
    let mut server = ServerState::new(
        config.algorithm.lambda,
        config.effective_scheduler(mode),
        config.algorithm.initial_interval,
        federation.validation.clone(),
        federation.train.clone(),
        clients.len(),
    );
    let mut rec = Recorder::new(config, mode);
    let mut queue = EventQueue::new();

    for c in &clients {
        let (event, bytes) = server.broadcast_to(c.client_id, 0.0, c.link_latency);
        rec.broadcast(bytes);
        queue.push(event);
    }
    let (val, train) = server.initial_evaluation();
    let converged = rec.record(0, 0.0, val, train, server.scheduler.interval);

    let stop = &config.stop;
    let stop_reason = if converged && stop.stop_at_convergence {
        StopReason::Converged
    } else if stop.max_aggregations == 0 {
        StopReason::MaxAggregations
    } else {
        loop {
            let Some(event) = queue.pop() else {
                // Every client always has a pending event, so this is unreachable
                // for a nonempty federation.
                break StopReason::MaxVirtualTime;
            };
            if event.time > stop.max_virtual_time {
                break StopReason::MaxVirtualTime;
            }
            rec.event(event.time, event.kind, event.client_id);
            let id = event.client_id;
            match (event.kind, event.payload) {
                (
                    EventKind::BroadcastArrival,
                    Payload::Broadcast {
                        interval,
                        aggregation_count,
                        ..
                    },
                ) => {
                    clients[id].receive_broadcast(interval, aggregation_count);
                    queue.push(SimEvent::round_start(event.time, id));
                }
                (EventKind::ClientRoundStart, _) => {
                    let client = &mut clients[id];
                    let outcome = client.local_round(event.time)?;
                    rec.round(outcome);
                    let end = event.time + client.compute_time;
                    let next = if client.rounds_until_sync == 0 {
                        client.flush(end)
                    } else {
                        None
                    };
                    match next {
                        Some(upload) => {
                            if let Payload::Upload(ls) = &upload.payload {
                                rec.upload(end, upload_bytes(ls.len()));
                            }
                            queue.push(upload);
                        }
                        None => queue.push(SimEvent::round_start(end, id)),
                    }
                }
                (EventKind::UploadArrival, Payload::Upload(learners)) => {
                    let outcome = server.aggregate(&[Upload {
                        client_id: id,
                        learners,
                    }])?;
                    let (reply, bytes) =
                        server.broadcast_to(id, event.time, clients[id].link_latency);
                    rec.broadcast(bytes);
                    queue.push(reply);
                    let converged = rec.record(
                        outcome.aggregation_count,
                        event.time,
                        outcome.validation_error,
                        outcome.training_error,
                        outcome.interval,
                    );
                    if converged && stop.stop_at_convergence {
                        break StopReason::Converged;
                    }
                    if outcome.aggregation_count >= stop.max_aggregations {
                        break StopReason::MaxAggregations;
                    }
                }
                (kind, payload) => unreachable!("malformed event {kind:?} with {payload:?}"),
            }
        }
    };
    Ok(rec.finish(server.ensemble, stop_reason))
}
