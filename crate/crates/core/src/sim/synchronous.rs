use crate::config::{ExperimentConfig, Mode};
use crate::error::Result;

use super::client::ClientState;
use super::event::{EventKind, Payload};
use super::server::{ServerState, Upload};
use super::{upload_bytes, Federation, Recorder, SimTrace, StopReason, TraceEvent};

pub(super) fn run(
    config: &ExperimentConfig,
    federation: &Federation,
    mut clients: Vec<ClientState>,
) -> Result<SimTrace> {
    let mode = Mode::Synchronous;
    let mut server = ServerState::new(
        config.algorithm.lambda,
        config.effective_scheduler(mode).frozen(),
        1,
        federation.validation.clone(),
        federation.train.clone(),
        clients.len(),
    );
    server.scheduler.interval = 1;
    let mut rec = Recorder::new(config, mode);
    let stop = &config.stop;

    let timeout = clients
        .iter()
        .map(|c| 2.0 * c.link_latency + c.compute_time)
        .fold(0.0, f64::max);

    let mut round_start = 0.0;
    broadcast_all(&mut server, &mut rec, &clients, 0.0);
    let (val, train) = server.initial_evaluation();
    let converged = rec.record(0, 0.0, val, train, 1);

    let stop_reason = if converged && stop.stop_at_convergence {
        StopReason::Converged
    } else if stop.max_aggregations == 0 {
        StopReason::MaxAggregations
    } else {
        loop {
            let mut round_events: Vec<TraceEvent> = Vec::new();
            let mut uploads: Vec<Upload> = Vec::new();
            let mut last_arrival = f64::NEG_INFINITY;
            for client in clients.iter_mut() {
                let arrive = round_start + client.link_latency;
                round_events.push(TraceEvent {
                    time: arrive,
                    kind: EventKind::BroadcastArrival,
                    client_id: client.client_id,
                });
                round_events.push(TraceEvent {
                    time: arrive,
                    kind: EventKind::ClientRoundStart,
                    client_id: client.client_id,
                });
                client.receive_broadcast(1, server.aggregation_count);
                let outcome = client.local_round(arrive)?;
                rec.round(outcome);
                if client.rounds_until_sync > 0 {
                    continue;
                }
                let sent = arrive + client.compute_time;
                if let Some(upload) = client.flush(sent) {
                    if let Payload::Upload(learners) = upload.payload {
                        rec.upload(sent, upload_bytes(learners.len()));
                        round_events.push(TraceEvent {
                            time: upload.time,
                            kind: EventKind::UploadArrival,
                            client_id: client.client_id,
                        });
                        last_arrival = last_arrival.max(upload.time);
                        uploads.push(Upload {
                            client_id: client.client_id,
                            learners,
                        });
                    }
                }
            }
            round_events.sort_by(|a, b| {
                a.time
                    .total_cmp(&b.time)
                    .then(a.kind.cmp(&b.kind))
                    .then(a.client_id.cmp(&b.client_id))
            });

            let round_end = if uploads.is_empty() {
                round_start + timeout
            } else {
                last_arrival
            };
            if round_end > stop.max_virtual_time {
                break StopReason::MaxVirtualTime;
            }
            for e in round_events {
                rec.event(e.time, e.kind, e.client_id);
            }
            round_start = round_end;

            if uploads.is_empty() {
                broadcast_all(&mut server, &mut rec, &clients, round_start);
                continue;
            }
            let outcome = server.aggregate(&uploads)?;
            broadcast_all(&mut server, &mut rec, &clients, round_start);
            let converged = rec.record(
                outcome.aggregation_count,
                round_start,
                outcome.validation_error,
                outcome.training_error,
                1,
            );
            if converged && stop.stop_at_convergence {
                break StopReason::Converged;
            }
            if outcome.aggregation_count >= stop.max_aggregations {
                break StopReason::MaxAggregations;
            }
        }
    };
    Ok(rec.finish(server.ensemble, stop_reason))
}

fn broadcast_all(server: &mut ServerState, rec: &mut Recorder, clients: &[ClientState], at: f64) {
    for c in clients {
        let (_, bytes) = server.broadcast_to(c.client_id, at, c.link_latency);
        rec.broadcast(bytes);
    }
}
