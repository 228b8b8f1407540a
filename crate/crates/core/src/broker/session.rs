use std::collections::BTreeMap;

use crate::mqtt::{matches_unchecked, PacketId, Publish, QoS};

/// Broker-assigned identifier of an accepted publish, used to correlate the
/// deliveries it fans out to.
pub type MessageId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Inflight {
    pub publish: Publish,
    pub sent_at: f64,
    pub retries: u32,
    pub origin: MessageId,
}

/// Per-connection broker state. Sessions are always clean: nothing survives
/// a disconnect.
#[derive(Debug, Clone)]
pub struct Session {
    pub client_id: String,
    pub keep_alive_s: u16,
    pub subscriptions: BTreeMap<String, QoS>,
    pub inflight: BTreeMap<PacketId, Inflight>,
    pub last_seen: f64,
    next_packet_id: u16,
}

impl Session {
    pub fn new(client_id: String, keep_alive_s: u16, now: f64) -> Self {
        Session {
            client_id,
            keep_alive_s,
            subscriptions: BTreeMap::new(),
            inflight: BTreeMap::new(),
            last_seen: now,
            next_packet_id: 1,
        }
    }

    /// Highest QoS among subscriptions matching `topic`, if any match.
    pub fn matching_qos(&self, topic: &str) -> Option<QoS> {
        self.subscriptions
            .iter()
            .filter(|(f, _)| matches_unchecked(f, topic))
            .map(|(_, q)| *q)
            .max()
    }

    /// Next free packet id, or `None` if all 65535 are in flight.
    pub fn allocate_packet_id(&mut self) -> Option<PacketId> {
        for _ in 0..u16::MAX {
            let candidate = PacketId::new(self.next_packet_id).expect("ids start at 1");
            self.next_packet_id = self.next_packet_id.checked_add(1).unwrap_or(1);
            if !self.inflight.contains_key(&candidate) {
                return Some(candidate);
            }
        }
        None
    }

    /// Whether this session has been silent for more than 1.5 × keep-alive.
    /// A keep-alive of zero disables the check.
    pub fn expired(&self, now: f64) -> bool {
        self.keep_alive_s > 0 && now - self.last_seen > 1.5 * self.keep_alive_s as f64
    }
}

/// What happened to one inflight entry during a redelivery pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Redelivery {
    Resent(Publish, MessageId),
    Dropped(Publish, MessageId),
}

/// Resend every inflight message older than `ack_timeout_s` with DUP set,
/// or drop it once it has already been retried `max_retries` times.
pub fn redeliver(
    session: &mut Session,
    now: f64,
    ack_timeout_s: f64,
    max_retries: u32,
) -> Vec<Redelivery> {
    let mut out = Vec::new();
    let mut dropped = Vec::new();
    for (id, entry) in session.inflight.iter_mut() {
        if now - entry.sent_at <= ack_timeout_s {
            continue;
        }
        if entry.retries >= max_retries {
            dropped.push(*id);
            continue;
        }
        entry.retries += 1;
        entry.sent_at = now;
        entry.publish.dup = true;
        out.push(Redelivery::Resent(entry.publish.clone(), entry.origin));
    }
    for id in dropped {
        let entry = session.inflight.remove(&id).expect("collected above");
        out.push(Redelivery::Dropped(entry.publish, entry.origin));
    }
    out
}
