//! Publish/subscribe broker and client.
//!
//! [`Broker`] and [`Client`] are sans-IO state machines: they take decoded
//! packets plus the current time and hand back packets to send. The
//! simulator drives them through its event queue; [`tcp`] drives the very
//! same logic over sockets.

mod client;
mod retained;
mod session;
pub mod tcp;

use std::collections::BTreeMap;
use std::fmt;

pub use client::{Client, ClientConfig, ClientError, ClientEvent, ClientStats};
pub use retained::RetainedStore;
pub use session::{redeliver, Inflight, MessageId, Redelivery, Session};

use crate::mqtt::{
    encode_packet, ConnAck, Connect, ConnectReturnCode, MqttPacket, ProtocolError, Publish, QoS,
    SubAck, SubAckCode, Subscribe, Unsubscribe,
};

/// Transport-level connection handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnId(pub u64);

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "conn#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrokerConfig {
    pub ack_timeout_s: f64,
    pub max_retries: u32,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            ack_timeout_s: 2.0,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseReason {
    NotConnected,
    ProtocolViolation,
    Rejected,
    Takeover,
    ClientDisconnect,
    KeepAliveExpired,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Send {
        to: ConnId,
        packet: MqttPacket,
        /// Set on publishes fanned out from an accepted message.
        origin: Option<MessageId>,
    },
    Close {
        conn: ConnId,
        reason: CloseReason,
    },
}

impl Output {
    fn send(to: ConnId, packet: MqttPacket) -> Self {
        Output::Send {
            to,
            packet,
            origin: None,
        }
    }
}

/// Notable broker transitions, drained by whoever records telemetry.
#[derive(Debug, Clone, PartialEq)]
pub enum BrokerEvent {
    Connected {
        conn: ConnId,
        client_id: String,
    },
    Disconnected {
        conn: ConnId,
        client_id: String,
        reason: CloseReason,
    },
    Accepted {
        msg: MessageId,
        client_id: String,
        topic: String,
        bytes: usize,
    },
    /// A QoS 1 delivery that needed a retransmission was acknowledged.
    ErrorCorrected {
        msg: MessageId,
        client_id: String,
    },
    /// A QoS 1 delivery was abandoned after exhausting its retries.
    ErrorUncorrected {
        msg: MessageId,
        client_id: String,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub accepted: u64,
    pub forwarded: u64,
    pub retransmitted: u64,
    pub errors_corrected: u64,
    pub errors_uncorrected: u64,
}

pub(crate) fn wire_len(packet: &MqttPacket) -> usize {
    encode_packet(packet).map(|b| b.len()).unwrap_or(0)
}

#[derive(Debug, Default)]
pub struct Broker {
    cfg: BrokerConfig,
    sessions: BTreeMap<ConnId, Session>,
    by_client: BTreeMap<String, ConnId>,
    retained: RetainedStore,
    next_msg: MessageId,
    stats: BrokerStats,
    events: Vec<BrokerEvent>,
}

impl Broker {
    pub fn new(cfg: BrokerConfig) -> Self {
        Broker {
            cfg,
            ..Default::default()
        }
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.cfg
    }

    pub fn stats(&self) -> BrokerStats {
        self.stats
    }

    pub fn retained(&self) -> &RetainedStore {
        &self.retained
    }

    pub fn session(&self, conn: ConnId) -> Option<&Session> {
        self.sessions.get(&conn)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn conn_of(&self, client_id: &str) -> Option<ConnId> {
        self.by_client.get(client_id).copied()
    }

    pub fn drain_events(&mut self) -> Vec<BrokerEvent> {
        std::mem::take(&mut self.events)
    }

    /// Earliest time at which an inflight message times out.
    pub fn next_deadline(&self) -> Option<f64> {
        self.sessions
            .values()
            .flat_map(|s| s.inflight.values())
            .map(|i| i.sent_at + self.cfg.ack_timeout_s)
            .min_by(f64::total_cmp)
    }

    pub fn handle(&mut self, conn: ConnId, packet: MqttPacket, now: f64) -> Vec<Output> {
        let Some(session) = self.sessions.get_mut(&conn) else {
            return match packet {
                MqttPacket::Connect(c) => self.connect(conn, c, now),
                other => {
                    log::debug!("{conn}: {} before CONNECT", other.name());
                    vec![Output::Close {
                        conn,
                        reason: CloseReason::NotConnected,
                    }]
                }
            };
        };
        session.last_seen = now;
        match packet {
            MqttPacket::Publish(p) => self.publish(conn, p, now),
            MqttPacket::PubAck { packet_id } => {
                if let Some(entry) = session.inflight.remove(&packet_id) {
                    if entry.retries > 0 {
                        self.stats.errors_corrected += 1;
                        self.events.push(BrokerEvent::ErrorCorrected {
                            msg: entry.origin,
                            client_id: session.client_id.clone(),
                        });
                    }
                }
                Vec::new()
            }
            MqttPacket::Subscribe(s) => self.subscribe(conn, s),
            MqttPacket::Unsubscribe(Unsubscribe { packet_id, filters }) => {
                for f in &filters {
                    session.subscriptions.remove(f);
                }
                vec![Output::send(conn, MqttPacket::UnsubAck { packet_id })]
            }
            MqttPacket::PingReq => vec![Output::send(conn, MqttPacket::PingResp)],
            MqttPacket::Disconnect => self.close(conn, CloseReason::ClientDisconnect),
            other => {
                log::debug!("{conn}: unexpected {} from client", other.name());
                self.close(conn, CloseReason::ProtocolViolation)
            }
        }
    }

    /// React to a frame that failed to decode.
    pub fn protocol_error(&mut self, conn: ConnId, err: &ProtocolError) -> Vec<Output> {
        if !self.sessions.contains_key(&conn) && err.is_unsupported_connect() {
            return vec![
                Output::send(
                    conn,
                    MqttPacket::ConnAck(ConnAck {
                        return_code: ConnectReturnCode::UnacceptableProtocolVersion,
                    }),
                ),
                Output::Close {
                    conn,
                    reason: CloseReason::Rejected,
                },
            ];
        }
        log::debug!("{conn}: protocol error: {err}");
        self.close(conn, CloseReason::ProtocolViolation)
    }

    /// The transport lost the connection.
    pub fn connection_lost(&mut self, conn: ConnId) {
        self.remove_session(conn, CloseReason::ClientDisconnect);
    }

    fn connect(&mut self, conn: ConnId, c: Connect, now: f64) -> Vec<Output> {
        if !c.clean_session {
            return vec![
                Output::send(
                    conn,
                    MqttPacket::ConnAck(ConnAck {
                        return_code: ConnectReturnCode::UnacceptableProtocolVersion,
                    }),
                ),
                Output::Close {
                    conn,
                    reason: CloseReason::Rejected,
                },
            ];
        }
        let client_id = if c.client_id.is_empty() {
            format!("auto-{}", conn.0)
        } else {
            c.client_id
        };
        let mut out = Vec::new();
        if let Some(previous) = self.by_client.get(&client_id).copied() {
            out.extend(self.close(previous, CloseReason::Takeover));
        }
        self.by_client.insert(client_id.clone(), conn);
        self.sessions
            .insert(conn, Session::new(client_id.clone(), c.keep_alive_s, now));
        self.events.push(BrokerEvent::Connected { conn, client_id });
        out.push(Output::send(
            conn,
            MqttPacket::ConnAck(ConnAck {
                return_code: ConnectReturnCode::Accepted,
            }),
        ));
        out
    }

    fn close(&mut self, conn: ConnId, reason: CloseReason) -> Vec<Output> {
        self.remove_session(conn, reason);
        vec![Output::Close { conn, reason }]
    }

    fn remove_session(&mut self, conn: ConnId, reason: CloseReason) {
        if let Some(s) = self.sessions.remove(&conn) {
            if self.by_client.get(&s.client_id) == Some(&conn) {
                self.by_client.remove(&s.client_id);
            }
            self.events.push(BrokerEvent::Disconnected {
                conn,
                client_id: s.client_id,
                reason,
            });
        }
    }

    fn publish(&mut self, from: ConnId, p: Publish, now: f64) -> Vec<Output> {
        let mut out = Vec::new();
        if let (QoS::AtLeastOnce, Some(packet_id)) = (p.qos, p.packet_id) {
            out.push(Output::send(from, MqttPacket::PubAck { packet_id }));
        }
        let msg = self.next_msg;
        self.next_msg += 1;
        self.stats.accepted += 1;
        let publisher = self.sessions[&from].client_id.clone();
        let bytes = wire_len(&MqttPacket::Publish(p.clone()));
        self.events.push(BrokerEvent::Accepted {
            msg,
            client_id: publisher,
            topic: p.topic.clone(),
            bytes,
        });
        if p.retain {
            self.retained.update(&p);
        }
        for (&conn, session) in self.sessions.iter_mut() {
            let Some(sub_qos) = session.matching_qos(&p.topic) else {
                continue;
            };
            let forward = Publish {
                retain: false,
                ..p.clone()
            };
            if let Some(packet) = deliver(session, forward, sub_qos, msg, now) {
                self.stats.forwarded += 1;
                out.push(Output::Send {
                    to: conn,
                    packet,
                    origin: Some(msg),
                });
            }
        }
        out
    }

    fn subscribe(&mut self, conn: ConnId, s: Subscribe) -> Vec<Output> {
        let session = self.sessions.get_mut(&conn).expect("caller checked");
        let mut granted = Vec::with_capacity(s.filters.len());
        for (filter, qos) in &s.filters {
            session.subscriptions.insert(filter.clone(), *qos);
            granted.push(SubAckCode::Granted(*qos));
        }
        let mut out = vec![Output::send(
            conn,
            MqttPacket::SubAck(SubAck {
                packet_id: s.packet_id,
                granted,
            }),
        )];
        for (filter, qos) in &s.filters {
            let retained: Vec<Publish> = self.retained.matching(filter).cloned().collect();
            for r in retained {
                let msg = self.next_msg;
                self.next_msg += 1;
                if let Some(packet) = deliver(session, r, *qos, msg, session.last_seen) {
                    self.stats.forwarded += 1;
                    out.push(Output::Send {
                        to: conn,
                        packet,
                        origin: Some(msg),
                    });
                }
            }
        }
        out
    }

    /// Run [`redeliver`] on every session.
    pub fn redeliver(&mut self, now: f64) -> Vec<Output> {
        let mut out = Vec::new();
        for (&conn, session) in self.sessions.iter_mut() {
            for r in redeliver(session, now, self.cfg.ack_timeout_s, self.cfg.max_retries) {
                match r {
                    Redelivery::Resent(p, origin) => {
                        self.stats.retransmitted += 1;
                        out.push(Output::Send {
                            to: conn,
                            packet: MqttPacket::Publish(p),
                            origin: Some(origin),
                        });
                    }
                    Redelivery::Dropped(_, origin) => {
                        self.stats.errors_uncorrected += 1;
                        self.events.push(BrokerEvent::ErrorUncorrected {
                            msg: origin,
                            client_id: session.client_id.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    /// Close every session silent for longer than 1.5 × its keep-alive.
    /// Returns the affected connections and client ids.
    pub fn keepalive_sweep(&mut self, now: f64) -> Vec<(ConnId, String)> {
        let expired: Vec<(ConnId, String)> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.expired(now))
            .map(|(c, s)| (*c, s.client_id.clone()))
            .collect();
        for (conn, _) in &expired {
            self.remove_session(*conn, CloseReason::KeepAliveExpired);
        }
        expired
    }
}

/// Prepare one outbound copy of a message for `session`, registering it as
/// inflight when delivered at QoS 1.
fn deliver(
    session: &mut Session,
    mut publish: Publish,
    sub_qos: QoS,
    origin: MessageId,
    now: f64,
) -> Option<MqttPacket> {
    publish.qos = publish.qos.min(sub_qos);
    publish.dup = false;
    publish.packet_id = None;
    if publish.qos == QoS::AtLeastOnce {
        let Some(id) = session.allocate_packet_id() else {
            log::warn!("{}: all packet ids in flight, dropping message", session.client_id);
            return None;
        };
        publish.packet_id = Some(id);
        session.inflight.insert(
            id,
            Inflight {
                publish: publish.clone(),
                sent_at: now,
                retries: 0,
                origin,
            },
        );
    }
    Some(MqttPacket::Publish(publish))
}
