use std::collections::VecDeque;

use thiserror::Error;

use super::session::{redeliver, Inflight, Redelivery, Session};
use crate::mqtt::{
    validate_topic_filter, validate_topic_name, ConnAck, Connect, ConnectReturnCode, MqttPacket,
    PacketId, Publish, QoS, SubAckCode, Subscribe, TopicError,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub client_id: String,
    pub keep_alive_s: u16,
    pub ack_timeout_s: f64,
    pub max_retries: u32,
}

impl ClientConfig {
    pub fn new(client_id: impl Into<String>) -> Self {
        ClientConfig {
            client_id: client_id.into(),
            keep_alive_s: 30,
            ack_timeout_s: 2.0,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClientError {
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("client is closed")]
    Closed,
    #[error("all packet ids are in flight")]
    NoPacketId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    Connected,
    Rejected(ConnectReturnCode),
    Message(Publish),
    Subscribed {
        packet_id: PacketId,
        granted: Vec<SubAckCode>,
    },
    Unsubscribed {
        packet_id: PacketId,
    },
    /// The broker acknowledged one of our QoS 1 publishes.
    Acked {
        packet_id: PacketId,
        retries: u32,
    },
    /// One of our QoS 1 publishes ran out of retries.
    Abandoned(Publish),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub published: u64,
    pub received: u64,
    pub retransmitted: u64,
    pub errors_corrected: u64,
    pub errors_uncorrected: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    Connecting,
    Connected,
    Closed,
}

/// Sans-IO MQTT client. Feed it received packets with [`Client::handle`],
/// call [`Client::tick`] periodically and send whatever
/// [`Client::poll_transmit`] yields.
#[derive(Debug)]
pub struct Client {
    cfg: ClientConfig,
    state: State,
    session: Session,
    /// Packets produced before the CONNACK arrived.
    pending: VecDeque<MqttPacket>,
    transmit: VecDeque<MqttPacket>,
    events: VecDeque<ClientEvent>,
    last_sent: f64,
    stats: ClientStats,
}

impl Client {
    pub fn new(cfg: ClientConfig) -> Self {
        let session = Session::new(cfg.client_id.clone(), cfg.keep_alive_s, 0.0);
        Client {
            cfg,
            state: State::Idle,
            session,
            pending: VecDeque::new(),
            transmit: VecDeque::new(),
            events: VecDeque::new(),
            last_sent: 0.0,
            stats: ClientStats::default(),
        }
    }

    pub fn client_id(&self) -> &str {
        &self.cfg.client_id
    }

    pub fn is_connected(&self) -> bool {
        self.state == State::Connected
    }

    pub fn is_closed(&self) -> bool {
        self.state == State::Closed
    }

    pub fn stats(&self) -> ClientStats {
        self.stats
    }

    pub fn inflight_len(&self) -> usize {
        self.session.inflight.len()
    }

    pub fn connect(&mut self, now: f64) {
        if self.state != State::Idle {
            return;
        }
        self.state = State::Connecting;
        self.last_sent = now;
        self.transmit.push_back(MqttPacket::Connect(Connect {
            client_id: self.cfg.client_id.clone(),
            keep_alive_s: self.cfg.keep_alive_s,
            clean_session: true,
        }));
    }

    pub fn publish(
        &mut self,
        topic: &str,
        payload: impl Into<Vec<u8>>,
        qos: QoS,
        retain: bool,
        now: f64,
    ) -> Result<Option<PacketId>, ClientError> {
        if self.state == State::Closed {
            return Err(ClientError::Closed);
        }
        validate_topic_name(topic)?;
        let mut publish = Publish::qos0(topic, payload, retain);
        publish.qos = qos;
        if qos == QoS::AtLeastOnce {
            let id = self
                .session
                .allocate_packet_id()
                .ok_or(ClientError::NoPacketId)?;
            publish.packet_id = Some(id);
            self.session.inflight.insert(
                id,
                Inflight {
                    publish: publish.clone(),
                    sent_at: now,
                    retries: 0,
                    origin: self.stats.published,
                },
            );
        }
        self.stats.published += 1;
        let id = publish.packet_id;
        self.send(MqttPacket::Publish(publish), now);
        Ok(id)
    }

    pub fn subscribe(
        &mut self,
        filters: &[(&str, QoS)],
        now: f64,
    ) -> Result<PacketId, ClientError> {
        if self.state == State::Closed {
            return Err(ClientError::Closed);
        }
        for (f, _) in filters {
            validate_topic_filter(f)?;
        }
        let packet_id = self.next_control_id()?;
        self.send(
            MqttPacket::Subscribe(Subscribe {
                packet_id,
                filters: filters.iter().map(|(f, q)| (f.to_string(), *q)).collect(),
            }),
            now,
        );
        Ok(packet_id)
    }

    pub fn disconnect(&mut self, now: f64) {
        if self.state == State::Connected {
            self.transmit.push_back(MqttPacket::Disconnect);
            self.last_sent = now;
        }
        self.state = State::Closed;
    }

    fn next_control_id(&mut self) -> Result<PacketId, ClientError> {
        self.session
            .allocate_packet_id()
            .ok_or(ClientError::NoPacketId)
    }

    fn send(&mut self, packet: MqttPacket, now: f64) {
        if self.state == State::Connected {
            self.last_sent = now;
            self.transmit.push_back(packet);
        } else {
            self.pending.push_back(packet);
        }
    }

    pub fn handle(&mut self, packet: MqttPacket, now: f64) {
        self.session.last_seen = now;
        match packet {
            MqttPacket::ConnAck(ConnAck { return_code }) => {
                if self.state != State::Connecting {
                    return;
                }
                if return_code == ConnectReturnCode::Accepted {
                    self.state = State::Connected;
                    self.events.push_back(ClientEvent::Connected);
                    while let Some(p) = self.pending.pop_front() {
                        if let MqttPacket::Publish(ref publish) = p {
                            if let Some(id) = publish.packet_id {
                                if let Some(entry) = self.session.inflight.get_mut(&id) {
                                    entry.sent_at = now;
                                }
                            }
                        }
                        self.transmit.push_back(p);
                    }
                    self.last_sent = now;
                } else {
                    self.state = State::Closed;
                    self.events.push_back(ClientEvent::Rejected(return_code));
                }
            }
            MqttPacket::Publish(p) => {
                self.stats.received += 1;
                if let (QoS::AtLeastOnce, Some(packet_id)) = (p.qos, p.packet_id) {
                    self.send(MqttPacket::PubAck { packet_id }, now);
                }
                self.events.push_back(ClientEvent::Message(p));
            }
            MqttPacket::PubAck { packet_id } => {
                if let Some(entry) = self.session.inflight.remove(&packet_id) {
                    if entry.retries > 0 {
                        self.stats.errors_corrected += 1;
                    }
                    self.events.push_back(ClientEvent::Acked {
                        packet_id,
                        retries: entry.retries,
                    });
                }
            }
            MqttPacket::SubAck(ack) => {
                self.events.push_back(ClientEvent::Subscribed {
                    packet_id: ack.packet_id,
                    granted: ack.granted,
                });
            }
            MqttPacket::UnsubAck { packet_id } => {
                self.events.push_back(ClientEvent::Unsubscribed { packet_id });
            }
            MqttPacket::PingResp => {}
            other => log::debug!("{}: ignoring {}", self.cfg.client_id, other.name()),
        }
    }

    /// Retransmit unacknowledged publishes and send a PINGREQ when the link
    /// has been quiet for a whole keep-alive period.
    pub fn tick(&mut self, now: f64) {
        if self.state != State::Connected {
            return;
        }
        for r in redeliver(
            &mut self.session,
            now,
            self.cfg.ack_timeout_s,
            self.cfg.max_retries,
        ) {
            match r {
                Redelivery::Resent(p, _) => {
                    self.stats.retransmitted += 1;
                    self.last_sent = now;
                    self.transmit.push_back(MqttPacket::Publish(p));
                }
                Redelivery::Dropped(p, _) => {
                    self.stats.errors_uncorrected += 1;
                    self.events.push_back(ClientEvent::Abandoned(p));
                }
            }
        }
        let ka = self.cfg.keep_alive_s as f64;
        if ka > 0.0 && now - self.last_sent >= ka {
            self.last_sent = now;
            self.transmit.push_back(MqttPacket::PingReq);
        }
    }

    /// Earliest time [`Client::tick`] has something to do.
    pub fn next_deadline(&self) -> Option<f64> {
        if self.state != State::Connected {
            return None;
        }
        let retry = self
            .session
            .inflight
            .values()
            .map(|i| i.sent_at + self.cfg.ack_timeout_s)
            .min_by(f64::total_cmp);
        let ping = (self.cfg.keep_alive_s > 0).then(|| self.last_sent + self.cfg.keep_alive_s as f64);
        match (retry, ping) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn poll_transmit(&mut self) -> Option<MqttPacket> {
        self.transmit.pop_front()
    }

    pub fn poll_event(&mut self) -> Option<ClientEvent> {
        self.events.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn connected() -> Client {
        let mut c = Client::new(ClientConfig::new("ctl"));
        c.connect(0.0);
        assert!(matches!(c.poll_transmit(), Some(MqttPacket::Connect(_))));
        c.handle(
            MqttPacket::ConnAck(ConnAck {
                return_code: ConnectReturnCode::Accepted,
            }),
            0.0,
        );
        assert_eq!(c.poll_event(), Some(ClientEvent::Connected));
        c
    }

    #[test]
    fn publishes_wait_for_connack() {
        let mut c = Client::new(ClientConfig::new("ctl"));
        c.connect(0.0);
        c.publish("a/b", "1", QoS::AtMostOnce, true, 0.0).unwrap();
        assert!(matches!(c.poll_transmit(), Some(MqttPacket::Connect(_))));
        assert_eq!(c.poll_transmit(), None);
        c.handle(
            MqttPacket::ConnAck(ConnAck {
                return_code: ConnectReturnCode::Accepted,
            }),
            0.1,
        );
        assert!(matches!(c.poll_transmit(), Some(MqttPacket::Publish(_))));
    }

    #[test]
    fn rejected_connect_closes() {
        let mut c = Client::new(ClientConfig::new("x"));
        c.connect(0.0);
        c.handle(
            MqttPacket::ConnAck(ConnAck {
                return_code: ConnectReturnCode::UnacceptableProtocolVersion,
            }),
            0.0,
        );
        assert!(c.is_closed());
        assert_eq!(
            c.publish("a", "b", QoS::AtMostOnce, false, 0.0),
            Err(ClientError::Closed)
        );
    }

    #[test]
    fn qos1_retry_then_ack_counts_as_corrected() {
        let mut c = connected();
        let id = c
            .publish("p/slot/1/status", "1", QoS::AtLeastOnce, true, 0.0)
            .unwrap()
            .unwrap();
        c.poll_transmit();
        c.tick(2.5);
        let Some(MqttPacket::Publish(p)) = c.poll_transmit() else {
            panic!("expected retransmission")
        };
        assert!(p.dup);
        c.handle(MqttPacket::PubAck { packet_id: id }, 2.6);
        assert_eq!(c.stats().errors_corrected, 1);
        assert_eq!(c.inflight_len(), 0);
    }

    #[test]
    fn incoming_qos1_is_acked() {
        let mut c = connected();
        let publish = Publish {
            qos: QoS::AtLeastOnce,
            packet_id: PacketId::new(9),
            ..Publish::qos0("x", "y", false)
        };
        c.handle(MqttPacket::Publish(publish.clone()), 1.0);
        assert_eq!(
            c.poll_transmit(),
            Some(MqttPacket::PubAck {
                packet_id: PacketId::new(9).unwrap()
            })
        );
        assert_eq!(c.poll_event(), Some(ClientEvent::Message(publish)));
    }

    #[test]
    fn idle_link_pings() {
        let mut c = connected();
        assert_eq!(c.next_deadline(), Some(30.0));
        c.tick(30.0);
        assert_eq!(c.poll_transmit(), Some(MqttPacket::PingReq));
    }

    #[test]
    fn bad_topic_rejected() {
        let mut c = connected();
        assert!(matches!(
            c.publish("a/+", "x", QoS::AtMostOnce, false, 0.0),
            Err(ClientError::Topic(_))
        ));
    }
}
