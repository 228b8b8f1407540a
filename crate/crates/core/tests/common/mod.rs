#![allow(dead_code)]

use parksim::mqtt::{
    ConnAck, Connect, ConnectReturnCode, MqttPacket, PacketId, Publish, QoS, SubAck, SubAckCode,
    Subscribe, Unsubscribe,
};
use rand::seq::IndexedRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "parking", "slot", "1", "2", "17", "status", "env", "temperature", "gas", "ppm", "fan",
    "gate", "entrance", "ünïcode", "a b", "x",
];

fn level<R: Rng>(rng: &mut R) -> String {
    if rng.random_bool(0.05) {
        return String::new();
    }
    WORDS.choose(rng).unwrap().to_string()
}

pub fn topic_name<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..=5);
    let t = (0..n).map(|_| level(rng)).collect::<Vec<_>>().join("/");
    if t.is_empty() {
        "t".into()
    } else {
        t
    }
}

pub fn topic_filter<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..=5);
    let mut levels: Vec<String> = (0..n)
        .map(|_| if rng.random_bool(0.2) { "+".to_string() } else { level(rng) })
        .collect();
    if rng.random_bool(0.2) {
        levels.push("#".into());
    }
    let f = levels.join("/");
    if f.is_empty() {
        "#".into()
    } else {
        f
    }
}

fn pid<R: Rng>(rng: &mut R) -> PacketId {
    PacketId::new(rng.random_range(1..=u16::MAX)).unwrap()
}

fn qos<R: Rng>(rng: &mut R) -> QoS {
    if rng.random() {
        QoS::AtLeastOnce
    } else {
        QoS::AtMostOnce
    }
}

fn client_id<R: Rng>(rng: &mut R) -> String {
    let len = rng.random_range(0..24);
    (0..len)
        .map(|_| *b"abcdefghijklmnopqrstuvwxyz0123456789-_".choose(rng).unwrap() as char)
        .collect()
}

/// A random packet satisfying every encoder invariant.
pub fn random_packet<R: Rng>(rng: &mut R) -> MqttPacket {
    match rng.random_range(0..11) {
        0 => MqttPacket::Connect(Connect {
            client_id: client_id(rng),
            keep_alive_s: rng.random(),
            clean_session: rng.random(),
        }),
        1 => MqttPacket::ConnAck(ConnAck {
            return_code: *[
                ConnectReturnCode::Accepted,
                ConnectReturnCode::UnacceptableProtocolVersion,
                ConnectReturnCode::IdentifierRejected,
                ConnectReturnCode::ServerUnavailable,
                ConnectReturnCode::BadUsernameOrPassword,
                ConnectReturnCode::NotAuthorized,
            ]
            .choose(rng)
            .unwrap(),
        }),
        2 => {
            let qos = qos(rng);
            let len = if rng.random_bool(0.05) {
                rng.random_range(200..2000)
            } else {
                rng.random_range(0..40)
            };
            let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            MqttPacket::Publish(Publish {
                topic: topic_name(rng),
                payload,
                qos,
                retain: rng.random(),
                dup: qos == QoS::AtLeastOnce && rng.random(),
                packet_id: (qos == QoS::AtLeastOnce).then(|| pid(rng)),
            })
        }
        3 => MqttPacket::PubAck { packet_id: pid(rng) },
        4 => MqttPacket::Subscribe(Subscribe {
            packet_id: pid(rng),
            filters: (0..rng.random_range(1..4))
                .map(|_| (topic_filter(rng), qos(rng)))
                .collect(),
        }),
        5 => MqttPacket::SubAck(SubAck {
            packet_id: pid(rng),
            granted: (0..rng.random_range(1..4))
                .map(|_| {
                    if rng.random_bool(0.2) {
                        SubAckCode::Failure
                    } else {
                        SubAckCode::Granted(qos(rng))
                    }
                })
                .collect(),
        }),
        6 => MqttPacket::Unsubscribe(Unsubscribe {
            packet_id: pid(rng),
            filters: (0..rng.random_range(1..4)).map(|_| topic_filter(rng)).collect(),
        }),
        7 => MqttPacket::UnsubAck { packet_id: pid(rng) },
        8 => MqttPacket::PingReq,
        9 => MqttPacket::PingResp,
        _ => MqttPacket::Disconnect,
    }
}
