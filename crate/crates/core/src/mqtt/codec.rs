//! Packet types, encoder and incremental decoder.

use std::num::NonZeroU16;

use thiserror::Error;

use super::topic::{validate_topic_filter, validate_topic_name, TopicError};

/// Largest value representable by the four-byte remaining-length field.
pub const MAX_VARINT: u32 = 268_435_455;

/// Frames whose remaining length exceeds this are refused before any
/// payload is buffered.
pub const DEFAULT_MAX_REMAINING: usize = 256 * 1024;

const PROTOCOL_NAME: &str = "MQTT";
const PROTOCOL_LEVEL: u8 = 4;

pub type PacketId = NonZeroU16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QoS {
    AtMostOnce = 0,
    AtLeastOnce = 1,
}

impl QoS {
    pub fn from_u8(v: u8) -> Option<QoS> {
        match v {
            0 => Some(QoS::AtMostOnce),
            1 => Some(QoS::AtLeastOnce),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub client_id: String,
    pub keep_alive_s: u16,
    pub clean_session: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocolVersion = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadUsernameOrPassword = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    fn from_u8(v: u8) -> Option<Self> {
        use ConnectReturnCode::*;
        Some(match v {
            0 => Accepted,
            1 => UnacceptableProtocolVersion,
            2 => IdentifierRejected,
            3 => ServerUnavailable,
            4 => BadUsernameOrPassword,
            5 => NotAuthorized,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnAck {
    pub return_code: ConnectReturnCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub topic: String,
    pub payload: Vec<u8>,
    pub qos: QoS,
    pub retain: bool,
    pub dup: bool,
    /// Present iff `qos` is `AtLeastOnce`.
    pub packet_id: Option<PacketId>,
}

impl Publish {
    pub fn qos0(topic: impl Into<String>, payload: impl Into<Vec<u8>>, retain: bool) -> Self {
        Publish {
            topic: topic.into(),
            payload: payload.into(),
            qos: QoS::AtMostOnce,
            retain,
            dup: false,
            packet_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscribe {
    pub packet_id: PacketId,
    pub filters: Vec<(String, QoS)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubAckCode {
    Granted(QoS),
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubAck {
    pub packet_id: PacketId,
    pub granted: Vec<SubAckCode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsubscribe {
    pub packet_id: PacketId,
    pub filters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MqttPacket {
    Connect(Connect),
    ConnAck(ConnAck),
    Publish(Publish),
    PubAck { packet_id: PacketId },
    Subscribe(Subscribe),
    SubAck(SubAck),
    Unsubscribe(Unsubscribe),
    UnsubAck { packet_id: PacketId },
    PingReq,
    PingResp,
    Disconnect,
}

impl MqttPacket {
    pub fn name(&self) -> &'static str {
        match self {
            MqttPacket::Connect(_) => "CONNECT",
            MqttPacket::ConnAck(_) => "CONNACK",
            MqttPacket::Publish(_) => "PUBLISH",
            MqttPacket::PubAck { .. } => "PUBACK",
            MqttPacket::Subscribe(_) => "SUBSCRIBE",
            MqttPacket::SubAck(_) => "SUBACK",
            MqttPacket::Unsubscribe(_) => "UNSUBSCRIBE",
            MqttPacket::UnsubAck { .. } => "UNSUBACK",
            MqttPacket::PingReq => "PINGREQ",
            MqttPacket::PingResp => "PINGRESP",
            MqttPacket::Disconnect => "DISCONNECT",
        }
    }

    fn type_code(&self) -> u8 {
        match self {
            MqttPacket::Connect(_) => 1,
            MqttPacket::ConnAck(_) => 2,
            MqttPacket::Publish(_) => 3,
            MqttPacket::PubAck { .. } => 4,
            MqttPacket::Subscribe(_) => 8,
            MqttPacket::SubAck(_) => 9,
            MqttPacket::Unsubscribe(_) => 10,
            MqttPacket::UnsubAck { .. } => 11,
            MqttPacket::PingReq => 12,
            MqttPacket::PingResp => 13,
            MqttPacket::Disconnect => 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("QoS 1 publish needs a packet id")]
    MissingPacketId,
    #[error("QoS 0 publish must not carry a packet id")]
    UnexpectedPacketId,
    #[error("QoS 0 publish must not set DUP")]
    DupOnQos0,
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("subscribe/unsubscribe needs at least one filter")]
    NoFilters,
    #[error("string of {0} bytes exceeds 65535")]
    StringTooLong(usize),
    #[error("value {0} does not fit the remaining-length field")]
    VarintOutOfRange(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("reserved packet type {0}")]
    ReservedPacketType(u8),
    #[error("packet type {0} is not supported (QoS 2 flow)")]
    UnsupportedPacketType(u8),
    #[error("invalid fixed-header flags {flags:#06b} for packet type {packet_type}")]
    InvalidFlags { packet_type: u8, flags: u8 },
    #[error("remaining length uses more than four bytes")]
    RemainingLengthTooLong,
    #[error("remaining length is not minimally encoded")]
    OverlongVarint,
    #[error("remaining length {len} exceeds limit {max}")]
    FrameTooLarge { len: usize, max: usize },
    #[error("packet body ended early while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after packet body")]
    TrailingBytes(usize),
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("packet id must not be zero")]
    ZeroPacketId,
    #[error("QoS {0} is not supported")]
    UnsupportedQos(u8),
    #[error("protocol {name:?} level {level} is not supported")]
    UnsupportedProtocol { name: String, level: u8 },
    #[error("CONNECT uses an unsupported feature: {0}")]
    UnsupportedConnectFeature(&'static str),
    #[error("reserved CONNECT flag is set")]
    ReservedConnectFlag,
    #[error("invalid CONNACK: {0}")]
    InvalidConnAck(&'static str),
    #[error("invalid SUBACK return code {0:#04x}")]
    InvalidSubAckCode(u8),
    #[error("subscribe/unsubscribe carries no filters")]
    NoFilters,
}

impl ProtocolError {
    /// Whether a CONNECT failing this way should be answered with
    /// CONNACK 0x01 rather than a bare disconnect.
    pub fn is_unsupported_connect(&self) -> bool {
        matches!(
            self,
            ProtocolError::UnsupportedProtocol { .. } | ProtocolError::UnsupportedConnectFeature(_)
        )
    }
}

/// Outcome of a decode attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    /// A whole packet and the number of bytes it occupied.
    Packet(MqttPacket, usize),
    NeedMoreData,
}

fn push_varint(out: &mut Vec<u8>, mut n: u32) {
    loop {
        let mut byte = (n % 128) as u8;
        n /= 128;
        if n > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if n == 0 {
            break;
        }
    }
}

/// Base-128 little-endian encoding with a continuation bit, 1 to 4 bytes.
pub fn encode_varint(n: u32) -> Result<Vec<u8>, EncodeError> {
    if n > MAX_VARINT {
        return Err(EncodeError::VarintOutOfRange(n as u64));
    }
    let mut out = Vec::with_capacity(4);
    push_varint(&mut out, n);
    Ok(out)
}

/// Decode a remaining-length field. `Ok(None)` means more bytes are needed.
pub fn decode_varint(buf: &[u8]) -> Result<Option<(u32, usize)>, ProtocolError> {
    let mut value: u32 = 0;
    let mut multiplier: u32 = 1;
    for i in 0..4 {
        let Some(&byte) = buf.get(i) else {
            return Ok(None);
        };
        value += (byte & 0x7F) as u32 * multiplier;
        if byte & 0x80 == 0 {
            if i > 0 && byte == 0 {
                return Err(ProtocolError::OverlongVarint);
            }
            return Ok(Some((value, i + 1)));
        }
        multiplier *= 128;
    }
    Err(ProtocolError::RemainingLengthTooLong)
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn push_str(out: &mut Vec<u8>, s: &str) -> Result<(), EncodeError> {
    let len = u16::try_from(s.len()).map_err(|_| EncodeError::StringTooLong(s.len()))?;
    push_u16(out, len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Serialize one packet, header included.
pub fn encode_packet(packet: &MqttPacket) -> Result<Vec<u8>, EncodeError> {
    let mut body = Vec::new();
    let mut flags = 0u8;
    match packet {
        MqttPacket::Connect(c) => {
            push_str(&mut body, PROTOCOL_NAME)?;
            body.push(PROTOCOL_LEVEL);
            body.push(if c.clean_session { 0x02 } else { 0x00 });
            push_u16(&mut body, c.keep_alive_s);
            push_str(&mut body, &c.client_id)?;
        }
        MqttPacket::ConnAck(a) => {
            body.push(0);
            body.push(a.return_code as u8);
        }
        MqttPacket::Publish(p) => {
            validate_topic_name(&p.topic)?;
            match (p.qos, p.packet_id) {
                (QoS::AtLeastOnce, None) => return Err(EncodeError::MissingPacketId),
                (QoS::AtMostOnce, Some(_)) => return Err(EncodeError::UnexpectedPacketId),
                (QoS::AtMostOnce, None) if p.dup => return Err(EncodeError::DupOnQos0),
                _ => {}
            }
            flags = (p.dup as u8) << 3 | (p.qos as u8) << 1 | p.retain as u8;
            push_str(&mut body, &p.topic)?;
            if let Some(id) = p.packet_id {
                push_u16(&mut body, id.get());
            }
            body.extend_from_slice(&p.payload);
        }
        MqttPacket::PubAck { packet_id } | MqttPacket::UnsubAck { packet_id } => {
            push_u16(&mut body, packet_id.get());
        }
        MqttPacket::Subscribe(s) => {
            flags = 0b0010;
            if s.filters.is_empty() {
                return Err(EncodeError::NoFilters);
            }
            push_u16(&mut body, s.packet_id.get());
            for (filter, qos) in &s.filters {
                validate_topic_filter(filter)?;
                push_str(&mut body, filter)?;
                body.push(*qos as u8);
            }
        }
        MqttPacket::SubAck(s) => {
            push_u16(&mut body, s.packet_id.get());
            body.extend(s.granted.iter().map(|c| match c {
                SubAckCode::Granted(q) => *q as u8,
                SubAckCode::Failure => 0x80,
            }));
        }
        MqttPacket::Unsubscribe(u) => {
            flags = 0b0010;
            if u.filters.is_empty() {
                return Err(EncodeError::NoFilters);
            }
            push_u16(&mut body, u.packet_id.get());
            for filter in &u.filters {
                validate_topic_filter(filter)?;
                push_str(&mut body, filter)?;
            }
        }
        MqttPacket::PingReq | MqttPacket::PingResp | MqttPacket::Disconnect => {}
    }
    if body.len() > MAX_VARINT as usize {
        return Err(EncodeError::VarintOutOfRange(body.len() as u64));
    }
    let mut out = Vec::with_capacity(body.len() + 5);
    out.push(packet.type_code() << 4 | flags);
    push_varint(&mut out, body.len() as u32);
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decode with the default frame limit.
pub fn decode_packet(buf: &[u8]) -> Result<Decoded, ProtocolError> {
    decode_packet_with_limit(buf, DEFAULT_MAX_REMAINING)
}

/// Try to decode one packet from the front of `buf`.
///
/// A strict prefix of a valid frame always yields `NeedMoreData`. The
/// remaining length is checked against `max_remaining` before waiting for
/// (or copying) the body.
pub fn decode_packet_with_limit(
    buf: &[u8],
    max_remaining: usize,
) -> Result<Decoded, ProtocolError> {
    let Some(&first) = buf.first() else {
        return Ok(Decoded::NeedMoreData);
    };
    let packet_type = first >> 4;
    let flags = first & 0x0F;
    check_fixed_header(packet_type, flags)?;

    let Some((len, len_bytes)) = decode_varint(&buf[1..])? else {
        return Ok(Decoded::NeedMoreData);
    };
    let len = len as usize;
    if len > max_remaining {
        return Err(ProtocolError::FrameTooLarge {
            len,
            max: max_remaining,
        });
    }
    let header = 1 + len_bytes;
    if buf.len() < header + len {
        return Ok(Decoded::NeedMoreData);
    }
    let mut r = Reader::new(&buf[header..header + len]);
    let packet = decode_body(packet_type, flags, &mut r)?;
    if r.remaining() > 0 {
        return Err(ProtocolError::TrailingBytes(r.remaining()));
    }
    Ok(Decoded::Packet(packet, header + len))
}

fn check_fixed_header(packet_type: u8, flags: u8) -> Result<(), ProtocolError> {
    let ok = match packet_type {
        0 | 15 => return Err(ProtocolError::ReservedPacketType(packet_type)),
        5..=7 => return Err(ProtocolError::UnsupportedPacketType(packet_type)),
        3 => {
            let qos = (flags >> 1) & 0b11;
            if qos > 1 {
                return Err(ProtocolError::UnsupportedQos(qos));
            }
            // DUP is meaningless without a packet id
            !(qos == 0 && flags & 0b1000 != 0)
        }
        8 | 10 => flags == 0b0010,
        _ => flags == 0,
    };
    if ok {
        Ok(())
    } else {
        Err(ProtocolError::InvalidFlags { packet_type, flags })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ProtocolError> {
        if self.remaining() < n {
            return Err(ProtocolError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, ProtocolError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, ProtocolError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn packet_id(&mut self) -> Result<PacketId, ProtocolError> {
        PacketId::new(self.u16("packet id")?).ok_or(ProtocolError::ZeroPacketId)
    }

    fn string(&mut self, what: &'static str) -> Result<String, ProtocolError> {
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        std::str::from_utf8(bytes)
            .map(str::to_owned)
            .map_err(|_| ProtocolError::InvalidUtf8)
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}

fn decode_body(packet_type: u8, flags: u8, r: &mut Reader<'_>) -> Result<MqttPacket, ProtocolError> {
    Ok(match packet_type {
        1 => MqttPacket::Connect(decode_connect(r)?),
        2 => {
            let ack_flags = r.u8("connack flags")?;
            if ack_flags != 0 {
                return Err(ProtocolError::InvalidConnAck("session-present is never set"));
            }
            let code = r.u8("connack return code")?;
            let return_code = ConnectReturnCode::from_u8(code)
                .ok_or(ProtocolError::InvalidConnAck("return code above 5"))?;
            MqttPacket::ConnAck(ConnAck { return_code })
        }
        3 => {
            let qos = QoS::from_u8((flags >> 1) & 0b11).expect("checked in fixed header");
            let topic = r.string("topic")?;
            validate_topic_name(&topic)?;
            let packet_id = match qos {
                QoS::AtLeastOnce => Some(r.packet_id()?),
                QoS::AtMostOnce => None,
            };
            MqttPacket::Publish(Publish {
                topic,
                payload: r.rest().to_vec(),
                qos,
                retain: flags & 0b0001 != 0,
                dup: flags & 0b1000 != 0,
                packet_id,
            })
        }
        4 => MqttPacket::PubAck {
            packet_id: r.packet_id()?,
        },
        8 => {
            let packet_id = r.packet_id()?;
            let mut filters = Vec::new();
            while r.remaining() > 0 {
                let filter = r.string("topic filter")?;
                validate_topic_filter(&filter)?;
                let requested = r.u8("requested qos")?;
                // QoS 2 requests are granted at 1, which the protocol allows.
                let qos = match requested {
                    0 => QoS::AtMostOnce,
                    1 | 2 => QoS::AtLeastOnce,
                    other => return Err(ProtocolError::UnsupportedQos(other)),
                };
                filters.push((filter, qos));
            }
            if filters.is_empty() {
                return Err(ProtocolError::NoFilters);
            }
            MqttPacket::Subscribe(Subscribe { packet_id, filters })
        }
        9 => {
            let packet_id = r.packet_id()?;
            let granted = r
                .rest()
                .iter()
                .map(|&c| match c {
                    0 => Ok(SubAckCode::Granted(QoS::AtMostOnce)),
                    1 => Ok(SubAckCode::Granted(QoS::AtLeastOnce)),
                    0x80 => Ok(SubAckCode::Failure),
                    other => Err(ProtocolError::InvalidSubAckCode(other)),
                })
                .collect::<Result<Vec<_>, _>>()?;
            MqttPacket::SubAck(SubAck { packet_id, granted })
        }
        10 => {
            let packet_id = r.packet_id()?;
            let mut filters = Vec::new();
            while r.remaining() > 0 {
                let filter = r.string("topic filter")?;
                validate_topic_filter(&filter)?;
                filters.push(filter);
            }
            if filters.is_empty() {
                return Err(ProtocolError::NoFilters);
            }
            MqttPacket::Unsubscribe(Unsubscribe { packet_id, filters })
        }
        11 => MqttPacket::UnsubAck {
            packet_id: r.packet_id()?,
        },
        12 => MqttPacket::PingReq,
        13 => MqttPacket::PingResp,
        14 => MqttPacket::Disconnect,
        _ => unreachable!("packet type {packet_type} rejected by fixed-header check"),
    })
}

fn decode_connect(r: &mut Reader<'_>) -> Result<Connect, ProtocolError> {
    let name = r.string("protocol name")?;
    let level = r.u8("protocol level")?;
    if name != PROTOCOL_NAME || level != PROTOCOL_LEVEL {
        return Err(ProtocolError::UnsupportedProtocol { name, level });
    }
    let flags = r.u8("connect flags")?;
    if flags & 0x01 != 0 {
        return Err(ProtocolError::ReservedConnectFlag);
    }
    if flags & 0x80 != 0 {
        return Err(ProtocolError::UnsupportedConnectFeature("username"));
    }
    if flags & 0x40 != 0 {
        return Err(ProtocolError::UnsupportedConnectFeature("password"));
    }
    if flags & 0x3C != 0 {
        return Err(ProtocolError::UnsupportedConnectFeature("will message"));
    }
    let keep_alive_s = r.u16("keep alive")?;
    let client_id = r.string("client id")?;
    Ok(Connect {
        client_id,
        keep_alive_s,
        clean_session: flags & 0x02 != 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid(n: u16) -> PacketId {
        PacketId::new(n).unwrap()
    }

    fn hex(s: &str) -> Vec<u8> {
        s.split_whitespace()
            .map(|b| u8::from_str_radix(b, 16).unwrap())
            .collect()
    }

    const SLOT_PUBLISH_HEX: &str =
        "31 18 00 15 70 61 72 6B 69 6E 67 2F 73 6C 6F 74 2F 31 2F 73 74 61 74 75 73 31";

    fn slot_publish() -> MqttPacket {
        MqttPacket::Publish(Publish::qos0("parking/slot/1/status", "1", true))
    }

    #[test]
    fn retained_slot_publish_bytes() {
        assert_eq!(encode_packet(&slot_publish()).unwrap(), hex(SLOT_PUBLISH_HEX));
    }

    #[test]
    fn pingreq_bytes() {
        assert_eq!(encode_packet(&MqttPacket::PingReq).unwrap(), vec![0xC0, 0x00]);
    }

    #[test]
    fn qos1_without_id_is_rejected() {
        let p = Publish {
            qos: QoS::AtLeastOnce,
            ..Publish::qos0("a/b", "x", false)
        };
        assert_eq!(
            encode_packet(&MqttPacket::Publish(p)),
            Err(EncodeError::MissingPacketId)
        );
    }

    #[test]
    fn wildcard_topic_is_rejected_on_encode() {
        let p = Publish::qos0("a/+", "x", false);
        assert!(matches!(
            encode_packet(&MqttPacket::Publish(p)),
            Err(EncodeError::Topic(_))
        ));
    }

    #[test]
    fn decode_hand_assembled_publish() {
        let bytes = hex(SLOT_PUBLISH_HEX);
        assert_eq!(
            decode_packet(&bytes).unwrap(),
            Decoded::Packet(slot_publish(), 26)
        );
        assert_eq!(decode_packet(&bytes[..3]).unwrap(), Decoded::NeedMoreData);
        assert_eq!(decode_packet(&[]).unwrap(), Decoded::NeedMoreData);
    }

    #[test]
    fn reserved_types_are_protocol_errors() {
        assert_eq!(
            decode_packet(&[0xF0, 0x00]),
            Err(ProtocolError::ReservedPacketType(15))
        );
        assert_eq!(
            decode_packet(&[0x00, 0x00]),
            Err(ProtocolError::ReservedPacketType(0))
        );
        assert_eq!(
            decode_packet(&[0x62, 0x02, 0, 1]),
            Err(ProtocolError::UnsupportedPacketType(6))
        );
    }

    #[test]
    fn varint_table() {
        assert_eq!(encode_varint(0).unwrap(), vec![0x00]);
        assert_eq!(encode_varint(127).unwrap(), vec![0x7F]);
        assert_eq!(encode_varint(128).unwrap(), vec![0x80, 0x01]);
        assert_eq!(encode_varint(321).unwrap(), vec![0xC1, 0x02]);
        assert_eq!(encode_varint(MAX_VARINT).unwrap(), vec![0xFF, 0xFF, 0xFF, 0x7F]);
        assert!(encode_varint(MAX_VARINT + 1).is_err());
        assert_eq!(decode_varint(&[0xC1, 0x02]).unwrap(), Some((321, 2)));
        assert_eq!(decode_varint(&[0xC1]).unwrap(), None);
        assert_eq!(
            decode_varint(&[0xFF, 0xFF, 0xFF, 0xFF, 0x01]),
            Err(ProtocolError::RemainingLengthTooLong)
        );
        assert_eq!(decode_varint(&[0x80, 0x00]), Err(ProtocolError::OverlongVarint));
    }

    #[test]
    fn frame_limit_checked_before_body_arrives() {
        // header claims 300 KiB, only the header is present
        let mut buf = vec![0x30];
        push_varint(&mut buf, 300 * 1024);
        assert!(matches!(
            decode_packet(&buf),
            Err(ProtocolError::FrameTooLarge { .. })
        ));
    }

    #[test]
    fn bad_flags() {
        // SUBSCRIBE with flags 0
        assert!(matches!(
            decode_packet(&[0x80, 0x00]),
            Err(ProtocolError::InvalidFlags { .. })
        ));
        // PUBLISH qos 3
        assert_eq!(decode_packet(&[0x36, 0x00]), Err(ProtocolError::UnsupportedQos(3)));
        // PINGREQ with a body
        assert_eq!(decode_packet(&[0xC0, 0x01, 0x00]), Err(ProtocolError::TrailingBytes(1)));
    }

    #[test]
    fn subscribe_with_bad_wildcard_is_protocol_error() {
        let mut body = vec![0x00, 0x01];
        body.extend_from_slice(&[0x00, 0x05]);
        body.extend_from_slice(b"a/#/b");
        body.push(0);
        let mut frame = vec![0x82, body.len() as u8];
        frame.extend(body);
        assert!(matches!(decode_packet(&frame), Err(ProtocolError::Topic(_))));
    }

    #[test]
    fn invalid_utf8_topic() {
        let frame = [0x30, 0x04, 0x00, 0x02, 0xC3, 0x28];
        assert_eq!(decode_packet(&frame), Err(ProtocolError::InvalidUtf8));
    }

    #[test]
    fn connect_roundtrip_and_excluded_features() {
        let c = MqttPacket::Connect(Connect {
            client_id: "dash".into(),
            keep_alive_s: 30,
            clean_session: true,
        });
        let bytes = encode_packet(&c).unwrap();
        assert_eq!(&bytes[2..10], &[0, 4, b'M', b'Q', b'T', b'T', 4, 0x02]);
        assert_eq!(decode_packet(&bytes).unwrap(), Decoded::Packet(c, bytes.len()));

        let mut with_user = bytes.clone();
        with_user[9] |= 0x80;
        let err = decode_packet(&with_user).unwrap_err();
        assert!(err.is_unsupported_connect());

        let mut v3 = bytes.clone();
        v3[8] = 3;
        assert!(decode_packet(&v3).unwrap_err().is_unsupported_connect());
    }

    #[test]
    fn subscribe_qos2_request_downgraded() {
        let s = MqttPacket::Subscribe(Subscribe {
            packet_id: pid(9),
            filters: vec![("parking/#".into(), QoS::AtLeastOnce)],
        });
        let mut bytes = encode_packet(&s).unwrap();
        *bytes.last_mut().unwrap() = 2;
        assert_eq!(decode_packet(&bytes).unwrap(), Decoded::Packet(s, bytes.len()));
    }

    #[test]
    fn zero_packet_id_rejected() {
        assert_eq!(decode_packet(&[0x40, 0x02, 0, 0]), Err(ProtocolError::ZeroPacketId));
    }

    #[test]
    fn two_packets_back_to_back() {
        let mut buf = encode_packet(&MqttPacket::PingReq).unwrap();
        buf.extend(encode_packet(&slot_publish()).unwrap());
        let Decoded::Packet(p, n) = decode_packet(&buf).unwrap() else {
            panic!("expected a packet")
        };
        assert_eq!((p, n), (MqttPacket::PingReq, 2));
        let Decoded::Packet(p, _) = decode_packet(&buf[n..]).unwrap() else {
            panic!("expected a packet")
        };
        assert_eq!(p, slot_publish());
    }
}
