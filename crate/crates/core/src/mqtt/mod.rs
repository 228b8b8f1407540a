//! MQTT 3.1.1 wire format, limited to what the facility needs: QoS 0 and 1,
//! clean sessions, no wills and no credentials.

mod codec;
mod topic;

pub use codec::{
    decode_packet, decode_packet_with_limit, decode_varint, encode_packet, encode_varint,
    ConnAck, Connect, ConnectReturnCode, Decoded, EncodeError, MqttPacket, PacketId,
    ProtocolError, Publish, QoS, SubAck, SubAckCode, Subscribe, Unsubscribe,
    DEFAULT_MAX_REMAINING, MAX_VARINT,
};
pub use topic::{topic_matches, validate_topic_filter, validate_topic_name, TopicError};

pub(crate) use topic::matches_unchecked;
