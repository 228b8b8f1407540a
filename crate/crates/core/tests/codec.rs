mod common;

use parksim::mqtt::{
    decode_packet, decode_packet_with_limit, decode_varint, encode_packet, encode_varint,
    topic_matches, Decoded, MqttPacket, ProtocolError, Publish, QoS, MAX_VARINT,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn packet(seed: u64) -> MqttPacket {
    common::random_packet(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #[test]
    fn round_trip(seed in any::<u64>()) {
        let p = packet(seed);
        let bytes = encode_packet(&p).unwrap();
        prop_assert_eq!(decode_packet(&bytes).unwrap(), Decoded::Packet(p, bytes.len()));
    }

    #[test]
    fn every_strict_prefix_needs_more(seed in any::<u64>()) {
        let bytes = encode_packet(&packet(seed)).unwrap();
        for cut in 0..bytes.len() {
            prop_assert_eq!(decode_packet(&bytes[..cut]).unwrap(), Decoded::NeedMoreData);
        }
    }

    #[test]
    fn trailing_bytes_are_left_alone(a in any::<u64>(), b in any::<u64>()) {
        let (p, q) = (packet(a), packet(b));
        let mut bytes = encode_packet(&p).unwrap();
        let first = bytes.len();
        bytes.extend(encode_packet(&q).unwrap());
        prop_assert_eq!(decode_packet(&bytes).unwrap(), Decoded::Packet(p, first));
        prop_assert_eq!(decode_packet(&bytes[first..]).unwrap(), Decoded::Packet(q, bytes.len() - first));
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        if let Ok(Decoded::Packet(_, used)) = decode_packet(&bytes) {
            prop_assert!(used <= bytes.len());
        }
    }

    #[test]
    fn varint_round_trip(n in 0..=MAX_VARINT) {
        let bytes = encode_varint(n).unwrap();
        prop_assert!((1..=4).contains(&bytes.len()));
        prop_assert_eq!(decode_varint(&bytes).unwrap(), Some((n, bytes.len())));
    }

    #[test]
    fn hash_matches_every_topic(seed in any::<u64>()) {
        let topic = common::topic_name(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(topic_matches("#", &topic).unwrap());
        prop_assert!(topic_matches(&topic, &topic).unwrap());
    }
}

#[test]
fn varint_limits() {
    assert!(encode_varint(MAX_VARINT + 1).is_err());
    assert!(decode_varint(&[0xFF, 0xFF, 0xFF, 0xFF, 0x01]).is_err());
    assert_eq!(decode_varint(&[0x80]).unwrap(), None);
}

#[test]
fn frame_limit_is_enforced() {
    let p = MqttPacket::Publish(Publish::qos0("a", vec![0u8; 1000], false));
    let bytes = encode_packet(&p).unwrap();
    assert!(matches!(
        decode_packet_with_limit(&bytes, 100),
        Err(ProtocolError::FrameTooLarge { .. })
    ));
}

#[test]
fn qos2_publish_is_rejected() {
    // PUBLISH with both QoS bits set.
    let bytes = [0x34, 0x05, 0x00, 0x01, b'a', 0x00, 0x01];
    assert!(decode_packet(&bytes).is_err());
    assert!(QoS::from_u8(2).is_none());
}
