//! Encode a few MQTT packets, show their bytes, and decode a stream that
//! arrives in awkward chunks.
//!
//! ```text
//! cargo run -p parksim --example packet_codec
//! ```

use parksim::mqtt::{
    decode_packet, encode_packet, Connect, Decoded, MqttPacket, PacketId, Publish, QoS, Subscribe,
};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

fn main() {
    let packets = vec![
        MqttPacket::Connect(Connect {
            client_id: "controller".into(),
            keep_alive_s: 60,
            clean_session: true,
        }),
        MqttPacket::Publish(Publish::qos0("parking/slot/1/status", "1", true)),
        MqttPacket::Publish(Publish {
            topic: "parking/gas/ppm".into(),
            payload: b"18.4".to_vec(),
            qos: QoS::AtLeastOnce,
            retain: true,
            dup: false,
            packet_id: PacketId::new(7),
        }),
        MqttPacket::Subscribe(Subscribe {
            packet_id: PacketId::new(1).unwrap(),
            filters: vec![("parking/#".into(), QoS::AtLeastOnce)],
        }),
        MqttPacket::PingReq,
    ];

    let mut stream = Vec::new();
    for p in &packets {
        let bytes = encode_packet(p).unwrap();
        println!("{:<10} {}", p.name(), hex(&bytes));
        stream.extend(bytes);
    }

    println!("\nfeeding {} bytes in 5-byte chunks:", stream.len());
    let mut buf = Vec::new();
    for chunk in stream.chunks(5) {
        buf.extend_from_slice(chunk);
        while let Decoded::Packet(p, used) = decode_packet(&buf).unwrap() {
            println!("  decoded {} ({used} bytes)", p.name());
            buf.drain(..used);
        }
    }
    assert!(buf.is_empty());
}
