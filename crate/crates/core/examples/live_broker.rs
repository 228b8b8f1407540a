//! Start the TCP broker on a free local port, publish slot states to it
//! from one client and read them back from another.
//!
//! ```text
//! cargo run -p parksim --example live_broker
//! ```

use std::time::Duration;

use parksim::broker::tcp::{BrokerServer, TcpClient};
use parksim::broker::{BrokerConfig, ClientConfig};
use parksim::mqtt::QoS;

fn main() {
    let handle = BrokerServer::bind("127.0.0.1:0", BrokerConfig::default())
        .expect("bind")
        .spawn()
        .expect("spawn");
    let addr = handle.local_addr();
    println!("broker listening on {addr}");

    let wait = Duration::from_secs(2);
    let mut controller = TcpClient::connect(addr, ClientConfig::new("controller"), wait).unwrap();
    for (slot, state) in [(1, "1"), (2, "0"), (3, "1"), (4, "0")] {
        controller
            .publish(&format!("parking/slot/{slot}/status"), state, QoS::AtLeastOnce, true)
            .unwrap();
    }
    controller.publish("parking/summary", "2/4", QoS::AtLeastOnce, true).unwrap();
    controller.wait_acked(wait).unwrap();
    println!("controller published 5 retained messages");

    let mut viewer = TcpClient::connect(addr, ClientConfig::new("viewer"), wait).unwrap();
    let granted = viewer.subscribe("parking/#", QoS::AtLeastOnce, wait).unwrap();
    println!("viewer subscribed: {granted:?}");
    while let Some(p) = viewer.poll(Duration::from_millis(200)).unwrap() {
        println!("  {} = {}", p.topic, String::from_utf8_lossy(&p.payload));
    }

    controller.publish("parking/slot/2/status", "1", QoS::AtLeastOnce, true).unwrap();
    if let Some(p) = viewer.poll(wait).unwrap() {
        println!("live: {} = {}", p.topic, String::from_utf8_lossy(&p.payload));
    }

    controller.disconnect().unwrap();
    viewer.disconnect().unwrap();
    let broker = handle.shutdown();
    println!("{:?}", broker.stats());
}
