//! Run the broker and two clients entirely in memory. Nothing touches a
//! socket: packets are moved between the engines by hand.
//!
//! ```text
//! cargo run -p parksim --example embedded_broker
//! ```

use parksim::broker::{Broker, Client, ClientConfig, ClientEvent, ConnId, Output};
use parksim::mqtt::QoS;

/// Move packets until everyone is idle. Client `i` is connection `i`.
fn pump(broker: &mut Broker, clients: &mut [Client], now: f64) {
    loop {
        let mut to_clients = Vec::new();
        for (i, c) in clients.iter_mut().enumerate() {
            while let Some(p) = c.poll_transmit() {
                println!("  {:<10} -> broker      {}", c.client_id(), p.name());
                for out in broker.handle(ConnId(i as u64), p, now) {
                    if let Output::Send { to, packet, .. } = out {
                        to_clients.push((to, packet));
                    }
                }
            }
        }
        if to_clients.is_empty() {
            return;
        }
        for (to, packet) in to_clients {
            let c = &mut clients[to.0 as usize];
            println!("  broker     -> {:<10} {}", c.client_id(), packet.name());
            c.handle(packet, now);
        }
    }
}

fn main() {
    let mut broker = Broker::default();
    let mut clients = vec![
        Client::new(ClientConfig::new("controller")),
        Client::new(ClientConfig::new("dashboard")),
    ];

    println!("connect:");
    for c in &mut clients {
        c.connect(0.0);
    }
    pump(&mut broker, &mut clients, 0.0);

    println!("controller publishes a retained slot state before anyone listens:");
    clients[0]
        .publish("parking/slot/1/status", "1", QoS::AtLeastOnce, true, 1.0)
        .unwrap();
    pump(&mut broker, &mut clients, 1.0);

    println!("dashboard subscribes and receives the retained message:");
    clients[1].subscribe(&[("parking/#", QoS::AtLeastOnce)], 2.0).unwrap();
    pump(&mut broker, &mut clients, 2.0);

    println!("a live update:");
    clients[0]
        .publish("parking/summary", "3/4", QoS::AtLeastOnce, true, 3.0)
        .unwrap();
    pump(&mut broker, &mut clients, 3.0);

    while let Some(ev) = clients[1].poll_event() {
        if let ClientEvent::Message(p) = ev {
            println!(
                "dashboard got {} = {} (retain {})",
                p.topic,
                String::from_utf8_lossy(&p.payload),
                p.retain
            );
        }
    }
    println!("{:?}", broker.stats());
}
