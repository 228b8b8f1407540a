use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::f64::consts::PI;

use rand::Rng;

use super::config::{ScenarioConfig, ScenarioError};
use crate::broker::{
    Broker, BrokerConfig, BrokerEvent, BrokerStats, Client, ClientConfig, ClientEvent,
    ClientStats, ConnId, MessageId, Output,
};
use crate::controller::{Controller, ControllerEvent};
use crate::domain::{ControlAction, FacilityState, Gate};
use crate::mqtt::{decode_packet, encode_packet, Decoded, MqttPacket, Publish};
use crate::rng::{stream, SimRng, Stream};
use crate::sensors::{ir_detect, sample_env, sample_mq2, PendingBumps};
use crate::stochastic::{exponential, next_arrival, SECONDS_PER_HOUR};
use crate::telemetry::{self, EventKind, EventRecord};

/// Simulated time in whole microseconds. Integer time keeps event ordering
/// exact and makes configured latencies show up unrounded in measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub fn from_secs(s: f64) -> SimTime {
        SimTime((s.max(0.0) * 1e6).round() as u64)
    }

    /// Smallest tick strictly after `s` seconds.
    fn after_secs(s: f64) -> SimTime {
        SimTime((s.max(0.0) * 1e6).floor() as u64 + 1)
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorKind {
    Env,
    Gas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Broker(ConnId),
    Client(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    CarArrives,
    EntranceRead { car: u64 },
    CarParks { car: u64 },
    SlotRead { slot: usize, generation: u64, occupied: bool },
    CarDeparts { slot: usize, car: u64 },
    ExitRead { car: u64 },
    /// `periodic` samples reschedule themselves; the others are one-off
    /// reads triggered by a state change.
    SensorSample { kind: SensorKind, periodic: bool, generation: u64 },
    GasInjection(usize),
    GateTimeout { gate: Gate, generation: u64 },
    BuzzerTimeout { generation: u64 },
    PacketDelivery {
        to: Node,
        bytes: Vec<u8>,
        origin: Option<MessageId>,
    },
    Timer(usize),
}

struct Queued {
    t: SimTime,
    seq: u64,
    event: SimEvent,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.t, self.seq) == (other.t, other.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t, self.seq).cmp(&(other.t, other.seq))
    }
}

/// Min-queue of events ordered by `(t, seq)`.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, t: SimTime, event: SimEvent) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Queued { t, seq, event }));
    }

    pub fn pop(&mut self) -> Option<(SimTime, u64, SimEvent)> {
        self.heap.pop().map(|Reverse(q)| (q.t, q.seq, q.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Receives every publish the embedded broker accepts, as it happens.
pub trait SimObserver {
    fn on_publish(&mut self, t: f64, topic: &str, payload: &[u8], retain: bool);
}

impl<F: FnMut(f64, &str, &[u8], bool)> SimObserver for F {
    fn on_publish(&mut self, t: f64, topic: &str, payload: &[u8], retain: bool) {
        self(t, topic, payload, retain)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounts {
    pub arrivals: u64,
    pub admitted: u64,
    pub rejected: u64,
    pub parked: u64,
    pub departed: u64,
    /// Cars parked in a slot when the run ended.
    pub parked_at_end: u64,
    /// Admitted cars still driving to their slot when the run ended.
    pub en_route_at_end: u64,
}

impl SimCounts {
    /// Every admitted car has either left its slot or is still inside.
    pub fn conserved(&self) -> bool {
        self.admitted == self.departed + self.parked_at_end + self.en_route_at_end
    }
}

pub struct SimReport {
    pub config: ScenarioConfig,
    pub records: Vec<EventRecord>,
    pub metrics_csv: String,
    pub final_state: FacilityState,
    pub counts: SimCounts,
    pub broker_stats: BrokerStats,
    pub controller_stats: ClientStats,
    /// Broker retained store at the end of the run.
    pub retained: BTreeMap<String, Vec<u8>>,
    /// Latest payload per topic as seen by each subscriber.
    pub subscriber_views: Vec<BTreeMap<String, Vec<u8>>>,
    pub anomalies: usize,
}

const CONTROLLER: usize = 0;

fn conn_of(client: usize) -> ConnId {
    ConnId(client as u64 + 1)
}

fn client_of(conn: ConnId) -> usize {
    (conn.0 - 1) as usize
}

struct Rngs {
    arrivals: SimRng,
    dwell: SimRng,
    ir: SimRng,
    env: SimRng,
    gas: SimRng,
    network: SimRng,
}

struct Sim<'o> {
    cfg: ScenarioConfig,
    end: SimTime,
    now: SimTime,
    queue: EventQueue,
    rng: Rngs,
    records: Vec<EventRecord>,
    observer: &'o mut dyn SimObserver,

    controller: Controller,
    broker: Broker,
    clients: Vec<Client>,
    timers: Vec<Option<SimTime>>,
    accepted_at: BTreeMap<MessageId, SimTime>,
    /// Publish currently being handed to the broker, for the observer.
    last_accepted: Option<Publish>,
    views: Vec<BTreeMap<String, Vec<u8>>>,

    next_car: u64,
    slots: Vec<Option<u64>>,
    slot_generation: Vec<u64>,
    reported: Vec<bool>,
    en_route: BTreeSet<u64>,
    counts: SimCounts,

    bumps: PendingBumps,
    gas: BTreeMap<String, f64>,
    gas_updated: SimTime,
    fan_on: bool,
    gas_generation: u64,
    gate_generation: [u64; 2],
    buzzer_generation: u64,
}

/// Run a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimReport, ScenarioError> {
    run_scenario_with(cfg, &mut |_: f64, _: &str, _: &[u8], _: bool| {})
}

/// Run a scenario, reporting accepted publishes to `observer` as they occur.
pub fn run_scenario_with(
    cfg: &ScenarioConfig,
    observer: &mut dyn SimObserver,
) -> Result<SimReport, ScenarioError> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg.clone(), observer)?;
    sim.start();
    while let Some((t, _, event)) = sim.queue.pop() {
        if t > sim.end {
            break;
        }
        sim.now = t;
        sim.dispatch(event);
    }
    Ok(sim.finish())
}

impl<'o> Sim<'o> {
    fn new(cfg: ScenarioConfig, observer: &'o mut dyn SimObserver) -> Result<Self, ScenarioError> {
        let controller = Controller::new(cfg.facility.clone())?;
        let n = cfg.facility.total_slots;
        let broker = Broker::new(BrokerConfig {
            ack_timeout_s: cfg.network.ack_timeout_s,
            max_retries: cfg.network.max_retries,
        });
        let mut clients = Vec::new();
        for i in 0..=cfg.subscribers.count {
            let id = if i == CONTROLLER {
                "controller".to_string()
            } else {
                format!("dashboard-{i}")
            };
            clients.push(Client::new(ClientConfig {
                client_id: id,
                keep_alive_s: cfg.network.keep_alive_s,
                ack_timeout_s: cfg.network.ack_timeout_s,
                max_retries: cfg.network.max_retries,
            }));
        }
        let seed = cfg.seed;
        Ok(Sim {
            end: SimTime::from_secs(cfg.duration_s),
            now: SimTime(0),
            queue: EventQueue::default(),
            rng: Rngs {
                arrivals: stream(seed, Stream::Arrivals),
                dwell: stream(seed, Stream::Dwell),
                ir: stream(seed, Stream::Ir),
                env: stream(seed, Stream::Env),
                gas: stream(seed, Stream::Gas),
                network: stream(seed, Stream::Network),
            },
            records: Vec::new(),
            observer,
            controller,
            broker,
            timers: vec![None; clients.len() + 1],
            views: vec![BTreeMap::new(); clients.len()],
            clients,
            accepted_at: BTreeMap::new(),
            last_accepted: None,
            next_car: 0,
            slots: vec![None; n],
            slot_generation: vec![0; n],
            reported: vec![false; n],
            en_route: BTreeSet::new(),
            counts: SimCounts::default(),
            bumps: PendingBumps::new(),
            gas: BTreeMap::new(),
            gas_updated: SimTime(0),
            fan_on: false,
            gas_generation: 0,
            gate_generation: [0; 2],
            buzzer_generation: 0,
            cfg,
        })
    }

    fn t(&self) -> f64 {
        self.now.secs()
    }

    fn at(&mut self, delay_s: f64, event: SimEvent) {
        let t = self.now + SimTime::from_secs(delay_s);
        self.queue.push(t, event);
    }

    fn record(&mut self, r: EventRecord) {
        self.records.push(r);
    }

    fn start(&mut self) {
        for i in 0..self.clients.len() {
            self.clients[i].connect(0.0);
        }
        let filter = self.cfg.subscribers.filter.clone();
        let qos = self.cfg.subscribers.qos;
        for i in 1..self.clients.len() {
            self.clients[i]
                .subscribe(&[(filter.as_str(), qos)], 0.0)
                .expect("filter validated with the scenario");
        }
        for i in 0..self.clients.len() {
            self.flush_client(i);
        }
        if let Some(first) = next_arrival(&self.cfg.traffic, 0.0, &mut self.rng.arrivals) {
            self.queue.push(SimTime::from_secs(first), SimEvent::CarArrives);
        }
        for kind in [SensorKind::Env, SensorKind::Gas] {
            self.queue.push(
                SimTime(0),
                SimEvent::SensorSample {
                    kind,
                    periodic: true,
                    generation: 0,
                },
            );
        }
        for i in 0..self.cfg.injections.len() {
            let t = SimTime::from_secs(self.cfg.injections[i].t);
            self.queue.push(t, SimEvent::GasInjection(i));
        }
    }

    fn ambient_lux(&self) -> f64 {
        let hour = (self.t() / SECONDS_PER_HOUR).rem_euclid(24.0);
        self.cfg.peak_lux * (PI * (hour - 6.0) / 12.0).sin().max(0.0)
    }

    fn ir_read(&mut self, truth: bool) -> bool {
        let lux = self.ambient_lux();
        ir_detect(&self.cfg.ir, truth, lux, &mut self.rng.ir).expect("lux is never negative")
    }

    fn dispatch(&mut self, event: SimEvent) {
        match event {
            SimEvent::CarArrives => self.car_arrives(),
            SimEvent::EntranceRead { car } => self.entrance_read(car),
            SimEvent::CarParks { car } => self.car_parks(car),
            SimEvent::SlotRead {
                slot,
                generation,
                occupied,
            } => self.slot_read(slot, generation, occupied),
            SimEvent::CarDeparts { slot, car } => self.car_departs(slot, car),
            SimEvent::ExitRead { car } => self.exit_read(car),
            SimEvent::SensorSample {
                kind,
                periodic,
                generation,
            } => match kind {
                SensorKind::Env => {
                    self.env_sample();
                    if periodic {
                        self.at(
                            self.cfg.env_interval_s,
                            SimEvent::SensorSample {
                                kind,
                                periodic,
                                generation,
                            },
                        );
                    }
                }
                SensorKind::Gas => {
                    if periodic {
                        self.gas_sample();
                        self.at(
                            self.cfg.gas_interval_s,
                            SimEvent::SensorSample {
                                kind,
                                periodic,
                                generation,
                            },
                        );
                    } else if generation == self.gas_generation {
                        self.gas_sample();
                    }
                }
            },
            SimEvent::GasInjection(i) => self.gas_injection(i),
            SimEvent::GateTimeout { gate, generation } => {
                if self.gate_generation[gate_index(gate)] == generation {
                    self.control(ControllerEvent::GateTimeout(gate));
                }
            }
            SimEvent::BuzzerTimeout { generation } => {
                if self.buzzer_generation == generation {
                    self.control(ControllerEvent::BuzzerTimeout);
                }
            }
            SimEvent::PacketDelivery { to, bytes, origin } => self.deliver(to, bytes, origin),
            SimEvent::Timer(node) => self.timer(node),
        }
    }

    // ---- traffic ----

    fn car_arrives(&mut self) {
        let car = self.next_car;
        self.next_car += 1;
        self.counts.arrivals += 1;
        self.record(EventRecord::new(self.t(), EventKind::CarArrives).car(car));
        if let Some(next) = next_arrival(&self.cfg.traffic, self.t(), &mut self.rng.arrivals) {
            self.queue.push(SimTime::from_secs(next), SimEvent::CarArrives);
        }
        self.entrance_read(car);
    }

    fn entrance_read(&mut self, car: u64) {
        if !self.ir_read(true) {
            self.at(self.cfg.ir_repoll_s, SimEvent::EntranceRead { car });
            return;
        }
        let actions = self.control(ControllerEvent::EntranceDetect);
        if actions.contains(&ControlAction::OpenEntranceGate) {
            self.counts.admitted += 1;
            self.en_route.insert(car);
            let t = self.t();
            self.bumps.car_entered(&self.cfg.env, t);
            self.env_sample();
            self.at(self.cfg.gate_to_slot_travel_s, SimEvent::CarParks { car });
        } else {
            self.counts.rejected += 1;
            self.record(EventRecord::new(self.t(), EventKind::CarRejected).car(car));
        }
    }

    fn car_parks(&mut self, car: u64) {
        let slot = self
            .slots
            .iter()
            .position(Option::is_none)
            .expect("admission reserves a slot for every car");
        self.slots[slot] = Some(car);
        self.en_route.remove(&car);
        self.counts.parked += 1;
        self.record(EventRecord::new(self.t(), EventKind::CarParks).car(car).slot(slot));
        self.watch_slot(slot, true);
        let dwell = exponential(self.cfg.traffic.dwell_mean_s, &mut self.rng.dwell);
        self.at(dwell, SimEvent::CarDeparts { slot, car });
    }

    fn car_departs(&mut self, slot: usize, car: u64) {
        debug_assert_eq!(self.slots[slot], Some(car));
        self.slots[slot] = None;
        self.counts.departed += 1;
        self.record(EventRecord::new(self.t(), EventKind::CarDeparts).car(car).slot(slot));
        self.watch_slot(slot, false);
        self.at(self.cfg.gate_to_slot_travel_s, SimEvent::ExitRead { car });
    }

    fn exit_read(&mut self, car: u64) {
        if !self.ir_read(true) {
            self.at(self.cfg.ir_repoll_s, SimEvent::ExitRead { car });
            return;
        }
        self.control(ControllerEvent::ExitDetect);
        let t = self.t();
        self.bumps.car_left(&self.cfg.env, t);
        self.env_sample();
    }

    /// Start reading a slot sensor until it agrees with the new truth.
    fn watch_slot(&mut self, slot: usize, occupied: bool) {
        self.slot_generation[slot] += 1;
        let generation = self.slot_generation[slot];
        self.slot_read(slot, generation, occupied);
    }

    fn slot_read(&mut self, slot: usize, generation: u64, occupied: bool) {
        if generation != self.slot_generation[slot] {
            return;
        }
        if self.ir_read(occupied) != occupied {
            self.at(
                self.cfg.ir_repoll_s,
                SimEvent::SlotRead {
                    slot,
                    generation,
                    occupied,
                },
            );
            return;
        }
        if self.reported[slot] != occupied {
            self.reported[slot] = occupied;
            self.control(ControllerEvent::SlotUpdate { slot, occupied });
        }
    }

    // ---- environment and gas ----

    fn env_sample(&mut self) {
        let (temp_c, humidity_pct) =
            sample_env(&self.cfg.env, self.t(), &self.bumps, &mut self.rng.env);
        self.record(
            EventRecord::new(self.t(), EventKind::EnvSample)
                .value(temp_c)
                .value2(humidity_pct),
        );
        self.control(ControllerEvent::EnvReading {
            temp_c,
            humidity_pct,
        });
    }

    /// Bring the gas mix up to the current time, applying fan decay to the
    /// sensed level.
    fn advance_gas(&mut self) {
        let dt = (self.now.0 - self.gas_updated.0) as f64 / 1e6;
        self.gas_updated = self.now;
        if !self.fan_on || dt <= 0.0 || self.cfg.decay_rate_ppm_s <= 0.0 {
            return;
        }
        let level = self.gas_level();
        if level <= 0.0 {
            return;
        }
        let remaining = (level - self.cfg.decay_rate_ppm_s * dt).max(0.0);
        let scale = remaining / level;
        for ppm in self.gas.values_mut() {
            *ppm *= scale;
        }
    }

    fn gas_level(&self) -> f64 {
        self.cfg
            .mq2
            .response(&self.gas)
            .expect("injected gases are validated")
    }

    fn gas_sample(&mut self) {
        self.advance_gas();
        let ppm = sample_mq2(&self.cfg.mq2, &self.gas, &mut self.rng.gas)
            .expect("injected gases are validated");
        self.record(EventRecord::new(self.t(), EventKind::GasSample).value(ppm));
        self.control(ControllerEvent::GasReading { ppm });
    }

    fn gas_injection(&mut self, i: usize) {
        self.advance_gas();
        let inj = self.cfg.injections[i].clone();
        *self.gas.entry(inj.gas.clone()).or_default() += inj.ppm;
        self.record(
            EventRecord::new(self.t(), EventKind::GasInjection)
                .payload(inj.gas)
                .value(inj.ppm),
        );
        self.gas_sample();
        self.schedule_fan_off_read();
    }

    /// With the fan running the sensed level falls linearly, so the moment
    /// it reaches the switch-off level is known in advance; take a reading
    /// just after it.
    fn schedule_fan_off_read(&mut self) {
        self.gas_generation += 1;
        if !self.fan_on || self.cfg.decay_rate_ppm_s <= 0.0 {
            return;
        }
        let level = self.gas_level();
        let off = self.cfg.facility.fan_off_ppm();
        if level <= off {
            return;
        }
        let at = SimTime::after_secs(self.t() + (level - off) / self.cfg.decay_rate_ppm_s);
        self.queue.push(
            at,
            SimEvent::SensorSample {
                kind: SensorKind::Gas,
                periodic: false,
                generation: self.gas_generation,
            },
        );
    }

    // ---- controller ----

    fn control(&mut self, event: ControllerEvent) -> Vec<ControlAction> {
        let before = self.controller.anomalies().len();
        let actions = self
            .controller
            .handle(self.t(), &event)
            .expect("simulator only reports existing slots");
        let anomaly = self.controller.anomalies().get(before).map(|a| a.anomaly.describe());
        if let Some(text) = anomaly {
            self.record(EventRecord::new(self.t(), EventKind::Anomaly).payload(text));
        }
        for action in &actions {
            self.apply(action);
        }
        self.flush_client(CONTROLLER);
        actions
    }

    fn open_gate(&mut self, gate: Gate) {
        let i = gate_index(gate);
        self.gate_generation[i] += 1;
        let generation = self.gate_generation[i];
        self.record(EventRecord::new(self.t(), EventKind::GateOpen).payload(gate.as_str()));
        self.at(
            self.cfg.facility.gate_open_s,
            SimEvent::GateTimeout { gate, generation },
        );
    }

    fn apply(&mut self, action: &ControlAction) {
        match action {
            ControlAction::OpenEntranceGate => self.open_gate(Gate::Entrance),
            ControlAction::OpenExitGate => self.open_gate(Gate::Exit),
            ControlAction::CloseEntranceGate => self.record(
                EventRecord::new(self.t(), EventKind::GateClose).payload(Gate::Entrance.as_str()),
            ),
            ControlAction::CloseExitGate => self.record(
                EventRecord::new(self.t(), EventKind::GateClose).payload(Gate::Exit.as_str()),
            ),
            ControlAction::BuzzerOn => {
                self.buzzer_generation += 1;
                let generation = self.buzzer_generation;
                self.at(self.cfg.facility.buzzer_s, SimEvent::BuzzerTimeout { generation });
            }
            ControlAction::BuzzerOff | ControlAction::UpdateDisplay(_) => {}
            ControlAction::FanOn => {
                self.advance_gas();
                self.fan_on = true;
                let level = self.gas_level();
                self.record(EventRecord::new(self.t(), EventKind::FanOn).value(level));
                self.schedule_fan_off_read();
            }
            ControlAction::FanOff => {
                self.advance_gas();
                self.fan_on = false;
                self.gas_generation += 1;
                let level = self.gas_level();
                self.record(EventRecord::new(self.t(), EventKind::FanOff).value(level));
            }
            ControlAction::Publish {
                topic,
                payload,
                retained,
            } => {
                let qos = self.cfg.network.qos;
                let t = self.t();
                self.clients[CONTROLLER]
                    .publish(topic, payload.clone(), qos, *retained, t)
                    .expect("controller topics are valid");
            }
        }
    }

    // ---- network ----

    fn send(&mut self, to: Node, from_client: Option<usize>, packet: MqttPacket, origin: Option<MessageId>) {
        let bytes = encode_packet(&packet).expect("engines only emit encodable packets");
        if let MqttPacket::Publish(p) = &packet {
            let (kind, client) = match from_client {
                Some(c) => (EventKind::PublishSent, self.clients[c].client_id().to_string()),
                None => {
                    let Node::Client(c) = to else { unreachable!() };
                    (EventKind::PublishForwarded, self.clients[c].client_id().to_string())
                }
            };
            let mut rec = EventRecord::new(self.t(), kind)
                .topic(p.topic.clone())
                .bytes(bytes.len())
                .client(client.clone());
            if let Some(m) = origin {
                rec = rec.msg(m);
            }
            self.record(rec);
            if self.rng.network.random::<f64>() < self.cfg.network.drop_prob {
                self.record(
                    EventRecord::new(self.t(), EventKind::PacketDropped)
                        .topic(p.topic.clone())
                        .bytes(bytes.len())
                        .client(client),
                );
                return;
            }
        }
        self.at(
            self.cfg.network.latency_s,
            SimEvent::PacketDelivery { to, bytes, origin },
        );
    }

    fn flush_client(&mut self, i: usize) {
        while let Some(packet) = self.clients[i].poll_transmit() {
            self.send(Node::Broker(conn_of(i)), Some(i), packet, None);
        }
        self.arm_timer(i + 1, self.clients[i].next_deadline());
    }

    fn broker_outputs(&mut self, outputs: Vec<Output>) {
        for out in outputs {
            match out {
                Output::Send { to, packet, origin } => {
                    self.send(Node::Client(client_of(to)), None, packet, origin)
                }
                Output::Close { conn, reason } => {
                    log::warn!("t={:.3}s broker closed {conn}: {reason:?}", self.t())
                }
            }
        }
        for ev in self.broker.drain_events() {
            match ev {
                BrokerEvent::Accepted {
                    msg,
                    client_id,
                    topic,
                    bytes,
                } => {
                    self.accepted_at.insert(msg, self.now);
                    if let Some(p) = self.last_accepted.take() {
                        self.observer.on_publish(self.t(), &p.topic, &p.payload, p.retain);
                    }
                    self.record(
                        EventRecord::new(self.t(), EventKind::PublishAccepted)
                            .topic(topic)
                            .bytes(bytes)
                            .client(client_id)
                            .msg(msg),
                    );
                }
                BrokerEvent::ErrorCorrected { msg, client_id } => self.record(
                    EventRecord::new(self.t(), EventKind::ErrorCorrected)
                        .client(client_id)
                        .msg(msg),
                ),
                BrokerEvent::ErrorUncorrected { msg, client_id } => self.record(
                    EventRecord::new(self.t(), EventKind::ErrorUncorrected)
                        .client(client_id)
                        .msg(msg),
                ),
                BrokerEvent::Connected { .. } | BrokerEvent::Disconnected { .. } => {}
            }
        }
        self.arm_timer(0, self.broker.next_deadline());
    }

    fn deliver(&mut self, to: Node, bytes: Vec<u8>, origin: Option<MessageId>) {
        let packet = match decode_packet(&bytes) {
            Ok(Decoded::Packet(p, used)) if used == bytes.len() => p,
            other => panic!("simulated link corrupted a frame: {other:?}"),
        };
        let now = self.t();
        match to {
            Node::Broker(conn) => {
                if let MqttPacket::Publish(p) = &packet {
                    self.last_accepted = Some(p.clone());
                }
                let outputs = self.broker.handle(conn, packet, now);
                self.broker_outputs(outputs);
                self.last_accepted = None;
            }
            Node::Client(i) => {
                self.clients[i].handle(packet, now);
                self.client_events(i, bytes.len(), origin);
                self.flush_client(i);
            }
        }
    }

    fn client_events(&mut self, i: usize, bytes: usize, origin: Option<MessageId>) {
        while let Some(ev) = self.clients[i].poll_event() {
            let client = self.clients[i].client_id().to_string();
            match ev {
                ClientEvent::Message(p) => {
                    let mut rec = EventRecord::new(self.t(), EventKind::PublishDelivered)
                        .topic(p.topic.clone())
                        .bytes(bytes)
                        .client(client);
                    // Retained replays on subscribe carry no acceptance time
                    // and are logged without a message id.
                    if let Some((m, accepted)) =
                        origin.and_then(|m| self.accepted_at.get(&m).map(|a| (m, *a)))
                    {
                        let elapsed = self.now.0.checked_sub(accepted.0);
                        let d = elapsed.expect("deliveries follow acceptance");
                        rec = rec.msg(m).value(SimTime(d).secs());
                    }
                    self.record(rec);
                    self.views[i].insert(p.topic, p.payload);
                }
                ClientEvent::Acked { retries, .. } if retries > 0 => self.record(
                    EventRecord::new(self.t(), EventKind::ErrorCorrected).client(client),
                ),
                ClientEvent::Abandoned(p) => self.record(
                    EventRecord::new(self.t(), EventKind::ErrorUncorrected)
                        .topic(p.topic)
                        .client(client),
                ),
                _ => {}
            }
        }
    }

    /// Timer slot 0 is the broker, slot `i + 1` is client `i`.
    fn arm_timer(&mut self, slot: usize, deadline: Option<f64>) {
        let Some(d) = deadline else { return };
        // Retransmission fires strictly after the deadline.
        let at = SimTime::after_secs(d).max(SimTime(self.now.0 + 1));
        if self.timers[slot].is_some_and(|cur| cur <= at && cur >= self.now) {
            return;
        }
        self.timers[slot] = Some(at);
        self.queue.push(at, SimEvent::Timer(slot));
    }

    fn timer(&mut self, slot: usize) {
        if self.timers[slot] != Some(self.now) {
            return;
        }
        self.timers[slot] = None;
        let now = self.t();
        if slot == 0 {
            let outputs = self.broker.redeliver(now);
            self.broker_outputs(outputs);
        } else {
            let i = slot - 1;
            self.clients[i].tick(now);
            self.client_events(i, 0, None);
            self.flush_client(i);
        }
    }

    fn finish(mut self) -> SimReport {
        self.now = self.end;
        self.record(EventRecord::new(self.t(), EventKind::RunEnd));
        self.counts.parked_at_end = self.slots.iter().filter(|s| s.is_some()).count() as u64;
        self.counts.en_route_at_end = self.en_route.len() as u64;
        let metrics_csv = telemetry::aggregate(&self.records, self.cfg.metrics_window_s)
            .expect("window validated with the scenario");
        let retained = self
            .broker
            .retained()
            .iter()
            .map(|p| (p.topic.clone(), p.payload.clone()))
            .collect();
        SimReport {
            records: self.records,
            metrics_csv,
            final_state: self.controller.state().clone(),
            counts: self.counts,
            broker_stats: self.broker.stats(),
            controller_stats: self.clients[CONTROLLER].stats(),
            retained,
            subscriber_views: self.views.split_off(1),
            anomalies: self.controller.anomalies().len(),
            config: self.cfg,
        }
    }
}

fn gate_index(gate: Gate) -> usize {
    match gate {
        Gate::Entrance => 0,
        Gate::Exit => 1,
    }
}
