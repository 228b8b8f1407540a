//! Blocking TCP transport for [`Broker`] and [`Client`].
//!
//! Each accepted socket gets a reader thread that decodes frames and hands
//! them to a single broker loop over a channel, so broker state is only ever
//! touched from one thread.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{Broker, BrokerConfig, BrokerEvent, Client, ClientConfig, ClientEvent, ConnId, Output};
use crate::mqtt::{
    decode_packet, encode_packet, ConnectReturnCode, Decoded, MqttPacket, ProtocolError, Publish,
    QoS, SubAckCode,
};

const TICK: Duration = Duration::from_millis(100);

enum Msg {
    Opened(ConnId, TcpStream),
    Packet(ConnId, MqttPacket),
    Invalid(ConnId, ProtocolError),
    Lost(ConnId),
    Shutdown,
}

/// Incremental frame reader over any byte stream.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader {
            inner,
            buf: Vec::with_capacity(4096),
        }
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }

    /// Next complete packet, `Ok(None)` on clean EOF.
    pub fn next_packet(&mut self) -> Result<Option<MqttPacket>, TransportError> {
        loop {
            if !self.buf.is_empty() {
                if let Decoded::Packet(p, used) = decode_packet(&self.buf)? {
                    self.buf.drain(..used);
                    return Ok(Some(p));
                }
            }
            let mut chunk = [0u8; 4096];
            let n = self.inner.read(&mut chunk)?;
            if n == 0 {
                if self.buf.is_empty() {
                    return Ok(None);
                }
                return Err(ProtocolError::Truncated("connection closed mid-frame").into());
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("broker refused connection: {0:?}")]
    Refused(ConnectReturnCode),
    #[error("connection closed by broker")]
    Closed,
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
}

impl TransportError {
    pub fn is_protocol(&self) -> bool {
        matches!(self, TransportError::Protocol(_) | TransportError::Refused(_))
    }
}

fn write_packet(stream: &mut TcpStream, packet: &MqttPacket) -> io::Result<()> {
    let bytes = encode_packet(packet).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    stream.write_all(&bytes)
}

pub struct BrokerServer {
    listener: TcpListener,
    cfg: BrokerConfig,
}

/// A broker running on background threads.
pub struct BrokerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    tx: Sender<Msg>,
    accept: Option<JoinHandle<()>>,
    core: Option<JoinHandle<Broker>>,
}

impl BrokerServer {
    pub fn bind(addr: impl ToSocketAddrs, cfg: BrokerConfig) -> io::Result<Self> {
        Ok(BrokerServer {
            listener: TcpListener::bind(addr)?,
            cfg,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn spawn(self) -> io::Result<BrokerHandle> {
        let addr = self.listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let accept = {
            let stop = stop.clone();
            let tx = tx.clone();
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, tx, stop))
        };
        let cfg = self.cfg;
        let core = thread::spawn(move || broker_loop(Broker::new(cfg), rx));
        Ok(BrokerHandle {
            addr,
            stop,
            tx,
            accept: Some(accept),
            core: Some(core),
        })
    }

    /// Serve until the process exits.
    pub fn run(self) -> io::Result<()> {
        let handle = self.spawn()?;
        if let Some(core) = handle.core.as_ref() {
            while !core.is_finished() {
                thread::sleep(Duration::from_millis(500));
            }
        }
        Ok(())
    }
}

impl BrokerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting, close all connections and return the final broker
    /// state.
    pub fn shutdown(mut self) -> Broker {
        self.stop_threads().expect("broker loop panicked")
    }

    fn stop_threads(&mut self) -> Option<Broker> {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.tx.send(Msg::Shutdown);
        // Unblock accept().
        let _ = TcpStream::connect(self.addr);
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
        self.core.take().and_then(|c| c.join().ok())
    }
}

impl Drop for BrokerHandle {
    fn drop(&mut self) {
        if self.core.is_some() {
            self.stop_threads();
        }
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Msg>, stop: Arc<AtomicBool>) {
    let mut next = 1u64;
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let conn = ConnId(next);
        next += 1;
        let _ = stream.set_nodelay(true);
        let writer = match stream.try_clone() {
            Ok(w) => w,
            Err(e) => {
                log::warn!("{conn}: cannot clone socket: {e}");
                continue;
            }
        };
        if tx.send(Msg::Opened(conn, writer)).is_err() {
            break;
        }
        let tx = tx.clone();
        thread::spawn(move || read_loop(conn, stream, tx));
    }
}

fn read_loop(conn: ConnId, stream: TcpStream, tx: Sender<Msg>) {
    let mut reader = FrameReader::new(stream);
    loop {
        let msg = match reader.next_packet() {
            Ok(Some(p)) => Msg::Packet(conn, p),
            Ok(None) | Err(TransportError::Io(_)) => Msg::Lost(conn),
            Err(TransportError::Protocol(e)) => Msg::Invalid(conn, e),
            Err(_) => Msg::Lost(conn),
        };
        let last = !matches!(msg, Msg::Packet(..));
        if tx.send(msg).is_err() || last {
            return;
        }
    }
}

fn broker_loop(mut broker: Broker, rx: Receiver<Msg>) -> Broker {
    let start = Instant::now();
    let mut streams: BTreeMap<ConnId, TcpStream> = BTreeMap::new();
    let mut last_sweep = 0.0;
    loop {
        let msg = rx.recv_timeout(TICK);
        let now = start.elapsed().as_secs_f64();
        let outputs = match msg {
            Ok(Msg::Opened(conn, s)) => {
                log::debug!("{conn}: accepted {:?}", s.peer_addr().ok());
                streams.insert(conn, s);
                Vec::new()
            }
            Ok(Msg::Packet(conn, p)) => broker.handle(conn, p, now),
            Ok(Msg::Invalid(conn, e)) => broker.protocol_error(conn, &e),
            Ok(Msg::Lost(conn)) => {
                broker.connection_lost(conn);
                if let Some(s) = streams.remove(&conn) {
                    let _ = s.shutdown(Shutdown::Both);
                }
                Vec::new()
            }
            Ok(Msg::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
            Err(RecvTimeoutError::Timeout) => Vec::new(),
        };
        let mut outputs = outputs;
        outputs.extend(broker.redeliver(now));
        if now - last_sweep >= 1.0 {
            last_sweep = now;
            for (conn, client) in broker.keepalive_sweep(now) {
                log::info!("{client}: keep-alive expired");
                outputs.push(Output::Close {
                    conn,
                    reason: super::CloseReason::KeepAliveExpired,
                });
            }
        }
        for out in outputs {
            match out {
                Output::Send { to, packet, .. } => {
                    let Some(s) = streams.get_mut(&to) else { continue };
                    if let Err(e) = write_packet(s, &packet) {
                        log::debug!("{to}: write failed: {e}");
                        broker.connection_lost(to);
                        streams.remove(&to);
                    }
                }
                Output::Close { conn, reason } => {
                    log::debug!("{conn}: closing ({reason:?})");
                    if let Some(s) = streams.remove(&conn) {
                        let _ = s.shutdown(Shutdown::Both);
                    }
                }
            }
        }
        for ev in broker.drain_events() {
            match ev {
                BrokerEvent::Connected { conn, client_id } => log::info!("{conn}: {client_id} connected"),
                BrokerEvent::Disconnected { client_id, reason, .. } => {
                    log::info!("{client_id} disconnected ({reason:?})")
                }
                BrokerEvent::Accepted { topic, bytes, .. } => log::debug!("publish {topic} ({bytes} B)"),
                BrokerEvent::ErrorCorrected { .. } | BrokerEvent::ErrorUncorrected { .. } => {}
            }
        }
    }
    for (_, s) in streams {
        let _ = s.shutdown(Shutdown::Both);
    }
    broker
}

/// Blocking client over TCP, driving a [`Client`].
pub struct TcpClient {
    client: Client,
    writer: TcpStream,
    incoming: Receiver<Result<MqttPacket, TransportError>>,
    pushback: Vec<ClientEvent>,
    start: Instant,
    closed: bool,
}

impl TcpClient {
    /// Connect and complete the CONNECT/CONNACK handshake.
    pub fn connect(
        addr: impl ToSocketAddrs,
        cfg: ClientConfig,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
        let mut last_err = io::Error::new(io::ErrorKind::AddrNotAvailable, "no address");
        let mut stream = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last_err = e,
            }
        }
        let stream = stream.ok_or(last_err)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut frames = FrameReader::new(reader);
            loop {
                let item = match frames.next_packet() {
                    Ok(Some(p)) => Ok(p),
                    Ok(None) => Err(TransportError::Closed),
                    Err(e) => Err(e),
                };
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    return;
                }
            }
        });
        let mut this = TcpClient {
            client: Client::new(cfg),
            writer: stream,
            incoming: rx,
            pushback: Vec::new(),
            start: Instant::now(),
            closed: false,
        };
        this.client.connect(0.0);
        this.flush()?;
        let deadline = Instant::now() + timeout;
        loop {
            match this.next_event(deadline)? {
                Some(ClientEvent::Connected) => return Ok(this),
                Some(ClientEvent::Rejected(code)) => return Err(TransportError::Refused(code)),
                Some(_) => {}
                None => return Err(TransportError::Timeout("CONNACK")),
            }
        }
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn flush(&mut self) -> Result<(), TransportError> {
        while let Some(p) = self.client.poll_transmit() {
            write_packet(&mut self.writer, &p)?;
        }
        Ok(())
    }

    pub fn publish(
        &mut self,
        topic: &str,
        payload: impl Into<Vec<u8>>,
        qos: QoS,
        retain: bool,
    ) -> Result<(), TransportError> {
        let now = self.now();
        self.client
            .publish(topic, payload, qos, retain, now)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        self.flush()
    }

    /// Subscribe and wait for the SUBACK.
    pub fn subscribe(
        &mut self,
        filter: &str,
        qos: QoS,
        timeout: Duration,
    ) -> Result<Vec<SubAckCode>, TransportError> {
        let now = self.now();
        let id = self
            .client
            .subscribe(&[(filter, qos)], now)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        self.flush()?;
        let deadline = Instant::now() + timeout;
        let mut early = Vec::new();
        let result = loop {
            match self.next_event(deadline)? {
                Some(ClientEvent::Subscribed { packet_id, granted }) if packet_id == id => {
                    break Ok(granted)
                }
                Some(ev) => early.push(ev),
                None => break Err(TransportError::Timeout("SUBACK")),
            }
        };
        // Keep anything that raced ahead of the SUBACK for the next poll.
        for ev in early.into_iter().rev() {
            self.pushback.push(ev);
        }
        result
    }

    /// Wait up to `timeout` for the next application message.
    pub fn poll(&mut self, timeout: Duration) -> Result<Option<Publish>, TransportError> {
        let deadline = Instant::now() + timeout;
        loop {
            match self.next_event(deadline)? {
                Some(ClientEvent::Message(p)) => return Ok(Some(p)),
                Some(_) => {}
                None => return Ok(None),
            }
        }
    }

    /// Wait until every QoS 1 publish has been acknowledged.
    pub fn wait_acked(&mut self, timeout: Duration) -> Result<(), TransportError> {
        let deadline = Instant::now() + timeout;
        while self.client.inflight_len() > 0 {
            if self.next_event(deadline)?.is_none() && Instant::now() >= deadline {
                return Err(TransportError::Timeout("PUBACK"));
            }
        }
        Ok(())
    }

    fn next_event(&mut self, deadline: Instant) -> Result<Option<ClientEvent>, TransportError> {
        if let Some(ev) = self.pushback.pop() {
            return Ok(Some(ev));
        }
        loop {
            if let Some(ev) = self.client.poll_event() {
                return Ok(Some(ev));
            }
            if self.closed {
                return Err(TransportError::Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            let wait = (deadline - now).min(TICK);
            match self.incoming.recv_timeout(wait) {
                Ok(Ok(p)) => {
                    let t = self.now();
                    self.client.handle(p, t);
                }
                Ok(Err(e)) => {
                    self.closed = true;
                    return Err(e);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    self.closed = true;
                    return Err(TransportError::Closed);
                }
            }
            let t = self.now();
            self.client.tick(t);
            self.flush()?;
        }
    }

    pub fn disconnect(mut self) -> Result<(), TransportError> {
        let t = self.now();
        self.client.disconnect(t);
        self.flush()?;
        let _ = self.writer.shutdown(Shutdown::Both);
        Ok(())
    }
}
