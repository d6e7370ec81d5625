use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::wire::{self, Envelope, Payload, PayloadKind, PayloadRef, WireError};
use super::{MsgError, RankId, ENV_RANK, ENV_RECV_TIMEOUT_MS, ENV_WORLD_ENDPOINTS};

pub const DEFAULT_RECV_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy)]
pub struct CommOptions {
    /// How long `recv` waits before reporting a suspected deadlock.
    pub recv_timeout: Duration,
    /// Deadline for the whole launch handshake.
    pub connect_timeout: Duration,
}

impl Default for CommOptions {
    fn default() -> Self {
        Self {
            recv_timeout: DEFAULT_RECV_TIMEOUT,
            connect_timeout: DEFAULT_CONNECT_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
}

/// One message observed by a traced communicator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub direction: Direction,
    pub peer: u32,
    pub tag: u32,
    pub kind: PayloadKind,
    pub count: usize,
}

#[derive(Default)]
struct MailState {
    queues: Vec<VecDeque<Envelope>>,
    closed: Vec<Option<String>>,
}

/// Per-source queues filled by the reader threads.
struct Mailbox {
    state: Mutex<MailState>,
    arrived: Condvar,
}

impl Mailbox {
    fn new(world_size: usize) -> Self {
        Self {
            state: Mutex::new(MailState {
                queues: vec![VecDeque::new(); world_size],
                closed: vec![None; world_size],
            }),
            arrived: Condvar::new(),
        }
    }

    fn push(&self, source: usize, env: Envelope) {
        self.state.lock().unwrap().queues[source].push_back(env);
        self.arrived.notify_all();
    }

    fn close(&self, source: usize, reason: String) {
        self.state.lock().unwrap().closed[source] = Some(reason);
        self.arrived.notify_all();
    }
}

/// A rank's view of the world: its id, the world size and one duplex stream
/// to every other rank.
///
/// Incoming frames are drained by one reader thread per peer into per-source
/// queues; `recv` picks the oldest queued frame with the requested tag, so
/// other tags wait in place and order within a tag is preserved.
pub struct Communicator {
    rank: RankId,
    world_size: u32,
    links: Vec<Option<Mutex<TcpStream>>>,
    mailbox: Arc<Mailbox>,
    recv_timeout: Duration,
    trace: Mutex<Option<Vec<TraceEvent>>>,
}

impl std::fmt::Debug for Communicator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Communicator")
            .field("rank", &self.rank)
            .field("world_size", &self.world_size)
            .finish()
    }
}

impl Communicator {
    /// Joins the world described by `RANK` and `WORLD_ENDPOINTS`.
    pub fn from_env() -> Result<Self, MsgError> {
        let rank: u32 = std::env::var(ENV_RANK)
            .map_err(|_| MsgError::Env(format!("{ENV_RANK} is not set")))?
            .parse()
            .map_err(|e| MsgError::Env(format!("{ENV_RANK}: {e}")))?;
        let endpoints = std::env::var(ENV_WORLD_ENDPOINTS)
            .map_err(|_| MsgError::Env(format!("{ENV_WORLD_ENDPOINTS} is not set")))?;
        let endpoints: Vec<String> = endpoints.split(',').map(str::to_owned).collect();
        let mut opts = CommOptions::default();
        if let Ok(ms) = std::env::var(ENV_RECV_TIMEOUT_MS) {
            let ms: u64 = ms
                .parse()
                .map_err(|e| MsgError::Env(format!("{ENV_RECV_TIMEOUT_MS}: {e}")))?;
            opts.recv_timeout = Duration::from_millis(ms);
        }
        Self::connect(rank, &endpoints, opts)
    }

    /// Runs the launch handshake.
    ///
    /// `endpoints[0]` is where rank 0 listens; `endpoints[r]` is the bind
    /// address of rank `r` (port 0 picks an ephemeral port). Workers announce
    /// themselves to rank 0, receive the resolved endpoint table, connect to
    /// every lower-numbered worker and report ready. Rank 0 releases everyone
    /// once the full mesh is up.
    pub fn connect(rank: u32, endpoints: &[String], opts: CommOptions) -> Result<Self, MsgError> {
        let world_size = u32::try_from(endpoints.len())
            .ok()
            .filter(|&w| w >= 1)
            .ok_or_else(|| MsgError::Handshake("empty endpoint table".into()))?;
        if rank >= world_size {
            return Err(MsgError::RankOutOfRange { rank, world_size });
        }
        let deadline = Instant::now() + opts.connect_timeout;
        let streams = if rank == 0 {
            handshake_master(endpoints, deadline)?
        } else {
            handshake_worker(rank, endpoints, deadline)?
        };
        Self::from_streams(RankId(rank), streams, opts)
    }

    fn from_streams(
        rank: RankId,
        streams: Vec<Option<TcpStream>>,
        opts: CommOptions,
    ) -> Result<Self, MsgError> {
        let world_size = streams.len();
        let mailbox = Arc::new(Mailbox::new(world_size));
        let mut links = Vec::with_capacity(world_size);
        for (peer, stream) in streams.into_iter().enumerate() {
            let Some(stream) = stream else {
                links.push(None);
                continue;
            };
            stream.set_read_timeout(None)?;
            stream.set_nodelay(true)?;
            let reader = stream.try_clone()?;
            let mailbox = Arc::clone(&mailbox);
            thread::Builder::new()
                .name(format!("rank{}-from{peer}", rank.0))
                .spawn(move || read_loop(reader, peer, rank, &mailbox))?;
            links.push(Some(Mutex::new(stream)));
        }
        Ok(Self {
            rank,
            world_size: world_size as u32,
            links,
            mailbox,
            recv_timeout: opts.recv_timeout,
            trace: Mutex::new(None),
        })
    }

    pub fn rank(&self) -> RankId {
        self.rank
    }

    pub fn world_size(&self) -> u32 {
        self.world_size
    }

    pub fn set_recv_timeout(&mut self, timeout: Duration) {
        self.recv_timeout = timeout;
    }

    /// Starts recording every send and receive.
    pub fn enable_trace(&self) {
        *self.trace.lock().unwrap() = Some(Vec::new());
    }

    pub fn trace(&self) -> Vec<TraceEvent> {
        self.trace.lock().unwrap().clone().unwrap_or_default()
    }

    fn record(&self, direction: Direction, peer: RankId, tag: u32, kind: PayloadKind, count: usize) {
        if let Some(events) = self.trace.lock().unwrap().as_mut() {
            events.push(TraceEvent {
                direction,
                peer: peer.0,
                tag,
                kind,
                count,
            });
        }
    }

    fn peer_index(&self, peer: RankId) -> Result<usize, MsgError> {
        if peer.0 >= self.world_size {
            return Err(MsgError::RankOutOfRange {
                rank: peer.0,
                world_size: self.world_size,
            });
        }
        if peer == self.rank {
            return Err(MsgError::SelfMessage(peer.0));
        }
        Ok(peer.0 as usize)
    }

    /// Blocking send: returns once the whole frame is written to the stream.
    pub fn send<'a>(
        &self,
        dest: RankId,
        tag: u32,
        payload: impl Into<PayloadRef<'a>>,
    ) -> Result<(), MsgError> {
        let payload = payload.into();
        let idx = self.peer_index(dest)?;
        let link = self.links[idx].as_ref().expect("link to every peer");
        let mut stream = link.lock().unwrap();
        wire::write_envelope(&mut *stream, tag, self.rank, dest, payload).map_err(|e| {
            MsgError::Transport {
                peer: dest.0,
                detail: e.to_string(),
            }
        })?;
        self.record(Direction::Sent, dest, tag, payload.kind(), payload.len());
        Ok(())
    }

    /// Blocks for the oldest message from `source` carrying `tag`.
    pub fn recv(&self, source: RankId, tag: u32) -> Result<Payload, MsgError> {
        let idx = self.peer_index(source)?;
        let deadline = Instant::now() + self.recv_timeout;
        let mut state = self.mailbox.state.lock().unwrap();
        loop {
            let queue = &mut state.queues[idx];
            if let Some(pos) = queue.iter().position(|e| e.tag == tag) {
                let env = queue.remove(pos).unwrap();
                drop(state);
                self.record(
                    Direction::Received,
                    source,
                    tag,
                    env.payload.kind(),
                    env.payload.len(),
                );
                return Ok(env.payload);
            }
            if let Some(reason) = &state.closed[idx] {
                return Err(MsgError::Transport {
                    peer: source.0,
                    detail: reason.clone(),
                });
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(MsgError::DeadlockSuspected {
                    from: source.0,
                    tag,
                    waited: self.recv_timeout,
                });
            }
            state = self.mailbox.arrived.wait_timeout(state, deadline - now).unwrap().0;
        }
    }

    pub fn send_i64(&self, dest: RankId, tag: u32, value: i64) -> Result<(), MsgError> {
        self.send(dest, tag, value)
    }

    pub fn send_f64s(&self, dest: RankId, tag: u32, values: &[f64]) -> Result<(), MsgError> {
        self.send(dest, tag, values)
    }

    pub fn recv_i64(&self, source: RankId, tag: u32) -> Result<i64, MsgError> {
        match self.recv(source, tag)? {
            Payload::Int64(v) => Ok(v),
            other => Err(kind_mismatch(source, tag, PayloadKind::Int64Scalar, &other)),
        }
    }

    pub fn recv_f64s(&self, source: RankId, tag: u32) -> Result<Vec<f64>, MsgError> {
        match self.recv(source, tag)? {
            Payload::Float64(v) => Ok(v),
            other => Err(kind_mismatch(source, tag, PayloadKind::Float64Array, &other)),
        }
    }
}

impl Drop for Communicator {
    fn drop(&mut self) {
        // Half-close: peers still drain what was sent, then see end of stream.
        for link in self.links.iter().flatten() {
            if let Ok(stream) = link.lock() {
                let _ = stream.shutdown(Shutdown::Write);
            }
        }
    }
}

fn kind_mismatch(source: RankId, tag: u32, expected: PayloadKind, got: &Payload) -> MsgError {
    MsgError::KindMismatch {
        from: source.0,
        tag,
        expected,
        got: got.kind(),
    }
}

fn read_loop(mut stream: TcpStream, peer: usize, me: RankId, mailbox: &Mailbox) {
    loop {
        match wire::read_envelope(&mut stream) {
            Ok(env) if env.source.0 as usize != peer || env.dest != me => {
                mailbox.close(
                    peer,
                    format!(
                        "misaddressed frame {} -> {} on the link from rank {peer}",
                        env.source.0, env.dest.0
                    ),
                );
                return;
            }
            Ok(env) => mailbox.push(peer, env),
            Err(WireError::Closed) => {
                mailbox.close(peer, "connection closed by peer".into());
                return;
            }
            Err(e) => {
                mailbox.close(peer, e.to_string());
                return;
            }
        }
    }
}

/// Builds a fully connected world of `world_size` ranks inside this process,
/// over loopback streams. Index `r` of the result is rank `r`.
pub fn loopback_world(world_size: u32, opts: CommOptions) -> Result<Vec<Communicator>, MsgError> {
    if world_size == 0 {
        return Err(MsgError::Handshake("world size must be at least 1".into()));
    }
    let port = TcpListener::bind("127.0.0.1:0")?.local_addr()?.port();
    let mut endpoints = vec![format!("127.0.0.1:{port}")];
    endpoints.extend((1..world_size).map(|_| "127.0.0.1:0".to_string()));
    let handles: Vec<_> = (0..world_size)
        .map(|rank| {
            let endpoints = endpoints.clone();
            thread::spawn(move || Communicator::connect(rank, &endpoints, opts))
        })
        .collect();
    handles
        .into_iter()
        .map(|h| h.join().expect("handshake thread panicked"))
        .collect()
}

fn handshake_master(
    endpoints: &[String],
    deadline: Instant,
) -> Result<Vec<Option<TcpStream>>, MsgError> {
    let world_size = endpoints.len();
    let mut streams: Vec<Option<TcpStream>> = (0..world_size).map(|_| None).collect();
    if world_size == 1 {
        return Ok(streams);
    }
    let listener = TcpListener::bind(&endpoints[0])
        .map_err(|e| MsgError::Handshake(format!("rank 0 cannot listen on {}: {e}", endpoints[0])))?;
    let mut table = vec![listener.local_addr()?.to_string(); world_size];
    for _ in 1..world_size {
        let mut stream = accept_until(&listener, deadline)?;
        let line = read_line(&mut stream, deadline)?;
        let (rank, addr) = match line.split_whitespace().collect::<Vec<_>>()[..] {
            ["HELLO", rank, addr] => (parse_rank(rank, world_size)?, addr.to_string()),
            _ => return Err(MsgError::Handshake(format!("unexpected greeting {line:?}"))),
        };
        if rank == 0 || streams[rank].is_some() {
            return Err(MsgError::Handshake(format!("duplicate or invalid rank {rank}")));
        }
        table[rank] = addr;
        streams[rank] = Some(stream);
    }
    let table_line = format!("TABLE {}\n", table.join(" "));
    for stream in streams.iter_mut().flatten() {
        stream.write_all(table_line.as_bytes())?;
    }
    for (rank, stream) in streams.iter_mut().enumerate().skip(1) {
        let stream = stream.as_mut().unwrap();
        let line = read_line(stream, deadline)?;
        if line != "READY" {
            return Err(MsgError::Handshake(format!(
                "rank {rank} sent {line:?} instead of READY"
            )));
        }
    }
    for stream in streams.iter_mut().flatten() {
        stream.write_all(b"GO\n")?;
    }
    Ok(streams)
}

fn handshake_worker(
    rank: u32,
    endpoints: &[String],
    deadline: Instant,
) -> Result<Vec<Option<TcpStream>>, MsgError> {
    let world_size = endpoints.len();
    let me = rank as usize;
    let listener = TcpListener::bind(&endpoints[me])
        .map_err(|e| MsgError::Handshake(format!("rank {rank} cannot listen on {}: {e}", endpoints[me])))?;
    let my_addr = listener.local_addr()?;
    let mut streams: Vec<Option<TcpStream>> = (0..world_size).map(|_| None).collect();

    let mut master = connect_until(&endpoints[0], deadline)?;
    master.write_all(format!("HELLO {rank} {my_addr}\n").as_bytes())?;
    let line = read_line(&mut master, deadline)?;
    let table: Vec<String> = match line.strip_prefix("TABLE ") {
        Some(rest) => rest.split_whitespace().map(str::to_owned).collect(),
        None => return Err(MsgError::Handshake(format!("expected TABLE, got {line:?}"))),
    };
    if table.len() != world_size {
        return Err(MsgError::Handshake(format!(
            "endpoint table has {} entries, expected {world_size}",
            table.len()
        )));
    }
    for (peer, addr) in table.iter().enumerate().take(me).skip(1) {
        let mut stream = connect_until(addr, deadline)?;
        stream.write_all(format!("PEER {rank}\n").as_bytes())?;
        streams[peer] = Some(stream);
    }
    for _ in me + 1..world_size {
        let mut stream = accept_until(&listener, deadline)?;
        let line = read_line(&mut stream, deadline)?;
        let peer = match line.split_whitespace().collect::<Vec<_>>()[..] {
            ["PEER", peer] => parse_rank(peer, world_size)?,
            _ => return Err(MsgError::Handshake(format!("unexpected peer greeting {line:?}"))),
        };
        if peer <= me || streams[peer].is_some() {
            return Err(MsgError::Handshake(format!("unexpected connection from rank {peer}")));
        }
        streams[peer] = Some(stream);
    }
    master.write_all(b"READY\n")?;
    let line = read_line(&mut master, deadline)?;
    if line != "GO" {
        return Err(MsgError::Handshake(format!("expected GO, got {line:?}")));
    }
    streams[0] = Some(master);
    Ok(streams)
}

fn parse_rank(text: &str, world_size: usize) -> Result<usize, MsgError> {
    text.parse::<usize>()
        .ok()
        .filter(|&r| r < world_size)
        .ok_or_else(|| MsgError::Handshake(format!("bad rank {text:?}")))
}

fn remaining(deadline: Instant) -> Result<Duration, MsgError> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
        .ok_or_else(|| MsgError::Handshake("handshake timed out".into()))
}

fn accept_until(listener: &TcpListener, deadline: Instant) -> Result<TcpStream, MsgError> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                remaining(deadline)?;
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn connect_until(addr: &str, deadline: Instant) -> Result<TcpStream, MsgError> {
    let mut last_err = None;
    loop {
        if let Ok(addrs) = addr.to_socket_addrs() {
            for sock in addrs {
                let budget = remaining(deadline).map_err(|_| unreachable_err(addr, &last_err))?;
                match TcpStream::connect_timeout(&sock, budget.min(Duration::from_secs(1))) {
                    Ok(s) => return Ok(s),
                    Err(e) => last_err = Some(e),
                }
            }
        }
        remaining(deadline).map_err(|_| unreachable_err(addr, &last_err))?;
        thread::sleep(Duration::from_millis(10));
    }
}

fn unreachable_err(addr: &str, last: &Option<io::Error>) -> MsgError {
    let why = last.as_ref().map_or("unresolvable".to_string(), |e| e.to_string());
    MsgError::Handshake(format!("cannot reach {addr}: {why}"))
}

/// Reads one `\n`-terminated handshake line byte by byte so that nothing past
/// it is consumed from the stream.
fn read_line(stream: &mut TcpStream, deadline: Instant) -> Result<String, MsgError> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        stream.set_read_timeout(Some(remaining(deadline)?))?;
        match stream.read(&mut byte) {
            Ok(0) => return Err(MsgError::Handshake("peer closed during handshake".into())),
            Ok(_) if byte[0] == b'\n' => break,
            Ok(_) => line.push(byte[0]),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                return Err(MsgError::Handshake("handshake timed out".into()))
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
        if line.len() > 64 * 1024 {
            return Err(MsgError::Handshake("handshake line too long".into()));
        }
    }
    String::from_utf8(line).map_err(|_| MsgError::Handshake("non-UTF-8 handshake line".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(n: u32) -> Vec<Communicator> {
        loopback_world(n, CommOptions::default()).unwrap()
    }

    #[test]
    fn single_rank_world() {
        let w = world(1);
        assert_eq!(w[0].rank(), RankId(0));
        assert_eq!(w[0].world_size(), 1);
        assert!(matches!(
            w[0].send_i64(RankId(0), 1, 0),
            Err(MsgError::SelfMessage(0))
        ));
    }

    #[test]
    fn scalar_echo() {
        let w = world(2);
        w[0].send_i64(RankId(1), 1, 0).unwrap();
        assert_eq!(w[1].recv_i64(RankId(0), 1).unwrap(), 0);
    }

    #[test]
    fn all_pairs_ping() {
        let w = world(3);
        for a in &w {
            for b in &w {
                if a.rank() != b.rank() {
                    a.send_i64(b.rank(), 7, a.rank().0 as i64 * 10 + b.rank().0 as i64)
                        .unwrap();
                }
            }
        }
        for b in &w {
            for a in &w {
                if a.rank() != b.rank() {
                    let v = b.recv_i64(a.rank(), 7).unwrap();
                    assert_eq!(v, a.rank().0 as i64 * 10 + b.rank().0 as i64);
                }
            }
        }
    }

    #[test]
    fn large_array_arrives_bitwise() {
        let w = world(2);
        let data: Vec<f64> = (0..1_000_000).map(|i| (i as f64).sin() * 1e-3).collect();
        let checksum = |v: &[f64]| v.iter().fold(0u64, |h, x| h.rotate_left(5) ^ x.to_bits());
        let [a, b]: [Communicator; 2] = w.try_into().unwrap();
        let sent = data.clone();
        let sender = thread::spawn(move || a.send_f64s(RankId(1), 1, &sent).map(|_| a));
        let got = b.recv_f64s(RankId(0), 1).unwrap();
        sender.join().unwrap().unwrap();
        assert_eq!(got.len(), data.len());
        assert_eq!(checksum(&got), checksum(&data));
        assert!(got.iter().zip(&data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn tag_filtering_queues_other_tags() {
        let w = world(2);
        w[0].send_i64(RankId(1), 1, 111).unwrap();
        w[0].send_i64(RankId(1), 2, 222).unwrap();
        assert_eq!(w[1].recv_i64(RankId(0), 2).unwrap(), 222);
        assert_eq!(w[1].recv_i64(RankId(0), 1).unwrap(), 111);
    }

    #[test]
    fn fifo_within_tag_and_no_loss() {
        let w = world(2);
        for i in 0..200 {
            w[0].send_i64(RankId(1), (i % 3) as u32, i).unwrap();
        }
        for tag in [2u32, 0, 1] {
            let got: Vec<i64> = (0..200)
                .filter(|i| i % 3 == tag as i64)
                .map(|_| w[1].recv_i64(RankId(0), tag).unwrap())
                .collect();
            let want: Vec<i64> = (0..200).filter(|i| i % 3 == tag as i64).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn silent_source_times_out() {
        let mut w = world(2);
        w[1].set_recv_timeout(Duration::from_millis(200));
        let start = Instant::now();
        let err = w[1].recv_i64(RankId(0), 1).unwrap_err();
        assert!(matches!(err, MsgError::DeadlockSuspected { from: 0, tag: 1, .. }));
        assert!(start.elapsed() >= Duration::from_millis(200));
    }

    #[test]
    fn rank_errors() {
        let w = world(2);
        assert!(matches!(
            w[0].send_i64(RankId(2), 1, 0),
            Err(MsgError::RankOutOfRange { rank: 2, world_size: 2 })
        ));
        assert!(matches!(w[0].recv(RankId(5), 1), Err(MsgError::RankOutOfRange { .. })));
        assert!(matches!(w[1].send_i64(RankId(1), 1, 0), Err(MsgError::SelfMessage(1))));
    }

    #[test]
    fn kind_mismatch_is_protocol_error() {
        let w = world(2);
        w[0].send_f64s(RankId(1), 1, &[1.0]).unwrap();
        assert!(matches!(
            w[1].recv_i64(RankId(0), 1),
            Err(MsgError::KindMismatch {
                expected: PayloadKind::Int64Scalar,
                got: PayloadKind::Float64Array,
                ..
            })
        ));
    }

    #[test]
    fn closed_peer_is_transport_error() {
        let mut w = world(2);
        let one = w.pop().unwrap();
        one.send_i64(RankId(0), 1, 9).unwrap();
        drop(one);
        // Queued data is still delivered before the closure is reported.
        assert_eq!(w[0].recv_i64(RankId(1), 1).unwrap(), 9);
        assert!(matches!(w[0].recv_i64(RankId(1), 1), Err(MsgError::Transport { peer: 1, .. })));
    }

    #[test]
    fn trace_records_both_directions() {
        let w = world(2);
        w[0].enable_trace();
        w[1].enable_trace();
        w[0].send_f64s(RankId(1), 2, &[1.0, 2.0, 3.0]).unwrap();
        w[1].recv_f64s(RankId(0), 2).unwrap();
        assert_eq!(
            w[0].trace(),
            [TraceEvent {
                direction: Direction::Sent,
                peer: 1,
                tag: 2,
                kind: PayloadKind::Float64Array,
                count: 3
            }]
        );
        assert_eq!(w[1].trace()[0].direction, Direction::Received);
    }

    #[test]
    fn connect_rejects_rank_outside_table() {
        let endpoints = vec!["127.0.0.1:0".to_string()];
        assert!(matches!(
            Communicator::connect(3, &endpoints, CommOptions::default()),
            Err(MsgError::RankOutOfRange { rank: 3, world_size: 1 })
        ));
    }

    #[test]
    fn worker_without_master_fails_handshake() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let endpoints = vec![format!("127.0.0.1:{port}"), "127.0.0.1:0".into()];
        let opts = CommOptions {
            connect_timeout: Duration::from_millis(200),
            ..CommOptions::default()
        };
        assert!(matches!(
            Communicator::connect(1, &endpoints, opts),
            Err(MsgError::Handshake(_))
        ));
    }
}
