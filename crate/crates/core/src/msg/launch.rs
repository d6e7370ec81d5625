//! Multi-process launcher.
//!
//! `launch` starts `world_size` copies of a program, each with `RANK` and
//! `WORLD_ENDPOINTS` in its environment, and returns a [`Job`] that reaps
//! them. Ranks are placed on hosts round-robin. Ranks placed on the first
//! host run on this machine; ranks on any other host are started through the
//! spawn daemon listening at that endpoint (see [`serve_daemon`]).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ENV_HOST, ENV_RANK, ENV_WORLD_ENDPOINTS};

const DAEMON_CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("world size must be at least 1")]
    EmptyWorld,
    #[error("host list is empty")]
    NoHosts,
    #[error("bad endpoint {0:?}, expected host:port")]
    BadEndpoint(String),
    #[error("host {endpoint} is unreachable: {source}")]
    Unreachable { endpoint: String, source: io::Error },
    #[error("rendezvous endpoint {endpoint} is not available: {source}")]
    PortConflict { endpoint: String, source: io::Error },
    #[error("failed to start rank {rank}: {detail}")]
    Spawn { rank: u32, detail: String },
    #[error("daemon at {endpoint}: {detail}")]
    Daemon { endpoint: String, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Hosts {
    /// Every rank on this machine, over loopback.
    Local,
    /// `host:port` entries. The first names this machine and rank 0's
    /// rendezvous port; the others are spawn-daemon endpoints.
    Endpoints(Vec<String>),
}

impl Hosts {
    /// Parses a comma-separated list; `LOCAL` or an empty string selects [`Hosts::Local`].
    pub fn parse(list: &str) -> Result<Self, LaunchError> {
        let trimmed = list.trim();
        if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("local") {
            return Ok(Hosts::Local);
        }
        let entries: Vec<String> = trimmed.split(',').map(|s| s.trim().to_string()).collect();
        for e in &entries {
            split_endpoint(e)?;
        }
        Ok(Hosts::Endpoints(entries))
    }
}

#[derive(Debug, Clone)]
pub struct LaunchSpec {
    pub world_size: u32,
    pub hosts: Hosts,
    pub program: PathBuf,
    pub args: Vec<String>,
    /// Extra variables for every rank.
    pub env: Vec<(String, String)>,
}

impl LaunchSpec {
    pub fn local(world_size: u32, program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        Self {
            world_size,
            hosts: Hosts::Local,
            program: program.into(),
            args,
            env: Vec::new(),
        }
    }
}

/// Host index of each rank.
pub fn placement(world_size: u32, host_count: usize) -> Vec<usize> {
    (0..world_size as usize).map(|r| r % host_count.max(1)).collect()
}

fn split_endpoint(endpoint: &str) -> Result<(&str, u16), LaunchError> {
    let (host, port) = endpoint
        .rsplit_once(':')
        .ok_or_else(|| LaunchError::BadEndpoint(endpoint.to_string()))?;
    let port = port
        .parse()
        .map_err(|_| LaunchError::BadEndpoint(endpoint.to_string()))?;
    if host.is_empty() {
        return Err(LaunchError::BadEndpoint(endpoint.to_string()));
    }
    Ok((host, port))
}

/// Exit of one rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankExit {
    pub rank: u32,
    pub host: String,
    /// `None` when the rank was killed or ended by a signal.
    pub code: Option<i32>,
}

impl RankExit {
    pub fn success(&self) -> bool {
        self.code == Some(0)
    }
}

enum Proc {
    Local(Child),
    Remote {
        stream: TcpStream,
        exit: Arc<Mutex<Option<Option<i32>>>>,
    },
}

struct RankProc {
    rank: u32,
    host: String,
    proc: Proc,
    done: Option<Option<i32>>,
}

impl RankProc {
    fn poll(&mut self) -> io::Result<Option<Option<i32>>> {
        if self.done.is_none() {
            self.done = match &mut self.proc {
                Proc::Local(child) => child.try_wait()?.map(|s: ExitStatus| s.code()),
                Proc::Remote { exit, .. } => *exit.lock().unwrap(),
            };
        }
        Ok(self.done)
    }

    fn kill(&mut self) {
        if self.done.is_some() {
            return;
        }
        match &mut self.proc {
            Proc::Local(child) => {
                let _ = child.kill();
                self.done = Some(child.wait().ok().and_then(|s| s.code()));
            }
            Proc::Remote { stream, .. } => {
                let _ = stream.shutdown(Shutdown::Both);
                self.done = Some(None);
            }
        }
    }
}

/// A running set of ranks. Dropping a job kills and reaps whatever is left.
pub struct Job {
    procs: Vec<RankProc>,
    endpoints: Vec<String>,
}

impl Job {
    /// The `WORLD_ENDPOINTS` table handed to the ranks.
    pub fn endpoints(&self) -> &[String] {
        &self.endpoints
    }

    /// Waits for every rank. As soon as one rank fails the others are killed.
    pub fn wait(mut self) -> Result<Vec<RankExit>, LaunchError> {
        loop {
            let mut running = false;
            let mut failed = false;
            for p in &mut self.procs {
                match p.poll()? {
                    None => running = true,
                    Some(code) => failed |= code != Some(0),
                }
            }
            if failed {
                self.kill();
            }
            if !running || failed {
                break;
            }
            thread::sleep(POLL);
        }
        Ok(self
            .procs
            .iter()
            .map(|p| RankExit {
                rank: p.rank,
                host: p.host.clone(),
                code: p.done.flatten(),
            })
            .collect())
    }

    pub fn kill(&mut self) {
        for p in &mut self.procs {
            p.kill();
        }
    }
}

impl Drop for Job {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Starts every rank of `spec`.
pub fn launch(spec: &LaunchSpec) -> Result<Job, LaunchError> {
    if spec.world_size == 0 {
        return Err(LaunchError::EmptyWorld);
    }
    let hosts: Vec<String> = match &spec.hosts {
        Hosts::Local => {
            let port = TcpListener::bind("127.0.0.1:0")?.local_addr()?.port();
            vec![format!("127.0.0.1:{port}")]
        }
        Hosts::Endpoints(list) if list.is_empty() => return Err(LaunchError::NoHosts),
        Hosts::Endpoints(list) => {
            if let Err(source) = TcpListener::bind(&list[0]) {
                return Err(LaunchError::PortConflict {
                    endpoint: list[0].clone(),
                    source,
                });
            }
            list.clone()
        }
    };
    let place = placement(spec.world_size, hosts.len());
    let mut endpoints = vec![hosts[0].clone()];
    for &h in &place[1..] {
        let (host, _) = split_endpoint(&hosts[h])?;
        endpoints.push(format!("{host}:0"));
    }
    let table = endpoints.join(",");

    // Remote daemons first, so an unreachable host fails before any local spawn.
    let daemons: BTreeSet<usize> = place.iter().copied().filter(|&h| h != 0).collect();
    for &h in &daemons {
        probe_daemon(&hosts[h])?;
    }

    let label = |h: usize| match spec.hosts {
        Hosts::Local => "local".to_string(),
        Hosts::Endpoints(_) => hosts[h].clone(),
    };
    let mut job = Job {
        procs: Vec::with_capacity(place.len()),
        endpoints,
    };
    for (rank, &h) in place.iter().enumerate() {
        let rank = rank as u32;
        let mut env: BTreeMap<String, String> = spec.env.iter().cloned().collect();
        env.insert(ENV_RANK.into(), rank.to_string());
        env.insert(ENV_WORLD_ENDPOINTS.into(), table.clone());
        env.insert(ENV_HOST.into(), label(h));
        let proc = if h == 0 {
            let child = Command::new(&spec.program)
                .args(&spec.args)
                .envs(&env)
                .spawn()
                .map_err(|e| LaunchError::Spawn {
                    rank,
                    detail: format!("{}: {e}", spec.program.display()),
                })?;
            Proc::Local(child)
        } else {
            spawn_remote(&hosts[h], rank, spec, env)?
        };
        job.procs.push(RankProc {
            rank,
            host: label(h),
            proc,
            done: None,
        });
    }
    Ok(job)
}

fn connect_daemon(endpoint: &str) -> Result<TcpStream, LaunchError> {
    let unreachable = |source| LaunchError::Unreachable {
        endpoint: endpoint.to_string(),
        source,
    };
    let addrs: Vec<_> = endpoint.to_socket_addrs().map_err(unreachable)?.collect();
    let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses");
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, DAEMON_CONNECT_TIMEOUT) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(unreachable(last))
}

fn probe_daemon(endpoint: &str) -> Result<(), LaunchError> {
    let mut stream = connect_daemon(endpoint)?;
    writeln!(stream, "{}", serde_json::to_string(&DaemonRequest::Ping).unwrap())?;
    let reply = read_reply(&mut BufReader::new(&stream), endpoint)?;
    match reply {
        DaemonReply::Pong => Ok(()),
        other => Err(LaunchError::Daemon {
            endpoint: endpoint.to_string(),
            detail: format!("unexpected reply {other:?}"),
        }),
    }
}

fn spawn_remote(
    endpoint: &str,
    rank: u32,
    spec: &LaunchSpec,
    env: BTreeMap<String, String>,
) -> Result<Proc, LaunchError> {
    let mut stream = connect_daemon(endpoint)?;
    let request = DaemonRequest::Spawn {
        program: spec.program.to_string_lossy().into_owned(),
        args: spec.args.clone(),
        env,
    };
    writeln!(stream, "{}", serde_json::to_string(&request).unwrap())?;
    let mut reader = BufReader::new(stream.try_clone()?);
    match read_reply(&mut reader, endpoint)? {
        DaemonReply::Spawned { .. } => {}
        DaemonReply::Error { message } => {
            return Err(LaunchError::Spawn {
                rank,
                detail: format!("on {endpoint}: {message}"),
            })
        }
        other => {
            return Err(LaunchError::Daemon {
                endpoint: endpoint.to_string(),
                detail: format!("unexpected reply {other:?}"),
            })
        }
    }
    let exit = Arc::new(Mutex::new(None));
    let slot = Arc::clone(&exit);
    thread::spawn(move || {
        let mut code = None;
        let mut line = String::new();
        loop {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(n) if n > 0 => {}
                _ => break,
            }
            match serde_json::from_str(&line) {
                Ok(DaemonReply::Output { stderr: false, text }) => {
                    let _ = io::stdout().lock().write_all(text.as_bytes());
                }
                Ok(DaemonReply::Output { stderr: true, text }) => {
                    let _ = io::stderr().lock().write_all(text.as_bytes());
                }
                Ok(DaemonReply::Exited { code: c }) => {
                    code = c;
                    break;
                }
                _ => break,
            }
        }
        *slot.lock().unwrap() = Some(code);
    });
    Ok(Proc::Remote { stream, exit })
}

fn read_reply(reader: &mut impl BufRead, endpoint: &str) -> Result<DaemonReply, LaunchError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    serde_json::from_str(&line).map_err(|e| LaunchError::Daemon {
        endpoint: endpoint.to_string(),
        detail: format!("bad reply {line:?}: {e}"),
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum DaemonRequest {
    Ping,
    Spawn {
        program: String,
        args: Vec<String>,
        env: BTreeMap<String, String>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "lowercase")]
enum DaemonReply {
    Pong,
    Spawned { pid: u32 },
    Error { message: String },
    /// One line of the child's stdout or stderr.
    Output { stderr: bool, text: String },
    Exited { code: Option<i32> },
}

/// Spawn daemon: runs programs on request for launchers on other machines.
///
/// Each connection carries one JSON request line. A spawn request is answered
/// with `spawned`, then the child's output lines, then `exited` once the
/// child ends. Closing the connection
/// early kills the child.
pub fn serve_daemon(listener: TcpListener) -> io::Result<()> {
    for conn in listener.incoming() {
        let conn = conn?;
        thread::spawn(move || {
            if let Err(e) = handle_daemon_conn(conn) {
                eprintln!("daemon: {e}");
            }
        });
    }
    Ok(())
}

fn handle_daemon_conn(mut conn: TcpStream) -> io::Result<()> {
    let mut line = String::new();
    BufReader::new(&conn).read_line(&mut line)?;
    let reply = |conn: &mut TcpStream, r: &DaemonReply| {
        writeln!(conn, "{}", serde_json::to_string(r).unwrap())
    };
    let request: DaemonRequest = match serde_json::from_str(&line) {
        Ok(r) => r,
        Err(e) => {
            return reply(
                &mut conn,
                &DaemonReply::Error {
                    message: format!("bad request: {e}"),
                },
            )
        }
    };
    let (program, args, env) = match request {
        DaemonRequest::Ping => return reply(&mut conn, &DaemonReply::Pong),
        DaemonRequest::Spawn { program, args, env } => (program, args, env),
    };
    let child = Command::new(&program)
        .args(&args)
        .envs(&env)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => {
            return reply(
                &mut conn,
                &DaemonReply::Error {
                    message: format!("{program}: {e}"),
                },
            )
        }
    };
    reply(&mut conn, &DaemonReply::Spawned { pid: child.id() })?;
    let writer = Arc::new(Mutex::new(conn.try_clone()?));
    let forwarders = [
        forward(child.stdout.take().map(|p| Box::new(p) as Box<dyn io::Read + Send>), false, &writer),
        forward(child.stderr.take().map(|p| Box::new(p) as Box<dyn io::Read + Send>), true, &writer),
    ];
    let child = Arc::new(Mutex::new(child));

    // Launcher hang-up means the job is being torn down.
    let watch = conn.try_clone()?;
    let victim = Arc::clone(&child);
    thread::spawn(move || {
        let mut sink = [0u8; 64];
        let _ = io::Read::read(&mut &watch, &mut sink);
        let _ = victim.lock().unwrap().kill();
    });

    let status = loop {
        if let Some(status) = child.lock().unwrap().try_wait()? {
            break status;
        }
        thread::sleep(POLL);
    };
    for f in forwarders.into_iter().flatten() {
        let _ = f.join();
    }
    let _ = reply(&mut writer.lock().unwrap(), &DaemonReply::Exited { code: status.code() });
    Ok(())
}

fn forward(
    pipe: Option<Box<dyn io::Read + Send>>,
    stderr: bool,
    writer: &Arc<Mutex<TcpStream>>,
) -> Option<thread::JoinHandle<()>> {
    let writer = Arc::clone(writer);
    pipe.map(|pipe| {
        thread::spawn(move || {
            let mut pipe = BufReader::new(pipe);
            let mut buf = Vec::new();
            while matches!(pipe.read_until(b'\n', &mut buf), Ok(n) if n > 0) {
                let msg = DaemonReply::Output {
                    stderr,
                    text: String::from_utf8_lossy(&buf).into_owned(),
                };
                let line = serde_json::to_string(&msg).unwrap();
                if writeln!(writer.lock().unwrap(), "{line}").is_err() {
                    break;
                }
                buf.clear();
            }
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_placement() {
        assert_eq!(placement(3, 2), [0, 1, 0]);
        assert_eq!(placement(1, 1), [0]);
        assert_eq!(placement(5, 3), [0, 1, 2, 0, 1]);
    }

    #[test]
    fn parse_hosts() {
        assert_eq!(Hosts::parse("LOCAL").unwrap(), Hosts::Local);
        assert_eq!(Hosts::parse("").unwrap(), Hosts::Local);
        assert_eq!(
            Hosts::parse("a:1, b:2").unwrap(),
            Hosts::Endpoints(vec!["a:1".into(), "b:2".into()])
        );
        assert!(matches!(Hosts::parse("a"), Err(LaunchError::BadEndpoint(_))));
        assert!(matches!(Hosts::parse("a:x"), Err(LaunchError::BadEndpoint(_))));
    }

    #[test]
    fn zero_world_rejected() {
        let spec = LaunchSpec::local(0, "true", vec![]);
        assert!(matches!(launch(&spec), Err(LaunchError::EmptyWorld)));
    }

    #[test]
    fn unreachable_daemon_names_endpoint() {
        let free = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let first = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let spec = LaunchSpec {
            world_size: 2,
            hosts: Hosts::Endpoints(vec![first.to_string(), free.to_string()]),
            program: "true".into(),
            args: vec![],
            env: vec![],
        };
        match launch(&spec) {
            Err(LaunchError::Unreachable { endpoint, .. }) => assert_eq!(endpoint, free.to_string()),
            other => panic!("expected unreachable, got {:?}", other.err()),
        }
    }

    #[test]
    fn occupied_rendezvous_is_port_conflict() {
        let busy = TcpListener::bind("127.0.0.1:0").unwrap();
        let spec = LaunchSpec {
            world_size: 1,
            hosts: Hosts::Endpoints(vec![busy.local_addr().unwrap().to_string()]),
            program: "true".into(),
            args: vec![],
            env: vec![],
        };
        assert!(matches!(launch(&spec), Err(LaunchError::PortConflict { .. })));
    }

    #[cfg(unix)]
    #[test]
    fn failing_rank_kills_the_rest() {
        // Rank 0 sleeps; any other rank exits 3 right away.
        let spec = LaunchSpec::local(
            3,
            "/bin/sh",
            vec!["-c".into(), r#"if [ "$RANK" = 0 ]; then sleep 30; else exit 3; fi"#.into()],
        );
        let start = std::time::Instant::now();
        let exits = launch(&spec).unwrap().wait().unwrap();
        assert!(start.elapsed() < Duration::from_secs(10));
        assert!(exits.iter().any(|e| e.code == Some(3)));
        assert!(!exits[0].success());
    }

    #[cfg(unix)]
    #[test]
    fn env_is_injected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = LaunchSpec::local(
            2,
            "/bin/sh",
            vec![
                "-c".into(),
                format!(
                    r#"echo "$WORLD_ENDPOINTS" > {}/rank$RANK"#,
                    dir.path().display()
                ),
            ],
        );
        let job = launch(&spec).unwrap();
        let table = job.endpoints().join(",");
        let exits = job.wait().unwrap();
        assert!(exits.iter().all(RankExit::success));
        for r in 0..2 {
            let got = std::fs::read_to_string(dir.path().join(format!("rank{r}"))).unwrap();
            assert_eq!(got.trim(), table);
        }
    }
}
