//! Starts a world of ranks, locally or across spawn daemons.
//!
//! ```text
//! launch --world-size 3 -- ./prog args...
//! launch --world-size 4 --hosts head:7000,node2:7100 -- ./prog
//! launch daemon --listen 0.0.0.0:7100
//! ```

use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use workshare::msg::{launch, Hosts, LaunchSpec, ENV_RECV_TIMEOUT_MS};

#[derive(Parser)]
#[command(name = "launch", args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Number of ranks, master included.
    #[arg(long)]
    world_size: Option<u32>,

    /// `host:port` list. The first entry is this machine and its port is
    /// the rendezvous port; the others are spawn daemons.
    #[arg(long)]
    hosts: Option<String>,

    /// Receive timeout for every rank, in milliseconds.
    #[arg(long)]
    recv_timeout_ms: Option<u64>,

    /// Program and arguments to run as every rank.
    #[arg(last = true)]
    program: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Accept spawn requests from launchers on other machines.
    Daemon {
        #[arg(long, default_value = "0.0.0.0:7100")]
        listen: String,
    },
}

fn run(cli: Cli) -> Result<bool, String> {
    if let Some(Command::Daemon { listen }) = cli.command {
        let listener = TcpListener::bind(&listen).map_err(|e| format!("bind {listen}: {e}"))?;
        eprintln!("launch daemon listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
        workshare::msg::launch::serve_daemon(listener).map_err(|e| e.to_string())?;
        return Ok(true);
    }
    let world_size = cli.world_size.ok_or("--world-size is required")?;
    let (program, args) = cli
        .program
        .split_first()
        .ok_or("missing program after --")?;
    let hosts = match &cli.hosts {
        Some(h) => Hosts::parse(h).map_err(|e| e.to_string())?,
        None => Hosts::Local,
    };
    let mut spec = LaunchSpec {
        world_size,
        hosts,
        program: PathBuf::from(program),
        args: args.to_vec(),
        env: Vec::new(),
    };
    if let Some(ms) = cli.recv_timeout_ms {
        spec.env.push((ENV_RECV_TIMEOUT_MS.to_string(), ms.to_string()));
    }
    let exits = launch(&spec)
        .and_then(|job| job.wait())
        .map_err(|e| e.to_string())?;
    let mut ok = true;
    for e in exits.iter().filter(|e| !e.success()) {
        ok = false;
        match e.code {
            Some(code) => eprintln!("launch: rank {} on {} exited with status {code}", e.rank, e.host),
            None => eprintln!("launch: rank {} on {} was killed", e.rank, e.host),
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("launch: {e}");
            ExitCode::from(2)
        }
    }
}
