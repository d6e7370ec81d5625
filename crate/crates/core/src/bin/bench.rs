//! Benchmark driver.
//!
//! ```text
//! bench --models seq,threads,msg --dims 100,500,1000,2000 --threads 2 \
//!       --world-size 3 --repeats 3 --seed 42 --csv out.csv --plots plots/
//! bench golden
//! ```

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use workshare::bench::{
    calibrate, emit_csv, emit_plots, format_sig, golden_check, rank_main, run_suite, BenchConfig,
    BenchError, Model, Overlay, RankArgs,
};
use workshare::cost::CostParams;
use workshare::msg::{Communicator, Hosts, RankId};

const PING_TAG: u32 = 99;

#[derive(Parser)]
#[command(name = "bench", args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_delimiter = ',', default_value = "seq,threads,msg")]
    models: Vec<Model>,
    #[arg(long, value_delimiter = ',', default_value = "100,500,1000,2000")]
    dims: Vec<usize>,
    /// Thread workers; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 3)]
    world_size: u32,
    /// `host:port` list for message-passing runs, as for `launch`.
    #[arg(long)]
    hosts: Option<String>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for runtime.svg, mflops.svg and speedup.svg.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Network seconds per datum for the predicted-runtime overlay.
    #[arg(long, requires = "tf", conflicts_with = "calibrate")]
    tc: Option<f64>,
    /// Shared-memory seconds per datum for the predicted-runtime overlay.
    #[arg(long, requires = "tc")]
    tf: Option<f64>,
    /// Measure tc and tf on this machine for the overlay.
    #[arg(long)]
    calibrate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Recompute the reference throughput and speedup tables.
    Golden,
    #[command(hide = true)]
    Rank {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Exchange one message with every other rank of a launched world.
    #[command(hide = true)]
    Ping,
}

fn ping() -> Result<(), BenchError> {
    let comm = Communicator::from_env()?;
    let me = comm.rank().0;
    let peers = (0..comm.world_size()).filter(|&r| r != me);
    for p in peers.clone() {
        comm.send_i64(RankId(p), PING_TAG, i64::from(me * 1000 + p))?;
    }
    for p in peers {
        let got = comm.recv_i64(RankId(p), PING_TAG)?;
        if got != i64::from(p * 1000 + me) {
            return Err(BenchError::MsgRun(format!("rank {me}: bad ping {got} from {p}")));
        }
    }
    println!("rank {me}/{} ok", comm.world_size());
    Ok(())
}

fn run_bench(args: RunArgs) -> Result<(), BenchError> {
    let mut config = BenchConfig {
        dims: args.dims,
        models: args.models,
        world_size: args.world_size,
        repeats: args.repeats,
        seed: args.seed,
        csv: args.csv,
        plots: args.plots,
        ..BenchConfig::default()
    };
    if let Some(t) = args.threads {
        config.thread_workers = t;
    }
    if let Some(h) = &args.hosts {
        config.hosts = Hosts::parse(h)?;
    }
    let given = match (args.tc, args.tf) {
        (Some(tc), Some(tf)) => {
            Some(CostParams::new(tc, tf).map_err(|e| BenchError::Config(e.to_string()))?)
        }
        _ => None,
    };
    let records = run_suite(&config)?;

    println!("{:<8} {:>6} {:>7} {:>12} {:>12} {:>9}", "model", "n", "workers", "elapsed_s", "mflops", "speedup");
    for r in &records {
        println!(
            "{:<8} {:>6} {:>7} {:>12} {:>12} {:>9}",
            r.model,
            r.n,
            r.workers,
            format_sig(r.elapsed),
            format_sig(r.mflops),
            r.speedup.map(format_sig).unwrap_or_default()
        );
    }
    if let Some(path) = &config.csv {
        emit_csv(&records, path)?;
    }
    if let Some(dir) = &config.plots {
        let params = match given {
            Some(p) => Some(p),
            None if args.calibrate => {
                let cal = calibrate(1_000_000, 3)?;
                fs::create_dir_all(dir)?;
                let json = serde_json::to_string_pretty(&cal).map_err(std::io::Error::other)?;
                fs::write(dir.join("calibration.json"), json)?;
                eprintln!("calibrated tc={} tf={}", format_sig(cal.tc), format_sig(cal.tf));
                Some(cal.params()?)
            }
            None => None,
        };
        let overlay = params.map(|params| Overlay {
            params,
            processes: u64::from(config.world_size),
        });
        emit_plots(&records, dir, overlay.as_ref())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Golden) => match golden_check() {
            Ok(report) => {
                println!("{report}");
                if report.is_ok() {
                    return ExitCode::SUCCESS;
                }
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
        Some(Command::Rank { n, seed, repeats, out, trace_dir }) => rank_main(&RankArgs {
            n,
            seed,
            repeats,
            out,
            trace_dir,
        }),
        Some(Command::Ping) => ping(),
        None => run_bench(cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::FAILURE
        }
    }
}
