use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::master_worker::{master_run, worker_run};
use crate::matrix::{benchmark_inputs, matmul_seq, Matrix};
use crate::msg::{launch, wall_time, Communicator, LaunchSpec};
use crate::workshare::matmul_threads;

use super::{BenchConfig, BenchError, BenchRecord, Model};

const RESULT_MAGIC: [u8; 4] = *b"MWBR";

/// Runs every requested model over every dimension.
///
/// A and B come from `(seed, N)` and are shared by all models. Each model is
/// timed `repeats` times and the fastest run is kept. Parallel results must
/// match the sequential product bit for bit or the suite stops. Records come
/// out by dimension, then in seq, threads, msg order.
pub fn run_suite(config: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    config.validate()?;
    let mut records = Vec::new();
    for &n in &config.dims {
        let (a, b) = benchmark_inputs(n, config.seed)?;

        let mut reference = None;
        let mut t_seq = f64::INFINITY;
        for _ in 0..config.repeats {
            let start = wall_time();
            let c = matmul_seq(&a, &b)?;
            t_seq = t_seq.min(wall_time() - start);
            reference = Some(c);
        }
        let reference = reference.expect("repeats >= 1");
        let t_seq = t_seq.max(f64::MIN_POSITIVE);

        for model in Model::ALL {
            if !config.models.contains(&model) {
                continue;
            }
            let (workers, elapsed) = match model {
                Model::Seq => (1, t_seq),
                Model::Threads => {
                    let mut best = f64::INFINITY;
                    for _ in 0..config.repeats {
                        let start = wall_time();
                        let c = matmul_threads(&a, &b, config.thread_workers)?;
                        best = best.min(wall_time() - start);
                        gate(model, n, &reference, &c)?;
                    }
                    (config.thread_workers, best)
                }
                Model::Msg => {
                    let result = run_msg(config, n)?;
                    gate(model, n, &reference, &result.c)?;
                    let best = result.elapsed.iter().copied().fold(f64::INFINITY, f64::min);
                    (config.world_size as usize - 1, best)
                }
            };
            let elapsed = elapsed.max(f64::MIN_POSITIVE);
            records.push(BenchRecord::new(model, n, workers, elapsed)?.paired(t_seq)?);
        }
    }
    Ok(records)
}

fn gate(model: Model, n: usize, reference: &Matrix, got: &Matrix) -> Result<(), BenchError> {
    match reference.first_bitwise_difference(got) {
        None => Ok(()),
        Some(index) => Err(BenchError::GateMismatch { model, n, index }),
    }
}

fn run_msg(config: &BenchConfig, n: usize) -> Result<RankResult, BenchError> {
    let program = match &config.rank_program {
        Some(p) => p.clone(),
        None => std::env::current_exe()?,
    };
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("result.bin");
    let spec = LaunchSpec {
        world_size: config.world_size,
        hosts: config.hosts.clone(),
        program,
        args: RankArgs {
            n,
            seed: config.seed,
            repeats: config.repeats,
            out: out.clone(),
            trace_dir: None,
        }
        .to_args(),
        env: Vec::new(),
    };
    let exits = launch(&spec)?.wait()?;
    if let Some(bad) = exits.iter().find(|e| !e.success()) {
        return Err(BenchError::MsgRun(format!(
            "rank {} on {} exited with {:?}",
            bad.rank, bad.host, bad.code
        )));
    }
    read_result(&out)
}

/// Arguments of the per-rank entry point used for message-passing runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RankArgs {
    pub n: usize,
    pub seed: u64,
    pub repeats: usize,
    /// Where rank 0 writes its [`RankResult`].
    pub out: PathBuf,
    /// When set, every rank writes its message trace to `rank<R>.json` here.
    pub trace_dir: Option<PathBuf>,
}

impl RankArgs {
    pub fn to_args(&self) -> Vec<String> {
        let mut args = vec![
            "rank".to_string(),
            "--n".into(),
            self.n.to_string(),
            "--seed".into(),
            self.seed.to_string(),
            "--repeats".into(),
            self.repeats.to_string(),
            "--out".into(),
            self.out.display().to_string(),
        ];
        if let Some(dir) = &self.trace_dir {
            args.push("--trace-dir".into());
            args.push(dir.display().to_string());
        }
        args
    }
}

/// What rank 0 reports back: C from the last round and every round's time.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub elapsed: Vec<f64>,
    pub c: Matrix,
}

/// Body of one launched rank: rank 0 runs the master `repeats` times,
/// every other rank runs the worker as often.
pub fn rank_main(args: &RankArgs) -> Result<(), BenchError> {
    let comm = Communicator::from_env()?;
    if args.trace_dir.is_some() {
        comm.enable_trace();
    }
    if comm.rank().is_master() {
        let (a, b) = benchmark_inputs(args.n, args.seed)?;
        let mut elapsed = Vec::with_capacity(args.repeats);
        let mut last = None;
        for _ in 0..args.repeats {
            let (c, t) = master_run(&comm, &a, &b)?;
            elapsed.push(t);
            last = Some(c);
        }
        let c = last.ok_or_else(|| BenchError::Config("repeats must be at least 1".into()))?;
        write_result(&args.out, &RankResult { elapsed, c })?;
    } else {
        for _ in 0..args.repeats {
            worker_run(&comm)?;
        }
    }
    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("rank{}.json", comm.rank()));
        let json = serde_json::to_string_pretty(&comm.trace())
            .map_err(|e| BenchError::Io(e.into()))?;
        fs::write(path, json)?;
    }
    Ok(())
}

/// Little-endian: magic `MWBR`, u32 round count, that many f64 times,
/// u64 rows, u64 cols, rows*cols f64 values.
pub fn write_result(path: &Path, result: &RankResult) -> Result<(), BenchError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&RESULT_MAGIC)?;
    w.write_all(&(result.elapsed.len() as u32).to_le_bytes())?;
    for t in &result.elapsed {
        w.write_all(&t.to_le_bytes())?;
    }
    w.write_all(&(result.c.rows() as u64).to_le_bytes())?;
    w.write_all(&(result.c.cols() as u64).to_le_bytes())?;
    for v in result.c.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_result(path: &Path) -> Result<RankResult, BenchError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != RESULT_MAGIC {
        return Err(BenchError::MsgRun(format!("{} is not a result file", path.display())));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let rounds = u32::from_le_bytes(b4) as usize;
    let mut elapsed = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        r.read_exact(&mut b8)?;
        elapsed.push(f64::from_le_bytes(b8));
    }
    r.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let cols = u64::from_le_bytes(b8) as usize;
    let mut bytes = vec![0u8; rows * cols * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RankResult {
        elapsed,
        c: Matrix::from_vec(rows, cols, data)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_matrix;

    #[test]
    fn seq_and_threads_structure() {
        let config = BenchConfig {
            dims: vec![4],
            models: vec![Model::Threads, Model::Seq],
            thread_workers: 2,
            repeats: 1,
            ..BenchConfig::default()
        };
        let records = run_suite(&config).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].model, Model::Seq);
        assert_eq!(records[1].model, Model::Threads);
        assert_eq!(records[1].workers, 2);
        let expected = records[0].elapsed / records[1].elapsed;
        assert_eq!(records[1].speedup, Some(expected));
        assert_eq!(records[0].speedup, Some(1.0));
    }

    #[test]
    fn records_follow_dims_then_models() {
        let config = BenchConfig {
            dims: vec![3, 1, 2],
            models: vec![Model::Threads, Model::Seq],
            thread_workers: 3,
            repeats: 2,
            ..BenchConfig::default()
        };
        let order: Vec<_> = run_suite(&config)
            .unwrap()
            .into_iter()
            .map(|r| (r.n, r.model))
            .collect();
        assert_eq!(
            order,
            [
                (3, Model::Seq),
                (3, Model::Threads),
                (1, Model::Seq),
                (1, Model::Threads),
                (2, Model::Seq),
                (2, Model::Threads)
            ]
        );
    }

    #[test]
    fn metric_identity_holds_for_records() {
        let config = BenchConfig {
            dims: vec![8, 16],
            models: vec![Model::Seq, Model::Threads],
            thread_workers: 2,
            repeats: 1,
            ..BenchConfig::default()
        };
        for r in run_suite(&config).unwrap() {
            let ops = crate::op_count(r.n as u64).unwrap().as_f64();
            assert!((r.mflops * r.elapsed * 1e6 - ops).abs() <= ops * 1e-12);
        }
    }

    #[test]
    fn gate_reports_first_difference() {
        let a = random_matrix(3, 3, 1).unwrap();
        let mut b = a.clone();
        b.as_mut_slice()[4] += 1.0;
        match gate(Model::Threads, 3, &a, &b) {
            Err(BenchError::GateMismatch { index: 4, n: 3, model: Model::Threads }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(gate(Model::Msg, 3, &a, &a).is_ok());
    }

    #[test]
    fn result_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        let result = RankResult {
            elapsed: vec![0.5, 0.25],
            c: random_matrix(3, 2, 9).unwrap(),
        };
        write_result(&path, &result).unwrap();
        assert_eq!(read_result(&path).unwrap(), result);
    }

    #[test]
    fn rank_args_render() {
        let args = RankArgs {
            n: 8,
            seed: 3,
            repeats: 2,
            out: "/tmp/x".into(),
            trace_dir: Some("/tmp/t".into()),
        };
        assert_eq!(
            args.to_args().join(" "),
            "rank --n 8 --seed 3 --repeats 2 --out /tmp/x --trace-dir /tmp/t"
        );
    }
}
