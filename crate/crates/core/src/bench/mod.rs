//! Benchmark harness: wall time, MFLOPS and speedup for the three models.

mod calibrate;
pub mod golden;
mod plot;
mod report;
mod suite;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::master_worker::ProtocolError;
use crate::matrix::{op_count, MatrixError};
use crate::msg::{Hosts, LaunchError, MsgError};
use crate::workshare::RegionError;

pub use calibrate::{calibrate, Calibration};
pub use golden::{golden_check, GoldenReport};
pub use plot::{emit_plots, Overlay, PLOT_FILES};
pub use report::{emit_csv, format_sig, read_csv, CSV_HEADER};
pub use suite::{read_result, rank_main, run_suite, write_result, RankArgs, RankResult};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("correctness gate failed: {model} at N={n} differs from the sequential result at element {index}")]
    GateMismatch { model: Model, n: usize, index: usize },
    #[error("message-passing run failed: {0}")]
    MsgRun(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Msg(#[from] MsgError),
    #[error(transparent)]
    Launch(#[from] LaunchError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    Seq,
    Threads,
    Msg,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Seq, Model::Threads, Model::Msg];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Seq => "seq",
            Model::Threads => "threads",
            Model::Msg => "msg",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Model {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seq" => Ok(Model::Seq),
            "threads" => Ok(Model::Threads),
            "msg" => Ok(Model::Msg),
            other => Err(BenchError::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// `op_count(N) / elapsed / 1e6`.
pub fn mflops(n: u64, elapsed: f64) -> Result<f64, BenchError> {
    if !(elapsed > 0.0) {
        return Err(BenchError::Domain(format!(
            "elapsed time must be positive, got {elapsed}"
        )));
    }
    Ok(op_count(n)?.as_f64() / elapsed / 1e6)
}

/// `t_seq / t_par`.
pub fn speedup(t_seq: f64, t_par: f64) -> Result<f64, BenchError> {
    if !(t_seq > 0.0 && t_par > 0.0) {
        return Err(BenchError::Domain(format!(
            "speedup needs positive times, got {t_seq} and {t_par}"
        )));
    }
    Ok(t_seq / t_par)
}

/// One timed observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub model: Model,
    pub n: usize,
    pub workers: usize,
    pub elapsed: f64,
    pub mflops: f64,
    /// Sequential time at the same N over this time; `None` until paired.
    pub speedup: Option<f64>,
}

impl BenchRecord {
    pub fn new(model: Model, n: usize, workers: usize, elapsed: f64) -> Result<Self, BenchError> {
        Ok(Self {
            model,
            n,
            workers,
            elapsed,
            mflops: mflops(n as u64, elapsed)?,
            speedup: None,
        })
    }

    pub fn paired(mut self, t_seq: f64) -> Result<Self, BenchError> {
        self.speedup = Some(speedup(t_seq, self.elapsed)?);
        Ok(self)
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub models: Vec<Model>,
    pub thread_workers: usize,
    pub world_size: u32,
    pub repeats: usize,
    pub seed: u64,
    pub hosts: Hosts,
    /// Executable providing the `rank` entry point for message-passing runs.
    /// Defaults to the current executable.
    pub rank_program: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub plots: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![100, 500, 1000, 2000],
            models: Model::ALL.to_vec(),
            thread_workers: crate::workshare::default_workers(),
            world_size: 3,
            repeats: 3,
            seed: 42,
            hosts: Hosts::Local,
            rank_program: None,
            csv: None,
            plots: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.dims.is_empty() {
            return bad("at least one dimension is required");
        }
        if self.dims.contains(&0) {
            return bad("dimensions must be positive");
        }
        if self.models.is_empty() {
            return bad("at least one model is required");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.thread_workers == 0 {
            return bad("thread worker count must be at least 1");
        }
        if self.models.contains(&Model::Msg) && self.world_size < 2 {
            return bad("message passing needs a world size of at least 2");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mflops_examples() {
        let v = mflops(1000, 8.19).unwrap();
        assert!((v - 244.08).abs() < 0.005, "{v}");
        assert!((v - 244.17).abs() / 244.17 < 1e-3);
        let v = mflops(500, 2.09).unwrap();
        assert!((v - 119.50).abs() < 0.005, "{v}");
        assert!((v - 119.54).abs() / 119.54 < 1e-3);
        assert_eq!(mflops(1, 1.0).unwrap(), 1e-6);
    }

    #[test]
    fn mflops_rejects_non_positive_time() {
        assert!(matches!(mflops(10, 0.0), Err(BenchError::Domain(_))));
        assert!(matches!(mflops(10, -1.0), Err(BenchError::Domain(_))));
        assert!(matches!(mflops(10, f64::NAN), Err(BenchError::Domain(_))));
        assert!(mflops(0, 1.0).is_err());
    }

    #[test]
    fn speedup_examples() {
        assert!((speedup(240.97, 60.19).unwrap() - 4.00).abs() < 0.005);
        assert!((speedup(22.52, 14.36).unwrap() - 1.568).abs() < 0.0005);
        assert_eq!(speedup(3.5, 3.5).unwrap(), 1.0);
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(1.0, -1.0).is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.as_str().parse::<Model>().unwrap(), m);
        }
        assert_eq!("THREADS".parse::<Model>().unwrap(), Model::Threads);
        assert!("mpi".parse::<Model>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig::default().validate().is_ok());
        let mut c = BenchConfig::default();
        c.repeats = 0;
        assert!(c.validate().is_err());
        let mut c = BenchConfig::default();
        c.dims.clear();
        assert!(c.validate().is_err());
        let mut c = BenchConfig::default();
        c.world_size = 1;
        assert!(c.validate().is_err());
        c.models = vec![Model::Seq];
        assert!(c.validate().is_ok());
    }

    proptest! {
        #[test]
        fn mflops_identity(n in 1u64..5000, elapsed in 1e-6f64..1e4) {
            let ops = op_count(n).unwrap().as_f64();
            let back = mflops(n, elapsed).unwrap() * elapsed * 1e6;
            prop_assert!((back - ops).abs() <= ops * 4.0 * f64::EPSILON);
        }

        #[test]
        fn speedup_identity(a in 1e-6f64..1e4, b in 1e-6f64..1e4) {
            let back = speedup(a, b).unwrap() * b;
            prop_assert!((back - a).abs() <= a * 2.0 * f64::EPSILON);
        }
    }
}
