use std::hint::black_box;
use std::thread;

use serde::Serialize;

use crate::cost::CostParams;
use crate::msg::{loopback_world, wall_time, CommOptions, RankId};

use super::BenchError;

const TAG: u32 = 7;

/// Measured per-datum transfer times for the cost model overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    /// Seconds per f64 through a loopback socket, one way.
    pub tc: f64,
    /// Seconds per f64 copied in memory, capped at `tc`.
    pub tf: f64,
    pub elements: usize,
    pub rounds: usize,
}

impl Calibration {
    pub fn params(&self) -> Result<CostParams, BenchError> {
        CostParams::new(self.tc, self.tf).map_err(|e| BenchError::Config(e.to_string()))
    }
}

/// Times `elements`-long f64 round trips between two loopback ranks and
/// in-memory copies of the same array. Best of `rounds` is kept.
pub fn calibrate(elements: usize, rounds: usize) -> Result<Calibration, BenchError> {
    if elements == 0 || rounds == 0 {
        return Err(BenchError::Config(
            "calibration needs at least one element and one round".into(),
        ));
    }
    let data: Vec<f64> = (0..elements).map(|i| i as f64).collect();
    let mut world = loopback_world(2, CommOptions::default())?;
    let echo = world.pop().expect("two ranks");
    let master = world.pop().expect("two ranks");

    let echo_thread = thread::spawn(move || -> Result<(), BenchError> {
        for _ in 0..rounds {
            let v = echo.recv_f64s(RankId::MASTER, TAG)?;
            echo.send_f64s(RankId::MASTER, TAG, &v)?;
        }
        Ok(())
    });

    let mut best_rtt = f64::INFINITY;
    for _ in 0..rounds {
        let start = wall_time();
        master.send_f64s(RankId(1), TAG, &data)?;
        let back = master.recv_f64s(RankId(1), TAG)?;
        best_rtt = best_rtt.min(wall_time() - start);
        black_box(back);
    }
    echo_thread
        .join()
        .map_err(|_| BenchError::MsgRun("calibration echo thread panicked".into()))??;

    let mut best_copy = f64::INFINITY;
    for _ in 0..rounds {
        let start = wall_time();
        let copy = black_box(&data).clone();
        best_copy = best_copy.min(wall_time() - start);
        black_box(copy);
    }

    let tc = best_rtt / (2 * elements) as f64;
    let tf = (best_copy / elements as f64).min(tc);
    Ok(Calibration { tc, tf, elements, rounds })
}
