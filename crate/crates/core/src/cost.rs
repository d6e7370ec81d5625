//! Analytic communication and work model for the master/worker product.
//!
//! Data counts follow the row-distribution protocol: every worker gets all
//! of B plus its A rows, and the master gets C rows back. The A-slice and
//! C-slice terms count N/(P-1) data per worker as the model is usually
//! written, so the distribution total is `(P-1)N^2 + N` and the collection
//! total is `N`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("N must be at least 1")]
    ZeroDimension,
    #[error("need at least 2 processes (one master, one worker), got {0}")]
    TooFewProcesses(u64),
    #[error("thread count must be at least 1")]
    NoThreads,
    #[error("invalid cost parameters: {0}")]
    Params(String),
}

/// Per-datum transfer times in seconds: `tc` across the network, `tf`
/// through shared memory on one machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    tc: f64,
    tf: f64,
}

impl CostParams {
    /// Requires finite, non-negative times with `tf <= tc`.
    pub fn new(tc: f64, tf: f64) -> Result<Self, CostError> {
        if !(tc.is_finite() && tf.is_finite()) || tc < 0.0 || tf < 0.0 {
            return Err(CostError::Params(format!(
                "times must be finite and non-negative (tc={tc}, tf={tf})"
            )));
        }
        if tf > tc {
            return Err(CostError::Params(format!(
                "shared-memory time tf={tf} exceeds network time tc={tc}"
            )));
        }
        Ok(Self { tc, tf })
    }

    pub fn tc(&self) -> f64 {
        self.tc
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }
}

fn check(n: u64, processes: u64) -> Result<(), CostError> {
    if n == 0 {
        return Err(CostError::ZeroDimension);
    }
    if processes < 2 {
        return Err(CostError::TooFewProcesses(processes));
    }
    Ok(())
}

/// Data sent by the master: `(P-1) * (N^2 + N/(P-1)) = (P-1)N^2 + N`.
pub fn comm_cost_distribute(n: u64, processes: u64) -> Result<u64, CostError> {
    check(n, processes)?;
    Ok((processes - 1) * n * n + n)
}

/// Data returned to the master: `(P-1) * N/(P-1) = N`.
pub fn comm_cost_collect(n: u64, processes: u64) -> Result<u64, CostError> {
    check(n, processes)?;
    Ok(n)
}

/// Data moved in one run: `(P-1)N^2 + 2N`.
pub fn comm_datums_total(n: u64, processes: u64) -> Result<u64, CostError> {
    Ok(comm_cost_distribute(n, processes)? + comm_cost_collect(n, processes)?)
}

/// Network share of the total: `((P-1)N^2 + 2N) * tc`.
pub fn comm_cost_network(n: u64, processes: u64, params: &CostParams) -> Result<f64, CostError> {
    Ok(comm_datums_total(n, processes)? as f64 * params.tc)
}

/// Shared-memory share of the total: `((P-1)N^2 + 2N) * tf`.
pub fn comm_cost_shared(n: u64, processes: u64, params: &CostParams) -> Result<f64, CostError> {
    Ok(comm_datums_total(n, processes)? as f64 * params.tf)
}

/// Seconds for one run with one worker beside the master and one across the
/// network: `((P-1)N^2 + 2N) * (tc + tf)`.
pub fn comm_cost_total(n: u64, processes: u64, params: &CostParams) -> Result<f64, CostError> {
    Ok(comm_cost_network(n, processes, params)? + comm_cost_shared(n, processes, params)?)
}

/// Per-worker multiply work with `P - 1` workers: `N^3 / (P-1)`.
pub fn complexity_msg(n: u64, processes: u64) -> Result<f64, CostError> {
    check(n, processes)?;
    Ok((n as f64).powi(3) / (processes - 1) as f64)
}

/// Per-thread multiply work with `t` threads: `N^3 / t`.
pub fn complexity_thread(n: u64, threads: u64) -> Result<f64, CostError> {
    if n == 0 {
        return Err(CostError::ZeroDimension);
    }
    if threads == 0 {
        return Err(CostError::NoThreads);
    }
    Ok((n as f64).powi(3) / threads as f64)
}
