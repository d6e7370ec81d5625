//! Master/worker matrix multiplication over the message runtime.
//!
//! Rank 0 splits the rows of A over ranks `1..P`, sends each worker its
//! offset, row count, A slice and all of B under tag 1, then collects
//! offset, row count and C slice from every worker under tag 2. The master
//! does not multiply.

use thiserror::Error;

use crate::matrix::{check_inner, Matrix, MatrixError};
use crate::msg::{wall_time, Communicator, MsgError, RankId};

/// Tag on every master-to-worker message.
pub const TAG_DISTRIBUTE: u32 = 1;
/// Tag on every worker-to-master message.
pub const TAG_COLLECT: u32 = 2;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("master_run needs rank 0 and at least one worker (rank {rank}, world {world_size})")]
    NotMaster { rank: u32, world_size: u32 },
    #[error("worker_run called on rank 0")]
    NotWorker,
    #[error("rank {rank}: {source}")]
    Transport {
        rank: u32,
        #[source]
        source: MsgError,
    },
    #[error("rank {rank} sent an invalid reply: {detail}")]
    BadReply { rank: u32, detail: String },
    #[error("master sent an invalid assignment: {0}")]
    BadAssignment(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Rows `offset..offset + rows` of A owned by one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkAssignment {
    pub offset: usize,
    pub rows: usize,
}

/// Row split in worker-id order: `averow = n_rows / n_workers`, and workers
/// `1..=extra` (with `extra = n_rows % n_workers`) take one row more.
pub fn split_rows(n_rows: usize, n_workers: usize) -> Result<Vec<WorkAssignment>, ProtocolError> {
    if n_workers == 0 {
        return Err(ProtocolError::NoWorkers);
    }
    let averow = n_rows / n_workers;
    let extra = n_rows % n_workers;
    let mut offset = 0;
    let mut out = Vec::with_capacity(n_workers);
    for dest in 1..=n_workers {
        let rows = if dest <= extra { averow + 1 } else { averow };
        out.push(WorkAssignment { offset, rows });
        offset += rows;
    }
    Ok(out)
}

fn at(rank: RankId) -> impl Fn(MsgError) -> ProtocolError {
    move |source| ProtocolError::Transport { rank: rank.0, source }
}

/// Runs the master side. Returns C and the seconds from the first
/// distribution send to the last result receive.
pub fn master_run(
    comm: &Communicator,
    a: &Matrix,
    b: &Matrix,
) -> Result<(Matrix, f64), ProtocolError> {
    if !comm.rank().is_master() || comm.world_size() < 2 {
        return Err(ProtocolError::NotMaster {
            rank: comm.rank().0,
            world_size: comm.world_size(),
        });
    }
    check_inner(a, b)?;
    let workers = comm.world_size() as usize - 1;
    let plan = split_rows(a.rows(), workers)?;
    let mut c = Matrix::zeros(a.rows(), b.cols())?;

    let start = wall_time();
    for (w, job) in plan.iter().enumerate() {
        let dest = RankId(w as u32 + 1);
        let err = at(dest);
        comm.send_i64(dest, TAG_DISTRIBUTE, job.offset as i64).map_err(&err)?;
        comm.send_i64(dest, TAG_DISTRIBUTE, job.rows as i64).map_err(&err)?;
        comm.send_f64s(dest, TAG_DISTRIBUTE, a.row_block(job.offset, job.rows))
            .map_err(&err)?;
        comm.send_f64s(dest, TAG_DISTRIBUTE, b.as_slice()).map_err(&err)?;
    }

    let mut filled = vec![false; a.rows()];
    for w in 1..=workers {
        let source = RankId(w as u32);
        let err = at(source);
        let offset = comm.recv_i64(source, TAG_COLLECT).map_err(&err)?;
        let rows = comm.recv_i64(source, TAG_COLLECT).map_err(&err)?;
        let slice = comm.recv_f64s(source, TAG_COLLECT).map_err(&err)?;
        place_reply(&mut c, &mut filled, source, offset, rows, &slice)?;
    }
    let elapsed = wall_time() - start;

    if let Some(row) = filled.iter().position(|f| !f) {
        return Err(ProtocolError::BadReply {
            rank: 0,
            detail: format!("row {row} was never returned"),
        });
    }
    Ok((c, elapsed))
}

/// Checks one worker's reply and copies its rows into C by offset.
fn place_reply(
    c: &mut Matrix,
    filled: &mut [bool],
    source: RankId,
    offset: i64,
    rows: i64,
    slice: &[f64],
) -> Result<(), ProtocolError> {
    let n = c.rows();
    let bad = |detail: String| ProtocolError::BadReply {
        rank: source.0,
        detail,
    };
    let offset = usize::try_from(offset).map_err(|_| bad(format!("negative offset {offset}")))?;
    let rows = usize::try_from(rows).map_err(|_| bad(format!("negative row count {rows}")))?;
    // An idle worker's offset may sit one past the end.
    if (rows > 0 && offset >= n) || offset > n || offset + rows > n {
        return Err(bad(format!("rows {offset}..{} outside 0..{n}", offset + rows)));
    }
    let cols = c.cols();
    if slice.len() != rows * cols {
        return Err(bad(format!(
            "slice has {} values, expected {}",
            slice.len(),
            rows * cols
        )));
    }
    if let Some(dup) = (offset..offset + rows).find(|&r| filled[r]) {
        return Err(bad(format!("row {dup} returned twice")));
    }
    filled[offset..offset + rows].fill(true);
    c.as_mut_slice()[offset * cols..(offset + rows) * cols].copy_from_slice(slice);
    Ok(())
}

/// Runs one worker: receive an assignment, multiply, reply.
///
/// The A slice and B arrive as flat arrays, so the inner dimension is the
/// slice length over the row count and B's width is B's length over that.
/// An empty assignment still answers with an empty slice.
pub fn worker_run(comm: &Communicator) -> Result<(), ProtocolError> {
    if comm.rank().is_master() {
        return Err(ProtocolError::NotWorker);
    }
    let master = RankId::MASTER;
    let err = at(master);
    let offset = comm.recv_i64(master, TAG_DISTRIBUTE).map_err(&err)?;
    let rows = comm.recv_i64(master, TAG_DISTRIBUTE).map_err(&err)?;
    let a = comm.recv_f64s(master, TAG_DISTRIBUTE).map_err(&err)?;
    let b = comm.recv_f64s(master, TAG_DISTRIBUTE).map_err(&err)?;

    let c = multiply_assignment(rows, &a, &b)?;

    comm.send_i64(master, TAG_COLLECT, offset).map_err(&err)?;
    comm.send_i64(master, TAG_COLLECT, rows).map_err(&err)?;
    comm.send_f64s(master, TAG_COLLECT, &c).map_err(&err)?;
    Ok(())
}

fn multiply_assignment(rows: i64, a: &[f64], b: &[f64]) -> Result<Vec<f64>, ProtocolError> {
    let rows = usize::try_from(rows)
        .map_err(|_| ProtocolError::BadAssignment(format!("negative row count {rows}")))?;
    if rows == 0 {
        return Ok(Vec::new());
    }
    if a.is_empty() || a.len() % rows != 0 {
        return Err(ProtocolError::BadAssignment(format!(
            "A slice of {} values does not split into {rows} rows",
            a.len()
        )));
    }
    let inner = a.len() / rows;
    if b.is_empty() || b.len() % inner != 0 {
        return Err(ProtocolError::BadAssignment(format!(
            "B of {} values does not have {inner} rows",
            b.len()
        )));
    }
    let cols = b.len() / inner;
    Ok(multiply_block(a, b, rows, inner, cols))
}

/// Column-outer block product: for each k, for each i, `c[i][k]` summed from
/// 0.0 over ascending j.
fn multiply_block(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut c = vec![0.0; rows * cols];
    for k in 0..cols {
        for i in 0..rows {
            let a_row = &a[i * inner..(i + 1) * inner];
            let mut acc = 0.0;
            for (j, &x) in a_row.iter().enumerate() {
                acc += x * b[j * cols + k];
            }
            c[i * cols + k] = acc;
        }
    }
    c
}
