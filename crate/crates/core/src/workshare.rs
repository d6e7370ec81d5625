//! Fork-join parallel regions with a static block schedule.
//!
//! A region forks `workers - 1` scoped threads, the caller runs as worker 0,
//! and the call returns only once every worker has finished. Threads are
//! created per region, so thread creation is part of any timing taken around
//! the call.

use std::any::Any;
use std::panic::{self, AssertUnwindSafe};
use std::thread;

use thiserror::Error;

use crate::matrix::{check_inner, multiply_rows, Matrix, MatrixError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegionError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("worker {worker} panicked: {message}")]
    WorkerPanicked { worker: usize, message: String },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Iteration range `[start, start + len)` owned by one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

/// One [`Span`] per worker, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    spans: Vec<Span>,
}

impl Partition {
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn workers(&self) -> usize {
        self.spans.len()
    }

    pub fn iterations(&self) -> usize {
        self.spans.last().map_or(0, Span::end)
    }

    pub fn owner_of(&self, iteration: usize) -> Option<usize> {
        self.spans.iter().position(|s| s.range().contains(&iteration))
    }

    /// `(start, len)` pairs, mostly for comparisons in tests.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.spans.iter().map(|s| (s.start, s.len)).collect()
    }
}

/// Equal block split; the first `iterations % workers` workers take one extra.
/// Busy spans are contiguous from 0. Idle workers (only when
/// `workers > iterations`) get an empty span at their own index.
pub fn static_partition(iterations: usize, workers: usize) -> Result<Partition, RegionError> {
    if workers == 0 {
        return Err(RegionError::NoWorkers);
    }
    let base = iterations / workers;
    let extra = iterations % workers;
    let spans = (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let start = if len == 0 { w } else { w * base + w.min(extra) };
            Span { start, len }
        })
        .collect();
    Ok(Partition { spans })
}

/// Worker count matching the available hardware cores.
pub fn default_workers() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `body(worker, iteration)` once for each iteration in `0..iterations`,
/// statically scheduled over `workers`.
pub fn parallel_for<F>(iterations: usize, workers: usize, body: F) -> Result<(), RegionError>
where
    F: Fn(usize, usize) + Sync,
{
    let partition = static_partition(iterations, workers)?;
    if iterations == 0 {
        return Ok(());
    }
    fork_join(&partition, |worker, span| {
        for i in span.range() {
            body(worker, i);
        }
    })
}

/// Runs `body(worker, span)` for every span of `partition` in its own worker.
pub fn fork_join<F>(partition: &Partition, body: F) -> Result<(), RegionError>
where
    F: Fn(usize, Span) + Sync,
{
    let tasks: Vec<_> = partition.spans().iter().copied().enumerate().collect();
    run_region(tasks, |(worker, span)| body(worker, span))
}

/// Like [`fork_join`], handing each worker the disjoint `stride`-wide slice of
/// `out` that backs its span.
pub fn fork_join_mut<T, F>(
    partition: &Partition,
    out: &mut [T],
    stride: usize,
    body: F,
) -> Result<(), RegionError>
where
    T: Send,
    F: Fn(usize, Span, &mut [T]) + Sync,
{
    assert_eq!(
        out.len(),
        partition.iterations() * stride,
        "output does not match partition"
    );
    let mut tasks = Vec::with_capacity(partition.workers());
    let mut rest = out;
    for (worker, &span) in partition.spans().iter().enumerate() {
        let (mine, tail) = rest.split_at_mut(span.len * stride);
        tasks.push((worker, span, mine));
        rest = tail;
    }
    run_region(tasks, |(worker, span, chunk)| body(worker, span, chunk))
}

/// Forks one thread per task after the first, runs task 0 inline and joins all.
/// The first panic (lowest worker id) is reported after the barrier.
fn run_region<T, F>(tasks: Vec<T>, body: F) -> Result<(), RegionError>
where
    T: Send,
    F: Fn(T) + Sync,
{
    let mut tasks = tasks.into_iter();
    let Some(first) = tasks.next() else {
        return Ok(());
    };
    let body = &body;
    let outcomes: Vec<Result<(), Box<dyn Any + Send>>> = thread::scope(|s| {
        let handles: Vec<_> = tasks.map(|task| s.spawn(move || body(task))).collect();
        let own = panic::catch_unwind(AssertUnwindSafe(|| body(first)));
        std::iter::once(own)
            .chain(handles.into_iter().map(|h| h.join()))
            .collect()
    });
    for (worker, outcome) in outcomes.into_iter().enumerate() {
        if let Err(payload) = outcome {
            return Err(RegionError::WorkerPanicked {
                worker,
                message: panic_message(payload.as_ref()),
            });
        }
    }
    Ok(())
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Shared-memory product: rows of C statically split over `workers`.
///
/// Bitwise equal to [`crate::matmul_seq`]; every element uses the same
/// ascending inner-index summation.
pub fn matmul_threads(a: &Matrix, b: &Matrix, workers: usize) -> Result<Matrix, RegionError> {
    matmul_threads_traced(a, b, workers).map(|(c, _)| c)
}

/// [`matmul_threads`] that also reports which worker wrote each row of C.
pub fn matmul_threads_traced(
    a: &Matrix,
    b: &Matrix,
    workers: usize,
) -> Result<(Matrix, Vec<usize>), RegionError> {
    check_inner(a, b)?;
    let partition = static_partition(a.rows(), workers)?;
    let mut c = Matrix::zeros(a.rows(), b.cols())?;
    let mut owners = vec![usize::MAX; a.rows()];
    let n = b.cols();
    let inner = a.cols();

    // C rows and the owner table are split along the same spans.
    let mut tasks = Vec::with_capacity(partition.workers());
    let (mut c_rest, mut o_rest) = (c.as_mut_slice(), owners.as_mut_slice());
    for (worker, &span) in partition.spans().iter().enumerate() {
        let (c_mine, c_tail) = c_rest.split_at_mut(span.len * n);
        let (o_mine, o_tail) = o_rest.split_at_mut(span.len);
        tasks.push((worker, span, c_mine, o_mine));
        c_rest = c_tail;
        o_rest = o_tail;
    }
    run_region(tasks, |(worker, span, c_rows, owned)| {
        multiply_rows(a.row_block(span.start, span.len), inner, b, c_rows);
        owned.fill(worker);
    })?;
    Ok((c, owners))
}
