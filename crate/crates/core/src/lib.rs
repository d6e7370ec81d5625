//! Parallel matrix-multiplication workshare.
//!
//! Three execution models compute the same dense product:
//!
//! * [`matrix::matmul_seq`], the sequential triple loop and bitwise oracle,
//! * [`workshare::matmul_threads`], a fork-join region with a static row schedule,
//! * [`master_worker`], a rank-0 master distributing row slices to worker
//!   processes over the [`msg`] runtime.
//!
//! [`cost`] holds the analytic communication model and [`bench`] the
//! harness that times, gates and reports all three.

pub mod bench;
pub mod cost;
pub mod master_worker;
pub mod matrix;
pub mod msg;
pub mod workshare;

pub use matrix::{matmul_seq, op_count, random_matrix, Matrix, MatrixError, OpCount};
