//! Dense row-major matrices, deterministic initialization and the
//! sequential multiplication that every parallel model is checked against.

use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("inner dimensions differ: left has {left_cols} columns, right has {right_rows} rows")]
    InnerMismatch { left_cols: usize, right_rows: usize },
    #[error("data length {actual} does not match {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        actual: usize,
    },
    #[error("operation count is undefined for N = {0}")]
    Domain(u64),
    #[error("operation count overflows u64 for N = {0}")]
    Overflow(u64),
}

/// Dense `rows x cols` matrix of `f64`, element `(i, j)` at `i * cols + j`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self, MatrixError> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(MatrixError::DataLength {
                rows,
                cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row literals. Panics on ragged or empty input.
    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        let data = rows.iter().flatten().copied().collect();
        Self::from_vec(rows.len(), C, data).expect("non-empty rectangular rows")
    }

    pub fn identity(n: usize) -> Result<Self, MatrixError> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Contiguous storage of rows `offset..offset + count`.
    pub fn row_block(&self, offset: usize, count: usize) -> &[f64] {
        if count == 0 {
            return &[];
        }
        &self.data[offset * self.cols..(offset + count) * self.cols]
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Index of the first element whose bit pattern differs from `other`.
    ///
    /// Shape mismatches report index 0.
    pub fn first_bitwise_difference(&self, other: &Matrix) -> Option<usize> {
        if self.rows != other.rows || self.cols != other.cols {
            return Some(0);
        }
        self.data
            .iter()
            .zip(&other.data)
            .position(|(x, y)| x.to_bits() != y.to_bits())
    }

    pub fn bitwise_eq(&self, other: &Matrix) -> bool {
        self.first_bitwise_difference(other).is_none()
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for (idx, v) in self.data.iter().take(SHOWN).enumerate() {
            if idx > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<(), MatrixError> {
    if rows == 0 || cols == 0 {
        return Err(MatrixError::ZeroDimension { rows, cols });
    }
    Ok(())
}

/// Uniform `[0, 1)` matrix filled in row-major order.
///
/// The stream is ChaCha8 seeded through `seed_from_u64`; each element takes
/// the top 53 bits of one `next_u64` draw scaled by 2^-53. Both steps are
/// platform independent, so equal `(rows, cols, seed)` give bitwise-equal
/// matrices everywhere.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Result<Matrix, MatrixError> {
    check_dims(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (1u64 << 53) as f64;
    let data = (0..rows * cols)
        .map(|_| (rng.next_u64() >> 11) as f64 * scale)
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// The `(A, B)` pair every benchmark model multiplies for dimension `n`.
pub fn benchmark_inputs(n: usize, seed: u64) -> Result<(Matrix, Matrix), MatrixError> {
    Ok((
        random_matrix(n, n, seed)?,
        random_matrix(n, n, seed.wrapping_add(1))?,
    ))
}

/// `C(i,k) = sum_j A(i,j) * B(j,k)`, accumulated from 0.0 over ascending `j`.
///
/// Loop nest is i, k, j. The per-element summation order defined here is the
/// reference the threaded and message-passing variants reproduce bit for bit.
pub fn matmul_seq(a: &Matrix, b: &Matrix) -> Result<Matrix, MatrixError> {
    check_inner(a, b)?;
    let mut c = Matrix::zeros(a.rows, b.cols)?;
    multiply_rows(a.as_slice(), a.cols, b, c.as_mut_slice());
    Ok(c)
}

pub(crate) fn check_inner(a: &Matrix, b: &Matrix) -> Result<(), MatrixError> {
    if a.cols != b.rows {
        return Err(MatrixError::InnerMismatch {
            left_cols: a.cols,
            right_rows: b.rows,
        });
    }
    Ok(())
}

/// Multiplies a block of A rows (row-major, `inner` columns) by `b` into `out`.
pub(crate) fn multiply_rows(a_rows: &[f64], inner: usize, b: &Matrix, out: &mut [f64]) {
    let n = b.cols;
    let bd = b.as_slice();
    for (a_row, c_row) in a_rows.chunks_exact(inner).zip(out.chunks_exact_mut(n)) {
        for (k, c) in c_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &x) in a_row.iter().enumerate() {
                acc += x * bd[j * n + k];
            }
            *c = acc;
        }
    }
}

/// Floating-point operation count of an `N x N` product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OpCount(pub u64);

impl OpCount {
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

/// `N^2 (2N - 1)`: N multiplies and N - 1 adds for each of the N^2 outputs.
pub fn op_count(n: u64) -> Result<OpCount, MatrixError> {
    if n == 0 {
        return Err(MatrixError::Domain(n));
    }
    n.checked_mul(n)
        .and_then(|sq| sq.checked_mul(2 * n - 1))
        .map(OpCount)
        .ok_or(MatrixError::Overflow(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn random_single_element_in_unit_interval() {
        for seed in 0..64 {
            let m = random_matrix(1, 1, seed).unwrap();
            let v = m.get(0, 0);
            assert!((0.0..1.0).contains(&v), "seed {seed}: {v}");
        }
    }

    #[test]
    fn random_is_deterministic() {
        let a = random_matrix(3, 3, 42).unwrap();
        let b = random_matrix(3, 3, 42).unwrap();
        assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn random_depends_on_seed() {
        let a = random_matrix(2, 3, 7).unwrap();
        let b = random_matrix(2, 3, 8).unwrap();
        assert!(a.first_bitwise_difference(&b).is_some());
    }

    #[test]
    fn random_prefix_is_stable_across_shapes() {
        // Row-major fill from one stream: a 2x3 and a 3x2 share their six draws.
        let a = random_matrix(2, 3, 11).unwrap();
        let b = random_matrix(3, 2, 11).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert_eq!(
            random_matrix(0, 3, 1).unwrap_err(),
            MatrixError::ZeroDimension { rows: 0, cols: 3 }
        );
        assert!(random_matrix(3, 0, 1).is_err());
        assert!(Matrix::zeros(0, 0).is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(matches!(
            Matrix::from_vec(2, 2, vec![1.0; 3]),
            Err(MatrixError::DataLength { actual: 3, .. })
        ));
    }

    #[test]
    fn identity_left_is_bitwise_noop() {
        let b = Matrix::from_rows(&[[0.1, -2.5], [3.75, 1e-300]]);
        let c = matmul_seq(&Matrix::identity(2).unwrap(), &b).unwrap();
        assert!(c.bitwise_eq(&b));
    }

    #[test]
    fn two_by_two_hand_computed() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        let c = matmul_seq(&a, &b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[19.0, 22.0], [43.0, 50.0]]));
    }

    #[test]
    fn scalar_product() {
        let c = matmul_seq(&Matrix::from_rows(&[[1.5]]), &Matrix::from_rows(&[[-4.0]])).unwrap();
        assert_eq!(c.get(0, 0), -6.0);
    }

    #[test]
    fn rectangular_shapes() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0]]);
        let b = Matrix::from_rows(&[[1.0], [1.0], [1.0]]);
        let c = matmul_seq(&a, &b).unwrap();
        assert_eq!((c.rows(), c.cols()), (1, 1));
        assert_eq!(c.get(0, 0), 6.0);
    }

    #[test]
    fn inner_mismatch_rejected() {
        let a = Matrix::zeros(2, 3).unwrap();
        let b = Matrix::zeros(2, 3).unwrap();
        assert_eq!(
            matmul_seq(&a, &b).unwrap_err(),
            MatrixError::InnerMismatch {
                left_cols: 3,
                right_rows: 2
            }
        );
    }

    #[test]
    fn summation_order_is_ascending_from_zero() {
        // 1e16 + 1 - 1e16 loses the 1 only if summed left to right.
        let a = Matrix::from_rows(&[[1e16, 1.0, -1e16]]);
        let b = Matrix::from_rows(&[[1.0], [1.0], [1.0]]);
        assert_eq!(matmul_seq(&a, &b).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn op_count_values() {
        assert_eq!(op_count(1).unwrap(), OpCount(1));
        assert_eq!(op_count(100).unwrap(), OpCount(1_990_000));
        assert_eq!(op_count(1000).unwrap(), OpCount(1_999_000_000));
        assert_eq!(op_count(0).unwrap_err(), MatrixError::Domain(0));
        assert!(matches!(op_count(u64::MAX), Err(MatrixError::Overflow(_))));
    }

    #[test]
    fn op_count_matches_enumerated_loop() {
        // Walk the triple loop: every j is a multiply, every j after the first an add.
        for n in 1..=20u64 {
            let (mut muls, mut adds) = (0u64, 0u64);
            for _i in 0..n {
                for _k in 0..n {
                    for j in 0..n {
                        muls += 1;
                        if j > 0 {
                            adds += 1;
                        }
                    }
                }
            }
            assert_eq!(muls, n * n * n);
            assert_eq!(adds, n * n * (n - 1));
            assert_eq!(op_count(n).unwrap().0, muls + adds);
        }
    }

    proptest! {
        #[test]
        fn identity_is_neutral(rows in 1usize..12, cols in 1usize..12, seed: u64) {
            let a = random_matrix(rows, cols, seed).unwrap();
            let right = matmul_seq(&a, &Matrix::identity(cols).unwrap()).unwrap();
            let left = matmul_seq(&Matrix::identity(rows).unwrap(), &a).unwrap();
            prop_assert!(right.bitwise_eq(&a));
            prop_assert!(left.bitwise_eq(&a));
        }

        #[test]
        fn random_is_pure(rows in 1usize..10, cols in 1usize..10, seed: u64) {
            let a = random_matrix(rows, cols, seed).unwrap();
            let b = random_matrix(rows, cols, seed).unwrap();
            prop_assert!(a.bitwise_eq(&b));
            prop_assert!(a.as_slice().iter().all(|v| (0.0..1.0).contains(v)));
        }
    }
}
