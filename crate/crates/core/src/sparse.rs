//! Compressed-sparse-row storage for symmetric positive definite operators and
//! the deterministic vector kernels used by every solver.
//!
//! All reductions accumulate strictly left to right, starting from zero. The
//! rollback tests compare trajectories bitwise, so no kernel in this module is
//! allowed to reassociate.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("matrix is not symmetric: entry ({row}, {col}) has no mirror with the same value")]
    NotSymmetric { row: usize, col: usize },
    #[error("cannot estimate the norm of a zero matrix")]
    ZeroMatrix,
}

/// Symmetric positive definite matrix in CSR form.
///
/// Both triangles are stored. `max_row_nnz` (the `m` of the matvec rounding
/// model) is cached at assembly; the 2-norm estimate is filled in by
/// [`SparseSpdMatrix::estimate_norm2`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpdMatrix<T = f64> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    max_row_nnz: usize,
    norm2_estimate: Option<f64>,
}

impl<T: Scalar> SparseSpdMatrix<T> {
    /// Assemble from raw CSR arrays, validating the structural invariants and
    /// exact numerical symmetry.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self, SparseError> {
        if row_ptr.len() != n + 1 {
            return Err(SparseError::InvalidStructure(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[n] != col_idx.len() || col_idx.len() != values.len() {
            return Err(SparseError::InvalidStructure(
                "row_ptr must start at 0 and end at nnz, with matching col_idx/values".into(),
            ));
        }
        let mut max_row_nnz = 0;
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if hi < lo {
                return Err(SparseError::InvalidStructure(format!("row_ptr decreases at row {i}")));
            }
            max_row_nnz = max_row_nnz.max(hi - lo);
            let cols = &col_idx[lo..hi];
            if cols.iter().any(|&c| c >= n) {
                return Err(SparseError::InvalidStructure(format!("column index out of range in row {i}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SparseError::InvalidStructure(format!(
                    "column indices of row {i} are not strictly increasing"
                )));
            }
        }
        let m = Self { n, row_ptr, col_idx, values, max_row_nnz, norm2_estimate: None };
        m.check_symmetry()?;
        Ok(m)
    }

    /// Assemble from (row, col, value) triplets. Duplicates are summed in the
    /// order given.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self, SparseError> {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= n || j >= n {
                return Err(SparseError::InvalidStructure(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                let top = values.last_mut().expect("duplicate implies a previous entry");
                *top = *top + v;
                continue;
            }
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::from_csr(n, row_ptr, col_idx, values)
    }

    fn check_symmetry(&self) -> Result<(), SparseError> {
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                if self.get(j, i) != Some(self.values[idx]) {
                    return Err(SparseError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Maximum number of stored entries in any row.
    pub fn max_row_nnz(&self) -> usize {
        self.max_row_nnz
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|p| self.values[lo + p])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i).unwrap_or_else(T::zero)).collect()
    }

    /// Iterate over stored entries as (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |idx| (i, self.col_idx[idx], self.values[idx]))
        })
    }

    /// The same sparsity pattern with every value mapped through `f`.
    pub fn map_values<U: Scalar>(&self, f: impl Fn(T) -> U) -> SparseSpdMatrix<U> {
        SparseSpdMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            max_row_nnz: self.max_row_nnz,
            norm2_estimate: self.norm2_estimate,
        }
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>, SparseError> {
        check_len(self.n, x.len())?;
        Ok(self.matvec_unchecked(x))
    }

    pub(crate) fn matvec_unchecked(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let mut acc = T::zero();
                for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc = acc + self.values[idx] * x[self.col_idx[idx]];
                }
                acc
            })
            .collect()
    }
}

impl SparseSpdMatrix<f64> {
    /// The cached 2-norm estimate, if [`estimate_norm2`](Self::estimate_norm2) has run.
    pub fn norm2_estimate(&self) -> Option<f64> {
        self.norm2_estimate
    }

    /// The matvec rounding constant `c = m * sqrt(n)`.
    pub fn rounding_constant(&self) -> f64 {
        self.max_row_nnz as f64 * (self.n as f64).sqrt()
    }

    /// Power-iteration estimate of the 2-norm.
    ///
    /// Iterates until two successive Rayleigh quotients differ relatively by
    /// less than `tol`, or `max_iters` products have been formed. The start
    /// vector is a fixed, non-symmetric pattern so that structured matrices
    /// (whose dominant eigenvector may be orthogonal to the all-ones vector)
    /// still converge to the top of the spectrum.
    pub fn estimate_norm2(&mut self, tol: f64, max_iters: usize) -> Result<f64, SparseError> {
        if self.values.iter().all(|&v| v == 0.0) || self.n == 0 {
            return Err(SparseError::ZeroMatrix);
        }
        let mut x: Vec<f64> = (0..self.n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
        let mut previous: Option<f64> = None;
        let mut estimate = 0.0;
        for _ in 0..max_iters.max(1) {
            let y = self.matvec_unchecked(&x);
            let rq = dot_unchecked(&x, &y) / dot_unchecked(&x, &x);
            estimate = rq.abs();
            if let Some(p) = previous {
                if (estimate - p).abs() <= tol * estimate {
                    break;
                }
            }
            previous = Some(estimate);
            let norm = norm2(&y);
            if norm == 0.0 {
                break;
            }
            x = y.iter().map(|v| v / norm).collect();
        }
        self.norm2_estimate = Some(estimate);
        Ok(estimate)
    }

    /// Attach an externally known norm (e.g. from a previous estimate).
    pub fn set_norm2_estimate(&mut self, value: f64) {
        self.norm2_estimate = Some(value);
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), SparseError> {
    if expected == got {
        Ok(())
    } else {
        Err(SparseError::DimensionMismatch { expected, got })
    }
}

/// Inner product with sequential accumulation.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> Result<T, SparseError> {
    check_len(x.len(), y.len())?;
    Ok(dot_unchecked(x, y))
}

/// `x + a*y`, elementwise.
pub fn axpy<T: Scalar>(x: &[T], a: T, y: &[T]) -> Result<Vec<T>, SparseError> {
    check_len(x.len(), y.len())?;
    Ok(axpy_unchecked(x, a, y))
}

#[inline]
pub(crate) fn dot_unchecked<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc = acc + a * b;
    }
    acc
}

#[inline]
pub(crate) fn axpy_unchecked<T: Scalar>(x: &[T], a: T, y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&xi, &yi)| xi + a * yi).collect()
}

/// Euclidean norm computed directly from the vector entries.
pub fn norm2(x: &[f64]) -> f64 {
    dot_unchecked(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two() -> SparseSpdMatrix {
        SparseSpdMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap()
    }

    fn identity(n: usize) -> SparseSpdMatrix {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        SparseSpdMatrix::from_triplets(n, &t).unwrap()
    }

    fn diag(d: &[f64]) -> SparseSpdMatrix {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseSpdMatrix::from_triplets(d.len(), &t).unwrap()
    }

    #[test]
    fn matvec_examples() {
        assert_eq!(identity(3).matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(diag(&[2.0, 2.0]).matvec(&[1.0, -1.0]).unwrap(), vec![2.0, -2.0]);
        // [[2,1],[1,2]] (1,1) = (2+1, 1+2)
        assert_eq!(two_by_two().matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn matvec_rejects_wrong_length() {
        assert_eq!(
            two_by_two().matvec(&[1.0]),
            Err(SparseError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dot(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap(), 3.0);
        // Reference: ((0 + 0.1*10) + 0.2*10) evaluated one rounding at a time.
        let mut reference = 0.0f64;
        reference += 0.1f64 * 10.0;
        reference += 0.2f64 * 10.0;
        assert_eq!(dot(&[0.1, 0.2], &[10.0, 10.0]).unwrap().to_bits(), reference.to_bits());
        assert!(dot(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(&[1.0, 1.0], 0.0, &[5.0, 5.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(axpy(&[0.0, 0.0], 1.0, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        assert_eq!(axpy(&[1.0, 2.0], -2.0, &[0.5, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(axpy(&[1.0], 1.0, &[]).is_err());
    }

    #[test]
    fn rejects_asymmetric_input() {
        let err = SparseSpdMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap_err();
        assert!(matches!(err, SparseError::NotSymmetric { .. }));
    }

    #[test]
    fn caches_max_row_nnz() {
        assert_eq!(two_by_two().max_row_nnz(), 2);
        assert_eq!(identity(4).max_row_nnz(), 1);
        assert_eq!(two_by_two().rounding_constant(), 2.0 * 2f64.sqrt());
    }

    #[test]
    fn norm_estimates() {
        let mut d = diag(&[1.0, 2.0, 3.0]);
        let est = d.estimate_norm2(1e-4, 200).unwrap();
        assert!((3.0 - est) / 3.0 <= 1e-4 && est <= 3.0 * (1.0 + 1e-12), "{est}");
        assert_eq!(d.norm2_estimate(), Some(est));

        let mut eye = identity(17);
        assert_eq!(eye.estimate_norm2(1e-4, 1).unwrap(), 1.0);

        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let mut a = two_by_two();
        let est = a.estimate_norm2(1e-4, 200).unwrap();
        assert!((3.0 - est) / 3.0 <= 1e-4, "{est}");
    }

    #[test]
    fn zero_matrix_has_no_norm_estimate() {
        let mut z = SparseSpdMatrix::from_triplets(2, &[(0, 0, 0.0)]).unwrap();
        assert_eq!(z.estimate_norm2(1e-4, 10), Err(SparseError::ZeroMatrix));
    }

    fn banded(n: usize, vals: &[f64]) -> SparseSpdMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + vals[i % vals.len()].abs()));
            if i + 1 < n {
                let v = vals[(i + 1) % vals.len()];
                t.push((i, i + 1, v));
                t.push((i + 1, i, v));
            }
        }
        SparseSpdMatrix::from_triplets(n, &t).unwrap()
    }

    proptest! {
        #[test]
        fn kernels_are_bitwise_repeatable(vals in prop::collection::vec(-1.0f64..1.0, 1..20), n in 2usize..40) {
            let a = banded(n, &vals);
            let x: Vec<f64> = (0..n).map(|i| vals[i % vals.len()] * 3.7 + i as f64).collect();
            let y1 = a.matvec(&x).unwrap();
            let y2 = a.matvec(&x).unwrap();
            prop_assert!(y1.iter().zip(&y2).all(|(p, q)| p.to_bits() == q.to_bits()));
            prop_assert_eq!(dot(&x, &y1).unwrap().to_bits(), dot(&x, &y2).unwrap().to_bits());
        }

        #[test]
        fn matvec_with_unit_vector_extracts_column(vals in prop::collection::vec(-1.0f64..1.0, 1..10), n in 1usize..30, j in 0usize..30) {
            let j = j % n;
            let a = banded(n, &vals);
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = a.matvec(&e).unwrap();
            for (i, c) in col.iter().enumerate() {
                prop_assert_eq!(c.to_bits(), a.get(i, j).unwrap_or(0.0).to_bits());
            }
        }

        #[test]
        fn norm_estimate_of_diagonal_matches_largest_entry(d in prop::collection::vec(0.1f64..10.0, 1..12)) {
            let mut a = diag(&d);
            let est = a.estimate_norm2(1e-4, 200).unwrap();
            let top = d.iter().cloned().fold(0.0, f64::max);
            prop_assert!(est <= top * (1.0 + 1e-12));
            let bottom = d.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(est >= bottom * (1.0 - 1e-12));
        }
    }
}
