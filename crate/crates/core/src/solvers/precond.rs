use crate::scalar::Scalar;
use crate::sparse::SparseSpdMatrix;

/// Application of `M^{-1}` to a vector.
pub trait Preconditioner<T>: Sync {
    fn apply(&self, v: &[T]) -> Vec<T>;

    /// When true the engines skip every preconditioned quantity and use the
    /// collapsed unpreconditioned recurrences.
    fn is_identity(&self) -> bool {
        false
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Identity;

impl<T: Scalar> Preconditioner<T> for Identity {
    fn apply(&self, v: &[T]) -> Vec<T> {
        v.to_vec()
    }

    fn is_identity(&self) -> bool {
        true
    }
}

/// Diagonal scaling, `M = diag(A)`.
#[derive(Debug, Clone)]
pub struct Jacobi<T> {
    diag: Vec<T>,
}

impl<T: Scalar> Jacobi<T> {
    pub fn new(a: &SparseSpdMatrix<T>) -> Self {
        Self { diag: a.diagonal() }
    }
}

impl<T: Scalar> Preconditioner<T> for Jacobi<T> {
    fn apply(&self, v: &[T]) -> Vec<T> {
        v.iter().zip(&self.diag).map(|(&x, &d)| x / d).collect()
    }
}
