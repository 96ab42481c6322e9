//! Sparse LU with a reusable symbolic analysis.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par};

use crate::error::{Error, Result};

#[derive(Debug)]
pub(crate) struct SparseLu {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl SparseLu {
    pub fn new(n: usize, col_ptr: Vec<usize>, row_idx: Vec<usize>) -> Result<Self> {
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = factorize_symbolic_lu(pattern, Default::default())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SparseLu {
            n,
            col_ptr,
            row_idx,
            symbolic,
        })
    }

    /// Factor the matrix with the given values and solve for the `rhs.len() / n`
    /// column-major right-hand sides in place.
    pub fn solve(&self, values: &[f64], rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Ok(());
        }
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(pattern, values);
        let mut numeric = NumericLu::<usize, f64>::new();
        let mut buf = MemBuffer::new(self.symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()));
        let lu = self
            .symbolic
            .factorize_numeric_lu(&mut numeric, mat, Par::Seq, MemStack::new(&mut buf), Default::default())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let k = rhs.len() / n;
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(k, Par::Seq));
        lu.solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(rhs, n, k),
            Par::Seq,
            MemStack::new(&mut buf),
        );
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("singular tangent (non-finite solution)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_unsymmetric_system() {
        // [[4, 1, 0], [2, 5, 1], [0, 1, 3]] in CSC
        let col_ptr = vec![0, 2, 5, 7];
        let row_idx = vec![0, 1, 0, 1, 2, 1, 2];
        let vals = [4.0, 2.0, 1.0, 5.0, 1.0, 1.0, 3.0];
        let lu = SparseLu::new(3, col_ptr, row_idx).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut b = vec![4.0 * x[0] + x[1], 2.0 * x[0] + 5.0 * x[1] + x[2], x[1] + 3.0 * x[2]];
        lu.solve(&vals, &mut b).unwrap();
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }
}
