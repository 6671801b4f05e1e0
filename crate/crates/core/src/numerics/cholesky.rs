//! Cholesky factorization of symmetric positive definite matrices.
//!
//! Large systems go through faer's supernodal/simplicial sparse Cholesky
//! with an approximate minimum degree ordering; tiny ones use a dense
//! factor.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::linalg::solvers::LltError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use super::SparseMatrix;
use crate::error::{Error, Result};

const DENSE_LIMIT: usize = 64;

enum Inner {
    Empty,
    /// Row-major lower factor.
    Dense(Vec<f64>),
    Sparse {
        symbolic: SymbolicCholesky<usize>,
        l_values: Vec<f64>,
    },
}

/// Reusable `LLᵀ` factor.
pub struct Factorization {
    n: usize,
    inner: Inner,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.inner {
            Inner::Empty => "empty",
            Inner::Dense(_) => "dense",
            Inner::Sparse { .. } => "sparse",
        };
        f.debug_struct("Factorization").field("n", &self.n).field("kind", &kind).finish()
    }
}

fn dense_cholesky(a: &SparseMatrix) -> Result<Vec<f64>> {
    let n = a.n_rows;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if c <= i {
                l[i * n + c] = v;
            }
        }
    }
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j });
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Factors a symmetric positive definite matrix. Only the lower triangle is
/// read.
pub fn factorize_spd(a: &SparseMatrix) -> Result<Factorization> {
    if a.n_rows != a.n_cols {
        return Err(Error::DimMismatch {
            expected: a.n_rows,
            got: a.n_cols,
        });
    }
    let n = a.n_rows;
    if n == 0 {
        return Ok(Factorization { n, inner: Inner::Empty });
    }
    if n <= DENSE_LIMIT {
        return Ok(Factorization {
            n,
            inner: Inner::Dense(dense_cholesky(a)?),
        });
    }
    // a symmetric CSR matrix read as CSC is itself
    let sym = SymbolicSparseColMatRef::new_checked(n, n, &a.row_ptr, None, &a.col_idx);
    let mat = SparseColMatRef::<usize, f64>::new(sym, &a.values);
    let symbolic = factorize_symbolic_cholesky(sym, Side::Lower, SymmetricOrdering::Amd, Default::default())
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let mut l_values = vec![0.0; symbolic.len_val()];
    let mut buf = MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()));
    symbolic
        .factorize_numeric_llt::<f64>(
            &mut l_values,
            mat,
            Side::Lower,
            Default::default(),
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        )
        .map_err(|e| match e {
            LltError::NonPositivePivot { index } => Error::NotPositiveDefinite { index },
        })?;
    Ok(Factorization {
        n,
        inner: Inner::Sparse { symbolic, l_values },
    })
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "right-hand side length");
        match &self.inner {
            Inner::Empty => {}
            Inner::Dense(l) => {
                let n = self.n;
                for i in 0..n {
                    let mut s = b[i];
                    for k in 0..i {
                        s -= l[i * n + k] * b[k];
                    }
                    b[i] = s / l[i * n + i];
                }
                for i in (0..n).rev() {
                    let mut s = b[i];
                    for k in i + 1..n {
                        s -= l[k * n + i] * b[k];
                    }
                    b[i] = s / l[i * n + i];
                }
            }
            Inner::Sparse { symbolic, l_values } => {
                let llt = LltRef::<'_, usize, f64>::new(symbolic, l_values);
                let mut buf = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
                llt.solve_in_place_with_conj(
                    Conj::No,
                    MatMut::from_column_major_slice_mut(b, self.n, 1),
                    Par::Seq,
                    MemStack::new(&mut buf),
                );
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
