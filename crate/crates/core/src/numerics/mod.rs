//! Sparse linear algebra: CSR storage, SPD factorization and GMRES.

mod cholesky;
mod gmres;
mod sparse;

pub use cholesky::{factorize_spd, Factorization};
pub use gmres::{gmres, GmresOptions, GmresResult, GmresStatus, Monitor};
pub use sparse::{axpy, dot, norm2, SparseMatrix};
