//! Coarse spaces: the discrete Trefftz space built from harmonic extensions
//! of skeleton traces, and the Nicolaides baseline.

mod local;
mod nicolaides;
mod schur;
mod trace;
mod trefftz;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use local::{CellSolver, LocalSolvers};
pub use nicolaides::{build_nicolaides, nicolaides_family};
pub use schur::{schur_split, SchurSplit};
pub use trace::{TraceBasis, TraceLocation};
pub use trefftz::{build_trefftz, build_trefftz_with, dirichlet_lift};

use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::numerics::{factorize_spd, Factorization, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoarseKind {
    Trefftz { p: u32, r: u32 },
    Nicolaides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseSummary {
    pub kind: String,
    pub p: Option<u32>,
    pub r: Option<u32>,
    pub dim: usize,
    pub relative_dim: f64,
}

/// `R_H` (rows are basis vectors on the free DOFs), `A_H = R_H A R_Hᵀ` and
/// its factor. `lift` is a free-DOF offset carrying inhomogeneous Dirichlet
/// data into the coarse approximation; it is zero for homogeneous data.
#[derive(Debug)]
pub struct CoarseSpace {
    pub kind: CoarseKind,
    pub r_h: SparseMatrix,
    pub a_h: SparseMatrix,
    a_h_fact: Factorization,
    pub lift: Vec<f64>,
    pub n_subdomains: usize,
}

impl CoarseSpace {
    pub(crate) fn from_rows(
        kind: CoarseKind,
        r_h: SparseMatrix,
        system: &AssembledSystem,
        lift: Vec<f64>,
        n_subdomains: usize,
    ) -> Result<Self> {
        if r_h.n_cols != system.n_free() {
            return Err(Error::DimMismatch {
                expected: system.n_free(),
                got: r_h.n_cols,
            });
        }
        let a_h = r_h.matmul(&system.a)?.matmul(&r_h.transpose())?;
        let a_h_fact = factorize_spd(&a_h).map_err(|e| match e {
            Error::NotPositiveDefinite { index } => {
                Error::RankDeficient(format!("coarse matrix loses rank at basis function {index}"))
            }
            other => other,
        })?;
        Ok(Self {
            kind,
            r_h,
            a_h,
            a_h_fact,
            lift,
            n_subdomains,
        })
    }

    pub fn dim(&self) -> usize {
        self.r_h.n_rows
    }

    /// `dim/(√N+1)²` for Trefftz spaces, `dim/N` for Nicolaides.
    pub fn relative_dim(&self) -> f64 {
        let n = self.n_subdomains as f64;
        match self.kind {
            CoarseKind::Trefftz { .. } => self.dim() as f64 / (n.sqrt() + 1.0).powi(2),
            CoarseKind::Nicolaides => self.dim() as f64 / n,
        }
    }

    /// `z = R_Hᵀ A_H⁻¹ R_H r` on free DOFs.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        let mut c = vec![0.0; self.dim()];
        self.r_h.spmv_into(r, &mut c);
        self.a_h_fact.solve_in_place(&mut c);
        z.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..self.dim() {
            let (cols, vals) = self.r_h.row(s);
            for (&i, &v) in cols.iter().zip(vals) {
                z[i] += c[s] * v;
            }
        }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; r.len()];
        self.apply_into(r, &mut z);
        z
    }

    pub fn summary(&self) -> CoarseSummary {
        let (kind, p, r) = match self.kind {
            CoarseKind::Trefftz { p, r } => ("trefftz", Some(p), Some(r)),
            CoarseKind::Nicolaides => ("nicolaides", None, None),
        };
        CoarseSummary {
            kind: kind.into(),
            p,
            r,
            dim: self.dim(),
            relative_dim: self.relative_dim(),
        }
    }

    /// Writes `R_H.mtx`, `A_H.mtx` and `coarse.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.r_h.write_matrix_market(dir.join("R_H.mtx"))?;
        self.a_h.write_matrix_market(dir.join("A_H.mtx"))?;
        std::fs::write(dir.join("coarse.json"), serde_json::to_string_pretty(&self.summary())?)?;
        Ok(())
    }
}

/// Free-DOF coarse Galerkin approximation
/// `lift + R_Hᵀ A_H⁻¹ R_H (f − A lift)`.
pub fn coarse_approximation_free(space: &CoarseSpace, system: &AssembledSystem) -> Vec<f64> {
    let mut r = system.a.spmv(&space.lift).expect("lift length");
    for (ri, fi) in r.iter_mut().zip(&system.f) {
        *ri = fi - *ri;
    }
    let mut u = space.apply(&r);
    for (ui, li) in u.iter_mut().zip(&space.lift) {
        *ui += li;
    }
    u
}

/// Coarse approximation `u_{Δ,H}` as a nodal field with Dirichlet values.
pub fn coarse_approximation(space: &CoarseSpace, system: &AssembledSystem) -> Vec<f64> {
    system.expand(&coarse_approximation_free(space, system))
}
/// Indices of a maximal set of rows kept in order by an in-order Cholesky
/// sweep of the Gram matrix `g`: row `k` is dropped when its part
/// `g`-orthogonal to the kept rows has energy at most `rel_tol · g_kk`.
pub(crate) fn independent_rows(g: &SparseMatrix, rel_tol: f64) -> Vec<usize> {
    let g = g.to_dense();
    let mut kept: Vec<usize> = Vec::new();
    let mut l: Vec<Vec<f64>> = Vec::new();
    for k in 0..g.len() {
        let mut c: Vec<f64> = Vec::with_capacity(kept.len() + 1);
        for (m, &j) in kept.iter().enumerate() {
            let s: f64 = g[k][j] - l[m][..m].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
            c.push(s / l[m][m]);
        }
        let d = g[k][k] - c.iter().map(|x| x * x).sum::<f64>();
        if d > rel_tol * g[k][k] {
            c.push(d.sqrt());
            l.push(c);
            kept.push(k);
        }
    }
    kept
}
