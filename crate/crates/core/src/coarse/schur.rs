use rayon::prelude::*;

use super::LocalSolvers;
use crate::error::{Error, Result};
use crate::fem::AssembledSystem;

/// `u_h = u_harmonic + u_bubble`, both as nodal fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SchurSplit {
    /// Zero on the skeleton and on the Dirichlet boundary.
    pub bubble: Vec<f64>,
    pub harmonic: Vec<f64>,
}

/// Splits the fine solution `u_h` into its cell bubbles (local solves with
/// the load and zero data on the skeleton) and the discrete harmonic rest.
pub fn schur_split(system: &AssembledSystem, solvers: &LocalSolvers, u_h: &[f64]) -> Result<SchurSplit> {
    let n = system.dofmap.n_all;
    if u_h.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: u_h.len(),
        });
    }
    let parts: Vec<Vec<f64>> = solvers
        .cells
        .par_iter()
        .map(|c| c.bubble(&c.interior.iter().map(|&v| system.load_full[v]).collect::<Vec<_>>()))
        .collect();
    let mut bubble = vec![0.0; n];
    for (c, vals) in solvers.cells.iter().zip(parts) {
        for (&v, x) in c.interior.iter().zip(vals) {
            bubble[v] = x;
        }
    }
    let harmonic = u_h.iter().zip(&bubble).map(|(u, b)| u - b).collect();
    Ok(SchurSplit { bubble, harmonic })
}
