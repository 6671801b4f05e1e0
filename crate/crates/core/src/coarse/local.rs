//! Cell-local Dirichlet problems on `Ω_j`, shared by the harmonic
//! extensions and the bubble solves.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::mesh::Triangulation;
use crate::numerics::{factorize_spd, Factorization, SparseMatrix};

/// Interior block of one cell. Interior nodes are the cell's nodes that lie
/// neither on a cell interface nor on the Dirichlet boundary; every triangle
/// around them belongs to the cell, so the global stiffness rows coincide
/// with the cell's Neumann matrix.
#[derive(Debug)]
pub struct CellSolver {
    pub cell: usize,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    k_ib: SparseMatrix,
    fact: Factorization,
}

impl CellSolver {
    /// Interior values of the discrete harmonic extension of `boundary_values`
    /// (ordered like `self.boundary`).
    pub fn extend(&self, boundary_values: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.interior.len()];
        self.k_ib.spmv_into(boundary_values, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);
        self.fact.solve_in_place(&mut rhs);
        rhs
    }

    /// Interior values of the solution with zero boundary data and nodal
    /// load `load` (ordered like `self.interior`).
    pub fn bubble(&self, load: &[f64]) -> Vec<f64> {
        self.fact.solve(load)
    }
}

#[derive(Debug)]
pub struct LocalSolvers {
    pub cells: Vec<CellSolver>,
    /// Number of cells containing each node.
    pub node_cells: Vec<u32>,
}

impl LocalSolvers {
    pub fn new(mesh: &Triangulation, system: &AssembledSystem) -> Result<Self> {
        let n = mesh.n_points();
        let mut cell_tris: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_cells];
        for (t, &c) in mesh.cell_of_triangle.iter().enumerate() {
            cell_tris[c].push(t);
        }
        let dm = &system.dofmap;
        let cells = cell_tris
            .par_iter()
            .enumerate()
            .map(|(j, tris)| {
                let mut mark = vec![false; n];
                for &t in tris {
                    for &v in &mesh.triangles[t] {
                        mark[v] = true;
                    }
                }
                let (mut interior, mut boundary) = (Vec::new(), Vec::new());
                for v in (0..n).filter(|&v| mark[v]) {
                    if dm.is_dirichlet[v] || dm.on_interface[v] {
                        boundary.push(v);
                    } else {
                        interior.push(v);
                    }
                }
                if boundary.is_empty() && !interior.is_empty() {
                    return Err(Error::SingularLocalSystem { cell: j });
                }
                let k_ii = system.k_full.submatrix(&interior, &interior);
                let k_ib = system.k_full.submatrix(&interior, &boundary);
                let fact = factorize_spd(&k_ii).map_err(|e| match e {
                    Error::NotPositiveDefinite { .. } => Error::SingularLocalSystem { cell: j },
                    other => other,
                })?;
                Ok(CellSolver {
                    cell: j,
                    interior,
                    boundary,
                    k_ib,
                    fact,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut node_cells = vec![0u32; n];
        for c in &cells {
            for &v in c.interior.iter().chain(&c.boundary) {
                node_cells[v] += 1;
            }
        }
        Ok(Self { cells, node_cells })
    }

    /// Discrete harmonic extension into cell `j` of the nodal trace
    /// `trace(v)` on the cell's skeleton nodes; returns `(node, value)` over
    /// all nodes of the cell.
    pub fn harmonic_extension(&self, j: usize, trace: &dyn Fn(usize) -> f64) -> Result<Vec<(usize, f64)>> {
        let c = self.cells.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            len: self.cells.len(),
        })?;
        let g: Vec<f64> = c.boundary.iter().map(|&v| trace(v)).collect();
        let u = c.extend(&g);
        let mut out: Vec<(usize, f64)> = c.interior.iter().copied().zip(u).chain(c.boundary.iter().copied().zip(g)).collect();
        out.sort_by_key(|e| e.0);
        Ok(out)
    }

    /// Harmonic extension of a global nodal field from the skeleton nodes
    /// into every cell; skeleton values are kept.
    pub fn extend_field(&self, skeleton_values: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self
            .cells
            .par_iter()
            .map(|c| c.extend(&c.boundary.iter().map(|&v| skeleton_values[v]).collect::<Vec<_>>()))
            .collect();
        let mut out = skeleton_values.to_vec();
        for (c, vals) in self.cells.iter().zip(parts) {
            for (&v, x) in c.interior.iter().zip(vals) {
                out[v] = x;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::geometry::{CoarsePartition, PerforatedDomain, Point, Rect};
    use crate::mesh::generate_structured;

    fn setup(domain: PerforatedDomain, n: usize, pitch: f64) -> (Triangulation, AssembledSystem) {
        let part = CoarsePartition::for_domain(&domain, n, n).unwrap();
        let m = generate_structured(&domain, &part, pitch).unwrap();
        let s = assemble(&m, &|_| 1.0, &|_| 0.0).unwrap();
        (m, s)
    }

    #[test]
    fn constants_and_linears_are_reproduced() {
        let (m, s) = setup(PerforatedDomain::rectangle(Rect::new(0.0, 0.0, 1.0, 1.0)), 2, 0.0625);
        let ls = LocalSolvers::new(&m, &s).unwrap();
        for j in 0..4 {
            for (_, v) in ls.harmonic_extension(j, &|_| 1.0).unwrap() {
                assert!((v - 1.0).abs() < 1e-12);
            }
            for (v, x) in ls.harmonic_extension(j, &|v| m.points[v].x).unwrap() {
                assert!((x - m.points[v].x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constants_with_perforation() {
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![Rect::new(0.125, 0.125, 0.375, 0.25).polygon()],
        };
        let (m, s) = setup(d, 2, 0.0625);
        let ls = LocalSolvers::new(&m, &s).unwrap();
        let u = ls.extend_field(&vec![1.0; m.n_points()]);
        assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    /// Residual oracle: at interior nodes the global stiffness row annihilates
    /// the extension.
    #[test]
    fn lshape_extension_residual() {
        let (m, s) = setup(PerforatedDomain::lshape(), 3, 1.0 / 24.0);
        let ls = LocalSolvers::new(&m, &s).unwrap();
        let trace = |v: usize| {
            let p: Point = m.points[v];
            (1.0 - (p.x + 1.0 / 3.0).abs() * 3.0).max(0.0) * (1.0 - (p.y + 1.0 / 3.0).abs() * 3.0).max(0.0)
        };
        let mut field = vec![0.0; m.n_points()];
        for j in 0..9 {
            for (v, x) in ls.harmonic_extension(j, &trace).unwrap() {
                field[v] = x;
            }
        }
        let r = s.k_full.spmv(&field).unwrap();
        for c in &ls.cells {
            for &v in &c.interior {
                assert!(r[v].abs() <= 1e-10, "{}", r[v]);
            }
        }
        assert_eq!(ls.node_cells.iter().copied().max(), Some(4));
    }
}
