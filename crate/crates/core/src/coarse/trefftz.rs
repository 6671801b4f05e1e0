use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{independent_rows, CoarseKind, CoarseSpace, LocalSolvers, TraceBasis, TraceLocation};
use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::geometry::Skeleton;
use crate::mesh::Triangulation;
use crate::numerics::SparseMatrix;

fn locate_interface_nodes(
    mesh: &Triangulation,
    system: &AssembledSystem,
    basis: &TraceBasis,
) -> Result<Vec<Option<TraceLocation>>> {
    let dm = &system.dofmap;
    (0..mesh.n_points())
        .map(|v| {
            if !dm.on_interface[v] || dm.is_dirichlet[v] {
                return Ok(None);
            }
            let p = mesh.points[v];
            basis
                .locate(p)
                .map(Some)
                .ok_or(Error::NodeOffSkeleton { node: v, x: p.x, y: p.y })
        })
        .collect()
}

/// Builds the Trefftz space of order `p` on `skeleton`.
pub fn build_trefftz(
    mesh: &Triangulation,
    system: &AssembledSystem,
    skeleton: &Skeleton,
    p: u32,
) -> Result<CoarseSpace> {
    let solvers = LocalSolvers::new(mesh, system)?;
    build_trefftz_with(mesh, system, skeleton, p, &solvers)
}

/// As [`build_trefftz`], reusing cell factorizations.
pub fn build_trefftz_with(
    mesh: &Triangulation,
    system: &AssembledSystem,
    skeleton: &Skeleton,
    p: u32,
    solvers: &LocalSolvers,
) -> Result<CoarseSpace> {
    let basis = TraceBasis::new(skeleton, p)?;
    let r = skeleton.edges.iter().map(|e| e.refinement_level).max().unwrap_or(0);
    let dm = &system.dofmap;
    let locations = locate_interface_nodes(mesh, system, &basis)?;
    let trace: Vec<Vec<(usize, f64)>> = locations
        .iter()
        .map(|l| l.map(|l| basis.values(l)).unwrap_or_default())
        .collect();

    type CellOut = (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>);
    let per_cell: Vec<CellOut> = solvers
        .cells
        .par_iter()
        .map(|c| {
            let mut dofs: Vec<usize> = c.boundary.iter().flat_map(|&v| trace[v].iter().map(|e| e.0)).collect();
            dofs.sort_unstable();
            dofs.dedup();
            let (mut inner, mut glue) = (Vec::new(), Vec::new());
            for s in dofs {
                let g: Vec<f64> = c
                    .boundary
                    .iter()
                    .map(|&v| trace[v].iter().find(|e| e.0 == s).map_or(0.0, |e| e.1))
                    .collect();
                for (&v, x) in c.interior.iter().zip(c.extend(&g)) {
                    if x != 0.0 {
                        inner.push((s, dm.global_to_free[v].expect("interior node is free"), x));
                    }
                }
                for (&v, &x) in c.boundary.iter().zip(&g) {
                    if x != 0.0 {
                        glue.push((s, v, x / solvers.node_cells[v] as f64));
                    }
                }
            }
            (inner, glue)
        })
        .collect();

    let mut triplets = Vec::new();
    let mut glued: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (inner, glue) in per_cell {
        triplets.extend(inner);
        for (s, v, x) in glue {
            *glued.entry((s, v)).or_insert(0.0) += x;
        }
    }
    for (v, vals) in trace.iter().enumerate() {
        for &(s, x) in vals {
            let g = glued.remove(&(s, v)).unwrap_or(0.0);
            let diff = (g - x).abs();
            if diff > 1e-10 {
                return Err(Error::GluingMismatch { node: v, diff });
            }
            triplets.push((s, dm.global_to_free[v].expect("interface node is free"), x));
        }
    }
    if let Some((&(_, v), &g)) = glued.iter().next() {
        return Err(Error::GluingMismatch { node: v, diff: g.abs() });
    }
    let r_h = SparseMatrix::from_triplets(basis.dim, dm.n_free(), triplets)?;
    // Trace functions seen by too few fine nodes (short edges after
    // refinement) are dependent or zero there and would make A_H singular.
    let a_h = r_h.matmul(&system.a)?.matmul(&r_h.transpose())?;
    let keep = independent_rows(&a_h, 1e-10);
    let r_h = if keep.len() < basis.dim {
        let mut triplets = Vec::new();
        for (new, &old) in keep.iter().enumerate() {
            let (cols, vals) = r_h.row(old);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (new, c, v)));
        }
        SparseMatrix::from_triplets(keep.len(), dm.n_free(), triplets)?
    } else {
        r_h
    };
    let lift = dirichlet_lift(mesh, system, &basis, solvers)?;
    CoarseSpace::from_rows(CoarseKind::Trefftz { p, r }, r_h, system, lift, mesh.n_cells)
}

/// Free-DOF values of the discrete harmonic function whose trace equals the
/// Dirichlet data on `∂D∖∂Ω_S` and, on interfaces, the linear interpolant of
/// that data at the constrained coarse nodes. Zero for homogeneous data.
pub fn dirichlet_lift(
    mesh: &Triangulation,
    system: &AssembledSystem,
    basis: &TraceBasis,
    solvers: &LocalSolvers,
) -> Result<Vec<f64>> {
    let dm = &system.dofmap;
    if system.dirichlet_values.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; dm.n_free()]);
    }
    let mut coarse_values = vec![None; basis.skeleton.nodes.len()];
    for v in (0..mesh.n_points()).filter(|&v| dm.is_dirichlet[v]) {
        if let Some(TraceLocation::Node(k)) = basis.locate(mesh.points[v]) {
            coarse_values[k] = Some(system.dirichlet_values[v]);
        }
    }
    let locations = locate_interface_nodes(mesh, system, basis)?;
    let mut skeleton = system.dirichlet_values.clone();
    for (v, loc) in locations.iter().enumerate() {
        let Some(loc) = *loc else { continue };
        let mut s = 0.0;
        for (k, w) in basis.hat_weights(loc) {
            let node = &basis.skeleton.nodes[k];
            if node.constrained && w != 0.0 {
                let val = coarse_values[k].ok_or(Error::CoarseNodeNotInMesh {
                    node: k,
                    x: node.position.x,
                    y: node.position.y,
                })?;
                s += w * val;
            }
        }
        skeleton[v] = s;
    }
    Ok(dm.restrict(&solvers.extend_field(&skeleton)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{coarse_approximation, coarse_approximation_free};
    use crate::fem::{assemble, exact_lshape, solve_fine};
    use crate::geometry::{build_skeleton, refine_edges, CoarsePartition, PerforatedDomain, Point, Rect};
    use crate::mesh::generate_structured;
    use crate::numerics::factorize_spd;

    fn setup(
        domain: &PerforatedDomain,
        n: usize,
        pitch: f64,
        g: &dyn Fn(Point) -> f64,
    ) -> (Triangulation, AssembledSystem, Skeleton) {
        let part = CoarsePartition::for_domain(domain, n, n).unwrap();
        let m = generate_structured(domain, &part, pitch).unwrap();
        let s = assemble(&m, &|_| 1.0, g).unwrap();
        let sk = build_skeleton(domain, &part).unwrap();
        (m, s, sk)
    }

    /// Dense A-orthogonal projection of `u` onto the row space of `R`.
    fn dense_projection(r: &SparseMatrix, a: &SparseMatrix, u: &[f64]) -> Vec<f64> {
        let rd = r.to_dense();
        let au = a.spmv(u).unwrap();
        let ar: Vec<Vec<f64>> = rd.iter().map(|row| a.spmv(row).unwrap()).collect();
        let k = rd.len();
        let gram: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| crate::numerics::dot(&rd[i], &ar[j])).collect())
            .collect();
        let rhs: Vec<f64> = rd.iter().map(|row| crate::numerics::dot(row, &au)).collect();
        let c = factorize_spd(&SparseMatrix::from_dense(&gram)).unwrap().solve(&rhs);
        let mut out = vec![0.0; u.len()];
        for (row, ci) in rd.iter().zip(&c) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += ci * x;
            }
        }
        out
    }

    #[test]
    fn unit_square_single_function() {
        let d = PerforatedDomain::rectangle(Rect::new(0.0, 0.0, 1.0, 1.0));
        let (m, s, sk) = setup(&d, 2, 0.125, &|_| 0.0);
        let space = build_trefftz(&m, &s, &sk, 1).unwrap();
        assert_eq!(space.dim(), 1);
        assert!(space.a_h.get(0, 0) > 0.0);
        let uh = s.dofmap.restrict(&solve_fine(&s).unwrap());
        let proj = dense_projection(&space.r_h, &s.a, &uh);
        let u = coarse_approximation_free(&space, &s);
        for (p, q) in u.iter().zip(&proj) {
            assert!((p - q).abs() < 1e-12);
        }
        assert_eq!(space.relative_dim(), 1.0 / 9.0);
    }

    #[test]
    fn rows_reproduce_traces_and_are_harmonic() {
        let d = PerforatedDomain::lshape();
        for (p, r) in [(1, 0), (2, 1)] {
            let (m, s, sk) = setup(&d, 3, 1.0 / 24.0, &|_| 0.0);
            let sk = refine_edges(&sk, r);
            let space = build_trefftz(&m, &s, &sk, p).unwrap();
            let basis = TraceBasis::new(&sk, p).unwrap();
            assert_eq!(space.dim(), basis.dim);
            let dm = &s.dofmap;
            let amax = s.a.max_abs();
            let dense = space.r_h.to_dense();
            for (row, phi) in dense.iter().enumerate() {
                for (i, &v) in dm.free.iter().enumerate() {
                    if dm.on_interface[v] {
                        assert_eq!(phi[i], basis.evaluate(row, m.points[v]));
                    }
                }
                let aphi = s.a.spmv(phi).unwrap();
                let inf = phi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                for (i, &v) in dm.free.iter().enumerate() {
                    if !dm.on_interface[v] {
                        assert!(aphi[i].abs() <= 1e-9 * amax * inf);
                    }
                }
            }
        }
    }

    #[test]
    fn projection_and_reproduction() {
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![Rect::new(0.125, 0.5, 0.375, 0.625).polygon(), Rect::new(0.5, 0.0625, 0.625, 0.25).polygon()],
        };
        let (m, s, sk) = setup(&d, 2, 1.0 / 32.0, &|_| 0.0);
        let space = build_trefftz(&m, &s, &sk, 2).unwrap();
        let uh = s.dofmap.restrict(&solve_fine(&s).unwrap());
        let proj = dense_projection(&space.r_h, &s.a, &uh);
        let u = coarse_approximation_free(&space, &s);
        let e: Vec<f64> = u.iter().zip(&proj).map(|(p, q)| p - q).collect();
        let an = |x: &[f64]| crate::numerics::dot(x, &s.a.spmv(x).unwrap()).sqrt();
        assert!(an(&e) <= 1e-9 * an(&proj));
        // a load whose solution is a basis function is reproduced
        let phi = space.r_h.to_dense()[1].clone();
        let mut s2 = s.clone();
        s2.f = s.a.spmv(&phi).unwrap();
        let u2 = coarse_approximation_free(&space, &s2);
        for (p, q) in u2.iter().zip(&phi) {
            assert!((p - q).abs() < 1e-10);
        }
        s2.f = vec![0.0; s.n_free()];
        assert!(coarse_approximation_free(&space, &s2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nested_under_edge_refinement() {
        let d = PerforatedDomain::lshape();
        let (m, s, sk) = setup(&d, 3, 1.0 / 24.0, &|_| 0.0);
        let ls = LocalSolvers::new(&m, &s).unwrap();
        for p in [1, 2] {
            let coarse = build_trefftz_with(&m, &s, &sk, p, &ls).unwrap();
            let fine = build_trefftz_with(&m, &s, &refine_edges(&sk, 1), p, &ls).unwrap();
            let rows = coarse.r_h.to_dense();
            for phi in &rows {
                let proj = dense_projection(&fine.r_h, &s.a, phi);
                let e: Vec<f64> = proj.iter().zip(phi).map(|(a, b)| a - b).collect();
                let an = |x: &[f64]| crate::numerics::dot(x, &s.a.spmv(x).unwrap()).sqrt();
                assert!(an(&e) <= 1e-9 * an(phi));
            }
        }
    }

    #[test]
    fn lshape_lift_and_level_zero_error() {
        let d = PerforatedDomain::lshape();
        let g = |p: Point| exact_lshape(p).0;
        let part = CoarsePartition::for_domain(&d, 3, 3).unwrap();
        let m = generate_structured(&d, &part, 1.0 / 48.0).unwrap();
        let s = assemble(&m, &|_| 0.0, &g).unwrap();
        let sk = build_skeleton(&d, &part).unwrap();
        let space = build_trefftz(&m, &s, &sk, 1).unwrap();
        assert_eq!(space.dim(), sk.free_nodes());
        let u = coarse_approximation(&space, &s);
        let uh = solve_fine(&s).unwrap();
        let (_, h1) = s.relative_errors(&u, &uh);
        assert!((-1.4..-0.8).contains(&h1.log10()), "{}", h1.log10());
        // Galerkin orthogonality of the affine approximation
        let e: Vec<f64> = u.iter().zip(&uh).map(|(a, b)| a - b).collect();
        let r = space.r_h.spmv(&s.a.spmv(&s.dofmap.restrict(&e)).unwrap()).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn traces_invisible_on_the_fine_mesh_are_dropped() {
        // the interface x = 0.5 survives only as one-pitch stubs at the frame
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![Rect::new(0.25, 0.125, 0.75, 0.875).polygon()],
        };
        let (m, s, sk) = setup(&d, 2, 0.125, &|_| 0.0);
        let full = TraceBasis::new(&sk, 2).unwrap().dim;
        let space = build_trefftz(&m, &s, &sk, 2).unwrap();
        assert_eq!(space.dim(), full - 2);
        let rows = space.r_h.to_dense();
        assert!(rows.iter().all(|r| r.iter().any(|&v| v != 0.0)));
        let refined = refine_edges(&sk, 1);
        let space = build_trefftz(&m, &s, &refined, 1).unwrap();
        assert!(space.dim() < TraceBasis::new(&refined, 1).unwrap().dim);
    }
}
