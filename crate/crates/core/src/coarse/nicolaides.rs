use super::{CoarseKind, CoarseSpace};
use crate::error::Result;
use crate::fem::AssembledSystem;
use crate::mesh::{connected_components, OverlapSet, Triangulation};
use crate::numerics::SparseMatrix;

/// Free-DOF sets of the edge-connected components of every `Ω_j'`, in
/// subdomain order.
pub fn nicolaides_family(mesh: &Triangulation, system: &AssembledSystem, overlap: &OverlapSet) -> Result<Vec<Vec<usize>>> {
    let mut family = Vec::new();
    for tris in &overlap.triangles {
        family.extend(connected_components(mesh, &system.dofmap, tris)?);
    }
    Ok(family)
}

/// One column per connected component: the partition of unity of the
/// component family applied to the ones vector. Empty columns are dropped.
pub fn build_nicolaides(mesh: &Triangulation, system: &AssembledSystem, overlap: &OverlapSet) -> Result<CoarseSpace> {
    let family = nicolaides_family(mesh, system, overlap)?;
    let n = system.n_free();
    let mut mult = vec![0u32; n];
    for comp in &family {
        for &i in comp {
            mult[i] += 1;
        }
    }
    let mut triplets = Vec::new();
    let mut rows = 0;
    for comp in family.iter().filter(|c| !c.is_empty()) {
        for &i in comp {
            triplets.push((rows, i, 1.0 / mult[i] as f64));
        }
        rows += 1;
    }
    let r_h = SparseMatrix::from_triplets(rows, n, triplets)?;
    CoarseSpace::from_rows(CoarseKind::Nicolaides, r_h, system, vec![0.0; n], overlap.n_subdomains())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::geometry::{CoarsePartition, PerforatedDomain, Rect};
    use crate::mesh::{build_overlap, generate_structured};

    fn space(domain: PerforatedDomain, n: usize) -> (CoarseSpace, AssembledSystem) {
        let part = CoarsePartition::for_domain(&domain, n, n).unwrap();
        let m = generate_structured(&domain, &part, 0.0625).unwrap();
        let s = assemble(&m, &|_| 1.0, &|_| 0.0).unwrap();
        let o = build_overlap(&m, &s.dofmap, 1).unwrap();
        (build_nicolaides(&m, &s, &o).unwrap(), s)
    }

    #[test]
    fn single_subdomain_is_ones() {
        let (sp, s) = space(PerforatedDomain::rectangle(Rect::new(0.0, 0.0, 1.0, 1.0)), 1);
        assert_eq!(sp.dim(), 1);
        assert_eq!(sp.r_h.to_dense()[0], vec![1.0; s.n_free()]);
        assert_eq!(sp.relative_dim(), 1.0);
    }

    #[test]
    fn columns_sum_to_one() {
        let (sp, s) = space(PerforatedDomain::rectangle(Rect::new(0.0, 0.0, 1.0, 1.0)), 4);
        assert_eq!(sp.dim(), 16);
        let sum = sp.r_h.spmv_transpose(&vec![1.0; sp.dim()]).unwrap();
        assert_eq!(sum.len(), s.n_free());
        assert!(sum.iter().all(|v| (v - 1.0).abs() <= 1e-15));
    }

    #[test]
    fn wall_gives_disjoint_columns() {
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![Rect::new(0.0, 0.25, 0.75, 0.3125).polygon()],
        };
        let (sp, _) = space(d, 2);
        // the wall cuts the grown first subdomain only
        assert_eq!(sp.dim(), 5);
        let rows = sp.r_h.to_dense();
        let supp = |r: &Vec<f64>| r.iter().map(|&v| v != 0.0).collect::<Vec<_>>();
        let (a, b) = (supp(&rows[0]), supp(&rows[1]));
        assert!(a.iter().zip(&b).all(|(x, y)| !(x & y)));
        let sum = sp.r_h.spmv_transpose(&vec![1.0; sp.dim()]).unwrap();
        assert!(sum.iter().all(|v| (v - 1.0).abs() <= 1e-15));
    }
}
