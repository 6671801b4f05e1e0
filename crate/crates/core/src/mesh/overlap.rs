use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CoarsePartition;

use super::{DofMap, Triangulation};

/// How far each cell is grown into its neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapRule {
    /// One layer of triangles.
    Minimal,
    /// Width `fraction · 𝓗_j`, rounded to whole layers (at least one).
    Fraction(f64),
    Layers(usize),
}

impl OverlapRule {
    pub const H20: OverlapRule = OverlapRule::Fraction(0.05);
}

/// Number of layers realising `rule` on cell `j`. One layer advances the
/// overlap by one grid pitch (`h/√2` for meshes without a pitch).
pub fn overlap_layers(rule: OverlapRule, partition: &CoarsePartition, mesh: &Triangulation, j: usize) -> Result<usize> {
    Ok(match rule {
        OverlapRule::Minimal => 1,
        OverlapRule::Layers(l) => l.max(1),
        OverlapRule::Fraction(q) => {
            let pitch = mesh.pitch.unwrap_or(mesh.h / 2f64.sqrt());
            let l = (q * partition.cell_extent(j)? / pitch).round();
            (l as usize).max(1)
        }
    })
}

/// Overlapping subdomains `Ω_j'` as sets of free fine DOFs.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapSet {
    /// Free DOF indices of `Ω_j'`, ascending.
    pub dofs: Vec<Vec<usize>>,
    /// Triangles of `Ω_j'`, ascending.
    pub triangles: Vec<Vec<usize>>,
    pub layers: Vec<usize>,
    /// Number of subdomains containing each free DOF.
    pub multiplicity: Vec<u32>,
}

impl OverlapSet {
    pub fn n_subdomains(&self) -> usize {
        self.dofs.len()
    }
}

fn grow(mesh: &Triangulation, ptr: &[usize], idx: &[usize], seed: Vec<bool>, layers: usize) -> Vec<bool> {
    let mut inside = seed;
    for _ in 0..layers {
        let mut node_hit = vec![false; mesh.n_points()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if inside[t] {
                for &v in tri {
                    node_hit[v] = true;
                }
            }
        }
        for (v, hit) in node_hit.iter().enumerate() {
            if *hit {
                for &t in &idx[ptr[v]..ptr[v + 1]] {
                    inside[t] = true;
                }
            }
        }
    }
    inside
}

fn dofs_of(mesh: &Triangulation, dofmap: &DofMap, tris: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; dofmap.n_free()];
    for &t in tris {
        for &v in &mesh.triangles[t] {
            if let Some(i) = dofmap.global_to_free[v] {
                mark[i] = true;
            }
        }
    }
    (0..mark.len()).filter(|&i| mark[i]).collect()
}

/// Grows every cell by `layers[j]` rings of triangles sharing a vertex with
/// the current set.
pub fn build_overlap_layers(mesh: &Triangulation, dofmap: &DofMap, layers: &[usize]) -> Result<OverlapSet> {
    if layers.len() != mesh.n_cells {
        return Err(Error::DimMismatch {
            expected: mesh.n_cells,
            got: layers.len(),
        });
    }
    let (ptr, idx) = mesh.node_triangles();
    let per: Vec<(Vec<usize>, Vec<usize>)> = (0..mesh.n_cells)
        .into_par_iter()
        .map(|j| {
            let seed: Vec<bool> = mesh.cell_of_triangle.iter().map(|&c| c == j).collect();
            let inside = grow(mesh, &ptr, &idx, seed, layers[j]);
            let tris: Vec<usize> = (0..inside.len()).filter(|&t| inside[t]).collect();
            let dofs = dofs_of(mesh, dofmap, &tris);
            (tris, dofs)
        })
        .collect();
    let mut multiplicity = vec![0u32; dofmap.n_free()];
    for (_, dofs) in &per {
        for &i in dofs {
            multiplicity[i] += 1;
        }
    }
    let (triangles, dofs) = per.into_iter().unzip();
    Ok(OverlapSet {
        dofs,
        triangles,
        layers: layers.to_vec(),
        multiplicity,
    })
}

/// Uniform number of layers for every cell.
pub fn build_overlap(mesh: &Triangulation, dofmap: &DofMap, layers: usize) -> Result<OverlapSet> {
    build_overlap_layers(mesh, dofmap, &vec![layers.max(1); mesh.n_cells])
}

/// Layers chosen per cell by `rule`.
pub fn build_overlap_rule(
    mesh: &Triangulation,
    dofmap: &DofMap,
    partition: &CoarsePartition,
    rule: OverlapRule,
) -> Result<OverlapSet> {
    let layers = (0..mesh.n_cells)
        .map(|j| overlap_layers(rule, partition, mesh, j))
        .collect::<Result<Vec<_>>>()?;
    build_overlap_layers(mesh, dofmap, &layers)
}

/// Splits a triangle set into edge-connected components and returns the
/// triangles of each, ordered by their smallest triangle index.
pub fn triangle_components(mesh: &Triangulation, tris: &[usize]) -> Result<Vec<Vec<usize>>> {
    if tris.is_empty() {
        return Err(Error::InvalidParameter("empty triangle set".into()));
    }
    let mut edge_owner: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, &t) in tris.iter().enumerate() {
        let tri = mesh.triangles[t];
        for m in 0..3 {
            let key = super::edge_key(tri[m], tri[(m + 1) % 3]);
            if let Some(&o) = edge_owner.get(&key) {
                let (a, b) = (find(&mut parent, k), find(&mut parent, o));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            } else {
                edge_owner.insert(key, k);
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut root_to_comp = std::collections::HashMap::new();
    let mut order: Vec<usize> = (0..tris.len()).collect();
    order.sort_by_key(|&k| tris[k]);
    for k in order {
        let r = find(&mut parent, k);
        let c = *root_to_comp.entry(r).or_insert_with(|| {
            comps.push(Vec::new());
            comps.len() - 1
        });
        comps[c].push(tris[k]);
    }
    Ok(comps)
}

/// Free DOF sets of the edge-connected components of a triangle set.
pub fn connected_components(mesh: &Triangulation, dofmap: &DofMap, tris: &[usize]) -> Result<Vec<Vec<usize>>> {
    Ok(triangle_components(mesh, tris)?
        .iter()
        .map(|c| dofs_of(mesh, dofmap, c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PerforatedDomain, Rect};
    use crate::mesh::generate_structured;

    fn square(n: usize, pitch: f64) -> (Triangulation, DofMap, CoarsePartition) {
        let d = PerforatedDomain::rectangle(Rect::new(0.0, 0.0, 1.0, 1.0));
        let part = CoarsePartition::for_domain(&d, n, n).unwrap();
        let m = generate_structured(&d, &part, pitch).unwrap();
        let dm = DofMap::new(&m);
        (m, dm, part)
    }

    #[test]
    fn single_subdomain_covers_everything() {
        let (m, dm, _) = square(1, 0.25);
        let o = build_overlap(&m, &dm, 1).unwrap();
        assert_eq!(o.dofs[0], (0..dm.n_free()).collect::<Vec<_>>());
        assert!(o.multiplicity.iter().all(|&k| k == 1));
    }

    /// Brute-force ring expansion: a triangle joins `Ω_j'` iff one of its
    /// vertices is a vertex of a cell-`j` triangle.
    #[test]
    fn one_layer_multiplicity_matches_ring_oracle() {
        let (m, dm, _) = square(2, 0.25);
        let o = build_overlap(&m, &dm, 1).unwrap();
        let mut expect = vec![0u32; dm.n_free()];
        for j in 0..4 {
            let cell_nodes: Vec<usize> = (0..m.triangles.len())
                .filter(|&t| m.cell_of_triangle[t] == j)
                .flat_map(|t| m.triangles[t])
                .collect();
            let mut nodes: Vec<usize> = m
                .triangles
                .iter()
                .filter(|tri| tri.iter().any(|v| cell_nodes.contains(v)))
                .flat_map(|tri| *tri)
                .filter_map(|v| dm.global_to_free[v])
                .collect();
            nodes.sort();
            nodes.dedup();
            assert_eq!(o.dofs[j], nodes);
            for i in nodes {
                expect[i] += 1;
            }
        }
        assert_eq!(o.multiplicity, expect);
        let centre = dm.free.iter().position(|&v| m.points[v].x == 0.5 && m.points[v].y == 0.5).unwrap();
        assert_eq!(o.multiplicity[centre], 4);
        // interface nodes belong to both neighbours, nodes two pitches away
        // from every interface to one subdomain only
        for (i, &v) in dm.free.iter().enumerate() {
            let p = m.points[v];
            if p.x == 0.5 || p.y == 0.5 {
                assert!(o.multiplicity[i] >= 2);
            }
            if (p.x - 0.5).abs() > 0.3 && (p.y - 0.5).abs() > 0.3 {
                assert_eq!(o.multiplicity[i], 1);
            }
        }
    }

    #[test]
    fn h20_layers() {
        let d = PerforatedDomain::rectangle(Rect::new(0.0, 0.0, 640.0, 640.0));
        let part = CoarsePartition::for_domain(&d, 8, 8).unwrap();
        let m = generate_structured(&d, &part, 4.0).unwrap();
        // 80 m / 20 = 4 m = one pitch
        assert_eq!(overlap_layers(OverlapRule::H20, &part, &m, 0).unwrap(), 1);
        let m2 = generate_structured(&d, &part, 1.0).unwrap();
        assert_eq!(overlap_layers(OverlapRule::H20, &part, &m2, 5).unwrap(), 4);
    }

    #[test]
    fn wall_splits_subdomain() {
        let outer = Rect::new(0.0, 0.0, 1.0, 1.0);
        let d = PerforatedDomain {
            outer: outer.polygon(),
            perforations: vec![Rect::new(0.0, 0.25, 0.5, 0.375).polygon()],
        };
        let part = CoarsePartition::for_domain(&d, 2, 2).unwrap();
        let m = generate_structured(&d, &part, 0.125).unwrap();
        let dm = DofMap::new(&m);
        let cell0: Vec<usize> = (0..m.triangles.len()).filter(|&t| m.cell_of_triangle[t] == 0).collect();
        let comps = triangle_components(&m, &cell0).unwrap();
        assert_eq!(comps.len(), 2);
        // union-find oracle over shared vertices excluding the wall
        let below: Vec<usize> = cell0
            .iter()
            .copied()
            .filter(|&t| m.vertices(t).iter().all(|p| p.y <= 0.25))
            .collect();
        assert_eq!(comps[0], below);
        let cell3: Vec<usize> = (0..m.triangles.len()).filter(|&t| m.cell_of_triangle[t] == 3).collect();
        assert_eq!(connected_components(&m, &dm, &cell3).unwrap().len(), 1);
        assert!(connected_components(&m, &dm, &[]).is_err());
    }
}
