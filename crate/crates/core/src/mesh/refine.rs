use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geometry::Point;

use super::{edge_key, BoundaryEdge, BoundaryTag, Triangulation};

fn dist_point_triangle(p: Point, tri: [Point; 3]) -> f64 {
    let [a, b, c] = tri;
    let s = |u: Point, v: Point| (v.x - u.x) * (p.y - u.y) - (v.y - u.y) * (p.x - u.x);
    let (d1, d2, d3) = (s(a, b), s(b, c), s(c, a));
    if (d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0) || (d1 <= 0.0 && d2 <= 0.0 && d3 <= 0.0) {
        return 0.0;
    }
    let seg = |u: Point, v: Point| {
        let (dx, dy) = (v.x - u.x, v.y - u.y);
        let t = (((p.x - u.x) * dx + (p.y - u.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        p.dist(u.lerp(v, t))
    };
    seg(a, b).min(seg(b, c)).min(seg(c, a))
}

struct Work {
    points: Vec<Point>,
    tris: Vec<[usize; 3]>,
    cells: Vec<usize>,
    tags: HashMap<(usize, usize), BoundaryTag>,
    midpoints: HashMap<(usize, usize), usize>,
}

impl Work {
    fn from_mesh(mesh: &Triangulation) -> Self {
        Self {
            points: mesh.points.clone(),
            tris: mesh.triangles.clone(),
            cells: mesh.cell_of_triangle.clone(),
            tags: mesh
                .boundary_edges
                .iter()
                .map(|e| (edge_key(e.nodes[0], e.nodes[1]), e.tag))
                .collect(),
            midpoints: HashMap::new(),
        }
    }

    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        let key = edge_key(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let m = self.points.len();
        self.points.push(self.points[a].midpoint(self.points[b]));
        self.midpoints.insert(key, m);
        if let Some(&tag) = self.tags.get(&key) {
            self.tags.insert(edge_key(a, m), tag);
            self.tags.insert(edge_key(m, b), tag);
        }
        m
    }

    /// Local index `k` of the longest edge `(tri[k], tri[k+1])`; ties go to
    /// the smallest edge key so the choice is reproducible.
    fn longest(&self, tri: [usize; 3]) -> usize {
        let len = |k: usize| self.points[tri[k]].dist(self.points[tri[(k + 1) % 3]]);
        let lmax = len(0).max(len(1)).max(len(2));
        (0..3)
            .filter(|&k| len(k) >= lmax * (1.0 - 1e-12))
            .min_by_key(|&k| edge_key(tri[k], tri[(k + 1) % 3]))
            .unwrap()
    }

    /// Conforming longest-edge bisection of every marked edge.
    fn bisect_marked(&mut self, mut marked: HashSet<(usize, usize)>) {
        loop {
            loop {
                let mut changed = false;
                for &tri in &self.tris {
                    let has = (0..3).any(|k| marked.contains(&edge_key(tri[k], tri[(k + 1) % 3])));
                    if has {
                        let k = self.longest(tri);
                        if marked.insert(edge_key(tri[k], tri[(k + 1) % 3])) {
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if marked.is_empty() {
                return;
            }
            let old_tris = std::mem::take(&mut self.tris);
            let old_cells = std::mem::take(&mut self.cells);
            for (tri, cell) in old_tris.into_iter().zip(old_cells) {
                let k = self.longest(tri);
                let (v0, v1, v2) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                if marked.contains(&edge_key(v0, v1)) {
                    let m = self.midpoint(v0, v1);
                    self.tris.push([v0, m, v2]);
                    self.tris.push([m, v1, v2]);
                    self.cells.push(cell);
                    self.cells.push(cell);
                } else {
                    self.tris.push(tri);
                    self.cells.push(cell);
                }
            }
            let mut alive = HashSet::new();
            for tri in &self.tris {
                for k in 0..3 {
                    let key = edge_key(tri[k], tri[(k + 1) % 3]);
                    if marked.contains(&key) {
                        alive.insert(key);
                    }
                }
            }
            marked = alive;
        }
    }

    fn finish(self, template: &Triangulation) -> Result<Triangulation> {
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.tris {
            for k in 0..3 {
                *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        let mut boundary_edges = Vec::new();
        for tri in &self.tris {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if count[&edge_key(a, b)] == 1 {
                    let tag = *self
                        .tags
                        .get(&edge_key(a, b))
                        .ok_or(Error::UntaggedBoundaryEdge(a, b))?;
                    boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
                }
            }
        }
        let mut mesh = Triangulation {
            points: self.points,
            triangles: self.tris,
            boundary_edges,
            cell_of_triangle: self.cells,
            n_cells: template.n_cells,
            h: 0.0,
            pitch: template.pitch,
        };
        mesh.h = (0..mesh.triangles.len())
            .map(|t| mesh.diameter(t))
            .fold(0.0, f64::max);
        Ok(mesh)
    }
}

/// `levels` rounds of local refinement: every triangle closer to one of
/// `points` than twice its diameter has all its edges bisected, with
/// longest-edge closure so that no hanging nodes remain.
pub fn refine_toward(mesh: &Triangulation, points: &[Point], levels: u32) -> Result<Triangulation> {
    if levels == 0 || points.is_empty() {
        return Ok(mesh.clone());
    }
    let mut current = mesh.clone();
    for _ in 0..levels {
        let mut work = Work::from_mesh(&current);
        let mut marked = HashSet::new();
        for (t, tri) in current.triangles.iter().enumerate() {
            let verts = current.vertices(t);
            let diam = current.diameter(t);
            if points.iter().any(|&p| dist_point_triangle(p, verts) < 2.0 * diam) {
                for k in 0..3 {
                    marked.insert(edge_key(tri[k], tri[(k + 1) % 3]));
                }
            }
        }
        if marked.is_empty() {
            return Ok(current);
        }
        work.bisect_marked(marked);
        current = work.finish(&current)?;
    }
    Ok(current)
}

/// Nodal interpolation from a mesh onto its red refinements: each fine node
/// is the average of two parent nodes (a repeated index for inherited
/// nodes), level by level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prolongation {
    levels: Vec<(usize, Vec<[usize; 2]>)>,
}

impl Prolongation {
    pub fn identity() -> Self {
        Self { levels: Vec::new() }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Chains `self` (coarse → mid) with `next` (mid → fine).
    pub fn then(mut self, next: Prolongation) -> Self {
        self.levels.extend(next.levels);
        self
    }

    pub fn apply(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        let mut v = coarse.to_vec();
        for (n_in, parents) in &self.levels {
            if v.len() != *n_in {
                return Err(Error::MeshNotNested(format!(
                    "field has {} values, refinement expects {n_in}",
                    v.len()
                )));
            }
            v = parents.iter().map(|&[a, b]| 0.5 * (v[a] + v[b])).collect();
        }
        Ok(v)
    }
}

/// Uniform refinement splitting every triangle into four.
pub fn red_refine(mesh: &Triangulation) -> Result<(Triangulation, Prolongation)> {
    let mut work = Work::from_mesh(mesh);
    let mut parents: Vec<[usize; 2]> = (0..mesh.n_points()).map(|v| [v, v]).collect();
    let old = std::mem::take(&mut work.tris);
    let old_cells = std::mem::take(&mut work.cells);
    for (tri, cell) in old.into_iter().zip(old_cells) {
        let [a, b, c] = tri;
        let mut mid = |u: usize, v: usize, work: &mut Work| {
            let n = work.points.len();
            let m = work.midpoint(u, v);
            if m == n {
                parents.push([u, v]);
            }
            m
        };
        let ab = mid(a, b, &mut work);
        let bc = mid(b, c, &mut work);
        let ca = mid(c, a, &mut work);
        work.tris.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        work.cells.extend([cell; 4]);
    }
    let mut fine = work.finish(mesh)?;
    fine.pitch = mesh.pitch.map(|p| 0.5 * p);
    Ok((
        fine,
        Prolongation {
            levels: vec![(mesh.n_points(), parents)],
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CoarsePartition, PerforatedDomain};
    use crate::mesh::generate_structured;

    fn lshape(pitch: f64) -> Triangulation {
        let d = PerforatedDomain::lshape();
        let part = CoarsePartition::for_domain(&d, 2, 2).unwrap();
        generate_structured(&d, &part, pitch).unwrap()
    }

    #[test]
    fn zero_levels_is_identity() {
        let m = lshape(0.25);
        assert_eq!(refine_toward(&m, &[Point::new(0.0, 0.0)], 0).unwrap(), m);
    }

    #[test]
    fn far_point_is_identity() {
        let m = lshape(0.25);
        // outside every trigger radius (2 · diameter ≈ 0.71)
        let r = refine_toward(&m, &[Point::new(-50.0, -50.0)], 3).unwrap();
        assert_eq!(r, m);
    }

    #[test]
    fn corner_grading_halves_diameter() {
        let m = lshape(0.25);
        let r = refine_toward(&m, &[Point::new(0.0, 0.0)], 1).unwrap();
        assert!(r.is_conforming());
        assert!((r.min_diameter() - 0.5 * m.min_diameter()).abs() < 1e-12);
        assert!((r.total_area() - m.total_area()).abs() < 1e-12);
        for t in 0..r.triangles.len() {
            assert!(r.area(t) > 0.0);
        }
        let r3 = refine_toward(&m, &[Point::new(0.0, 0.0)], 3).unwrap();
        assert!(r3.is_conforming());
        assert!((r3.min_diameter() - m.min_diameter() / 8.0).abs() < 1e-12);
        let neu: f64 = r3
            .boundary_edges
            .iter()
            .filter(|e| e.tag == BoundaryTag::Neumann)
            .map(|e| r3.points[e.nodes[0]].dist(r3.points[e.nodes[1]]))
            .sum();
        assert!((neu - 2.0).abs() < 1e-12);
    }

    #[test]
    fn children_stay_in_parent_cell() {
        let d = PerforatedDomain::lshape();
        let part = CoarsePartition::for_domain(&d, 2, 2).unwrap();
        let m = generate_structured(&d, &part, 0.25).unwrap();
        let r = refine_toward(&m, &[Point::new(0.0, 0.0)], 2).unwrap();
        for t in 0..r.triangles.len() {
            let rect = part.cell(r.cell_of_triangle[t]).unwrap();
            assert!(r.vertices(t).iter().all(|&p| rect.contains(p, 1e-12)));
        }
    }

    #[test]
    fn red_refinement_prolongs_linears_exactly() {
        let m = lshape(0.5);
        let (f, p) = red_refine(&m).unwrap();
        assert_eq!(f.triangles.len(), 4 * m.triangles.len());
        assert!(f.is_conforming());
        let (f2, p2) = red_refine(&f).unwrap();
        let p = p.then(p2);
        let lin = |q: Point| 2.0 * q.x - 3.0 * q.y + 0.5;
        let coarse: Vec<f64> = m.points.iter().map(|&q| lin(q)).collect();
        let fine = p.apply(&coarse).unwrap();
        for (v, q) in fine.iter().zip(&f2.points) {
            assert!((v - lin(*q)).abs() < 1e-14);
        }
        assert!(matches!(p.apply(&coarse[1..]), Err(Error::MeshNotNested(_))));
    }
}
