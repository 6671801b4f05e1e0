//! Fine triangulations conforming to the coarse partition.

mod overlap;
mod refine;
mod structured;
mod triangle_io;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoarsePartition, Point};

pub use overlap::{
    build_overlap, build_overlap_layers, build_overlap_rule, connected_components, overlap_layers,
    triangle_components, OverlapRule, OverlapSet,
};
pub use refine::{red_refine, refine_toward, Prolongation};
pub use structured::generate_structured;
pub use triangle_io::{load_triangle_format, write_triangle_format};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    /// `∂Ω \ ∂Ω_S`
    Dirichlet,
    /// `∂Ω ∩ ∂Ω_S`
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    pub points: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary edges in triangle order, each tagged exactly once.
    pub boundary_edges: Vec<BoundaryEdge>,
    pub cell_of_triangle: Vec<usize>,
    pub n_cells: usize,
    /// Maximal element diameter.
    pub h: f64,
    /// Spacing of the generating grid, if the mesh came from one.
    pub pitch: Option<f64>,
}

impl Triangulation {
    /// Assembles a triangulation from raw connectivity: orients triangles
    /// counter-clockwise, assigns cells by centroid, checks conformity and
    /// tags every boundary edge through `tag`.
    pub fn from_parts(
        points: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        partition: &CoarsePartition,
        pitch: Option<f64>,
        mut tag: impl FnMut(usize, usize) -> Result<BoundaryTag>,
    ) -> Result<Self> {
        let tol = 1e-9 * partition.bounds.diameter();
        let mut h: f64 = 0.0;
        let mut cells = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= points.len() {
                    return Err(Error::IndexOutOfRange {
                        index: v,
                        len: points.len(),
                    });
                }
            }
            let [a, b, c] = tri.map(|v| points[v]);
            let area = 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
            let diam = a.dist(b).max(b.dist(c)).max(c.dist(a));
            if area.abs() < 1e-14 * diam * diam {
                return Err(Error::DegenerateTriangle { triangle: t, area });
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
            h = h.max(diam);
            let centroid = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
            let cell = partition
                .locate(centroid)
                .ok_or(Error::NonConformingMesh { triangle: t })?;
            let rect = partition.cell(cell)?;
            if ![a, b, c].iter().all(|&p| rect.contains(p, tol)) {
                return Err(Error::NonConformingMesh { triangle: t });
            }
            cells.push(cell);
        }

        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        let mut boundary_edges = Vec::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                match count[&edge_key(a, b)] {
                    1 => boundary_edges.push(BoundaryEdge {
                        nodes: [a, b],
                        tag: tag(a, b)?,
                    }),
                    2 => {}
                    _ => return Err(Error::MeshNotNested(format!(
                        "edge ({a}, {b}) is shared by more than two triangles"
                    ))),
                }
            }
        }

        Ok(Self {
            points,
            triangles,
            boundary_edges,
            cell_of_triangle: cells,
            n_cells: partition.n_cells(),
            h,
            pitch,
        })
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.points[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        a.dist(b).max(b.dist(c)).max(c.dist(a))
    }

    pub fn min_diameter(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.diameter(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Triangles incident to each node, in CSR form.
    pub fn node_triangles(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.points.len();
        let mut ptr = vec![0usize; n + 1];
        for tri in &self.triangles {
            for &v in tri {
                ptr[v + 1] += 1;
            }
        }
        for i in 0..n {
            ptr[i + 1] += ptr[i];
        }
        let mut fill = ptr.clone();
        let mut idx = vec![0usize; ptr[n]];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                idx[fill[v]] = t;
                fill[v] += 1;
            }
        }
        (ptr, idx)
    }

    /// For each triangle, the neighbours across its three edges.
    pub fn triangle_neighbours(&self) -> Vec<[Option<usize>; 3]> {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.triangles.len() * 2);
        let mut nb = vec![[None; 3]; self.triangles.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let key = edge_key(tri[k], tri[(k + 1) % 3]);
                if let Some(&s) = owner.get(&key) {
                    nb[t][k] = Some(s);
                    let ks = (0..3)
                        .find(|&m| {
                            let st = self.triangles[s];
                            edge_key(st[m], st[(m + 1) % 3]) == key
                        })
                        .unwrap();
                    nb[s][ks] = Some(t);
                } else {
                    owner.insert(key, t);
                }
            }
        }
        nb
    }

    /// Number of edge-connected components of the triangle set.
    pub fn component_count(&self) -> usize {
        let nb = self.triangle_neighbours();
        let mut seen = vec![false; self.triangles.len()];
        let mut comps = 0;
        let mut stack = Vec::new();
        for s in 0..self.triangles.len() {
            if seen[s] {
                continue;
            }
            comps += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(t) = stack.pop() {
                for u in nb[t].iter().flatten() {
                    if !seen[*u] {
                        seen[*u] = true;
                        stack.push(*u);
                    }
                }
            }
        }
        comps
    }

    pub fn check_connected(&self) -> Result<()> {
        match self.component_count() {
            1 => Ok(()),
            components => Err(Error::DisconnectedDomain { components }),
        }
    }

    /// Nodes on `∂Ω \ ∂Ω_S`.
    pub fn dirichlet_nodes(&self) -> Vec<bool> {
        let mut d = vec![false; self.points.len()];
        for e in &self.boundary_edges {
            if e.tag == BoundaryTag::Dirichlet {
                d[e.nodes[0]] = true;
                d[e.nodes[1]] = true;
            }
        }
        d
    }

    /// Nodes shared by triangles of at least two coarse cells.
    pub fn interface_nodes(&self) -> Vec<bool> {
        let mut first = vec![usize::MAX; self.points.len()];
        let mut shared = vec![false; self.points.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let c = self.cell_of_triangle[t];
            for &v in tri {
                if first[v] == usize::MAX {
                    first[v] = c;
                } else if first[v] != c {
                    shared[v] = true;
                }
            }
        }
        shared
    }

    /// Edge-pairing audit: every edge is shared by two triangles or is a
    /// tagged boundary edge, and no node sits inside a one-sided edge.
    /// Quadratic in the mesh size; meant for tests.
    pub fn is_conforming(&self) -> bool {
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        let boundary: std::collections::HashSet<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|e| edge_key(e.nodes[0], e.nodes[1]))
            .collect();
        if boundary.len() != self.boundary_edges.len() {
            return false;
        }
        let bbox = crate::geometry::Rect::bounding(&self.points);
        let tol = 1e-12 * bbox.diameter();
        let mut hanging = false;
        for (key, &c) in &count {
            if c > 2 || (c == 1) != boundary.contains(key) {
                return false;
            }
            if c == 1 {
                // a node strictly inside a one-sided edge is a hanging node
                let (a, b) = (self.points[key.0], self.points[key.1]);
                let len2 = (b.x - a.x).powi(2) + (b.y - a.y).powi(2);
                for p in &self.points {
                    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                    let dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
                    if cross.abs() <= tol * len2.sqrt() && dot > tol * len2.sqrt() && dot < len2 - tol * len2.sqrt() {
                        hanging = true;
                    }
                }
            }
        }
        !hanging
    }
}

/// Free/Dirichlet bookkeeping for the fine nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub n_all: usize,
    /// Nodes not on the Dirichlet boundary, ascending.
    pub free: Vec<usize>,
    pub global_to_free: Vec<Option<usize>>,
    /// Nodes on the coarse skeleton (cell interfaces and Dirichlet boundary).
    pub skeleton_nodes: Vec<usize>,
    pub is_dirichlet: Vec<bool>,
    pub on_interface: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Triangulation) -> Self {
        let is_dirichlet = mesh.dirichlet_nodes();
        let on_interface = mesh.interface_nodes();
        let mut global_to_free = vec![None; mesh.n_points()];
        let mut free = Vec::new();
        for v in 0..mesh.n_points() {
            if !is_dirichlet[v] {
                global_to_free[v] = Some(free.len());
                free.push(v);
            }
        }
        let skeleton_nodes = (0..mesh.n_points())
            .filter(|&v| is_dirichlet[v] || on_interface[v])
            .collect();
        Self {
            n_all: mesh.n_points(),
            free,
            global_to_free,
            skeleton_nodes,
            is_dirichlet,
            on_interface,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Restriction of a nodal field to the free nodes.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }

    /// Nodal field with `free_values` at free nodes and `boundary` elsewhere.
    pub fn extend(&self, free_values: &[f64], boundary: &[f64]) -> Vec<f64> {
        let mut out = boundary.to_vec();
        for (i, &v) in self.free.iter().enumerate() {
            out[v] = free_values[i];
        }
        out
    }

    pub fn extend_zero(&self, free_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_all];
        for (i, &v) in self.free.iter().enumerate() {
            out[v] = free_values[i];
        }
        out
    }
}
