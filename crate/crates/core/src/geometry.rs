//! Perforated domains, rectangular coarse partitions and the coarse skeleton.
//!
//! All geometry is rectilinear: the outer boundary is an axis-aligned
//! rectangle, perforations are polygons with axis-aligned edges, and coarse
//! cells are the rectangles of an `n_x × n_y` grid laid over the outer box.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

pub type Polygon = Vec<Point>;

/// Axis-aligned rectangle `[xmin, xmax] × [ymin, ymax]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Closed containment with absolute tolerance `tol`.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.xmin - tol
            && p.x <= self.xmax + tol
            && p.y >= self.ymin - tol
            && p.y <= self.ymax + tol
    }

    /// Counter-clockwise vertex list.
    pub fn polygon(&self) -> Polygon {
        vec![
            Point::new(self.xmin, self.ymin),
            Point::new(self.xmax, self.ymin),
            Point::new(self.xmax, self.ymax),
            Point::new(self.xmin, self.ymax),
        ]
    }

    pub fn bounding(points: &[Point]) -> Rect {
        let mut r = Rect::new(
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for p in points {
            r.xmin = r.xmin.min(p.x);
            r.ymin = r.ymin.min(p.y);
            r.xmax = r.xmax.max(p.x);
            r.ymax = r.ymax.max(p.y);
        }
        r
    }
}

/// Signed area (positive for counter-clockwise orientation).
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

/// Crossing-number point-in-polygon test. Points on the boundary may be
/// classified either way; callers only query points away from edges.
pub fn point_in_polygon(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, t))
}

/// Whether `p` lies within `tol` of the boundary of `poly`.
pub fn on_polygon_boundary(poly: &[Point], p: Point, tol: f64) -> bool {
    let n = poly.len();
    (0..n).any(|i| dist_to_segment(p, poly[i], poly[(i + 1) % n]) <= tol)
}

fn segments_touch(a0: Point, a1: Point, b0: Point, b1: Point, tol: f64) -> bool {
    let orient = |p: Point, q: Point, r: Point| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    dist_to_segment(a0, b0, b1) <= tol
        || dist_to_segment(a1, b0, b1) <= tol
        || dist_to_segment(b0, a0, a1) <= tol
        || dist_to_segment(b1, a0, a1) <= tol
}

/// The polygonal domain `D` together with its perforations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerforatedDomain {
    pub outer: Polygon,
    pub perforations: Vec<Polygon>,
}

/// On-disk geometry description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryFile {
    pub outer: Vec<[f64; 2]>,
    #[serde(default)]
    pub perforations: Vec<Vec<[f64; 2]>>,
    pub grid: [usize; 2],
}

impl GeometryFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn domain(&self) -> PerforatedDomain {
        PerforatedDomain {
            outer: self.outer.iter().map(|&p| p.into()).collect(),
            perforations: self
                .perforations
                .iter()
                .map(|poly| poly.iter().map(|&p| p.into()).collect())
                .collect(),
        }
    }

    pub fn from_domain(domain: &PerforatedDomain, grid: [usize; 2]) -> Self {
        GeometryFile {
            outer: domain.outer.iter().map(|&p| p.into()).collect(),
            perforations: domain
                .perforations
                .iter()
                .map(|poly| poly.iter().map(|&p| p.into()).collect())
                .collect(),
            grid,
        }
    }
}

impl PerforatedDomain {
    pub fn rectangle(bounds: Rect) -> Self {
        Self {
            outer: bounds.polygon(),
            perforations: Vec::new(),
        }
    }

    /// `(-1,1)² \ [0,1]²`.
    pub fn lshape() -> Self {
        Self {
            outer: Rect::new(-1.0, -1.0, 1.0, 1.0).polygon(),
            perforations: vec![Rect::new(0.0, 0.0, 1.0, 1.0).polygon()],
        }
    }

    pub fn bounds(&self) -> Rect {
        Rect::bounding(&self.outer)
    }

    /// Geometric tolerance used for snapping and coincidence tests.
    pub fn tolerance(&self) -> f64 {
        1e-9 * self.bounds().diameter()
    }

    /// Whether `p` is inside `D` and outside every perforation. Only meant
    /// for points that are away from all boundaries.
    pub fn is_fluid(&self, p: Point) -> bool {
        if !point_in_polygon(&self.outer, p) {
            return false;
        }
        !self.perforations.iter().any(|poly| {
            let bb = Rect::bounding(poly);
            bb.contains(p, 0.0) && point_in_polygon(poly, p)
        })
    }

    pub fn on_perforation_boundary(&self, p: Point, tol: f64) -> bool {
        self.perforations.iter().any(|poly| {
            Rect::bounding(poly).contains(p, tol) && on_polygon_boundary(poly, p, tol)
        })
    }

    /// Area of `Ω = D \ perforations` (perforations assumed inside `D`).
    pub fn fluid_area(&self) -> f64 {
        signed_area(&self.outer).abs()
            - self
                .perforations
                .iter()
                .map(|p| signed_area(p).abs())
                .sum::<f64>()
    }

    /// Checks that all edges are axis-aligned and that perforation closures
    /// are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let tol = self.tolerance();
        let check_axis = |poly: &[Point], what: &str| -> Result<()> {
            if poly.len() < 3 {
                return Err(Error::GeometryNotSnapped(format!(
                    "{what} has fewer than 3 vertices"
                )));
            }
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                if (a.x - b.x).abs() > tol && (a.y - b.y).abs() > tol {
                    return Err(Error::GeometryNotSnapped(format!(
                        "{what} edge ({}, {})-({}, {}) is not axis-aligned",
                        a.x, a.y, b.x, b.y
                    )));
                }
            }
            Ok(())
        };
        check_axis(&self.outer, "outer boundary")?;
        for (k, poly) in self.perforations.iter().enumerate() {
            check_axis(poly, &format!("perforation {k}"))?;
        }
        let boxes: Vec<Rect> = self.perforations.iter().map(|p| Rect::bounding(p)).collect();
        for a in 0..self.perforations.len() {
            for b in a + 1..self.perforations.len() {
                let (ra, rb) = (boxes[a], boxes[b]);
                if ra.xmax < rb.xmin - tol
                    || rb.xmax < ra.xmin - tol
                    || ra.ymax < rb.ymin - tol
                    || rb.ymax < ra.ymin - tol
                {
                    continue;
                }
                let (pa, pb) = (&self.perforations[a], &self.perforations[b]);
                let touching = (0..pa.len()).any(|i| {
                    (0..pb.len()).any(|j| {
                        segments_touch(
                            pa[i],
                            pa[(i + 1) % pa.len()],
                            pb[j],
                            pb[(j + 1) % pb.len()],
                            tol,
                        )
                    })
                }) || point_in_polygon(pa, pb[0])
                    || point_in_polygon(pb, pa[0]);
                if touching {
                    return Err(Error::OverlappingPerforations(a, b));
                }
            }
        }
        Ok(())
    }
}

/// Uniform `n_x × n_y` grid of rectangular coarse cells over the outer box.
/// Cell `j = iy * n_x + ix` (0-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarsePartition {
    pub bounds: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl CoarsePartition {
    pub fn new(bounds: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::PartitionMismatch(format!("empty grid {nx}×{ny}")));
        }
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
            return Err(Error::PartitionMismatch("degenerate bounds".into()));
        }
        Ok(Self { bounds, nx, ny })
    }

    /// Partition of the outer boundary of `domain`; fails unless the outer
    /// boundary is exactly its bounding rectangle.
    pub fn for_domain(domain: &PerforatedDomain, nx: usize, ny: usize) -> Result<Self> {
        let bounds = domain.bounds();
        let outer_area = signed_area(&domain.outer).abs();
        if (outer_area - bounds.area()).abs() > 1e-12 * bounds.area() {
            return Err(Error::PartitionMismatch(format!(
                "outer polygon (area {outer_area}) is not its bounding rectangle (area {})",
                bounds.area()
            )));
        }
        Self::new(bounds, nx, ny)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x_line(&self, i: usize) -> f64 {
        if i == self.nx {
            return self.bounds.xmax;
        }
        self.bounds.xmin + self.bounds.width() * i as f64 / self.nx as f64
    }

    pub fn y_line(&self, i: usize) -> f64 {
        if i == self.ny {
            return self.bounds.ymax;
        }
        self.bounds.ymin + self.bounds.height() * i as f64 / self.ny as f64
    }

    pub fn cell(&self, j: usize) -> Result<Rect> {
        if j >= self.n_cells() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.n_cells(),
            });
        }
        let (ix, iy) = (j % self.nx, j / self.nx);
        Ok(Rect::new(
            self.x_line(ix),
            self.y_line(iy),
            self.x_line(ix + 1),
            self.y_line(iy + 1),
        ))
    }

    pub fn cells(&self) -> Vec<Rect> {
        (0..self.n_cells()).map(|j| self.cell(j).unwrap()).collect()
    }

    /// Maximal axis extent of cell `j`.
    pub fn cell_extent(&self, j: usize) -> Result<f64> {
        let c = self.cell(j)?;
        Ok(c.width().max(c.height()))
    }

    /// Cell containing `p` (points on interfaces go to the upper/right cell).
    pub fn locate(&self, p: Point) -> Option<usize> {
        let b = &self.bounds;
        let tol = 1e-12 * b.diameter();
        if !b.contains(p, tol) {
            return None;
        }
        let fx = ((p.x - b.xmin) / b.width() * self.nx as f64).floor();
        let fy = ((p.y - b.ymin) / b.height() * self.ny as f64).floor();
        let ix = (fx.max(0.0) as usize).min(self.nx - 1);
        let iy = (fy.max(0.0) as usize).min(self.ny - 1);
        Some(iy * self.nx + ix)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    CellCorner,
    PerforationContact,
    RefinementSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseNode {
    pub position: Point,
    pub kind: NodeKind,
    /// Lies on the Dirichlet boundary; carries no coarse degree of freedom.
    pub constrained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseEdge {
    pub endpoints: [usize; 2],
    /// Identifier of the cell side (between two consecutive grid crossings)
    /// this edge belongs to.
    pub parent_interface: usize,
    pub refinement_level: u32,
    pub on_dirichlet: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub edges: Vec<CoarseEdge>,
    pub nodes: Vec<CoarseNode>,
    /// Maximal edge length `H`.
    pub h_max: f64,
}

impl Skeleton {
    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].endpoints;
        self.nodes[a].position.dist(self.nodes[b].position)
    }

    pub fn total_length(&self) -> f64 {
        (0..self.edges.len()).map(|e| self.edge_length(e)).sum()
    }

    pub fn interior_edges(&self) -> impl Iterator<Item = &CoarseEdge> {
        self.edges.iter().filter(|e| !e.on_dirichlet)
    }

    pub fn free_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| !n.constrained).count()
    }
}

struct NodeTable {
    tol: f64,
    index: HashMap<(i64, i64), usize>,
    nodes: Vec<CoarseNode>,
}

impl NodeTable {
    fn insert(&mut self, p: Point, kind: NodeKind) -> usize {
        let key = ((p.x / self.tol).round() as i64, (p.y / self.tol).round() as i64);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        // Guard against keys straddling a rounding boundary.
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&id) = self.index.get(&(key.0 + dx, key.1 + dy)) {
                    return id;
                }
            }
        }
        let id = self.nodes.len();
        self.nodes.push(CoarseNode {
            position: p,
            kind,
            constrained: false,
        });
        self.index.insert(key, id);
        id
    }
}

/// Builds the coarse skeleton `Γ = ∪ ∂Ω_j \ ∂Ω_S` split into straight edges.
///
/// Every grid line is cut at the grid crossings and at all perforation
/// vertex coordinates; each piece is classified by probing both sides of
/// its midpoint. Adjacent pieces in `Γ` are merged unless they meet at a
/// grid crossing or on a perforation boundary.
pub fn build_skeleton(domain: &PerforatedDomain, partition: &CoarsePartition) -> Result<Skeleton> {
    domain.validate()?;
    let check = CoarsePartition::for_domain(domain, partition.nx, partition.ny)?;
    let tol = domain.tolerance();
    let b = check.bounds;
    if (b.xmin - partition.bounds.xmin).abs() > tol
        || (b.xmax - partition.bounds.xmax).abs() > tol
        || (b.ymin - partition.bounds.ymin).abs() > tol
        || (b.ymax - partition.bounds.ymax).abs() > tol
    {
        return Err(Error::PartitionMismatch(
            "partition bounds differ from the outer rectangle".into(),
        ));
    }

    let probe = 1e3 * tol;
    let mut table = NodeTable {
        tol,
        index: HashMap::new(),
        nodes: Vec::new(),
    };
    let mut edges = Vec::new();
    let mut next_interface = 0usize;

    let xs: Vec<f64> = (0..=partition.nx).map(|i| partition.x_line(i)).collect();
    let ys: Vec<f64> = (0..=partition.ny).map(|i| partition.y_line(i)).collect();
    let perf_vertices: Vec<Point> = domain.perforations.iter().flatten().copied().collect();

    // (vertical?, line coordinate, transversal coordinates)
    let mut lines: Vec<(bool, f64, &[f64])> = Vec::new();
    for &x in &xs {
        lines.push((true, x, &ys));
    }
    for &y in &ys {
        lines.push((false, y, &xs));
    }

    for (vertical, c, transversal) in lines {
        let at = |s: f64| {
            if vertical {
                Point::new(c, s)
            } else {
                Point::new(s, c)
            }
        };
        let normal = if vertical {
            Point::new(1.0, 0.0)
        } else {
            Point::new(0.0, 1.0)
        };
        let (lo, hi) = (transversal[0], *transversal.last().unwrap());
        let mut breaks: Vec<f64> = transversal.to_vec();
        for v in &perf_vertices {
            let s = if vertical { v.y } else { v.x };
            if s > lo + tol && s < hi - tol {
                breaks.push(s);
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() <= tol);
        let is_crossing = |s: f64| transversal.iter().any(|&t| (t - s).abs() <= tol);
        let interface_of = |s: f64| transversal.iter().rposition(|&t| t <= s + tol).unwrap();
        let interface_base = next_interface;
        next_interface += transversal.len() - 1;

        // Classify each piece: None (not on Γ) or Some(on_dirichlet).
        let pieces: Vec<(f64, f64, Option<bool>)> = breaks
            .windows(2)
            .map(|w| {
                let m = at(0.5 * (w[0] + w[1]));
                let left = Point::new(m.x - probe * normal.x, m.y - probe * normal.y);
                let right = Point::new(m.x + probe * normal.x, m.y + probe * normal.y);
                let (fl, fr) = (domain.is_fluid(left), domain.is_fluid(right));
                let (il, ir) = (
                    point_in_polygon(&domain.outer, left),
                    point_in_polygon(&domain.outer, right),
                );
                let status = if fl && fr {
                    Some(false)
                } else if (fl && !ir) || (fr && !il) {
                    Some(true)
                } else {
                    None
                };
                (w[0], w[1], status)
            })
            .collect();

        let mut run: Option<(f64, bool)> = None;
        let mut flush = |start: f64, end: f64, dirichlet: bool, edges: &mut Vec<CoarseEdge>| {
            let ka = if is_crossing(start) {
                NodeKind::CellCorner
            } else {
                NodeKind::PerforationContact
            };
            let kb = if is_crossing(end) {
                NodeKind::CellCorner
            } else {
                NodeKind::PerforationContact
            };
            let a = table.insert(at(start), ka);
            let bnode = table.insert(at(end), kb);
            edges.push(CoarseEdge {
                endpoints: [a, bnode],
                parent_interface: interface_base + interface_of(0.5 * (start + end)),
                refinement_level: 0,
                on_dirichlet: dirichlet,
            });
        };
        for (k, &(s0, s1, status)) in pieces.iter().enumerate() {
            match (run, status) {
                (None, Some(d)) => run = Some((s0, d)),
                (Some(_), None) => unreachable!(),
                _ => {}
            }
            if let Some((start, d)) = run {
                let next = pieces.get(k + 1).and_then(|p| p.2);
                let split = match next {
                    None => true,
                    Some(nd) => {
                        nd != d || is_crossing(s1) || domain.on_perforation_boundary(at(s1), tol)
                    }
                };
                if split {
                    flush(start, s1, d, &mut edges);
                    run = None;
                }
            }
        }
    }

    let mut nodes = table.nodes;
    for e in &edges {
        if e.on_dirichlet {
            for &n in &e.endpoints {
                nodes[n].constrained = true;
            }
        }
    }
    let mut sk = Skeleton {
        edges,
        nodes,
        h_max: 0.0,
    };
    sk.h_max = (0..sk.edges.len())
        .map(|e| sk.edge_length(e))
        .fold(0.0, f64::max);
    Ok(sk)
}

/// Bisects every edge `levels` times (`2^levels` equal children per edge).
pub fn refine_edges(skeleton: &Skeleton, levels: u32) -> Skeleton {
    if levels == 0 {
        return skeleton.clone();
    }
    let pieces = 1usize << levels;
    let mut nodes = skeleton.nodes.clone();
    let mut edges = Vec::with_capacity(skeleton.edges.len() * pieces);
    for e in &skeleton.edges {
        let [a, b] = e.endpoints;
        let (pa, pb) = (nodes[a].position, nodes[b].position);
        let mut prev = a;
        for k in 1..=pieces {
            let next = if k == pieces {
                b
            } else {
                nodes.push(CoarseNode {
                    position: pa.lerp(pb, k as f64 / pieces as f64),
                    kind: NodeKind::RefinementSplit,
                    constrained: e.on_dirichlet,
                });
                nodes.len() - 1
            };
            edges.push(CoarseEdge {
                endpoints: [prev, next],
                parent_interface: e.parent_interface,
                refinement_level: e.refinement_level + levels,
                on_dirichlet: e.on_dirichlet,
            });
            prev = next;
        }
    }
    let mut sk = Skeleton {
        edges,
        nodes,
        h_max: 0.0,
    };
    sk.h_max = (0..sk.edges.len())
        .map(|e| sk.edge_length(e))
        .fold(0.0, f64::max);
    sk
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> PerforatedDomain {
        PerforatedDomain::rectangle(Rect::new(0.0, 0.0, 1.0, 1.0))
    }

    #[test]
    fn cross_skeleton() {
        let d = unit_square();
        let part = CoarsePartition::for_domain(&d, 2, 2).unwrap();
        let sk = build_skeleton(&d, &part).unwrap();
        assert_eq!(sk.interior_edges().count(), 4);
        assert_eq!(sk.edges.iter().filter(|e| e.on_dirichlet).count(), 8);
        assert_eq!(sk.nodes.len(), 9);
        assert_eq!(sk.free_nodes(), 1);
        let free = sk.nodes.iter().find(|n| !n.constrained).unwrap();
        assert_eq!(free.position, Point::new(0.5, 0.5));
        assert!((sk.h_max - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lshape_three_by_three() {
        let d = PerforatedDomain::lshape();
        let part = CoarsePartition::for_domain(&d, 3, 3).unwrap();
        let sk = build_skeleton(&d, &part).unwrap();
        assert_eq!(sk.interior_edges().count(), 10);
        assert_eq!(sk.edges.iter().filter(|e| e.on_dirichlet).count(), 10);
        assert_eq!(sk.nodes.len(), 16);
        let mut free: Vec<(f64, f64)> = sk
            .nodes
            .iter()
            .filter(|n| !n.constrained)
            .map(|n| (n.position.x, n.position.y))
            .collect();
        free.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let third = 1.0 / 3.0;
        let expect = [
            (-third, -third),
            (-third, third),
            (0.0, third),
            (third, -third),
            (third, 0.0),
        ];
        assert_eq!(free.len(), expect.len());
        for (f, e) in free.iter().zip(expect) {
            assert!((f.0 - e.0).abs() < 1e-12 && (f.1 - e.1).abs() < 1e-12, "{f:?} vs {e:?}");
        }
        let contacts = sk
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::PerforationContact)
            .count();
        // (1/3, 0), (0, 1/3), (1, 0), (0, 1)
        assert_eq!(contacts, 4);
        assert!((sk.h_max - 2.0 / 3.0).abs() < 1e-12);
        // the reentrant corner is never a coarse node
        assert!(sk.nodes.iter().all(|n| n.position.dist(Point::new(0.0, 0.0)) > 0.1));
    }

    /// Brute force: sample every grid-line interface at fine resolution and
    /// count the samples that belong to Γ.
    #[test]
    fn perforated_center_cell_matches_sampling() {
        let t = 1.0 / 3.0;
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![Rect::new(t, t, 2.0 * t, 2.0 * t).polygon()],
        };
        let part = CoarsePartition::for_domain(&d, 3, 3).unwrap();
        let sk = build_skeleton(&d, &part).unwrap();

        let samples = 3000;
        let eps = 1e-7;
        let outside = |q: Point| !point_in_polygon(&d.outer, q);
        let on_gamma = |l: Point, r: Point| {
            let (fl, fr) = (d.is_fluid(l), d.is_fluid(r));
            (fl && fr) || (fl && outside(r)) || (fr && outside(l))
        };
        let mut expected_len = 0.0;
        for i in 0..=3 {
            let c = i as f64 * t;
            for k in 0..samples {
                let s = (k as f64 + 0.5) / samples as f64;
                if on_gamma(Point::new(c - eps, s), Point::new(c + eps, s)) {
                    expected_len += 1.0 / samples as f64;
                }
                if on_gamma(Point::new(s, c - eps), Point::new(s, c + eps)) {
                    expected_len += 1.0 / samples as f64;
                }
            }
        }
        assert!((sk.total_length() - expected_len).abs() < 1e-3);
        // interfaces of the perforated cell are excluded entirely
        assert_eq!(sk.interior_edges().count(), 8);
        assert_eq!(sk.edges.iter().filter(|e| e.on_dirichlet).count(), 12);
        assert_eq!(sk.free_nodes(), 4);
        for e in &sk.edges {
            let m = sk.nodes[e.endpoints[0]]
                .position
                .midpoint(sk.nodes[e.endpoints[1]].position);
            assert!(!(m.x > t + 1e-9 && m.x < 2.0 * t - 1e-9 && m.y > t + 1e-9 && m.y < 2.0 * t - 1e-9));
        }
    }

    #[test]
    fn refine_identity_and_bisection() {
        let d = unit_square();
        let part = CoarsePartition::for_domain(&d, 2, 2).unwrap();
        let sk = build_skeleton(&d, &part).unwrap();
        assert_eq!(refine_edges(&sk, 0), sk);
        let r1 = refine_edges(&sk, 1);
        assert_eq!(r1.interior_edges().count(), 8);
        assert!((r1.h_max - 0.25).abs() < 1e-15);
        let new_interior_split = r1
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::RefinementSplit && !n.constrained)
            .count();
        assert_eq!(new_interior_split, 4);
        assert!((r1.total_length() - sk.total_length()).abs() < 1e-12 * sk.total_length());
        assert!(r1.edges.iter().all(|e| e.refinement_level == 1));
    }

    #[test]
    fn cell_extents() {
        let d = unit_square();
        let p = CoarsePartition::for_domain(&d, 2, 2).unwrap();
        for j in 0..4 {
            assert_eq!(p.cell_extent(j).unwrap(), 0.5);
        }
        assert!(matches!(p.cell_extent(4), Err(Error::IndexOutOfRange { .. })));
        let city = CoarsePartition::new(Rect::new(0.0, 0.0, 640.0, 640.0), 8, 8).unwrap();
        assert_eq!(city.cell_extent(17).unwrap(), 80.0);
        let wide = CoarsePartition::new(Rect::new(0.0, 0.0, 2.0, 1.0), 2, 1).unwrap();
        assert_eq!(wide.cell_extent(0).unwrap(), 1.0);
    }

    #[test]
    fn tiling_area() {
        let p = CoarsePartition::new(Rect::new(-1.0, -1.0, 1.0, 1.0), 7, 5).unwrap();
        let total: f64 = p.cells().iter().map(Rect::area).sum();
        assert!((total - 4.0).abs() < 1e-12 * 4.0);
    }

    #[test]
    fn non_rectangular_outer_rejected() {
        let d = PerforatedDomain {
            outer: vec![
                Point::new(0.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 2.0),
                Point::new(0.0, 2.0),
            ],
            perforations: vec![],
        };
        assert!(matches!(
            CoarsePartition::for_domain(&d, 2, 2),
            Err(Error::PartitionMismatch(_))
        ));
    }

    #[test]
    fn slanted_perforation_rejected() {
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![vec![
                Point::new(0.2, 0.2),
                Point::new(0.4, 0.3),
                Point::new(0.3, 0.5),
            ]],
        };
        let part = CoarsePartition::for_domain(&d, 2, 2).unwrap();
        assert!(matches!(
            build_skeleton(&d, &part),
            Err(Error::GeometryNotSnapped(_))
        ));
    }

    #[test]
    fn touching_perforations_rejected() {
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![
                Rect::new(0.1, 0.1, 0.2, 0.2).polygon(),
                Rect::new(0.2, 0.1, 0.3, 0.2).polygon(),
            ],
        };
        assert!(matches!(
            d.validate(),
            Err(Error::OverlappingPerforations(0, 1))
        ));
    }

    #[test]
    fn wall_touching_interface_gets_node() {
        // wall ends exactly on the interface x = 0.5 without crossing it
        let d = PerforatedDomain {
            outer: Rect::new(0.0, 0.0, 1.0, 1.0).polygon(),
            perforations: vec![Rect::new(0.25, 0.2, 0.5, 0.25).polygon()],
        };
        let part = CoarsePartition::for_domain(&d, 2, 1).unwrap();
        let sk = build_skeleton(&d, &part).unwrap();
        let interior: Vec<_> = sk.interior_edges().collect();
        assert_eq!(interior.len(), 2);
        let contacts: Vec<Point> = sk
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::PerforationContact)
            .map(|n| n.position)
            .collect();
        assert_eq!(contacts.len(), 2);
        assert!(contacts.contains(&Point::new(0.5, 0.2)));
        assert!(contacts.contains(&Point::new(0.5, 0.25)));
        assert!(sk.nodes.iter().filter(|n| !n.constrained).count() == 2);
    }

    #[test]
    fn geometry_file_roundtrip() {
        let d = PerforatedDomain::lshape();
        let f = GeometryFile::from_domain(&d, [3, 3]);
        let text = serde_json::to_string(&f).unwrap();
        let back: GeometryFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.domain(), d);
        assert_eq!(back.grid, [3, 3]);
    }
}
