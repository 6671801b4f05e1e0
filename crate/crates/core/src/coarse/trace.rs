//! Piecewise polynomial traces on the coarse skeleton.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Point, Skeleton};

/// Where a point of `Γ` sits relative to the skeleton.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceLocation {
    Node(usize),
    /// Interior of an edge, `t ∈ (0,1)` measured from `endpoints[0]`.
    Edge { edge: usize, t: f64 },
}

#[derive(Clone, Debug)]
struct Locator {
    tol: f64,
    quantum: f64,
    nodes: HashMap<(i64, i64), Vec<usize>>,
    /// Horizontal edges keyed by quantised `y`: `(xmin, xmax, edge)` sorted.
    horizontal: HashMap<i64, Vec<(f64, f64, usize)>>,
    vertical: HashMap<i64, Vec<(f64, f64, usize)>>,
    oblique: Vec<usize>,
}

impl Locator {
    fn new(sk: &Skeleton) -> Self {
        let (mut lo, mut hi) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
        for n in &sk.nodes {
            lo = Point::new(lo.x.min(n.position.x), lo.y.min(n.position.y));
            hi = Point::new(hi.x.max(n.position.x), hi.y.max(n.position.y));
        }
        let diam = if sk.nodes.is_empty() { 1.0 } else { lo.dist(hi).max(f64::MIN_POSITIVE) };
        let tol = 1e-8 * diam;
        let quantum = 4.0 * tol;
        let key = |v: f64| (v / quantum).round() as i64;
        let mut nodes: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (k, n) in sk.nodes.iter().enumerate() {
            nodes.entry((key(n.position.x), key(n.position.y))).or_default().push(k);
        }
        let mut horizontal: HashMap<i64, Vec<(f64, f64, usize)>> = HashMap::new();
        let mut vertical: HashMap<i64, Vec<(f64, f64, usize)>> = HashMap::new();
        let mut oblique = Vec::new();
        for (e, edge) in sk.edges.iter().enumerate() {
            let (a, b) = (sk.nodes[edge.endpoints[0]].position, sk.nodes[edge.endpoints[1]].position);
            if (a.y - b.y).abs() <= tol {
                horizontal.entry(key(a.y)).or_default().push((a.x.min(b.x), a.x.max(b.x), e));
            } else if (a.x - b.x).abs() <= tol {
                vertical.entry(key(a.x)).or_default().push((a.y.min(b.y), a.y.max(b.y), e));
            } else {
                oblique.push(e);
            }
        }
        for list in horizontal.values_mut().chain(vertical.values_mut()) {
            list.sort_by(|p, q| p.0.total_cmp(&q.0));
        }
        Self {
            tol,
            quantum,
            nodes,
            horizontal,
            vertical,
            oblique,
        }
    }

    fn key(&self, v: f64) -> i64 {
        (v / self.quantum).round() as i64
    }

    fn find_on_line(&self, map: &HashMap<i64, Vec<(f64, f64, usize)>>, line: f64, s: f64) -> Option<usize> {
        let k = self.key(line);
        for kk in [k, k - 1, k + 1] {
            if let Some(list) = map.get(&kk) {
                let i = list.partition_point(|e| e.0 < s);
                if i > 0 {
                    let (a, b, e) = list[i - 1];
                    if s > a + self.tol && s < b - self.tol {
                        return Some(e);
                    }
                }
            }
        }
        None
    }
}

/// Nodal hats on the free coarse nodes plus, for `p = 2`, the edge bubble
/// `4t(1-t)` on every non-Dirichlet edge.
#[derive(Clone, Debug)]
pub struct TraceBasis {
    pub p: u32,
    pub skeleton: Skeleton,
    pub node_dof: Vec<Option<usize>>,
    pub edge_dof: Vec<Option<usize>>,
    pub dim: usize,
    locator: Locator,
}

impl TraceBasis {
    pub fn new(skeleton: &Skeleton, p: u32) -> Result<Self> {
        if !(1..=2).contains(&p) {
            return Err(Error::InvalidParameter(format!("trace order p = {p}, expected 1 or 2")));
        }
        let mut dim = 0;
        let node_dof = skeleton
            .nodes
            .iter()
            .map(|n| {
                (!n.constrained).then(|| {
                    dim += 1;
                    dim - 1
                })
            })
            .collect();
        let edge_dof = skeleton
            .edges
            .iter()
            .map(|e| {
                (p == 2 && !e.on_dirichlet).then(|| {
                    dim += 1;
                    dim - 1
                })
            })
            .collect();
        Ok(Self {
            p,
            skeleton: skeleton.clone(),
            node_dof,
            edge_dof,
            dim,
            locator: Locator::new(skeleton),
        })
    }

    pub fn locate(&self, q: Point) -> Option<TraceLocation> {
        let loc = &self.locator;
        let (kx, ky) = (loc.key(q.x), loc.key(q.y));
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = loc.nodes.get(&(kx + dx, ky + dy)) {
                    for &k in list {
                        if self.skeleton.nodes[k].position.dist(q) <= loc.tol {
                            return Some(TraceLocation::Node(k));
                        }
                    }
                }
            }
        }
        let edge = loc
            .find_on_line(&loc.horizontal, q.y, q.x)
            .or_else(|| loc.find_on_line(&loc.vertical, q.x, q.y))
            .or_else(|| {
                loc.oblique.iter().copied().find(|&e| {
                    let (a, b) = self.edge_points(e);
                    let t = self.param(e, q);
                    t > 0.0 && t < 1.0 && a.lerp(b, t).dist(q) <= loc.tol
                })
            })?;
        Some(TraceLocation::Edge {
            edge,
            t: self.param(edge, q),
        })
    }

    fn edge_points(&self, e: usize) -> (Point, Point) {
        let [a, b] = self.skeleton.edges[e].endpoints;
        (self.skeleton.nodes[a].position, self.skeleton.nodes[b].position)
    }

    fn param(&self, e: usize, q: Point) -> f64 {
        let (a, b) = self.edge_points(e);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        ((q.x - a.x) * dx + (q.y - a.y) * dy) / (dx * dx + dy * dy)
    }

    /// Weights of the coarse nodal hats (free or constrained) at `loc`.
    pub fn hat_weights(&self, loc: TraceLocation) -> Vec<(usize, f64)> {
        match loc {
            TraceLocation::Node(k) => vec![(k, 1.0)],
            TraceLocation::Edge { edge, t } => {
                let [a, b] = self.skeleton.edges[edge].endpoints;
                vec![(a, 1.0 - t), (b, t)]
            }
        }
    }

    /// Nonzero basis values at `loc` as `(dof, value)`, ascending in `dof`.
    pub fn values(&self, loc: TraceLocation) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .hat_weights(loc)
            .into_iter()
            .filter_map(|(k, w)| self.node_dof[k].map(|d| (d, w)))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        if let TraceLocation::Edge { edge, t } = loc {
            if let Some(d) = self.edge_dof[edge] {
                out.push((d, 4.0 * t * (1.0 - t)));
            }
        }
        out.sort_by_key(|&(d, _)| d);
        out
    }

    /// Value of basis function `dof` at `q`; zero off the skeleton.
    pub fn evaluate(&self, dof: usize, q: Point) -> f64 {
        self.locate(q)
            .map(|loc| self.values(loc).into_iter().find(|&(d, _)| d == dof).map_or(0.0, |(_, v)| v))
            .unwrap_or(0.0)
    }
}
