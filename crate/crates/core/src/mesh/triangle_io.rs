//! Reader and writer for the `.node` / `.ele` / `.poly` mesh format.
//!
//! Segment markers: 1 = Dirichlet, 2 = Neumann.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{CoarsePartition, Point};

use super::{edge_key, BoundaryTag, Triangulation};

struct Lines {
    path: PathBuf,
    rows: Vec<(usize, Vec<String>)>,
    pos: usize,
}

impl Lines {
    fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rows = text
            .lines()
            .enumerate()
            .filter_map(|(i, line)| {
                let body = line.split('#').next().unwrap_or("");
                let toks: Vec<String> = body.split_whitespace().map(str::to_string).collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Ok(Self {
            path: path.to_path_buf(),
            rows,
            pos: 0,
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<String>)> {
        let last = self.rows.last().map_or(0, |r| r.0);
        let row = self
            .rows
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err(last + 1, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(row)
    }

    fn field<T: std::str::FromStr>(&self, row: &(usize, Vec<String>), k: usize, what: &str) -> Result<T> {
        row.1
            .get(k)
            .ok_or_else(|| self.err(row.0, format!("missing {what}")))?
            .parse()
            .map_err(|_| self.err(row.0, format!("invalid {what} '{}'", row.1[k])))
    }
}

/// Reads the vertex list; returns (points, index base).
fn read_nodes(lines: &mut Lines) -> Result<(Vec<Point>, usize)> {
    let head = lines.next("node header")?;
    let n: usize = lines.field(&head, 0, "node count")?;
    if n > 0 {
        let dim: usize = lines.field(&head, 1, "dimension")?;
        if dim != 2 {
            return Err(lines.err(head.0, format!("dimension {dim} is not 2")));
        }
    }
    let mut points = Vec::with_capacity(n);
    let mut base = 0;
    for k in 0..n {
        let row = lines.next("node line")?;
        let id: usize = lines.field(&row, 0, "node id")?;
        if k == 0 {
            if id > 1 {
                return Err(lines.err(row.0, format!("first node id {id} is neither 0 nor 1")));
            }
            base = id;
        }
        if id != k + base {
            return Err(lines.err(row.0, format!("node id {id} out of sequence")));
        }
        points.push(Point::new(
            lines.field(&row, 1, "x coordinate")?,
            lines.field(&row, 2, "y coordinate")?,
        ));
    }
    Ok((points, base))
}

/// Loads a mesh, assigning triangles to cells by centroid and boundary tags
/// from the segment markers of the `.poly` file.
pub fn load_triangle_format(
    node_path: impl AsRef<Path>,
    ele_path: impl AsRef<Path>,
    poly_path: impl AsRef<Path>,
    partition: &CoarsePartition,
) -> Result<Triangulation> {
    let mut nl = Lines::read(node_path.as_ref())?;
    let (points, base) = read_nodes(&mut nl)?;

    let mut el = Lines::read(ele_path.as_ref())?;
    let head = el.next("element header")?;
    let nt: usize = el.field(&head, 0, "triangle count")?;
    let per: usize = el.field(&head, 1, "nodes per triangle")?;
    if per != 3 && per != 6 {
        return Err(el.err(head.0, format!("{per} nodes per triangle")));
    }
    let mut triangles = Vec::with_capacity(nt);
    let mut ebase = 0;
    for k in 0..nt {
        let row = el.next("triangle line")?;
        let id: usize = el.field(&row, 0, "triangle id")?;
        if k == 0 {
            ebase = id;
        }
        if id != k + ebase {
            return Err(el.err(row.0, format!("triangle id {id} out of sequence")));
        }
        let mut tri = [0usize; 3];
        for (m, v) in tri.iter_mut().enumerate() {
            let raw: usize = el.field(&row, m + 1, "vertex index")?;
            if raw < base || raw - base >= points.len() {
                return Err(el.err(row.0, format!("vertex index {raw} out of range")));
            }
            *v = raw - base;
        }
        triangles.push(tri);
    }

    let mut pl = Lines::read(poly_path.as_ref())?;
    let (poly_points, pbase, shared_vertices) = {
        let (pp, pb) = read_nodes(&mut pl)?;
        if pp.is_empty() {
            (points.clone(), base, true)
        } else {
            (pp, pb, false)
        }
    };
    let head = pl.next("segment header")?;
    let ns: usize = pl.field(&head, 0, "segment count")?;
    let has_markers: usize = pl.field(&head, 1, "boundary marker flag")?;
    if has_markers == 0 && ns > 0 {
        return Err(pl.err(head.0, "segments carry no boundary markers"));
    }
    let mut segments: Vec<(Point, Point, BoundaryTag)> = Vec::with_capacity(ns);
    let mut by_nodes: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
    for _ in 0..ns {
        let row = pl.next("segment line")?;
        let a: usize = pl.field(&row, 1, "segment endpoint")?;
        let b: usize = pl.field(&row, 2, "segment endpoint")?;
        let marker: i64 = pl.field(&row, 3, "segment marker")?;
        let tag = match marker {
            1 => BoundaryTag::Dirichlet,
            2 => BoundaryTag::Neumann,
            m => return Err(pl.err(row.0, format!("unknown segment marker {m}"))),
        };
        if a < pbase || b < pbase || a - pbase >= poly_points.len() || b - pbase >= poly_points.len() {
            return Err(pl.err(row.0, "segment endpoint out of range"));
        }
        let (a, b) = (a - pbase, b - pbase);
        if shared_vertices {
            by_nodes.insert(edge_key(a, b), tag);
        }
        segments.push((poly_points[a], poly_points[b], tag));
    }

    let tol = 1e-9 * partition.bounds.diameter();
    let on_segment = |p: Point, a: Point, b: Point| {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len = dx.hypot(dy);
        let cross = dx * (p.y - a.y) - dy * (p.x - a.x);
        let dot = dx * (p.x - a.x) + dy * (p.y - a.y);
        cross.abs() <= tol * len && dot >= -tol * len && dot <= len * len + tol * len
    };
    let pts = points.clone();
    Triangulation::from_parts(points, triangles, partition, None, |a, b| {
        if let Some(&tag) = by_nodes.get(&edge_key(a, b)) {
            return Ok(tag);
        }
        segments
            .iter()
            .find(|(s0, s1, _)| on_segment(pts[a], *s0, *s1) && on_segment(pts[b], *s0, *s1))
            .map(|s| s.2)
            .ok_or(Error::UntaggedBoundaryEdge(a, b))
    })
}

/// Writes `<base>.node`, `<base>.ele` and `<base>.poly` with 1-based
/// indices; the `.poly` file lists the tagged boundary edges as segments.
pub fn write_triangle_format(mesh: &Triangulation, base: impl AsRef<Path>) -> Result<[PathBuf; 3]> {
    let base = base.as_ref();
    let with_ext = |ext: &str| {
        let mut p = base.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    let paths = [with_ext(".node"), with_ext(".ele"), with_ext(".poly")];

    let mut s = String::new();
    writeln!(s, "{} 2 0 0", mesh.n_points()).unwrap();
    for (i, p) in mesh.points.iter().enumerate() {
        writeln!(s, "{} {:.16e} {:.16e}", i + 1, p.x, p.y).unwrap();
    }
    std::fs::write(&paths[0], s)?;

    let mut s = String::new();
    writeln!(s, "{} 3 0", mesh.triangles.len()).unwrap();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        writeln!(s, "{} {} {} {}", t + 1, tri[0] + 1, tri[1] + 1, tri[2] + 1).unwrap();
    }
    std::fs::write(&paths[1], s)?;

    let mut s = String::new();
    writeln!(s, "0 2 0 1").unwrap();
    writeln!(s, "{} 1", mesh.boundary_edges.len()).unwrap();
    for (k, e) in mesh.boundary_edges.iter().enumerate() {
        let marker = match e.tag {
            BoundaryTag::Dirichlet => 1,
            BoundaryTag::Neumann => 2,
        };
        writeln!(s, "{} {} {} {}", k + 1, e.nodes[0] + 1, e.nodes[1] + 1, marker).unwrap();
    }
    writeln!(s, "0").unwrap();
    std::fs::write(&paths[2], s)?;
    Ok(paths)
}
