use crate::error::{Error, Result};
use crate::geometry::{CoarsePartition, PerforatedDomain, Point};

use super::{BoundaryTag, Triangulation};

fn snap(value: f64, origin: f64, pitch: f64, what: &str) -> Result<i64> {
    let q = (value - origin) / pitch;
    let r = q.round();
    if (q - r).abs() > 1e-6 {
        return Err(Error::PitchMismatch {
            pitch,
            what: what.to_string(),
        });
    }
    Ok(r as i64)
}

/// Uniform grid of `fine_pitch` squares over the outer box, with squares
/// whose centre lies in a perforation removed and every remaining square
/// split along its lower-left to upper-right diagonal.
pub fn generate_structured(
    domain: &PerforatedDomain,
    partition: &CoarsePartition,
    fine_pitch: f64,
) -> Result<Triangulation> {
    if !(fine_pitch > 0.0) {
        return Err(Error::InvalidParameter(format!("pitch {fine_pitch}")));
    }
    domain.validate()?;
    let b = partition.bounds;
    let nx = snap(b.xmax, b.xmin, fine_pitch, "outer width")? as usize;
    let ny = snap(b.ymax, b.ymin, fine_pitch, "outer height")? as usize;
    for i in 0..=partition.nx {
        snap(partition.x_line(i), b.xmin, fine_pitch, "coarse cell width")?;
    }
    for i in 0..=partition.ny {
        snap(partition.y_line(i), b.ymin, fine_pitch, "coarse cell height")?;
    }
    for poly in &domain.perforations {
        for p in poly {
            snap(p.x, b.xmin, fine_pitch, "perforation x coordinate")?;
            snap(p.y, b.ymin, fine_pitch, "perforation y coordinate")?;
        }
    }
    let px = |i: usize| {
        if i == nx {
            b.xmax
        } else {
            b.xmin + b.width() * i as f64 / nx as f64
        }
    };
    let py = |j: usize| {
        if j == ny {
            b.ymax
        } else {
            b.ymin + b.height() * j as f64 / ny as f64
        }
    };

    let mut keep = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = Point::new(0.5 * (px(i) + px(i + 1)), 0.5 * (py(j) + py(j + 1)));
            keep[j * nx + i] = domain.is_fluid(c);
        }
    }

    let mut id = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut points = Vec::new();
    let mut node = |i: usize, j: usize, points: &mut Vec<Point>| {
        let k = j * (nx + 1) + i;
        if id[k] == usize::MAX {
            id[k] = points.len();
            points.push(Point::new(px(i), py(j)));
        }
        id[k]
    };
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !keep[j * nx + i] {
                continue;
            }
            let p00 = node(i, j, &mut points);
            let p10 = node(i + 1, j, &mut points);
            let p11 = node(i + 1, j + 1, &mut points);
            let p01 = node(i, j + 1, &mut points);
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }
    if triangles.is_empty() {
        return Err(Error::DisconnectedDomain { components: 0 });
    }

    let tol = 1e-9 * b.diameter();
    let on_outer = |p: Point, q: Point| {
        let side = |a: f64, b: f64, c: f64| (a - c).abs() <= tol && (b - c).abs() <= tol;
        side(p.x, q.x, b.xmin)
            || side(p.x, q.x, b.xmax)
            || side(p.y, q.y, b.ymin)
            || side(p.y, q.y, b.ymax)
    };
    let pts = points.clone();
    let mesh = Triangulation::from_parts(points, triangles, partition, Some(fine_pitch), |a, c| {
        Ok(if on_outer(pts[a], pts[c]) {
            BoundaryTag::Dirichlet
        } else {
            BoundaryTag::Neumann
        })
    })?;
    mesh.check_connected()?;
    Ok(mesh)
}
