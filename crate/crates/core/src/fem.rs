//! P1 finite elements for `-Δu = f` with Dirichlet data on `∂Ω \ ∂Ω_S` and
//! homogeneous Neumann data on the perforation boundaries.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::{DofMap, Prolongation, Triangulation};
use crate::numerics::{dot, factorize_spd, SparseMatrix};

/// Six-point rule of degree four on the reference triangle:
/// `(barycentric coordinates, weight)` with weights summing to one.
pub fn quadrature() -> [([f64; 3], f64); 6] {
    const A: f64 = 0.445948490915965;
    const B: f64 = 0.091576213509771;
    const WA: f64 = 0.223381589678011;
    const WB: f64 = 0.109951743655322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
}

/// Gradients of the three barycentric coordinates and the signed area.
fn p1_gradients(v: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area = 0.5 * ((v[1].x - v[0].x) * (v[2].y - v[0].y) - (v[1].y - v[0].y) * (v[2].x - v[0].x));
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(v[j].y - v[k].y) / (2.0 * area), (v[k].x - v[j].x) / (2.0 * area)];
    }
    (g, area)
}

#[derive(Clone, Debug)]
pub struct AssembledSystem {
    /// Stiffness matrix on the free nodes.
    pub a: SparseMatrix,
    /// Load on the free nodes with the Dirichlet values eliminated.
    pub f: Vec<f64>,
    /// Stiffness matrix over all nodes.
    pub k_full: SparseMatrix,
    /// Consistent mass matrix over all nodes.
    pub mass_full: SparseMatrix,
    /// Load over all nodes, before elimination.
    pub load_full: Vec<f64>,
    pub dofmap: DofMap,
    /// Prescribed values at Dirichlet nodes, zero elsewhere.
    pub dirichlet_values: Vec<f64>,
}

impl AssembledSystem {
    pub fn n_free(&self) -> usize {
        self.dofmap.n_free()
    }

    /// Nodal field from free values and the stored Dirichlet values.
    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        self.dofmap.extend(free_values, &self.dirichlet_values)
    }

    /// `uᵀ K v` over all nodes.
    pub fn energy_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut kv = vec![0.0; v.len()];
        self.k_full.spmv_into(v, &mut kv);
        dot(u, &kv)
    }

    pub fn energy_norm(&self, u: &[f64]) -> f64 {
        self.energy_inner(u, u).max(0.0).sqrt()
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        let mut mu = vec![0.0; u.len()];
        self.mass_full.spmv_into(u, &mut mu);
        dot(u, &mu).max(0.0).sqrt()
    }

    /// Relative `(L², H¹-seminorm)` distance between two nodal fields on this
    /// mesh, relative to `reference`.
    pub fn relative_errors(&self, field: &[f64], reference: &[f64]) -> (f64, f64) {
        let d: Vec<f64> = field.iter().zip(reference).map(|(a, b)| a - b).collect();
        let (l2r, h1r) = (self.l2_norm(reference), self.energy_norm(reference));
        let rel = |e: f64, r: f64| if r > 0.0 { e / r } else { e };
        (rel(self.l2_norm(&d), l2r), rel(self.energy_norm(&d), h1r))
    }
}

/// Assembles stiffness, mass and load; the load uses vertex quadrature.
pub fn assemble(
    mesh: &Triangulation,
    rhs_fn: &dyn Fn(Point) -> f64,
    dirichlet_fn: &dyn Fn(Point) -> f64,
) -> Result<AssembledSystem> {
    let n = mesh.n_points();
    let dofmap = DofMap::new(mesh);
    let mut kt = Vec::with_capacity(9 * mesh.triangles.len());
    let mut mt = Vec::with_capacity(9 * mesh.triangles.len());
    let mut load_full = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let v = mesh.vertices(t);
        let (g, area) = p1_gradients(v);
        let diam = mesh.diameter(t);
        if !(area.abs() >= 1e-14 * diam * diam) {
            return Err(Error::DegenerateTriangle { triangle: t, area });
        }
        let area = area.abs();
        for i in 0..3 {
            for j in 0..3 {
                let kij = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                kt.push((tri[i], tri[j], kij));
                let mij = if i == j { area / 6.0 } else { area / 12.0 };
                mt.push((tri[i], tri[j], mij));
            }
            load_full[tri[i]] += rhs_fn(v[i]) * area / 3.0;
        }
    }
    let k_full = SparseMatrix::from_triplets(n, n, kt)?;
    let mass_full = SparseMatrix::from_triplets(n, n, mt)?;
    let mut dirichlet_values = vec![0.0; n];
    for v in 0..n {
        if dofmap.is_dirichlet[v] {
            dirichlet_values[v] = dirichlet_fn(mesh.points[v]);
        }
    }
    let a = k_full.submatrix(&dofmap.free, &dofmap.free);
    let mut kd = vec![0.0; n];
    k_full.spmv_into(&dirichlet_values, &mut kd);
    let f = dofmap.free.iter().map(|&v| load_full[v] - kd[v]).collect();
    Ok(AssembledSystem {
        a,
        f,
        k_full,
        mass_full,
        load_full,
        dofmap,
        dirichlet_values,
    })
}

/// Direct fine-scale solve; returns the nodal field including Dirichlet
/// values.
pub fn solve_fine(system: &AssembledSystem) -> Result<Vec<f64>> {
    let fac = factorize_spd(&system.a)?;
    let u = fac.solve(&system.f);
    Ok(system.expand(&u))
}

/// `r^{2/3} cos(2/3 (θ - π/2))` with `θ ∈ [π/2, 5π/2)`, so that the two
/// faces of the removed quadrant `[0,1]²` carry zero normal derivative.
/// Returns the value and the Cartesian gradient; the gradient at the origin
/// is infinite.
pub fn exact_lshape(p: Point) -> (f64, [f64; 2]) {
    let r = p.x.hypot(p.y);
    if r == 0.0 {
        return (0.0, [f64::INFINITY, f64::INFINITY]);
    }
    let mut theta = p.y.atan2(p.x);
    if theta < 0.5 * PI {
        theta += 2.0 * PI;
    }
    let phi = 2.0 / 3.0 * (theta - 0.5 * PI);
    let value = r.powf(2.0 / 3.0) * phi.cos();
    let ur = 2.0 / 3.0 * r.powf(-1.0 / 3.0) * phi.cos();
    // (1/r) ∂u/∂θ
    let ut = -2.0 / 3.0 * r.powf(-1.0 / 3.0) * phi.sin();
    let (c, s) = (theta.cos(), theta.sin());
    (value, [ur * c - ut * s, ur * s + ut * c])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l2_rel: f64,
    pub h1_rel: f64,
    pub l2_abs: f64,
    pub h1_abs: f64,
    pub l2_ref: f64,
    pub h1_ref: f64,
}

impl ErrorNorms {
    fn from_sums(e_l2: f64, e_h1: f64, r_l2: f64, r_h1: f64) -> Self {
        let (l2_abs, h1_abs, l2_ref, h1_ref) = (e_l2.sqrt(), e_h1.sqrt(), r_l2.sqrt(), r_h1.sqrt());
        let rel = |e: f64, r: f64| if r > 0.0 { e / r } else { e };
        Self {
            l2_rel: rel(l2_abs, l2_ref),
            h1_rel: rel(h1_abs, h1_ref),
            l2_abs,
            h1_abs,
            l2_ref,
            h1_ref,
        }
    }
}

/// Relative `L²` and `H¹`-seminorm errors of a P1 field against an analytic
/// solution `(value, gradient)`.
pub fn error_norms(mesh: &Triangulation, field: &[f64], exact: &dyn Fn(Point) -> (f64, [f64; 2])) -> Result<ErrorNorms> {
    if field.len() != mesh.n_points() {
        return Err(Error::DimMismatch {
            expected: mesh.n_points(),
            got: field.len(),
        });
    }
    let q = quadrature();
    let (mut el2, mut eh1, mut rl2, mut rh1) = (0.0, 0.0, 0.0, 0.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let v = mesh.vertices(t);
        let (g, area) = p1_gradients(v);
        let area = area.abs();
        let vals = tri.map(|i| field[i]);
        let gh = [
            (0..3).map(|i| vals[i] * g[i][0]).sum::<f64>(),
            (0..3).map(|i| vals[i] * g[i][1]).sum::<f64>(),
        ];
        for (lam, w) in q {
            let p = Point::new(
                lam[0] * v[0].x + lam[1] * v[1].x + lam[2] * v[2].x,
                lam[0] * v[0].y + lam[1] * v[1].y + lam[2] * v[2].y,
            );
            let uh = lam[0] * vals[0] + lam[1] * vals[1] + lam[2] * vals[2];
            let (u, gu) = exact(p);
            let wa = w * area;
            el2 += wa * (uh - u).powi(2);
            eh1 += wa * ((gh[0] - gu[0]).powi(2) + (gh[1] - gu[1]).powi(2));
            rl2 += wa * u * u;
            rh1 += wa * (gu[0] * gu[0] + gu[1] * gu[1]);
        }
    }
    Ok(ErrorNorms::from_sums(el2, eh1, rl2, rh1))
}

/// Errors of `coarse_field` (on the mesh that `prolongation` refines)
/// against `fine_field` on the refined mesh `fine_mesh`.
pub fn error_norms_nested(
    fine_mesh: &Triangulation,
    prolongation: &Prolongation,
    coarse_field: &[f64],
    fine_field: &[f64],
) -> Result<ErrorNorms> {
    let lifted = prolongation.apply(coarse_field)?;
    if lifted.len() != fine_mesh.n_points() || fine_field.len() != fine_mesh.n_points() {
        return Err(Error::MeshNotNested(format!(
            "fields of length {} and {} on a mesh with {} nodes",
            lifted.len(),
            fine_field.len(),
            fine_mesh.n_points()
        )));
    }
    let (mut el2, mut eh1, mut rl2, mut rh1) = (0.0, 0.0, 0.0, 0.0);
    let q = quadrature();
    for (t, tri) in fine_mesh.triangles.iter().enumerate() {
        let (g, area) = p1_gradients(fine_mesh.vertices(t));
        let area = area.abs();
        let e = tri.map(|i| lifted[i] - fine_field[i]);
        let r = tri.map(|i| fine_field[i]);
        let grad = |c: [f64; 3]| {
            [
                (0..3).map(|i| c[i] * g[i][0]).sum::<f64>(),
                (0..3).map(|i| c[i] * g[i][1]).sum::<f64>(),
            ]
        };
        let (ge, gr) = (grad(e), grad(r));
        eh1 += area * (ge[0] * ge[0] + ge[1] * ge[1]);
        rh1 += area * (gr[0] * gr[0] + gr[1] * gr[1]);
        for (lam, w) in q {
            let ev = lam[0] * e[0] + lam[1] * e[1] + lam[2] * e[2];
            let rv = lam[0] * r[0] + lam[1] * r[1] + lam[2] * r[2];
            el2 += w * area * ev * ev;
            rl2 += w * area * rv * rv;
        }
    }
    Ok(ErrorNorms::from_sums(el2, eh1, rl2, rh1))
}

/// CSV `node_id,x,y,value`.
pub fn field_csv(mesh: &Triangulation, field: &[f64]) -> String {
    let mut s = String::from("node_id,x,y,value\n");
    for (i, (p, v)) in mesh.points.iter().zip(field).enumerate() {
        writeln!(s, "{i},{:.17e},{:.17e},{:.17e}", p.x, p.y, v).unwrap();
    }
    s
}

pub fn write_field_csv(mesh: &Triangulation, field: &[f64], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, field_csv(mesh, field))?;
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with one point scalar.
pub fn write_vtk(mesh: &Triangulation, field: &[f64], name: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0\n{name}\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", mesh.n_points()).unwrap();
    for p in &mesh.points {
        writeln!(s, "{:.17e} {:.17e} 0", p.x, p.y).unwrap();
    }
    writeln!(s, "CELLS {} {}", mesh.triangles.len(), 4 * mesh.triangles.len()).unwrap();
    for t in &mesh.triangles {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", mesh.triangles.len()).unwrap();
    for _ in &mesh.triangles {
        writeln!(s, "5").unwrap();
    }
    writeln!(s, "POINT_DATA {}\nSCALARS {name} double 1\nLOOKUP_TABLE default", mesh.n_points()).unwrap();
    for v in field {
        writeln!(s, "{:.17e}", v).unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}
