use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{eoc_fit, eoc_two_point, fmt_opt, Problem};
use crate::coarse::{build_trefftz_with, coarse_approximation};
use crate::error::{Error, Result};
use crate::fem::{error_norms, exact_lshape};
use crate::geometry::{refine_edges, PerforatedDomain, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// `N = (2k+1)²` square cells, `k = 1..=levels`.
    Mesh,
    /// Fixed 3×3 cells, skeleton edges split `2^r` times, `r = 0..=levels`.
    Edge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LshapeConfig {
    pub strategy: Strategy,
    pub p: u32,
    pub levels: u32,
    /// Requested fine pitch; snapped down so that cell sides and the
    /// reentrant corner fall on grid lines.
    pub pitch: f64,
    /// Local refinement rounds toward the reentrant corner.
    pub grade: u32,
}

impl Default for LshapeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Edge,
            p: 1,
            levels: 3,
            pitch: 1.0 / 192.0,
            grade: 3,
        }
    }
}

/// Largest pitch not above `requested` dividing both the cell side `2/n`
/// and the half-width `1` of `(-1,1)²`.
pub fn lshape_pitch(requested: f64, cells_per_side: usize) -> f64 {
    let base = 2 * cells_per_side;
    let q = ((2.0 / requested) / base as f64 - 1e-9).ceil().max(1.0) as usize;
    2.0 / (base * q) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub n_subdomains: usize,
    pub n_dofs: usize,
    pub h: f64,
    pub dim: usize,
    /// Coarse approximation against the exact solution.
    pub l2_rel: f64,
    pub h1_rel: f64,
    pub eoc_l2: Option<f64>,
    pub eoc_h1: Option<f64>,
    /// Coarse approximation against the fine solution.
    pub alg_l2_rel: f64,
    pub alg_h1_rel: f64,
    pub alg_eoc_l2: Option<f64>,
    pub alg_eoc_h1: Option<f64>,
    /// Fine solution against the exact solution.
    pub fe_l2_rel: f64,
    pub fe_h1_rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LshapeStudy {
    pub config: LshapeConfig,
    pub rows: Vec<ConvergenceRow>,
}

impl LshapeStudy {
    /// Least-squares rates over the rows `from..=to`:
    /// `(full L², full H¹, algebraic L², algebraic H¹)`.
    pub fn fitted_eoc(&self, from: usize, to: usize) -> [f64; 4] {
        let rows = &self.rows[from..=to];
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let col = |f: fn(&ConvergenceRow) -> f64| eoc_fit(&hs, &rows.iter().map(f).collect::<Vec<_>>());
        [col(|r| r.l2_rel), col(|r| r.h1_rel), col(|r| r.alg_l2_rel), col(|r| r.alg_h1_rel)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "level,N,n_dofs,H,dim,l2_rel,h1_rel,eoc_l2,eoc_h1,alg_l2_rel,alg_h1_rel,alg_eoc_l2,alg_eoc_h1,fe_l2_rel,fe_h1_rel\n",
        );
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{:.12e},{},{:.12e},{:.12e},{},{},{:.12e},{:.12e},{},{},{:.12e},{:.12e}",
                r.level,
                r.n_subdomains,
                r.n_dofs,
                r.h,
                r.dim,
                r.l2_rel,
                r.h1_rel,
                fmt_opt(r.eoc_l2),
                fmt_opt(r.eoc_h1),
                r.alg_l2_rel,
                r.alg_h1_rel,
                fmt_opt(r.alg_eoc_l2),
                fmt_opt(r.alg_eoc_h1),
                r.fe_l2_rel,
                r.fe_h1_rel
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn lshape_problem(cells: usize, config: &LshapeConfig) -> Result<Problem> {
    let corner = [Point::new(0.0, 0.0)];
    Problem::structured(
        PerforatedDomain::lshape(),
        [cells, cells],
        lshape_pitch(config.pitch, cells),
        Some((&corner, config.grade)),
        &|_| 0.0,
        &|p| exact_lshape(p).0,
    )
}

fn row(problem: &Problem, level: u32, skeleton: &crate::geometry::Skeleton, p: u32) -> Result<ConvergenceRow> {
    let space = build_trefftz_with(&problem.mesh, &problem.system, skeleton, p, &problem.solvers)?;
    let u = coarse_approximation(&space, &problem.system);
    let exact = |q: Point| exact_lshape(q);
    let full = error_norms(&problem.mesh, &u, &exact)?;
    let fe = error_norms(&problem.mesh, &problem.fine, &exact)?;
    let (alg_l2, alg_h1) = problem.system.relative_errors(&u, &problem.fine);
    Ok(ConvergenceRow {
        level,
        n_subdomains: problem.partition.n_cells(),
        n_dofs: problem.system.n_free(),
        h: skeleton.h_max,
        dim: space.dim(),
        l2_rel: full.l2_rel,
        h1_rel: full.h1_rel,
        eoc_l2: None,
        eoc_h1: None,
        alg_l2_rel: alg_l2,
        alg_h1_rel: alg_h1,
        alg_eoc_l2: None,
        alg_eoc_h1: None,
        fe_l2_rel: fe.l2_rel,
        fe_h1_rel: fe.h1_rel,
    })
}

/// Coarse approximation errors along a refinement sequence, with exact
/// Dirichlet data and `f = 0`.
pub fn run_lshape_convergence(config: &LshapeConfig) -> Result<LshapeStudy> {
    if !(1..=2).contains(&config.p) {
        return Err(Error::InvalidParameter(format!("p = {}", config.p)));
    }
    if !(config.pitch > 0.0) {
        return Err(Error::InvalidParameter(format!("pitch = {}", config.pitch)));
    }
    let mut rows = Vec::new();
    match config.strategy {
        Strategy::Edge => {
            let problem = lshape_problem(3, config)?;
            for r in 0..=config.levels {
                let sk = refine_edges(&problem.skeleton, r);
                rows.push(row(&problem, r, &sk, config.p)?);
            }
        }
        Strategy::Mesh => {
            if config.levels == 0 {
                return Err(Error::InvalidParameter("mesh strategy needs levels >= 1".into()));
            }
            for k in 1..=config.levels {
                let problem = lshape_problem(2 * k as usize + 1, config)?;
                rows.push(row(&problem, k, &problem.skeleton, config.p)?);
            }
        }
    }
    for i in 1..rows.len() {
        let (a, b) = (rows[i - 1].clone(), &mut rows[i]);
        b.eoc_l2 = Some(eoc_two_point(a.h, a.l2_rel, b.h, b.l2_rel));
        b.eoc_h1 = Some(eoc_two_point(a.h, a.h1_rel, b.h, b.h1_rel));
        b.alg_eoc_l2 = Some(eoc_two_point(a.h, a.alg_l2_rel, b.h, b.alg_l2_rel));
        b.alg_eoc_h1 = Some(eoc_two_point(a.h, a.alg_h1_rel, b.h, b.alg_h1_rel));
    }
    Ok(LshapeStudy {
        config: config.clone(),
        rows,
    })
}
