//! Experiment drivers: L-shape convergence studies, solver comparisons and
//! the synthetic urban scalability sweep.

mod lshape;
mod scalability;
mod solver;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use lshape::{lshape_pitch, run_lshape_convergence, LshapeConfig, LshapeStudy, Strategy};
pub use scalability::{run_scalability, scalability_table, ScalabilityConfig, ScalabilityRow};
pub use solver::{run_solver_study, GeometrySource, Method, SolverConfig, SolverRun, SpaceKind};

use crate::coarse::LocalSolvers;
use crate::error::Result;
use crate::fem::{assemble, solve_fine, AssembledSystem};
use crate::geometry::{build_skeleton, CoarsePartition, PerforatedDomain, Point, Skeleton};
use crate::mesh::{generate_structured, refine_toward, Triangulation};

/// Everything built once per (geometry, partition, mesh).
pub struct Problem {
    pub domain: PerforatedDomain,
    pub partition: CoarsePartition,
    pub mesh: Triangulation,
    pub system: AssembledSystem,
    pub skeleton: Skeleton,
    pub solvers: LocalSolvers,
    /// Fine solution `u_h` as a nodal field.
    pub fine: Vec<f64>,
}

impl Problem {
    /// Structured mesh at `pitch`, optionally graded `grade.1` times toward
    /// the points `grade.0`.
    pub fn structured(
        domain: PerforatedDomain,
        grid: [usize; 2],
        pitch: f64,
        grade: Option<(&[Point], u32)>,
        rhs: &dyn Fn(Point) -> f64,
        dirichlet: &dyn Fn(Point) -> f64,
    ) -> Result<Self> {
        let partition = CoarsePartition::for_domain(&domain, grid[0], grid[1])?;
        let mut mesh = generate_structured(&domain, &partition, pitch)?;
        if let Some((points, levels)) = grade {
            mesh = refine_toward(&mesh, points, levels)?;
        }
        Self::from_mesh(domain, partition, mesh, rhs, dirichlet)
    }

    pub fn from_mesh(
        domain: PerforatedDomain,
        partition: CoarsePartition,
        mesh: Triangulation,
        rhs: &dyn Fn(Point) -> f64,
        dirichlet: &dyn Fn(Point) -> f64,
    ) -> Result<Self> {
        let system = assemble(&mesh, rhs, dirichlet)?;
        let skeleton = build_skeleton(&domain, &partition)?;
        let solvers = LocalSolvers::new(&mesh, &system)?;
        let fine = solve_fine(&system)?;
        Ok(Self {
            domain,
            partition,
            mesh,
            system,
            skeleton,
            solvers,
            fine,
        })
    }
}

/// `log(e_prev/e) / log(h_prev/h)`.
pub fn eoc_two_point(h_prev: f64, e_prev: f64, h: f64, e: f64) -> f64 {
    (e_prev / e).ln() / (h_prev / h).ln()
}

/// Least-squares slope of `log e` against `log h`.
pub fn eoc_fit(hs: &[f64], es: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = es.iter().map(|e| e.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Top-level experiment description accepted by `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "lowercase")]
pub enum ExperimentConfig {
    Lshape {
        #[serde(flatten)]
        config: LshapeConfig,
        out: PathBuf,
    },
    Solve {
        #[serde(flatten)]
        config: SolverConfig,
        out: PathBuf,
    },
    Scalability {
        #[serde(flatten)]
        config: ScalabilityConfig,
        out: PathBuf,
    },
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}
