use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::solver::{build_space, overlap_label};
use super::{Problem, SpaceKind};
use crate::error::{Error, Result};
use crate::mesh::{build_overlap_rule, OverlapRule, OverlapSet};
use crate::numerics::GmresOptions;
use crate::schwarz::{solve_pgmres, ErrorMonitor, Reference, SchwarzContext, StopReason};
use crate::urban::{generate_urban_synthetic, UrbanParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalabilityConfig {
    /// One frame per seed; overrides `urban.seed`.
    pub seeds: Vec<u64>,
    /// Cells per side, `N = n²`.
    pub grids: Vec<usize>,
    pub urban: UrbanParams,
    pub walls: Vec<bool>,
    pub overlaps: Vec<OverlapRule>,
    pub spaces: Vec<SpaceKind>,
    /// Polynomial degree of the Trefftz space.
    pub p: u32,
    /// GMRES stops at this relative algebraic `L²` error.
    pub alg_tol: f64,
    pub max_iters: usize,
}

impl Default for ScalabilityConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            grids: vec![2, 4, 8, 16],
            urban: UrbanParams::default(),
            walls: vec![false, true],
            overlaps: vec![OverlapRule::Minimal, OverlapRule::H20],
            spaces: vec![SpaceKind::Trefftz, SpaceKind::Nicolaides],
            p: 1,
            alg_tol: 1e-8,
            max_iters: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityRow {
    pub seed: u64,
    pub walls: bool,
    pub n_subdomains: usize,
    pub n_dofs: Option<usize>,
    pub overlap: String,
    pub space: SpaceKind,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub dim: Option<usize>,
    pub relative_dim: Option<f64>,
    pub error: Option<String>,
}

impl ScalabilityRow {
    pub const CSV_HEADER: &'static str = "seed,walls,N,n_dofs,overlap,space,iterations,converged,dim,relative_dim,error";

    fn csv_line(&self) -> String {
        let o = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.walls,
            self.n_subdomains,
            o(self.n_dofs),
            self.overlap,
            self.space.name(),
            o(self.iterations),
            self.converged.map_or(String::new(), |c| c.to_string()),
            o(self.dim),
            self.relative_dim.map_or(String::new(), |x| format!("{x:.6}")),
            self.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        )
    }
}

pub fn scalability_csv(rows: &[ScalabilityRow]) -> String {
    let mut s = format!("{}\n", ScalabilityRow::CSV_HEADER);
    for r in rows {
        writeln!(s, "{}", r.csv_line()).unwrap();
    }
    s
}

/// GMRES iteration counts and coarse dimensions over the sweep, one row per
/// configuration (failures included). Writes `scalability.csv` and
/// `table.txt` into `out` when given.
pub fn run_scalability(config: &ScalabilityConfig, out: Option<&Path>) -> Result<Vec<ScalabilityRow>> {
    if !(1..=2).contains(&config.p) {
        return Err(Error::InvalidParameter(format!("p = {}", config.p)));
    }
    if config.grids.contains(&0) || config.seeds.is_empty() {
        return Err(Error::InvalidParameter("grids must be positive and seeds nonempty".into()));
    }
    if !(config.alg_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("alg_tol = {}", config.alg_tol)));
    }
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let geometry = generate_urban_synthetic(&UrbanParams {
            seed,
            ..config.urban.clone()
        })?;
        for &walls in &config.walls {
            for &n in &config.grids {
                let blank = |overlap: OverlapRule, space: SpaceKind| ScalabilityRow {
                    seed,
                    walls,
                    n_subdomains: n * n,
                    n_dofs: None,
                    overlap: overlap_label(overlap),
                    space,
                    iterations: None,
                    converged: None,
                    dim: None,
                    relative_dim: None,
                    error: None,
                };
                let problem = Problem::structured(
                    geometry.domain_with(walls),
                    [n, n],
                    config.urban.pitch,
                    None,
                    &|_| 1.0,
                    &|_| 0.0,
                );
                let problem = match problem {
                    Ok(p) => p,
                    Err(e) => {
                        for &o in &config.overlaps {
                            for &s in &config.spaces {
                                rows.push(ScalabilityRow {
                                    error: Some(e.to_string()),
                                    ..blank(o, s)
                                });
                            }
                        }
                        continue;
                    }
                };
                let monitor = ErrorMonitor::new(&problem.mesh, &problem.system, problem.fine.clone(), Reference::None);
                for &rule in &config.overlaps {
                    let overlap = build_overlap_rule(&problem.mesh, &problem.system.dofmap, &problem.partition, rule);
                    for &space in &config.spaces {
                        let mut row = blank(rule, space);
                        row.n_dofs = Some(problem.system.n_free());
                        let attempt = |ov: &OverlapSet| -> Result<_> {
                            let coarse = build_space(space, &problem, ov, config.p, 0)?;
                            let (dim, rel) = (coarse.dim(), coarse.relative_dim());
                            let ctx = SchwarzContext::new(&problem.system, ov, Some(coarse))?;
                            let opts = GmresOptions {
                                max_iters: config.max_iters,
                                restart: config.max_iters.min(300),
                                ..Default::default()
                            };
                            let (_, rep) = solve_pgmres(&ctx, &problem.system, &opts, Some(&monitor), Some(config.alg_tol))?;
                            Ok((dim, rel, rep))
                        };
                        let run = match &overlap {
                            Ok(ov) => attempt(ov).map_err(|e| e.to_string()),
                            Err(e) => Err(e.to_string()),
                        };
                        match run {
                            Ok((dim, rel, rep)) => {
                                row.dim = Some(dim);
                                row.relative_dim = Some(rel);
                                row.iterations = Some(rep.iterations);
                                row.converged = Some(
                                    rep.stop == StopReason::Tolerance
                                        && rep.last().is_some_and(|r| r.alg_err_l2 <= config.alg_tol),
                                );
                            }
                            Err(e) => row.error = Some(e),
                        }
                        rows.push(row);
                    }
                }
            }
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("scalability.csv"), scalability_csv(&rows))?;
        std::fs::write(dir.join("table.txt"), scalability_table(&rows))?;
    }
    Ok(rows)
}

/// Text table with one line per `(seed, walls, overlap, N)` and an
/// `iterations / dim (relative dim)` column per coarse space.
pub fn scalability_table(rows: &[ScalabilityRow]) -> String {
    let mut spaces: Vec<SpaceKind> = Vec::new();
    let mut keys: Vec<(u64, bool, String, usize)> = Vec::new();
    for r in rows {
        if !spaces.contains(&r.space) {
            spaces.push(r.space);
        }
        let k = (r.seed, r.walls, r.overlap.clone(), r.n_subdomains);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut s = format!("{:>6} {:>6} {:>8} {:>6}", "seed", "walls", "overlap", "N");
    for sp in &spaces {
        write!(s, " {:>28}", sp.name()).unwrap();
    }
    s.push('\n');
    for (seed, walls, overlap, n) in keys {
        write!(s, "{seed:>6} {:>6} {overlap:>8} {n:>6}", if walls { "yes" } else { "no" }).unwrap();
        for sp in &spaces {
            let cell = rows
                .iter()
                .find(|r| r.seed == seed && r.walls == walls && r.overlap == overlap && r.n_subdomains == n && r.space == *sp)
                .map_or(String::from("-"), |r| match (&r.error, r.iterations, r.dim, r.relative_dim) {
                    (Some(_), ..) => "error".into(),
                    (None, Some(it), Some(d), Some(rd)) => {
                        let mark = if r.converged == Some(true) { "" } else { "*" };
                        format!("{it}{mark} / {d} ({rd:.1})")
                    }
                    _ => "-".into(),
                });
            write!(s, " {cell:>28}").unwrap();
        }
        s.push('\n');
    }
    s
}
