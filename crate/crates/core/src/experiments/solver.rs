use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{lshape_pitch, Problem};
use crate::coarse::{build_nicolaides, build_trefftz_with, CoarseSpace};
use crate::error::{Error, Result};
use crate::fem::{assemble, exact_lshape, solve_fine};
use crate::geometry::{refine_edges, CoarsePartition, GeometryFile, PerforatedDomain, Point};
use crate::mesh::{build_overlap_rule, load_triangle_format, red_refine, OverlapRule, Prolongation, Triangulation};
use crate::numerics::GmresOptions;
use crate::schwarz::{hybrid_iterate, solve_pgmres, ErrorMonitor, HybridOptions, IterationReport, Reference, SchwarzContext};
use crate::urban::{generate_urban_synthetic, UrbanParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum GeometrySource {
    /// `(-1,1)² \ [0,1]²` with the singular exact solution as data.
    Lshape,
    /// Synthetic urban frame, `f = 1`, zero data on the frame.
    Urban { params: UrbanParams, walls: bool },
    /// JSON geometry file meshed at `pitch` (required); its grid overrides `grid`.
    File { path: PathBuf },
    /// Triangle files `base.{node,ele,poly}` plus the JSON geometry they mesh.
    Triangle { geometry: PathBuf, base: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hybrid,
    Gmres,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Hybrid => "hybrid",
            Method::Gmres => "gmres",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Trefftz,
    Nicolaides,
}

impl SpaceKind {
    pub(crate) fn name(self) -> &'static str {
        match self {
            SpaceKind::Trefftz => "trefftz",
            SpaceKind::Nicolaides => "nicolaides",
        }
    }
}

pub(crate) fn overlap_label(rule: OverlapRule) -> String {
    match rule {
        OverlapRule::Minimal => "min".into(),
        r if r == OverlapRule::H20 => "h20".into(),
        OverlapRule::Fraction(q) => format!("f{q}"),
        OverlapRule::Layers(l) => format!("l{l}"),
    }
}

pub(crate) fn build_space(
    kind: SpaceKind,
    problem: &Problem,
    overlap: &crate::mesh::OverlapSet,
    p: u32,
    r: u32,
) -> Result<CoarseSpace> {
    match kind {
        SpaceKind::Trefftz => {
            let sk = refine_edges(&problem.skeleton, r);
            build_trefftz_with(&problem.mesh, &problem.system, &sk, p, &problem.solvers)
        }
        SpaceKind::Nicolaides => build_nicolaides(&problem.mesh, &problem.system, overlap),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub geometry: GeometrySource,
    /// Fine pitch; the urban source uses its own pitch when unset.
    pub pitch: Option<f64>,
    /// Corner grading rounds (L-shape only).
    pub grade: u32,
    pub grid: [usize; 2],
    pub overlaps: Vec<OverlapRule>,
    pub space: SpaceKind,
    pub p: u32,
    pub edge_refinements: Vec<u32>,
    pub methods: Vec<Method>,
    /// Target relative algebraic `L²` error.
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Red refinements of the working mesh for the reference solution when
    /// no exact solution is known; 0 disables full errors.
    pub reference_levels: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            geometry: GeometrySource::Lshape,
            pitch: None,
            grade: 3,
            grid: [5, 5],
            overlaps: vec![OverlapRule::H20],
            space: SpaceKind::Trefftz,
            p: 1,
            edge_refinements: vec![0],
            methods: vec![Method::Hybrid, Method::Gmres],
            tol: Some(1e-10),
            max_iters: 200,
            reference_levels: 1,
        }
    }
}

/// One row of the solver summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverRun {
    pub method: Method,
    pub n_subdomains: usize,
    pub overlap: String,
    pub space: SpaceKind,
    pub p: u32,
    pub r: u32,
    pub dim: Option<usize>,
    pub iterations: Option<usize>,
    pub stop: Option<String>,
    pub initial_alg_l2: Option<f64>,
    pub final_alg_l2: Option<f64>,
    pub file: Option<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub report: Option<IterationReport>,
}

impl SolverRun {
    pub const CSV_HEADER: &'static str = "method,N,overlap,space,p,r,dim,iterations,stop,initial_alg_L2,final_alg_L2,file,error";

    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method.name(),
            self.n_subdomains,
            self.overlap,
            self.space.name(),
            self.p,
            self.r,
            self.dim.map_or(String::new(), |d| d.to_string()),
            self.iterations.map_or(String::new(), |d| d.to_string()),
            self.stop.clone().unwrap_or_default(),
            opt(self.initial_alg_l2),
            opt(self.final_alg_l2),
            self.file.clone().unwrap_or_default(),
            self.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        )
    }
}

pub fn solver_summary_csv(runs: &[SolverRun]) -> String {
    let mut s = format!("{}\n", SolverRun::CSV_HEADER);
    for r in runs {
        writeln!(s, "{}", r.csv_line()).unwrap();
    }
    s
}

fn load_problem(config: &SolverConfig) -> Result<Problem> {
    let pitch = |default: f64| config.pitch.unwrap_or(default);
    match &config.geometry {
        GeometrySource::Lshape => {
            let [nx, ny] = config.grid;
            if nx != ny {
                return Err(Error::InvalidParameter("the L-shape needs a square grid".into()));
            }
            let corner = [Point::new(0.0, 0.0)];
            Problem::structured(
                PerforatedDomain::lshape(),
                config.grid,
                lshape_pitch(pitch(1.0 / 96.0), nx),
                Some((&corner, config.grade)),
                &|_| 0.0,
                &|q| exact_lshape(q).0,
            )
        }
        GeometrySource::Urban { params, walls } => {
            let g = generate_urban_synthetic(params)?;
            Problem::structured(g.domain_with(*walls), config.grid, pitch(params.pitch), None, &|_| 1.0, &|_| 0.0)
        }
        GeometrySource::File { path } => {
            let file = GeometryFile::read(path)?;
            let d = file.domain();
            d.validate()?;
            let h = config
                .pitch
                .ok_or_else(|| Error::InvalidParameter("geometry files need a pitch".into()))?;
            Problem::structured(d, file.grid, h, None, &|_| 1.0, &|_| 0.0)
        }
        GeometrySource::Triangle { geometry, base } => {
            let file = GeometryFile::read(geometry)?;
            let d = file.domain();
            d.validate()?;
            let part = CoarsePartition::for_domain(&d, file.grid[0], file.grid[1])?;
            let ext = |e: &str| base.with_extension(e);
            let mesh = load_triangle_format(ext("node"), ext("ele"), ext("poly"), &part)?;
            Problem::from_mesh(d, part, mesh, &|_| 1.0, &|_| 0.0)
        }
    }
}

struct NestedReference {
    mesh: Triangulation,
    prolongation: Prolongation,
    field: Vec<f64>,
}

fn nested_reference(problem: &Problem, levels: u32, rhs: f64) -> Result<NestedReference> {
    let mut mesh = problem.mesh.clone();
    let mut prolongation = Prolongation::identity();
    for _ in 0..levels {
        let (m, p) = red_refine(&mesh)?;
        mesh = m;
        prolongation = prolongation.then(p);
    }
    let system = assemble(&mesh, &|_| rhs, &|_| 0.0)?;
    let field = solve_fine(&system)?;
    Ok(NestedReference {
        mesh,
        prolongation,
        field,
    })
}

fn validate(config: &SolverConfig) -> Result<()> {
    if !(1..=2).contains(&config.p) {
        return Err(Error::InvalidParameter(format!("p = {}", config.p)));
    }
    if config.grid.contains(&0) {
        return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
    }
    if config.pitch.is_some_and(|h| !(h > 0.0)) {
        return Err(Error::InvalidParameter("pitch must be positive".into()));
    }
    if config.tol.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    for rule in &config.overlaps {
        if let OverlapRule::Fraction(q) = rule {
            if !(*q > 0.0) {
                return Err(Error::InvalidParameter(format!("overlap fraction {q}")));
            }
        }
    }
    for path in match &config.geometry {
        GeometrySource::File { path } => vec![path.clone()],
        GeometrySource::Triangle { geometry, base } => {
            vec![geometry.clone(), base.with_extension("node"), base.with_extension("ele"), base.with_extension("poly")]
        }
        _ => vec![],
    } {
        if !path.exists() {
            return Err(Error::InvalidParameter(format!("{} does not exist", path.display())));
        }
    }
    Ok(())
}

/// Runs every `(overlap, r, method)` combination of the sweep. Writes one
/// history CSV per run and `summary.csv` into `out` when given.
pub fn run_solver_study(config: &SolverConfig, out: Option<&Path>) -> Result<Vec<SolverRun>> {
    validate(config)?;
    let problem = load_problem(config)?;
    let nested = match config.geometry {
        GeometrySource::Lshape => None,
        _ if config.reference_levels > 0 => Some(nested_reference(&problem, config.reference_levels, 1.0)?),
        _ => None,
    };
    let exact = |q: Point| exact_lshape(q);
    let reference = || match (&config.geometry, &nested) {
        (GeometrySource::Lshape, _) => Reference::Exact(&exact),
        (_, Some(n)) => Reference::Nested {
            mesh: &n.mesh,
            prolongation: &n.prolongation,
            field: &n.field,
        },
        _ => Reference::None,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let n_sub = problem.partition.n_cells();
    let mut runs = Vec::new();
    let refinements: Vec<u32> = match config.space {
        SpaceKind::Trefftz => config.edge_refinements.clone(),
        SpaceKind::Nicolaides => vec![0],
    };
    for &rule in &config.overlaps {
        let label = overlap_label(rule);
        let overlap = build_overlap_rule(&problem.mesh, &problem.system.dofmap, &problem.partition, rule)?;
        for &r in &refinements {
            let space = build_space(config.space, &problem, &overlap, config.p, r);
            let ctx = space.and_then(|s| SchwarzContext::new(&problem.system, &overlap, Some(s)));
            for &method in &config.methods {
                let mut run = SolverRun {
                    method,
                    n_subdomains: n_sub,
                    overlap: label.clone(),
                    space: config.space,
                    p: config.p,
                    r,
                    dim: None,
                    iterations: None,
                    stop: None,
                    initial_alg_l2: None,
                    final_alg_l2: None,
                    file: None,
                    error: None,
                    report: None,
                };
                let ctx = match &ctx {
                    Ok(c) => c,
                    Err(e) => {
                        run.error = Some(e.to_string());
                        runs.push(run);
                        continue;
                    }
                };
                run.dim = ctx.coarse.as_ref().map(|c| c.dim());
                let monitor = ErrorMonitor::new(&problem.mesh, &problem.system, problem.fine.clone(), reference());
                let result = match method {
                    Method::Hybrid => {
                        let opts = HybridOptions {
                            max_iters: config.max_iters,
                            tol: config.tol,
                            ..Default::default()
                        };
                        hybrid_iterate(ctx, &problem.system, None, &opts, &monitor)
                    }
                    Method::Gmres => {
                        let opts = GmresOptions {
                            max_iters: config.max_iters,
                            ..Default::default()
                        };
                        solve_pgmres(ctx, &problem.system, &opts, Some(&monitor), config.tol)
                    }
                };
                match result {
                    Ok((_, report)) => {
                        run.iterations = Some(report.iterations);
                        run.stop = Some(serde_json::to_value(report.stop)?.as_str().unwrap_or_default().to_string());
                        run.initial_alg_l2 = report.records.first().map(|r| r.alg_err_l2);
                        run.final_alg_l2 = report.last().map(|r| r.alg_err_l2);
                        let name = format!(
                            "{}_{}_N{}_ov{}_p{}_r{}.csv",
                            method.name(),
                            config.space.name(),
                            n_sub,
                            label,
                            config.p,
                            r
                        );
                        if let Some(dir) = out {
                            report.write_csv(dir.join(&name))?;
                        }
                        run.file = Some(name);
                        run.report = Some(report);
                    }
                    Err(e) => run.error = Some(e.to_string()),
                }
                runs.push(run);
            }
        }
    }
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.csv"), solver_summary_csv(&runs))?;
    }
    Ok(runs)
}
