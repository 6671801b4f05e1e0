use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use trefftz_core::experiments::{
    run_lshape_convergence, run_scalability, run_solver_study, scalability_table, ExperimentConfig, GeometrySource,
    LshapeConfig, Method, ScalabilityConfig, SolverConfig, SpaceKind, Strategy,
};
use trefftz_core::mesh::OverlapRule;
use trefftz_core::urban::UrbanParams;

#[derive(Parser)]
#[command(name = "trefftz-dd", version, about = "Trefftz coarse spaces and two-level Schwarz experiments")]
struct Cli {
    /// Run the experiment described by a JSON file instead of a subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Coarse approximation errors on the L-shape under refinement.
    Lshape(LshapeArgs),
    /// Hybrid fixed point and preconditioned GMRES histories.
    Solve(SolveArgs),
    /// GMRES iteration counts over the synthetic urban sweep.
    Scalability(ScalabilityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Mesh,
    Edge,
}

#[derive(Args)]
struct LshapeArgs {
    #[arg(long, value_enum, default_value = "edge")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 1)]
    p: u32,
    #[arg(long, default_value_t = 3)]
    levels: u32,
    #[arg(long, default_value_t = 1.0 / 192.0)]
    pitch: f64,
    #[arg(long, default_value_t = 3)]
    grade: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OverlapArg {
    Min,
    H20,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Trefftz,
    Nicolaides,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Hybrid,
    Gmres,
}

#[derive(Args)]
struct SolveArgs {
    /// JSON geometry file (built-in L-shape when neither this nor --urban is given).
    #[arg(long, conflicts_with = "urban")]
    geometry: Option<PathBuf>,
    /// Triangle files BASE.{node,ele,poly} meshing --geometry.
    #[arg(long, requires = "geometry")]
    mesh: Option<PathBuf>,
    /// Seed of a synthetic urban frame.
    #[arg(long)]
    urban: Option<u64>,
    /// Leave the walls out of the urban frame.
    #[arg(long, requires = "urban")]
    no_walls: bool,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    grid: Option<Vec<usize>>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "h20")]
    overlap: Vec<OverlapArg>,
    #[arg(long, value_enum, default_value = "trefftz")]
    space: SpaceArg,
    #[arg(long, default_value_t = 1)]
    p: u32,
    /// Edge refinement levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    edge_ref: Vec<u32>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hybrid,gmres")]
    method: Vec<MethodArg>,
    /// Target relative algebraic L2 error.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long)]
    pitch: Option<f64>,
    #[arg(long, default_value_t = 3)]
    grade: u32,
    /// Red refinements for the reference solution (non L-shape geometries).
    #[arg(long, default_value_t = 1)]
    reference_levels: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScalabilityArgs {
    /// Seeds of the urban frames, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Cells per side, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    grids: Vec<usize>,
    /// Also run N = 1024.
    #[arg(long)]
    include_1024: bool,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

fn overlap_rule(o: OverlapArg) -> OverlapRule {
    match o {
        OverlapArg::Min => OverlapRule::Minimal,
        OverlapArg::H20 => OverlapRule::H20,
    }
}

fn lshape_config(a: &LshapeArgs) -> LshapeConfig {
    LshapeConfig {
        strategy: match a.strategy {
            StrategyArg::Mesh => Strategy::Mesh,
            StrategyArg::Edge => Strategy::Edge,
        },
        p: a.p,
        levels: a.levels,
        pitch: a.pitch,
        grade: a.grade,
    }
}

fn solver_config(a: &SolveArgs) -> SolverConfig {
    let geometry = match (&a.geometry, &a.mesh, a.urban) {
        (Some(g), Some(m), _) => GeometrySource::Triangle {
            geometry: g.clone(),
            base: m.clone(),
        },
        (Some(g), None, _) => GeometrySource::File { path: g.clone() },
        (None, _, Some(seed)) => GeometrySource::Urban {
            params: UrbanParams {
                seed,
                ..Default::default()
            },
            walls: !a.no_walls,
        },
        (None, _, None) => GeometrySource::Lshape,
    };
    let default_grid = match geometry {
        GeometrySource::Urban { .. } => [8, 8],
        _ => [5, 5],
    };
    SolverConfig {
        geometry,
        pitch: a.pitch,
        grade: a.grade,
        grid: a.grid.as_ref().map_or(default_grid, |g| [g[0], g[1]]),
        overlaps: a.overlap.iter().map(|&o| overlap_rule(o)).collect(),
        space: match a.space {
            SpaceArg::Trefftz => SpaceKind::Trefftz,
            SpaceArg::Nicolaides => SpaceKind::Nicolaides,
        },
        p: a.p,
        edge_refinements: a.edge_ref.clone(),
        methods: a
            .method
            .iter()
            .map(|m| match m {
                MethodArg::Hybrid => Method::Hybrid,
                MethodArg::Gmres => Method::Gmres,
            })
            .collect(),
        tol: Some(a.tol),
        max_iters: a.max_iters,
        reference_levels: a.reference_levels,
    }
}

fn scalability_config(a: &ScalabilityArgs) -> ScalabilityConfig {
    let mut grids = a.grids.clone();
    if a.include_1024 && !grids.contains(&32) {
        grids.push(32);
    }
    ScalabilityConfig {
        seeds: a.seeds.clone(),
        grids,
        alg_tol: a.tol,
        ..Default::default()
    }
}

/// Runs one experiment; `Ok(false)` means some run of a sweep failed.
fn execute(config: &ExperimentConfig) -> anyhow::Result<bool> {
    match config {
        ExperimentConfig::Lshape { config, out } => {
            let study = run_lshape_convergence(config)?;
            std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
            let strategy = match config.strategy {
                Strategy::Mesh => "mesh",
                Strategy::Edge => "edge",
            };
            let path = out.join(format!("lshape_{strategy}_p{}.csv", config.p));
            study.write_csv(&path)?;
            print!("{}", study.to_csv());
            eprintln!("wrote {}", path.display());
            Ok(true)
        }
        ExperimentConfig::Solve { config, out } => {
            let runs = run_solver_study(config, Some(out))?;
            for r in &runs {
                match &r.error {
                    Some(e) => println!("{:?} r={} overlap={}: error: {e}", r.method, r.r, r.overlap),
                    None => println!(
                        "{:?} r={} overlap={}: {} iterations ({}), alg L2 {:.3e} -> {:.3e}",
                        r.method,
                        r.r,
                        r.overlap,
                        r.iterations.unwrap_or(0),
                        r.stop.as_deref().unwrap_or(""),
                        r.initial_alg_l2.unwrap_or(f64::NAN),
                        r.final_alg_l2.unwrap_or(f64::NAN)
                    ),
                }
            }
            eprintln!("wrote {}", out.join("summary.csv").display());
            Ok(runs.iter().all(|r| r.error.is_none()))
        }
        ExperimentConfig::Scalability { config, out } => {
            let rows = run_scalability(config, Some(out))?;
            print!("{}", scalability_table(&rows));
            eprintln!("wrote {}", out.join("scalability.csv").display());
            Ok(rows.iter().all(|r| r.error.is_none()))
        }
    }
}

fn read_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<trefftz_core::Error>() {
        return if e.is_validation() { 2 } else { 3 };
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match (&cli.config, &cli.command) {
        (Some(path), _) => read_config(path),
        (None, Some(Command::Lshape(a))) => Ok(ExperimentConfig::Lshape {
            config: lshape_config(a),
            out: a.out.clone(),
        }),
        (None, Some(Command::Solve(a))) => Ok(ExperimentConfig::Solve {
            config: solver_config(a),
            out: a.out.clone(),
        }),
        (None, Some(Command::Scalability(a))) => Ok(ExperimentConfig::Scalability {
            config: scalability_config(a),
            out: a.out.clone(),
        }),
        (None, None) => Err(anyhow::anyhow!("a subcommand or --config is required")),
    };
    match config.and_then(|c| execute(&c)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some runs failed, see the summary");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
