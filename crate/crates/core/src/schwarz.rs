//! Restricted additive Schwarz, the hybrid two-level iteration and the
//! additive two-level preconditioner for GMRES.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{coarse_approximation_free, CoarseSpace};
use crate::error::{Error, Result};
use crate::fem::{error_norms, error_norms_nested, AssembledSystem};
use crate::geometry::Point;
use crate::mesh::{OverlapSet, Prolongation, Triangulation};
use crate::numerics::{factorize_spd, gmres, norm2, Factorization, GmresOptions, GmresStatus};

#[derive(Debug)]
pub struct Subdomain {
    /// Free DOFs of `Ω_j'`, ascending.
    pub dofs: Vec<usize>,
    /// Partition of unity `D_j`: inverse multiplicity.
    pub weights: Vec<f64>,
    fact: Factorization,
}

#[derive(Debug)]
pub struct SchwarzContext {
    pub subdomains: Vec<Subdomain>,
    pub coarse: Option<CoarseSpace>,
    pub n: usize,
}

impl SchwarzContext {
    pub fn new(system: &AssembledSystem, overlap: &OverlapSet, coarse: Option<CoarseSpace>) -> Result<Self> {
        let n = system.n_free();
        if overlap.multiplicity.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: overlap.multiplicity.len(),
            });
        }
        if let Some(i) = overlap.multiplicity.iter().position(|&m| m == 0) {
            return Err(Error::InvalidParameter(format!("free DOF {i} is not covered by any subdomain")));
        }
        let subdomains = overlap
            .dofs
            .par_iter()
            .map(|dofs| {
                let fact = factorize_spd(&system.a.submatrix(dofs, dofs))?;
                let weights = dofs.iter().map(|&i| 1.0 / overlap.multiplicity[i] as f64).collect();
                Ok(Subdomain {
                    dofs: dofs.clone(),
                    weights,
                    fact,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { subdomains, coarse, n })
    }

    /// `max_i |Σ_j (R_j'ᵀ D_j R_j')_{ii} − 1|`; off-diagonal entries are zero
    /// by construction.
    pub fn pu_defect(&self) -> f64 {
        let mut sum = vec![0.0; self.n];
        for s in &self.subdomains {
            for (&i, &w) in s.dofs.iter().zip(&s.weights) {
                sum[i] += w;
            }
        }
        sum.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()))
    }

    /// `z = Σ_j R_j'ᵀ D_j A_j'⁻¹ R_j' r`, gathered in subdomain order.
    pub fn apply_ras_into(&self, r: &[f64], z: &mut [f64]) {
        let locals: Vec<Vec<f64>> = self
            .subdomains
            .par_iter()
            .map(|s| {
                let mut x: Vec<f64> = s.dofs.iter().map(|&i| r[i]).collect();
                s.fact.solve_in_place(&mut x);
                x.iter_mut().zip(&s.weights).for_each(|(v, w)| *v *= w);
                x
            })
            .collect();
        z.iter_mut().for_each(|v| *v = 0.0);
        for (s, x) in self.subdomains.iter().zip(locals) {
            for (&i, v) in s.dofs.iter().zip(x) {
                z[i] += v;
            }
        }
    }

    pub fn apply_ras(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; r.len()];
        self.apply_ras_into(r, &mut z);
        z
    }

    fn coarse(&self) -> Result<&CoarseSpace> {
        self.coarse
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("operation needs a coarse space".into()))
    }

    /// `z = M_H⁻¹ r + M_RAS⁻¹ r`.
    pub fn apply_two_level(&self, r: &[f64]) -> Result<Vec<f64>> {
        let coarse = self.coarse()?;
        let mut z = self.apply_ras(r);
        for (zi, ci) in z.iter_mut().zip(coarse.apply(r)) {
            *zi += ci;
        }
        Ok(z)
    }

    /// Two-level preconditioner when a coarse space is present, RAS
    /// otherwise.
    pub fn apply_preconditioner_into(&self, r: &[f64], z: &mut [f64]) {
        self.apply_ras_into(r, z);
        if let Some(c) = &self.coarse {
            for (zi, ci) in z.iter_mut().zip(c.apply(r)) {
                *zi += ci;
            }
        }
    }
}

/// What full errors are measured against.
pub enum Reference<'a> {
    None,
    Exact(&'a dyn Fn(Point) -> (f64, [f64; 2])),
    /// Field on a nested refinement of the working mesh.
    Nested {
        mesh: &'a Triangulation,
        prolongation: &'a Prolongation,
        field: &'a [f64],
    },
}

/// Evaluates algebraic and full errors of free-DOF iterates.
pub struct ErrorMonitor<'a> {
    pub mesh: &'a Triangulation,
    pub system: &'a AssembledSystem,
    /// Fine solution `u_h` as a nodal field.
    pub fine: Vec<f64>,
    pub reference: Reference<'a>,
    f_norm: f64,
}

impl<'a> ErrorMonitor<'a> {
    pub fn new(mesh: &'a Triangulation, system: &'a AssembledSystem, fine: Vec<f64>, reference: Reference<'a>) -> Self {
        let f_norm = norm2(&system.f);
        Self {
            mesh,
            system,
            fine,
            reference,
            f_norm,
        }
    }

    pub fn record(&self, iter: usize, u_free: &[f64]) -> Result<IterationRecord> {
        let mut r = self.system.a.spmv(u_free)?;
        for (ri, fi) in r.iter_mut().zip(&self.system.f) {
            *ri = fi - *ri;
        }
        let res = norm2(&r);
        let res_norm = if self.f_norm > 0.0 { res / self.f_norm } else { res };
        let field = self.system.expand(u_free);
        let (alg_err_l2, alg_err_h1) = self.system.relative_errors(&field, &self.fine);
        let (full_err_l2, full_err_h1) = match &self.reference {
            Reference::None => (f64::NAN, f64::NAN),
            Reference::Exact(f) => {
                let e = error_norms(self.mesh, &field, *f)?;
                (e.l2_rel, e.h1_rel)
            }
            Reference::Nested {
                mesh,
                prolongation,
                field: reference,
            } => {
                let e = error_norms_nested(mesh, prolongation, &field, reference)?;
                (e.l2_rel, e.h1_rel)
            }
        };
        Ok(IterationRecord {
            iter,
            res_norm,
            alg_err_l2,
            alg_err_h1,
            full_err_l2,
            full_err_h1,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖f − A u‖₂ / ‖f‖₂`.
    pub res_norm: f64,
    pub alg_err_l2: f64,
    pub alg_err_h1: f64,
    pub full_err_l2: f64,
    pub full_err_h1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    Stagnation,
    MaxIterations,
    Divergence,
    Breakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Iterations performed (records may include iteration 0).
    pub iterations: usize,
    /// Not part of the CSV output.
    pub wall_time_s: f64,
}

impl IterationReport {
    pub const CSV_HEADER: &'static str = "iter,res_norm,alg_err_L2,alg_err_H1,full_err_L2,full_err_H1";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            writeln!(
                s,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.iter, r.res_norm, r.alg_err_l2, r.alg_err_h1, r.full_err_l2, r.full_err_h1
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridOptions {
    pub max_iters: usize,
    /// Stop once the relative algebraic `L²` error is at most this.
    pub tol: Option<f64>,
    /// Stop when the algebraic `L²` error improves by less than
    /// `stagnation_ratio` over `stagnation_window` iterations.
    pub stagnation_window: usize,
    pub stagnation_ratio: f64,
    /// Report divergence when the error exceeds its minimum by this factor.
    pub divergence_factor: f64,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: None,
            stagnation_window: 5,
            stagnation_ratio: 0.01,
            divergence_factor: 1e3,
        }
    }
}

/// One hybrid step: RAS sweep, then coarse correction.
pub fn hybrid_step(ctx: &SchwarzContext, system: &AssembledSystem, u: &mut [f64]) -> Result<()> {
    let coarse = ctx.coarse()?;
    let mut r = vec![0.0; u.len()];
    let mut z = vec![0.0; u.len()];
    residual(system, u, &mut r);
    ctx.apply_ras_into(&r, &mut z);
    u.iter_mut().zip(&z).for_each(|(a, b)| *a += b);
    residual(system, u, &mut r);
    coarse.apply_into(&r, &mut z);
    u.iter_mut().zip(&z).for_each(|(a, b)| *a += b);
    Ok(())
}

fn residual(system: &AssembledSystem, u: &[f64], r: &mut [f64]) {
    system.a.spmv_into(u, r);
    for (ri, fi) in r.iter_mut().zip(&system.f) {
        *ri = fi - *ri;
    }
}

/// Hybrid two-level fixed-point iteration started from `u0` (the coarse
/// approximation by default). Returns the free-DOF iterate and the history.
pub fn hybrid_iterate(
    ctx: &SchwarzContext,
    system: &AssembledSystem,
    u0: Option<Vec<f64>>,
    opts: &HybridOptions,
    monitor: &ErrorMonitor<'_>,
) -> Result<(Vec<f64>, IterationReport)> {
    let start = Instant::now();
    let coarse = ctx.coarse()?;
    let mut u = u0.unwrap_or_else(|| coarse_approximation_free(coarse, system));
    if u.len() != system.n_free() {
        return Err(Error::DimMismatch {
            expected: system.n_free(),
            got: u.len(),
        });
    }
    let mut records = vec![monitor.record(0, &u)?];
    let mut min_err = records[0].alg_err_l2;
    let mut stop = StopReason::MaxIterations;
    let met = |e: f64| opts.tol.is_some_and(|t| e <= t);
    if met(min_err) {
        stop = StopReason::Tolerance;
    } else {
        for it in 1..=opts.max_iters {
            hybrid_step(ctx, system, &mut u)?;
            let rec = monitor.record(it, &u)?;
            records.push(rec);
            let e = rec.alg_err_l2;
            min_err = min_err.min(e);
            if met(e) {
                stop = StopReason::Tolerance;
                break;
            }
            if !e.is_finite() || e > opts.divergence_factor * min_err {
                stop = StopReason::Divergence;
                break;
            }
            let w = opts.stagnation_window;
            if w > 0 && records.len() > w {
                let before = records[records.len() - 1 - w].alg_err_l2;
                if e > (1.0 - opts.stagnation_ratio) * before {
                    stop = StopReason::Stagnation;
                    break;
                }
            }
        }
    }
    let iterations = records.len() - 1;
    Ok((
        u,
        IterationReport {
            records,
            stop,
            iterations,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Left-preconditioned GMRES on `A u = f` from `u = 0` with the two-level
/// (or, without a coarse space, one-level) preconditioner. With
/// `alg_tol`, the solve stops as soon as the relative algebraic `L²` error
/// reaches it; otherwise `opts.rel_tol` on the preconditioned residual
/// applies.
pub fn solve_pgmres(
    ctx: &SchwarzContext,
    system: &AssembledSystem,
    opts: &GmresOptions,
    monitor: Option<&ErrorMonitor<'_>>,
    alg_tol: Option<f64>,
) -> Result<(Vec<f64>, IterationReport)> {
    let start = Instant::now();
    let mut records = Vec::new();
    let mut failure = None;
    let mut reached = false;
    if let Some(m) = monitor {
        let r0 = m.record(0, &vec![0.0; system.n_free()])?;
        reached = alg_tol.is_some_and(|t| r0.alg_err_l2 <= t);
        records.push(r0);
    }
    if reached {
        return Ok((
            vec![0.0; system.n_free()],
            IterationReport {
                records,
                stop: StopReason::Tolerance,
                iterations: 0,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        ));
    }
    let apply_a = |x: &[f64], y: &mut [f64]| system.a.spmv_into(x, y);
    let apply_m = |r: &[f64], z: &mut [f64]| ctx.apply_preconditioner_into(r, z);
    let mut hook = |k: usize, x: &[f64]| -> bool {
        let Some(m) = monitor else { return false };
        match m.record(k, x) {
            Ok(rec) => {
                records.push(rec);
                alg_tol.is_some_and(|t| rec.alg_err_l2 <= t)
            }
            Err(e) => {
                failure = Some(e);
                true
            }
        }
    };
    let res = gmres(&apply_a, &apply_m, &system.f, opts, if monitor.is_some() { Some(&mut hook) } else { None });
    if let Some(e) = failure {
        return Err(e);
    }
    let stop = match res.status {
        GmresStatus::Converged | GmresStatus::MonitorStop => StopReason::Tolerance,
        GmresStatus::MaxIterations => StopReason::MaxIterations,
        GmresStatus::Breakdown => StopReason::Breakdown,
        GmresStatus::Stagnation => StopReason::Stagnation,
    };
    if monitor.is_none() {
        records = res
            .history
            .iter()
            .enumerate()
            .map(|(k, &h)| IterationRecord {
                iter: k,
                res_norm: h,
                alg_err_l2: f64::NAN,
                alg_err_h1: f64::NAN,
                full_err_l2: f64::NAN,
                full_err_h1: f64::NAN,
            })
            .collect();
    }
    Ok((
        res.x,
        IterationReport {
            records,
            stop,
            iterations: res.iterations,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}
