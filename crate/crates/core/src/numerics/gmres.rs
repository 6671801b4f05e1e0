use serde::{Deserialize, Serialize};

use super::sparse::{axpy, dot, norm2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iters: usize,
    /// Tolerance on the preconditioned residual relative to `‖M b‖`.
    pub rel_tol: f64,
    pub record_history: bool,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 200,
            max_iters: 1000,
            rel_tol: 1e-10,
            record_history: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GmresStatus {
    Converged,
    /// The caller's monitor asked to stop.
    MonitorStop,
    MaxIterations,
    /// The Krylov space became invariant (residual is exactly representable).
    Breakdown,
    /// A full restart cycle made no progress.
    Stagnation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmresResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub status: GmresStatus,
    /// Relative preconditioned residual after each iteration (index 0 is the
    /// initial residual).
    pub history: Vec<f64>,
}

/// Called after every iteration with `(iteration, x_k)`; returning `true`
/// stops the solve.
pub type Monitor<'a> = &'a mut dyn FnMut(usize, &[f64]) -> bool;

/// Restarted GMRES with left preconditioning, started from `x = 0`.
///
/// `apply_a(x, y)` and `apply_m(r, z)` write `y = A x` and `z = M⁻¹ r`.
pub fn gmres(
    apply_a: &dyn Fn(&[f64], &mut [f64]),
    apply_m: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    opts: &GmresOptions,
    mut monitor: Option<Monitor<'_>>,
) -> GmresResult {
    let n = b.len();
    let m = opts.restart.max(1);
    let mut x = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut w = vec![0.0; n];

    apply_m(b, &mut w);
    let beta0 = norm2(&w);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(1.0);
    }
    if beta0 == 0.0 {
        return GmresResult {
            x,
            iterations: 0,
            status: GmresStatus::Converged,
            history,
        };
    }
    let target = opts.rel_tol * beta0;
    let mut iters = 0usize;
    let mut r = w.clone();
    let mut beta = beta0;

    loop {
        let cycle_start = beta;
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        // Hessenberg columns after rotation
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![beta];
        let mut status = None;

        for k in 0..m {
            apply_a(&v[k], &mut tmp);
            apply_m(&tmp, &mut w);
            let mut col = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                col[i] = hik;
                axpy(-hik, vi, &mut w);
            }
            let hnext = norm2(&w);
            col[k + 1] = hnext;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let rho = col[k].hypot(col[k + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[k] / rho, col[k + 1] / rho) };
            col[k] = rho;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            let gk = g[k];
            g[k] = c * gk;
            g.push(-s * gk);
            h.push(col);
            iters += 1;
            let res = g[k + 1].abs();
            if opts.record_history {
                history.push(res / beta0);
            }

            let breakdown = hnext < 1e-300;
            let converged = res <= target;
            let out_of_budget = iters >= opts.max_iters;
            let wants_x = monitor.is_some() || breakdown || converged || out_of_budget || k + 1 == m;
            let mut stop_by_monitor = false;
            if wants_x {
                let xk = combine(&x, &v, &h, &g, k + 1);
                if let Some(mon) = monitor.as_mut() {
                    stop_by_monitor = mon(iters, &xk);
                }
                if stop_by_monitor || breakdown || converged || out_of_budget || k + 1 == m {
                    x = xk;
                }
            }
            status = if stop_by_monitor {
                Some(GmresStatus::MonitorStop)
            } else if converged {
                Some(GmresStatus::Converged)
            } else if breakdown {
                Some(GmresStatus::Breakdown)
            } else if out_of_budget {
                Some(GmresStatus::MaxIterations)
            } else {
                None
            };
            if status.is_some() {
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }

        if let Some(status) = status {
            return GmresResult {
                x,
                iterations: iters,
                status,
                history,
            };
        }
        // restart from the true preconditioned residual
        apply_a(&x, &mut tmp);
        for (t, bi) in tmp.iter_mut().zip(b) {
            *t = bi - *t;
        }
        apply_m(&tmp, &mut r);
        beta = norm2(&r);
        if beta <= target {
            return GmresResult {
                x,
                iterations: iters,
                status: GmresStatus::Converged,
                history,
            };
        }
        if beta >= cycle_start * (1.0 - 1e-12) {
            return GmresResult {
                x,
                iterations: iters,
                status: GmresStatus::Stagnation,
                history,
            };
        }
    }
}

/// `x0 + V y` with `y` from the triangular system `H y = g` of size `k`.
fn combine(x0: &[f64], v: &[Vec<f64>], h: &[Vec<f64>], g: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= h[j][i] * y[j];
        }
        y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
    }
    let mut x = x0.to_vec();
    for (vi, yi) in v.iter().zip(&y) {
        axpy(*yi, vi, &mut x);
    }
    x
}
