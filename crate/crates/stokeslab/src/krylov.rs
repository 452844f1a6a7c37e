//! Flexible GMRES, right-preconditioned, over block vectors.
//!
//! The flexible variant stores the preconditioned basis Z alongside the
//! Arnoldi basis V, so the preconditioner may change between iterations.
//! Arnoldi uses modified Gram-Schmidt; the least-squares problem is updated
//! with Givens rotations, whose running estimate equals the true residual
//! norm of the unpreconditioned system under right preconditioning.

use serde::Serialize;

use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::stencil::{apply_stokes, stokes_residual, StencilB, StencilQ2Q2};
use crate::vector::{self, BlockVector};

#[derive(Clone, Copy, Debug)]
pub struct FgmresConfig {
    pub max_iters: usize,
    /// Restart length; 0 means no restart.
    pub restart: usize,
    /// Relative tolerance on ‖b − Ax‖ / ‖b‖.
    pub rel_tol: f64,
}

impl Default for FgmresConfig {
    fn default() -> Self {
        FgmresConfig {
            max_iters: 200,
            restart: 0,
            rel_tol: 1e-10,
        }
    }
}

impl FgmresConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rel_tol <= 0.0 {
            return Err(Error::InvalidConfig("solver tolerance must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// A preconditioner application z ≈ A⁻¹r. Implementations may carry scratch
/// state; FGMRES tolerates operators that vary between calls.
pub trait Preconditioner {
    fn apply(&mut self, r: &BlockVector, ctr: &mut Counters) -> BlockVector;
    fn name(&self) -> String {
        "preconditioner".into()
    }
}

/// No preconditioning (z = r).
pub struct IdentityPrecond;

impl Preconditioner for IdentityPrecond {
    fn apply(&mut self, r: &BlockVector, _ctr: &mut Counters) -> BlockVector {
        r.clone()
    }
    fn name(&self) -> String {
        "none".into()
    }
}

/// Outcome of one solve, including the per-iteration residual history and a
/// cumulative counter snapshot per iteration (entry k covers everything up
/// to and including iteration k).
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Relative residuals; history[0] is the initial residual, one entry per
    /// iteration afterwards. Strictly positive (clamped at f64::MIN_POSITIVE).
    pub history: Vec<f64>,
    /// From-scratch relative residual of the returned solution.
    pub final_rel_residual: f64,
    #[serde(skip)]
    pub counter_snapshots: Vec<Counters>,
    pub solve_seconds: f64,
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{what} became non-finite")));
    }
    Ok(())
}

fn clamp_pos(v: f64) -> f64 {
    v.max(f64::MIN_POSITIVE)
}

/// Solves A·x = b with right-preconditioned flexible GMRES.
pub fn fgmres_solve(
    l: &StencilQ2Q2,
    b_stencil: &StencilB,
    rhs: &BlockVector,
    x0: &BlockVector,
    pc: &mut dyn Preconditioner,
    cfg: &FgmresConfig,
    ctr: &mut Counters,
) -> Result<(BlockVector, SolveReport)> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let grid_len = rhs.len();
    assert_eq!(x0.len(), grid_len, "initial guess length mismatch");

    let bnorm_raw = rhs.clone().norm2(ctr);
    check_finite(bnorm_raw, "right-hand side norm")?;
    // An all-zero right-hand side switches the scale to absolute.
    let bnorm = if bnorm_raw > 0.0 { bnorm_raw } else { 1.0 };

    let mut x = x0.clone();
    let mut history = Vec::new();
    let mut snapshots = Vec::new();
    let mut total_iters = 0usize;
    let mut converged = false;

    'outer: loop {
        let mut r = rhs.clone();
        stokes_residual(l, b_stencil, rhs, &x, &mut r, ctr);
        let beta = r.norm2(ctr);
        check_finite(beta, "residual norm")?;
        if history.is_empty() {
            history.push(clamp_pos(beta / bnorm));
            snapshots.push(ctr.clone());
        }
        if beta <= cfg.rel_tol * bnorm {
            converged = true;
            break 'outer;
        }
        if total_iters >= cfg.max_iters {
            break 'outer;
        }

        let cycle_len = if cfg.restart == 0 {
            cfg.max_iters - total_iters
        } else {
            cfg.restart.min(cfg.max_iters - total_iters)
        };

        let mut v_basis: Vec<BlockVector> = Vec::with_capacity(cycle_len + 1);
        let mut z_basis: Vec<BlockVector> = Vec::with_capacity(cycle_len);
        let mut h = vec![vec![0.0f64; cycle_len]; cycle_len + 1];
        let mut cs = vec![0.0f64; cycle_len];
        let mut sn = vec![0.0f64; cycle_len];
        let mut g = vec![0.0f64; cycle_len + 1];
        g[0] = beta;

        let mut v0 = r;
        v0.scale(1.0 / beta, ctr);
        v_basis.push(v0);

        let mut inner_used = 0usize;
        for j in 0..cycle_len {
            let z = pc.apply(&v_basis[j], ctr);
            let mut w = BlockVector::zeros_like(&z);
            apply_stokes(l, b_stencil, &z, &mut w, ctr);
            z_basis.push(z);

            for i in 0..=j {
                let hij = BlockVector::dot(&w, &v_basis[i], ctr);
                h[i][j] = hij;
                w.axpy(-hij, &v_basis[i], ctr);
            }
            let hnext = w.norm2(ctr);
            check_finite(hnext, "Arnoldi norm")?;
            h[j + 1][j] = hnext;

            // Apply the accumulated Givens rotations, then form a new one.
            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = tmp;
            }
            let denom = (h[j][j] * h[j][j] + hnext * hnext).sqrt();
            if denom == 0.0 {
                return Err(Error::NonFinite("Givens denominator vanished".into()));
            }
            cs[j] = h[j][j] / denom;
            sn[j] = hnext / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            total_iters += 1;
            inner_used = j + 1;
            let res_est = g[j + 1].abs();
            check_finite(res_est, "residual estimate")?;
            history.push(clamp_pos(res_est / bnorm));
            snapshots.push(ctr.clone());

            let happy = hnext <= 1e-14 * bnorm;
            if res_est <= cfg.rel_tol * bnorm || happy || total_iters >= cfg.max_iters {
                break;
            }
            let mut vnext = w;
            vnext.scale(1.0 / hnext, ctr);
            v_basis.push(vnext);
        }

        // Back substitution for y, then x += Z·y.
        let k = inner_used;
        if k > 0 {
            let mut y = vec![0.0f64; k];
            for i in (0..k).rev() {
                let mut s = g[i];
                for jj in i + 1..k {
                    s -= h[i][jj] * y[jj];
                }
                y[i] = s / h[i][i];
                check_finite(y[i], "least-squares solution")?;
            }
            for i in 0..k {
                x.axpy(y[i], &z_basis[i], ctr);
            }
        }

        // The outer loop re-derives the true residual; it exits on
        // convergence or when the iteration budget is spent.
        let mut check = rhs.clone();
        stokes_residual(l, b_stencil, rhs, &x, &mut check, ctr);
        let true_res = check.norm2(ctr);
        check_finite(true_res, "true residual")?;
        if true_res <= cfg.rel_tol * bnorm {
            converged = true;
            break 'outer;
        }
        if total_iters >= cfg.max_iters {
            break 'outer;
        }
    }

    // Final from-scratch residual of the returned solution.
    let mut r = rhs.clone();
    stokes_residual(l, b_stencil, rhs, &x, &mut r, ctr);
    let final_rel = r.norm2(ctr) / bnorm;
    let report = SolveReport {
        converged: converged && final_rel <= cfg.rel_tol * 1.0000001,
        iterations: total_iters,
        history,
        final_rel_residual: final_rel,
        counter_snapshots: snapshots,
        solve_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_problem;
    use crate::mesh::StructuredGrid;
    use crate::stencil::StencilQ2Q2;

    fn identity_system(n: usize) -> (StructuredGrid, StencilQ2Q2, StencilB) {
        let grid = StructuredGrid::new(n);
        // A = [I 0; 0 0] is singular in the pressure block; instead use the
        // assembled system for realistic tests and the identity L with an
        // assembled B only where the identity case is meaningful.
        let l = StencilQ2Q2::identity(&grid);
        let b = StencilB::zeros(&grid);
        (grid, l, b)
    }

    #[test]
    fn identity_converges_immediately() {
        // With B = 0 the pressure stays untouched; use a velocity-only rhs.
        let (grid, l, b) = identity_system(2);
        let mut rhs = BlockVector::zeros(&grid);
        for (k, v) in rhs.ux.iter_mut().enumerate() {
            *v = (k % 5) as f64 - 2.0;
        }
        let mut ctr = Counters::new();
        let mut pc = IdentityPrecond;
        let (x, rep) = fgmres_solve(
            &l,
            &b,
            &rhs,
            &BlockVector::zeros(&grid),
            &mut pc,
            &FgmresConfig::default(),
            &mut ctr,
        )
        .unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 1, "iterations = {}", rep.iterations);
        for (a, bb) in x.ux.iter().zip(&rhs.ux) {
            assert!((a - bb).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let (grid, l, b) = identity_system(2);
        let rhs = BlockVector::zeros(&grid);
        let mut ctr = Counters::new();
        let mut pc = IdentityPrecond;
        let (x, rep) = fgmres_solve(
            &l,
            &b,
            &rhs,
            &BlockVector::zeros(&grid),
            &mut pc,
            &FgmresConfig::default(),
            &mut ctr,
        )
        .unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.history.len(), 1);
        assert!(rep.history[0] > 0.0);
        assert!(x.to_flat().iter().all(|&v| v == 0.0));
    }

    struct ExactDensePrecond {
        lu: crate::mg::CoarseStokesLu,
    }

    impl Preconditioner for ExactDensePrecond {
        fn apply(&mut self, r: &BlockVector, ctr: &mut Counters) -> BlockVector {
            let mut z = self.lu.solve(r, ctr);
            z.remove_pressure_mean(ctr);
            z
        }
        fn name(&self) -> String {
            "exact-dense".into()
        }
    }

    #[test]
    fn exact_preconditioner_converges_in_one_iteration() {
        let grid = StructuredGrid::new(4);
        let (ops, rhs) = assemble_problem(&grid, 1.0);
        let mut ctr = Counters::new();
        let mut pc = ExactDensePrecond {
            lu: crate::mg::CoarseStokesLu::new(&ops).unwrap(),
        };
        let (x, rep) = fgmres_solve(
            &ops.l,
            &ops.b,
            &rhs,
            &BlockVector::zeros(&grid),
            &mut pc,
            &FgmresConfig {
                rel_tol: 1e-12,
                ..Default::default()
            },
            &mut ctr,
        )
        .unwrap();
        assert!(rep.converged, "final rel residual {}", rep.final_rel_residual);
        assert!(rep.iterations <= 2, "iterations = {}", rep.iterations);
        assert!(x.to_flat().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn history_is_monotone_and_sized() {
        let grid = StructuredGrid::new(8);
        let (ops, rhs) = assemble_problem(&grid, 1.0);
        let mut ctr = Counters::new();
        let mut pc = IdentityPrecond;
        let (_, rep) = fgmres_solve(
            &ops.l,
            &ops.b,
            &rhs,
            &BlockVector::zeros(&grid),
            &mut pc,
            &FgmresConfig {
                max_iters: 60,
                rel_tol: 1e-8,
                ..Default::default()
            },
            &mut ctr,
        )
        .unwrap();
        assert_eq!(rep.history.len(), rep.iterations + 1);
        for w in rep.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "history not monotone: {w:?}");
        }
        assert!(rep.history.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn reported_residual_matches_recomputation() {
        let grid = StructuredGrid::new(8);
        let (ops, rhs) = assemble_problem(&grid, 1.0);
        let mut ctr = Counters::new();
        let mut pc = IdentityPrecond;
        let (x, rep) = fgmres_solve(
            &ops.l,
            &ops.b,
            &rhs,
            &BlockVector::zeros(&grid),
            &mut pc,
            &FgmresConfig {
                max_iters: 40,
                rel_tol: 1e-6,
                ..Default::default()
            },
            &mut ctr,
        )
        .unwrap();
        let mut r = rhs.clone();
        stokes_residual(&ops.l, &ops.b, &rhs, &x, &mut r, &mut ctr);
        let rel = r.norm2(&mut ctr) / rhs.clone().norm2(&mut ctr);
        assert!((rel - rep.final_rel_residual).abs() <= 1e-10 * rel.max(1e-300));
    }

    #[test]
    fn restart_mode_still_converges_when_preconditioned() {
        // A short restart forces several cycles through the solution-update
        // and re-residual path.
        let grid = StructuredGrid::new(8);
        let (ops, rhs) = assemble_problem(&grid, 1.0);
        let mut ctr = Counters::new();
        let mut pc = crate::mg::MgHierarchy::build(
            &grid,
            1.0,
            crate::mg::RelaxKind::BraessSarazin(crate::relax::BsConfig::default()),
            crate::mg::MgConfig::default(),
        )
        .unwrap();
        let (_, rep) = fgmres_solve(
            &ops.l,
            &ops.b,
            &rhs,
            &BlockVector::zeros(&grid),
            &mut pc,
            &FgmresConfig {
                max_iters: 200,
                restart: 4,
                rel_tol: 1e-9,
            },
            &mut ctr,
        )
        .unwrap();
        assert!(rep.converged, "final {}", rep.final_rel_residual);
        assert!(rep.iterations > 4, "restart path not exercised");
    }
}
