//! Upper block-triangular preconditioner: a pressure mass-matrix solve for
//! δp followed by a velocity Laplacian solve for δu, each approximated by
//! inner scalar multigrid (V(3,3) weighted Jacobi by default).
//!
//! The Schur complement is approximated by −(1/ν)·M on the pressure space;
//! with ν = 1 this is the plain mass matrix.

use crate::counters::Counters;
use crate::error::Result;
use crate::krylov::Preconditioner;
use crate::mesh::StructuredGrid;
use crate::mg::{ScalarKind, ScalarMgHierarchy};
use crate::stencil::StencilB;
use crate::vector::{self, BlockVector};

#[derive(Clone, Copy, Debug)]
pub struct BlockTriConfig {
    /// Inner V-cycles per block solve.
    pub cycles: usize,
    /// Jacobi weight for the mass-matrix solve.
    pub omega_p: f64,
    /// Jacobi weight for the Laplacian solve.
    pub omega_u: f64,
    /// Inner cycle shape (pre/post sweeps).
    pub nu1: usize,
    pub nu2: usize,
    pub coarsest_n: usize,
}

impl Default for BlockTriConfig {
    fn default() -> Self {
        BlockTriConfig {
            cycles: 3,
            omega_p: 0.6,
            omega_u: 1.0,
            nu1: 3,
            nu2: 3,
            coarsest_n: 4,
        }
    }
}

enum InnerSolver {
    ScalarMg {
        l_mg: ScalarMgHierarchy,
        m_mg: ScalarMgHierarchy,
        cycles: usize,
    },
    /// Exact dense block solves (verification mode).
    DenseExact {
        l_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        m_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    },
}

/// The assembled preconditioner. Owns its operator copies so it can be
/// handed to the Krylov solver independently of the outer system.
pub struct BlockTriPrecond {
    grid: StructuredGrid,
    nu: f64,
    b: StencilB,
    inner: InnerSolver,
    cfg: BlockTriConfig,
}

impl BlockTriPrecond {
    pub fn build(grid: &StructuredGrid, nu: f64, cfg: BlockTriConfig) -> Result<Self> {
        if cfg.cycles == 0 {
            return Err(crate::error::Error::InvalidConfig(
                "block-triangular preconditioner needs at least one inner cycle".into(),
            ));
        }
        let ops = crate::assembly::assemble_operators(grid, nu);
        let l_mg = ScalarMgHierarchy::build(
            grid,
            nu,
            ScalarKind::VelocityLaplacian,
            cfg.coarsest_n,
            cfg.omega_u,
            cfg.nu1,
            cfg.nu2,
        )?;
        let m_mg = ScalarMgHierarchy::build(
            grid,
            nu,
            ScalarKind::PressureMass,
            cfg.coarsest_n,
            cfg.omega_p,
            cfg.nu1,
            cfg.nu2,
        )?;
        Ok(BlockTriPrecond {
            grid: *grid,
            nu,
            b: ops.b,
            inner: InnerSolver::ScalarMg {
                l_mg,
                m_mg,
                cycles: cfg.cycles,
            },
            cfg,
        })
    }

    /// Verification variant: the two block solves are exact dense LU solves.
    pub fn build_exact(grid: &StructuredGrid, nu: f64) -> Result<Self> {
        let ops = crate::assembly::assemble_operators(grid, nu);
        let l_lu = ops.l.to_dense().lu();
        let m_lu = ops.m.to_dense().lu();
        Ok(BlockTriPrecond {
            grid: *grid,
            nu,
            b: ops.b,
            inner: InnerSolver::DenseExact { l_lu, m_lu },
            cfg: BlockTriConfig::default(),
        })
    }

    pub fn config(&self) -> BlockTriConfig {
        self.cfg
    }

    /// (δu, δp) from the triangular factor: M δp = −r_p, then
    /// L δu = r_u − Bᵀ δp.
    pub fn apply_blocks(&self, r: &BlockVector, ctr: &mut Counters) -> BlockVector {
        let n = r.ux.len();
        let m = r.p.len();

        // Pressure update: the Schur approximation is −(1/ν)·M.
        let mut mrhs = r.p.clone();
        vector::scale(&mut mrhs, -1.0, ctr);
        let mut dp = match &self.inner {
            InnerSolver::ScalarMg { m_mg, cycles, .. } => m_mg.solve_approx(&mrhs, *cycles, ctr),
            InnerSolver::DenseExact { m_lu, .. } => {
                let sol = m_lu
                    .solve(&nalgebra::DVector::from_column_slice(&mrhs))
                    .expect("mass matrix is SPD");
                let size = m as u64;
                ctr.record(
                    crate::counters::Kernel::CoarseSolve,
                    size * size,
                    size,
                    2 * size * size,
                );
                sol.as_slice().to_vec()
            }
        };
        if self.nu != 1.0 {
            vector::scale(&mut dp, self.nu, ctr);
        }

        // Velocity update per component.
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        self.b.apply_transpose(&dp, &mut gx, &mut gy, ctr);
        let mut rx = vec![0.0; n];
        let mut ry = vec![0.0; n];
        vector::sub(&mut rx, &r.ux, &gx, ctr);
        vector::sub(&mut ry, &r.uy, &gy, ctr);

        let (dux, duy) = match &self.inner {
            InnerSolver::ScalarMg { l_mg, cycles, .. } => (
                l_mg.solve_approx(&rx, *cycles, ctr),
                l_mg.solve_approx(&ry, *cycles, ctr),
            ),
            InnerSolver::DenseExact { l_lu, .. } => {
                let sx = l_lu
                    .solve(&nalgebra::DVector::from_column_slice(&rx))
                    .expect("Dirichlet Laplacian is nonsingular");
                let sy = l_lu
                    .solve(&nalgebra::DVector::from_column_slice(&ry))
                    .expect("Dirichlet Laplacian is nonsingular");
                let size = n as u64;
                ctr.record(
                    crate::counters::Kernel::CoarseSolve,
                    2 * size * size,
                    2 * size,
                    4 * size * size,
                );
                (sx.as_slice().to_vec(), sy.as_slice().to_vec())
            }
        };

        BlockVector {
            ux: dux,
            uy: duy,
            p: dp,
        }
    }
}

impl Preconditioner for BlockTriPrecond {
    fn apply(&mut self, r: &BlockVector, ctr: &mut Counters) -> BlockVector {
        let mut z = self.apply_blocks(r, ctr);
        z.remove_pressure_mean(ctr);
        z
    }

    fn name(&self) -> String {
        match &self.inner {
            InnerSolver::ScalarMg { cycles, .. } => format!(
                "block-tri {}×V({},{})",
                cycles, self.cfg.nu1, self.cfg.nu2
            ),
            InnerSolver::DenseExact { .. } => "block-tri exact".into(),
        }
    }
}
