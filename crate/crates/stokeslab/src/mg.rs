//! Monolithic multigrid V-cycle over the Stokes system, and a scalar V-cycle
//! over a single stencil operator (used by the block-triangular
//! preconditioner).
//!
//! Level 0 is the coarsest grid. Restriction is the exact transpose of the
//! finite-element interpolation; coarse operators are re-discretized (equal
//! to the Galerkin operators for these nested spaces). The coarsest Stokes
//! system is solved by a cached dense LU of the rank-one-augmented matrix
//! (the constant-pressure nullspace direction), or by a fixed number of
//! relaxation sweeps.

use nalgebra::{DMatrix, DVector, LU};

use crate::assembly::{
    assemble_operators_raw, apply_dirichlet, build_interpolation, BlockInterp, Operators,
};
use crate::counters::{Counters, Kernel};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryInfo, StructuredGrid};
use crate::relax::{
    braess_sarazin_sweep, schur_uzawa_sweep, BsConfig, SchurOperator, UzawaConfig,
};
use crate::stencil::{stokes_dense, stokes_residual, StencilQ1Q1, StencilQ2Q2};
use crate::vanka::{VankaConfig, VankaPatchSet};
use crate::vector::{self, BlockVector};

/// Relaxation scheme selection for the monolithic cycle.
#[derive(Clone, Copy, Debug)]
pub enum RelaxKind {
    BraessSarazin(BsConfig),
    Vanka(VankaConfig),
    SchurUzawa(UzawaConfig),
}

impl RelaxKind {
    pub fn name(&self) -> &'static str {
        match self {
            RelaxKind::BraessSarazin(_) => "braess-sarazin",
            RelaxKind::Vanka(_) => "vanka",
            RelaxKind::SchurUzawa(_) => "schur-uzawa",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoarseSolverKind {
    /// Cached dense LU (exact solve).
    Lu,
    /// A fixed number of relaxation sweeps.
    Sweeps(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct MgConfig {
    /// Pre-smoothing sweeps per level.
    pub nu1: usize,
    /// Post-smoothing sweeps per level.
    pub nu2: usize,
    pub coarsest_n: usize,
    pub coarse_solver: CoarseSolverKind,
}

impl Default for MgConfig {
    fn default() -> Self {
        MgConfig {
            nu1: 1,
            nu2: 1,
            coarsest_n: 4,
            coarse_solver: CoarseSolverKind::Lu,
        }
    }
}

/// Cached dense factorization of the coarsest Stokes system. The matrix is
/// singular (constant pressure); the stored LU factors the rank-one-augmented
/// matrix A + σ·ẑẑᵀ with ẑ the normalized nullspace direction, which solves
/// consistent systems exactly once the pressure mean is removed again.
pub struct CoarseStokesLu {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    grid: StructuredGrid,
    n_per_comp: usize,
    m: usize,
}

impl CoarseStokesLu {
    pub fn new(ops: &Operators) -> Result<Self> {
        let mut a = stokes_dense(&ops.l, &ops.b);
        let n = ops.grid.n_vel_per_comp();
        let m = ops.grid.n_pressure();
        // Augmentation scaled to the operator's diagonal magnitude.
        let sigma = (0..2 * n).map(|k| a[(k, k)].abs()).sum::<f64>() / (2 * n) as f64;
        for r in 0..m {
            for c in 0..m {
                a[(2 * n + r, 2 * n + c)] += sigma / m as f64;
            }
        }
        let lu = a.lu();
        // A singular augmented matrix means the Dirichlet/nullspace handling
        // failed; detect it early.
        if lu.u().diagonal().iter().any(|d| d.abs() < 1e-300) {
            return Err(Error::SingularMatrix(
                "coarsest Stokes matrix is singular after nullspace augmentation".into(),
            ));
        }
        Ok(CoarseStokesLu {
            lu,
            grid: ops.grid,
            n_per_comp: n,
            m,
        })
    }

    pub fn solve(&self, b: &BlockVector, ctr: &mut Counters) -> BlockVector {
        let flat = DVector::from_vec(b.to_flat());
        let mut x = self.lu.solve(&flat).expect("nonsingular by construction");
        // Remove the augmented component: project onto zero pressure mean.
        let mean = x.rows(2 * self.n_per_comp, self.m).sum() / self.m as f64;
        for k in 0..self.m {
            x[2 * self.n_per_comp + k] -= mean;
        }
        let size = (2 * self.n_per_comp + self.m) as u64;
        ctr.record(Kernel::CoarseSolve, size * size, size, 2 * size * size);
        BlockVector::from_flat(&self.grid, x.as_slice())
    }
}

/// Per-level relaxation state.
enum LevelRelax {
    Bs { cfg: BsConfig, schur: SchurOperator },
    Uzawa { cfg: UzawaConfig, schur: SchurOperator },
    Vanka { patches: VankaPatchSet },
}

/// One level of the monolithic hierarchy.
pub struct Level {
    pub ops: Operators,
    relax: LevelRelax,
    /// Interpolation from the next coarser level onto this one.
    pub interp: Option<BlockInterp>,
}

/// Monolithic multigrid hierarchy for the Stokes system.
pub struct MgHierarchy {
    pub levels: Vec<Level>,
    pub cfg: MgConfig,
    coarse_lu: Option<CoarseStokesLu>,
    relax_kind: RelaxKind,
}

fn validate_nesting(finest_n: usize, coarsest_n: usize) -> Result<usize> {
    if coarsest_n < 2 {
        return Err(Error::InvalidConfig("coarsest grid needs N >= 2".into()));
    }
    let mut n = finest_n;
    let mut levels = 1;
    while n > coarsest_n {
        if n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "grid size {finest_n} is not {coarsest_n}·2^k"
            )));
        }
        n /= 2;
        levels += 1;
    }
    if n != coarsest_n {
        return Err(Error::InvalidConfig(format!(
            "grid size {finest_n} is not {coarsest_n}·2^k"
        )));
    }
    Ok(levels)
}

impl MgHierarchy {
    /// Assembles operators on every level, builds relaxation data and
    /// interpolations, and factors the coarsest system.
    pub fn build(finest: &StructuredGrid, nu: f64, relax: RelaxKind, cfg: MgConfig) -> Result<Self> {
        let n_levels = validate_nesting(finest.n_elem(), cfg.coarsest_n)?;
        if cfg.nu1 + cfg.nu2 == 0 {
            return Err(Error::InvalidConfig(
                "at least one pre- or post-smoothing sweep".into(),
            ));
        }
        match &relax {
            RelaxKind::BraessSarazin(c) => c.validate()?,
            RelaxKind::SchurUzawa(c) => c.validate()?,
            RelaxKind::Vanka(c) => {
                if cfg.coarsest_n < 4 {
                    return Err(Error::InvalidConfig(
                        "Vanka relaxation needs coarsest N >= 4".into(),
                    ));
                }
                if c.omega <= 0.0 {
                    return Err(Error::InvalidConfig("Vanka weight must be positive".into()));
                }
            }
        }

        let mut levels = Vec::with_capacity(n_levels);
        for lvl in 0..n_levels {
            let n_elem = cfg.coarsest_n << lvl;
            let grid = StructuredGrid::with_level(n_elem, lvl);
            let mut ops = assemble_operators_raw(&grid, nu);
            apply_dirichlet(&mut ops, None, &BoundaryInfo::homogeneous(&grid));

            let dinv: Vec<f64> = ops.l.diagonal().iter().map(|d| 1.0 / d).collect();
            let relax_data = match &relax {
                RelaxKind::BraessSarazin(c) => LevelRelax::Bs {
                    cfg: *c,
                    schur: SchurOperator::new(&ops.b, &dinv, c.t)?,
                },
                RelaxKind::SchurUzawa(c) => LevelRelax::Uzawa {
                    cfg: *c,
                    schur: SchurOperator::new(&ops.b, &dinv, c.t)?,
                },
                RelaxKind::Vanka(c) => LevelRelax::Vanka {
                    patches: VankaPatchSet::build(&grid, &ops.l, &ops.b, *c)?,
                },
            };

            let interp = if lvl > 0 {
                let coarse = StructuredGrid::with_level(n_elem / 2, lvl - 1);
                Some(build_interpolation(&coarse, &grid))
            } else {
                None
            };

            levels.push(Level {
                ops,
                relax: relax_data,
                interp,
            });
        }

        let coarse_lu = match cfg.coarse_solver {
            CoarseSolverKind::Lu => Some(CoarseStokesLu::new(&levels[0].ops)?),
            CoarseSolverKind::Sweeps(k) => {
                if k == 0 {
                    return Err(Error::InvalidConfig(
                        "coarse sweep count must be positive".into(),
                    ));
                }
                None
            }
        };

        Ok(MgHierarchy {
            levels,
            cfg,
            coarse_lu,
            relax_kind: relax,
        })
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn finest_grid(&self) -> StructuredGrid {
        self.levels[self.finest_level()].ops.grid
    }

    pub fn relax_kind(&self) -> RelaxKind {
        self.relax_kind
    }

    /// One relaxation sweep at `level`: compute the residual, apply the
    /// configured scheme, add the update.
    fn relax_once(&self, level: usize, b: &BlockVector, x: &mut BlockVector, ctr: &mut Counters) {
        let lev = &self.levels[level];
        let mut r = BlockVector::zeros(&lev.ops.grid);
        stokes_residual(&lev.ops.l, &lev.ops.b, b, x, &mut r, ctr);
        let delta = match &lev.relax {
            LevelRelax::Bs { cfg, schur } => braess_sarazin_sweep(&lev.ops.b, schur, &r, cfg, ctr),
            LevelRelax::Uzawa { cfg, schur } => schur_uzawa_sweep(&lev.ops.b, schur, &r, cfg, ctr),
            LevelRelax::Vanka { patches } => patches.sweep(&r, ctr),
        };
        vector::add_assign(&mut x.ux, &delta.ux, ctr);
        vector::add_assign(&mut x.uy, &delta.uy, ctr);
        vector::add_assign(&mut x.p, &delta.p, ctr);
    }

    fn coarse_solve(&self, b: &BlockVector, x: &mut BlockVector, ctr: &mut Counters) {
        match self.cfg.coarse_solver {
            CoarseSolverKind::Lu => {
                *x = self
                    .coarse_lu
                    .as_ref()
                    .expect("LU cached at build")
                    .solve(b, ctr);
            }
            CoarseSolverKind::Sweeps(k) => {
                for _ in 0..k {
                    self.relax_once(0, b, x, ctr);
                }
            }
        }
    }

    /// One V-cycle at `level` improving `x` for A·x = b.
    pub fn vcycle(&self, level: usize, b: &BlockVector, x: &mut BlockVector, ctr: &mut Counters) {
        assert!(level < self.levels.len(), "level out of range");
        if level == 0 {
            self.coarse_solve(b, x, ctr);
            return;
        }
        let lev = &self.levels[level];
        let coarse_grid = self.levels[level - 1].ops.grid;

        for _ in 0..self.cfg.nu1 {
            self.relax_once(level, b, x, ctr);
        }

        let mut r = BlockVector::zeros(&lev.ops.grid);
        stokes_residual(&lev.ops.l, &lev.ops.b, b, x, &mut r, ctr);
        let interp = lev.interp.as_ref().expect("interpolation above level 0");
        let mut rc = BlockVector::zeros(&coarse_grid);
        interp.restrict_into(&r, &mut rc, true, ctr);

        let mut ec = BlockVector::zeros(&coarse_grid);
        self.vcycle(level - 1, &rc, &mut ec, ctr);

        let mut ef = BlockVector::zeros(&lev.ops.grid);
        interp.prolong_into(&ec, &mut ef, ctr);
        vector::add_assign(&mut x.ux, &ef.ux, ctr);
        vector::add_assign(&mut x.uy, &ef.uy, ctr);
        vector::add_assign(&mut x.p, &ef.p, ctr);

        for _ in 0..self.cfg.nu2 {
            self.relax_once(level, b, x, ctr);
        }
    }

    /// Preconditioner application: one V-cycle from a zero initial guess on
    /// the finest level, followed by pressure-mean removal.
    pub fn apply_preconditioner(&self, r: &BlockVector, ctr: &mut Counters) -> BlockVector {
        let mut z = BlockVector::zeros(&self.finest_grid());
        self.vcycle(self.finest_level(), r, &mut z, ctr);
        z.remove_pressure_mean(ctr);
        z
    }
}

impl crate::krylov::Preconditioner for MgHierarchy {
    fn apply(&mut self, r: &BlockVector, ctr: &mut Counters) -> BlockVector {
        MgHierarchy::apply_preconditioner(self, r, ctr)
    }

    fn name(&self) -> String {
        format!(
            "mg-{} V({},{})",
            self.relax_kind.name(),
            self.cfg.nu1,
            self.cfg.nu2
        )
    }
}

/// Scalar stencil operator for component multigrid.
pub enum ScalarOp {
    Q2(StencilQ2Q2),
    Q1(StencilQ1Q1),
}

impl ScalarOp {
    pub fn len(&self) -> usize {
        match self {
            ScalarOp::Q2(s) => {
                let f = 2 * s.n_elem() + 1;
                f * f
            }
            ScalarOp::Q1(s) => (s.n_elem() + 1) * (s.n_elem() + 1),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64], ctr: &mut Counters) {
        match self {
            ScalarOp::Q2(s) => s.apply(x, y, ctr),
            ScalarOp::Q1(s) => s.apply(x, y, ctr),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            ScalarOp::Q2(s) => s.diagonal(),
            ScalarOp::Q1(s) => s.diagonal(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            ScalarOp::Q2(s) => s.to_dense(),
            ScalarOp::Q1(s) => s.to_dense(),
        }
    }
}

enum ScalarInterp {
    Q2(crate::assembly::InterpQ2),
    Q1(crate::assembly::InterpQ1),
}

/// Which scalar operator the hierarchy carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarKind {
    /// One velocity component of L (Dirichlet rows included).
    VelocityLaplacian,
    /// The pressure mass matrix.
    PressureMass,
}

struct ScalarLevel {
    grid: StructuredGrid,
    op: ScalarOp,
    dinv: Vec<f64>,
    interp: Option<ScalarInterp>,
}

/// Weighted-Jacobi multigrid hierarchy for one scalar operator.
pub struct ScalarMgHierarchy {
    levels: Vec<ScalarLevel>,
    kind: ScalarKind,
    pub nu1: usize,
    pub nu2: usize,
    pub jacobi_omega: f64,
    coarse_lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl ScalarMgHierarchy {
    pub fn build(
        finest: &StructuredGrid,
        nu: f64,
        kind: ScalarKind,
        coarsest_n: usize,
        jacobi_omega: f64,
        nu1: usize,
        nu2: usize,
    ) -> Result<Self> {
        let n_levels = validate_nesting(finest.n_elem(), coarsest_n)?;
        if jacobi_omega <= 0.0 || jacobi_omega >= 2.0 {
            return Err(Error::InvalidConfig("Jacobi weight must lie in (0,2)".into()));
        }
        let mut levels = Vec::with_capacity(n_levels);
        for lvl in 0..n_levels {
            let n_elem = coarsest_n << lvl;
            let grid = StructuredGrid::with_level(n_elem, lvl);
            let mut ops = assemble_operators_raw(&grid, nu);
            let op = match kind {
                ScalarKind::VelocityLaplacian => {
                    apply_dirichlet(&mut ops, None, &BoundaryInfo::homogeneous(&grid));
                    ScalarOp::Q2(ops.l)
                }
                ScalarKind::PressureMass => ScalarOp::Q1(ops.m),
            };
            let mut dinv = op.diagonal();
            for d in dinv.iter_mut() {
                if d.abs() < 1e-300 {
                    return Err(Error::SingularDiagonal(
                        "scalar operator has a zero diagonal entry".into(),
                    ));
                }
                *d = 1.0 / *d;
            }
            let interp = if lvl > 0 {
                let coarse = StructuredGrid::with_level(n_elem / 2, lvl - 1);
                Some(match kind {
                    ScalarKind::VelocityLaplacian => {
                        ScalarInterp::Q2(crate::assembly::InterpQ2::new(coarse, grid))
                    }
                    ScalarKind::PressureMass => {
                        ScalarInterp::Q1(crate::assembly::InterpQ1::new(coarse, grid))
                    }
                })
            } else {
                None
            };
            levels.push(ScalarLevel {
                grid,
                op,
                dinv,
                interp,
            });
        }

        let dense = levels[0].op.to_dense();
        let coarse_lu = dense.lu();
        if coarse_lu.u().diagonal().iter().any(|d| d.abs() < 1e-300) {
            return Err(Error::SingularMatrix(
                "coarsest scalar operator is singular".into(),
            ));
        }

        Ok(ScalarMgHierarchy {
            levels,
            kind,
            nu1,
            nu2,
            jacobi_omega,
            coarse_lu,
        })
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn finest_len(&self) -> usize {
        self.levels[self.finest_level()].op.len()
    }

    fn jacobi_once(&self, level: usize, b: &[f64], x: &mut [f64], ctr: &mut Counters) {
        let lev = &self.levels[level];
        let mut ax = vec![0.0; x.len()];
        lev.op.apply(x, &mut ax, ctr);
        crate::relax::jacobi_fused_update(x, b, &ax, &lev.dinv, self.jacobi_omega, ctr);
    }

    /// One scalar V-cycle at `level` improving `x` for A·x = b.
    pub fn vcycle(&self, level: usize, b: &[f64], x: &mut [f64], ctr: &mut Counters) {
        assert!(level < self.levels.len(), "level out of range");
        let lev = &self.levels[level];
        if level == 0 {
            let sol = self
                .coarse_lu
                .solve(&DVector::from_column_slice(b))
                .expect("nonsingular by construction");
            x.copy_from_slice(sol.as_slice());
            let size = b.len() as u64;
            ctr.record(Kernel::CoarseSolve, size * size, size, 2 * size * size);
            return;
        }

        for _ in 0..self.nu1 {
            self.jacobi_once(level, b, x, ctr);
        }

        let mut ax = vec![0.0; x.len()];
        lev.op.apply(x, &mut ax, ctr);
        let mut r = vec![0.0; x.len()];
        vector::sub(&mut r, b, &ax, ctr);

        let coarse_len = self.levels[level - 1].op.len();
        let mut rc = vec![0.0; coarse_len];
        match lev.interp.as_ref().expect("interpolation above level 0") {
            ScalarInterp::Q2(p) => {
                p.apply_transpose(&r, &mut rc, ctr);
                if self.kind == ScalarKind::VelocityLaplacian {
                    // Coarse Dirichlet rows are identity rows; their
                    // restricted residual is dropped.
                    let g = self.levels[level - 1].grid;
                    let f = g.fine_dim();
                    for fj in 0..f {
                        for fi in 0..f {
                            if g.fine_on_boundary(fi, fj) {
                                rc[g.fine_index(fi, fj)] = 0.0;
                            }
                        }
                    }
                }
            }
            ScalarInterp::Q1(p) => p.apply_transpose(&r, &mut rc, ctr),
        }

        let mut ec = vec![0.0; coarse_len];
        self.vcycle(level - 1, &rc, &mut ec, ctr);

        let mut ef = vec![0.0; x.len()];
        match lev.interp.as_ref().unwrap() {
            ScalarInterp::Q2(p) => p.apply(&ec, &mut ef, ctr),
            ScalarInterp::Q1(p) => p.apply(&ec, &mut ef, ctr),
        }
        vector::add_assign(x, &ef, ctr);

        for _ in 0..self.nu2 {
            self.jacobi_once(level, b, x, ctr);
        }
    }

    /// `cycles` V-cycles from a zero initial guess on the finest level.
    pub fn solve_approx(&self, b: &[f64], cycles: usize, ctr: &mut Counters) -> Vec<f64> {
        let mut x = vec![0.0; self.finest_len()];
        for _ in 0..cycles {
            self.vcycle(self.finest_level(), b, &mut x, ctr);
        }
        x
    }
}
