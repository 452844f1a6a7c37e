//! Braess-Sarazin and Schur-Uzawa relaxation sweeps, plus the pressure-space
//! weighted Jacobi kernel they share.
//!
//! Both schemes replace the velocity block L of the saddle-point system by a
//! scaled diagonal tD and work with the resulting Schur complement
//! S = -(1/t)·B·D⁻¹·Bᵀ, applied matrix-free. S is level-constant, so its
//! diagonal is extracted once from the stencils.

use crate::counters::{Counters, Kernel};
use crate::error::{Error, Result};
use crate::stencil::StencilB;
use crate::vector::{self, BlockVector};

/// Braess-Sarazin parameters. The sweep solves the tD-approximated saddle
/// system inexactly (weighted Jacobi on S) and applies damped updates.
#[derive(Clone, Copy, Debug)]
pub struct BsConfig {
    /// Diagonal scaling of the velocity block.
    pub t: f64,
    /// Outer damping ω_BS applied to both updates.
    pub omega: f64,
    /// Weight of the inner pressure Jacobi.
    pub jacobi_omega: f64,
    pub jacobi_sweeps: usize,
}

impl Default for BsConfig {
    fn default() -> Self {
        BsConfig {
            t: 1.0,
            omega: 1.0,
            jacobi_omega: 0.8,
            jacobi_sweeps: 2,
        }
    }
}

impl BsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t <= 0.0 || self.omega <= 0.0 || self.omega > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "Braess-Sarazin needs t > 0 and 0 < omega <= 1 (got t={}, omega={})",
                self.t, self.omega
            )));
        }
        if self.jacobi_omega <= 0.0 || self.jacobi_omega >= 2.0 || self.jacobi_sweeps == 0 {
            return Err(Error::InvalidConfig(
                "Jacobi weight must lie in (0,2) with at least one sweep".into(),
            ));
        }
        Ok(())
    }
}

/// Schur-Uzawa parameters. Updates are applied undamped.
#[derive(Clone, Copy, Debug)]
pub struct UzawaConfig {
    pub t: f64,
    pub jacobi_omega: f64,
    pub jacobi_sweeps: usize,
}

impl Default for UzawaConfig {
    fn default() -> Self {
        UzawaConfig {
            t: 1.0,
            jacobi_omega: 0.4,
            jacobi_sweeps: 1,
        }
    }
}

impl UzawaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t <= 0.0 || self.jacobi_omega <= 0.0 || self.jacobi_omega >= 2.0 {
            return Err(Error::InvalidConfig(
                "Schur-Uzawa needs t > 0 and Jacobi weight in (0,2)".into(),
            ));
        }
        if self.jacobi_sweeps == 0 {
            return Err(Error::InvalidConfig("at least one Jacobi sweep".into()));
        }
        Ok(())
    }
}

/// The Schur complement S = -(1/t)·B·D⁻¹·Bᵀ applied matrix-free through the
/// stored D⁻¹ and the B stencils, with its diagonal precomputed.
#[derive(Clone, Debug)]
pub struct SchurOperator {
    t: f64,
    /// Inverse diagonal of L on the fine lattice (shared by both components).
    dinv: Vec<f64>,
    /// diag(S); strictly negative away from empty rows.
    diag: Vec<f64>,
    /// 1 / diag(S).
    diag_inv: Vec<f64>,
}

impl SchurOperator {
    /// Builds the operator for a given t from the divergence stencil and the
    /// inverse diagonal of L.
    pub fn new(b: &StencilB, dinv: &[f64], t: f64) -> Result<Self> {
        let n_elem = b.n_elem();
        let grid = crate::mesh::StructuredGrid::new(n_elem);
        assert_eq!(dinv.len(), grid.n_vel_per_comp(), "grid mismatch");
        let nodes = n_elem + 1;
        let f = grid.fine_dim();
        let last = (f - 1) as isize;
        let mut diag = vec![0.0; nodes * nodes];
        for nj in 0..nodes {
            for ni in 0..nodes {
                let mut acc = 0.0;
                for dy in -2isize..=2 {
                    for dx in -2isize..=2 {
                        let fi = 2 * ni as isize + dx;
                        let fj = 2 * nj as isize + dy;
                        if fi < 0 || fj < 0 || fi > last || fj > last {
                            continue;
                        }
                        let di = dinv[fj as usize * f + fi as usize];
                        let cx = b.entry(ni, nj, 0, dx, dy);
                        let cy = b.entry(ni, nj, 1, dx, dy);
                        acc += (cx * cx + cy * cy) * di;
                    }
                }
                diag[nj * nodes + ni] = -acc / t;
            }
        }
        let mut diag_inv = vec![0.0; diag.len()];
        for (k, &d) in diag.iter().enumerate() {
            if d.abs() < 1e-300 {
                return Err(Error::SingularDiagonal(format!(
                    "Schur diagonal vanishes at pressure row {k}"
                )));
            }
            diag_inv[k] = 1.0 / d;
        }
        Ok(SchurOperator {
            t,
            dinv: dinv.to_vec(),
            diag,
            diag_inv,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn dinv(&self) -> &[f64] {
        &self.dinv
    }

    /// out = S·p.
    pub fn apply(&self, b: &StencilB, p: &[f64], out: &mut [f64], ctr: &mut Counters) {
        let n = self.dinv.len();
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        b.apply_transpose(p, &mut gx, &mut gy, ctr);
        let mut sx = vec![0.0; n];
        let mut sy = vec![0.0; n];
        vector::pointwise_mul(&mut sx, &self.dinv, &gx, ctr);
        vector::pointwise_mul(&mut sy, &self.dinv, &gy, ctr);
        b.apply(&sx, &sy, out, ctr);
        vector::scale(out, -1.0 / self.t, ctr);
    }
}

/// Fused Jacobi update x += ω·dinv⊙(rhs − ax), recorded under the
/// weighted-Jacobi kernel convention (reads 2·len, writes len, flops 2·len).
pub fn jacobi_fused_update(
    x: &mut [f64],
    rhs: &[f64],
    ax: &[f64],
    diag_inv: &[f64],
    omega: f64,
    ctr: &mut Counters,
) {
    let len = x.len();
    assert!(rhs.len() == len && ax.len() == len && diag_inv.len() == len, "length mismatch");
    for i in 0..len {
        x[i] += omega * diag_inv[i] * (rhs[i] - ax[i]);
    }
    ctr.record(Kernel::WeightedJacobi, 2 * len as u64, len as u64, 2 * len as u64);
}

/// `sweeps` repetitions of δp ← δp + ω·diag(S)⁻¹·(rhs − S·δp).
pub fn weighted_jacobi_pressure(
    s: &SchurOperator,
    b: &StencilB,
    rhs: &[f64],
    dp: &mut [f64],
    omega: f64,
    sweeps: usize,
    ctr: &mut Counters,
) {
    let mut sdp = vec![0.0; dp.len()];
    for _ in 0..sweeps {
        s.apply(b, dp, &mut sdp, ctr);
        jacobi_fused_update(dp, rhs, &sdp, &s.diag_inv, omega, ctr);
    }
}

/// One Braess-Sarazin sweep: solves the tD-approximated saddle system for
/// (δu, δp) with an inexact Schur solve and returns the damped updates.
pub fn braess_sarazin_sweep(
    b: &StencilB,
    schur: &SchurOperator,
    r: &BlockVector,
    cfg: &BsConfig,
    ctr: &mut Counters,
) -> BlockVector {
    let n = r.ux.len();
    let m = r.p.len();
    let dinv = schur.dinv();

    // rhs_S = r_p − (1/t)·B·D⁻¹·r_u
    let mut tx = vec![0.0; n];
    let mut ty = vec![0.0; n];
    vector::pointwise_mul(&mut tx, dinv, &r.ux, ctr);
    vector::pointwise_mul(&mut ty, dinv, &r.uy, ctr);
    let mut bdr = vec![0.0; m];
    b.apply(&tx, &ty, &mut bdr, ctr);
    vector::scale(&mut bdr, 1.0 / cfg.t, ctr);
    let mut rhs_s = vec![0.0; m];
    vector::sub(&mut rhs_s, &r.p, &bdr, ctr);

    // Inexact Schur solve for δp.
    let mut delta = BlockVector {
        ux: vec![0.0; n],
        uy: vec![0.0; n],
        p: vec![0.0; m],
    };
    weighted_jacobi_pressure(
        schur,
        b,
        &rhs_s,
        &mut delta.p,
        cfg.jacobi_omega,
        cfg.jacobi_sweeps,
        ctr,
    );

    // δu = (1/t)·D⁻¹·(r_u − Bᵀ·δp)
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    b.apply_transpose(&delta.p, &mut gx, &mut gy, ctr);
    let mut wx = vec![0.0; n];
    let mut wy = vec![0.0; n];
    vector::sub(&mut wx, &r.ux, &gx, ctr);
    vector::sub(&mut wy, &r.uy, &gy, ctr);
    vector::pointwise_mul(&mut delta.ux, dinv, &wx, ctr);
    vector::pointwise_mul(&mut delta.uy, dinv, &wy, ctr);
    vector::scale(&mut delta.ux, 1.0 / cfg.t, ctr);
    vector::scale(&mut delta.uy, 1.0 / cfg.t, ctr);

    delta.scale(cfg.omega, ctr);
    delta
}

/// One Schur-Uzawa sweep: δu from the diagonal solve, δp from the inexact
/// Schur solve against B·δu − r_p; no outer damping.
pub fn schur_uzawa_sweep(
    b: &StencilB,
    schur: &SchurOperator,
    r: &BlockVector,
    cfg: &UzawaConfig,
    ctr: &mut Counters,
) -> BlockVector {
    let n = r.ux.len();
    let m = r.p.len();
    let dinv = schur.dinv();

    let mut delta = BlockVector {
        ux: vec![0.0; n],
        uy: vec![0.0; n],
        p: vec![0.0; m],
    };

    // δu = (1/t)·D⁻¹·r_u
    vector::pointwise_mul(&mut delta.ux, dinv, &r.ux, ctr);
    vector::pointwise_mul(&mut delta.uy, dinv, &r.uy, ctr);
    vector::scale(&mut delta.ux, 1.0 / cfg.t, ctr);
    vector::scale(&mut delta.uy, 1.0 / cfg.t, ctr);

    // Pressure equation of the lower-triangular block system:
    // B·δu + S·δp = r_p, so S·δp = r_p − B·δu (with S negative definite).
    let mut bdu = vec![0.0; m];
    b.apply(&delta.ux, &delta.uy, &mut bdu, ctr);
    let mut rhs_s = vec![0.0; m];
    vector::sub(&mut rhs_s, &r.p, &bdu, ctr);

    weighted_jacobi_pressure(
        schur,
        b,
        &rhs_s,
        &mut delta.p,
        cfg.jacobi_omega,
        cfg.jacobi_sweeps,
        ctr,
    );
    delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_operators;
    use crate::mesh::StructuredGrid;

    fn setup(n: usize, t: f64) -> (StencilB, SchurOperator) {
        let grid = StructuredGrid::new(n);
        let ops = assemble_operators(&grid, 1.0);
        let dinv: Vec<f64> = ops.l.diagonal().iter().map(|d| 1.0 / d).collect();
        let schur = SchurOperator::new(&ops.b, &dinv, t).unwrap();
        (ops.b, schur)
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..len)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn schur_diag_negative_on_interior() {
        let (_, schur) = setup(4, 1.0);
        for &d in schur.diag() {
            assert!(d < 0.0);
        }
    }

    #[test]
    fn schur_operator_is_symmetric() {
        let (b, schur) = setup(4, 1.3);
        let m = (4 + 1) * (4 + 1);
        let p = pseudo_random(m, 7);
        let q = pseudo_random(m, 11);
        let mut ctr = Counters::new();
        let mut sp = vec![0.0; m];
        let mut sq = vec![0.0; m];
        schur.apply(&b, &p, &mut sp, &mut ctr);
        schur.apply(&b, &q, &mut sq, &mut ctr);
        let lhs: f64 = sp.iter().zip(&q).map(|(a, b)| a * b).sum();
        let rhs: f64 = p.iter().zip(&sq).map(|(a, b)| a * b).sum();
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        assert!((lhs - rhs).abs() / scale < 1e-12);
    }

    #[test]
    fn jacobi_zero_rhs_stays_zero() {
        let (b, schur) = setup(4, 1.0);
        let m = 25;
        let mut dp = vec![0.0; m];
        let rhs = vec![0.0; m];
        let mut ctr = Counters::new();
        weighted_jacobi_pressure(&schur, &b, &rhs, &mut dp, 0.8, 3, &mut ctr);
        assert!(dp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobi_single_sweep_formula() {
        let (b, schur) = setup(4, 1.0);
        let m = 25;
        let rhs = pseudo_random(m, 3);
        let mut dp = vec![0.0; m];
        let mut ctr = Counters::new();
        weighted_jacobi_pressure(&schur, &b, &rhs, &mut dp, 0.8, 1, &mut ctr);
        for k in 0..m {
            let expect = 0.8 * rhs[k] / schur.diag()[k];
            assert!((dp[k] - expect).abs() < 1e-13 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn sweeps_map_zero_to_zero() {
        let grid = StructuredGrid::new(4);
        let (b, schur) = setup(4, 1.0);
        let r = BlockVector::zeros(&grid);
        let mut ctr = Counters::new();
        let bs = braess_sarazin_sweep(&b, &schur, &r, &BsConfig::default(), &mut ctr);
        assert!(bs.to_flat().iter().all(|&v| v == 0.0));
        let uz = schur_uzawa_sweep(&b, &schur, &r, &UzawaConfig::default(), &mut ctr);
        assert!(uz.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sweeps_are_linear_in_the_residual() {
        let grid = StructuredGrid::new(4);
        let (b, schur) = setup(4, 1.0);
        let mut ctr = Counters::new();
        let mut r = BlockVector::zeros(&grid);
        r.ux = pseudo_random(r.ux.len(), 21);
        r.uy = pseudo_random(r.uy.len(), 22);
        r.p = pseudo_random(r.p.len(), 23);
        let cfg = BsConfig::default();
        let d1 = braess_sarazin_sweep(&b, &schur, &r, &cfg, &mut ctr);
        let alpha = -2.75;
        let mut r2 = r.clone();
        r2.scale(alpha, &mut ctr);
        let d2 = braess_sarazin_sweep(&b, &schur, &r2, &cfg, &mut ctr);
        for (a, bv) in d1.to_flat().iter().zip(d2.to_flat()) {
            assert!((alpha * a - bv).abs() < 1e-12 * (1.0 + bv.abs()));
        }
        let ucfg = UzawaConfig::default();
        let u1 = schur_uzawa_sweep(&b, &schur, &r, &ucfg, &mut ctr);
        let u2 = schur_uzawa_sweep(&b, &schur, &r2, &ucfg, &mut ctr);
        for (a, bv) in u1.to_flat().iter().zip(u2.to_flat()) {
            assert!((alpha * a - bv).abs() < 1e-12 * (1.0 + bv.abs()));
        }
    }

    #[test]
    fn config_validation() {
        assert!(BsConfig::default().validate().is_ok());
        assert!(BsConfig {
            t: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(UzawaConfig {
            jacobi_omega: 2.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
