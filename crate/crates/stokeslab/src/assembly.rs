//! Finite-element assembly of the Stokes operators on the structured grid:
//! vector Laplacian L, divergence B (with its transpose view), pressure mass
//! matrix M, the manufactured right-hand side, Dirichlet elimination, and the
//! Q2/Q1 interpolation operators for nested grid hierarchies.
//!
//! Element integrals use 3×3 Gauss quadrature, which is exact for every
//! stiffness, divergence, and mass integrand on the affine rectangles here
//! (and for the polynomial manufactured forcing as well).

use crate::counters::{Counters, Kernel};
use crate::mesh::{offset_slot, BoundaryInfo, DofIndex, StructuredGrid};
use crate::stencil::{StencilB, StencilQ1Q1, StencilQ2Q2};
use crate::vector::BlockVector;

/// 3-point Gauss-Legendre rule on [-1, 1].
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.7745966692414834, 0.5555555555555556),
    (0.0, 0.8888888888888888),
    (0.7745966692414834, 0.5555555555555556),
];

/// 4-point Gauss-Legendre rule on [-1, 1] (used for error integration).
pub const GAUSS4: [(f64, f64); 4] = [
    (-0.8611363115940526, 0.3478548451374538),
    (-0.3399810435848563, 0.6521451548625461),
    (0.3399810435848563, 0.6521451548625461),
    (0.8611363115940526, 0.3478548451374538),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    Q2,
    Q1,
}

fn lag_q2(i: usize, x: f64) -> f64 {
    match i {
        0 => 0.5 * x * (x - 1.0),
        1 => 1.0 - x * x,
        2 => 0.5 * x * (x + 1.0),
        _ => panic!("Q2 1D index out of range"),
    }
}

fn lag_q2_d(i: usize, x: f64) -> f64 {
    match i {
        0 => x - 0.5,
        1 => -2.0 * x,
        2 => x + 0.5,
        _ => panic!("Q2 1D index out of range"),
    }
}

fn lag_q1(i: usize, x: f64) -> f64 {
    match i {
        0 => 0.5 * (1.0 - x),
        1 => 0.5 * (1.0 + x),
        _ => panic!("Q1 1D index out of range"),
    }
}

fn lag_q1_d(i: usize) -> f64 {
    match i {
        0 => -0.5,
        1 => 0.5,
        _ => panic!("Q1 1D index out of range"),
    }
}

/// Tensor-product Lagrange basis on the reference square [-1,1]²: value and
/// reference derivatives. `idx` runs row-major over the element lattice
/// (0..9 for Q2, 0..4 for Q1).
pub fn reference_basis(kind: BasisKind, idx: usize, xi: f64, eta: f64) -> (f64, f64, f64) {
    match kind {
        BasisKind::Q2 => {
            assert!(idx < 9, "Q2 basis index out of range");
            let (a, b) = (idx % 3, idx / 3);
            (
                lag_q2(a, xi) * lag_q2(b, eta),
                lag_q2_d(a, xi) * lag_q2(b, eta),
                lag_q2(a, xi) * lag_q2_d(b, eta),
            )
        }
        BasisKind::Q1 => {
            assert!(idx < 4, "Q1 basis index out of range");
            let (a, b) = (idx % 2, idx / 2);
            (
                lag_q1(a, xi) * lag_q1(b, eta),
                lag_q1_d(a) * lag_q1(b, eta),
                lag_q1(a, xi) * lag_q1_d(b),
            )
        }
    }
}

/// Per-element matrices of the Q2-Q1 discretization on an h×h element.
#[derive(Clone, Debug)]
pub struct ElementMatrices {
    /// 9×9 component stiffness ν∫∇ψ·∇ψ (identical for both components).
    pub l: [[f64; 9]; 9],
    /// 4×18 divergence coupling: row k, column comp·9+a holds
    /// b(ψ_a e_comp, φ_k) = −∫ φ_k ∂_comp ψ_a.
    pub b: [[f64; 18]; 4],
    /// 4×4 pressure mass ∫φφ.
    pub m: [[f64; 4]; 4],
}

impl ElementMatrices {
    pub fn compute(h: f64, nu: f64) -> Self {
        let mut l = [[0.0; 9]; 9];
        let mut b = [[0.0; 18]; 4];
        let mut m = [[0.0; 4]; 4];
        for &(eta, wy) in &GAUSS3 {
            for &(xi, wx) in &GAUSS3 {
                let w = wx * wy;
                let q2: Vec<(f64, f64, f64)> = (0..9)
                    .map(|a| reference_basis(BasisKind::Q2, a, xi, eta))
                    .collect();
                let q1: Vec<(f64, f64, f64)> = (0..4)
                    .map(|k| reference_basis(BasisKind::Q1, k, xi, eta))
                    .collect();
                for r in 0..9 {
                    for c in 0..9 {
                        // Jacobian factors cancel: (2/h)² gradients × (h/2)² measure.
                        l[r][c] += nu * w * (q2[r].1 * q2[c].1 + q2[r].2 * q2[c].2);
                    }
                }
                for k in 0..4 {
                    for a in 0..9 {
                        b[k][a] -= 0.5 * h * w * q1[k].0 * q2[a].1;
                        b[k][9 + a] -= 0.5 * h * w * q1[k].0 * q2[a].2;
                    }
                }
                for k in 0..4 {
                    for l2 in 0..4 {
                        m[k][l2] += 0.25 * h * h * w * q1[k].0 * q1[l2].0;
                    }
                }
            }
        }
        ElementMatrices { l, b, m }
    }
}

/// Manufactured exact solution (u_x, u_y, p) on the unit square.
pub fn manufactured_solution(x: f64, y: f64) -> (f64, f64, f64) {
    let g = |s: f64| s * (1.0 - s) * (2.0 * s - 1.0);
    let q = |s: f64| 6.0 * s * s - 6.0 * s + 1.0;
    let ux = g(x) * q(y);
    let uy = -g(y) * q(x);
    let p = x * x - 3.0 * y * y + 8.0 / 3.0 * x * y;
    (ux, uy, p)
}

/// Forcing f = -ν∇²u + ∇p of the manufactured solution, from closed-form
/// derivatives.
pub fn manufactured_forcing(nu: f64, x: f64, y: f64) -> (f64, f64) {
    let g = |s: f64| s * (1.0 - s) * (2.0 * s - 1.0);
    let q = |s: f64| 6.0 * s * s - 6.0 * s + 1.0;
    let lap_ux = (6.0 - 12.0 * x) * q(y) + 12.0 * g(x);
    let lap_uy = (12.0 * y - 6.0) * q(x) - 12.0 * g(y);
    let fx = -nu * lap_ux + 2.0 * x + 8.0 / 3.0 * y;
    let fy = -nu * lap_uy - 6.0 * y + 8.0 / 3.0 * x;
    (fx, fy)
}

/// Assembled level operators.
#[derive(Clone, Debug)]
pub struct Operators {
    pub grid: StructuredGrid,
    pub nu: f64,
    pub l: StencilQ2Q2,
    pub b: StencilB,
    pub m: StencilQ1Q1,
}

/// Raw operators: no boundary treatment applied.
pub fn assemble_operators_raw(grid: &StructuredGrid, nu: f64) -> Operators {
    let n = grid.n_elem();
    let em = ElementMatrices::compute(grid.h(), nu);
    let mut l = StencilQ2Q2::zeros(grid);
    let mut b = StencilB::zeros(grid);
    let mut m = StencilQ1Q1::zeros(grid);

    for ey in 0..n {
        for ex in 0..n {
            // Q2 local index lb = 3*b + a sits at fine point (2ex+a, 2ey+b).
            for lr in 0..9 {
                let (ar, br) = (lr % 3, lr / 3);
                let (fi, fj) = (2 * ex + ar, 2 * ey + br);
                let class = DofIndex::from_fine_point(fi, fj).class;
                for lc in 0..9 {
                    let (ac, bc) = (lc % 3, lc / 3);
                    let dx = ac as isize - ar as isize;
                    let dy = bc as isize - br as isize;
                    let slot = offset_slot(class, dx, dy)
                        .expect("element couplings always fall inside the class pattern");
                    *l.entry_mut(fi, fj, slot) += em.l[lr][lc];
                }
            }
            // Q1 local index lk = 2*d + c sits at node (ex+c, ey+d).
            for lk in 0..4 {
                let (c, d) = (lk % 2, lk / 2);
                let (ni, nj) = (ex + c, ey + d);
                for comp in 0..2 {
                    for lc in 0..9 {
                        let (ac, bc) = (lc % 3, lc / 3);
                        let dx = (2 * ex + ac) as isize - (2 * ni) as isize;
                        let dy = (2 * ey + bc) as isize - (2 * nj) as isize;
                        *b.entry_mut(ni, nj, comp, dx, dy) += em.b[lk][comp * 9 + lc];
                    }
                }
                for lk2 in 0..4 {
                    let (c2, d2) = (lk2 % 2, lk2 / 2);
                    let dx = (ex + c2) as isize - ni as isize;
                    let dy = (ey + d2) as isize - nj as isize;
                    *m.entry_mut(ni, nj, dx, dy) += em.m[lk][lk2];
                }
            }
        }
    }

    Operators {
        grid: *grid,
        nu,
        l,
        b,
        m,
    }
}

/// Dirichlet elimination: velocity rows on ∂Ω become identity rows, coupled
/// columns in L and B are zeroed, and (when a right-hand side is given) the
/// eliminated column contributions move into it. The elimination is
/// symmetric, so the monolithic operator stays symmetric.
pub fn apply_dirichlet(ops: &mut Operators, mut rhs: Option<&mut BlockVector>, bc: &BoundaryInfo) {
    let grid = ops.grid;
    let f = grid.fine_dim();
    let last = (f - 1) as isize;
    let nodes = grid.n_elem() + 1;

    for sj in 0..f {
        for si in 0..f {
            let s_idx = grid.fine_index(si, sj);
            if !bc.dirichlet[s_idx] {
                continue;
            }
            let (vx, vy) = (bc.value_x[s_idx], bc.value_y[s_idx]);

            // Column elimination in L (both components share the stencil).
            for dy in -2isize..=2 {
                for dx in -2isize..=2 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let ri = si as isize + dx;
                    let rj = sj as isize + dy;
                    if ri < 0 || rj < 0 || ri > last || rj > last {
                        continue;
                    }
                    let (ri, rj) = (ri as usize, rj as usize);
                    if bc.dirichlet[grid.fine_index(ri, rj)] {
                        continue;
                    }
                    let class = DofIndex::from_fine_point(ri, rj).class;
                    if let Some(slot) = offset_slot(class, -dx, -dy) {
                        let c = ops.l.entry(ri, rj, slot);
                        if c != 0.0 {
                            if let Some(r) = rhs.as_deref_mut() {
                                r.ux[grid.fine_index(ri, rj)] -= c * vx;
                                r.uy[grid.fine_index(ri, rj)] -= c * vy;
                            }
                            *ops.l.entry_mut(ri, rj, slot) = 0.0;
                        }
                    }
                }
            }

            // Column elimination in B (moves into the pressure equations).
            let a_min = ((si as isize - 2 + 1).div_euclid(2)).max(0);
            let a_max = ((si as isize + 2) / 2).min(nodes as isize - 1);
            let b_min = ((sj as isize - 2 + 1).div_euclid(2)).max(0);
            let b_max = ((sj as isize + 2) / 2).min(nodes as isize - 1);
            for nb in b_min..=b_max {
                for na in a_min..=a_max {
                    let dx = si as isize - 2 * na;
                    let dy = sj as isize - 2 * nb;
                    if dx.abs() > 2 || dy.abs() > 2 {
                        continue;
                    }
                    let (na, nb) = (na as usize, nb as usize);
                    let cx = ops.b.entry(na, nb, 0, dx, dy);
                    let cy = ops.b.entry(na, nb, 1, dx, dy);
                    if let Some(r) = rhs.as_deref_mut() {
                        r.p[grid.node_index(na, nb)] -= cx * vx + cy * vy;
                    }
                    *ops.b.entry_mut(na, nb, 0, dx, dy) = 0.0;
                    *ops.b.entry_mut(na, nb, 1, dx, dy) = 0.0;
                }
            }
        }
    }

    // Row reset to identity, boundary values onto the right-hand side.
    for sj in 0..f {
        for si in 0..f {
            let s_idx = grid.fine_index(si, sj);
            if !bc.dirichlet[s_idx] {
                continue;
            }
            let class = DofIndex::from_fine_point(si, sj).class;
            let row = ops.l.row_mut(si, sj);
            row.iter_mut().for_each(|v| *v = 0.0);
            row[offset_slot(class, 0, 0).unwrap()] = 1.0;
            if let Some(r) = rhs.as_deref_mut() {
                r.ux[s_idx] = bc.value_x[s_idx];
                r.uy[s_idx] = bc.value_y[s_idx];
            }
        }
    }
}

/// Boundary data of the manufactured solution (velocity components sampled
/// on ∂Ω).
pub fn manufactured_boundary(grid: &StructuredGrid) -> BoundaryInfo {
    BoundaryInfo::from_fn(grid, |x, y| {
        let (ux, uy, _) = manufactured_solution(x, y);
        (ux, uy)
    })
}

/// Raw right-hand side: velocity moments ∫f·ψ of the manufactured forcing,
/// zero pressure block, no boundary treatment.
fn assemble_rhs_raw(grid: &StructuredGrid, nu: f64) -> BlockVector {
    let n = grid.n_elem();
    let h = grid.h();
    let mut rhs = BlockVector::zeros(grid);
    for ey in 0..n {
        for ex in 0..n {
            for &(eta, wy) in &GAUSS3 {
                for &(xi, wx) in &GAUSS3 {
                    let w = wx * wy * 0.25 * h * h;
                    let x = (ex as f64 + 0.5 * (xi + 1.0)) * h;
                    let y = (ey as f64 + 0.5 * (eta + 1.0)) * h;
                    let (fx, fy) = manufactured_forcing(nu, x, y);
                    for a in 0..9 {
                        let (va, _, _) = reference_basis(BasisKind::Q2, a, xi, eta);
                        let fi = 2 * ex + a % 3;
                        let fj = 2 * ey + a / 3;
                        let idx = grid.fine_index(fi, fj);
                        rhs.ux[idx] += w * fx * va;
                        rhs.uy[idx] += w * fy * va;
                    }
                }
            }
        }
    }
    rhs
}

/// Operators with Dirichlet treatment applied (boundary data from the
/// manufactured solution).
pub fn assemble_operators(grid: &StructuredGrid, nu: f64) -> Operators {
    let mut ops = assemble_operators_raw(grid, nu);
    let bc = manufactured_boundary(grid);
    apply_dirichlet(&mut ops, None, &bc);
    ops
}

/// Right-hand side with Dirichlet rows overwritten by boundary values and
/// eliminated-column compensation applied.
pub fn assemble_rhs(grid: &StructuredGrid, nu: f64) -> BlockVector {
    let (_, rhs) = assemble_problem(grid, nu);
    rhs
}

/// One-pass assembly of the boundary-treated operators and right-hand side.
pub fn assemble_problem(grid: &StructuredGrid, nu: f64) -> (Operators, BlockVector) {
    let mut ops = assemble_operators_raw(grid, nu);
    let mut rhs = assemble_rhs_raw(grid, nu);
    let bc = manufactured_boundary(grid);
    apply_dirichlet(&mut ops, Some(&mut rhs), &bc);
    (ops, rhs)
}

/// Nodal interpolant of the manufactured solution (coefficient vector).
pub fn exact_solution_vector(grid: &StructuredGrid) -> BlockVector {
    let mut x = BlockVector::zeros(grid);
    let f = grid.fine_dim();
    for fj in 0..f {
        for fi in 0..f {
            let (px, py) = grid.fine_coords(fi, fj);
            let (ux, uy, _) = manufactured_solution(px, py);
            x.ux[grid.fine_index(fi, fj)] = ux;
            x.uy[grid.fine_index(fi, fj)] = uy;
        }
    }
    let nodes = grid.n_elem() + 1;
    for nj in 0..nodes {
        for ni in 0..nodes {
            let (px, py) = (ni as f64 * grid.h(), nj as f64 * grid.h());
            let (_, _, p) = manufactured_solution(px, py);
            x.p[grid.node_index(ni, nj)] = p;
        }
    }
    x
}

/// L2 and DOF-wise errors against the manufactured solution. Pressure errors
/// are measured modulo constants (the error's mean is removed first).
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ErrorNorms {
    pub velocity_l2: f64,
    pub pressure_l2: f64,
    pub velocity_dof_rms: f64,
    pub pressure_dof_rms: f64,
}

/// Evaluates u_h at a quadrature point of an element from its coefficients.
fn eval_q2(grid: &StructuredGrid, coeffs: &[f64], ex: usize, ey: usize, xi: f64, eta: f64) -> f64 {
    let mut v = 0.0;
    for a in 0..9 {
        let (val, _, _) = reference_basis(BasisKind::Q2, a, xi, eta);
        v += coeffs[grid.fine_index(2 * ex + a % 3, 2 * ey + a / 3)] * val;
    }
    v
}

fn eval_q1(grid: &StructuredGrid, coeffs: &[f64], ex: usize, ey: usize, xi: f64, eta: f64) -> f64 {
    let mut v = 0.0;
    for k in 0..4 {
        let (val, _, _) = reference_basis(BasisKind::Q1, k, xi, eta);
        v += coeffs[grid.node_index(ex + k % 2, ey + k / 2)] * val;
    }
    v
}

pub fn l2_errors(grid: &StructuredGrid, x: &BlockVector) -> ErrorNorms {
    let n = grid.n_elem();
    let h = grid.h();
    let jac = 0.25 * h * h;

    // Mean of the pressure error (|Ω| = 1): removed before measuring.
    let mut p_err_mean = 0.0;
    for ey in 0..n {
        for ex in 0..n {
            for &(eta, wy) in &GAUSS4 {
                for &(xi, wx) in &GAUSS4 {
                    let w = wx * wy * jac;
                    let px = (ex as f64 + 0.5 * (xi + 1.0)) * h;
                    let py = (ey as f64 + 0.5 * (eta + 1.0)) * h;
                    let (_, _, pe) = manufactured_solution(px, py);
                    p_err_mean += w * (eval_q1(grid, &x.p, ex, ey, xi, eta) - pe);
                }
            }
        }
    }

    let mut vel2 = 0.0;
    let mut p2 = 0.0;
    for ey in 0..n {
        for ex in 0..n {
            for &(eta, wy) in &GAUSS4 {
                for &(xi, wx) in &GAUSS4 {
                    let w = wx * wy * jac;
                    let px = (ex as f64 + 0.5 * (xi + 1.0)) * h;
                    let py = (ey as f64 + 0.5 * (eta + 1.0)) * h;
                    let (uxe, uye, pe) = manufactured_solution(px, py);
                    let dx = eval_q2(grid, &x.ux, ex, ey, xi, eta) - uxe;
                    let dy = eval_q2(grid, &x.uy, ex, ey, xi, eta) - uye;
                    let dp = eval_q1(grid, &x.p, ex, ey, xi, eta) - pe - p_err_mean;
                    vel2 += w * (dx * dx + dy * dy);
                    p2 += w * dp * dp;
                }
            }
        }
    }

    let exact = exact_solution_vector(grid);
    let nvel = (x.ux.len() + x.uy.len()) as f64;
    let mut v_dof2 = 0.0;
    for k in 0..x.ux.len() {
        v_dof2 += (x.ux[k] - exact.ux[k]).powi(2) + (x.uy[k] - exact.uy[k]).powi(2);
    }
    let m = x.p.len() as f64;
    let dof_mean: f64 = (0..x.p.len()).map(|k| x.p[k] - exact.p[k]).sum::<f64>() / m;
    let mut p_dof2 = 0.0;
    for k in 0..x.p.len() {
        p_dof2 += (x.p[k] - exact.p[k] - dof_mean).powi(2);
    }

    ErrorNorms {
        velocity_l2: vel2.sqrt(),
        pressure_l2: p2.sqrt(),
        velocity_dof_rms: (v_dof2 / nvel).sqrt(),
        pressure_dof_rms: (p_dof2 / m).sqrt(),
    }
}

/// 1D interpolation weights from the coarse lattice to fine lattice point
/// `fpos`, for the quadratic (Q2) spaces. Returns (coarse positions, weights).
fn q2_weights_1d(fpos: usize) -> ([usize; 3], [f64; 3], usize) {
    if fpos % 2 == 0 {
        ([fpos / 2, 0, 0], [1.0, 0.0, 0.0], 1)
    } else {
        let k = (fpos - 1) / 2;
        if k % 2 == 0 {
            // Fine point at ξ = −1/2 of coarse element k/2.
            ([k, k + 1, k + 2], [0.375, 0.75, -0.125], 3)
        } else {
            // Fine point at ξ = +1/2 of coarse element (k−1)/2.
            ([k - 1, k, k + 1], [-0.125, 0.75, 0.375], 3)
        }
    }
}

fn q1_weights_1d(fpos: usize) -> ([usize; 2], [f64; 2], usize) {
    if fpos % 2 == 0 {
        ([fpos / 2, 0], [1.0, 0.0], 1)
    } else {
        ([(fpos - 1) / 2, (fpos + 1) / 2], [0.5, 0.5], 2)
    }
}

/// Finite-element interpolation from a coarse Q2 component to the
/// twice-refined fine component (matrix-free row evaluation).
#[derive(Clone, Copy, Debug)]
pub struct InterpQ2 {
    coarse: StructuredGrid,
    fine: StructuredGrid,
}

impl InterpQ2 {
    pub fn new(coarse: StructuredGrid, fine: StructuredGrid) -> Self {
        assert_eq!(
            fine.n_elem(),
            2 * coarse.n_elem(),
            "grids are not nested (fine N must be 2× coarse N)"
        );
        InterpQ2 { coarse, fine }
    }

    pub fn apply(&self, coarse: &[f64], fine: &mut [f64], ctr: &mut Counters) {
        let cf = self.coarse.fine_dim();
        let ff = self.fine.fine_dim();
        assert_eq!(coarse.len(), cf * cf, "grid mismatch");
        assert_eq!(fine.len(), ff * ff, "grid mismatch");
        let mut nnz = 0u64;
        for fj in 0..ff {
            let (wy_pos, wy, ny) = q2_weights_1d(fj);
            for fi in 0..ff {
                let (wx_pos, wx, nx) = q2_weights_1d(fi);
                let mut acc = 0.0;
                for jy in 0..ny {
                    for jx in 0..nx {
                        acc += wy[jy] * wx[jx] * coarse[wy_pos[jy] * cf + wx_pos[jx]];
                    }
                }
                fine[fj * ff + fi] = acc;
                nnz += (nx * ny) as u64;
            }
        }
        ctr.record(
            Kernel::Interpolate,
            nnz + coarse.len() as u64,
            fine.len() as u64,
            nnz,
        );
    }

    /// coarse = Pᵀ·fine (restriction); deterministic ascending scatter order.
    pub fn apply_transpose(&self, fine: &[f64], coarse: &mut [f64], ctr: &mut Counters) {
        let cf = self.coarse.fine_dim();
        let ff = self.fine.fine_dim();
        assert_eq!(coarse.len(), cf * cf, "grid mismatch");
        assert_eq!(fine.len(), ff * ff, "grid mismatch");
        coarse.iter_mut().for_each(|v| *v = 0.0);
        let mut nnz = 0u64;
        for fj in 0..ff {
            let (wy_pos, wy, ny) = q2_weights_1d(fj);
            for fi in 0..ff {
                let (wx_pos, wx, nx) = q2_weights_1d(fi);
                let fv = fine[fj * ff + fi];
                for jy in 0..ny {
                    for jx in 0..nx {
                        coarse[wy_pos[jy] * cf + wx_pos[jx]] += wy[jy] * wx[jx] * fv;
                    }
                }
                nnz += (nx * ny) as u64;
            }
        }
        ctr.record(
            Kernel::Restrict,
            nnz + fine.len() as u64,
            coarse.len() as u64,
            nnz,
        );
    }
}

/// Bilinear interpolation between nested pressure (Q1) spaces.
#[derive(Clone, Copy, Debug)]
pub struct InterpQ1 {
    coarse: StructuredGrid,
    fine: StructuredGrid,
}

impl InterpQ1 {
    pub fn new(coarse: StructuredGrid, fine: StructuredGrid) -> Self {
        assert_eq!(
            fine.n_elem(),
            2 * coarse.n_elem(),
            "grids are not nested (fine N must be 2× coarse N)"
        );
        InterpQ1 { coarse, fine }
    }

    pub fn apply(&self, coarse: &[f64], fine: &mut [f64], ctr: &mut Counters) {
        let cn = self.coarse.n_elem() + 1;
        let fnodes = self.fine.n_elem() + 1;
        assert_eq!(coarse.len(), cn * cn, "grid mismatch");
        assert_eq!(fine.len(), fnodes * fnodes, "grid mismatch");
        let mut nnz = 0u64;
        for fj in 0..fnodes {
            let (wy_pos, wy, ny) = q1_weights_1d(fj);
            for fi in 0..fnodes {
                let (wx_pos, wx, nx) = q1_weights_1d(fi);
                let mut acc = 0.0;
                for jy in 0..ny {
                    for jx in 0..nx {
                        acc += wy[jy] * wx[jx] * coarse[wy_pos[jy] * cn + wx_pos[jx]];
                    }
                }
                fine[fj * fnodes + fi] = acc;
                nnz += (nx * ny) as u64;
            }
        }
        ctr.record(
            Kernel::Interpolate,
            nnz + coarse.len() as u64,
            fine.len() as u64,
            nnz,
        );
    }

    pub fn apply_transpose(&self, fine: &[f64], coarse: &mut [f64], ctr: &mut Counters) {
        let cn = self.coarse.n_elem() + 1;
        let fnodes = self.fine.n_elem() + 1;
        assert_eq!(coarse.len(), cn * cn, "grid mismatch");
        assert_eq!(fine.len(), fnodes * fnodes, "grid mismatch");
        coarse.iter_mut().for_each(|v| *v = 0.0);
        let mut nnz = 0u64;
        for fj in 0..fnodes {
            let (wy_pos, wy, ny) = q1_weights_1d(fj);
            for fi in 0..fnodes {
                let (wx_pos, wx, nx) = q1_weights_1d(fi);
                let fv = fine[fj * fnodes + fi];
                for jy in 0..ny {
                    for jx in 0..nx {
                        coarse[wy_pos[jy] * cn + wx_pos[jx]] += wy[jy] * wx[jx] * fv;
                    }
                }
                nnz += (nx * ny) as u64;
            }
        }
        ctr.record(
            Kernel::Restrict,
            nnz + fine.len() as u64,
            coarse.len() as u64,
            nnz,
        );
    }
}

/// Block-diagonal interpolation over (u_x, u_y, p).
#[derive(Clone, Copy, Debug)]
pub struct BlockInterp {
    pub q2: InterpQ2,
    pub q1: InterpQ1,
    coarse: StructuredGrid,
}

/// Interpolation from `coarse` to `fine = 2×coarse`; restriction is its
/// exact transpose.
pub fn build_interpolation(coarse: &StructuredGrid, fine: &StructuredGrid) -> BlockInterp {
    BlockInterp {
        q2: InterpQ2::new(*coarse, *fine),
        q1: InterpQ1::new(*coarse, *fine),
        coarse: *coarse,
    }
}

impl BlockInterp {
    pub fn prolong_into(&self, coarse: &BlockVector, fine: &mut BlockVector, ctr: &mut Counters) {
        self.q2.apply(&coarse.ux, &mut fine.ux, ctr);
        self.q2.apply(&coarse.uy, &mut fine.uy, ctr);
        self.q1.apply(&coarse.p, &mut fine.p, ctr);
    }

    /// Restriction; optionally zeroes the restricted velocity residual at
    /// coarse Dirichlet rows (their coarse equations are identity rows).
    pub fn restrict_into(
        &self,
        fine: &BlockVector,
        coarse: &mut BlockVector,
        zero_dirichlet_velocity: bool,
        ctr: &mut Counters,
    ) {
        self.q2.apply_transpose(&fine.ux, &mut coarse.ux, ctr);
        self.q2.apply_transpose(&fine.uy, &mut coarse.uy, ctr);
        self.q1.apply_transpose(&fine.p, &mut coarse.p, ctr);
        if zero_dirichlet_velocity {
            let g = self.coarse;
            let f = g.fine_dim();
            for fj in 0..f {
                for fi in 0..f {
                    if g.fine_on_boundary(fi, fj) {
                        coarse.ux[g.fine_index(fi, fj)] = 0.0;
                        coarse.uy[g.fine_index(fi, fj)] = 0.0;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DofClass;
    use approx::assert_abs_diff_eq;

    #[test]
    fn q2_basis_lagrange_property() {
        let nodes_1d = [-1.0, 0.0, 1.0];
        for idx in 0..9 {
            for b in 0..3 {
                for a in 0..3 {
                    let (v, _, _) =
                        reference_basis(BasisKind::Q2, idx, nodes_1d[a], nodes_1d[b]);
                    let expect = if idx == b * 3 + a { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(v, expect, epsilon = 1e-14);
                }
            }
        }
        let (center, _, _) = reference_basis(BasisKind::Q2, 4, 0.0, 0.0);
        assert_eq!(center, 1.0);
    }

    #[test]
    fn q1_partition_of_unity() {
        for &(xi, eta) in &[(0.3, -0.7), (-0.2, 0.9), (0.0, 0.0)] {
            let sum: f64 = (0..4)
                .map(|k| reference_basis(BasisKind::Q1, k, xi, eta).0)
                .sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
            let sum2: f64 = (0..9)
                .map(|k| reference_basis(BasisKind::Q2, k, xi, eta).0)
                .sum();
            assert_abs_diff_eq!(sum2, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn basis_rejects_bad_index() {
        reference_basis(BasisKind::Q2, 9, 0.0, 0.0);
    }

    #[test]
    fn manufactured_values() {
        // Normal trace vanishes on the whole boundary; the x-component also
        // vanishes on x ∈ {0, 1} through its polynomial factor.
        for y in [0.0, 0.3, 1.0] {
            let (ux0, _, _) = manufactured_solution(0.0, y);
            let (ux1, _, _) = manufactured_solution(1.0, y);
            assert_eq!(ux0, 0.0);
            assert_eq!(ux1, 0.0);
        }
        for x in [0.0, 0.41, 1.0] {
            let (_, uy0, _) = manufactured_solution(x, 0.0);
            let (_, uy1, _) = manufactured_solution(x, 1.0);
            assert_eq!(uy0, 0.0);
            assert_eq!(uy1, 0.0);
        }
        let (_, _, p) = manufactured_solution(1.0, 1.0);
        assert_abs_diff_eq!(p, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn manufactured_divergence_free() {
        // ∂x u_x = −q(x)q(y) and ∂y u_y = +q(x)q(y) cancel; check by central
        // differences at an interior point.
        let (x, y) = (0.37, 0.61);
        let d = 1e-6;
        let dudx = (manufactured_solution(x + d, y).0 - manufactured_solution(x - d, y).0)
            / (2.0 * d);
        let dvdy = (manufactured_solution(x, y + d).1 - manufactured_solution(x, y - d).1)
            / (2.0 * d);
        assert_abs_diff_eq!(dudx + dvdy, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn forcing_matches_finite_differences() {
        let nu = 1.3;
        for &(x, y) in &[(0.3, 0.4), (0.62, 0.17), (0.5, 0.5)] {
            let d = 1e-4;
            let lap = |comp: usize| {
                let u = |x: f64, y: f64| {
                    let s = manufactured_solution(x, y);
                    if comp == 0 {
                        s.0
                    } else {
                        s.1
                    }
                };
                (u(x + d, y) + u(x - d, y) + u(x, y + d) + u(x, y - d) - 4.0 * u(x, y)) / (d * d)
            };
            let grad_p = |comp: usize| {
                let p = |x: f64, y: f64| manufactured_solution(x, y).2;
                if comp == 0 {
                    (p(x + d, y) - p(x - d, y)) / (2.0 * d)
                } else {
                    (p(x, y + d) - p(x, y - d)) / (2.0 * d)
                }
            };
            let (fx, fy) = manufactured_forcing(nu, x, y);
            assert_abs_diff_eq!(fx, -nu * lap(0) + grad_p(0), epsilon = 1e-5);
            assert_abs_diff_eq!(fy, -nu * lap(1) + grad_p(1), epsilon = 1e-5);
        }
    }

    #[test]
    fn raw_laplacian_rows_sum_to_zero() {
        let grid = StructuredGrid::new(4);
        let ops = assemble_operators_raw(&grid, 1.0);
        let f = grid.fine_dim();
        for fj in 0..f {
            for fi in 0..f {
                let sum: f64 = ops.l.row(fi, fj).iter().sum();
                assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mass_matrix_integrates_domain_area() {
        let grid = StructuredGrid::new(4);
        let ops = assemble_operators_raw(&grid, 1.0);
        let mut total = 0.0;
        ops.m.for_each_stored(|_, _, v| total += v);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stiffness_scales_with_viscosity() {
        let grid = StructuredGrid::new(2);
        let a = assemble_operators_raw(&grid, 1.0);
        let b = assemble_operators_raw(&grid, 2.5);
        assert_abs_diff_eq!(
            b.l.entry(2, 2, offset_slot(DofClass::Node, 0, 0).unwrap()),
            2.5 * a.l.entry(2, 2, offset_slot(DofClass::Node, 0, 0).unwrap()),
            epsilon = 1e-13
        );
        // B scales like h, M like h²: compare across grid sizes.
        let fine = assemble_operators_raw(&StructuredGrid::new(4), 1.0);
        assert_abs_diff_eq!(
            fine.b.entry(2, 2, 0, 1, 0),
            0.5 * a.b.entry(1, 1, 0, 1, 0),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            fine.m.entry(2, 2, 0, 0),
            0.25 * a.m.entry(1, 1, 0, 0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn raw_rhs_pressure_block_is_zero() {
        let grid = StructuredGrid::new(3);
        let rhs = assemble_rhs_raw(&grid, 1.0);
        assert!(rhs.p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_rows_carry_boundary_values() {
        let grid = StructuredGrid::new(4);
        let (ops, rhs) = assemble_problem(&grid, 1.0);
        // Corner row is an identity row with the manufactured value.
        let idx = grid.fine_index(0, 0);
        let (ux, uy, _) = manufactured_solution(0.0, 0.0);
        assert_eq!(rhs.ux[idx], ux);
        assert_eq!(rhs.uy[idx], uy);
        assert_eq!(ops.l.entry(0, 0, offset_slot(DofClass::Node, 0, 0).unwrap()), 1.0);
        // Off-diagonals of the boundary row are gone.
        assert_eq!(ops.l.row(0, 0).iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn interpolation_weights() {
        let coarse = StructuredGrid::new(2);
        let fine = StructuredGrid::new(4);
        let interp = build_interpolation(&coarse, &fine);
        let mut ctr = Counters::new();

        // Fine DOF coincident with a coarse DOF: single weight 1.
        let mut c = vec![0.0; coarse.n_vel_per_comp()];
        c[coarse.fine_index(2, 2)] = 1.0;
        let mut f = vec![0.0; fine.n_vel_per_comp()];
        interp.q2.apply(&c, &mut f, &mut ctr);
        assert_eq!(f[fine.fine_index(4, 4)], 1.0);

        // Q1 fine node at a coarse cell center: four weights 1/4.
        let mut cp = vec![0.0; coarse.n_pressure()];
        cp[coarse.node_index(0, 0)] = 1.0;
        let mut fp = vec![0.0; fine.n_pressure()];
        interp.q1.apply(&cp, &mut fp, &mut ctr);
        assert_eq!(fp[fine.node_index(1, 1)], 0.25);
        assert_eq!(fp[fine.node_index(0, 0)], 1.0);
        assert_eq!(fp[fine.node_index(1, 0)], 0.5);
    }

    #[test]
    fn q2_interpolation_exact_on_quadratics() {
        let coarse = StructuredGrid::new(4);
        let fine = StructuredGrid::new(8);
        let interp = build_interpolation(&coarse, &fine);
        let field = |x: f64, y: f64| 3.0 * x * x - 2.0 * x * y + y + 1.0;

        let sample = |g: &StructuredGrid| -> Vec<f64> {
            let mut v = vec![0.0; g.n_vel_per_comp()];
            for fj in 0..g.fine_dim() {
                for fi in 0..g.fine_dim() {
                    let (x, y) = g.fine_coords(fi, fj);
                    v[g.fine_index(fi, fj)] = field(x, y);
                }
            }
            v
        };
        let c = sample(&coarse);
        let expect = sample(&fine);
        let mut f = vec![0.0; fine.n_vel_per_comp()];
        interp.q2.apply(&c, &mut f, &mut Counters::new());
        for k in 0..f.len() {
            assert_abs_diff_eq!(f[k], expect[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn restriction_is_transpose_of_interpolation() {
        let coarse = StructuredGrid::new(2);
        let fine = StructuredGrid::new(4);
        let interp = build_interpolation(&coarse, &fine);
        let mut ctr = Counters::new();
        // ⟨P c, f⟩ = ⟨c, Pᵀ f⟩ on pseudo-random vectors.
        let c: Vec<f64> = (0..coarse.n_vel_per_comp())
            .map(|k| ((k * 2654435761) % 1000) as f64 / 999.0 - 0.5)
            .collect();
        let fvec: Vec<f64> = (0..fine.n_vel_per_comp())
            .map(|k| ((k * 40503) % 1000) as f64 / 999.0 - 0.5)
            .collect();
        let mut pc = vec![0.0; fine.n_vel_per_comp()];
        interp.q2.apply(&c, &mut pc, &mut ctr);
        let mut ptf = vec![0.0; coarse.n_vel_per_comp()];
        interp.q2.apply_transpose(&fvec, &mut ptf, &mut ctr);
        let lhs: f64 = pc.iter().zip(&fvec).map(|(a, b)| a * b).sum();
        let rhs: f64 = c.iter().zip(&ptf).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }
}
