//! Shared oracle helpers for the integration suites: an independently coded
//! dense assembly of the Q2-Q1 Stokes system (different quadrature order and
//! basis evaluation), dense solves for singular saddle systems, and seeded
//! random vectors.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use stokeslab::assembly::{manufactured_forcing, manufactured_solution};
use stokeslab::mesh::StructuredGrid;
use stokeslab::vector::BlockVector;

/// 4-point Gauss-Legendre rule (higher order than the assembly path's 3).
const GAUSS4: [(f64, f64); 4] = [
    (-0.8611363115940526, 0.3478548451374538),
    (-0.3399810435848563, 0.6521451548625461),
    (0.3399810435848563, 0.6521451548625461),
    (0.8611363115940526, 0.3478548451374538),
];

/// Generic 1D Lagrange basis from an explicit node list (independent of the
/// hardcoded polynomials in the main path).
fn lagrange(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut v = 1.0;
    for (j, &xj) in nodes.iter().enumerate() {
        if j != i {
            v *= (x - xj) / (nodes[i] - xj);
        }
    }
    v
}

fn lagrange_deriv(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut sum = 0.0;
    for (k, &xk) in nodes.iter().enumerate() {
        if k == i {
            continue;
        }
        let mut term = 1.0 / (nodes[i] - xk);
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i && j != k {
                term *= (x - xj) / (nodes[i] - xj);
            }
        }
        sum += term;
    }
    sum
}

const Q2_NODES: [f64; 3] = [-1.0, 0.0, 1.0];
const Q1_NODES: [f64; 2] = [-1.0, 1.0];

fn q2_val(idx: usize, xi: f64, eta: f64) -> f64 {
    lagrange(&Q2_NODES, idx % 3, xi) * lagrange(&Q2_NODES, idx / 3, eta)
}

fn q2_grad(idx: usize, xi: f64, eta: f64) -> (f64, f64) {
    (
        lagrange_deriv(&Q2_NODES, idx % 3, xi) * lagrange(&Q2_NODES, idx / 3, eta),
        lagrange(&Q2_NODES, idx % 3, xi) * lagrange_deriv(&Q2_NODES, idx / 3, eta),
    )
}

fn q1_val(idx: usize, xi: f64, eta: f64) -> f64 {
    lagrange(&Q1_NODES, idx % 2, xi) * lagrange(&Q1_NODES, idx / 2, eta)
}

/// Dense raw operators: component Laplacian (n×n), divergence (m×2n, the
/// −∫q∇·v convention), pressure mass (m×m), and the velocity moment vector
/// of the manufactured forcing.
pub struct DenseRaw {
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub rhs_u: DVector<f64>,
}

pub fn assemble_dense_raw(grid: &StructuredGrid, nu: f64) -> DenseRaw {
    let n_elem = grid.n_elem();
    let h = grid.h();
    let n = grid.n_vel_per_comp();
    let m = grid.n_pressure();
    let mut l = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(m, 2 * n);
    let mut mm = DMatrix::zeros(m, m);
    let mut rhs_u = DVector::zeros(2 * n);

    for ey in 0..n_elem {
        for ex in 0..n_elem {
            let q2_glob: Vec<usize> = (0..9)
                .map(|a| grid.fine_index(2 * ex + a % 3, 2 * ey + a / 3))
                .collect();
            let q1_glob: Vec<usize> = (0..4)
                .map(|k| grid.node_index(ex + k % 2, ey + k / 2))
                .collect();
            for &(eta, wy) in &GAUSS4 {
                for &(xi, wx) in &GAUSS4 {
                    let w = wx * wy;
                    let x = (ex as f64 + 0.5 * (xi + 1.0)) * h;
                    let y = (ey as f64 + 0.5 * (eta + 1.0)) * h;
                    let (fx, fy) = manufactured_forcing(nu, x, y);
                    for r in 0..9 {
                        let (grx, gry) = q2_grad(r, xi, eta);
                        let vr = q2_val(r, xi, eta);
                        for c in 0..9 {
                            let (gcx, gcy) = q2_grad(c, xi, eta);
                            l[(q2_glob[r], q2_glob[c])] += nu * w * (grx * gcx + gry * gcy);
                        }
                        rhs_u[q2_glob[r]] += 0.25 * h * h * w * fx * vr;
                        rhs_u[n + q2_glob[r]] += 0.25 * h * h * w * fy * vr;
                    }
                    for k in 0..4 {
                        let qk = q1_val(k, xi, eta);
                        for c in 0..9 {
                            let (gcx, gcy) = q2_grad(c, xi, eta);
                            b[(q1_glob[k], q2_glob[c])] -= 0.5 * h * w * qk * gcx;
                            b[(q1_glob[k], n + q2_glob[c])] -= 0.5 * h * w * qk * gcy;
                        }
                        for k2 in 0..4 {
                            mm[(q1_glob[k], q1_glob[k2])] +=
                                0.25 * h * h * w * q1_val(k2, xi, eta) * qk;
                        }
                    }
                }
            }
        }
    }
    DenseRaw {
        l,
        b,
        m: mm,
        rhs_u,
    }
}

/// Dense boundary-treated system: full monolithic matrix with identity
/// Dirichlet rows/columns and the compensated right-hand side, in the flat
/// (u_x, u_y, p) ordering.
pub struct DenseSystem {
    pub a: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

pub fn assemble_dense_system(grid: &StructuredGrid, nu: f64) -> DenseSystem {
    let raw = assemble_dense_raw(grid, nu);
    let n = grid.n_vel_per_comp();
    let m = grid.n_pressure();
    let f = grid.fine_dim();

    let mut l = raw.l.clone();
    let mut b = raw.b.clone();
    let mut rhs = DVector::zeros(2 * n + m);
    for k in 0..2 * n {
        rhs[k] = raw.rhs_u[k];
    }

    // Boundary values of the manufactured solution on the fine lattice.
    let mut bdry = Vec::new();
    for fj in 0..f {
        for fi in 0..f {
            if grid.fine_on_boundary(fi, fj) {
                let (x, y) = grid.fine_coords(fi, fj);
                let (ux, uy, _) = manufactured_solution(x, y);
                bdry.push((grid.fine_index(fi, fj), ux, uy));
            }
        }
    }

    // Column compensation, then identity rows.
    for &(s, vx, vy) in &bdry {
        for r in 0..n {
            if l[(r, s)] != 0.0 {
                rhs[r] -= l[(r, s)] * vx;
                rhs[n + r] -= l[(r, s)] * vy;
            }
        }
        for k in 0..m {
            rhs[2 * n + k] -= b[(k, s)] * vx + b[(k, n + s)] * vy;
            b[(k, s)] = 0.0;
            b[(k, n + s)] = 0.0;
        }
        for r in 0..n {
            l[(r, s)] = 0.0;
        }
    }
    for &(s, vx, vy) in &bdry {
        for c in 0..n {
            l[(s, c)] = 0.0;
        }
        l[(s, s)] = 1.0;
        rhs[s] = vx;
        rhs[n + s] = vy;
    }

    let mut a = DMatrix::zeros(2 * n + m, 2 * n + m);
    a.view_mut((0, 0), (n, n)).copy_from(&l);
    a.view_mut((n, n), (n, n)).copy_from(&l);
    a.view_mut((2 * n, 0), (m, 2 * n)).copy_from(&b);
    a.view_mut((0, 2 * n), (2 * n, m)).copy_from(&b.transpose());
    DenseSystem {
        a,
        rhs,
        l,
        b,
        m: raw.m,
    }
}

/// Solves the singular saddle system by pinning the last pressure DOF to
/// zero, then removing the pressure mean (a second, independent route to a
/// particular solution).
pub fn solve_pinned(a: &DMatrix<f64>, rhs: &DVector<f64>, n2: usize, m: usize) -> DVector<f64> {
    let mut ap = a.clone();
    let mut bp = rhs.clone();
    let pin = n2 + m - 1;
    for c in 0..n2 + m {
        ap[(pin, c)] = 0.0;
        ap[(c, pin)] = 0.0;
    }
    ap[(pin, pin)] = 1.0;
    bp[pin] = 0.0;
    let mut x = ap.lu().solve(&bp).expect("pinned system is nonsingular");
    let mean = x.rows(n2, m).sum() / m as f64;
    for k in 0..m {
        x[n2 + k] -= mean;
    }
    x
}

pub fn seeded_block_vector(grid: &StructuredGrid, seed: u64) -> BlockVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = BlockVector::zeros(grid);
    v.ux.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    v.uy.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    v.p.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    v
}

pub fn seeded_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
        / scale
}

/// Mean-free copy of the pressure block of a flat vector.
pub fn remove_pressure_mean_flat(x: &mut DVector<f64>, n2: usize, m: usize) {
    let mean = x.rows(n2, m).sum() / m as f64;
    for k in 0..m {
        x[n2 + k] -= mean;
    }
}
