//! Instrumented array kernels and the concatenated (u_x, u_y, p) coefficient
//! vector.
//!
//! Counter conventions per call on arrays of length `len`:
//! add/sub: reads 2·len, writes len, flops len. scale: len for all three.
//! These match the theoretical cost table at block-vector length 2n+m.

use crate::counters::{Counters, Kernel};
use crate::mesh::StructuredGrid;

fn check_len(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len(), "array length mismatch");
}

/// out = a + b.
pub fn add(out: &mut [f64], a: &[f64], b: &[f64], ctr: &mut Counters) {
    check_len(a, b);
    check_len(out, a);
    for i in 0..out.len() {
        out[i] = a[i] + b[i];
    }
    let len = out.len() as u64;
    ctr.record(Kernel::ArrayAddSub, 2 * len, len, len);
}

/// out = a - b.
pub fn sub(out: &mut [f64], a: &[f64], b: &[f64], ctr: &mut Counters) {
    check_len(a, b);
    check_len(out, a);
    for i in 0..out.len() {
        out[i] = a[i] - b[i];
    }
    let len = out.len() as u64;
    ctr.record(Kernel::ArrayAddSub, 2 * len, len, len);
}

/// x *= alpha.
pub fn scale(x: &mut [f64], alpha: f64, ctr: &mut Counters) {
    for v in x.iter_mut() {
        *v *= alpha;
    }
    let len = x.len() as u64;
    ctr.record(Kernel::ArrayScale, len, len, len);
}

/// out += a (in-place array plus array).
pub fn add_assign(out: &mut [f64], a: &[f64], ctr: &mut Counters) {
    check_len(out, a);
    for i in 0..out.len() {
        out[i] += a[i];
    }
    let len = out.len() as u64;
    ctr.record(Kernel::ArrayAddSub, 2 * len, len, len);
}

/// out = a ⊙ b (elementwise).
pub fn pointwise_mul(out: &mut [f64], a: &[f64], b: &[f64], ctr: &mut Counters) {
    check_len(a, b);
    check_len(out, a);
    for i in 0..out.len() {
        out[i] = a[i] * b[i];
    }
    let len = out.len() as u64;
    ctr.record(Kernel::PointwiseMul, 2 * len, len, len);
}

/// y += alpha * x.
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64], ctr: &mut Counters) {
    check_len(y, x);
    for i in 0..y.len() {
        y[i] += alpha * x[i];
    }
    let len = y.len() as u64;
    ctr.record(Kernel::Axpy, 2 * len, len, 2 * len);
}

pub fn dot(a: &[f64], b: &[f64], ctr: &mut Counters) -> f64 {
    check_len(a, b);
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    let len = a.len() as u64;
    ctr.record(Kernel::Dot, 2 * len, 0, 2 * len);
    s
}

pub fn norm2(a: &[f64], ctr: &mut Counters) -> f64 {
    dot(a, a, ctr).sqrt()
}

/// Concatenated (u_x, u_y, p) coefficient vector. Both velocity components
/// live on the fine lattice of length (2N+1)²; pressure on the node lattice
/// of length (N+1)².
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub p: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(grid: &StructuredGrid) -> Self {
        BlockVector {
            ux: vec![0.0; grid.n_vel_per_comp()],
            uy: vec![0.0; grid.n_vel_per_comp()],
            p: vec![0.0; grid.n_pressure()],
        }
    }

    pub fn zeros_like(other: &BlockVector) -> Self {
        BlockVector {
            ux: vec![0.0; other.ux.len()],
            uy: vec![0.0; other.uy.len()],
            p: vec![0.0; other.p.len()],
        }
    }

    /// Total length 2n + m.
    pub fn len(&self) -> usize {
        self.ux.len() + self.uy.len() + self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, v: f64) {
        self.ux.iter_mut().for_each(|x| *x = v);
        self.uy.iter_mut().for_each(|x| *x = v);
        self.p.iter_mut().for_each(|x| *x = v);
    }

    pub fn add(out: &mut BlockVector, a: &BlockVector, b: &BlockVector, ctr: &mut Counters) {
        add(&mut out.ux, &a.ux, &b.ux, ctr);
        add(&mut out.uy, &a.uy, &b.uy, ctr);
        add(&mut out.p, &a.p, &b.p, ctr);
    }

    pub fn sub(out: &mut BlockVector, a: &BlockVector, b: &BlockVector, ctr: &mut Counters) {
        sub(&mut out.ux, &a.ux, &b.ux, ctr);
        sub(&mut out.uy, &a.uy, &b.uy, ctr);
        sub(&mut out.p, &a.p, &b.p, ctr);
    }

    pub fn scale(&mut self, alpha: f64, ctr: &mut Counters) {
        scale(&mut self.ux, alpha, ctr);
        scale(&mut self.uy, alpha, ctr);
        scale(&mut self.p, alpha, ctr);
    }

    pub fn axpy(&mut self, alpha: f64, x: &BlockVector, ctr: &mut Counters) {
        axpy(&mut self.ux, alpha, &x.ux, ctr);
        axpy(&mut self.uy, alpha, &x.uy, ctr);
        axpy(&mut self.p, alpha, &x.p, ctr);
    }

    pub fn dot(a: &BlockVector, b: &BlockVector, ctr: &mut Counters) -> f64 {
        dot(&a.ux, &b.ux, ctr) + dot(&a.uy, &b.uy, ctr) + dot(&a.p, &b.p, ctr)
    }

    pub fn norm2(&self, ctr: &mut Counters) -> f64 {
        BlockVector::dot(self, self, ctr).sqrt()
    }

    /// Subtracts the mean of the pressure block (quotient-space projection).
    pub fn remove_pressure_mean(&mut self, ctr: &mut Counters) {
        let m = self.p.len() as u64;
        let mean: f64 = self.p.iter().sum::<f64>() / self.p.len() as f64;
        for v in self.p.iter_mut() {
            *v -= mean;
        }
        ctr.record(Kernel::Dot, m, 0, m);
        ctr.record(Kernel::ArrayAddSub, m, m, m);
    }

    /// Copies all coefficients into one flat vector (u_x, u_y, p order).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.ux);
        v.extend_from_slice(&self.uy);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_flat(grid: &StructuredGrid, flat: &[f64]) -> Self {
        let n = grid.n_vel_per_comp();
        let m = grid.n_pressure();
        assert_eq!(flat.len(), 2 * n + m, "flat vector length mismatch");
        BlockVector {
            ux: flat[..n].to_vec(),
            uy: flat[n..2 * n].to_vec(),
            p: flat[2 * n..].to_vec(),
        }
    }
}
