//! Structured matrix containers stored as per-row fixed-pattern neighbor
//! coefficient arrays, plus the instrumented matvec kernels.
//!
//! Each Q2 row stores exactly the coefficients of its class pattern (25 for
//! node rows, 15 for edge rows, 9 for center rows); pattern positions that
//! fall outside the lattice hold exact zeros. Entry `k` of a row multiplies
//! the vector value at the `k`-th point of the canonical local numbering
//! around that row. No column indices are stored; the lattice structure
//! encodes them.
//!
//! Matvec counter convention: `flops += nnz`, `reads += nnz + len(x)`,
//! `writes += len(y)`, with nnz the stored entry count (boundary zeros
//! included; the kernels are branch-free over the stored pattern).

use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::counters::{Counters, Kernel};
use crate::mesh::{class_offsets, class_stencil_width, offset_slot, DofClass, StructuredGrid};
use crate::vector::BlockVector;

const Q2_CLASSES: [DofClass; 4] = [
    DofClass::Node,
    DofClass::XEdge,
    DofClass::YEdge,
    DofClass::Center,
];

/// Q2 → Q2 stencil matrix (the discrete vector Laplacian acts with the same
/// scalar stencil on each velocity component).
#[derive(Clone, Debug)]
pub struct StencilQ2Q2 {
    n_elem: usize,
    fine_dim: usize,
    planes: [Vec<f64>; 4],
}

fn class_id(class: DofClass) -> usize {
    match class {
        DofClass::Node => 0,
        DofClass::XEdge => 1,
        DofClass::YEdge => 2,
        DofClass::Center => 3,
        DofClass::Pressure => panic!("pressure is not a Q2 class"),
    }
}

impl StencilQ2Q2 {
    pub fn zeros(grid: &StructuredGrid) -> Self {
        let planes = [
            vec![0.0; DofClass::Node.count(grid) * 25],
            vec![0.0; DofClass::XEdge.count(grid) * 15],
            vec![0.0; DofClass::YEdge.count(grid) * 15],
            vec![0.0; DofClass::Center.count(grid) * 9],
        ];
        StencilQ2Q2 {
            n_elem: grid.n_elem(),
            fine_dim: grid.fine_dim(),
            planes,
        }
    }

    pub fn n_elem(&self) -> usize {
        self.n_elem
    }

    /// Identity stencil: center coefficient 1, everything else 0.
    pub fn identity(grid: &StructuredGrid) -> Self {
        let mut s = Self::zeros(grid);
        let f = grid.fine_dim();
        for fj in 0..f {
            for fi in 0..f {
                let class = crate::mesh::DofIndex::from_fine_point(fi, fj).class;
                let slot = offset_slot(class, 0, 0).unwrap();
                *s.entry_mut(fi, fj, slot) = 1.0;
            }
        }
        s
    }

    fn grid(&self) -> StructuredGrid {
        StructuredGrid::new(self.n_elem)
    }

    fn row_start(&self, fi: usize, fj: usize) -> (usize, usize, DofClass) {
        let d = crate::mesh::DofIndex::from_fine_point(fi, fj);
        let grid = self.grid();
        let width = class_stencil_width(d.class);
        (class_id(d.class), d.flat(&grid) * width, d.class)
    }

    /// Mutable stencil slot of the row at fine point (fi, fj).
    pub fn entry_mut(&mut self, fi: usize, fj: usize, slot: usize) -> &mut f64 {
        let (cid, start, class) = self.row_start(fi, fj);
        debug_assert!(slot < class_stencil_width(class));
        &mut self.planes[cid][start + slot]
    }

    pub fn entry(&self, fi: usize, fj: usize, slot: usize) -> f64 {
        let (cid, start, class) = self.row_start(fi, fj);
        debug_assert!(slot < class_stencil_width(class));
        self.planes[cid][start + slot]
    }

    /// Coefficient coupling row (ri, rj) to column (ci, cj); zero if the
    /// column is outside the row's pattern.
    pub fn coeff(&self, ri: usize, rj: usize, ci: usize, cj: usize) -> f64 {
        let class = crate::mesh::DofIndex::from_fine_point(ri, rj).class;
        match offset_slot(class, ci as isize - ri as isize, cj as isize - rj as isize) {
            Some(slot) => self.entry(ri, rj, slot),
            None => 0.0,
        }
    }

    /// Full row of the fine point: mutable slice over its pattern slots.
    pub fn row_mut(&mut self, fi: usize, fj: usize) -> &mut [f64] {
        let (cid, start, class) = self.row_start(fi, fj);
        let width = class_stencil_width(class);
        &mut self.planes[cid][start..start + width]
    }

    pub fn row(&self, fi: usize, fj: usize) -> &[f64] {
        let (cid, start, class) = self.row_start(fi, fj);
        let width = class_stencil_width(class);
        &self.planes[cid][start..start + width]
    }

    /// Stored entry count (25/15/15/9 per row by class, boundary zeros
    /// included).
    pub fn nnz_stored(&self) -> u64 {
        self.planes.iter().map(|p| p.len() as u64).sum()
    }

    /// Diagonal over the fine lattice (Dirichlet rows hold 1).
    pub fn diagonal(&self) -> Vec<f64> {
        let f = self.fine_dim;
        let mut d = vec![0.0; f * f];
        for fj in 0..f {
            for fi in 0..f {
                let class = crate::mesh::DofIndex::from_fine_point(fi, fj).class;
                d[fj * f + fi] = self.entry(fi, fj, offset_slot(class, 0, 0).unwrap());
            }
        }
        d
    }

    /// y = A·x for one velocity component, class by class.
    pub fn apply(&self, x: &[f64], y: &mut [f64], ctr: &mut Counters) {
        let f = self.fine_dim;
        assert_eq!(x.len(), f * f, "grid mismatch");
        assert_eq!(y.len(), f * f, "grid mismatch");
        let last = (f - 1) as isize;
        for class in Q2_CLASSES {
            let offsets = class_offsets(class);
            let width = offsets.len();
            let cid = class_id(class);
            let plane = &self.planes[cid];
            let grid = self.grid();
            let (nx, ny) = class.dims(&grid);
            for j in 0..ny {
                for i in 0..nx {
                    let d = crate::mesh::DofIndex::new(class, i, j);
                    let (fi, fj) = d.fine_point();
                    let row = &plane[(j * nx + i) * width..(j * nx + i) * width + width];
                    let mut acc = 0.0;
                    for (k, (dx, dy)) in offsets.iter().enumerate() {
                        let ci = fi as isize + dx;
                        let cj = fj as isize + dy;
                        if ci < 0 || cj < 0 || ci > last || cj > last {
                            continue;
                        }
                        acc += row[k] * x[cj as usize * f + ci as usize];
                    }
                    y[fj * f + fi] = acc;
                }
            }
        }
        let nnz = self.nnz_stored();
        let n = (f * f) as u64;
        ctr.record(Kernel::MatvecQ2Q2, nnz + n, n, nnz);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let f = self.fine_dim;
        let n = f * f;
        let mut a = DMatrix::zeros(n, n);
        self.for_each_stored(|r, c, v| a[(r, c)] += v);
        a
    }

    /// Visits every stored entry whose column is on the lattice, as
    /// (row_flat, col_flat, value) over the fine lattice indexing.
    pub fn for_each_stored(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let f = self.fine_dim;
        let last = (f - 1) as isize;
        let grid = self.grid();
        for class in Q2_CLASSES {
            let offsets = class_offsets(class);
            let width = offsets.len();
            let plane = &self.planes[class_id(class)];
            let (nx, ny) = class.dims(&grid);
            for j in 0..ny {
                for i in 0..nx {
                    let (fi, fj) = crate::mesh::DofIndex::new(class, i, j).fine_point();
                    for (k, (dx, dy)) in offsets.iter().enumerate() {
                        let ci = fi as isize + dx;
                        let cj = fj as isize + dy;
                        if ci < 0 || cj < 0 || ci > last || cj > last {
                            continue;
                        }
                        visit(
                            fj * f + fi,
                            cj as usize * f + ci as usize,
                            plane[(j * nx + i) * width + k],
                        );
                    }
                }
            }
        }
    }

    /// Matrix Market coordinate export (explicit zeros skipped).
    pub fn write_matrix_market<W: Write>(&self, name: &str, w: &mut W) -> io::Result<()> {
        let n = self.fine_dim * self.fine_dim;
        write_mm(w, name, n, n, |visit| {
            self.for_each_stored(|r, c, v| visit(r, c, v))
        })
    }
}

/// Q1 ← Q2 divergence stencil B together with its transpose view. Each
/// pressure row stores 2×25 coefficients against the Q2 DOFs of its
/// surrounding 2×2 element patch (25 per velocity component, canonical
/// order).
#[derive(Clone, Debug)]
pub struct StencilB {
    n_elem: usize,
    fine_dim: usize,
    /// (N+1)² rows of width 50: slots 0..25 couple u_x, 25..50 couple u_y.
    rows: Vec<f64>,
}

impl StencilB {
    pub const WIDTH: usize = 50;

    pub fn zeros(grid: &StructuredGrid) -> Self {
        StencilB {
            n_elem: grid.n_elem(),
            fine_dim: grid.fine_dim(),
            rows: vec![0.0; grid.n_pressure() * Self::WIDTH],
        }
    }

    pub fn n_elem(&self) -> usize {
        self.n_elem
    }

    fn nodes_per_dim(&self) -> usize {
        self.n_elem + 1
    }

    #[inline]
    fn slot(comp: usize, dx: isize, dy: isize) -> usize {
        debug_assert!(dx.abs() <= 2 && dy.abs() <= 2 && comp < 2);
        comp * 25 + ((dy + 2) * 5 + (dx + 2)) as usize
    }

    pub fn entry_mut(&mut self, node_i: usize, node_j: usize, comp: usize, dx: isize, dy: isize) -> &mut f64 {
        let row = node_j * self.nodes_per_dim() + node_i;
        &mut self.rows[row * Self::WIDTH + Self::slot(comp, dx, dy)]
    }

    pub fn entry(&self, node_i: usize, node_j: usize, comp: usize, dx: isize, dy: isize) -> f64 {
        let row = node_j * self.nodes_per_dim() + node_i;
        self.rows[row * Self::WIDTH + Self::slot(comp, dx, dy)]
    }

    /// Coefficient of pressure row (node_i, node_j) against the velocity DOF
    /// at fine point (fi, fj) of component `comp`; zero outside the patch.
    pub fn coeff(&self, node_i: usize, node_j: usize, comp: usize, fi: usize, fj: usize) -> f64 {
        let dx = fi as isize - 2 * node_i as isize;
        let dy = fj as isize - 2 * node_j as isize;
        if dx.abs() > 2 || dy.abs() > 2 {
            return 0.0;
        }
        self.entry(node_i, node_j, comp, dx, dy)
    }

    pub fn nnz_stored(&self) -> u64 {
        self.rows.len() as u64
    }

    /// y_p = B·u (divergence application).
    pub fn apply(&self, ux: &[f64], uy: &[f64], y_p: &mut [f64], ctr: &mut Counters) {
        let f = self.fine_dim;
        assert_eq!(ux.len(), f * f, "grid mismatch");
        assert_eq!(uy.len(), f * f, "grid mismatch");
        let nodes = self.nodes_per_dim();
        assert_eq!(y_p.len(), nodes * nodes, "grid mismatch");
        let last = (f - 1) as isize;
        for nj in 0..nodes {
            for ni in 0..nodes {
                let row = &self.rows[(nj * nodes + ni) * Self::WIDTH..(nj * nodes + ni + 1) * Self::WIDTH];
                let (ci, cj) = (2 * ni as isize, 2 * nj as isize);
                let mut acc = 0.0;
                for dy in -2isize..=2 {
                    for dx in -2isize..=2 {
                        let fi = ci + dx;
                        let fj = cj + dy;
                        if fi < 0 || fj < 0 || fi > last || fj > last {
                            continue;
                        }
                        let v = fj as usize * f + fi as usize;
                        let k = ((dy + 2) * 5 + (dx + 2)) as usize;
                        acc += row[k] * ux[v] + row[25 + k] * uy[v];
                    }
                }
                y_p[nj * nodes + ni] = acc;
            }
        }
        let nnz = self.nnz_stored();
        let n2 = 2 * (f * f) as u64;
        let m = (nodes * nodes) as u64;
        ctr.record(Kernel::MatvecQ2Q1, nnz + n2, m, nnz);
    }

    /// (y_ux, y_uy) = Bᵀ·p (gradient application). Reads the same stored
    /// coefficients through mirrored indexing, so transpose consistency is
    /// exact by construction.
    pub fn apply_transpose(&self, p: &[f64], y_ux: &mut [f64], y_uy: &mut [f64], ctr: &mut Counters) {
        let f = self.fine_dim;
        let nodes = self.nodes_per_dim();
        assert_eq!(p.len(), nodes * nodes, "grid mismatch");
        assert_eq!(y_ux.len(), f * f, "grid mismatch");
        assert_eq!(y_uy.len(), f * f, "grid mismatch");
        for fj in 0..f {
            for fi in 0..f {
                let mut ax = 0.0;
                let mut ay = 0.0;
                // Pressure nodes whose 2×2-element patch contains (fi, fj):
                // |2a - fi| ≤ 2, so a ∈ [⌈(fi-2)/2⌉, ⌊(fi+2)/2⌋].
                let a_min = (fi as isize - 1).div_euclid(2).max(0);
                let a_max = ((fi as isize + 2) / 2).min(nodes as isize - 1);
                let b_min = (fj as isize - 1).div_euclid(2).max(0);
                let b_max = ((fj as isize + 2) / 2).min(nodes as isize - 1);
                for b in b_min..=b_max {
                    for a in a_min..=a_max {
                        let dx = fi as isize - 2 * a;
                        let dy = fj as isize - 2 * b;
                        if dx.abs() > 2 || dy.abs() > 2 {
                            continue;
                        }
                        let row = (b * nodes as isize + a) as usize;
                        let k = ((dy + 2) * 5 + (dx + 2)) as usize;
                        let pv = p[row];
                        ax += self.rows[row * Self::WIDTH + k] * pv;
                        ay += self.rows[row * Self::WIDTH + 25 + k] * pv;
                    }
                }
                y_ux[fj * f + fi] = ax;
                y_uy[fj * f + fi] = ay;
            }
        }
        let nnz = self.nnz_stored();
        let n2 = 2 * (f * f) as u64;
        let m = (nodes * nodes) as u64;
        ctr.record(Kernel::MatvecQ1Q2, nnz + m, n2, nnz);
    }

    /// Dense m × 2n form with columns ordered (u_x block, u_y block).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let f = self.fine_dim;
        let n = f * f;
        let nodes = self.nodes_per_dim();
        let m = nodes * nodes;
        let mut out = DMatrix::zeros(m, 2 * n);
        self.for_each_stored(|r, comp, c, v| out[(r, comp * n + c)] += v);
        out
    }

    /// Visits stored entries as (pressure_row, component, fine_flat, value).
    pub fn for_each_stored(&self, mut visit: impl FnMut(usize, usize, usize, f64)) {
        let f = self.fine_dim;
        let nodes = self.nodes_per_dim();
        let last = (f - 1) as isize;
        for nj in 0..nodes {
            for ni in 0..nodes {
                let row = nj * nodes + ni;
                for dy in -2isize..=2 {
                    for dx in -2isize..=2 {
                        let fi = 2 * ni as isize + dx;
                        let fj = 2 * nj as isize + dy;
                        if fi < 0 || fj < 0 || fi > last || fj > last {
                            continue;
                        }
                        let flat = fj as usize * f + fi as usize;
                        let k = ((dy + 2) * 5 + (dx + 2)) as usize;
                        visit(row, 0, flat, self.rows[row * Self::WIDTH + k]);
                        visit(row, 1, flat, self.rows[row * Self::WIDTH + 25 + k]);
                    }
                }
            }
        }
    }

    pub fn write_matrix_market<W: Write>(&self, name: &str, w: &mut W) -> io::Result<()> {
        let n = self.fine_dim * self.fine_dim;
        let nodes = self.nodes_per_dim();
        write_mm(w, name, nodes * nodes, 2 * n, |visit| {
            self.for_each_stored(|r, comp, c, v| visit(r, comp * n + c, v))
        })
    }
}

/// Q1 → Q1 stencil (pressure mass matrix and Schur-diagonal holders): 9-entry
/// nodal neighbor arrays.
#[derive(Clone, Debug)]
pub struct StencilQ1Q1 {
    n_elem: usize,
    rows: Vec<f64>,
}

impl StencilQ1Q1 {
    pub const WIDTH: usize = 9;

    pub fn zeros(grid: &StructuredGrid) -> Self {
        StencilQ1Q1 {
            n_elem: grid.n_elem(),
            rows: vec![0.0; grid.n_pressure() * Self::WIDTH],
        }
    }

    pub fn n_elem(&self) -> usize {
        self.n_elem
    }

    fn nodes_per_dim(&self) -> usize {
        self.n_elem + 1
    }

    #[inline]
    fn slot(dx: isize, dy: isize) -> usize {
        debug_assert!(dx.abs() <= 1 && dy.abs() <= 1);
        ((dy + 1) * 3 + (dx + 1)) as usize
    }

    pub fn entry_mut(&mut self, i: usize, j: usize, dx: isize, dy: isize) -> &mut f64 {
        let row = j * self.nodes_per_dim() + i;
        &mut self.rows[row * Self::WIDTH + Self::slot(dx, dy)]
    }

    pub fn entry(&self, i: usize, j: usize, dx: isize, dy: isize) -> f64 {
        let row = j * self.nodes_per_dim() + i;
        self.rows[row * Self::WIDTH + Self::slot(dx, dy)]
    }

    pub fn coeff(&self, ri: usize, rj: usize, ci: usize, cj: usize) -> f64 {
        let dx = ci as isize - ri as isize;
        let dy = cj as isize - rj as isize;
        if dx.abs() > 1 || dy.abs() > 1 {
            return 0.0;
        }
        self.entry(ri, rj, dx, dy)
    }

    pub fn nnz_stored(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64], ctr: &mut Counters) {
        let nodes = self.nodes_per_dim();
        assert_eq!(x.len(), nodes * nodes, "grid mismatch");
        assert_eq!(y.len(), nodes * nodes, "grid mismatch");
        let last = nodes as isize - 1;
        for j in 0..nodes {
            for i in 0..nodes {
                let row = &self.rows[(j * nodes + i) * Self::WIDTH..(j * nodes + i + 1) * Self::WIDTH];
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let ci = i as isize + dx;
                        let cj = j as isize + dy;
                        if ci < 0 || cj < 0 || ci > last || cj > last {
                            continue;
                        }
                        acc += row[Self::slot(dx, dy)] * x[cj as usize * nodes + ci as usize];
                    }
                }
                y[j * nodes + i] = acc;
            }
        }
        let nnz = self.nnz_stored();
        let m = (nodes * nodes) as u64;
        ctr.record(Kernel::MatvecQ1Q1, nnz + m, m, nnz);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let nodes = self.nodes_per_dim();
        let mut d = vec![0.0; nodes * nodes];
        for j in 0..nodes {
            for i in 0..nodes {
                d[j * nodes + i] = self.entry(i, j, 0, 0);
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let nodes = self.nodes_per_dim();
        let m = nodes * nodes;
        let mut a = DMatrix::zeros(m, m);
        self.for_each_stored(|r, c, v| a[(r, c)] += v);
        a
    }

    pub fn for_each_stored(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let nodes = self.nodes_per_dim();
        let last = nodes as isize - 1;
        for j in 0..nodes {
            for i in 0..nodes {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let ci = i as isize + dx;
                        let cj = j as isize + dy;
                        if ci < 0 || cj < 0 || ci > last || cj > last {
                            continue;
                        }
                        visit(
                            j * nodes + i,
                            cj as usize * nodes + ci as usize,
                            self.rows[(j * nodes + i) * Self::WIDTH + Self::slot(dx, dy)],
                        );
                    }
                }
            }
        }
    }

    pub fn write_matrix_market<W: Write>(&self, name: &str, w: &mut W) -> io::Result<()> {
        let m = self.nodes_per_dim() * self.nodes_per_dim();
        write_mm(w, name, m, m, |visit| {
            self.for_each_stored(|r, c, v| visit(r, c, v))
        })
    }
}

fn write_mm<W: Write>(
    w: &mut W,
    name: &str,
    nrows: usize,
    ncols: usize,
    for_each: impl Fn(&mut dyn FnMut(usize, usize, f64)),
) -> io::Result<()> {
    let mut entries = Vec::new();
    for_each(&mut |r, c, v| {
        if v != 0.0 {
            entries.push((r, c, v));
        }
    });
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "% {name}")?;
    writeln!(w, "{} {} {}", nrows, ncols, entries.len())?;
    for (r, c, v) in entries {
        writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
    }
    Ok(())
}

/// y = A·x for the monolithic block operator A = [L Bᵀ; B 0].
pub fn apply_stokes(
    l: &StencilQ2Q2,
    b: &StencilB,
    x: &BlockVector,
    y: &mut BlockVector,
    ctr: &mut Counters,
) {
    l.apply(&x.ux, &mut y.ux, ctr);
    l.apply(&x.uy, &mut y.uy, ctr);
    let mut gx = vec![0.0; x.ux.len()];
    let mut gy = vec![0.0; x.uy.len()];
    b.apply_transpose(&x.p, &mut gx, &mut gy, ctr);
    crate::vector::add_assign(&mut y.ux, &gx, ctr);
    crate::vector::add_assign(&mut y.uy, &gy, ctr);
    b.apply(&x.ux, &x.uy, &mut y.p, ctr);
}

/// r = rhs - A·x.
pub fn stokes_residual(
    l: &StencilQ2Q2,
    b: &StencilB,
    rhs: &BlockVector,
    x: &BlockVector,
    r: &mut BlockVector,
    ctr: &mut Counters,
) {
    let mut ax = rhs.clone();
    apply_stokes(l, b, x, &mut ax, ctr);
    BlockVector::sub(r, rhs, &ax, ctr);
}

/// Dense (2n+m)² form of the monolithic operator, flat ordering (u_x, u_y, p).
pub fn stokes_dense(l: &StencilQ2Q2, b: &StencilB) -> DMatrix<f64> {
    let ld = l.to_dense();
    let bd = b.to_dense();
    let n = ld.nrows();
    let m = bd.nrows();
    let mut a = DMatrix::zeros(2 * n + m, 2 * n + m);
    a.view_mut((0, 0), (n, n)).copy_from(&ld);
    a.view_mut((n, n), (n, n)).copy_from(&ld);
    a.view_mut((2 * n, 0), (m, 2 * n)).copy_from(&bd);
    a.view_mut((0, 2 * n), (2 * n, m)).copy_from(&bd.transpose());
    a
}
