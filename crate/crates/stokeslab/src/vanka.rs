//! Additive Vanka relaxation on overlapping 2×2-element patches.
//!
//! One patch per mesh node (boundary nodes included): the single pressure
//! DOF at the node plus all velocity DOFs of the adjacent elements, in
//! canonical order (u_x block, u_y block, pressure last). Patch sizes are 51
//! in the interior, 31 along edges, 19 at corners.
//!
//! On a uniform grid the patch matrices take only 25 distinct values,
//! classified by the per-dimension node category {boundary, distance one
//! from the boundary, generic, distance one, boundary}: Dirichlet
//! modifications reach exactly one node layer past the boundary. Tuned mode
//! stores one dense inverse per group; simple mode stores one per patch.
//! Both modes produce identical sweeps — only the storage strategy differs.

use nalgebra::DMatrix;

use crate::counters::{Counters, Kernel};
use crate::error::{Error, Result};
use crate::mesh::StructuredGrid;
use crate::stencil::{StencilB, StencilQ2Q2};
use crate::vector::BlockVector;

pub const GROUP_COUNT: usize = 25;

/// Full-size interior patch dimension: 2·25 velocity DOFs + 1 pressure DOF.
pub const INTERIOR_PATCH_SIZE: usize = 51;
pub const EDGE_PATCH_SIZE: usize = 31;
pub const CORNER_PATCH_SIZE: usize = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum VankaMode {
    /// One stored inverse per patch group (25 total, independent of N).
    Tuned,
    /// One stored inverse per patch ((N+1)² total).
    Simple,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum VankaWeighting {
    /// W_i = ω·I on every patch.
    Scalar,
    /// W_i = ω·diag(1/multiplicity): each DOF update divided by the number
    /// of patches containing it.
    Overlap,
    /// W_i = ω·diag(hat): bilinear hat functions centered at the patch
    /// node, a partition of unity that downweights patch-border DOFs.
    Hat,
}

#[derive(Clone, Copy, Debug)]
pub struct VankaConfig {
    pub mode: VankaMode,
    pub omega: f64,
    pub weighting: VankaWeighting,
}

impl Default for VankaConfig {
    fn default() -> Self {
        VankaConfig {
            mode: VankaMode::Tuned,
            omega: 0.7,
            weighting: VankaWeighting::Hat,
        }
    }
}

/// A velocity or pressure DOF in global indexing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlobalDof {
    Ux(usize),
    Uy(usize),
    P(usize),
}

/// Geometry of one patch: its center node and the fine-lattice box of its
/// velocity DOFs.
#[derive(Clone, Copy, Debug)]
struct PatchMeta {
    node_i: usize,
    node_j: usize,
    /// Inclusive fine-lattice bounds of the velocity box.
    lo_i: usize,
    lo_j: usize,
    hi_i: usize,
    hi_j: usize,
    /// 2·v + 1 where v is the velocity count per component.
    size: usize,
    group: usize,
    /// Start offset into the packed patch storage.
    offset: usize,
}

impl PatchMeta {
    fn vel_per_comp(&self) -> usize {
        (self.hi_i - self.lo_i + 1) * (self.hi_j - self.lo_j + 1)
    }
}

/// Row-major dense inverse of a patch matrix.
#[derive(Clone, Debug)]
struct DenseInverse {
    size: usize,
    data: Vec<f64>,
}

impl DenseInverse {
    fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let size = m.nrows();
        let inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("Vanka patch matrix is singular".into()))?;
        let mut data = vec![0.0; size * size];
        for r in 0..size {
            for c in 0..size {
                data[r * size + c] = inv[(r, c)];
            }
        }
        Ok(DenseInverse { size, data })
    }

    #[inline]
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.size);
        debug_assert_eq!(y.len(), self.size);
        for r in 0..self.size {
            let row = &self.data[r * self.size..(r + 1) * self.size];
            let mut acc = 0.0;
            for c in 0..self.size {
                acc += row[c] * x[c];
            }
            y[r] = acc;
        }
    }
}

/// Patch index maps, group classification, precomputed inverses, and weights
/// for one grid level.
#[derive(Clone, Debug)]
pub struct VankaPatchSet {
    grid: StructuredGrid,
    cfg: VankaConfig,
    patches: Vec<PatchMeta>,
    /// Total packed patch DOFs: 76 + 124ℓ + 51ℓ².
    packed_len: usize,
    /// Tuned mode: one inverse per group id.
    group_inverses: Vec<Option<DenseInverse>>,
    /// Simple mode: one inverse per patch.
    patch_inverses: Vec<DenseInverse>,
    /// Packed per-DOF weights (aligned with the packed patch layout).
    weights: Vec<f64>,
}

fn category(k: usize, n: usize) -> usize {
    if k == 0 {
        0
    } else if k == 1 {
        1
    } else if k == n - 1 {
        3
    } else if k == n {
        4
    } else {
        2
    }
}

/// Extracts A_i = V_i·A·V_iᵀ for the patch centered at node (i, j) from the
/// assembled stencils.
fn extract_patch_matrix(l: &StencilQ2Q2, b: &StencilB, meta: &PatchMeta) -> DMatrix<f64> {
    let v = meta.vel_per_comp();
    let size = meta.size;
    let mut a = DMatrix::zeros(size, size);
    let points: Vec<(usize, usize)> = (meta.lo_j..=meta.hi_j)
        .flat_map(|fj| (meta.lo_i..=meta.hi_i).map(move |fi| (fi, fj)))
        .collect();
    for (r, &(ri, rj)) in points.iter().enumerate() {
        for (c, &(ci, cj)) in points.iter().enumerate() {
            let coeff = l.coeff(ri, rj, ci, cj);
            a[(r, c)] = coeff;
            a[(v + r, v + c)] = coeff;
        }
        // Velocity-pressure coupling: Bᵀ column and B row of the center node.
        let bx = b.coeff(meta.node_i, meta.node_j, 0, ri, rj);
        let by = b.coeff(meta.node_i, meta.node_j, 1, ri, rj);
        a[(r, 2 * v)] = bx;
        a[(v + r, 2 * v)] = by;
        a[(2 * v, r)] = bx;
        a[(2 * v, v + r)] = by;
    }
    a
}

impl VankaPatchSet {
    /// Builds patches, classifies them into the 25 groups, verifies that
    /// group members share the same matrix, and inverts the required
    /// representatives.
    pub fn build(
        grid: &StructuredGrid,
        l: &StencilQ2Q2,
        b: &StencilB,
        cfg: VankaConfig,
    ) -> Result<Self> {
        let n = grid.n_elem();
        if n < 4 {
            return Err(Error::InvalidConfig(format!(
                "Vanka patch grouping needs N >= 4 (got N = {n})"
            )));
        }
        if cfg.omega <= 0.0 {
            return Err(Error::InvalidConfig("Vanka weight must be positive".into()));
        }
        let last = 2 * n;
        let mut patches = Vec::with_capacity((n + 1) * (n + 1));
        let mut offset = 0usize;
        for nj in 0..=n {
            for ni in 0..=n {
                let lo_i = (2 * ni).saturating_sub(2);
                let lo_j = (2 * nj).saturating_sub(2);
                let hi_i = (2 * ni + 2).min(last);
                let hi_j = (2 * nj + 2).min(last);
                let v = (hi_i - lo_i + 1) * (hi_j - lo_j + 1);
                let meta = PatchMeta {
                    node_i: ni,
                    node_j: nj,
                    lo_i,
                    lo_j,
                    hi_i,
                    hi_j,
                    size: 2 * v + 1,
                    group: category(nj, n) * 5 + category(ni, n),
                    offset,
                };
                offset += meta.size;
                patches.push(meta);
            }
        }
        let packed_len = offset;

        let mut group_inverses: Vec<Option<DenseInverse>> = vec![None; GROUP_COUNT];
        let mut group_reps: Vec<Option<DMatrix<f64>>> = vec![None; GROUP_COUNT];
        let mut patch_inverses = Vec::new();

        for meta in &patches {
            let a = extract_patch_matrix(l, b, meta);
            match &group_reps[meta.group] {
                None => {
                    group_inverses[meta.group] = Some(DenseInverse::from_matrix(&a)?);
                    group_reps[meta.group] = Some(a.clone());
                }
                Some(rep) => {
                    if rep.nrows() != a.nrows() {
                        return Err(Error::PatchGroupMismatch(format!(
                            "patch ({}, {}) size {} differs from its group representative {}",
                            meta.node_i,
                            meta.node_j,
                            a.nrows(),
                            rep.nrows()
                        )));
                    }
                    let mut max_diff = 0.0f64;
                    for r in 0..a.nrows() {
                        for c in 0..a.ncols() {
                            max_diff = max_diff.max((a[(r, c)] - rep[(r, c)]).abs());
                        }
                    }
                    if max_diff > 1e-12 {
                        return Err(Error::PatchGroupMismatch(format!(
                            "patch ({}, {}) differs from its group representative by {max_diff:e}",
                            meta.node_i, meta.node_j
                        )));
                    }
                }
            }
            if cfg.mode == VankaMode::Simple {
                patch_inverses.push(DenseInverse::from_matrix(&a)?);
            }
        }

        // Packed per-DOF weights.
        let weights = match cfg.weighting {
            VankaWeighting::Scalar => vec![cfg.omega; packed_len],
            VankaWeighting::Hat => {
                // Bilinear hat centered at the patch node (zero on the patch
                // border): a partition of unity over the patches.
                let hat = |f: usize, node: usize| -> f64 {
                    let d = (f as isize - 2 * node as isize).abs() as f64;
                    (1.0 - d / 2.0).max(0.0)
                };
                let mut w = vec![0.0; packed_len];
                for meta in &patches {
                    let mut k = meta.offset;
                    for _comp in 0..2 {
                        for fj in meta.lo_j..=meta.hi_j {
                            for fi in meta.lo_i..=meta.hi_i {
                                w[k] = cfg.omega * hat(fi, meta.node_i) * hat(fj, meta.node_j);
                                k += 1;
                            }
                        }
                    }
                    w[k] = cfg.omega;
                }
                w
            }
            VankaWeighting::Overlap => {
                let nvel = grid.n_vel_per_comp();
                let mut mult_u = vec![0u32; nvel];
                let mut mult_p = vec![0u32; grid.n_pressure()];
                for meta in &patches {
                    for fj in meta.lo_j..=meta.hi_j {
                        for fi in meta.lo_i..=meta.hi_i {
                            mult_u[grid.fine_index(fi, fj)] += 1;
                        }
                    }
                    mult_p[grid.node_index(meta.node_i, meta.node_j)] += 1;
                }
                let mut w = vec![0.0; packed_len];
                for meta in &patches {
                    let v = meta.vel_per_comp();
                    let mut k = meta.offset;
                    for comp in 0..2 {
                        let _ = comp;
                        for fj in meta.lo_j..=meta.hi_j {
                            for fi in meta.lo_i..=meta.hi_i {
                                w[k] = cfg.omega / mult_u[grid.fine_index(fi, fj)] as f64;
                                k += 1;
                            }
                        }
                    }
                    debug_assert_eq!(k, meta.offset + 2 * v);
                    w[k] = cfg.omega
                        / mult_p[grid.node_index(meta.node_i, meta.node_j)] as f64;
                }
                w
            }
        };

        // In tuned mode only the 25 group inverses are kept.
        if cfg.mode == VankaMode::Tuned {
            patch_inverses.clear();
            patch_inverses.shrink_to_fit();
        }

        Ok(VankaPatchSet {
            grid: *grid,
            cfg,
            patches,
            packed_len,
            group_inverses,
            patch_inverses,
            weights,
        })
    }

    pub fn config(&self) -> VankaConfig {
        self.cfg
    }

    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    /// Total packed patch DOFs over all patches (76 + 124ℓ + 51ℓ²).
    pub fn total_patch_dofs(&self) -> usize {
        self.packed_len
    }

    pub fn patch_size(&self, idx: usize) -> usize {
        self.patches[idx].size
    }

    pub fn patch_group(&self, idx: usize) -> usize {
        self.patches[idx].group
    }

    /// Number of distinct groups present (25 for any N ≥ 4).
    pub fn group_count(&self) -> usize {
        self.group_inverses.iter().filter(|g| g.is_some()).count()
    }

    /// Global DOFs of a patch in canonical order (u_x box, u_y box, center
    /// pressure).
    pub fn patch_dofs(&self, idx: usize) -> Vec<GlobalDof> {
        let meta = &self.patches[idx];
        let mut dofs = Vec::with_capacity(meta.size);
        for fj in meta.lo_j..=meta.hi_j {
            for fi in meta.lo_i..=meta.hi_i {
                dofs.push(GlobalDof::Ux(self.grid.fine_index(fi, fj)));
            }
        }
        for fj in meta.lo_j..=meta.hi_j {
            for fi in meta.lo_i..=meta.hi_i {
                dofs.push(GlobalDof::Uy(self.grid.fine_index(fi, fj)));
            }
        }
        dofs.push(GlobalDof::P(
            self.grid.node_index(meta.node_i, meta.node_j),
        ));
        dofs
    }

    /// Re-extracts the patch matrix A_i (diagnostic / verification use).
    pub fn patch_matrix(&self, l: &StencilQ2Q2, b: &StencilB, idx: usize) -> DMatrix<f64> {
        extract_patch_matrix(l, b, &self.patches[idx])
    }

    /// The diagonal of W_i for one patch, in canonical patch order.
    pub fn patch_weights(&self, idx: usize) -> &[f64] {
        let meta = &self.patches[idx];
        &self.weights[meta.offset..meta.offset + meta.size]
    }

    /// Bytes held in dense inverses: 25 group matrices in tuned mode,
    /// (N+1)² patch matrices in simple mode.
    pub fn inverse_storage_bytes(&self) -> usize {
        match self.cfg.mode {
            VankaMode::Tuned => self
                .group_inverses
                .iter()
                .flatten()
                .map(|inv| inv.data.len() * std::mem::size_of::<f64>())
                .sum(),
            VankaMode::Simple => self
                .patch_inverses
                .iter()
                .map(|inv| inv.data.len() * std::mem::size_of::<f64>())
                .sum(),
        }
    }

    pub fn stored_inverse_count(&self) -> usize {
        match self.cfg.mode {
            VankaMode::Tuned => self.group_inverses.iter().filter(|g| g.is_some()).count(),
            VankaMode::Simple => self.patch_inverses.len(),
        }
    }

    /// Gathers V_i·r for all patches into packed per-patch storage.
    /// Pure data movement: reads = writes = total patch DOFs, no flops.
    pub fn form_patch_rhs(&self, r: &BlockVector, packed: &mut [f64], ctr: &mut Counters) {
        assert_eq!(packed.len(), self.packed_len, "packed buffer mismatch");
        for meta in &self.patches {
            let mut k = meta.offset;
            for fj in meta.lo_j..=meta.hi_j {
                for fi in meta.lo_i..=meta.hi_i {
                    packed[k] = r.ux[self.grid.fine_index(fi, fj)];
                    k += 1;
                }
            }
            for fj in meta.lo_j..=meta.hi_j {
                for fi in meta.lo_i..=meta.hi_i {
                    packed[k] = r.uy[self.grid.fine_index(fi, fj)];
                    k += 1;
                }
            }
            packed[k] = r.p[self.grid.node_index(meta.node_i, meta.node_j)];
        }
        let t = self.packed_len as u64;
        ctr.record(Kernel::VankaFormRhs, t, t, 0);
    }

    /// Dense inverse application per patch, split into the interior kernel
    /// (full-size patches) and the exterior kernel (truncated boundary
    /// patches). Counts 2 flops per matrix entry and matrix + right-hand
    /// side reads per patch.
    pub fn apply_patch_inverses(&self, rhs: &[f64], upd: &mut [f64], ctr: &mut Counters) {
        assert_eq!(rhs.len(), self.packed_len, "packed buffer mismatch");
        assert_eq!(upd.len(), self.packed_len, "packed buffer mismatch");
        let mut int = [0u64; 3];
        let mut ext = [0u64; 3];
        for (idx, meta) in self.patches.iter().enumerate() {
            let inv = match self.cfg.mode {
                VankaMode::Tuned => self.group_inverses[meta.group]
                    .as_ref()
                    .expect("group inverse present after build"),
                VankaMode::Simple => &self.patch_inverses[idx],
            };
            let s = meta.size;
            inv.apply(
                &rhs[meta.offset..meta.offset + s],
                &mut upd[meta.offset..meta.offset + s],
            );
            let s = s as u64;
            let tally = if meta.size == INTERIOR_PATCH_SIZE {
                &mut int
            } else {
                &mut ext
            };
            tally[0] += s * s + s;
            tally[1] += s;
            tally[2] += 2 * s * s;
        }
        ctr.record(Kernel::VankaApplyInt, int[0], int[1], int[2]);
        ctr.record(Kernel::VankaApplyExt, ext[0], ext[1], ext[2]);
    }

    /// x ← x + Σ V_iᵀ·W_i·δ_i with deterministic patch-ascending accumulation.
    pub fn scatter_update(&self, upd: &[f64], x: &mut BlockVector, ctr: &mut Counters) {
        assert_eq!(upd.len(), self.packed_len, "packed buffer mismatch");
        for meta in &self.patches {
            let mut k = meta.offset;
            for fj in meta.lo_j..=meta.hi_j {
                for fi in meta.lo_i..=meta.hi_i {
                    x.ux[self.grid.fine_index(fi, fj)] += self.weights[k] * upd[k];
                    k += 1;
                }
            }
            for fj in meta.lo_j..=meta.hi_j {
                for fi in meta.lo_i..=meta.hi_i {
                    x.uy[self.grid.fine_index(fi, fj)] += self.weights[k] * upd[k];
                    k += 1;
                }
            }
            let pidx = self.grid.node_index(meta.node_i, meta.node_j);
            x.p[pidx] += self.weights[k] * upd[k];
        }
        let t = self.packed_len as u64;
        ctr.record(Kernel::VankaUpdate, t, t, t);
    }

    /// One additive sweep: gather, patch solves, weighted scatter.
    pub fn sweep(&self, r: &BlockVector, ctr: &mut Counters) -> BlockVector {
        let mut rhs = vec![0.0; self.packed_len];
        let mut upd = vec![0.0; self.packed_len];
        self.form_patch_rhs(r, &mut rhs, ctr);
        self.apply_patch_inverses(&rhs, &mut upd, ctr);
        let mut delta = BlockVector::zeros(&self.grid);
        self.scatter_update(&upd, &mut delta, ctr);
        delta
    }
}
