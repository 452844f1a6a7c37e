//! Per-kernel tallies of doubles read, doubles written, and floating-point
//! operations.
//!
//! Every instrumented kernel records a fixed increment convention; two
//! identical calls add identical amounts. The array, weighted-Jacobi, and
//! Vanka kernels follow the theoretical cost-table conventions exactly; the
//! stencil matvecs record their actual stored-entry counts, which are lower
//! than the dense-style table formulas (see [`crate::perfmodel`]).

use serde::Serialize;

/// Instrumented kernel labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Kernel {
    /// Elementwise add or subtract of two arrays.
    ArrayAddSub,
    /// Array times scalar.
    ArrayScale,
    /// Elementwise product of two arrays (diagonal application).
    PointwiseMul,
    /// Fused y += a*x.
    Axpy,
    /// Dot product / norm accumulation.
    Dot,
    /// Q2 stencil times Q2 vector (one velocity component).
    MatvecQ2Q2,
    /// Divergence stencil times Q2 vector (result on pressure space).
    MatvecQ2Q1,
    /// Transposed divergence stencil times Q1 vector (result on Q2 space).
    MatvecQ1Q2,
    /// Pressure-space 9-point stencil times Q1 vector.
    MatvecQ1Q1,
    /// Fused weighted-Jacobi update on the pressure space.
    WeightedJacobi,
    /// Vanka: gather residuals into packed patch right-hand sides.
    VankaFormRhs,
    /// Vanka: dense inverse application, full-size interior patches.
    VankaApplyInt,
    /// Vanka: dense inverse application, truncated boundary patches.
    VankaApplyExt,
    /// Vanka: weighted scatter of patch updates into the global vector.
    VankaUpdate,
    /// Grid-transfer prolongation.
    Interpolate,
    /// Grid-transfer restriction (transpose of prolongation).
    Restrict,
    /// Coarsest-level direct solve (triangular substitution).
    CoarseSolve,
}

pub const KERNEL_COUNT: usize = 17;

impl Kernel {
    pub const ALL: [Kernel; KERNEL_COUNT] = [
        Kernel::ArrayAddSub,
        Kernel::ArrayScale,
        Kernel::PointwiseMul,
        Kernel::Axpy,
        Kernel::Dot,
        Kernel::MatvecQ2Q2,
        Kernel::MatvecQ2Q1,
        Kernel::MatvecQ1Q2,
        Kernel::MatvecQ1Q1,
        Kernel::WeightedJacobi,
        Kernel::VankaFormRhs,
        Kernel::VankaApplyInt,
        Kernel::VankaApplyExt,
        Kernel::VankaUpdate,
        Kernel::Interpolate,
        Kernel::Restrict,
        Kernel::CoarseSolve,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }

    /// Stable identifier used in reports and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            Kernel::ArrayAddSub => "array_add_sub",
            Kernel::ArrayScale => "array_scale",
            Kernel::PointwiseMul => "array_pointwise_mul",
            Kernel::Axpy => "array_axpy",
            Kernel::Dot => "dot_product",
            Kernel::MatvecQ2Q2 => "q2q2_matvec",
            Kernel::MatvecQ2Q1 => "q2q1_matvec_q2vec",
            Kernel::MatvecQ1Q2 => "q2q1_matvec_q1vec",
            Kernel::MatvecQ1Q1 => "q1q1_matvec",
            Kernel::WeightedJacobi => "weighted_jacobi",
            Kernel::VankaFormRhs => "vanka_form_rhs",
            Kernel::VankaApplyInt => "vanka_apply_int",
            Kernel::VankaApplyExt => "vanka_apply_ext",
            Kernel::VankaUpdate => "vanka_update",
            Kernel::Interpolate => "interpolate",
            Kernel::Restrict => "restrict",
            Kernel::CoarseSolve => "coarse_solve",
        }
    }
}

/// Doubles read, doubles written, flops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub reads: u64,
    pub writes: u64,
    pub flops: u64,
}

impl Counts {
    pub fn new(reads: u64, writes: u64, flops: u64) -> Self {
        Counts {
            reads,
            writes,
            flops,
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.reads += other.reads;
        self.writes += other.writes;
        self.flops += other.flops;
    }
}

/// Accumulated counts for every kernel label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    counts: [Counts; KERNEL_COUNT],
}

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn record(&mut self, kernel: Kernel, reads: u64, writes: u64, flops: u64) {
        let c = &mut self.counts[kernel.index()];
        c.reads += reads;
        c.writes += writes;
        c.flops += flops;
    }

    pub fn get(&self, kernel: Kernel) -> Counts {
        self.counts[kernel.index()]
    }

    pub fn reset(&mut self) {
        self.counts = [Counts::default(); KERNEL_COUNT];
    }

    pub fn merge(&mut self, other: &Counters) {
        for k in Kernel::ALL {
            self.counts[k.index()].add(other.counts[k.index()]);
        }
    }

    /// Difference `self - earlier`, counter-wise. Panics if `earlier` is not
    /// a prefix of `self` (counters are additive and non-negative).
    pub fn since(&self, earlier: &Counters) -> Counters {
        let mut out = Counters::new();
        for k in Kernel::ALL {
            let a = self.get(k);
            let b = earlier.get(k);
            out.counts[k.index()] = Counts::new(
                a.reads.checked_sub(b.reads).expect("counter went backwards"),
                a.writes
                    .checked_sub(b.writes)
                    .expect("counter went backwards"),
                a.flops.checked_sub(b.flops).expect("counter went backwards"),
            );
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (Kernel, Counts)> + '_ {
        Kernel::ALL.iter().map(move |k| (*k, self.get(*k)))
    }

    pub fn total(&self) -> Counts {
        let mut t = Counts::default();
        for (_, c) in self.iter() {
            t.add(c);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_and_merge_are_additive() {
        let mut a = Counters::new();
        a.record(Kernel::ArrayAddSub, 10, 5, 5);
        a.record(Kernel::ArrayAddSub, 10, 5, 5);
        assert_eq!(a.get(Kernel::ArrayAddSub), Counts::new(20, 10, 10));

        let mut b = Counters::new();
        b.record(Kernel::Dot, 4, 0, 4);
        a.merge(&b);
        assert_eq!(a.get(Kernel::Dot), Counts::new(4, 0, 4));
        assert_eq!(a.total(), Counts::new(24, 10, 14));
    }

    #[test]
    fn since_subtracts() {
        let mut a = Counters::new();
        a.record(Kernel::MatvecQ2Q2, 100, 10, 90);
        let snapshot = a.clone();
        a.record(Kernel::MatvecQ2Q2, 100, 10, 90);
        let d = a.since(&snapshot);
        assert_eq!(d.get(Kernel::MatvecQ2Q2), Counts::new(100, 10, 90));
    }
}
