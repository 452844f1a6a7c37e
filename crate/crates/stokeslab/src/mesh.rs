//! Uniform grid on the unit square and lexicographic numbering of the
//! Taylor-Hood degrees of freedom.
//!
//! The Q2 velocity DOFs split into four classes (mesh nodes, x-edge
//! midpoints, y-edge midpoints, cell centers). All four classes live on a
//! single (2N+1)×(2N+1) "fine lattice" with spacing h/2, distinguished by
//! coordinate parity:
//!
//! - node:   (even, even)
//! - x-edge: (odd,  even)
//! - y-edge: (even, odd)
//! - center: (odd,  odd)
//!
//! Q1 pressure DOFs coincide with the mesh nodes. All stencil patterns and
//! Vanka patches are expressed as offsets on the fine lattice, ordered
//! lexicographically (dy outer, dx inner); that order is the canonical local
//! numbering used by every stencil row and every patch.

/// Uniform N×N element mesh of the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructuredGrid {
    n_elem: usize,
    h: f64,
    level: usize,
}

impl StructuredGrid {
    /// Grid with `n_elem` elements per dimension, multigrid level id 0.
    pub fn new(n_elem: usize) -> Self {
        Self::with_level(n_elem, 0)
    }

    pub fn with_level(n_elem: usize, level: usize) -> Self {
        assert!(n_elem >= 1, "grid needs at least one element per dimension");
        StructuredGrid {
            n_elem,
            h: 1.0 / n_elem as f64,
            level,
        }
    }

    /// Elements per dimension (N).
    pub fn n_elem(&self) -> usize {
        self.n_elem
    }

    /// Element width h = 1/N, computed once at construction.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Points per dimension of the velocity fine lattice, 2N+1.
    pub fn fine_dim(&self) -> usize {
        2 * self.n_elem + 1
    }

    /// Velocity DOFs per component, (2N+1)².
    pub fn n_vel_per_comp(&self) -> usize {
        self.fine_dim() * self.fine_dim()
    }

    /// Total velocity DOFs over both components.
    pub fn n_vel_total(&self) -> usize {
        2 * self.n_vel_per_comp()
    }

    /// Pressure DOFs, (N+1)².
    pub fn n_pressure(&self) -> usize {
        (self.n_elem + 1) * (self.n_elem + 1)
    }

    /// Flat index on the velocity fine lattice.
    #[inline]
    pub fn fine_index(&self, fi: usize, fj: usize) -> usize {
        debug_assert!(fi < self.fine_dim() && fj < self.fine_dim());
        fj * self.fine_dim() + fi
    }

    /// Flat index on the pressure (node) lattice.
    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.n_elem && j <= self.n_elem);
        j * (self.n_elem + 1) + i
    }

    /// True if the fine-lattice point lies on the domain boundary.
    #[inline]
    pub fn fine_on_boundary(&self, fi: usize, fj: usize) -> bool {
        let last = 2 * self.n_elem;
        fi == 0 || fj == 0 || fi == last || fj == last
    }

    /// Coordinate of a fine-lattice point.
    #[inline]
    pub fn fine_coords(&self, fi: usize, fj: usize) -> (f64, f64) {
        (0.5 * self.h * fi as f64, 0.5 * self.h * fj as f64)
    }
}

/// The four Q2 classes plus the Q1 pressure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DofClass {
    Node,
    XEdge,
    YEdge,
    Center,
    Pressure,
}

impl DofClass {
    /// Lattice extents (nx, ny) of the class index space for a given grid.
    pub fn dims(self, grid: &StructuredGrid) -> (usize, usize) {
        let n = grid.n_elem();
        match self {
            DofClass::Node | DofClass::Pressure => (n + 1, n + 1),
            DofClass::XEdge => (n, n + 1),
            DofClass::YEdge => (n + 1, n),
            DofClass::Center => (n, n),
        }
    }

    pub fn count(self, grid: &StructuredGrid) -> usize {
        let (nx, ny) = self.dims(grid);
        nx * ny
    }
}

/// A degree of freedom identified by class and lexicographic (i, j).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DofIndex {
    pub class: DofClass,
    pub i: usize,
    pub j: usize,
}

impl DofIndex {
    pub fn new(class: DofClass, i: usize, j: usize) -> Self {
        DofIndex { class, i, j }
    }

    pub fn is_valid(&self, grid: &StructuredGrid) -> bool {
        let (nx, ny) = self.class.dims(grid);
        self.i < nx && self.j < ny
    }

    /// Flat offset within the class plane.
    pub fn flat(&self, grid: &StructuredGrid) -> usize {
        assert!(self.is_valid(grid), "DOF index out of range: {:?}", self);
        let (nx, _) = self.class.dims(grid);
        self.j * nx + self.i
    }

    /// Inverse of [`DofIndex::flat`].
    pub fn from_flat(class: DofClass, grid: &StructuredGrid, flat: usize) -> Self {
        let (nx, ny) = class.dims(grid);
        assert!(flat < nx * ny, "flat offset out of range");
        DofIndex {
            class,
            i: flat % nx,
            j: flat / nx,
        }
    }

    /// Fine-lattice coordinates of a Q2 DOF. Pressure DOFs also map onto the
    /// lattice (they coincide with the nodes).
    pub fn fine_point(&self) -> (usize, usize) {
        match self.class {
            DofClass::Node | DofClass::Pressure => (2 * self.i, 2 * self.j),
            DofClass::XEdge => (2 * self.i + 1, 2 * self.j),
            DofClass::YEdge => (2 * self.i, 2 * self.j + 1),
            DofClass::Center => (2 * self.i + 1, 2 * self.j + 1),
        }
    }

    /// The Q2 DOF sitting at a fine-lattice point, classified by parity.
    pub fn from_fine_point(fi: usize, fj: usize) -> Self {
        match (fi % 2, fj % 2) {
            (0, 0) => DofIndex::new(DofClass::Node, fi / 2, fj / 2),
            (1, 0) => DofIndex::new(DofClass::XEdge, (fi - 1) / 2, fj / 2),
            (0, 1) => DofIndex::new(DofClass::YEdge, fi / 2, (fj - 1) / 2),
            _ => DofIndex::new(DofClass::Center, (fi - 1) / 2, (fj - 1) / 2),
        }
    }
}

/// Physical coordinates of a DOF.
pub fn dof_coordinates(grid: &StructuredGrid, d: &DofIndex) -> (f64, f64) {
    assert!(d.is_valid(grid), "DOF index out of range: {:?}", d);
    let h = grid.h();
    match d.class {
        DofClass::Node | DofClass::Pressure => (d.i as f64 * h, d.j as f64 * h),
        DofClass::XEdge => ((d.i as f64 + 0.5) * h, d.j as f64 * h),
        DofClass::YEdge => (d.i as f64 * h, (d.j as f64 + 0.5) * h),
        DofClass::Center => ((d.i as f64 + 0.5) * h, (d.j as f64 + 0.5) * h),
    }
}

/// (velocity DOFs per component, total velocity DOFs, pressure DOFs).
pub fn dof_counts(grid: &StructuredGrid) -> (usize, usize, usize) {
    (
        grid.n_vel_per_comp(),
        grid.n_vel_total(),
        grid.n_pressure(),
    )
}

/// Fine-lattice offset pattern of a Q2 class: the box of lattice points its
/// basis function can couple to (the union of its supporting elements).
/// Offsets are ordered dy outer, dx inner; that order is canonical.
pub fn class_offsets(class: DofClass) -> Vec<(isize, isize)> {
    let (rx, ry): (isize, isize) = match class {
        DofClass::Node => (2, 2),
        DofClass::XEdge => (1, 2),
        DofClass::YEdge => (2, 1),
        DofClass::Center => (1, 1),
        DofClass::Pressure => (2, 2),
    };
    let mut offsets = Vec::with_capacity(((2 * rx + 1) * (2 * ry + 1)) as usize);
    for dy in -ry..=ry {
        for dx in -rx..=rx {
            offsets.push((dx, dy));
        }
    }
    offsets
}

/// Slot of an offset within the class pattern, or None if outside it.
#[inline]
pub fn offset_slot(class: DofClass, dx: isize, dy: isize) -> Option<usize> {
    let (rx, ry): (isize, isize) = match class {
        DofClass::Node | DofClass::Pressure => (2, 2),
        DofClass::XEdge => (1, 2),
        DofClass::YEdge => (2, 1),
        DofClass::Center => (1, 1),
    };
    if dx.abs() > rx || dy.abs() > ry {
        return None;
    }
    Some(((dy + ry) * (2 * rx + 1) + (dx + rx)) as usize)
}

/// Stored stencil width of a class (pattern size including boundary zeros).
pub fn class_stencil_width(class: DofClass) -> usize {
    match class {
        DofClass::Node | DofClass::Pressure => 25,
        DofClass::XEdge | DofClass::YEdge => 15,
        DofClass::Center => 9,
    }
}

/// The Q2 DOFs of the element patch supporting `d`, truncated at the domain
/// boundary, in canonical order. For a node this is the (up to) 2×2 element
/// patch around it; interior nodes get 25 entries, non-corner boundary nodes
/// 15, corner nodes 9.
pub fn local_patch_numbering(grid: &StructuredGrid, d: &DofIndex) -> Vec<DofIndex> {
    assert!(
        d.class != DofClass::Pressure,
        "local patch numbering is defined for Q2 DOFs"
    );
    assert!(d.is_valid(grid), "DOF index out of range: {:?}", d);
    let (fi, fj) = d.fine_point();
    let last = 2 * grid.n_elem() as isize;
    let mut list = Vec::new();
    for (dx, dy) in class_offsets(d.class) {
        let ni = fi as isize + dx;
        let nj = fj as isize + dy;
        if ni < 0 || nj < 0 || ni > last || nj > last {
            continue;
        }
        list.push(DofIndex::from_fine_point(ni as usize, nj as usize));
    }
    list
}

/// Per-velocity-DOF Dirichlet flags and boundary values on the fine lattice.
///
/// Every velocity DOF on ∂Ω carries a Dirichlet condition for both
/// components; pressure DOFs never do.
#[derive(Clone, Debug)]
pub struct BoundaryInfo {
    pub dirichlet: Vec<bool>,
    pub value_x: Vec<f64>,
    pub value_y: Vec<f64>,
}

impl BoundaryInfo {
    /// Flags the boundary lattice points and samples `values(x, y) -> (ux, uy)`
    /// there.
    pub fn from_fn(grid: &StructuredGrid, values: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let f = grid.fine_dim();
        let mut dirichlet = vec![false; f * f];
        let mut value_x = vec![0.0; f * f];
        let mut value_y = vec![0.0; f * f];
        for fj in 0..f {
            for fi in 0..f {
                if grid.fine_on_boundary(fi, fj) {
                    let idx = grid.fine_index(fi, fj);
                    let (x, y) = grid.fine_coords(fi, fj);
                    let (vx, vy) = values(x, y);
                    dirichlet[idx] = true;
                    value_x[idx] = vx;
                    value_y[idx] = vy;
                }
            }
        }
        BoundaryInfo {
            dirichlet,
            value_x,
            value_y,
        }
    }

    /// Homogeneous boundary data (used on coarse levels, where only the
    /// operator modification matters).
    pub fn homogeneous(grid: &StructuredGrid) -> Self {
        Self::from_fn(grid, |_, _| (0.0, 0.0))
    }
}
