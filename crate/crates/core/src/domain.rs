//! Uniform grids, region masks and nodal fields.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

const COORD_TOL: f64 = 1e-9;

/// Tensor grid over an axis-aligned computational box.
///
/// Nodes are the lattice points strictly inside the box: along each axis the
/// coordinates are `box_lo + i * h` for `i = 1..=nodes_per_axis`. Everything
/// outside these nodes is treated as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    box_lo: [f64; MAX_DIM],
    box_hi: [f64; MAX_DIM],
    h: f64,
    nodes_per_axis: [usize; MAX_DIM],
}

impl GridSpec {
    pub fn new(dim: usize, box_lo: &[f64], box_hi: &[f64], h: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(alloc::format!("dimension {dim} not in 1..=2")));
        }
        if box_lo.len() != dim || box_hi.len() != dim {
            return Err(Error::InvalidGrid("box extents do not match dimension".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid("spacing must be positive".into()));
        }
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        let mut n = [1; MAX_DIM];
        for a in 0..dim {
            let cells = (box_hi[a] - box_lo[a]) / h;
            let rounded = libm::round(cells);
            if !(cells > 0.0) || (cells - rounded).abs() > 1e-6 {
                return Err(Error::InvalidGrid(alloc::format!(
                    "axis {a}: extent is not an integer multiple of h"
                )));
            }
            let count = rounded as usize - 1;
            if count < 8 {
                return Err(Error::InvalidGrid(alloc::format!(
                    "axis {a}: {count} nodes, at least 8 required"
                )));
            }
            lo[a] = box_lo[a];
            hi[a] = box_hi[a];
            n[a] = count;
        }
        Ok(Self {
            dim,
            box_lo: lo,
            box_hi: hi,
            h,
            nodes_per_axis: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn box_lo(&self) -> &[f64] {
        &self.box_lo[..self.dim]
    }

    pub fn box_hi(&self) -> &[f64] {
        &self.box_hi[..self.dim]
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes_per_axis[..self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    /// Volume element `h^n` of the nodal quadrature.
    pub fn cell_volume(&self) -> f64 {
        libm::pow(self.h, self.dim as f64)
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let n0 = self.nodes_per_axis[0];
        [idx % n0, idx / n0]
    }

    pub fn index(&self, m: [usize; MAX_DIM]) -> usize {
        m[0] + self.nodes_per_axis[0] * m[1]
    }

    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.box_lo[a] + (m[a] + 1) as f64 * self.h;
        }
        x
    }

    /// Node displaced by `offset` lattice steps along `axis`, if it lies in the box.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let mut m = self.multi_index(idx);
        let moved = m[axis] as isize + offset;
        if moved < 0 || moved >= self.nodes_per_axis[axis] as isize {
            return None;
        }
        m[axis] = moved as usize;
        Some(self.index(m))
    }

    /// Lattice offset `j - i` per axis.
    pub fn offset(&self, i: usize, j: usize) -> [isize; MAX_DIM] {
        let a = self.multi_index(i);
        let b = self.multi_index(j);
        [b[0] as isize - a[0] as isize, b[1] as isize - a[1] as isize]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let a = self.coords(i);
        let b = self.coords(j);
        euclid(&a[..self.dim], &b[..self.dim])
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Open region primitives. In one dimension an annulus is a pair of intervals.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Cuboid { lo: Vec<f64>, hi: Vec<f64> },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

impl Region {
    pub fn interval(a: f64, b: f64) -> Self {
        Region::Cuboid { lo: vec![a], hi: vec![b] }
    }

    pub fn ball(center: &[f64], radius: f64) -> Self {
        Region::Ball { center: center.to_vec(), radius }
    }

    pub fn annulus(center: &[f64], inner: f64, outer: f64) -> Self {
        Region::Annulus { center: center.to_vec(), inner, outer }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } | Region::Annulus { center, .. } => center.len(),
            Region::Cuboid { lo, .. } => lo.len(),
        }
    }

    /// Strict membership, with a small tolerance so that lattice points on the
    /// boundary are consistently excluded.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => euclid(x, center) < radius - COORD_TOL,
            Region::Cuboid { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&l, &u))| v > l + COORD_TOL && v < u - COORD_TOL),
            Region::Annulus { center, inner, outer } => {
                let r = euclid(x, center);
                r > inner + COORD_TOL && r < outer - COORD_TOL
            }
        }
    }

    /// Euclidean distance from `x` to the closure of the region.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => (euclid(x, center) - radius).max(0.0),
            Region::Cuboid { lo, hi } => libm::sqrt(
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&v, (&l, &u))| {
                        let d = (l - v).max(v - u).max(0.0);
                        d * d
                    })
                    .sum(),
            ),
            Region::Annulus { center, inner, outer } => {
                let r = euclid(x, center);
                (inner - r).max(r - outer).max(0.0)
            }
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Region::Annulus { center, outer, .. } => (
                center.iter().map(|c| c - outer).collect(),
                center.iter().map(|c| c + outer).collect(),
            ),
            Region::Cuboid { lo, hi } => (lo.clone(), hi.clone()),
        }
    }
}

/// Sorted node indices together with a global-to-local lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    indices: Vec<usize>,
    slot: Vec<usize>,
}

impl NodeSet {
    pub fn from_predicate<F: Fn(usize) -> bool>(total: usize, pred: F) -> Self {
        let indices: Vec<usize> = (0..total).filter(|&i| pred(i)).collect();
        Self::from_sorted(total, indices)
    }

    pub fn from_sorted(total: usize, indices: Vec<usize>) -> Self {
        let mut slot = vec![usize::MAX; total];
        for (k, &i) in indices.iter().enumerate() {
            slot[i] = k;
        }
        Self { indices, slot }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.slot.get(i).is_some_and(|&k| k != usize::MAX)
    }

    /// Position of global node `i` within the set.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.slot.get(i).copied().filter(|&k| k != usize::MAX)
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.indices.iter().all(|&i| !other.contains(i))
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    /// Values of `field` at the set's nodes, in set order.
    pub fn gather(&self, field: &ScalarField) -> Vec<f64> {
        self.indices.iter().map(|&i| field.values[i]).collect()
    }

    /// Box-sized field holding `values` on the set and zero elsewhere.
    pub fn scatter(&self, values: &[f64]) -> ScalarField {
        let mut out = ScalarField::zeros(self.slot.len());
        for (&i, &v) in self.indices.iter().zip(values) {
            out.values[i] = v;
        }
        out
    }
}

/// Geometric description of Ω, the measurement sets and the core K.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub omega: Region,
    pub w1: Region,
    pub w2: Region,
    pub core_k: Region,
    /// Minimum node distance between Ω and W₁/W₂; `None` means `4h`.
    pub separation_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionLayout {
    grid: GridSpec,
    spec: RegionSpec,
    omega: NodeSet,
    exterior: NodeSet,
    w1: NodeSet,
    w2: NodeSet,
    core_k: NodeSet,
}

impl RegionLayout {
    /// Rasterizes the regions onto the grid and checks the separation and
    /// containment invariants.
    pub fn build(grid: GridSpec, spec: RegionSpec) -> Result<Self> {
        let dim = grid.dim();
        for r in [&spec.omega, &spec.w1, &spec.w2, &spec.core_k] {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch("region dimension differs from grid".into()));
            }
        }
        let total = grid.node_count();
        let mask = |r: &Region| {
            NodeSet::from_predicate(total, |i| r.contains(&grid.coords(i)[..dim]))
        };
        let omega = mask(&spec.omega);
        let w1 = mask(&spec.w1);
        let w2 = mask(&spec.w2);
        let core_k = mask(&spec.core_k);
        for (name, set) in [("omega", &omega), ("w1", &w1), ("w2", &w2), ("core_k", &core_k)] {
            if set.is_empty() {
                return Err(Error::EmptyRegion(name));
            }
        }

        let h = grid.h();
        let margin = 2.0 * h - COORD_TOL;
        for (name, r) in [
            ("omega", &spec.omega),
            ("w1", &spec.w1),
            ("w2", &spec.w2),
        ] {
            let (lo, hi) = r.bounds();
            for a in 0..dim {
                if lo[a] < grid.box_lo()[a] + margin || hi[a] > grid.box_hi()[a] - margin {
                    return Err(Error::MarginViolation(name));
                }
            }
        }

        let required = spec.separation_min.unwrap_or(4.0 * h);
        for (name, w) in [("w1", &w1), ("w2", &w2)] {
            let mut closest = f64::INFINITY;
            for &i in omega.indices() {
                for &j in w.indices() {
                    closest = closest.min(grid.distance(i, j));
                }
            }
            if closest < required - COORD_TOL {
                return Err(Error::SeparationViolation {
                    region: name,
                    distance: closest,
                    required,
                });
            }
        }

        // Every node within 2h of a K node must lie in Ω.
        for &k in core_k.indices() {
            let m = grid.multi_index(k);
            let reach = |a: usize| if a < dim { 2isize } else { 0 };
            for d1 in -reach(1)..=reach(1) {
                for d0 in -reach(0)..=reach(0) {
                    if ((d0 * d0 + d1 * d1) as f64) > 4.0 {
                        continue;
                    }
                    let i0 = m[0] as isize + d0;
                    let i1 = m[1] as isize + d1;
                    let inside = i0 >= 0
                        && i1 >= 0
                        && (i0 as usize) < grid.nodes_per_axis[0]
                        && (dim == 1 || (i1 as usize) < grid.nodes_per_axis[1]);
                    if !inside || !omega.contains(grid.index([i0 as usize, i1 as usize])) {
                        return Err(Error::MarginViolation("core_k"));
                    }
                }
            }
        }

        let exterior = NodeSet::from_predicate(total, |i| !omega.contains(i));
        Ok(Self {
            grid,
            spec,
            omega,
            exterior,
            w1,
            w2,
            core_k,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spec(&self) -> &RegionSpec {
        &self.spec
    }

    pub fn omega(&self) -> &NodeSet {
        &self.omega
    }

    /// Box nodes outside Ω.
    pub fn exterior(&self) -> &NodeSet {
        &self.exterior
    }

    pub fn w1(&self) -> &NodeSet {
        &self.w1
    }

    pub fn w2(&self) -> &NodeSet {
        &self.w2
    }

    pub fn core_k(&self) -> &NodeSet {
        &self.core_k
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        self.grid.coords(idx)
    }
}

/// Nodal values over every box node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn from_fn<F: Fn([f64; MAX_DIM]) -> f64>(grid: &GridSpec, f: F) -> Self {
        Self {
            values: (0..grid.node_count()).map(|i| f(grid.coords(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices of nonzero nodes.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_supported_in(&self, set: &NodeSet) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(i, &v)| v == 0.0 || set.contains(i))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Copy with every node outside `set` zeroed.
    pub fn restricted(&self, set: &NodeSet) -> Self {
        let mut out = Self::zeros(self.len());
        for &i in set.indices() {
            out.values[i] = self.values[i];
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    /// `h^n`-weighted inner product over `set`.
    pub fn dot_on(&self, other: &ScalarField, set: &NodeSet, grid: &GridSpec) -> f64 {
        set.indices()
            .iter()
            .map(|&i| self.values[i] * other.values[i])
            .sum::<f64>()
            * grid.cell_volume()
    }

    /// Discrete L² norm over `set`.
    pub fn l2_on(&self, set: &NodeSet, grid: &GridSpec) -> f64 {
        libm::sqrt(self.dot_on(self, set, grid))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        ScalarField {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        ScalarField {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<&ScalarField> for f64 {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        rhs.scaled(self)
    }
}

/// One nodal field per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(dim: usize, n: usize) -> Self {
        Self {
            components: (0..dim).map(|_| ScalarField::zeros(n)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_supported_in(&self, set: &NodeSet) -> bool {
        self.components.iter().all(|c| c.is_supported_in(set))
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(ScalarField::is_finite)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scaled(a)).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for (x, y) in self.components.iter_mut().zip(&other.components) {
            x.axpy(a, y);
        }
    }

    /// L² norm of the pointwise Euclidean magnitude over `set`.
    pub fn l2_on(&self, set: &NodeSet, grid: &GridSpec) -> f64 {
        libm::sqrt(self.components.iter().map(|c| c.dot_on(c, set, grid)).sum())
    }
}

/// Smooth bump profile `exp(1 - 1/(1 - r^2))` on the unit ball, zero outside.
pub fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        libm::exp(1.0 - 1.0 / (1.0 - r2))
    }
}

/// `amplitude * exp(1 - 1/(1 - |x-c|²/ρ²))` within `radius` of `center`.
pub fn bump_field(
    grid: &GridSpec,
    center: &[f64],
    radius: f64,
    amplitude: f64,
    within: &NodeSet,
) -> Result<ScalarField> {
    if center.len() != grid.dim() || !(radius > 0.0) {
        return Err(Error::InvalidParameter("bump center/radius".into()));
    }
    let field = ScalarField::from_fn(grid, |x| {
        let r2 = x[..grid.dim()]
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (radius * radius);
        amplitude * bump_profile(r2)
    });
    if !field.is_supported_in(within) {
        return Err(Error::RegionOverflow);
    }
    Ok(field)
}

/// Monomial `x^β` on `region`, zero elsewhere.
pub fn polynomial_field(
    grid: &GridSpec,
    beta: &[u32],
    region: &NodeSet,
    max_degree: usize,
) -> Result<ScalarField> {
    if beta.len() != grid.dim() {
        return Err(Error::DimensionMismatch("multi-index length".into()));
    }
    let degree: usize = beta.iter().map(|&b| b as usize).sum();
    if degree > max_degree {
        return Err(Error::DegreeTooHigh {
            degree,
            max: max_degree,
        });
    }
    let mut out = ScalarField::zeros(grid.node_count());
    for &i in region.indices() {
        let x = grid.coords(i);
        out.values[i] = beta
            .iter()
            .enumerate()
            .map(|(a, &p)| libm::pow(x[a], p as f64))
            .product();
    }
    Ok(out)
}

/// Smooth transition from 1 (t ≤ 0) to 0 (t ≥ 1).
pub fn smooth_step_down(t: f64) -> f64 {
    let psi = |t: f64| if t <= 0.0 { 0.0 } else { libm::exp(-1.0 / t) };
    let a = psi(1.0 - t);
    let b = psi(t);
    a / (a + b)
}

/// Smooth cutoff equal to 1 on K that vanishes on every node at distance at
/// least `0.75 · dist(K, box \ Ω)` from K.
pub fn core_cutoff(layout: &RegionLayout) -> ScalarField {
    let grid = layout.grid();
    let dim = grid.dim();
    let k = &layout.spec().core_k;
    let gap = layout
        .exterior()
        .indices()
        .iter()
        .map(|&i| k.distance(&grid.coords(i)[..dim]))
        .fold(f64::INFINITY, f64::min);
    let width = 0.75 * gap;
    let mut out = ScalarField::zeros(grid.node_count());
    for &i in layout.omega().indices() {
        let x = grid.coords(i);
        out.values[i] = smooth_step_down(k.distance(&x[..dim]) / width);
    }
    out
}
