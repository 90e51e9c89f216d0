//! Dense singular-integral discretization of the fractional Laplacian, a
//! periodic spectral oracle, and discrete fractional Sobolev forms.
//!
//! The quadrature operator acts on lattice functions that vanish outside the
//! box nodes. For node `i` it evaluates
//!
//! ```text
//! C(n,s) · PV ∫ (u(x_i) - u(y)) / |x_i - y|^{n+2s} dy
//! ```
//!
//! by splitting the integral into the cube `|z|_∞ ≤ h` around the pole,
//! handled with a second-order Taylor expansion whose Laplacian is taken
//! from centered differences, and the remaining lattice cells, where `u` is
//! replaced by its multilinear interpolant plus a per-cell curvature term
//! and the kernel is integrated cell by cell. Every contribution is a
//! function of the lattice offset only, so the operator reduces to a
//! symmetric coupling kernel `w(d)` and a constant diagonal equal to the sum
//! of `w` over the whole infinite lattice (known in closed form). The part of
//! that sum coming from lattice nodes outside the box is the tail term.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::domain::{GridSpec, NodeSet, ScalarField, MAX_DIM};
use crate::error::{Error, Result};
use crate::fft::{fft_2d, fft_in_place, signed_index, C64};
use crate::quad::{adaptive, GaussLegendre};

/// `C(n,s) = 4^s s Γ(n/2+s) / (π^{n/2} Γ(1-s))`.
pub fn normalization_constant(n: usize, s: f64) -> f64 {
    let nh = n as f64 / 2.0;
    libm::pow(4.0, s) * s * libm::tgamma(nh + s) / (libm::pow(PI, nh) * libm::tgamma(1.0 - s))
}

/// Value of `(-Δ)^s (1-|x|²)_+^s` inside the unit ball: `4^s Γ(1+s) Γ(n/2+s) / Γ(n/2)`.
pub fn getoor_constant(n: usize, s: f64) -> f64 {
    let nh = n as f64 / 2.0;
    libm::pow(4.0, s) * libm::tgamma(1.0 + s) * libm::tgamma(nh + s) / libm::tgamma(nh)
}

fn check_order(s: f64) -> Result<()> {
    if s > 0.5 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::OrderOutOfRange(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalOperator {
    grid: GridSpec,
    s: f64,
    constant: f64,
    diagonal: f64,
    reach: [usize; MAX_DIM],
    couplings: Vec<f64>,
    tail: Vec<f64>,
}

impl NonlocalOperator {
    pub fn assemble(grid: &GridSpec, s: f64) -> Result<Self> {
        check_order(s)?;
        let dim = grid.dim();
        let n = grid.nodes_per_axis();
        let reach = [n[0] - 1, if dim == 2 { n[1] - 1 } else { 0 }];
        let (unit, diag_unit) = match dim {
            1 => kernel_1d(reach[0], s),
            _ => kernel_2d(reach, s),
        };
        let constant = normalization_constant(dim, s);
        let scale = constant * libm::pow(grid.h(), -2.0 * s);
        let couplings: Vec<f64> = unit.iter().map(|w| w * scale).collect();
        let mut op = Self {
            grid: grid.clone(),
            s,
            constant,
            diagonal: diag_unit * scale,
            reach,
            couplings,
            tail: Vec::new(),
        };
        let total = grid.node_count();
        op.tail = (0..total)
            .map(|i| op.diagonal - (0..total).filter(|&j| j != i).map(|j| op.coupling(i, j)).sum::<f64>())
            .collect();
        Ok(op)
    }

    /// Rebuilds an operator from a stored coupling kernel.
    pub fn from_parts(grid: &GridSpec, s: f64, diagonal: f64, couplings: Vec<f64>) -> Result<Self> {
        check_order(s)?;
        let dim = grid.dim();
        let n = grid.nodes_per_axis();
        let reach = [n[0] - 1, if dim == 2 { n[1] - 1 } else { 0 }];
        if couplings.len() != (2 * reach[0] + 1) * (2 * reach[1] + 1) {
            return Err(Error::DimensionMismatch("coupling kernel length".into()));
        }
        let mut op = Self {
            grid: grid.clone(),
            s,
            constant: normalization_constant(dim, s),
            diagonal,
            reach,
            couplings,
            tail: Vec::new(),
        };
        let total = grid.node_count();
        op.tail = (0..total)
            .map(|i| op.diagonal - (0..total).filter(|&j| j != i).map(|j| op.coupling(i, j)).sum::<f64>())
            .collect();
        Ok(op)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn normalization(&self) -> f64 {
        self.constant
    }

    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    /// Coupling kernel over offsets `[-reach, reach]` (axis 0 fastest).
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn reach(&self) -> [usize; MAX_DIM] {
        self.reach
    }

    /// Contribution of all lattice nodes outside the box to the diagonal at each node.
    pub fn tail_diagonal(&self) -> &[f64] {
        &self.tail
    }

    fn kernel_at(&self, d: [isize; MAX_DIM]) -> f64 {
        let r = self.reach;
        let i0 = (d[0] + r[0] as isize) as usize;
        let i1 = (d[1] + r[1] as isize) as usize;
        self.couplings[i0 + (2 * r[0] + 1) * i1]
    }

    /// Coupling weight between distinct nodes; the matrix entry is its negative.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.kernel_at(self.grid.offset(i, j))
        }
    }

    /// Matrix entry `L_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diagonal
        } else {
            -self.kernel_at(self.grid.offset(i, j))
        }
    }

    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.entry(rows[r], cols[c]))
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.grid.node_count()).collect();
        self.block(&all, &all)
    }

    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let total = self.grid.node_count();
        let mut out = ScalarField::zeros(total);
        for (j, &uj) in u.values.iter().enumerate() {
            if uj == 0.0 {
                continue;
            }
            for (i, o) in out.values.iter_mut().enumerate() {
                *o += self.entry(i, j) * uj;
            }
        }
        out
    }

    /// `h^n · uᵀ L u`, the discrete analogue of `‖(-Δ)^{s/2} u‖²`.
    pub fn quadratic_form(&self, u: &ScalarField) -> f64 {
        let lu = self.apply(u);
        lu.values.iter().zip(&u.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume()
    }

    /// `C(n,s) ∫_{ℝⁿ \ box} |x - y|^{-n-2s} dy`, evaluated in closed form in
    /// one dimension and by adaptive angular quadrature in two.
    pub fn analytic_tail(&self, x: &[f64]) -> f64 {
        let s = self.s;
        let lo = self.grid.box_lo();
        let hi = self.grid.box_hi();
        match self.grid.dim() {
            1 => {
                self.constant / (2.0 * s)
                    * (libm::pow(x[0] - lo[0], -2.0 * s) + libm::pow(hi[0] - x[0], -2.0 * s))
            }
            _ => {
                let ray = |theta: f64| {
                    let (c, sn) = (libm::cos(theta), libm::sin(theta));
                    let tx = if c > 0.0 {
                        (hi[0] - x[0]) / c
                    } else if c < 0.0 {
                        (lo[0] - x[0]) / c
                    } else {
                        f64::INFINITY
                    };
                    let ty = if sn > 0.0 {
                        (hi[1] - x[1]) / sn
                    } else if sn < 0.0 {
                        (lo[1] - x[1]) / sn
                    } else {
                        f64::INFINITY
                    };
                    libm::pow(tx.min(ty), -2.0 * s)
                };
                let mut angles: Vec<f64> = [
                    (lo[0], lo[1]),
                    (hi[0], lo[1]),
                    (hi[0], hi[1]),
                    (lo[0], hi[1]),
                ]
                .iter()
                .map(|&(cx, cy)| {
                    let a = libm::atan2(cy - x[1], cx - x[0]);
                    if a < 0.0 {
                        a + 2.0 * PI
                    } else {
                        a
                    }
                })
                .collect();
                angles.sort_by(f64::total_cmp);
                let mut total = 0.0;
                let mut f = ray;
                for k in 0..4 {
                    let a = angles[k];
                    let b = if k == 3 { angles[0] + 2.0 * PI } else { angles[k + 1] };
                    total += adaptive(&mut f, a, b, 1e-12);
                }
                self.constant / (2.0 * s) * total
            }
        }
    }
}

/// One-sided kernel `w(1..=reach)` in units of `C h^{-2s}`, mirrored into
/// `[-reach, reach]`, and the lattice sum of all weights.
fn kernel_1d(reach: usize, s: f64) -> (Vec<f64>, f64) {
    let gl = GaussLegendre::new(16);
    let kern = |t: f64| libm::pow(t, -1.0 - 2.0 * s);
    let mut w = vec![0.0; reach + 4];
    let mut dropped = 0.0;
    for k in 1..=reach + 1 {
        let kf = k as f64;
        let (mut lin_a, mut lin_b, mut q) = (0.0, 0.0, 0.0);
        for (t, wt) in gl.mapped(kf, kf + 1.0) {
            let g = wt * kern(t);
            lin_a += g * (kf + 1.0 - t);
            lin_b += g * (t - kf);
            q += g * (t - kf) * (kf + 1.0 - t);
        }
        w[k] += lin_a;
        w[k + 1] += lin_b;
        // Curvature of u on the cell, from second differences at both ends.
        let a = q / 4.0;
        for m in [k, k + 1] {
            w[m] += 2.0 * a;
            w[m + 1] -= a;
            if m == 1 {
                dropped += a;
            } else {
                w[m - 1] -= a;
            }
        }
    }
    w[1] += 1.0 / (2.0 - 2.0 * s);
    let diagonal = 1.0 / s + 2.0 / (2.0 - 2.0 * s) + 2.0 * dropped;
    let mut full = vec![0.0; 2 * reach + 1];
    for d in 1..=reach {
        full[reach + d] = w[d];
        full[reach - d] = w[d];
    }
    (full, diagonal)
}

struct OffsetAccumulator {
    reach: [isize; 2],
    values: Vec<f64>,
    dropped: f64,
}

impl OffsetAccumulator {
    fn new(reach: [usize; 2]) -> Self {
        let r = [reach[0] as isize + 3, reach[1] as isize + 3];
        Self {
            reach: r,
            values: vec![0.0; ((2 * r[0] + 1) * (2 * r[1] + 1)) as usize],
            dropped: 0.0,
        }
    }

    fn add(&mut self, d: [isize; 2], v: f64) {
        let i0 = d[0] + self.reach[0];
        let i1 = d[1] + self.reach[1];
        self.values[(i0 + (2 * self.reach[0] + 1) * i1) as usize] += v;
    }

    /// Adds `a · δ²_axis u` at offset `m`, expressed in weights on `u(0) - u(d)`.
    fn second_difference(&mut self, m: [isize; 2], axis: usize, a: f64) {
        let mut plus = m;
        plus[axis] += 1;
        let mut minus = m;
        minus[axis] -= 1;
        for (d, gamma) in [(m, -2.0 * a), (plus, a), (minus, a)] {
            if d == [0, 0] {
                self.dropped += gamma;
            } else {
                self.add(d, -gamma);
            }
        }
    }

    fn truncate(&self, reach: [usize; 2]) -> Vec<f64> {
        let r = [reach[0] as isize, reach[1] as isize];
        let mut out = Vec::with_capacity(((2 * r[0] + 1) * (2 * r[1] + 1)) as usize);
        for d1 in -r[1]..=r[1] {
            for d0 in -r[0]..=r[0] {
                let i0 = d0 + self.reach[0];
                let i1 = d1 + self.reach[1];
                let j0 = -d0 + self.reach[0];
                let j1 = -d1 + self.reach[1];
                let stride = 2 * self.reach[0] + 1;
                out.push(if d0 == 0 && d1 == 0 {
                    0.0
                } else {
                    0.5 * (self.values[(i0 + stride * i1) as usize] + self.values[(j0 + stride * j1) as usize])
                });
            }
        }
        out
    }
}

fn kernel_2d(reach: [usize; 2], s: f64) -> (Vec<f64>, f64) {
    let near_rule = GaussLegendre::new(12);
    let far_rule = GaussLegendre::new(6);
    let kern = |t1: f64, t2: f64| libm::pow(t1 * t1 + t2 * t2, -1.0 - s);
    let mut acc = OffsetAccumulator::new(reach);
    let (r0, r1) = (reach[0] as isize, reach[1] as isize);
    for b in -(r1 + 2)..=(r1 + 1) {
        for a in -(r0 + 2)..=(r0 + 1) {
            if (a == -1 || a == 0) && (b == -1 || b == 0) {
                continue;
            }
            let rule = if a.abs().max(b.abs()) <= 4 { &near_rule } else { &far_rule };
            let (af, bf) = (a as f64, b as f64);
            let mut lin = [[0.0; 2]; 2];
            let (mut qx, mut qy) = (0.0, 0.0);
            for (t1, w1) in rule.mapped(af, af + 1.0) {
                let lx = [af + 1.0 - t1, t1 - af];
                for (t2, w2) in rule.mapped(bf, bf + 1.0) {
                    let ly = [bf + 1.0 - t2, t2 - bf];
                    let g = w1 * w2 * kern(t1, t2);
                    for p in 0..2 {
                        for q in 0..2 {
                            lin[p][q] += g * lx[p] * ly[q];
                        }
                    }
                    qx += g * lx[0] * lx[1];
                    qy += g * ly[0] * ly[1];
                }
            }
            for p in 0..2 {
                for q in 0..2 {
                    let corner = [a + p as isize, b + q as isize];
                    acc.add(corner, lin[p][q]);
                    acc.second_difference(corner, 0, qx / 8.0);
                    acc.second_difference(corner, 1, qy / 8.0);
                }
            }
        }
    }
    let octant = GaussLegendre::new(40);
    let near = 4.0 / (2.0 - 2.0 * s)
        * octant.integrate(0.0, PI / 4.0, |th| libm::pow(libm::cos(th), -(2.0 - 2.0 * s)));
    let outside = 4.0 / s * octant.integrate(0.0, PI / 4.0, |th| libm::pow(libm::cos(th), 2.0 * s));
    for d in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
        acc.add(d, near / 2.0);
    }
    let diagonal = outside + 2.0 * near + acc.dropped;
    (acc.truncate(reach), diagonal)
}

fn periodic_size(n: usize) -> usize {
    (4 * (n + 1)).next_power_of_two()
}

/// Applies the Fourier multiplier `|ξ|^{2s}` on a periodic box at least four
/// times the computational box and restricts back.
pub fn spectral_oracle_apply(grid: &GridSpec, s: f64, field: &ScalarField) -> Result<ScalarField> {
    let dim = grid.dim();
    let width: Vec<f64> = (0..dim).map(|a| grid.box_hi()[a] - grid.box_lo()[a]).collect();
    for i in field.support() {
        let x = grid.coords(i);
        for a in 0..dim {
            let margin = 0.25 * width[a] - 1e-9;
            if x[a] - grid.box_lo()[a] < margin || grid.box_hi()[a] - x[a] < margin {
                return Err(Error::SupportTooWide);
            }
        }
    }
    let n = grid.nodes_per_axis();
    let p0 = periodic_size(n[0]);
    let p1 = if dim == 2 { periodic_size(n[1]) } else { 1 };
    let mut data = vec![C64::new(0.0, 0.0); p0 * p1];
    for (i, &v) in field.values.iter().enumerate() {
        let m = grid.multi_index(i);
        data[m[0] + 1 + p0 * if dim == 2 { m[1] + 1 } else { 0 }] = C64::new(v, 0.0);
    }
    let h = grid.h();
    let mult = |m0: usize, m1: usize| {
        let x0 = 2.0 * PI * signed_index(m0, p0) / (p0 as f64 * h);
        let x1 = if dim == 2 {
            2.0 * PI * signed_index(m1, p1) / (p1 as f64 * h)
        } else {
            0.0
        };
        libm::pow(x0 * x0 + x1 * x1, s)
    };
    if dim == 1 {
        fft_in_place(&mut data, false);
        for (m, v) in data.iter_mut().enumerate() {
            *v *= mult(m, 0);
        }
        fft_in_place(&mut data, true);
    } else {
        fft_2d(&mut data, p0, p1, false);
        for m1 in 0..p1 {
            for m0 in 0..p0 {
                data[m0 + p0 * m1] *= mult(m0, m1);
            }
        }
        fft_2d(&mut data, p0, p1, true);
    }
    let mut out = ScalarField::zeros(grid.node_count());
    for (i, o) in out.values.iter_mut().enumerate() {
        let m = grid.multi_index(i);
        *o = data[m[0] + 1 + p0 * if dim == 2 { m[1] + 1 } else { 0 }].re;
    }
    Ok(out)
}

/// Discrete `H^t` inner product on a node subset, realized by the periodic
/// multiplier `⟨ξ⟩^{2t}` with `⟨ξ⟩ = (1+|ξ|²)^{1/2}`.
#[derive(Debug, Clone)]
pub struct SobolevMetric {
    order: f64,
    nodes: NodeSet,
    gram: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl SobolevMetric {
    pub fn new(grid: &GridSpec, nodes: &NodeSet, order: f64) -> Result<Self> {
        let dim = grid.dim();
        let n = grid.nodes_per_axis();
        let p0 = periodic_size(n[0]);
        let p1 = if dim == 2 { periodic_size(n[1]) } else { 1 };
        let h = grid.h();
        let mut data = vec![C64::new(0.0, 0.0); p0 * p1];
        for m1 in 0..p1 {
            for m0 in 0..p0 {
                let x0 = 2.0 * PI * signed_index(m0, p0) / (p0 as f64 * h);
                let x1 = if dim == 2 {
                    2.0 * PI * signed_index(m1, p1) / (p1 as f64 * h)
                } else {
                    0.0
                };
                data[m0 + p0 * m1] = C64::new(libm::pow(1.0 + x0 * x0 + x1 * x1, order), 0.0);
            }
        }
        if dim == 1 {
            fft_in_place(&mut data, true);
        } else {
            fft_2d(&mut data, p0, p1, true);
        }
        let vol = grid.cell_volume();
        let idx = nodes.indices();
        let gram = DMatrix::from_fn(idx.len(), idx.len(), |r, c| {
            let d = grid.offset(idx[r], idx[c]);
            let k0 = d[0].rem_euclid(p0 as isize) as usize;
            let k1 = d[1].rem_euclid(p1 as isize) as usize;
            vol * data[k0 + p0 * k1].re
        });
        let gram = (&gram + gram.transpose()) * 0.5;
        Self::from_gram(order, nodes.clone(), gram)
    }

    /// Exact `h^n`-weighted Euclidean form.
    pub fn l2(grid: &GridSpec, nodes: &NodeSet) -> Self {
        let m = nodes.len();
        let vol = grid.cell_volume();
        Self {
            order: 0.0,
            nodes: nodes.clone(),
            gram: DMatrix::identity(m, m) * vol,
            lower: DMatrix::identity(m, m) * libm::sqrt(vol),
        }
    }

    /// Arbitrary symmetric positive-definite form on `nodes`.
    pub fn from_gram(order: f64, nodes: NodeSet, gram: DMatrix<f64>) -> Result<Self> {
        if gram.nrows() != nodes.len() || gram.ncols() != nodes.len() {
            return Err(Error::DimensionMismatch("gram size".into()));
        }
        let lower = gram
            .clone()
            .cholesky()
            .ok_or(Error::LinearAlgebra("gram matrix is not positive definite"))?
            .l();
        Ok(Self {
            order,
            nodes,
            gram,
            lower,
        })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Lower Cholesky factor `L` with `gram = L Lᵀ`.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn norm_of_values(&self, v: &DVector<f64>) -> f64 {
        libm::sqrt(v.dot(&(&self.gram * v)).max(0.0))
    }

    pub fn norm(&self, field: &ScalarField) -> Result<f64> {
        if !field.is_supported_in(&self.nodes) {
            return Err(Error::SupportMismatch);
        }
        Ok(self.norm_of_values(&DVector::from_vec(self.nodes.gather(field))))
    }
}

/// Ratio `‖v‖_{L²} / (h^n vᵀ L v)^{1/2}` for a field supported in `omega`.
pub fn poincare_ratio(op: &NonlocalOperator, omega: &NodeSet, field: &ScalarField) -> Result<f64> {
    if !field.is_supported_in(omega) {
        return Err(Error::SupportMismatch);
    }
    if field.max_abs() == 0.0 {
        return Err(Error::ZeroField);
    }
    let l2 = field.l2_on(omega, op.grid());
    Ok(l2 / libm::sqrt(op.quadratic_form(field)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::bump_field;

    fn grid_1d(h: f64) -> GridSpec {
        GridSpec::new(1, &[-4.0], &[4.0], h).unwrap()
    }

    #[test]
    fn order_outside_range_is_rejected() {
        let g = grid_1d(0.25);
        assert_eq!(NonlocalOperator::assemble(&g, 0.5), Err(Error::OrderOutOfRange(0.5)));
        assert_eq!(NonlocalOperator::assemble(&g, 1.0), Err(Error::OrderOutOfRange(1.0)));
    }

    #[test]
    fn normalization_matches_known_values() {
        // C(1, 1/2) = 1/π and C(3, 1/2) = 1/π².
        assert!((normalization_constant(1, 0.5) - 1.0 / PI).abs() < 1e-14);
        assert!((normalization_constant(3, 0.5) - 1.0 / (PI * PI)).abs() < 1e-14);
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let g = grid_1d(1.0 / 16.0);
        let op = NonlocalOperator::assemble(&g, 0.75).unwrap();
        let z = ScalarField::zeros(g.node_count());
        assert_eq!(op.apply(&z), z);
    }

    #[test]
    fn symmetric_and_positive_definite_1d() {
        let g = grid_1d(1.0 / 16.0);
        let op = NonlocalOperator::assemble(&g, 0.9).unwrap();
        let m = op.matrix();
        assert_eq!(m, m.transpose());
        let eig = m.symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
        assert!(op.couplings().iter().all(|&w| w >= 0.0));
        assert!(op.tail_diagonal().iter().all(|&t| t > 0.0));
    }

    #[test]
    fn symmetric_and_positive_definite_2d() {
        let g = GridSpec::new(2, &[-2.0, -2.0], &[2.0, 2.0], 0.25).unwrap();
        let op = NonlocalOperator::assemble(&g, 0.75).unwrap();
        let m = op.matrix();
        assert!((&m - m.transpose()).amax() == 0.0);
        assert!(m.symmetric_eigen().eigenvalues.min() > 0.0);
        assert!(op.tail_diagonal().iter().all(|&t| t > 0.0));
    }

    #[test]
    fn lattice_tail_tracks_closed_form_tail() {
        let g = grid_1d(1.0 / 64.0);
        let op = NonlocalOperator::assemble(&g, 0.75).unwrap();
        let centre = g.node_count() / 2;
        let x = g.coords(centre);
        let rel = (op.tail_diagonal()[centre] - op.analytic_tail(&x[..1])).abs() / op.analytic_tail(&x[..1]);
        assert!(rel < 0.02, "relative tail mismatch {rel}");

        let g2 = GridSpec::new(2, &[-2.0, -2.0], &[2.0, 2.0], 0.125).unwrap();
        let op2 = NonlocalOperator::assemble(&g2, 0.75).unwrap();
        let c = g2.index([15, 15]);
        let x = g2.coords(c);
        let exact = op2.analytic_tail(&x[..2]);
        let rel = (op2.tail_diagonal()[c] - exact).abs() / exact;
        assert!(rel < 0.05, "relative 2D tail mismatch {rel}");
    }

    #[test]
    fn sobolev_order_zero_is_weighted_euclidean() {
        let g = grid_1d(1.0 / 16.0);
        let set = NodeSet::from_predicate(g.node_count(), |i| g.coords(i)[0].abs() < 1.0);
        let metric = SobolevMetric::new(&g, &set, 0.0).unwrap();
        let identity = DMatrix::<f64>::identity(set.len(), set.len()) * g.cell_volume();
        assert!((metric.gram() - &identity).amax() <= 1e-12 * g.cell_volume());
        let f = bump_field(&g, &[0.0], 0.9, 1.0, &set).unwrap();
        let expect = f.l2_on(&set, &g);
        assert!((metric.norm(&f).unwrap() - expect).abs() <= 1e-12 * expect);
        assert_eq!(metric.norm(&ScalarField::zeros(g.node_count())).unwrap(), 0.0);
    }

    #[test]
    fn sobolev_norm_increases_with_order() {
        let g = grid_1d(1.0 / 32.0);
        let set = NodeSet::from_predicate(g.node_count(), |i| g.coords(i)[0].abs() < 1.0);
        let f = bump_field(&g, &[0.1], 0.6, 1.0, &set).unwrap();
        let norms: Vec<f64> = [-0.75, 0.0, 0.75]
            .iter()
            .map(|&t| SobolevMetric::new(&g, &set, t).unwrap().norm(&f).unwrap())
            .collect();
        assert!(norms[0] < norms[1] && norms[1] < norms[2], "{norms:?}");
    }

    #[test]
    fn spectral_oracle_basic_properties() {
        let g = grid_1d(1.0 / 32.0);
        let all = NodeSet::from_predicate(g.node_count(), |_| true);
        let z = ScalarField::zeros(g.node_count());
        assert_eq!(spectral_oracle_apply(&g, 0.75, &z).unwrap(), z);

        let u = bump_field(&g, &[-0.3], 0.5, 1.0, &all).unwrap();
        let v = bump_field(&g, &[0.4], 0.7, 2.0, &all).unwrap();
        let lu = spectral_oracle_apply(&g, 0.75, &u).unwrap();
        let lv = spectral_oracle_apply(&g, 0.75, &v).unwrap();
        let a = lu.dot_on(&v, &all, &g);
        let b = u.dot_on(&lv, &all, &g);
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));

        let shift = 8.0 * g.h();
        let us = bump_field(&g, &[-0.3 + shift], 0.5, 1.0, &all).unwrap();
        let lus = spectral_oracle_apply(&g, 0.75, &us).unwrap();
        let scale = lu.max_abs();
        for i in 0..g.node_count() - 8 {
            assert!((lus.values[i + 8] - lu.values[i]).abs() <= 1e-10 * scale);
        }

        let wide = bump_field(&g, &[2.5], 0.5, 1.0, &all).unwrap();
        assert_eq!(spectral_oracle_apply(&g, 0.75, &wide), Err(Error::SupportTooWide));
    }

    #[test]
    fn poincare_ratio_errors() {
        let g = grid_1d(1.0 / 16.0);
        let op = NonlocalOperator::assemble(&g, 0.75).unwrap();
        let omega = NodeSet::from_predicate(g.node_count(), |i| g.coords(i)[0].abs() < 1.0);
        let z = ScalarField::zeros(g.node_count());
        assert_eq!(poincare_ratio(&op, &omega, &z), Err(Error::ZeroField));
        let all = NodeSet::from_predicate(g.node_count(), |_| true);
        let outside = bump_field(&g, &[2.0], 0.5, 1.0, &all).unwrap();
        assert_eq!(poincare_ratio(&op, &omega, &outside), Err(Error::SupportMismatch));
        let inside = bump_field(&g, &[0.0], 0.5, 1.0, &omega).unwrap();
        let r = poincare_ratio(&op, &omega, &inside).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }
}
