//! Forward and adjoint exterior-value problems for `(-Δ)^s + b·∇ + c`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::domain::{GridSpec, NodeSet, RegionLayout, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::fraclap::NonlocalOperator;

/// Default relative threshold on the smallest singular value of the interior block.
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-8;

/// Drift `b` and potential `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub b: VectorField,
    pub c: ScalarField,
}

impl Coefficients {
    /// Coefficients supported in the core `K`.
    pub fn new(layout: &RegionLayout, b: VectorField, c: ScalarField) -> Result<Self> {
        Self::checked(layout, b, c, layout.core_k())
    }

    /// Coefficients supported anywhere in Ω, e.g. a constant potential on all of Ω.
    pub fn on_omega(layout: &RegionLayout, b: VectorField, c: ScalarField) -> Result<Self> {
        Self::checked(layout, b, c, layout.omega())
    }

    fn checked(layout: &RegionLayout, b: VectorField, c: ScalarField, support: &NodeSet) -> Result<Self> {
        let n = layout.node_count();
        if b.dim() != layout.dim() || b.components.iter().any(|f| f.len() != n) || c.len() != n {
            return Err(Error::DimensionMismatch("coefficient field sizes".into()));
        }
        if !b.is_finite() || !c.is_finite() {
            return Err(Error::NonFiniteData);
        }
        if !b.is_supported_in(support) || !c.is_supported_in(support) {
            return Err(Error::SupportMismatch);
        }
        Ok(Self { b, c })
    }

    pub fn zero(layout: &RegionLayout) -> Self {
        let n = layout.node_count();
        Self {
            b: VectorField::zeros(layout.dim(), n),
            c: ScalarField::zeros(n),
        }
    }

    pub fn is_supported_in(&self, set: &NodeSet) -> bool {
        self.b.is_supported_in(set) && self.c.is_supported_in(set)
    }

    /// `self + t · other`.
    pub fn offset_by(&self, t: f64, other: &Coefficients) -> Self {
        let mut out = self.clone();
        out.b.axpy(t, &other.b);
        out.c.axpy(t, &other.c);
        out
    }

    /// `b·∇u + c u` with the centered drift stencil.
    pub fn lower_order(&self, grid: &GridSpec, u: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(u.len());
        let inv = 0.5 / grid.h();
        for i in 0..u.len() {
            let mut v = self.c.values[i] * u.values[i];
            for (axis, b) in self.b.components.iter().enumerate() {
                let bi = b.values[i];
                if bi != 0.0 {
                    let up = grid.neighbor(i, axis, 1).map_or(0.0, |j| u.values[j]);
                    let dn = grid.neighbor(i, axis, -1).map_or(0.0, |j| u.values[j]);
                    v += bi * (up - dn) * inv;
                }
            }
            out.values[i] = v;
        }
        out
    }

    /// Transpose of [`Self::lower_order`]: a centered `-∇·(b u) + c u`.
    pub fn lower_order_transpose(&self, grid: &GridSpec, u: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(u.len());
        let inv = 0.5 / grid.h();
        for i in 0..u.len() {
            out.values[i] += self.c.values[i] * u.values[i];
            for (axis, b) in self.b.components.iter().enumerate() {
                let bi = b.values[i];
                if bi != 0.0 {
                    let coef = bi * u.values[i] * inv;
                    if let Some(j) = grid.neighbor(i, axis, 1) {
                        out.values[j] += coef;
                    }
                    if let Some(j) = grid.neighbor(i, axis, -1) {
                        out.values[j] -= coef;
                    }
                }
            }
        }
        out
    }
}

/// Centered differences at every node; values beyond the box count as zero.
pub fn gradient(grid: &GridSpec, field: &ScalarField) -> VectorField {
    let inv = 0.5 / grid.h();
    let components = (0..grid.dim())
        .map(|axis| ScalarField {
            values: (0..field.len())
                .map(|i| {
                    let up = grid.neighbor(i, axis, 1).map_or(0.0, |j| field.values[j]);
                    let dn = grid.neighbor(i, axis, -1).map_or(0.0, |j| field.values[j]);
                    (up - dn) * inv
                })
                .collect(),
        })
        .collect();
    VectorField { components }
}

/// Interior block `L[Ω,Ω] + D_b[Ω,Ω] + diag(c)` of the discrete equation.
pub fn assemble_interior_block(
    op: &NonlocalOperator,
    layout: &RegionLayout,
    coeffs: &Coefficients,
) -> DMatrix<f64> {
    let omega = layout.omega();
    let idx = omega.indices();
    let grid = layout.grid();
    let mut block = op.block(idx, idx);
    let inv = 0.5 / grid.h();
    for (r, &i) in idx.iter().enumerate() {
        block[(r, r)] += coeffs.c.values[i];
        for (axis, b) in coeffs.b.components.iter().enumerate() {
            let bi = b.values[i];
            if bi == 0.0 {
                continue;
            }
            if let Some(c) = grid.neighbor(i, axis, 1).and_then(|j| omega.position(j)) {
                block[(r, c)] += bi * inv;
            }
            if let Some(c) = grid.neighbor(i, axis, -1).and_then(|j| omega.position(j)) {
                block[(r, c)] -= bi * inv;
            }
        }
    }
    block
}

/// Exterior coupling `E`: maps exterior node values to contributions on Ω rows.
pub fn assemble_exterior_coupling(
    op: &NonlocalOperator,
    layout: &RegionLayout,
    coeffs: &Coefficients,
) -> DMatrix<f64> {
    let omega = layout.omega();
    let ext = layout.exterior();
    let grid = layout.grid();
    let mut e = op.block(omega.indices(), ext.indices());
    let inv = 0.5 / grid.h();
    for (r, &i) in omega.indices().iter().enumerate() {
        for (axis, b) in coeffs.b.components.iter().enumerate() {
            let bi = b.values[i];
            if bi == 0.0 {
                continue;
            }
            if let Some(c) = grid.neighbor(i, axis, 1).and_then(|j| ext.position(j)) {
                e[(r, c)] += bi * inv;
            }
            if let Some(c) = grid.neighbor(i, axis, -1).and_then(|j| ext.position(j)) {
                e[(r, c)] -= bi * inv;
            }
        }
    }
    e
}

/// Singular-value diagnostics of the interior block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenvalueReport {
    pub ok: bool,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    pub threshold: f64,
}

fn condition_of(block: &DMatrix<f64>, singular_tol: f64) -> EigenvalueReport {
    let sv = block.clone().singular_values();
    let smallest = sv.min();
    let largest = sv.max();
    let threshold = singular_tol * largest;
    EigenvalueReport {
        ok: smallest >= threshold,
        smallest_singular_value: smallest,
        largest_singular_value: largest,
        threshold,
    }
}

/// Reports whether the homogeneous problem is numerically uniquely solvable.
pub fn check_eigenvalue_condition(
    op: &NonlocalOperator,
    layout: &RegionLayout,
    coeffs: &Coefficients,
    singular_tol: f64,
) -> EigenvalueReport {
    condition_of(&assemble_interior_block(op, layout, coeffs), singular_tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSolution {
    /// Solution over every box node.
    pub u: ScalarField,
    /// The prescribed values on the nodes outside Ω.
    pub exterior_data: ScalarField,
    pub residual_norm: f64,
    pub rhs_norm: f64,
    pub interior_condition: f64,
}

/// Factorized forward and adjoint systems for one coefficient pair.
#[derive(Debug, Clone)]
pub struct DirichletSystem<'a> {
    op: &'a NonlocalOperator,
    layout: &'a RegionLayout,
    coeffs: Coefficients,
    block: DMatrix<f64>,
    forward: LU<f64, Dyn, Dyn>,
    adjoint: LU<f64, Dyn, Dyn>,
    report: EigenvalueReport,
}

impl<'a> DirichletSystem<'a> {
    pub fn new(op: &'a NonlocalOperator, layout: &'a RegionLayout, coeffs: Coefficients) -> Result<Self> {
        Self::with_tolerance(op, layout, coeffs, DEFAULT_SINGULAR_TOL)
    }

    pub fn with_tolerance(
        op: &'a NonlocalOperator,
        layout: &'a RegionLayout,
        coeffs: Coefficients,
        singular_tol: f64,
    ) -> Result<Self> {
        if op.grid() != layout.grid() {
            return Err(Error::DimensionMismatch("operator and layout grids differ".into()));
        }
        let block = assemble_interior_block(op, layout, &coeffs);
        let report = condition_of(&block, singular_tol);
        if !report.ok {
            return Err(Error::EigenvalueConditionViolated {
                smallest: report.smallest_singular_value,
                threshold: report.threshold,
            });
        }
        let forward = block.clone().lu();
        let adjoint = block.transpose().lu();
        Ok(Self {
            op,
            layout,
            coeffs,
            block,
            forward,
            adjoint,
            report,
        })
    }

    pub fn operator(&self) -> &'a NonlocalOperator {
        self.op
    }

    pub fn layout(&self) -> &'a RegionLayout {
        self.layout
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn interior_block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn condition(&self) -> EigenvalueReport {
        self.report
    }

    /// Full operator `L + b·∇ + c` applied over the box.
    pub fn apply_full(&self, u: &ScalarField) -> ScalarField {
        let mut out = self.op.apply(u);
        out.axpy(1.0, &self.coeffs.lower_order(self.layout.grid(), u));
        out
    }

    /// Transposed full operator `L - ∇·(b ·) + c`.
    pub fn apply_full_transpose(&self, u: &ScalarField) -> ScalarField {
        let mut out = self.op.apply(u);
        out.axpy(1.0, &self.coeffs.lower_order_transpose(self.layout.grid(), u));
        out
    }

    /// Solves `(L + b·∇ + c) u = F` on Ω with `u = f` off Ω.
    pub fn solve_forward(&self, f: &ScalarField, source: Option<&ScalarField>) -> Result<DirichletSolution> {
        self.solve(f, source, false)
    }

    /// Solves the adjoint problem, whose interior block is the exact transpose.
    pub fn solve_adjoint(&self, f: &ScalarField, source: Option<&ScalarField>) -> Result<DirichletSolution> {
        self.solve(f, source, true)
    }

    fn solve(&self, f: &ScalarField, source: Option<&ScalarField>, adjoint: bool) -> Result<DirichletSolution> {
        let n = self.layout.node_count();
        if f.len() != n || source.is_some_and(|s| s.len() != n) {
            return Err(Error::DimensionMismatch("data length".into()));
        }
        if !f.is_finite() || source.is_some_and(|s| !s.is_finite()) {
            return Err(Error::NonFiniteData);
        }
        let omega = self.layout.omega();
        let ext = f.restricted(self.layout.exterior());
        let coupled = if adjoint {
            self.apply_full_transpose(&ext)
        } else {
            self.apply_full(&ext)
        };
        let rhs = DVector::from_iterator(
            omega.len(),
            omega
                .indices()
                .iter()
                .map(|&i| source.map_or(0.0, |s| s.values[i]) - coupled.values[i]),
        );
        let lu = if adjoint { &self.adjoint } else { &self.forward };
        let interior = lu.solve(&rhs).ok_or(Error::LinearAlgebra("singular interior block"))?;
        let residual = if adjoint {
            self.block.tr_mul(&interior) - &rhs
        } else {
            &self.block * &interior - &rhs
        };
        let mut u = ext.clone();
        for (k, &i) in omega.indices().iter().enumerate() {
            u.values[i] = interior[k];
        }
        Ok(DirichletSolution {
            u,
            exterior_data: ext,
            residual_norm: residual.norm(),
            rhs_norm: rhs.norm(),
            interior_condition: self.report.smallest_singular_value,
        })
    }

    /// Bilinear form `h^n ⟨(L + b·∇ + c) u, w⟩` over the box.
    pub fn bilinear(&self, u: &ScalarField, w: &ScalarField) -> f64 {
        let all = NodeSet::from_predicate(u.len(), |_| true);
        self.apply_full(u).dot_on(w, &all, self.layout.grid())
    }

    /// Adjoint form `h^n ⟨(L - ∇·(b ·) + c) w, u⟩`.
    pub fn bilinear_adjoint(&self, w: &ScalarField, u: &ScalarField) -> f64 {
        let all = NodeSet::from_predicate(u.len(), |_| true);
        self.apply_full_transpose(w).dot_on(u, &all, self.layout.grid())
    }
}

/// Smallest eigenvalue of the symmetric `b = 0, c = 0` interior block.
pub fn smallest_interior_eigenvalue(op: &NonlocalOperator, layout: &RegionLayout) -> f64 {
    let idx: Vec<usize> = layout.omega().indices().to_vec();
    op.block(&idx, &idx).symmetric_eigen().eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{bump_field, GridSpec, Region, RegionSpec};

    fn setup(h: f64) -> (NonlocalOperator, RegionLayout) {
        let grid = GridSpec::new(1, &[-4.0], &[4.0], h).unwrap();
        let layout = RegionLayout::build(
            grid.clone(),
            RegionSpec {
                omega: Region::interval(-1.0, 1.0),
                w1: Region::interval(1.5, 3.0),
                w2: Region::interval(-3.0, -1.5),
                core_k: Region::interval(-0.6, 0.6),
                separation_min: None,
            },
        )
        .unwrap();
        (NonlocalOperator::assemble(&grid, 0.75).unwrap(), layout)
    }

    fn coefficients(layout: &RegionLayout, beta: f64, gamma: f64) -> Coefficients {
        let g = layout.grid();
        let b = bump_field(g, &[0.1], 0.45, beta, layout.core_k()).unwrap();
        let c = bump_field(g, &[-0.1], 0.45, gamma, layout.core_k()).unwrap();
        Coefficients::new(layout, VectorField { components: alloc::vec![b] }, c).unwrap()
    }

    #[test]
    fn block_without_coefficients_is_operator_restriction() {
        let (op, layout) = setup(1.0 / 16.0);
        let block = assemble_interior_block(&op, &layout, &Coefficients::zero(&layout));
        let idx = layout.omega().indices();
        assert_eq!(block, op.block(idx, idx));
    }

    #[test]
    fn constant_potential_shifts_diagonal() {
        let (op, layout) = setup(1.0 / 16.0);
        let mut c = ScalarField::zeros(layout.node_count());
        for &i in layout.omega().indices() {
            c.values[i] = 0.7;
        }
        let coeffs = Coefficients::on_omega(&layout, VectorField::zeros(1, layout.node_count()), c).unwrap();
        let shifted = assemble_interior_block(&op, &layout, &coeffs);
        let base = assemble_interior_block(&op, &layout, &Coefficients::zero(&layout));
        let diff = shifted - base;
        for r in 0..diff.nrows() {
            for c in 0..diff.ncols() {
                let expect = if r == c { 0.7 } else { 0.0 };
                assert!((diff[(r, c)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn drift_stencil_annihilates_constants() {
        let (op, layout) = setup(1.0 / 16.0);
        let mut b = ScalarField::zeros(layout.node_count());
        for &i in layout.core_k().indices() {
            b.values[i] = 1.3;
        }
        let coeffs = Coefficients::new(
            &layout,
            VectorField { components: alloc::vec![b] },
            ScalarField::zeros(layout.node_count()),
        )
        .unwrap();
        let with = assemble_interior_block(&op, &layout, &coeffs);
        let without = assemble_interior_block(&op, &layout, &Coefficients::zero(&layout));
        let drift = with - without;
        for r in 0..drift.nrows() {
            assert!(drift.row(r).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn coefficients_outside_support_are_rejected() {
        let (_, layout) = setup(1.0 / 16.0);
        let zero_b = VectorField::zeros(1, layout.node_count());
        let mut c = ScalarField::zeros(layout.node_count());
        c.values[layout.w1().indices()[0]] = 1.0;
        let err = Coefficients::on_omega(&layout, zero_b.clone(), c).unwrap_err();
        assert_eq!(err, Error::SupportMismatch);
        let mut c = ScalarField::zeros(layout.node_count());
        let outside_k = *layout.omega().indices().iter().find(|&&i| !layout.core_k().contains(i)).unwrap();
        c.values[outside_k] = 1.0;
        assert_eq!(Coefficients::new(&layout, zero_b.clone(), c.clone()).unwrap_err(), Error::SupportMismatch);
        assert!(Coefficients::on_omega(&layout, zero_b, c).is_ok());
    }

    #[test]
    fn nan_coefficients_are_rejected() {
        let (_, layout) = setup(1.0 / 16.0);
        let mut c = ScalarField::zeros(layout.node_count());
        c.values[layout.core_k().indices()[0]] = f64::NAN;
        let err = Coefficients::new(&layout, VectorField::zeros(1, layout.node_count()), c).unwrap_err();
        assert_eq!(err, Error::NonFiniteData);
    }

    #[test]
    fn eigenvalue_detector_flags_first_eigenvalue() {
        let (op, layout) = setup(1.0 / 16.0);
        let zero = Coefficients::zero(&layout);
        assert!(check_eigenvalue_condition(&op, &layout, &zero, DEFAULT_SINGULAR_TOL).ok);
        let lambda = smallest_interior_eigenvalue(&op, &layout);
        assert!(lambda > 0.0);
        let shifted = |shift: f64| {
            let c = layout.omega().scatter(&alloc::vec![shift; layout.omega().len()]);
            Coefficients::on_omega(&layout, VectorField::zeros(1, layout.node_count()), c).unwrap()
        };
        let bad = shifted(-lambda);
        assert!(!check_eigenvalue_condition(&op, &layout, &bad, DEFAULT_SINGULAR_TOL).ok);
        assert!(matches!(
            DirichletSystem::new(&op, &layout, bad),
            Err(Error::EigenvalueConditionViolated { .. })
        ));
        assert!(check_eigenvalue_condition(&op, &layout, &shifted(-lambda + 0.5), DEFAULT_SINGULAR_TOL).ok);
    }

    #[test]
    fn manufactured_solution_is_recovered() {
        let (op, layout) = setup(1.0 / 32.0);
        let sys = DirichletSystem::new(&op, &layout, coefficients(&layout, 0.4, -0.3)).unwrap();
        let u_star = ScalarField::from_fn(layout.grid(), |x| libm::exp(-(x[0] - 0.3) * (x[0] - 0.3)));
        let forcing = sys.apply_full(&u_star).restricted(layout.omega());
        let sol = sys.solve_forward(&u_star, Some(&forcing)).unwrap();
        let err = (&sol.u - &u_star).max_abs() / u_star.max_abs();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn forward_and_adjoint_forms_agree() {
        let (op, layout) = setup(1.0 / 32.0);
        let sys = DirichletSystem::new(&op, &layout, coefficients(&layout, 0.4, 0.2)).unwrap();
        let f = bump_field(layout.grid(), &[2.2], 0.5, 1.0, layout.w1()).unwrap();
        let solved = sys.solve_forward(&f, None).unwrap().u;
        let generic = ScalarField::from_fn(layout.grid(), |x| libm::exp(-x[0] * x[0]) * libm::sin(2.0 * x[0] + 0.3));
        let phi = ScalarField::from_fn(layout.grid(), |x| libm::cos(3.0 * x[0])).restricted(layout.omega());
        for u in [&solved, &generic] {
            let lhs = sys.bilinear(u, &phi);
            let rhs = sys.bilinear_adjoint(&phi, u);
            let all = NodeSet::from_predicate(u.len(), |_| true);
            let scale = sys.apply_full(u).l2_on(&all, layout.grid()) * phi.l2_on(&all, layout.grid());
            assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
        assert!(sys.bilinear(&solved, &phi).abs() <= 1e-10 * sys.bilinear(&generic, &phi).abs());
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (op, layout) = setup(1.0 / 16.0);
        let sys = DirichletSystem::new(&op, &layout, coefficients(&layout, 0.3, 0.5)).unwrap();
        let zero = ScalarField::zeros(layout.node_count());
        assert_eq!(sys.solve_forward(&zero, None).unwrap().u, zero);
        assert_eq!(sys.solve_adjoint(&zero, None).unwrap().u, zero);
    }

    #[test]
    fn exterior_values_are_reproduced_exactly() {
        let (op, layout) = setup(1.0 / 32.0);
        let sys = DirichletSystem::new(&op, &layout, coefficients(&layout, 0.3, 0.5)).unwrap();
        let f = bump_field(layout.grid(), &[2.2], 0.5, 1.0, layout.w1()).unwrap();
        let sol = sys.solve_forward(&f, None).unwrap();
        for &i in layout.exterior().indices() {
            assert_eq!(sol.u.values[i], f.values[i]);
        }
        assert!(sol.residual_norm <= 1e-10 * sol.rhs_norm);
        // Nonlocal leakage into Ω.
        assert!(layout.omega().indices().iter().any(|&i| sol.u.values[i].abs() > 1e-6));
    }

    #[test]
    fn adjoint_block_is_transpose_and_symmetric_without_drift() {
        let (op, layout) = setup(1.0 / 16.0);
        let c = bump_field(layout.grid(), &[0.0], 0.5, 0.9, layout.core_k()).unwrap();
        let coeffs = Coefficients::new(&layout, VectorField::zeros(1, layout.node_count()), c).unwrap();
        let sys = DirichletSystem::new(&op, &layout, coeffs).unwrap();
        let b = sys.interior_block();
        assert!((b - b.transpose()).amax() <= 1e-12 * b.amax());
    }

    #[test]
    fn gradient_of_simple_fields() {
        let grid = GridSpec::new(1, &[-4.0], &[4.0], 1.0 / 32.0).unwrap();
        let one = ScalarField::from_fn(&grid, |_| 1.0);
        let g = gradient(&grid, &one);
        for i in 1..grid.node_count() - 1 {
            assert_eq!(g.components[0].values[i], 0.0);
        }
        let x = ScalarField::from_fn(&grid, |x| x[0]);
        let g = gradient(&grid, &x);
        for i in 1..grid.node_count() - 1 {
            assert!((g.components[0].values[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_error_obeys_taylor_bound() {
        let grid = GridSpec::new(1, &[-4.0], &[4.0], 1.0 / 16.0).unwrap();
        let u = ScalarField::from_fn(&grid, |x| libm::sin(x[0]));
        let g = gradient(&grid, &u);
        let h = grid.h();
        let bound = h * h / 6.0 * 1.1;
        for i in 1..grid.node_count() - 1 {
            let x = grid.coords(i)[0];
            assert!((g.components[0].values[i] - libm::cos(x)).abs() <= bound);
        }
    }

    #[test]
    fn two_dimensional_gradient() {
        let grid = GridSpec::new(2, &[-2.0, -2.0], &[2.0, 2.0], 0.25).unwrap();
        let u = ScalarField::from_fn(&grid, |x| 2.0 * x[0] - 3.0 * x[1]);
        let g = gradient(&grid, &u);
        let m = grid.index([5, 6]);
        assert!((g.components[0].values[m] - 2.0).abs() < 1e-12);
        assert!((g.components[1].values[m] + 3.0).abs() < 1e-12);
    }
}
