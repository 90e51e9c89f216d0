//! Finite-measurement recovery of `(b, c)` from `n + 1` solutions.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::domain::{GridSpec, NodeSet, RegionLayout, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::fraclap::NonlocalOperator;
use crate::runge::{multi_indices, cutoff_monomial, approximate_targets_for_reconstruction, RungeControl, RungeOperator};
use crate::solver::{gradient, Coefficients, DirichletSystem};

/// Default admissibility threshold relative to the median of `|h|`.
pub const DEFAULT_TAU_DET: f64 = 1e-3;

/// Smallest positive integer `k` with `k ≥ √(n+1)`.
pub fn k_of_n(n: usize) -> usize {
    let mut k = 1;
    while k * k < n + 1 {
        k += 1;
    }
    k
}

/// `binom(n + k(n), k(n))`, the number of monomials of degree at most `k(n)` in `n` variables.
pub fn n0_count(n: usize) -> usize {
    let k = k_of_n(n);
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 1..=k as u128 {
        num *= n as u128 + i;
        den *= i;
    }
    (num / den) as usize
}

fn measurement_matrix(solutions: &[ScalarField], gradients: &[VectorField], node: usize) -> DMatrix<f64> {
    let m = solutions.len();
    let dim = m - 1;
    DMatrix::from_fn(m, m, |l, k| {
        if k < dim {
            gradients[l].components[k].values[node]
        } else {
            solutions[l].values[node]
        }
    })
}

/// Determinant of the array with rows `(∂₁u_l, …, ∂_n u_l, u_l)` at `node`.
pub fn det_h(solutions: &[ScalarField], gradients: &[VectorField], node: usize) -> f64 {
    measurement_matrix(solutions, gradients, node).determinant()
}

/// `h` on every node of `set`, zero elsewhere.
pub fn det_field(solutions: &[ScalarField], gradients: &[VectorField], set: &NodeSet) -> ScalarField {
    let n = solutions.first().map_or(0, ScalarField::len);
    let mut out = ScalarField::zeros(n);
    for &i in set.indices() {
        out.values[i] = det_h(solutions, gradients, i);
    }
    out
}

/// `∇h` from the row-wise expansion of the determinant, with second
/// derivatives of `u_l` taken as centered differences of the gradient.
pub fn det_gradient_by_expansion(grid: &GridSpec, solutions: &[ScalarField], node: usize) -> [f64; 2] {
    let gradients: Vec<VectorField> = solutions.iter().map(|u| gradient(grid, u)).collect();
    let second: Vec<Vec<VectorField>> = gradients
        .iter()
        .map(|g| g.components.iter().map(|c| gradient(grid, c)).collect())
        .collect();
    let base = measurement_matrix(solutions, &gradients, node);
    let dim = grid.dim();
    let mut out = [0.0; 2];
    for (axis, slot) in out.iter_mut().enumerate().take(dim) {
        let mut total = 0.0;
        for l in 0..solutions.len() {
            let mut m = base.clone();
            for k in 0..dim {
                m[(l, k)] = second[l][k].components[axis].values[node];
            }
            m[(l, dim)] = gradients[l].components[axis].values[node];
            total += m.determinant();
        }
        *slot = total;
    }
    out
}

/// `n + 1` exterior data with their solutions, gradients, `h` and `(-Δ)^s u_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub data: Vec<ScalarField>,
    pub solutions: Vec<ScalarField>,
    pub gradients: Vec<VectorField>,
    /// `h` on Ω.
    pub det_field: ScalarField,
    /// `(-Δ)^s u_l` on K.
    pub rhs: Vec<ScalarField>,
}

impl MeasurementSet {
    /// Solves the forward problem for each datum.
    pub fn from_data(sys: &DirichletSystem<'_>, data: Vec<ScalarField>) -> Result<Self> {
        let layout = sys.layout();
        if data.len() != layout.dim() + 1 {
            return Err(Error::DimensionMismatch("need n + 1 measurements".into()));
        }
        let solutions = data
            .iter()
            .map(|f| {
                if !f.is_supported_in(layout.exterior()) {
                    return Err(Error::SupportMismatch);
                }
                Ok(sys.solve_forward(f, None)?.u)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_fields(sys.operator(), layout, data, solutions))
    }

    /// Uses the given interior fields directly.
    pub fn from_fields(
        op: &NonlocalOperator,
        layout: &RegionLayout,
        data: Vec<ScalarField>,
        solutions: Vec<ScalarField>,
    ) -> Self {
        let grid = layout.grid();
        let gradients: Vec<VectorField> = solutions.iter().map(|u| gradient(grid, u)).collect();
        let det_field = det_field(&solutions, &gradients, layout.omega());
        let rhs = solutions.iter().map(|u| op.apply(u).restricted(layout.core_k())).collect();
        Self {
            data,
            solutions,
            gradients,
            det_field,
            rhs,
        }
    }

    pub fn dim(&self) -> usize {
        self.solutions.len() - 1
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        let pick = |v: &Vec<ScalarField>| order.iter().map(|&k| v[k].clone()).collect::<Vec<_>>();
        let sign = permutation_sign(order);
        Self {
            data: pick(&self.data),
            solutions: pick(&self.solutions),
            gradients: order.iter().map(|&k| self.gradients[k].clone()).collect(),
            det_field: self.det_field.scaled(sign),
            rhs: pick(&self.rhs),
        }
    }
}

fn permutation_sign(order: &[usize]) -> f64 {
    let mut sign = 1.0;
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if order[i] > order[j] {
                sign = -sign;
            }
        }
    }
    sign
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingOrderReport {
    /// Max over `|β| ≤ k(n) − 2` of `|∂^β h| · h_grid^{|β|}`, on K.
    pub strength: ScalarField,
    pub admissible: NodeSet,
    pub threshold: f64,
    pub excluded_fraction: f64,
}

/// Certifies that `h` vanishes to order at most `k(n) − 2` on each admissible node of K.
pub fn vanishing_order_check(layout: &RegionLayout, h_field: &ScalarField, n: usize, tau: f64) -> VanishingOrderReport {
    let grid = layout.grid();
    let core = layout.core_k();
    let order = k_of_n(n).saturating_sub(2);
    let mut strength = ScalarField::zeros(h_field.len());
    let mut level = alloc::vec![h_field.clone()];
    for &i in core.indices() {
        strength.values[i] = h_field.values[i].abs();
    }
    let step = grid.h();
    for depth in 1..=order {
        let mut next = Vec::new();
        for f in &level {
            for c in gradient(grid, f).components {
                for &i in core.indices() {
                    let v = c.values[i].abs() * libm::pow(step, depth as f64);
                    if v > strength.values[i] {
                        strength.values[i] = v;
                    }
                }
                next.push(c);
            }
        }
        level = next;
    }
    let mut mags: Vec<f64> = core.indices().iter().map(|&i| h_field.values[i].abs()).collect();
    let median = median_of(&mut mags);
    let threshold = tau * (median + f64::MIN_POSITIVE);
    let admissible = NodeSet::from_sorted(
        h_field.len(),
        core.indices().iter().copied().filter(|&i| strength.values[i] >= threshold).collect(),
    );
    let excluded_fraction = if core.is_empty() {
        0.0
    } else {
        1.0 - admissible.len() as f64 / core.len() as f64
    };
    VanishingOrderReport {
        strength,
        admissible,
        threshold,
        excluded_fraction,
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Exterior data are the Runge controls for `χx₁, …, χx_n, χ`.
pub fn generate_measurements(
    sys: &DirichletSystem<'_>,
    runge: &RungeOperator,
    epsilon: f64,
    points: usize,
    floor: f64,
) -> Result<(MeasurementSet, Vec<RungeControl>)> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter("ε must lie in (0, 0.5)".into()));
    }
    let controls = approximate_targets_for_reconstruction(runge, sys, epsilon, points, floor)?;
    let data = controls.iter().map(|c| c.control.clone()).collect();
    Ok((MeasurementSet::from_data(sys, data)?, controls))
}

/// Runge controls for every `χx^β` with `|β| ≤ k(n)`, in [`multi_indices`] order.
#[derive(Debug, Clone)]
pub struct PolynomialControls {
    pub degree: usize,
    pub controls: Vec<RungeControl>,
}

impl PolynomialControls {
    pub fn build(sys: &DirichletSystem<'_>, runge: &RungeOperator, epsilon: f64, points: usize, floor: f64) -> Result<Self> {
        let dim = sys.layout().dim();
        let degree = k_of_n(dim);
        let controls = multi_indices(dim, degree)
            .iter()
            .map(|beta| runge.approximate_target(&cutoff_monomial(sys, &beta[..dim])?, epsilon, points, floor))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { degree, controls })
    }
}

/// Adds `Σ_β α_{βl} g_β` to each datum with `α` uniform in `[−m, m]` and re-solves.
pub fn perturb_measurements<R: Rng + ?Sized>(
    mset: &MeasurementSet,
    sys: &DirichletSystem<'_>,
    poly: &PolynomialControls,
    magnitude: f64,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if !(magnitude >= 0.0) || !magnitude.is_finite() {
        return Err(Error::InvalidParameter("perturbation magnitude".into()));
    }
    let mut data = mset.data.clone();
    for f in data.iter_mut() {
        for g in &poly.controls {
            let a = if magnitude > 0.0 {
                rng.random_range(-magnitude..=magnitude)
            } else {
                0.0
            };
            f.axpy(a, &g.control);
        }
    }
    MeasurementSet::from_data(sys, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub b_hat: VectorField,
    pub c_hat: ScalarField,
    pub solved: NodeSet,
    pub filled: NodeSet,
    /// Admissible nodes whose local system could not be solved.
    pub downgraded: Vec<usize>,
}

impl ReconstructionResult {
    /// Relative `L²(K)` errors of `b̂` and `ĉ`; absolute when the truth vanishes.
    pub fn errors_against(&self, truth: &Coefficients, layout: &RegionLayout) -> (f64, f64) {
        let (grid, core) = (layout.grid(), layout.core_k());
        let mut db = self.b_hat.clone();
        db.axpy(-1.0, &truth.b);
        let dc = &self.c_hat - &truth.c;
        let rel = |err: f64, norm: f64| if norm > 0.0 { err / norm } else { err };
        (
            rel(db.l2_on(core, grid), truth.b.l2_on(core, grid)),
            rel(dc.l2_on(core, grid), truth.c.l2_on(core, grid)),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.b_hat
            .components
            .iter()
            .map(ScalarField::max_abs)
            .fold(self.c_hat.max_abs(), f64::max)
    }
}

/// Solves the `(n+1)×(n+1)` system `Σ_k ∂_k u_l b_k + u_l c = −(-Δ)^s u_l`
/// on admissible nodes and fills the rest of K from the 4 nearest solved nodes.
pub fn recover_pointwise(
    mset: &MeasurementSet,
    layout: &RegionLayout,
    report: &VanishingOrderReport,
) -> Result<ReconstructionResult> {
    let dim = mset.dim();
    let n = mset.det_field.len();
    let mut b_hat = VectorField::zeros(dim, n);
    let mut c_hat = ScalarField::zeros(n);
    let mut solved = Vec::new();
    let mut downgraded = Vec::new();
    for &i in report.admissible.indices() {
        let m = measurement_matrix(&mset.solutions, &mset.gradients, i);
        let rhs = DVector::from_iterator(dim + 1, mset.rhs.iter().map(|r| -r.values[i]));
        match m.lu().solve(&rhs) {
            Some(x) if x.iter().all(|v| v.is_finite()) => {
                for k in 0..dim {
                    b_hat.components[k].values[i] = x[k];
                }
                c_hat.values[i] = x[dim];
                solved.push(i);
            }
            _ => downgraded.push(i),
        }
    }
    if solved.is_empty() {
        return Err(Error::EmptyAdmissibleSet);
    }
    let grid = layout.grid();
    let mut filled = Vec::new();
    let mut near: Vec<(f64, usize)> = Vec::with_capacity(solved.len());
    for &i in layout.core_k().indices() {
        if solved.binary_search(&i).is_ok() {
            continue;
        }
        near.clear();
        near.extend(solved.iter().map(|&j| (grid.distance(i, j), j)));
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let take = &near[..near.len().min(4)];
        let wsum: f64 = take.iter().map(|(d, _)| 1.0 / d).sum();
        for k in 0..dim {
            let v = take.iter().map(|&(d, j)| b_hat.components[k].values[j] / d).sum::<f64>() / wsum;
            b_hat.components[k].values[i] = v;
        }
        c_hat.values[i] = take.iter().map(|&(d, j)| c_hat.values[j] / d).sum::<f64>() / wsum;
        filled.push(i);
    }
    Ok(ReconstructionResult {
        b_hat,
        c_hat,
        solved: NodeSet::from_sorted(n, solved),
        filled: NodeSet::from_sorted(n, filled),
        downgraded,
    })
}

/// Tikhonov estimate of the interior values from exterior data `f` and
/// observations `d ≈ (-Δ)^s u|_{W₂}`:
/// minimizes `‖(Lu)|_{W₂} − d‖² + λ ‖(Lu)|_Ω‖²` over `u = f` off Ω.
pub fn recover_interior_field(
    op: &NonlocalOperator,
    layout: &RegionLayout,
    f: &ScalarField,
    observed: &ScalarField,
    lambda: f64,
) -> Result<ScalarField> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("regularization weight must be positive".into()));
    }
    if !f.is_supported_in(layout.exterior()) || !observed.is_supported_in(layout.w2()) {
        return Err(Error::SupportMismatch);
    }
    let omega = layout.omega().indices();
    let w2 = layout.w2().indices();
    let fixed = op.apply(f);
    let fit = op.block(w2, omega);
    let reg = op.block(omega, omega);
    let root = libm::sqrt(lambda);
    let rows = w2.len() + omega.len();
    let mut a = DMatrix::zeros(rows, omega.len());
    let mut rhs = DVector::zeros(rows);
    for (r, &i) in w2.iter().enumerate() {
        a.row_mut(r).copy_from(&fit.row(r));
        rhs[r] = observed.values[i] - fixed.values[i];
    }
    for (r, &i) in omega.iter().enumerate() {
        a.row_mut(w2.len() + r).copy_from(&(reg.row(r) * root));
        rhs[w2.len() + r] = -root * fixed.values[i];
    }
    let v = a
        .svd(true, true)
        .solve(&rhs, 0.0)
        .map_err(|_| Error::LinearAlgebra("least squares"))?;
    let mut u = f.restricted(layout.exterior());
    for (k, &i) in omega.iter().enumerate() {
        u.values[i] = v[k];
    }
    Ok(u)
}
