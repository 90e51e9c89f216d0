//! Quantitative Runge approximation by truncated singular value expansion of
//! the solution operator `f ↦ P_{b,c} f |_Ω`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::domain::{core_cutoff, polynomial_field, NodeSet, ScalarField};
use crate::error::{Error, Result};
use crate::fraclap::SobolevMetric;
use crate::solver::DirichletSystem;

/// Default number of log-spaced cutoffs in a sweep.
pub const DEFAULT_SWEEP_POINTS: usize = 24;
/// Default lower end of the sweep relative to `σ₁`.
pub const DEFAULT_SWEEP_FLOOR: f64 = 1e-12;

/// Norm used to measure approximation error on Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetNorm {
    L2,
    /// `H^{s-δ}`.
    Sobolev { delta: f64 },
}

/// Geometry in which the singular value decomposition is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Whitening {
    /// `H^s` on the controls, [`TargetNorm`] on Ω.
    Gram,
    /// Plain Euclidean coordinates on both sides.
    Raw,
}

/// Singular triple `A w_j = σ_j φ_j` with `w_j`, `φ_j` orthonormal in the source and target metrics.
#[derive(Debug, Clone)]
pub struct SpectralTriple {
    /// Descending.
    pub sigma: DVector<f64>,
    /// `|W| × r`.
    pub right: DMatrix<f64>,
    /// `|Ω| × r`.
    pub left: DMatrix<f64>,
    /// Whitened left vectors `u_j = L_tᵀ φ_j`, used for projections.
    left_white: DMatrix<f64>,
}

impl SpectralTriple {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn largest(&self) -> f64 {
        self.sigma.get(0).copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct RungeOperator {
    /// `|Ω| × |W|`: column `j` is the solution on Ω for the `j`-th nodal control.
    pub matrix: DMatrix<f64>,
    pub omega: NodeSet,
    pub controls: NodeSet,
    pub source: SobolevMetric,
    pub target: SobolevMetric,
    pub target_norm: TargetNorm,
    pub whitening: Whitening,
    triple: SpectralTriple,
    node_count: usize,
}

/// Truncated control `f_α` and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RungeControl {
    /// Supported in the control set.
    pub control: ScalarField,
    pub target: ScalarField,
    pub alpha: f64,
    /// `‖A f_α − v̄‖` in the target metric, evaluated directly.
    pub achieved_error: f64,
    /// The same quantity from the discarded spectral coefficients.
    pub spectral_error: f64,
    pub target_norm: f64,
    pub control_norm: f64,
    pub modes: usize,
    pub cutoff_above_spectrum: bool,
}

impl RungeControl {
    pub fn relative_error(&self) -> f64 {
        if self.target_norm > 0.0 {
            self.achieved_error / self.target_norm
        } else {
            self.achieved_error
        }
    }
}

impl RungeOperator {
    pub fn assemble(
        sys: &DirichletSystem<'_>,
        controls: &NodeSet,
        target_norm: TargetNorm,
        whitening: Whitening,
    ) -> Result<Self> {
        let layout = sys.layout();
        let grid = layout.grid();
        if controls.is_empty() {
            return Err(Error::EmptyRegion("controls"));
        }
        if !controls.is_subset(layout.exterior()) {
            return Err(Error::SupportMismatch);
        }
        let omega = layout.omega().clone();
        let n = layout.node_count();
        let mut matrix = DMatrix::zeros(omega.len(), controls.len());
        for (col, &j) in controls.indices().iter().enumerate() {
            let mut e = ScalarField::zeros(n);
            e.values[j] = 1.0;
            let u = sys.solve_forward(&e, None)?.u;
            for (row, &i) in omega.indices().iter().enumerate() {
                matrix[(row, col)] = u.values[i];
            }
        }
        let s = sys.operator().order();
        let (source, target) = match whitening {
            Whitening::Gram => {
                let source = SobolevMetric::new(grid, controls, s)?;
                let target = match target_norm {
                    TargetNorm::L2 => SobolevMetric::l2(grid, &omega),
                    TargetNorm::Sobolev { delta } => {
                        if !(delta > 0.0 && delta <= s) {
                            return Err(Error::InvalidParameter("target order offset δ".into()));
                        }
                        SobolevMetric::new(grid, &omega, s - delta)?
                    }
                };
                (source, target)
            }
            Whitening::Raw => (
                SobolevMetric::from_gram(0.0, controls.clone(), DMatrix::identity(controls.len(), controls.len()))?,
                SobolevMetric::from_gram(0.0, omega.clone(), DMatrix::identity(omega.len(), omega.len()))?,
            ),
        };
        let triple = decompose(&matrix, &source, &target)?;
        Ok(Self {
            matrix,
            omega,
            controls: controls.clone(),
            source,
            target,
            target_norm,
            whitening,
            triple,
            node_count: n,
        })
    }

    pub fn spectrum(&self) -> &SpectralTriple {
        &self.triple
    }

    /// `A f` on Ω, for a control field supported in the control set.
    pub fn apply(&self, control: &ScalarField) -> Result<ScalarField> {
        if !control.is_supported_in(&self.controls) {
            return Err(Error::SupportMismatch);
        }
        let f = DVector::from_vec(self.controls.gather(control));
        Ok(self.omega.scatter((&self.matrix * f).as_slice()))
    }

    /// `f_α = Σ_{σ_j > α} σ_j⁻¹ ⟨v̄, φ_j⟩ w_j`.
    pub fn truncated_control(&self, target: &ScalarField, alpha: f64) -> Result<RungeControl> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter("cutoff α must be positive".into()));
        }
        if target.len() != self.node_count {
            return Err(Error::DimensionMismatch("target length".into()));
        }
        if !target.is_supported_in(&self.omega) {
            return Err(Error::SupportMismatch);
        }
        if !target.is_finite() {
            return Err(Error::NonFiniteData);
        }
        let t = &self.triple;
        let v = DVector::from_vec(self.omega.gather(target));
        let v_white = self.target.lower().tr_mul(&v);
        let coef = t.left_white.tr_mul(&v_white);
        let total = v_white.norm_squared();
        let mut f = DVector::zeros(self.controls.len());
        let mut kept = 0.0;
        let mut norm2 = 0.0;
        let mut modes = 0;
        for j in 0..t.rank() {
            if t.sigma[j] > alpha {
                let a = coef[j] / t.sigma[j];
                f.axpy(a, &t.right.column(j), 1.0);
                kept += coef[j] * coef[j];
                norm2 += a * a;
                modes += 1;
            }
        }
        let residual = &self.matrix * &f - &v;
        Ok(RungeControl {
            control: self.controls.scatter(f.as_slice()),
            target: target.clone(),
            alpha,
            achieved_error: self.target.norm_of_values(&residual),
            spectral_error: libm::sqrt((total - kept).max(0.0)),
            target_norm: libm::sqrt(total),
            control_norm: libm::sqrt(norm2),
            modes,
            cutoff_above_spectrum: alpha >= t.largest(),
        })
    }

    /// Floating-point uncertainty of [`RungeControl::relative_error`]:
    /// `16 ε σ₁ ‖f_α‖ / ‖v̄‖`, the cancellation error of forming `A f_α − v̄`.
    pub fn error_roundoff(&self, ctl: &RungeControl) -> f64 {
        let scale = if ctl.target_norm > 0.0 { ctl.target_norm } else { 1.0 };
        16.0 * f64::EPSILON * self.triple.largest() * ctl.control_norm / scale
    }

    /// `points` log-spaced cutoffs from `σ₁` down to `max(σ_min, floor·σ₁)`, descending.
    pub fn sweep_grid(&self, points: usize, floor: f64) -> Vec<f64> {
        let hi = self.triple.largest();
        let lo = self.triple.smallest().max(floor * hi);
        log_grid(hi, lo, points)
    }

    /// Controls for every cutoff of [`Self::sweep_grid`].
    pub fn alpha_sweep(&self, target: &ScalarField, points: usize, floor: f64) -> Result<Vec<RungeControl>> {
        self.sweep_grid(points, floor)
            .into_iter()
            .map(|alpha| self.truncated_control(target, alpha))
            .collect()
    }

    /// The first cutoff, scanning from large to small, whose relative error is at most `epsilon`.
    ///
    /// This is the admissible control of least norm on the sweep.
    pub fn approximate_target(
        &self,
        target: &ScalarField,
        epsilon: f64,
        points: usize,
        floor: f64,
    ) -> Result<RungeControl> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter("ε must lie in (0, 1)".into()));
        }
        let mut best = f64::INFINITY;
        for alpha in self.sweep_grid(points, floor) {
            let ctl = self.truncated_control(target, alpha)?;
            let rel = ctl.relative_error();
            if rel <= epsilon {
                return Ok(ctl);
            }
            best = best.min(rel);
        }
        Err(Error::TargetUnreachable { best })
    }
}

/// Descending log-spaced grid from `hi` to `lo` inclusive.
pub fn log_grid(hi: f64, lo: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => alloc::vec![hi],
        _ => {
            let (a, b) = (libm::log(hi), libm::log(lo));
            (0..points)
                .map(|k| libm::exp(a + (b - a) * k as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

fn decompose(matrix: &DMatrix<f64>, source: &SobolevMetric, target: &SobolevMetric) -> Result<SpectralTriple> {
    // Ã = L_tᵀ A L_s⁻ᵀ.
    let ls = source.lower();
    let lt = target.lower();
    let a_ls = ls
        .solve_lower_triangular(&matrix.transpose())
        .ok_or(Error::LinearAlgebra("singular source factor"))?
        .transpose();
    let white = lt.tr_mul(&a_ls);
    let svd = white.svd(true, true);
    let u = svd.u.ok_or(Error::LinearAlgebra("svd left vectors"))?;
    let v_t = svd.v_t.ok_or(Error::LinearAlgebra("svd right vectors"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let r = order.len();
    let sigma = DVector::from_iterator(r, order.iter().map(|&j| svd.singular_values[j]));
    let left_white = DMatrix::from_fn(u.nrows(), r, |i, k| u[(i, order[k])]);
    let v = DMatrix::from_fn(v_t.ncols(), r, |i, k| v_t[(order[k], i)]);
    let right = ls
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or(Error::LinearAlgebra("singular source factor"))?;
    let left = lt
        .transpose()
        .solve_upper_triangular(&left_white)
        .ok_or(Error::LinearAlgebra("singular target factor"))?;
    Ok(SpectralTriple {
        sigma,
        right,
        left,
        left_white,
    })
}

/// Multi-indices `|β| ≤ degree` in graded order, `β = 0` first.
pub fn multi_indices(dim: usize, degree: usize) -> Vec<[u32; 2]> {
    let mut out = Vec::new();
    for total in 0..=degree as u32 {
        if dim == 1 {
            out.push([total, 0]);
        } else {
            for a in (0..=total).rev() {
                out.push([a, total - a]);
            }
        }
    }
    out
}

/// Cutoff-weighted monomial target `χ x^β` supported in Ω.
pub fn cutoff_monomial(sys: &DirichletSystem<'_>, beta: &[u32]) -> Result<ScalarField> {
    let layout = sys.layout();
    let chi = core_cutoff(layout);
    let degree = beta.iter().map(|&b| b as usize).sum();
    let mono = polynomial_field(layout.grid(), beta, layout.omega(), degree)?;
    let mut out = ScalarField::zeros(layout.node_count());
    for &i in layout.omega().indices() {
        out.values[i] = chi.values[i] * mono.values[i];
    }
    Ok(out)
}

/// Targets `χx₁, …, χx_n, χ`.
pub fn reconstruction_targets(sys: &DirichletSystem<'_>) -> Result<Vec<ScalarField>> {
    let dim = sys.layout().dim();
    let mut out = Vec::with_capacity(dim + 1);
    for axis in 0..dim {
        let mut beta = [0u32; 2];
        beta[axis] = 1;
        out.push(cutoff_monomial(sys, &beta[..dim])?);
    }
    out.push(cutoff_monomial(sys, &[0u32; 2][..dim])?);
    Ok(out)
}

/// Controls approximating [`reconstruction_targets`] to relative accuracy `epsilon`.
pub fn approximate_targets_for_reconstruction(
    runge: &RungeOperator,
    sys: &DirichletSystem<'_>,
    epsilon: f64,
    points: usize,
    floor: f64,
) -> Result<Vec<RungeControl>> {
    reconstruction_targets(sys)?
        .iter()
        .map(|t| runge.approximate_target(t, epsilon, points, floor))
        .collect()
}
