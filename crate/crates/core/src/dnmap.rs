//! Discrete Dirichlet-to-Neumann maps, the Alessandrini identity and the `‖·‖_*` norm.

use nalgebra::DMatrix;

use crate::domain::{NodeSet, ScalarField};
use crate::error::{Error, Result};
use crate::fraclap::SobolevMetric;
use crate::solver::{gradient, DirichletSystem};

/// `Λf = (-Δ)^s u_f` restricted to W₂, for data `f` supported in W₁.
pub fn dn_apply(sys: &DirichletSystem<'_>, f: &ScalarField) -> Result<ScalarField> {
    let layout = sys.layout();
    if !f.is_supported_in(layout.w1()) {
        return Err(Error::SupportMismatch);
    }
    let u = sys.solve_forward(f, None)?.u;
    Ok(sys.operator().apply(&u).restricted(layout.w2()))
}

/// `Λ*g = (-Δ)^s u*_g` restricted to W₁, for data `g` supported in W₂.
pub fn dn_apply_adjoint(sys: &DirichletSystem<'_>, g: &ScalarField) -> Result<ScalarField> {
    let layout = sys.layout();
    if !g.is_supported_in(layout.w2()) {
        return Err(Error::SupportMismatch);
    }
    let u = sys.solve_adjoint(g, None)?.u;
    Ok(sys.operator().apply(&u).restricted(layout.w1()))
}

/// Dense DN map on nodal data and its adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DnMatrix {
    /// `|W₂| × |W₁|`.
    pub map: DMatrix<f64>,
    /// `|W₁| × |W₂|`.
    pub adjoint_map: DMatrix<f64>,
    pub w1: NodeSet,
    pub w2: NodeSet,
    pub order: f64,
    pub h: f64,
    pub cell_volume: f64,
}

impl DnMatrix {
    pub fn build(sys: &DirichletSystem<'_>) -> Result<Self> {
        let layout = sys.layout();
        let (w1, w2) = (layout.w1().clone(), layout.w2().clone());
        let n = layout.node_count();
        let mut map = DMatrix::zeros(w2.len(), w1.len());
        for (col, &j) in w1.indices().iter().enumerate() {
            let mut e = ScalarField::zeros(n);
            e.values[j] = 1.0;
            let out = dn_apply(sys, &e)?;
            for (row, &i) in w2.indices().iter().enumerate() {
                map[(row, col)] = out.values[i];
            }
        }
        let mut adjoint_map = DMatrix::zeros(w1.len(), w2.len());
        for (col, &j) in w2.indices().iter().enumerate() {
            let mut e = ScalarField::zeros(n);
            e.values[j] = 1.0;
            let out = dn_apply_adjoint(sys, &e)?;
            for (row, &i) in w1.indices().iter().enumerate() {
                adjoint_map[(row, col)] = out.values[i];
            }
        }
        let grid = layout.grid();
        Ok(Self {
            map,
            adjoint_map,
            w1,
            w2,
            order: sys.operator().order(),
            h: grid.h(),
            cell_volume: grid.cell_volume(),
        })
    }

    /// `max |Λ - (Λ*)ᵀ| / max |Λ|`.
    pub fn duality_defect(&self) -> f64 {
        let scale = self.map.amax().max(f64::MIN_POSITIVE);
        (&self.map - self.adjoint_map.transpose()).amax() / scale
    }

    /// Matrix of the bilinear form `(f₁, f₂) ↦ h^n ⟨(Λ_self − Λ_other) f₁, f₂⟩_{W₂}`.
    pub fn pairing_difference(&self, other: &DnMatrix) -> Result<DMatrix<f64>> {
        if self.map.shape() != other.map.shape() || self.w1 != other.w1 || self.w2 != other.w2 {
            return Err(Error::DimensionMismatch("DN maps on different node sets".into()));
        }
        Ok((&self.map - &other.map) * self.cell_volume)
    }
}

/// Both sides of the discrete Alessandrini identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlessandriniReport {
    /// `⟨(Λ₁ − Λ₂) f₁, f₂⟩_{W₂}`.
    pub boundary_side: f64,
    /// `⟨(b₁ − b₂)·∇u₁, u₂*⟩_Ω + ⟨(c₁ − c₂) u₁, u₂*⟩_Ω`.
    pub interior_side: f64,
    /// `|⟨Λ₁f₁, f₂⟩| + |⟨Λ₂f₁, f₂⟩|`, the size of the cancelling terms.
    pub scale: f64,
    pub residual: f64,
}

pub fn alessandrini_residual(
    first: &DirichletSystem<'_>,
    second: &DirichletSystem<'_>,
    f1: &ScalarField,
    f2: &ScalarField,
) -> Result<AlessandriniReport> {
    let layout = first.layout();
    if layout != second.layout() {
        return Err(Error::DimensionMismatch("systems on different layouts".into()));
    }
    if !f2.is_supported_in(layout.w2()) {
        return Err(Error::SupportMismatch);
    }
    let grid = layout.grid();
    let w2 = layout.w2();
    let lam1 = dn_apply(first, f1)?.dot_on(f2, w2, grid);
    let lam2 = dn_apply(second, f1)?.dot_on(f2, w2, grid);
    let boundary_side = lam1 - lam2;

    let u1 = first.solve_forward(f1, None)?.u;
    let u2 = second.solve_adjoint(f2, None)?.u;
    let grad = gradient(grid, &u1);
    let (c1, c2) = (first.coefficients(), second.coefficients());
    let mut integrand = ScalarField::zeros(u1.len());
    for &i in layout.omega().indices() {
        let mut v = (c1.c.values[i] - c2.c.values[i]) * u1.values[i];
        for (axis, g) in grad.components.iter().enumerate() {
            v += (c1.b.components[axis].values[i] - c2.b.components[axis].values[i]) * g.values[i];
        }
        integrand.values[i] = v;
    }
    let interior_side = integrand.dot_on(&u2, layout.omega(), grid);
    let scale = lam1.abs() + lam2.abs();
    let diff = (boundary_side - interior_side).abs();
    let residual = if scale > 0.0 { diff / scale } else { diff };
    Ok(AlessandriniReport {
        boundary_side,
        interior_side,
        scale,
        residual,
    })
}

/// Largest value of `f₂ᵀ P f₁` over unit-norm `f₁` (source metric) and `f₂` (target metric).
///
/// `pairing` is `|target| × |source|`; with `G = L Lᵀ` the value is `σ_max(L_t⁻¹ P L_s⁻ᵀ)`.
pub fn operator_norm_star(pairing: &DMatrix<f64>, source: &SobolevMetric, target: &SobolevMetric) -> Result<f64> {
    let whitened = whiten(pairing, source, target)?;
    if whitened.is_empty() {
        return Ok(0.0);
    }
    Ok(whitened.singular_values().max())
}

/// `L_t⁻¹ P L_s⁻ᵀ`.
pub fn whiten(pairing: &DMatrix<f64>, source: &SobolevMetric, target: &SobolevMetric) -> Result<DMatrix<f64>> {
    if pairing.nrows() != target.nodes().len() || pairing.ncols() != source.nodes().len() {
        return Err(Error::DimensionMismatch("pairing shape vs metrics".into()));
    }
    let left = target
        .lower()
        .solve_lower_triangular(pairing)
        .ok_or(Error::LinearAlgebra("singular target factor"))?;
    let right = source
        .lower()
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::LinearAlgebra("singular source factor"))?;
    Ok(right.transpose())
}
