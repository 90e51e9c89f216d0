//! Stability, genericity and Poincaré experiment suites.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{bump_field, NodeSet, RegionLayout, ScalarField, VectorField};
use crate::dnmap::{operator_norm_star, DnMatrix};
use crate::error::{Error, Result};
use crate::fraclap::{poincare_ratio, NonlocalOperator, SobolevMetric};
use crate::reconstruct::{perturb_measurements, vanishing_order_check, MeasurementSet, PolynomialControls};
use crate::solver::{Coefficients, DirichletSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub delta: f64,
    pub dn_star: f64,
    pub b_norm: f64,
    pub c_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCurve {
    pub rows: Vec<StabilityRow>,
}

impl StabilityCurve {
    pub fn column(&self, f: impl Fn(&StabilityRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Least-squares slope of `log ‖ΔΛ‖_*` against `log x` over rows with positive values.
    pub fn loglog_slope(&self, x: impl Fn(&StabilityRow) -> f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.dn_star > 0.0 && x(r) > 0.0)
            .map(|r| (libm::log(x(r)), libm::log(r.dn_star)))
            .collect();
        linear_slope(&pts)
    }
}

fn linear_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// DN-map distance and `H^{-s}` coefficient distances along `base + δ·direction`.
pub fn stability_sweep(
    op: &NonlocalOperator,
    layout: &RegionLayout,
    base: &Coefficients,
    direction: &Coefficients,
    deltas: &[f64],
) -> Result<StabilityCurve> {
    if deltas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("δ grid must be strictly increasing".into()));
    }
    let grid = layout.grid();
    let s = op.order();
    let base_sys = DirichletSystem::new(op, layout, base.clone())?;
    let base_dn = DnMatrix::build(&base_sys)?;
    let src = SobolevMetric::new(grid, layout.w1(), s)?;
    let tgt = SobolevMetric::new(grid, layout.w2(), s)?;
    let neg = SobolevMetric::new(grid, layout.omega(), -s)?;
    let b_dir = vector_norm(&neg, &direction.b)?;
    let c_dir = neg.norm(&direction.c.restricted(layout.omega()))?;
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let coeffs = base.offset_by(delta, direction);
        let sys = DirichletSystem::new(op, layout, coeffs).map_err(|e| match e {
            Error::EigenvalueConditionViolated { .. } => Error::SweepPointSingular { delta },
            other => other,
        })?;
        let dn = DnMatrix::build(&sys)?;
        let pairing = base_dn.pairing_difference(&dn)?;
        rows.push(StabilityRow {
            delta,
            dn_star: operator_norm_star(&pairing, &src, &tgt)?,
            b_norm: delta.abs() * b_dir,
            c_norm: delta.abs() * c_dir,
        });
    }
    Ok(StabilityCurve { rows })
}

fn vector_norm(metric: &SobolevMetric, field: &VectorField) -> Result<f64> {
    let mut total = 0.0;
    for c in &field.components {
        let n = metric.norm(&c.restricted(metric.nodes()))?;
        total += n * n;
    }
    Ok(libm::sqrt(total))
}

/// Ranks with ties averaged, 1-based.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` if either sequence is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / libm::sqrt(sxx * syy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenericityTrial {
    pub trial: u64,
    pub excluded_before: f64,
    pub excluded_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericitySummary {
    pub seed: u64,
    pub magnitude: f64,
    pub tau_det: f64,
    pub trials: Vec<GenericityTrial>,
}

impl GenericitySummary {
    /// Trials whose post-perturbation excluded fraction is below `limit`.
    pub fn passing(&self, limit: f64) -> usize {
        self.trials.iter().filter(|t| t.excluded_after < limit).count()
    }

    /// Counts of `excluded_before` and `excluded_after` in `bins` equal bins of `[0, 1]`.
    pub fn histogram(&self, bins: usize) -> Vec<(usize, usize)> {
        let mut out = alloc::vec![(0, 0); bins];
        let bin = |x: f64| ((x * bins as f64) as usize).min(bins - 1);
        for t in &self.trials {
            out[bin(t.excluded_before)].0 += 1;
            out[bin(t.excluded_after)].1 += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenericityConfig {
    pub trials: u64,
    pub magnitude: f64,
    pub seed: u64,
    pub tau_det: f64,
    /// Start every trial from `n + 1` copies of one random datum.
    pub adversarial: bool,
}

/// Random bump datum inside W₁, radius in `[0.15, 0.5]` of the W₁ node spread.
fn random_datum<R: Rng + ?Sized>(layout: &RegionLayout, rng: &mut R) -> Result<ScalarField> {
    let grid = layout.grid();
    let dim = grid.dim();
    let w1 = layout.w1().indices();
    for _ in 0..64 {
        let centre = grid.coords(w1[rng.random_range(0..w1.len())]);
        let radius = rng.random_range(0.15..0.5);
        let amp = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        match bump_field(grid, &centre[..dim], radius, amp, layout.w1()) {
            Ok(f) if f.max_abs() > 0.0 => return Ok(f),
            Ok(_) | Err(Error::RegionOverflow) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidParameter("W₁ too thin for random bump data".into()))
}

/// Per-trial stream of a ChaCha8 generator seeded by `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One seeded trial: excluded fractions before and after perturbation.
pub fn genericity_trial(
    sys: &DirichletSystem<'_>,
    poly: &PolynomialControls,
    cfg: &GenericityConfig,
    trial: u64,
) -> Result<GenericityTrial> {
    let layout = sys.layout();
    let n = layout.dim();
    let mut rng = trial_rng(cfg.seed, trial);
    let data = if cfg.adversarial {
        let f = random_datum(layout, &mut rng)?;
        alloc::vec![f; n + 1]
    } else {
        (0..=n).map(|_| random_datum(layout, &mut rng)).collect::<Result<Vec<_>>>()?
    };
    let start = MeasurementSet::from_data(sys, data)?;
    let before = vanishing_order_check(layout, &start.det_field, n, cfg.tau_det).excluded_fraction;
    let after = if cfg.magnitude > 0.0 {
        let pert = perturb_measurements(&start, sys, poly, cfg.magnitude, &mut rng)?;
        vanishing_order_check(layout, &pert.det_field, n, cfg.tau_det).excluded_fraction
    } else {
        before
    };
    Ok(GenericityTrial {
        trial,
        excluded_before: before,
        excluded_after: after,
    })
}

/// Monte-Carlo check that small polynomial perturbations make `h` generic.
pub fn genericity_trial_suite(
    sys: &DirichletSystem<'_>,
    poly: &PolynomialControls,
    cfg: &GenericityConfig,
) -> Result<GenericitySummary> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("at least one trial".into()));
    }
    let trials = (0..cfg.trials)
        .map(|t| genericity_trial(sys, poly, cfg, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(GenericitySummary {
        seed: cfg.seed,
        magnitude: cfg.magnitude,
        tau_det: cfg.tau_det,
        trials,
    })
}

/// Worst-case Poincaré ratio over a family of fields, together with the exact supremum `λ₁^{-1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareBound {
    pub worst_sampled: f64,
    pub supremum: f64,
}

pub fn poincare_bound(op: &NonlocalOperator, omega: &NodeSet, fields: &[ScalarField]) -> Result<PoincareBound> {
    let mut worst: f64 = 0.0;
    for f in fields {
        worst = worst.max(poincare_ratio(op, omega, f)?);
    }
    let lambda = op.block(omega.indices(), omega.indices()).symmetric_eigen().eigenvalues.min();
    if !(lambda > 0.0) {
        return Err(Error::LinearAlgebra("interior block is not positive definite"));
    }
    Ok(PoincareBound {
        worst_sampled: worst,
        supremum: 1.0 / libm::sqrt(lambda),
    })
}

/// Bump `(centre, radius)` pairs in units of the half-width of a centred domain.
pub fn random_bump_shapes<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize) -> Vec<([f64; 2], f64)> {
    (0..count)
        .map(|_| {
            let radius = rng.random_range(0.2..0.6);
            let mut centre = [0.0; 2];
            for c in centre.iter_mut().take(dim) {
                *c = rng.random_range(-(0.9 - radius)..(0.9 - radius));
            }
            (centre, radius)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridSpec, Region, RegionSpec};

    #[test]
    fn spearman_of_monotone_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.5];
        assert_eq!(spearman(&x, &[0.1, 0.5, 0.7, 9.0]), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0, 1.0, 1.0, 1.0]), None);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), alloc::vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn slope_of_power_law() {
        let rows = (1..6)
            .map(|k| {
                let d = k as f64 * 0.1;
                StabilityRow { delta: d, dn_star: 3.0 * d * d, b_norm: d, c_norm: d }
            })
            .collect();
        let s = StabilityCurve { rows }.loglog_slope(|r| r.c_norm).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    fn layout() -> RegionLayout {
        let grid = GridSpec::new(1, &[-4.0], &[4.0], 1.0 / 16.0).unwrap();
        RegionLayout::build(
            grid,
            RegionSpec {
                omega: Region::interval(-1.0, 1.0),
                w1: Region::interval(1.5, 3.5),
                w2: Region::interval(-3.5, -1.5),
                core_k: Region::interval(-0.5, 0.5),
                separation_min: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn stability_sweep_starts_at_zero_and_grows() {
        let lay = layout();
        let op = NonlocalOperator::assemble(lay.grid(), 0.75).unwrap();
        let g = lay.grid();
        let dir = Coefficients::new(
            &lay,
            VectorField { components: alloc::vec![bump_field(g, &[0.0], 0.45, 1.0, lay.core_k()).unwrap()] },
            bump_field(g, &[0.1], 0.35, 1.0, lay.core_k()).unwrap(),
        )
        .unwrap();
        let deltas = [0.0, 0.1, 0.2, 0.4];
        let curve = stability_sweep(&op, &lay, &Coefficients::zero(&lay), &dir, &deltas).unwrap();
        assert_eq!(curve.rows[0].dn_star, 0.0);
        assert_eq!(curve.rows[0].c_norm, 0.0);
        for w in curve.rows.windows(2) {
            assert!(w[1].dn_star > w[0].dn_star);
            assert!(w[1].b_norm > w[0].b_norm && w[1].c_norm > w[0].c_norm);
        }
        assert!(stability_sweep(&op, &lay, &Coefficients::zero(&lay), &dir, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn trial_streams_are_reproducible_and_distinct() {
        let a: u64 = trial_rng(7, 3).random();
        let b: u64 = trial_rng(7, 3).random();
        let c: u64 = trial_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
