//! JSON scenario configuration.
//!
//! Parsing goes through `serde_path_to_error` so that type errors carry the
//! offending field path; [`Scenario::validate`] adds range checks with the
//! same path convention.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fracdrift::domain::{bump_field, GridSpec, NodeSet, Region, RegionLayout, RegionSpec, ScalarField, VectorField};
use fracdrift::reconstruct::DEFAULT_TAU_DET;
use fracdrift::runge::{TargetNorm, Whitening, DEFAULT_SWEEP_FLOOR, DEFAULT_SWEEP_POINTS};
use fracdrift::solver::Coefficients;

use crate::error::{LabError, LabResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Fractional order `s`.
    pub order: f64,
    pub grid: GridConfig,
    pub regions: RegionsConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsConfig {
    pub omega: RegionConfig,
    pub w1: RegionConfig,
    pub w2: RegionConfig,
    pub core_k: RegionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Cuboid { lo: Vec<f64>, hi: Vec<f64> },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

/// Named smooth primitives; a field is the sum of its primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
    /// `amplitude · x^β · bump`.
    PolynomialBump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
        beta: Vec<u32>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    /// One primitive list per drift component; empty means `b = 0`.
    #[serde(default)]
    pub b: Vec<Vec<Primitive>>,
    #[serde(default)]
    pub c: Vec<Primitive>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetNormConfig {
    #[default]
    L2,
    Sobolev {
        delta: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteningConfig {
    #[default]
    Gram,
    Raw,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructMode {
    #[default]
    Oracle,
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Selftest(SelftestParams),
    Forward(ForwardParams),
    Dnmap(DnmapParams),
    Runge(RungeParams),
    Reconstruct(ReconstructParams),
    Stability(StabilityParams),
    Genericity(GenericityParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Selftest(_) => "selftest",
            Experiment::Forward(_) => "forward",
            Experiment::Dnmap(_) => "dnmap",
            Experiment::Runge(_) => "runge",
            Experiment::Reconstruct(_) => "reconstruct",
            Experiment::Stability(_) => "stability",
            Experiment::Genericity(_) => "genericity",
        }
    }
}

fn default_getoor_h() -> f64 {
    1.0 / 64.0
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_pairs() -> usize {
    3
}
fn default_poincare_fields() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestParams {
    /// Mesh width of the 1D Getoor check on `[-2, 2]`.
    #[serde(default = "default_getoor_h")]
    pub getoor_h: f64,
    #[serde(default = "default_getoor_tolerance")]
    pub getoor_tolerance: f64,
    /// Relative tolerance for duality and Alessandrini residuals.
    #[serde(default = "default_tolerance")]
    pub identity_tolerance: f64,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_poincare_fields")]
    pub poincare_fields: usize,
}

fn default_getoor_tolerance() -> f64 {
    0.02
}

impl Default for SelftestParams {
    fn default() -> Self {
        Self {
            getoor_h: default_getoor_h(),
            getoor_tolerance: default_getoor_tolerance(),
            identity_tolerance: default_tolerance(),
            pairs: default_pairs(),
            poincare_fields: default_poincare_fields(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardParams {
    /// Exterior datum, supported in W₁.
    pub data: Vec<Primitive>,
    /// Interior source, supported in Ω.
    #[serde(default)]
    pub source: Vec<Primitive>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnmapParams {}

fn default_points() -> usize {
    DEFAULT_SWEEP_POINTS
}
fn default_floor() -> f64 {
    DEFAULT_SWEEP_FLOOR
}
fn default_tau() -> f64 {
    DEFAULT_TAU_DET
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_lambda() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub target_norm: TargetNormConfig,
    #[serde(default)]
    pub whitening: WhiteningConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            points: default_points(),
            floor: default_floor(),
            target_norm: TargetNormConfig::default(),
            whitening: WhiteningConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn target_norm(&self) -> TargetNorm {
        match self.target_norm {
            TargetNormConfig::L2 => TargetNorm::L2,
            TargetNormConfig::Sobolev { delta } => TargetNorm::Sobolev { delta },
        }
    }

    pub fn whitening(&self) -> Whitening {
        match self.whitening {
            WhiteningConfig::Gram => Whitening::Gram,
            WhiteningConfig::Raw => Whitening::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungeParams {
    /// Target on Ω.
    pub target: Vec<Primitive>,
    /// When set, also select the largest α meeting this relative error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructParams {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tau")]
    pub tau_det: f64,
    #[serde(default)]
    pub mode: ReconstructMode,
    /// Tikhonov weight for interior estimation in data mode.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Absolute magnitude of the polynomial perturbation; 0 disables it.
    #[serde(default)]
    pub perturbation: f64,
    /// When set, the run fails unless both relative errors are at most this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityParams {
    pub direction: CoefficientConfig,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericityParams {
    pub trials: u64,
    pub magnitude: f64,
    #[serde(default = "default_tau")]
    pub tau_det: f64,
    #[serde(default = "default_true")]
    pub adversarial: bool,
    /// Accuracy of the polynomial Runge controls.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Excluded-fraction threshold counted as a passing trial.
    #[serde(default = "default_epsilon")]
    pub pass_limit: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// When set, the run fails unless at least this many trials pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_passing: Option<u64>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn parse_error(err: serde_path_to_error::Error<serde_json::Error>) -> LabError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    let path = if path.is_empty() || path == "." { "<root>".to_string() } else { path };
    LabError::config(path, inner.to_string())
}

impl Scenario {
    pub fn from_json(text: &str) -> LabResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(parse_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::config("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> LabResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(LabError::config("schema_version", format!("expected {SCHEMA_VERSION}")));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(LabError::config("name", "must be nonempty and use only [A-Za-z0-9_-]"));
        }
        if !(self.order > 0.0 && self.order < 1.0) {
            return Err(LabError::config("order", "must lie in (0, 1)"));
        }
        let g = &self.grid;
        if !(1..=2).contains(&g.dim) {
            return Err(LabError::config("grid.dim", "must be 1 or 2"));
        }
        if g.box_lo.len() != g.dim {
            return Err(LabError::config("grid.box_lo", "length must equal dim"));
        }
        if g.box_hi.len() != g.dim {
            return Err(LabError::config("grid.box_hi", "length must equal dim"));
        }
        for (a, (lo, hi)) in g.box_lo.iter().zip(&g.box_hi).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(LabError::config(format!("grid.box_hi[{a}]"), "must exceed box_lo"));
            }
        }
        if !(g.h > 0.0 && g.h.is_finite()) {
            return Err(LabError::config("grid.h", "must be positive"));
        }
        let r = &self.regions;
        for (name, region) in [("omega", &r.omega), ("w1", &r.w1), ("w2", &r.w2), ("core_k", &r.core_k)] {
            region.validate(&format!("regions.{name}"), g.dim)?;
        }
        if let Some(sep) = r.separation_min {
            if sep.is_nan() || sep < 0.0 {
                return Err(LabError::config("regions.separation_min", "must be nonnegative"));
            }
        }
        self.coefficients.validate("coefficients", g.dim)?;
        self.validate_experiment()
    }

    fn validate_experiment(&self) -> LabResult<()> {
        let dim = self.grid.dim;
        match &self.experiment {
            Experiment::Selftest(p) => {
                positive("experiment.getoor_h", p.getoor_h)?;
                positive("experiment.getoor_tolerance", p.getoor_tolerance)?;
                positive("experiment.identity_tolerance", p.identity_tolerance)?;
                if p.pairs == 0 {
                    return Err(LabError::config("experiment.pairs", "must be at least 1"));
                }
                if p.poincare_fields == 0 {
                    return Err(LabError::config("experiment.poincare_fields", "must be at least 1"));
                }
            }
            Experiment::Forward(p) => {
                if p.data.is_empty() {
                    return Err(LabError::config("experiment.data", "needs at least one primitive"));
                }
                primitives("experiment.data", &p.data, dim)?;
                primitives("experiment.source", &p.source, dim)?;
            }
            Experiment::Dnmap(_) => {}
            Experiment::Runge(p) => {
                if p.target.is_empty() {
                    return Err(LabError::config("experiment.target", "needs at least one primitive"));
                }
                primitives("experiment.target", &p.target, dim)?;
                if let Some(eps) = p.epsilon {
                    open_unit("experiment.epsilon", eps)?;
                }
                p.sweep.validate("experiment.sweep", self.order)?;
            }
            Experiment::Reconstruct(p) => {
                if !(p.epsilon > 0.0 && p.epsilon < 0.5) {
                    return Err(LabError::config("experiment.epsilon", "must lie in (0, 0.5)"));
                }
                open_unit("experiment.tau_det", p.tau_det)?;
                positive("experiment.lambda", p.lambda)?;
                if !(p.perturbation >= 0.0 && p.perturbation.is_finite()) {
                    return Err(LabError::config("experiment.perturbation", "must be nonnegative"));
                }
                if let Some(m) = p.max_error {
                    positive("experiment.max_error", m)?;
                }
                p.sweep.validate("experiment.sweep", self.order)?;
            }
            Experiment::Stability(p) => {
                p.direction.validate("experiment.direction", dim)?;
                if p.deltas.len() < 2 {
                    return Err(LabError::config("experiment.deltas", "needs at least two points"));
                }
                for (i, w) in p.deltas.windows(2).enumerate() {
                    if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                        return Err(LabError::config(format!("experiment.deltas[{}]", i + 1), "must be strictly increasing"));
                    }
                }
                if p.deltas.iter().any(|d| !d.is_finite()) {
                    return Err(LabError::config("experiment.deltas", "must be finite"));
                }
            }
            Experiment::Genericity(p) => {
                if p.trials == 0 {
                    return Err(LabError::config("experiment.trials", "must be at least 1"));
                }
                if !(p.magnitude >= 0.0 && p.magnitude.is_finite()) {
                    return Err(LabError::config("experiment.magnitude", "must be nonnegative"));
                }
                open_unit("experiment.tau_det", p.tau_det)?;
                open_unit("experiment.epsilon", p.epsilon)?;
                open_unit("experiment.pass_limit", p.pass_limit)?;
                if p.min_passing.is_some_and(|m| m > p.trials) {
                    return Err(LabError::config("experiment.min_passing", "cannot exceed trials"));
                }
                if p.bins == 0 {
                    return Err(LabError::config("experiment.bins", "must be at least 1"));
                }
                p.sweep.validate("experiment.sweep", self.order)?;
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> LabResult<GridSpec> {
        let g = &self.grid;
        GridSpec::new(g.dim, &g.box_lo, &g.box_hi, g.h).map_err(|e| LabError::config("grid", e.to_string()))
    }

    pub fn layout(&self, grid: GridSpec) -> LabResult<RegionLayout> {
        let r = &self.regions;
        let spec = RegionSpec {
            omega: r.omega.to_region(),
            w1: r.w1.to_region(),
            w2: r.w2.to_region(),
            core_k: r.core_k.to_region(),
            separation_min: r.separation_min,
        };
        RegionLayout::build(grid, spec).map_err(|e| LabError::config("regions", e.to_string()))
    }
}

impl SweepConfig {
    fn validate(&self, path: &str, order: f64) -> LabResult<()> {
        if self.points < 2 {
            return Err(LabError::config(format!("{path}.points"), "must be at least 2"));
        }
        open_unit(&format!("{path}.floor"), self.floor)?;
        if let TargetNormConfig::Sobolev { delta } = self.target_norm {
            if !(delta > 0.0 && delta <= order) {
                return Err(LabError::config(format!("{path}.target_norm.sobolev.delta"), "must lie in (0, s]"));
            }
        }
        Ok(())
    }
}

impl RegionConfig {
    pub fn to_region(&self) -> Region {
        match self {
            RegionConfig::Interval { a, b } => Region::interval(*a, *b),
            RegionConfig::Ball { center, radius } => Region::ball(center, *radius),
            RegionConfig::Cuboid { lo, hi } => Region::Cuboid {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            RegionConfig::Annulus { center, inner, outer } => Region::annulus(center, *inner, *outer),
        }
    }

    fn validate(&self, path: &str, dim: usize) -> LabResult<()> {
        let len_ok = |v: &[f64], field: &str| -> LabResult<()> {
            if v.len() != dim {
                return Err(LabError::config(format!("{path}.{field}"), format!("length must equal grid.dim = {dim}")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(LabError::config(format!("{path}.{field}"), "must be finite"));
            }
            Ok(())
        };
        match self {
            RegionConfig::Interval { a, b } => {
                if dim != 1 {
                    return Err(LabError::config(format!("{path}.shape"), "interval requires grid.dim = 1"));
                }
                if !(a.is_finite() && b.is_finite() && b > a) {
                    return Err(LabError::config(format!("{path}.b"), "must exceed a"));
                }
            }
            RegionConfig::Ball { center, radius } => {
                len_ok(center, "center")?;
                positive(&format!("{path}.radius"), *radius)?;
            }
            RegionConfig::Cuboid { lo, hi } => {
                len_ok(lo, "lo")?;
                len_ok(hi, "hi")?;
                if lo.iter().zip(hi).any(|(l, h)| h.partial_cmp(l) != Some(std::cmp::Ordering::Greater)) {
                    return Err(LabError::config(format!("{path}.hi"), "must exceed lo componentwise"));
                }
            }
            RegionConfig::Annulus { center, inner, outer } => {
                len_ok(center, "center")?;
                if !(*inner >= 0.0 && outer > inner && outer.is_finite()) {
                    return Err(LabError::config(format!("{path}.outer"), "need 0 <= inner < outer"));
                }
            }
        }
        Ok(())
    }
}

impl Primitive {
    fn validate(&self, path: &str, dim: usize) -> LabResult<()> {
        let (center, radius, amplitude) = match self {
            Primitive::Bump { center, radius, amplitude } => (center, *radius, *amplitude),
            Primitive::PolynomialBump {
                center,
                radius,
                amplitude,
                beta,
            } => {
                if beta.len() != dim {
                    return Err(LabError::config(format!("{path}.beta"), format!("length must equal grid.dim = {dim}")));
                }
                (center, *radius, *amplitude)
            }
        };
        if center.len() != dim || center.iter().any(|x| !x.is_finite()) {
            return Err(LabError::config(format!("{path}.center"), format!("need {dim} finite coordinates")));
        }
        positive(&format!("{path}.radius"), radius)?;
        if !amplitude.is_finite() {
            return Err(LabError::config(format!("{path}.amplitude"), "must be finite"));
        }
        Ok(())
    }

    /// Nodal values, required to vanish outside `within`.
    pub fn evaluate(&self, grid: &GridSpec, within: &NodeSet) -> fracdrift::Result<ScalarField> {
        match self {
            Primitive::Bump { center, radius, amplitude } => bump_field(grid, center, *radius, *amplitude, within),
            Primitive::PolynomialBump {
                center,
                radius,
                amplitude,
                beta,
            } => {
                let mut f = bump_field(grid, center, *radius, *amplitude, within)?;
                for (i, v) in f.values.iter_mut().enumerate() {
                    let x = grid.coords(i);
                    *v *= beta.iter().enumerate().map(|(a, &p)| x[a].powi(p as i32)).product::<f64>();
                }
                Ok(f)
            }
        }
    }
}

/// Sum of primitives; zero for an empty list.
pub fn evaluate_sum(prims: &[Primitive], grid: &GridSpec, within: &NodeSet) -> fracdrift::Result<ScalarField> {
    let mut out = ScalarField::zeros(grid.node_count());
    for p in prims {
        out.axpy(1.0, &p.evaluate(grid, within)?);
    }
    Ok(out)
}

impl CoefficientConfig {
    fn validate(&self, path: &str, dim: usize) -> LabResult<()> {
        if !self.b.is_empty() && self.b.len() != dim {
            return Err(LabError::config(format!("{path}.b"), format!("need one component list per dimension ({dim})")));
        }
        for (k, comp) in self.b.iter().enumerate() {
            primitives(&format!("{path}.b[{k}]"), comp, dim)?;
        }
        primitives(&format!("{path}.c"), &self.c, dim)
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().all(Vec::is_empty) && self.c.is_empty()
    }

    /// Coefficients supported in K.
    pub fn build(&self, layout: &RegionLayout) -> fracdrift::Result<Coefficients> {
        let grid = layout.grid();
        let n = grid.node_count();
        let mut b = VectorField::zeros(grid.dim(), n);
        for (k, comp) in self.b.iter().enumerate() {
            b.components[k] = evaluate_sum(comp, grid, layout.core_k())?;
        }
        let c = evaluate_sum(&self.c, grid, layout.core_k())?;
        Coefficients::new(layout, b, c)
    }
}

fn primitives(path: &str, prims: &[Primitive], dim: usize) -> LabResult<()> {
    for (i, p) in prims.iter().enumerate() {
        p.validate(&format!("{path}[{i}]"), dim)?;
    }
    Ok(())
}

fn positive(path: &str, x: f64) -> LabResult<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(LabError::config(path, "must be positive"))
    }
}

fn open_unit(path: &str, x: f64) -> LabResult<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(LabError::config(path, "must lie in (0, 1)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "name": "unit",
            "order": 0.75,
            "grid": {"dim": 1, "box_lo": [-4.0], "box_hi": [4.0], "h": 0.0625},
            "regions": {
                "omega": {"shape": "interval", "a": -1.0, "b": 1.0},
                "w1": {"shape": "interval", "a": 1.5, "b": 3.5},
                "w2": {"shape": "interval", "a": -3.5, "b": -1.5},
                "core_k": {"shape": "interval", "a": -0.5, "b": 0.5}
            },
            "experiment": {"kind": "dnmap"}
        })
    }

    fn error_path(v: serde_json::Value) -> String {
        match Scenario::from_json(&v.to_string()) {
            Err(LabError::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = Scenario::from_json(&base().to_string()).unwrap();
        assert_eq!(s.seed, 0);
        assert!(s.coefficients.is_zero());
        assert_eq!(s.experiment.kind(), "dnmap");
    }

    #[test]
    fn roundtrip_through_json() {
        let mut v = base();
        v["experiment"] = serde_json::json!({"kind": "runge", "target": [{"type": "bump", "center": [0.0], "radius": 0.5, "amplitude": 1.0}],
            "sweep": {"target_norm": {"sobolev": {"delta": 0.25}}, "whitening": "raw"}});
        let s = Scenario::from_json(&v.to_string()).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn type_errors_report_field_path() {
        let mut v = base();
        v["grid"]["h"] = serde_json::json!("small");
        assert_eq!(error_path(v), "grid.h");
        let mut v = base();
        v["regions"]["w1"] = serde_json::json!({"shape": "hexagon"});
        assert!(error_path(v).starts_with("regions.w1"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = base();
        v["grid"]["spacing"] = serde_json::json!(0.1);
        assert!(error_path(v).starts_with("grid"));
    }

    #[test]
    fn range_errors_report_field_path() {
        let mut v = base();
        v["order"] = serde_json::json!(1.5);
        assert_eq!(error_path(v), "order");
        let mut v = base();
        v["experiment"] = serde_json::json!({"kind": "stability", "direction": {"c": []}, "deltas": [0.0, 0.2, 0.1]});
        assert_eq!(error_path(v), "experiment.deltas[2]");
        let mut v = base();
        v["coefficients"] = serde_json::json!({"c": [{"type": "bump", "center": [0.0, 1.0], "radius": 0.3, "amplitude": 1.0}]});
        assert_eq!(error_path(v), "coefficients.c[0].center");
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        let err = Scenario::from_json("{ \"name\": ").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn polynomial_bump_multiplies_monomial() {
        let grid = GridSpec::new(1, &[-2.0], &[2.0], 0.25).unwrap();
        let all = NodeSet::from_predicate(grid.node_count(), |_| true);
        let p = Primitive::PolynomialBump {
            center: vec![0.0],
            radius: 1.0,
            amplitude: 2.0,
            beta: vec![2],
        };
        let f = p.evaluate(&grid, &all).unwrap();
        let plain = bump_field(&grid, &[0.0], 1.0, 2.0, &all).unwrap();
        for i in 0..grid.node_count() {
            let x = grid.coords(i)[0];
            assert!((f.values[i] - x * x * plain.values[i]).abs() < 1e-15);
        }
    }
}
