//! Scenario execution: builds the discrete problem, dispatches the experiment
//! and persists CSV tables plus `summary.json`.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use fracdrift::dnmap::{alessandrini_residual, DnMatrix};
use fracdrift::domain::{bump_field, GridSpec, NodeSet, RegionLayout, ScalarField, VectorField};
use fracdrift::fraclap::{getoor_constant, NonlocalOperator};
use fracdrift::reconstruct::{
    generate_measurements, perturb_measurements, recover_interior_field, recover_pointwise, vanishing_order_check,
    MeasurementSet, PolynomialControls,
};
use fracdrift::runge::{RungeControl, RungeOperator};
use fracdrift::solver::{Coefficients, DirichletSystem};
use fracdrift::studies::{
    genericity_trial, poincare_bound, random_bump_shapes, spearman, stability_sweep, trial_rng, GenericityConfig,
    GenericitySummary,
};
use fracdrift::dnmap::dn_apply;

use crate::cache::{dump_weights_csv, WeightCache};
use crate::config::{
    evaluate_sum, Experiment, ForwardParams, GenericityParams, Primitive, ReconstructMode, ReconstructParams,
    RungeParams, Scenario, SelftestParams, StabilityParams, SCHEMA_VERSION,
};
use crate::error::{LabError, LabResult};
use crate::output::{fmt_f64, RunDir, Table};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub weight_cache: Option<PathBuf>,
    pub dump_weights: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Value,
    /// False when the experiment ran but its checks did not hold.
    pub passed: bool,
}

struct Problem {
    op: NonlocalOperator,
    layout: RegionLayout,
    coeffs: Coefficients,
    seed: u64,
}

struct Report {
    results: Value,
    passed: bool,
}

/// Runs one scenario. The summary is written even when the experiment fails;
/// experiment errors are returned after it is on disk.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> LabResult<RunOutcome> {
    scenario.validate()?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let grid = scenario.grid_spec()?;
    let layout = scenario.layout(grid.clone())?;
    let coeffs = scenario
        .coefficients
        .build(&layout)
        .map_err(|e| LabError::config("coefficients", e.to_string()))?;
    check_experiment_fields(scenario, &layout)?;

    let mut dir = RunDir::create(&opts.out_dir, &scenario.name)?;
    let start = Instant::now();
    let (op, cache_state) = match &opts.weight_cache {
        Some(path) => {
            let (op, hit) = WeightCache::new(path).load_or_assemble(&grid, scenario.order)?;
            (op, if hit { "hit" } else { "miss" })
        }
        None => (NonlocalOperator::assemble(&grid, scenario.order)?, "disabled"),
    };
    let assemble_seconds = start.elapsed().as_secs_f64();
    if opts.dump_weights {
        let path = dir.path("weights.csv");
        dump_weights_csv(&op, &path)?;
    }
    let problem = Problem {
        op,
        layout,
        coeffs,
        seed,
    };
    let run_start = Instant::now();
    let outcome = dispatch(scenario, &problem, &mut dir);
    let run_seconds = run_start.elapsed().as_secs_f64();

    let (status, results, error, passed) = match &outcome {
        Ok(r) => (if r.passed { "ok" } else { "failed" }, r.results.clone(), Value::Null, r.passed),
        Err(e) => ("error", Value::Null, Value::String(e.to_string()), false),
    };
    let mut files: Vec<String> = dir.written().to_vec();
    files.push("summary.json".into());
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "name": scenario.name,
        "kind": scenario.experiment.kind(),
        "status": status,
        "error": error,
        "seed": seed,
        "versions": {"fracdrift": fracdrift::VERSION, "fracdrift_lab": env!("CARGO_PKG_VERSION")},
        "h": grid.h(),
        "s": scenario.order,
        "grid": {"dim": grid.dim(), "box_lo": grid.box_lo(), "box_hi": grid.box_hi(), "nodes": grid.node_count()},
        "timings": {"assemble_seconds": assemble_seconds, "run_seconds": run_seconds,
                    "total_seconds": start.elapsed().as_secs_f64()},
        "weight_cache": cache_state,
        "results": results,
        "files": files,
        "scenario": serde_json::to_value(scenario)?,
    });
    dir.json("summary.json", &summary)?;
    outcome?;
    Ok(RunOutcome {
        dir: dir.root().to_path_buf(),
        summary,
        passed,
    })
}

/// Evaluates every primitive list up front so placement errors are config errors.
fn check_experiment_fields(scenario: &Scenario, layout: &RegionLayout) -> LabResult<()> {
    match &scenario.experiment {
        Experiment::Forward(p) => {
            field_on(&p.data, layout.grid(), layout.w1(), "experiment.data")?;
            field_on(&p.source, layout.grid(), layout.omega(), "experiment.source")?;
        }
        Experiment::Runge(p) => {
            field_on(&p.target, layout.grid(), layout.omega(), "experiment.target")?;
        }
        Experiment::Stability(p) => {
            p.direction
                .build(layout)
                .map_err(|e| LabError::config("experiment.direction", e.to_string()))?;
        }
        _ => {}
    }
    Ok(())
}

fn field_on(prims: &[Primitive], grid: &GridSpec, set: &NodeSet, path: &str) -> LabResult<ScalarField> {
    evaluate_sum(prims, grid, set).map_err(|e| LabError::config(path, e.to_string()))
}

fn dispatch(scenario: &Scenario, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    match &scenario.experiment {
        Experiment::Selftest(p) => selftest(p, pb, dir),
        Experiment::Forward(p) => forward(p, pb, dir),
        Experiment::Dnmap(_) => dnmap(scenario, pb, dir),
        Experiment::Runge(p) => runge(p, pb, dir),
        Experiment::Reconstruct(p) => reconstruct(p, pb, dir),
        Experiment::Stability(p) => stability(p, pb, dir),
        Experiment::Genericity(p) => genericity(p, pb, dir),
    }
}

fn coord_header(dim: usize) -> Vec<String> {
    (0..dim).map(|a| format!("x{a}")).collect()
}

fn coord_cells(grid: &GridSpec, i: usize) -> Vec<String> {
    let x = grid.coords(i);
    x[..grid.dim()].iter().map(|&v| fmt_f64(v)).collect()
}

/// Random smooth coefficients supported in K with drift and potential amplitudes up to `scale`.
pub fn random_coefficients<R: Rng + ?Sized>(layout: &RegionLayout, rng: &mut R, scale: f64) -> fracdrift::Result<Coefficients> {
    let grid = layout.grid();
    let dim = grid.dim();
    let (lo, hi) = layout.spec().core_k.bounds();
    let half = (0..dim).map(|a| 0.5 * (hi[a] - lo[a])).fold(f64::INFINITY, f64::min);
    let offset = if dim == 1 { 0.4 } else { 0.28 };
    let bump = |rng: &mut R, amp: f64| -> fracdrift::Result<ScalarField> {
        for _ in 0..32 {
            let centre: Vec<f64> = (0..dim)
                .map(|a| 0.5 * (lo[a] + hi[a]) + half * rng.random_range(-offset..offset))
                .collect();
            let radius = half * rng.random_range(0.3..0.5);
            match bump_field(grid, &centre, radius, amp, layout.core_k()) {
                Ok(f) if f.max_abs() > 0.0 => return Ok(f),
                Ok(_) | Err(fracdrift::Error::RegionOverflow) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(fracdrift::Error::InvalidParameter("K too small for random bumps".into()))
    };
    let mut b = VectorField::zeros(dim, grid.node_count());
    for comp in b.components.iter_mut() {
        let amp = scale * rng.random_range(-1.0..1.0);
        *comp = bump(rng, amp)?;
    }
    let amp = scale * rng.random_range(-0.5..1.0);
    let c = bump(rng, amp)?;
    Coefficients::new(layout, b, c)
}

/// Random bump supported in `set`, radius a fraction of the set's node spread.
pub fn random_bump_in<R: Rng + ?Sized>(grid: &GridSpec, set: &NodeSet, rng: &mut R) -> fracdrift::Result<ScalarField> {
    let dim = grid.dim();
    let idx = set.indices();
    for _ in 0..64 {
        let centre = grid.coords(idx[rng.random_range(0..idx.len())]);
        let radius = rng.random_range(0.15..0.5);
        let amp = rng.random_range(0.5..1.5);
        match bump_field(grid, &centre[..dim], radius, amp, set) {
            Ok(f) if f.max_abs() > 0.0 => return Ok(f),
            Ok(_) | Err(fracdrift::Error::RegionOverflow) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(fracdrift::Error::InvalidParameter("set too thin for random bumps".into()))
}

/// Worst relative Getoor error on `|x| ≤ 1/2` for the 1D profile `(1 − x²)_+^s` on `[-2, 2]`.
pub fn getoor_error(h: f64, s: f64) -> fracdrift::Result<f64> {
    let grid = GridSpec::new(1, &[-2.0], &[2.0], h)?;
    let op = NonlocalOperator::assemble(&grid, s)?;
    let u = ScalarField::from_fn(&grid, |x| (1.0 - x[0] * x[0]).max(0.0).powf(s));
    let lu = op.apply(&u);
    let exact = getoor_constant(1, s);
    Ok((0..grid.node_count())
        .filter(|&i| grid.coords(i)[0].abs() <= 0.5)
        .map(|i| (lu.values[i] - exact).abs() / exact)
        .fold(0.0, f64::max))
}

fn check_row(table: &mut Table, check: &str, index: usize, value: f64, tolerance: f64, pass: bool) {
    table.push(vec![
        check.into(),
        index.to_string(),
        fmt_f64(value),
        fmt_f64(tolerance),
        pass.to_string(),
    ]);
}

fn selftest(p: &SelftestParams, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    let s = pb.op.order();
    let layout = &pb.layout;
    let mut table = Table::new(["check", "index", "value", "tolerance", "pass"]);
    let mut all = true;

    let getoor = getoor_error(p.getoor_h, s)?;
    let ok = getoor <= p.getoor_tolerance;
    all &= ok;
    check_row(&mut table, "getoor", 0, getoor, p.getoor_tolerance, ok);

    let mut worst_duality: f64 = 0.0;
    let mut worst_alessandrini: f64 = 0.0;
    for pair in 0..p.pairs {
        let mut rng = trial_rng(pb.seed, pair as u64);
        let first = random_coefficients(layout, &mut rng, 0.5)?;
        let second = random_coefficients(layout, &mut rng, 0.5)?;
        let sys1 = DirichletSystem::new(&pb.op, layout, first)?;
        let sys2 = DirichletSystem::new(&pb.op, layout, second)?;
        let duality = DnMatrix::build(&sys1)?.duality_defect();
        let ok = duality <= p.identity_tolerance;
        all &= ok;
        worst_duality = worst_duality.max(duality);
        check_row(&mut table, "duality", pair, duality, p.identity_tolerance, ok);
        let f1 = random_bump_in(layout.grid(), layout.w1(), &mut rng)?;
        let f2 = random_bump_in(layout.grid(), layout.w2(), &mut rng)?;
        let ales = alessandrini_residual(&sys1, &sys2, &f1, &f2)?.residual;
        let ok = ales <= p.identity_tolerance;
        all &= ok;
        worst_alessandrini = worst_alessandrini.max(ales);
        check_row(&mut table, "alessandrini", pair, ales, p.identity_tolerance, ok);
    }

    let mut rng = trial_rng(pb.seed, p.pairs as u64);
    let fields = poincare_fields(layout, &mut rng, p.poincare_fields)?;
    let bound = poincare_bound(&pb.op, layout.omega(), &fields)?;
    let ok = bound.worst_sampled.is_finite() && bound.worst_sampled <= bound.supremum * (1.0 + 1e-10);
    all &= ok;
    check_row(&mut table, "poincare", 0, bound.worst_sampled, bound.supremum, ok);

    dir.table("selftest.csv", &table)?;
    Ok(Report {
        results: json!({
            "getoor_error": getoor,
            "worst_duality_defect": worst_duality,
            "worst_alessandrini_residual": worst_alessandrini,
            "poincare_worst_sampled": bound.worst_sampled,
            "poincare_supremum": bound.supremum,
            "checks": table.len(),
        }),
        passed: all,
    })
}

/// Random bumps inside the bounding box of Ω, kept when supported in Ω.
fn poincare_fields<R: Rng + ?Sized>(layout: &RegionLayout, rng: &mut R, count: usize) -> LabResult<Vec<ScalarField>> {
    let grid = layout.grid();
    let dim = grid.dim();
    let (lo, hi) = layout.spec().omega.bounds();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 64 * count {
            return Err(fracdrift::Error::InvalidParameter("Ω too small for random bumps".into()).into());
        }
        let (centre, radius) = random_bump_shapes(rng, 1, dim)[0];
        let half = (0..dim).map(|a| 0.5 * (hi[a] - lo[a])).fold(f64::INFINITY, f64::min);
        let c: Vec<f64> = (0..dim).map(|a| 0.5 * (lo[a] + hi[a]) + half * centre[a]).collect();
        match bump_field(grid, &c, half * radius, 1.0, layout.omega()) {
            Ok(f) if f.max_abs() > 0.0 => out.push(f),
            Ok(_) | Err(fracdrift::Error::RegionOverflow) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn forward(p: &ForwardParams, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    let layout = &pb.layout;
    let grid = layout.grid();
    let f = field_on(&p.data, grid, layout.w1(), "experiment.data")?;
    let source = field_on(&p.source, grid, layout.omega(), "experiment.source")?;
    let sys = DirichletSystem::new(&pb.op, layout, pb.coeffs.clone())?;
    let sol = sys.solve_forward(&f, (!p.source.is_empty()).then_some(&source))?;
    let report = sys.condition();
    let dim = grid.dim();
    let mut header = vec!["node".to_string()];
    header.extend(coord_header(dim));
    header.extend(["f", "source", "u"].map(String::from));
    header.extend((0..dim).map(|a| format!("b{a}")));
    header.push("c".into());
    let mut table = Table::new(header);
    for i in 0..grid.node_count() {
        let mut row = vec![i.to_string()];
        row.extend(coord_cells(grid, i));
        row.extend([f.values[i], source.values[i], sol.u.values[i]].map(fmt_f64));
        row.extend(pb.coeffs.b.components.iter().map(|b| fmt_f64(b.values[i])));
        row.push(fmt_f64(pb.coeffs.c.values[i]));
        table.push(row);
    }
    dir.table("fields.csv", &table)?;
    let dn = dn_apply(&sys, &f)?;
    let relative = if sol.rhs_norm > 0.0 { sol.residual_norm / sol.rhs_norm } else { sol.residual_norm };
    Ok(Report {
        results: json!({
            "residual_norm": sol.residual_norm,
            "relative_residual": relative,
            "interior_condition": sol.interior_condition,
            "smallest_singular_value": report.smallest_singular_value,
            "largest_singular_value": report.largest_singular_value,
            "u_max_abs": sol.u.max_abs(),
            "dn_l2_on_w2": dn.l2_on(layout.w2(), grid),
        }),
        passed: true,
    })
}

/// SHA-256 over the bit patterns of all coefficient values.
pub fn coefficient_hash(coeffs: &Coefficients) -> String {
    let mut hasher = Sha256::new();
    for comp in &coeffs.b.components {
        for v in &comp.values {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    for v in &coeffs.c.values {
        hasher.update(v.to_bits().to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn dnmap(scenario: &Scenario, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    let layout = &pb.layout;
    let grid = layout.grid();
    let sys = DirichletSystem::new(&pb.op, layout, pb.coeffs.clone())?;
    let dn = DnMatrix::build(&sys)?;
    let w1 = layout.w1().indices();
    let w2 = layout.w2().indices();
    let mut header = vec!["w2_node".to_string()];
    header.extend(w1.iter().map(|j| format!("w1_{j}")));
    let mut table = Table::new(header);
    for (r, &i) in w2.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend((0..w1.len()).map(|c| fmt_f64(dn.map[(r, c)])));
        table.push(row);
    }
    dir.table("dn_map.csv", &table)?;
    let hash = coefficient_hash(&pb.coeffs);
    let sidecar = json!({
        "schema_version": SCHEMA_VERSION,
        "s": pb.op.order(),
        "h": grid.h(),
        "rows": "w2 nodes",
        "columns": "w1 nodes",
        "regions": serde_json::to_value(&scenario.regions)?,
        "coefficient_sha256": hash,
    });
    dir.json("dn_map.json", &sidecar)?;
    let defect = dn.duality_defect();
    Ok(Report {
        results: json!({
            "rows": w2.len(),
            "columns": w1.len(),
            "duality_defect": defect,
            "max_abs_entry": dn.map.amax(),
            "coefficient_sha256": hash,
        }),
        passed: true,
    })
}

fn runge(p: &RungeParams, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    let layout = &pb.layout;
    let target = field_on(&p.target, layout.grid(), layout.omega(), "experiment.target")?;
    let sys = DirichletSystem::new(&pb.op, layout, pb.coeffs.clone())?;
    let op = RungeOperator::assemble(&sys, layout.w1(), p.sweep.target_norm(), p.sweep.whitening())?;
    let sweep = op.alpha_sweep(&target, p.sweep.points, p.sweep.floor)?;
    let mut table = Table::new(["alpha", "error", "spectral_error", "roundoff", "control_norm", "modes"]);
    for c in &sweep {
        let spectral = if c.target_norm > 0.0 { c.spectral_error / c.target_norm } else { c.spectral_error };
        table.push(vec![
            fmt_f64(c.alpha),
            fmt_f64(c.relative_error()),
            fmt_f64(spectral),
            fmt_f64(op.error_roundoff(c)),
            fmt_f64(c.control_norm),
            c.modes.to_string(),
        ]);
    }
    dir.table("sweep.csv", &table)?;
    let mut spectrum = Table::new(["index", "sigma"]);
    for (j, s) in op.spectrum().sigma.iter().enumerate() {
        spectrum.push(vec![j.to_string(), fmt_f64(*s)]);
    }
    dir.table("spectrum.csv", &spectrum)?;
    let errors: Vec<f64> = sweep.iter().map(|c| c.relative_error()).collect();
    let norms: Vec<f64> = sweep.iter().map(|c| c.control_norm).collect();
    let mut results = json!({
        "points": sweep.len(),
        "best_error": errors.iter().copied().fold(f64::INFINITY, f64::min),
        "error_nonincreasing": sweep_error_nonincreasing(&op, &sweep),
        "control_norm_nondecreasing": norms.windows(2).all(|w| w[1] >= w[0]),
        "sigma_max": op.spectrum().largest(),
    });
    let mut passed = true;
    if let Some(eps) = p.epsilon {
        match op.approximate_target(&target, eps, p.sweep.points, p.sweep.floor) {
            Ok(c) => {
                results["selected"] = json!({"alpha": c.alpha, "error": c.relative_error(),
                                             "control_norm": c.control_norm, "modes": c.modes});
            }
            Err(fracdrift::Error::TargetUnreachable { best }) => {
                results["selected"] = json!({"unreachable": true, "best_error": best});
                passed = false;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Report { results, passed })
}

/// Direct errors nonincreasing up to their floating-point uncertainty.
pub fn sweep_error_nonincreasing(op: &RungeOperator, sweep: &[RungeControl]) -> bool {
    sweep.windows(2).all(|w| {
        w[1].relative_error() <= w[0].relative_error() + op.error_roundoff(&w[0]) + op.error_roundoff(&w[1])
    })
}

fn reconstruct(p: &ReconstructParams, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    let layout = &pb.layout;
    let grid = layout.grid();
    let dim = grid.dim();
    let sys = DirichletSystem::new(&pb.op, layout, pb.coeffs.clone())?;
    let runge = RungeOperator::assemble(&sys, layout.w1(), p.sweep.target_norm(), p.sweep.whitening())?;
    let (mut mset, controls) = generate_measurements(&sys, &runge, p.epsilon, p.sweep.points, p.sweep.floor)?;
    if p.perturbation > 0.0 {
        let poly = PolynomialControls::build(&sys, &runge, p.epsilon, p.sweep.points, p.sweep.floor)?;
        let mut rng = trial_rng(pb.seed, 0);
        mset = perturb_measurements(&mset, &sys, &poly, p.perturbation, &mut rng)?;
    }
    if p.mode == ReconstructMode::Data {
        let mut estimates = Vec::with_capacity(mset.data.len());
        for f in &mset.data {
            let observed = dn_apply(&sys, f)?;
            estimates.push(recover_interior_field(&pb.op, layout, f, &observed, p.lambda)?);
        }
        mset = MeasurementSet::from_fields(&pb.op, layout, mset.data.clone(), estimates);
    }
    let report = vanishing_order_check(layout, &mset.det_field, dim, p.tau_det);
    let rec = recover_pointwise(&mset, layout, &report)?;
    let (eb, ec) = rec.errors_against(&pb.coeffs, layout);

    let mut header = vec!["node".to_string()];
    header.extend(coord_header(dim));
    header.extend((0..dim).map(|a| format!("b{a}_hat")));
    header.push("c_hat".into());
    header.extend((0..dim).map(|a| format!("b{a}_true")));
    header.extend(["c_true", "det_h", "status"].map(String::from));
    let mut table = Table::new(header);
    for &i in layout.core_k().indices() {
        let mut row = vec![i.to_string()];
        row.extend(coord_cells(grid, i));
        row.extend(rec.b_hat.components.iter().map(|b| fmt_f64(b.values[i])));
        row.push(fmt_f64(rec.c_hat.values[i]));
        row.extend(pb.coeffs.b.components.iter().map(|b| fmt_f64(b.values[i])));
        row.push(fmt_f64(pb.coeffs.c.values[i]));
        row.push(fmt_f64(mset.det_field.values[i]));
        let status = if rec.solved.contains(i) {
            "solved"
        } else if rec.downgraded.contains(&i) {
            "downgraded"
        } else {
            "filled"
        };
        row.push(status.into());
        table.push(row);
    }
    dir.table("reconstruction.csv", &table)?;
    let passed = match p.max_error {
        Some(limit) => eb <= limit && ec <= limit,
        None => true,
    };
    Ok(Report {
        results: json!({
            "mode": match p.mode { ReconstructMode::Oracle => "oracle", ReconstructMode::Data => "data" },
            "error_b": eb,
            "error_c": ec,
            "max_abs_recovered": rec.max_abs(),
            "excluded_fraction": report.excluded_fraction,
            "threshold": report.threshold,
            "tau_det": p.tau_det,
            "epsilon": p.epsilon,
            "perturbation": p.perturbation,
            "solved": rec.solved.len(),
            "filled": rec.filled.len(),
            "downgraded": rec.downgraded.len(),
            "controls": controls.iter().map(|c| json!({"alpha": c.alpha, "error": c.relative_error(),
                                                       "control_norm": c.control_norm})).collect::<Vec<_>>(),
        }),
        passed,
    })
}

fn stability(p: &StabilityParams, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    let layout = &pb.layout;
    let direction = p.direction.build(layout)?;
    let curve = stability_sweep(&pb.op, layout, &pb.coeffs, &direction, &p.deltas)?;
    let mut table = Table::new(["delta", "dn_star", "b_norm", "c_norm"]);
    for r in &curve.rows {
        table.push([r.delta, r.dn_star, r.b_norm, r.c_norm].map(fmt_f64).to_vec());
    }
    dir.table("stability.csv", &table)?;
    let positive: Vec<_> = curve.rows.iter().filter(|r| r.dn_star > 0.0).collect();
    let logs = |f: &dyn Fn(&&fracdrift::studies::StabilityRow) -> f64| -> Vec<f64> {
        positive.iter().map(|r| f(r).max(f64::MIN_POSITIVE).ln()).collect()
    };
    let dn = logs(&|r| r.dn_star);
    let b = logs(&|r| r.b_norm);
    let c = logs(&|r| r.c_norm);
    let rho_b = spearman(&dn, &b);
    let rho_c = spearman(&dn, &c);
    Ok(Report {
        results: json!({
            "points": curve.rows.len(),
            "spearman_b": rho_b,
            "spearman_c": rho_c,
            "loglog_slope_b": curve.loglog_slope(|r| r.b_norm),
            "loglog_slope_c": curve.loglog_slope(|r| r.c_norm),
            "dn_star_increasing": curve.rows.windows(2).all(|w| w[1].dn_star > w[0].dn_star),
        }),
        passed: true,
    })
}

/// Runs the genericity trials on the rayon pool; results are in trial order.
pub fn run_genericity(
    sys: &DirichletSystem<'_>,
    poly: &PolynomialControls,
    cfg: &GenericityConfig,
) -> fracdrift::Result<GenericitySummary> {
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| genericity_trial(sys, poly, cfg, t))
        .collect::<fracdrift::Result<Vec<_>>>()?;
    Ok(GenericitySummary {
        seed: cfg.seed,
        magnitude: cfg.magnitude,
        tau_det: cfg.tau_det,
        trials,
    })
}

fn genericity(p: &GenericityParams, pb: &Problem, dir: &mut RunDir) -> LabResult<Report> {
    let layout = &pb.layout;
    let sys = DirichletSystem::new(&pb.op, layout, pb.coeffs.clone())?;
    let runge = RungeOperator::assemble(&sys, layout.w1(), p.sweep.target_norm(), p.sweep.whitening())?;
    let poly = PolynomialControls::build(&sys, &runge, p.epsilon, p.sweep.points, p.sweep.floor)?;
    let cfg = GenericityConfig {
        trials: p.trials,
        magnitude: p.magnitude,
        seed: pb.seed,
        tau_det: p.tau_det,
        adversarial: p.adversarial,
    };
    let summary = run_genericity(&sys, &poly, &cfg)?;
    let mut table = Table::new(["trial", "excluded_before", "excluded_after"]);
    for t in &summary.trials {
        table.push(vec![t.trial.to_string(), fmt_f64(t.excluded_before), fmt_f64(t.excluded_after)]);
    }
    dir.table("genericity.csv", &table)?;
    let mut hist = Table::new(["bin_lo", "bin_hi", "before", "after"]);
    for (k, (before, after)) in summary.histogram(p.bins).iter().enumerate() {
        let w = 1.0 / p.bins as f64;
        hist.push(vec![fmt_f64(k as f64 * w), fmt_f64((k + 1) as f64 * w), before.to_string(), after.to_string()]);
    }
    dir.table("histogram.csv", &hist)?;
    let passing = summary.passing(p.pass_limit);
    let passed = p.min_passing.is_none_or(|m| passing as u64 >= m);
    Ok(Report {
        results: json!({
            "trials": p.trials,
            "magnitude": p.magnitude,
            "tau_det": p.tau_det,
            "adversarial": p.adversarial,
            "pass_limit": p.pass_limit,
            "passing": passing,
            "polynomial_degree": poly.degree,
            "polynomial_controls": poly.controls.len(),
            "mean_excluded_before": mean(summary.trials.iter().map(|t| t.excluded_before)),
            "mean_excluded_after": mean(summary.trials.iter().map(|t| t.excluded_after)),
        }),
        passed,
    })
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len().max(1) as f64;
    it.sum::<f64>() / n
}
