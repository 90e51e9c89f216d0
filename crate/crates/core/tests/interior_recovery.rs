use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracdrift::dnmap::dn_apply;
use fracdrift::domain::{bump_field, GridSpec, Region, RegionLayout, RegionSpec, ScalarField, VectorField};
use fracdrift::fraclap::NonlocalOperator;
use fracdrift::reconstruct::recover_interior_field;
use fracdrift::solver::{Coefficients, DirichletSystem};

struct Case {
    op: NonlocalOperator,
    layout: RegionLayout,
    f: ScalarField,
    truth: ScalarField,
    observed: ScalarField,
}

fn case() -> Case {
    let grid = GridSpec::new(1, &[-4.0], &[4.0], 1.0 / 32.0).unwrap();
    let layout = RegionLayout::build(
        grid.clone(),
        RegionSpec {
            omega: Region::interval(-1.0, 1.0),
            w1: Region::interval(1.5, 3.5),
            w2: Region::interval(-3.5, -1.5),
            core_k: Region::interval(-0.5, 0.5),
            separation_min: None,
        },
    )
    .unwrap();
    let op = NonlocalOperator::assemble(&grid, 0.75).unwrap();
    let b = bump_field(&grid, &[0.0], 0.45, 0.3, layout.core_k()).unwrap();
    let c = bump_field(&grid, &[0.0], 0.45, 0.5, layout.core_k()).unwrap();
    let coeffs = Coefficients::new(&layout, VectorField { components: vec![b] }, c).unwrap();
    let sys = DirichletSystem::new(&op, &layout, coeffs).unwrap();
    let f = bump_field(&grid, &[2.5], 0.8, 1.0, layout.w1()).unwrap();
    let truth = sys.solve_forward(&f, None).unwrap().u;
    let observed = dn_apply(&sys, &f).unwrap();
    Case {
        op,
        layout,
        f,
        truth,
        observed,
    }
}

fn error(c: &Case, observed: &ScalarField, lambda: f64) -> f64 {
    let grid = c.layout.grid();
    let u = recover_interior_field(&c.op, &c.layout, &c.f, observed, lambda).unwrap();
    (&u - &c.truth).l2_on(c.layout.omega(), grid) / c.truth.l2_on(c.layout.omega(), grid)
}

#[test]
fn noiseless_error_is_nonincreasing_as_lambda_shrinks() {
    let c = case();
    let errs: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&l| error(&c, &c.observed, l)).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn noisy_error_curve_is_u_shaped() {
    let c = case();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scale = c.observed.max_abs();
    let mut noisy = c.observed.clone();
    for &i in c.layout.w2().indices() {
        noisy.values[i] += 0.01 * scale * rng.random_range(-1.0..1.0);
    }
    let lambdas = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-10];
    let errs: Vec<f64> = lambdas.iter().map(|&l| error(&c, &noisy, l)).collect();
    let best = errs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap();
    assert!(best > 0 && best < lambdas.len() - 1, "{errs:?}");
    assert!(errs[..=best].windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    assert!(errs[best..].windows(2).all(|w| w[1] >= w[0]), "{errs:?}");
}
