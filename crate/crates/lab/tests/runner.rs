use fracdrift_lab::scenarios::builtin;
use fracdrift_lab::{run_scenario, RunOptions};

fn run(name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> serde_json::Value {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(builtin(name).unwrap().unwrap()).unwrap();
    edit(&mut v);
    let scenario = fracdrift_lab::Scenario::from_json(&v.to_string()).unwrap();
    let opts = RunOptions {
        out_dir: dir.path().to_path_buf(),
        ..RunOptions::default()
    };
    run_scenario(&scenario, &opts).unwrap().summary
}

#[test]
fn planted_reconstruction_reports_errors_and_seed() {
    let s = run("reconstruct", |v| {
        v["grid"]["h"] = serde_json::json!(1.0 / 32.0);
        v["seed"] = serde_json::json!(5);
    });
    assert_eq!(s["status"], "ok");
    assert_eq!(s["seed"], 5);
    assert!(s["results"]["error_b"].as_f64().unwrap() <= 0.05);
    assert!(s["results"]["error_c"].as_f64().unwrap() <= 0.05);
    assert_eq!(s["results"]["tau_det"], 1e-3);
}

#[test]
fn perturbed_reconstruction_still_recovers() {
    let s = run("reconstruct", |v| {
        v["grid"]["h"] = serde_json::json!(1.0 / 32.0);
        v["experiment"]["perturbation"] = serde_json::json!(0.01);
    });
    assert_eq!(s["status"], "ok", "{s}");
}

#[test]
fn zero_magnitude_genericity_leaves_fractions_unchanged() {
    let s = run("genericity", |v| {
        v["grid"]["h"] = serde_json::json!(1.0 / 32.0);
        v["experiment"]["trials"] = serde_json::json!(10);
        v["experiment"]["magnitude"] = serde_json::json!(0.0);
        v["experiment"].as_object_mut().unwrap().remove("min_passing");
    });
    assert_eq!(s["results"]["mean_excluded_before"], s["results"]["mean_excluded_after"]);
    assert_eq!(s["results"]["passing"], 0);
}

#[test]
fn stability_emits_rank_correlations_and_slopes() {
    let s = run("stability", |_| {});
    assert_eq!(s["results"]["spearman_c"], 1.0);
    assert!(s["results"]["loglog_slope_c"].is_f64());
    assert_eq!(s["results"]["dn_star_increasing"], true);
}

#[test]
fn data_mode_runs_and_is_labelled() {
    let s = run("reconstruct-data", |_| {});
    assert_eq!(s["results"]["mode"], "data");
    assert!(s["results"]["error_c"].as_f64().unwrap().is_finite());
}
