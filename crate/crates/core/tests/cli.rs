//! The `rksat` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use rksat::formula::{exact_gibbs, generate, Formula};
use rksat::model::{c_beta, solve_q_c, TOL};
use serde_json::Value;

fn rksat(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rksat"));
    cmd.args(args).env_remove("RKSAT_OUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("RKSAT_OUT_DIR", d);
    }
    cmd.output().expect("binary runs")
}

fn record(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 1, "one record expected: {text}");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn q_record() {
    let o = rksat(&["q", "--k", "4", "--beta", "2"], None);
    assert_eq!(o.status.code(), Some(0));
    let r = record(&o);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "q");
    assert_eq!(r["seed"], 1);
    assert_eq!(r["params"]["k"], 4);
    assert!(r["wall_time_s"].is_f64());
    let q = solve_q_c(4, c_beta(2.0), TOL).unwrap();
    assert_eq!(r["result"]["q"].as_f64().unwrap(), q);
    assert!(r["result"]["residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn formula_exact_matches_library() {
    let o = rksat(
        &["formula", "exact", "--n", "10", "--k", "3", "--d", "6", "--beta", "1", "--seed", "5"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let r = record(&o);
    let lib = exact_gibbs(&generate(10, 3, 6, 5).unwrap(), 1.0).unwrap();
    assert_eq!(r["result"]["ln_z"].as_f64().unwrap(), lib.ln_z);
    let m: Vec<f64> = serde_json::from_value(r["result"]["marginals"].clone()).unwrap();
    assert_eq!(m, lib.marginals);
}

#[test]
fn beta_c_output_is_byte_identical_across_runs_and_workers() {
    let args = [
        "beta-c", "--k", "4", "--d", "40", "--N", "2000", "--samples-per-n", "10", "--beta-lo", "2", "--beta-hi",
        "5", "--points", "6", "--seed", "7", "--omit-timing",
    ];
    let a = rksat(&args, None);
    assert!(matches!(a.status.code(), Some(0) | Some(3)));
    let b = rksat(&args, None);
    let mut wide = args.to_vec();
    wide.extend(["--workers", "3"]);
    let c = rksat(&wide, None);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let r = record(&a);
    assert!(r.get("wall_time_s").is_none());
    assert_eq!(r["result"]["trace"].as_array().unwrap().len(), 6);
}

#[test]
fn invalid_parameters_exit_with_two() {
    let o = rksat(&["popdyn", "--k", "4", "--d", "7", "--beta", "1"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("d must be even"));
    assert!(o.stdout.is_empty());
    let o = rksat(&["q", "--k", "4"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = rksat(&["q", "--k", "4", "--beta", "1", "--csv"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_three_and_still_reports() {
    let o = rksat(&["popdyn", "--k", "4", "--d", "30", "--beta", "3", "--N", "1000", "--max-iters", "2"], None);
    assert_eq!(o.status.code(), Some(3));
    let r = record(&o);
    assert_eq!(r["converged"], false);
    assert_eq!(r["result"]["iterations"], 2);
}

#[test]
fn formula_files_and_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = rksat(
        &["formula", "gen", "--n", "12", "--k", "3", "--d", "4", "--seed", "9", "--write", "f.cnf"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0));
    let path = dir.path().join("f.cnf");
    let f = Formula::from_text(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(f, generate(12, 3, 4, 9).unwrap());

    let o = rksat(
        &["formula", "exact", "--input", path.to_str().unwrap(), "--beta", "2", "--out", "exact.json"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("exact.json")).unwrap()).unwrap();
    assert_eq!(r["result"]["ln_z"].as_f64().unwrap(), exact_gibbs(&f, 2.0).unwrap().ln_z);

    // without --write the formula text goes to stdout
    let o = rksat(&["formula", "gen", "--n", "12", "--k", "3", "--d", "4", "--seed", "9"], None);
    assert_eq!(Formula::from_text(&String::from_utf8_lossy(&o.stdout)).unwrap(), f);
}

#[test]
fn csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = rksat(
        &["moments-scan", "--k", "6", "--d", "100", "--beta", "2", "--csv", "--out", "f2.csv"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("f2.csv")).unwrap();
    assert!(csv.starts_with("alpha,h,hhat,f1,f2,f2_bar\n"));
    assert_eq!(csv.lines().count(), rksat::moments::alpha_grid(1000).len() + 1);

    let input = dir.path().join("f2.csv");
    let o = rksat(
        &["plot", "--input", input.to_str().unwrap(), "--x", "alpha", "--y", "f2,f2_bar", "--svg", "f2.svg"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("f2.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 2);

    let o = rksat(&["plot", "--input", input.to_str().unwrap(), "--x", "alpha", "--y", "nope", "--svg", "x.svg"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn annealed_and_diagnostics_subcommands() {
    let o = rksat(&["formula", "annealed", "--n", "51", "--k", "3", "--d", "6", "--beta", "1"], None);
    let r = record(&o);
    let a = rksat::formula::annealed_ez(51, 3, 6, 1.0).unwrap();
    assert_eq!(r["result"]["ln_ez"].as_f64().unwrap(), a);
    for sub in ["core", "sticky"] {
        let o = rksat(&["formula", sub, "--n", "60", "--k", "3", "--d", "24", "--lambda", "3", "--beta", "0.01"], None);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(record(&o)["result"]["size"].is_u64());
    }
    let o = rksat(&["formula", "bp", "--n", "30", "--k", "3", "--d", "6", "--beta", "1"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(record(&o)["result"]["bethe"].is_f64());
}
