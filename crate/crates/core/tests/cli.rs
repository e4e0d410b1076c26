use std::path::{Path, PathBuf};
use std::process::Command as Process;

use dalembert::cli::{load_config, parse_csv, run, Command, RunOptions, VerificationReport};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn binary(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_dalembert"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn five_factor_config_groups_by_label() {
    let config = load_config(&config_path("five_factor.toml")).unwrap();
    let eq = config.build_equation(None).unwrap();
    let groups: Vec<(&str, usize)> = eq.groups().iter().map(|g| (g.operator.label(), g.multiplicity)).collect();
    assert_eq!(groups, vec![("A", 2), ("B", 2), ("C", 1)]);
    assert_eq!(eq.dim(), 3);
}

#[test]
fn minimal_solve_matches_constant_solution() {
    let out = binary(&["solve", config_path("minimal.toml").to_str().unwrap()]);
    assert!(out.status.success());
    let trace = parse_csv(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(trace.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert!(trace.values.iter().all(|u| u.as_slice() == [1.0]));
}

#[test]
fn solve_output_is_byte_identical_across_runs() {
    for name in ["five_factor.toml", "random_diagonal.toml", "spectral_heat.toml"] {
        let path = config_path(name);
        let a = binary(&["solve", path.to_str().unwrap(), "--seed", "11"]);
        let b = binary(&["solve", path.to_str().unwrap(), "--seed", "11"]);
        assert!(a.status.success(), "{name}");
        assert_eq!(a.stdout, b.stdout, "{name}");
    }
}

#[test]
fn seed_flag_changes_random_instances() {
    let path = config_path("random_diagonal.toml");
    let a = binary(&["solve", path.to_str().unwrap(), "--seed", "1"]);
    let b = binary(&["solve", path.to_str().unwrap(), "--seed", "2"]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn compare_oracle_on_random_diagonal_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let status = binary(&[
        "compare-oracle",
        config_path("random_diagonal.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let trace = parse_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(trace.dim(), 4);
    let dev = trace.diagnostics.oracle_dev.unwrap();
    assert!(dev.iter().all(|&d| d <= 1e-6), "{dev:?}");
    let report: VerificationReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.report.json")).unwrap()).unwrap();
    assert!(report.pass);
}

#[test]
fn identical_labels_fail_verify_with_labels_named() {
    let out = binary(&["verify", config_path("identical_labels.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("confluent_residual"), "{stderr}");
    assert!(stderr.contains("`A`") && stderr.contains("`A_copy`"), "{stderr}");

    let solve = binary(&["solve", config_path("identical_labels.toml").to_str().unwrap()]);
    assert_eq!(solve.status.code(), Some(2));
}

#[test]
fn verify_passes_on_shipped_configs() {
    for name in ["minimal.toml", "five_factor.toml", "random_diagonal.toml", "spectral_heat.toml", "example1_translation.toml"] {
        let config = load_config(&config_path(name)).unwrap();
        let outcome = run(&config, Command::Verify, &RunOptions::default()).unwrap();
        let report = outcome.report.unwrap();
        assert!(report.pass, "{name}: {:?}", report.first_failure());
        assert_eq!(report.pass, report.checks.iter().all(|c| c.pass));
    }
}

#[test]
fn example1_config_tracks_exact_solution() {
    let config = load_config(&config_path("example1_translation.toml")).unwrap();
    let trace = run(&config, Command::Solve, &RunOptions::default()).unwrap().trace.unwrap();
    let xs = config.grid.unwrap().coordinates();
    for (t, u) in trace.times.iter().zip(&trace.values) {
        for (x, v) in xs.iter().zip(u.iter()) {
            let exact = (x + t).sin() - t * (x + t).cos();
            assert!((v - exact).abs() < 1e-10, "t={t} x={x}");
        }
    }
}

#[test]
fn config_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[backend]\nfamily = \"dense\"\n[[operators]]\nlabel = \"a\"\nmatrix = [[0.0]]\n\
         [equation]\nfactors = [\"a\", \"D\"]\n[[initial_data]]\nvalues = [1.0]\n[[initial_data]]\nvalues = [0.0]\n\
         [time]\nt_end = 1.0\nsamples = 2\n",
    )
    .unwrap();
    let out = binary(&["solve", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("equation.factors[1]"));
    let missing = binary(&["solve", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}
