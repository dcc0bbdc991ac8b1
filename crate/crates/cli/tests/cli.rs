use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use predvoi::data::save_csv;
use predvoi::synthetic::simulate_logistic;

fn bundled() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/synthetic_ami.csv")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predvoi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Fits the unpenalized bundled model into `dir` and returns the model path.
fn fit_mle(dir: &Path) -> PathBuf {
    let data = bundled();
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--outcome",
        "day30",
        "--cap",
        "sysbp=100",
        "--spline",
        "pulse=50",
        "--out-dir",
        s(dir),
    ]);
    dir.join("model.json")
}

fn voi_args<'a>(data: &'a str, model: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "voi",
        "--data",
        data,
        "--outcome",
        "day30",
        "--model",
        model,
        "--out-dir",
        out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn lasso_fit_writes_exact_zeros_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled();
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--outcome",
        "day30",
        "--penalty",
        "l1",
        "--cap",
        "sysbp=100",
        "--spline",
        "pulse=50",
        "--out-dir",
        s(dir.path()),
    ]);
    let table = std::fs::read_to_string(dir.path().join("coefficients.csv")).unwrap();
    assert!(table.starts_with("term,coefficient\n(intercept),"));
    assert!(table.lines().any(|l| l.ends_with(",0")), "{table}");
    assert!(table.lines().any(|l| l.starts_with("pulse_gt50,")));
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert!(model["lambda"].as_f64().unwrap() > 0.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn fit_with_uncertainty_and_optimism() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled();
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--outcome",
        "day30",
        "--predictors",
        "age,sysbp,killip",
        "--uncertainty",
        "--optimism",
        "--n-boot",
        "50",
        "--out-dir",
        s(dir.path()),
    ]);
    let table = std::fs::read_to_string(dir.path().join("coefficients.csv")).unwrap();
    assert!(table.starts_with("term,coefficient,selection_probability,ci_lower,ci_upper\n"));
    assert_eq!(table.lines().count(), 5);
    let c = std::fs::read_to_string(dir.path().join("c_statistic.csv")).unwrap();
    assert!(c.lines().nth(1).unwrap().starts_with("c_statistic,"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled();
    let missing_outcome = run(&[
        "fit",
        "--data",
        s(&data),
        "--outcome",
        "death",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&missing_outcome), 2);
    assert!(String::from_utf8_lossy(&missing_outcome.stderr).contains("death"));
    assert_eq!(code(&run(&["fit", "--data", s(&data)])), 2);
    assert_eq!(code(&run(&["bogus"])), 2);
    assert_eq!(
        code(&run(&[
            "fit",
            "--data",
            s(&data),
            "--outcome",
            "day30",
            "--cap",
            "sysbp",
            "--out-dir",
            s(dir.path())
        ])),
        2
    );

    let model = fit_mle(dir.path());
    let out = dir.path().join("v");
    let bad_grid = voi_args(s(&data), s(&model), s(&out), &["--thresholds", "0.5,0.2"]);
    assert_eq!(code(&run(&bad_grid)), 2);
    let one_draw = voi_args(s(&data), s(&model), s(&out), &["--n-boot", "1"]);
    assert_eq!(code(&run(&one_draw)), 2);
    let no_threads = voi_args(s(&data), s(&model), s(&out), &["--threads", "0", "--n-boot", "2"]);
    assert_eq!(code(&run(&no_threads)), 2);
    assert!(run(&["--help"]).status.success());
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("absent.csv");
    assert_eq!(
        code(&run(&[
            "fit",
            "--data",
            s(&absent),
            "--outcome",
            "y",
            "--out-dir",
            s(dir.path())
        ])),
        3
    );

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,x\n1,0.5\n2,0.1\n0,0.3\n").unwrap();
    assert_eq!(
        code(&run(&[
            "fit",
            "--data",
            s(&bad),
            "--outcome",
            "y",
            "--out-dir",
            s(dir.path())
        ])),
        3
    );
}

#[test]
fn numerical_failures_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("separated.csv");
    let mut text = String::from("y,x\n");
    for i in 0..40 {
        text.push_str(&format!("{},{}\n", u8::from(i >= 20), i));
    }
    std::fs::write(&path, text).unwrap();
    let out = run(&["fit", "--data", s(&path), "--outcome", "y", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("separation"));
}

#[test]
fn single_threshold_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled();
    let model = fit_mle(dir.path());
    ok(&voi_args(
        s(&data),
        s(&model),
        s(dir.path()),
        &["--thresholds", "0.02", "--n-boot", "20"],
    ));
    let csv = std::fs::read_to_string(dir.path().join("voi.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.02,"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("voi.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
}

#[test]
fn two_draws_report_a_standard_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled();
    let model = fit_mle(dir.path());
    ok(&voi_args(
        s(&data),
        s(&model),
        s(dir.path()),
        &["--thresholds", "0.01,0.02,0.05,0.1", "--n-boot", "2", "--dump-draws"],
    ));
    let csv = std::fs::read_to_string(dir.path().join("voi.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let mcse = header.iter().position(|h| *h == "mcse_evpi").unwrap();
    for line in csv.lines().skip(1) {
        let v: f64 = line.split(',').nth(mcse).unwrap().parse().unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
    let draws = std::fs::read_to_string(dir.path().join("posterior_draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 3);
    assert!(draws.starts_with("draw_index,redraws,intercept,age,"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled();
    let model = fit_mle(dir.path());
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    ok(&voi_args(
        s(&data),
        s(&model),
        s(&one),
        &["--n-boot", "40", "--seed", "9", "--threads", "1"],
    ));
    ok(&voi_args(
        s(&data),
        s(&model),
        s(&four),
        &["--n-boot", "40", "--seed", "9", "--threads", "4"],
    ));
    for name in ["voi.csv", "voi.json"] {
        assert!(
            std::fs::read(one.join(name)).unwrap() == std::fs::read(four.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn replay_reproduces_outputs_and_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::copy(bundled(), &data).unwrap();
    let model = fit_mle(dir.path());
    let first = dir.path().join("first");
    ok(&voi_args(
        s(&data),
        s(&model),
        s(&first),
        &["--n-boot", "30", "--thresholds", "0:0.3:0.05", "--seed", "4"],
    ));
    let manifest = first.join("voi_manifest.json");
    let second = dir.path().join("second");
    ok(&["replay", "--manifest", s(&manifest), "--out-dir", s(&second)]);
    assert!(std::fs::read(first.join("voi.csv")).unwrap() == std::fs::read(second.join("voi.csv")).unwrap());

    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push('\n');
    text.push_str(text.lines().nth(1).unwrap().to_string().as_str());
    std::fs::write(&data, text).unwrap();
    let out = run(&["replay", "--manifest", s(&manifest), "--out-dir", s(&second)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn dca_writes_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled();
    let model = fit_mle(dir.path());
    ok(&[
        "dca",
        "--data",
        s(&data),
        "--outcome",
        "day30",
        "--model",
        s(&model),
        "--thresholds",
        "0.01:0.2:0.01",
        "--n-boot",
        "30",
        "--out-dir",
        s(dir.path()),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("decision_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn sweep_on_a_rare_event_donor_discards_subsamples() {
    let dir = tempfile::tempdir().unwrap();
    let donor = simulate_logistic(4000, &[-4.2, 0.8, -0.5], 12);
    let path = dir.path().join("donor.csv");
    save_csv(&donor, &path).unwrap();
    ok(&[
        "sweep",
        "--data",
        s(&path),
        "--outcome",
        "y",
        "--sizes",
        "150,600",
        "--replicates",
        "4",
        "--thresholds",
        "0.02,0.05",
        "--n-boot",
        "20",
        "--out-dir",
        s(dir.path()),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let small: usize = rows[0][4].parse().unwrap();
    assert!(rows[0][0] == "150" && small > 0, "{csv}");
}
