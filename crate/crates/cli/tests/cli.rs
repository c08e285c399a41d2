use std::process::{Command, Output};

use eulerlab_cli::output::{read_trajectory_csv, Footer};
use eulerlab_core::{integrate, ModelParams, SeedData};

fn eulerlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eulerlab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn classify_linear_collapse() {
    let o = eulerlab(&["classify", "--xi", "0", "--a0", "1", "--a1", "-2", "--gamma", "2", "--K", "1"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["verdict"], "BlowupFiniteTime");
    assert_eq!(v["t_formula"], 0.5);
    assert!((v["t_numeric"].as_f64().unwrap() - 0.5).abs() < 1e-8);
}

#[test]
fn classify_positive_xi_is_global() {
    let o = eulerlab(&["classify", "--xi", "1", "--a0", "0.5", "--a1", "-3", "--gamma", "1.4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["verdict"], "Global");
}

#[test]
fn missing_argument_is_config_error() {
    let o = eulerlab(&["classify", "--xi", "0", "--a1", "-2", "--gamma", "2"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    let o = eulerlab(&["classify", "--xi", "0", "--a0", "-1", "--a1", "-2", "--gamma", "2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn static_trajectory_rows_are_constant() {
    let o =
        eulerlab(&["integrate", "--xi", "0", "--a0", "1", "--a1", "0", "--gamma", "2", "--alpha", "2", "--t-end", "3"]);
    assert_eq!(code(&o), 0);
    let parsed = read_trajectory_csv(&stdout(&o)).unwrap();
    assert!(parsed.states.len() > 1);
    for s in &parsed.states {
        assert!((s.a - 1.0).abs() <= 1e-12 && s.b.abs() <= 1e-12 && (s.y - 2.0).abs() <= 1e-12);
    }
    assert_eq!(parsed.footer, Footer::Completed { t_end: 3.0 });
}

#[test]
fn blowup_footer_carries_collapse_time() {
    let o = eulerlab(&["integrate", "--xi", "-1", "--a0", "1", "--a1", "0", "--gamma", "3", "--t-end", "5"]);
    assert_eq!(code(&o), 0);
    match read_trajectory_csv(&stdout(&o)).unwrap().footer {
        Footer::Blowup { t_collapse, .. } => assert!((t_collapse - 1.0).abs() < 1e-6),
        other => panic!("{other:?}"),
    }
}

#[test]
fn trajectory_csv_round_trips_bit_exactly() {
    let args = [
        "integrate",
        "--xi",
        "0.5",
        "--a0",
        "1",
        "--a1",
        "0.3",
        "--b0",
        "0.7",
        "--b1",
        "-0.2",
        "--gamma",
        "1.4",
        "--t-end",
        "2",
    ];
    let o = eulerlab(&args);
    let parsed = read_trajectory_csv(&stdout(&o)).unwrap();
    let seed = SeedData::new(1.0, 0.3, 0.5, 0.7, -0.2, 1.0).unwrap();
    let tr = integrate(&seed, &ModelParams::new(1.0, 1.4).unwrap(), 2.0, 1e-10, 1e-12).unwrap();
    assert_eq!(parsed.states.len(), tr.states.len());
    for (p, s) in parsed.states.iter().zip(&tr.states) {
        assert_eq!(p.to_vec().map(f64::to_bits), s.to_vec().map(f64::to_bits));
        assert_eq!(p.t.to_bits(), s.t.to_bits());
    }
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["a.csv", "b.csv"].iter().map(|n| dir.path().join(n)).collect();
    for p in &paths {
        let o = eulerlab(&[
            "integrate",
            "--xi",
            "-0.5",
            "--a0",
            "2",
            "--a1",
            "1",
            "--b0",
            "1",
            "--gamma",
            "2",
            "--t-end",
            "4",
            "--output",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
}

fn field_lines(args: &[&str]) -> Vec<Vec<String>> {
    let o = eulerlab(args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o).lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn static_field_density_is_alpha() {
    let rows = field_lines(&[
        "field", "--xi", "0", "--a0", "1", "--a1", "0", "--gamma", "1.4", "--alpha", "1.5", "--nt", "4", "--nx", "8",
    ]);
    assert_eq!(rows[0], ["t", "x", "rho", "u", "in_support"]);
    assert_eq!(rows.len(), 1 + 5 * 9);
    for r in &rows[1..] {
        assert!((r[2].parse::<f64>().unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(r[4], "true");
    }
}

#[test]
fn field_marks_vacuum_outside_support() {
    let rows = field_lines(&[
        "field",
        "--xi",
        "1",
        "--a0",
        "1",
        "--a1",
        "0",
        "--gamma",
        "2",
        "--t-range",
        "0:0.002",
        "--nt",
        "2",
        "--x-range",
        "-3:3",
        "--nx",
        "12",
    ]);
    for r in rows[1..].iter().filter(|r| r[0].parse::<f64>().unwrap() == 0.0) {
        let x: f64 = r[1].parse().unwrap();
        let rho: f64 = r[2].parse().unwrap();
        if x.abs() >= 2.0 {
            assert_eq!(rho, 0.0, "x = {x}");
            assert_eq!(r[4], "false");
        } else {
            assert!((rho - (1.0 - x * x / 4.0)).abs() < 1e-12);
            assert_eq!(r[4], "true");
        }
    }
}

#[test]
fn radial_field_drops_negative_radii() {
    let rows = field_lines(&[
        "field",
        "--xi",
        "1",
        "--a0",
        "1",
        "--a1",
        "0",
        "--gamma",
        "2",
        "--radial",
        "--x-range",
        "-1:1",
        "--nx",
        "8",
        "--nt",
        "2",
    ]);
    assert_eq!(rows[0][1], "r");
    assert_eq!(rows.len(), 1 + 3 * 5);
    assert!(rows[1..].iter().all(|r| r[1].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn field_past_collapse_is_numerical_failure() {
    let o = eulerlab(&["field", "--xi", "0", "--a0", "1", "--a1", "-2", "--gamma", "2", "--t-range", "0:1"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn verify_static_seed_passes() {
    let o = eulerlab(&["verify", "--xi", "0", "--a0", "1", "--a1", "0", "--gamma", "2", "--nt", "32", "--nx", "32"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    for key in ["grid", "mass_residual", "momentum_residual", "ns_residual", "observed_order", "status"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["mass_residual"]["max"].as_f64().unwrap() <= 1e-12);
    assert!(v["momentum_residual"]["max"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["status"], "passed");
}

#[test]
fn verify_literal_y_equation_fails_where_it_differs() {
    let base = ["verify", "--xi", "1", "--a0", "1", "--a1", "0", "--gamma", "3", "--alpha", "1"];
    let literal = eulerlab(&[&base[..], &["--y-equation", "theorem"]].concat());
    assert_eq!(code(&literal), 1);
    assert!(json(&literal)["mass_residual"]["max"].as_f64().unwrap() > 1e-3);
    let matched = eulerlab(&base);
    assert_eq!(code(&matched), 0);
    assert_eq!(json(&matched)["status"], "passed");
}

#[test]
fn verify_reports_navier_stokes_with_viscosity() {
    let o = eulerlab(&[
        "verify", "--xi", "1", "--a0", "1", "--a1", "0", "--gamma", "2", "--mu", "1", "--nt", "128", "--nx", "128",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let ns = v["ns_residual"]["max"].as_f64().unwrap();
    let euler = v["momentum_residual"]["max"].as_f64().unwrap();
    assert!((ns - euler).abs() < 1e-9);
}

#[test]
fn verify_rejects_window_outside_support() {
    let o = eulerlab(&["verify", "--xi", "1", "--a0", "1", "--a1", "0", "--gamma", "2", "--x-range", "-3:3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn one_cell_sweep_matches_classify() {
    let sweep = eulerlab(&["sweep", "--xi", "-1", "--a0", "1", "--a1", "0.5", "--gamma", "3"]);
    let classify = eulerlab(&["classify", "--xi", "-1", "--a0", "1", "--a1", "0.5", "--gamma", "3", "--format", "csv"]);
    assert_eq!(code(&sweep), 0);
    assert_eq!(stdout(&sweep), stdout(&classify));
}

#[test]
fn sweep_flips_once_at_escape_threshold() {
    let o = eulerlab(&["sweep", "--xi", "-1", "--a0", "1", "--a1", "-2:2:41", "--gamma", "3"]);
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 41);
    let flips: Vec<usize> =
        rows.windows(2).enumerate().filter(|(_, w)| w[0][4] != w[1][4]).map(|(i, _)| i + 1).collect();
    assert_eq!(flips.len(), 1);
    let at = &rows[flips[0]];
    assert_eq!(at[2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(at[4], "Global");
    assert!(rows[..flips[0]].iter().all(|r| r[4] == "BlowupFiniteTime" && !r[6].is_empty()));
}

#[test]
fn positive_xi_rows_are_global() {
    let o = eulerlab(&["sweep", "--xi", "0.5:1:2", "--a0", "0.5:2:3", "--a1", "-2:2:5", "--gamma", "1.4:3:3"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 3 * 5 * 3);
    assert!(rows.iter().all(|r| r.contains(",Global,")));
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let args = ["sweep", "--xi", "-2:1:4", "--a0", "0.5:2:3", "--a1", "-2:2:5", "--gamma", "1.4:3:3"];
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_eulerlab")).args(args).env("EULERLAB_THREADS", threads).output().unwrap()
    };
    let one = run("1");
    let many = run("4");
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, many.stdout);
    // lexicographic order
    let text = stdout(&one);
    let keys: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').take(4).map(|v| v.parse().unwrap()).collect()).collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(code(&run("zero")), 2);
}

#[test]
fn empty_sweep_range_is_config_error() {
    let o = eulerlab(&["sweep", "--xi", "0:1:0", "--a0", "1", "--a1", "0", "--gamma", "2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_runs_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    let out = dir.path().join("out.csv");
    std::fs::write(
        &good,
        format!(
            r#"
command = "sweep"
[params]
gamma = 3
[sweep]
xi = -1
a0 = 1
a1 = "0.5"
[output]
path = "{}"
format = "csv"
"#,
            out.display()
        ),
    )
    .unwrap();
    let o = eulerlab(&["run", "--config", good.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let classify = eulerlab(&["classify", "--xi", "-1", "--a0", "1", "--a1", "0.5", "--gamma", "3", "--format", "csv"]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), stdout(&classify));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "command = \"classify\"\ncolour = \"red\"\n").unwrap();
    assert_eq!(code(&eulerlab(&["run", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&eulerlab(&["run", "--config", "/nonexistent.toml"])), 2);
}
