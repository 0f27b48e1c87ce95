use std::process::{Command, Output};

use serde_json::Value;
use telegraph_box::analytics::{expected_absorption_time, phase_probabilities, PhaseMatrix};
use telegraph_box::montecarlo::{estimate, MCSummary};
use telegraph_box::{ModelParams, SwitchingProb};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telegraph-box"))
        .args(args)
        .env_remove("TELEGRAPH_BOX_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const MODEL: [&str; 6] = ["--lambda", "1", "--mu", "2", "--h", "1"];

fn with_model(cmd: &str, rest: &[&str]) -> Vec<String> {
    std::iter::once(cmd)
        .chain(MODEL)
        .chain(rest.iter().copied())
        .map(String::from)
        .collect()
}

fn run_model(cmd: &str, rest: &[&str]) -> Output {
    let args = with_model(cmd, rest);
    run(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn equal_rate_single_phase_absorption_time() {
    let o = run(&[
        "analytics", "--lambda", "0.5", "--mu", "0.5", "--h", "10", "--alpha", "1", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let eta = v["expected_absorption_time"].as_f64().unwrap();
    assert!((eta - 10.0).abs() < 1e-10);
    assert_eq!(v["schema"], "telegraph-box.analytics/1");
}

#[test]
fn analytics_json_carries_full_precision() {
    let o = run_model("analytics", &["--alpha", "0.3", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let p = ModelParams::new(1.0, 2.0, 1.0).unwrap();
    let pm: PhaseMatrix = serde_json::from_value(v["phase_probabilities"].clone()).unwrap();
    assert_eq!(pm, phase_probabilities(&p));
    let eta = expected_absorption_time(&p, SwitchingProb::new(0.3).unwrap()).unwrap();
    assert_eq!(v["expected_absorption_time"].as_f64().unwrap(), eta.expected_absorption_time);
}

#[test]
fn csv_uses_twelve_significant_digits() {
    let o = run_model("analytics", &["--alpha", "0.5", "--format", "csv"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,value"));
    assert!(text.contains("\np0H,0.61269983678\n"), "{text}");
    assert!(text.contains("\nexpected_absorption_time,2\n"), "{text}");
}

#[test]
fn bad_parameters_exit_2_and_name_the_parameter() {
    for (flag, name) in [("--lambda", "lambda"), ("--mu", "mu"), ("--h", "h")] {
        let mut args = vec!["analytics", "--lambda", "1", "--mu", "2", "--h", "1", "--alpha", "0.5"];
        let pos = args.iter().position(|a| *a == flag).unwrap();
        args[pos + 1] = "0";
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains(&format!("parameter {name} ")), "{}", stderr(&o));
    }
    let o = run(&["analytics", "--lambda", "-1", "--mu", "2", "--h", "1", "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda"));
    let o = run_model("analytics", &["--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["analytics", "--lambda", "1"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run_model("analytics", &["--alpha", "x"]).status.code(), Some(2));
    let o = run_model("validate", &["--alpha", "0.5", "--paths", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_paths"));
}

#[test]
fn validate_passes_on_the_reference_example() {
    let o = run_model("validate", &["--alpha", "0.5", "--paths", "1000000", "--seed", "7", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 12);
    for r in records {
        assert!(r["z_score"].as_f64().unwrap().abs() <= 4.0);
    }
}

#[test]
fn validation_failure_exits_1() {
    let o = run_model("validate", &["--alpha", "0.5", "--paths", "20000", "--z-max", "1e-9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("overall_pass: false"));
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let args = ["--alpha", "0.5", "--paths", "20000", "--seed", "3", "--format", "json"];
    let a = run_model("simulate", &args);
    let b = run_model("simulate", &args);
    assert_eq!(a.stdout, b.stdout);
    let mut one = with_model("simulate", &args);
    one.extend(["--threads".into(), "1".into()]);
    let c = run(&one.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(a.stdout, c.stdout);
    let d = Command::new(env!("CARGO_BIN_EXE_telegraph-box"))
        .args(with_model("simulate", &args))
        .env("TELEGRAPH_BOX_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(a.stdout, d.stdout);
}

#[test]
fn simulate_json_round_trips_to_the_library_summary() {
    let o = run_model("simulate", &["--alpha", "0.5", "--paths", "5000", "--seed", "11", "--format", "json"]);
    let text = stdout(&o);
    let summary: MCSummary = serde_json::from_str(&text).unwrap();
    let p = ModelParams::new(1.0, 2.0, 1.0).unwrap();
    assert_eq!(summary, estimate(&p, SwitchingProb::new(0.5).unwrap(), 5000, 11).unwrap());
    let v: Value = serde_json::from_str(&text).unwrap();
    let once = serde_json::to_string_pretty(&v).unwrap();
    let twice = serde_json::to_string_pretty(&serde_json::from_str::<Value>(&once).unwrap()).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn output_flag_writes_the_same_bytes() {
    let dir = std::env::temp_dir().join(format!("telegraph-box-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("a.csv");
    let to_stdout = run_model("analytics", &["--alpha", "0.5", "--format", "csv"]);
    let to_file = run_model("analytics", &["--alpha", "0.5", "--format", "csv", "--output", file.to_str().unwrap()]);
    assert_eq!(to_file.status.code(), Some(0));
    assert!(to_file.stdout.is_empty());
    assert_eq!(std::fs::read(&file).unwrap(), to_stdout.stdout);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn dumped_paths_match_the_summary() {
    let dir = std::env::temp_dir().join(format!("telegraph-box-dump-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("paths.csv");
    let o = run_model(
        "simulate",
        &["--alpha", "0.4", "--paths", "3000", "--seed", "5", "--format", "json", "--dump-paths", file.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    let summary: MCSummary = serde_json::from_str(&stdout(&o)).unwrap();
    let dump = std::fs::read_to_string(&file).unwrap();
    let mut lines = dump.lines();
    assert_eq!(lines.next(), Some("path_id,phase_index,start,end,duration,n_switches"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len() as u64, summary.origin_phases + summary.level_phases);
    let origin = rows.iter().filter(|r| r[2] == "0").count() as u64;
    assert_eq!(origin, summary.origin_phases);
    assert_eq!(rows.last().unwrap()[0], "2999");
    assert!(rows.iter().all(|r| r.len() == 6 && r[0].parse::<u64>().is_ok()));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn mgf_accepts_negative_arguments_and_rejects_out_of_range() {
    let o = run_model("mgf", &["--omega", "-1,0,0.1", "--d", "0.3", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "omega,theta1,theta2,F00,F0H,FHH,FH0");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("0,0,1,0.38730016322,0.61269983678,"));
    let o = run_model("mgf", &["--omega", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("omega"));
    let o = run(&["mgf", "--lambda", "1", "--mu", "1", "--h", "2", "--omega", "0", "--d", "1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["descent"]["M_HH"].is_null());
    assert!(v["descent"]["P_H0"].as_f64().unwrap() > 0.0);
}

#[test]
fn scaling_sweep_table() {
    let o = run(&["scaling", "--drift-a", "0.5", "--drift-b", "1", "--h", "1", "--alpha", "0.5", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "c,lambda,mu,EC00,EC0H,Etau,ETA");
    assert_eq!(lines.len(), 10);
    assert!(lines[9].starts_with("256,65792,66048,"));
    let o = run(&["scaling", "--drift-a", "0.5", "--drift-b", "1", "--h", "1", "--alpha", "0.5", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["upper_half_decreasing"], true);
    assert_eq!(v["final_below_epsilon"], true);
    let o = run(&["scaling", "--sigma", "0", "--drift-a", "0.5", "--drift-b", "1", "--h", "1", "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma"));
}

#[test]
fn help_documents_csv_columns() {
    let o = run(&["analytics", "--help"]);
    assert!(stdout(&o).contains("CSV columns: quantity,value"));
    let o = run(&["simulate", "--help"]);
    assert!(stdout(&o).contains("path_id,phase_index,start,end,duration,n_switches"));
}
