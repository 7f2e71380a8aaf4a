use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value as Json;

const DESK: &str = "60=3,900=5";

fn iron() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/models/iron.ctl")
        .display()
        .to_string()
}

fn cyclotest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclotest"))
        .args(args)
        .env_remove("CYCLOTEST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cyclotest-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn correct_iron_passes_with_full_coverage() {
    let o = cyclotest(&["run", &iron(), "--durations", DESK, "--require", "branch=1.0", "--require", "mcdc=1.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("result: PASS"), "{}", stdout(&o));
}

#[test]
fn mutant_exits_with_verdict_code() {
    let o = cyclotest(&["run", &iron(), "--durations", DESK, "--sut", "inproc:iron:M1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unmet_requirement_exits_with_coverage_code() {
    let o = cyclotest(&["run", &iron(), "--durations", DESK, "--scenario", "piecemeal", "--require", "mcdc=1.0"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("requirement mcdc=1 not met"), "{}", stdout(&o));
}

#[test]
fn unreachable_sut_exits_with_protocol_code() {
    let o = cyclotest(&["run", &iron(), "--durations", DESK, "--sut", "tcp:127.0.0.1:1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_model_exits_with_parse_code() {
    let o = cyclotest(&["run", "/nonexistent/model.ctl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn syntax_error_is_reported_with_position() {
    let path = temp_file("bad.ctl", "model x {\n  input a: bool;\n  logic { if (a && ) { } }\n}\n");
    let o = cyclotest(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let expected = format!("{}:3:20: error: unexpected `)`", path.display());
    assert!(stderr(&o).starts_with(&expected), "{}", stderr(&o));
    assert_eq!(cyclotest(&["run", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn check_accepts_the_iron_model() {
    let o = cyclotest(&["check", &iron()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_with_parse_code() {
    assert_eq!(cyclotest(&["run", &iron(), "--bogus"]).status.code(), Some(2));
    assert_eq!(cyclotest(&["run", &iron(), "--require", "branch"]).status.code(), Some(2));
}

#[test]
fn deterministic_json_reports_are_reproducible() {
    let args = ["run", &iron(), "--durations", DESK, "--deterministic", "--seed", "7", "--format", "json"];
    let (a, b) = (cyclotest(&args), cyclotest(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    let v: Json = serde_json::from_str(&stdout(&a)).unwrap();
    let branch = v["coverage"]["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["criterion"] == "branch")
        .unwrap();
    assert_eq!(branch["ratio"], 1.0, "{v}");
}

#[test]
fn seeds_change_action_order_but_not_the_result() {
    let run = |seed: &str| {
        let o = cyclotest(&["run", &iron(), "--durations", DESK, "--deterministic", "--seed", seed, "--format", "json"]);
        assert_eq!(o.status.code(), Some(0));
        serde_json::from_str::<Json>(&stdout(&o)).unwrap()
    };
    let (a, b) = (run("1"), run("2"));
    assert_eq!(a["coverage"]["criteria"], b["coverage"]["criteria"]);
}

#[test]
fn dot_output_lists_states_and_transitions() {
    let o = cyclotest(&["dot", &iron(), "--durations", DESK]);
    assert_eq!(o.status.code(), Some(0));
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph "), "{dot}");
    assert_eq!(dot.matches(" -> ").count(), 12, "{dot}");
    for s in ["(0,1,0,1)", "(0,1,1,0)", "(1,0,0,1)"] {
        assert!(dot.contains(&format!("label=\"{s}\"")), "{dot}");
    }
    assert!(dot.trim_end().ends_with('}'));
}

#[test]
fn log_file_holds_one_json_entry_per_stimulus() {
    let path = temp_file("run.jsonl", "");
    let o = cyclotest(&["run", &iron(), "--durations", DESK, "--deterministic", "--log", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let entries: Vec<Json> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(entries.len(), 168);
    assert!(entries.iter().all(|e| e["verdict"] == "Pass"));
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e["sys_time_ms"], i as u64 * 1000);
    }
}

#[test]
fn enumerate_states_reports_nine_of_sixteen() {
    let o = cyclotest(&["enumerate-states", &iron(), "--durations", DESK]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("upper bound: 16"), "{text}");
    assert!(text.contains("reachable: 9"), "{text}");
}

#[test]
fn strict_held_lets_the_off_by_one_mutant_pass() {
    let o = cyclotest(&["run", &iron(), "--durations", DESK, "--strict-held", "--sut", "inproc:iron:M2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn log_level_comes_from_the_environment() {
    let quiet = cyclotest(&["run", &iron(), "--durations", DESK]);
    assert!(stderr(&quiet).is_empty(), "{}", stderr(&quiet));
    let loud = Command::new(env!("CARGO_BIN_EXE_cyclotest"))
        .args(["run", &iron(), "--durations", DESK])
        .env("CYCLOTEST_LOG", "debug")
        .output()
        .unwrap();
    assert!(stderr(&loud).contains("scenario iron"), "{}", stderr(&loud));
}

#[test]
fn iron_sut_speaks_the_protocol_on_stdio() {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_iron-sut"))
        .args(["--durations", DESK])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let stdin = child.stdin.as_mut().unwrap();
    stdin
        .write_all(
            concat!(
                r#"{"type":"hello","model":"iron","inputs":["move","position"],"outputs":["heating"],"state":[],"cycle_period_ms":1000}"#,
                "\n",
                r#"{"type":"set_inputs","cycle":0,"values":{"move":0,"position":0}}"#,
                "\n",
                r#"{"type":"shutdown"}"#,
                "\n",
            )
            .as_bytes(),
        )
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let lines: Vec<Json> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["type"], "hello", "{lines:?}");
    assert_eq!(lines[1]["type"], "observation", "{lines:?}");
    assert_eq!(lines[1]["cycle"], 0);
    assert_eq!(lines[1]["sys_time_ms"], 0);
    assert_eq!(lines[1]["outputs"]["heating"], 1, "{lines:?}");
}
