use std::path::Path;
use std::process::{Command, Output};

fn bvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvc"))
        .args(args)
        .output()
        .expect("run bvc")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn gamma_for_four_processes() {
    let out = bvc(&["gamma", "--n", "4", "--f", "1"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("gamma = 1/16"));
    let out = bvc(&[
        "gamma",
        "--n",
        "5",
        "--f",
        "1",
        "--optimized",
        "--eps",
        "1/100",
        "--upper",
        "1",
    ]);
    assert!(stdout(&out).contains("gamma = 1/25"));
    assert!(stdout(&out).contains("round bound = 114"));
}

#[test]
fn demos_and_section1() {
    let out = bvc(&["demo", "thm1", "--d", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("intersection empty: true"));

    let out = bvc(&["demo", "thm3", "--d", "2", "--eps", "1/4"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("epsilon-agreement violated: true"));

    let out = bvc(&["section1-check"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("membership: false"));
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvc(&["run", &scenario("interval.toml"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "run_id,round,process,coord_index,value_num,value_den,value_decimal,rho_num,rho_den"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in [
        "outcome",
        "rounds",
        "gamma",
        "round_bound",
        "final_spread",
        "trace_sha256",
    ] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["gamma"], "1/16");
    assert_eq!(summary["rounds"], summary["round_bound"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(bvc(&["run", missing.to_str().unwrap()]).status.code(), Some(2));

    let short = dir.path().join("short.toml");
    let text = std::fs::read_to_string(scenario("restricted_async.toml")).unwrap();
    std::fs::write(
        &short,
        text.replace("n = 6", "n = 5")
            .replace(", [\"1\"]]", "]")
            .replace("process = 5", "process = 4"),
    )
    .unwrap();
    assert_eq!(bvc(&["run", short.to_str().unwrap()]).status.code(), Some(2));

    let unsafe_run = dir.path().join("unsafe.toml");
    let text = std::fs::read_to_string(&short).unwrap();
    std::fs::write(
        &unsafe_run,
        text.replace("seed = 0", "seed = 0\nallow_unsafe = true")
            .replace("\"mute\"", "\"fixed_lie\"\npoint = [\"1/2\"]"),
    )
    .unwrap();
    let out = bvc(&[
        "run",
        unsafe_run.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("PropertyFail"));
}

#[test]
fn sweep_lists_seeds_in_order() {
    let out = bvc(&["sweep", &scenario("interval.toml"), "--seeds", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let seeds: Vec<u64> = text
        .lines()
        .skip(1)
        .filter_map(|l| l.split_whitespace().next()?.parse().ok())
        .collect();
    assert_eq!(seeds, vec![1, 2, 3]);
    assert!(text.contains("3/3 seeds passed"));
}
