use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const PRELUDE: &str = r#"import json, sys, random
def _send(obj):
    sys.stdout.write(json.dumps(obj) + "\n"); sys.stdout.flush()
def _recv():
    line = sys.stdin.readline()
    if not line:
        sys.exit(0)
    return json.loads(line)
INIT = _recv()
def ask(x):
    _send({"type": "ask", "x": list(x)})
    msg = _recv()
    if msg["type"] == "stop":
        sys.exit(0)
    return msg
"#;

fn climber(class: &str, rate: f64, waste: u32) -> String {
    format!(
        r#"{PRELUDE}
class {class}:
    pass

rng = random.Random(INIT["seed"])
n = INIT["dim"]
x = [rng.randint(0, 1) for _ in range(n)]
fx = ask(x)["y"]
while True:
    y = [1 - b if rng.random() < {rate} else b for b in x]
    for _ in range({waste}):
        ask(y)
    fy = ask(y)["y"]
    if fy >= fx:
        x, fx = y, fy
"#
    )
}

fn bag(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bag"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

/// Bench dir of protocol-speaking scripts, a loose replay session and a config file.
fn fixture(root: &Path, generations: usize) -> PathBuf {
    let bench = root.join("bench");
    fs::create_dir_all(&bench).unwrap();
    for i in 0..3 {
        fs::write(
            bench.join(format!("b{i}.py")),
            climber(&format!("Bench{i}"), 0.3 - 0.1 * i as f64, 3),
        )
        .unwrap();
    }
    let mut session = String::new();
    for i in 1..=generations {
        let text = if i == 3 {
            "No code today.".to_string()
        } else {
            let code = climber(&format!("Gen{i}"), 0.02 + 0.02 * i as f64, (i % 3) as u32);
            format!("# Description: variant {i}\n# Code:\n```python\n{code}\n```\n")
        };
        let line = serde_json::json!({"request_digest": "", "response_text": text});
        session.push_str(&format!("{line}\n"));
    }
    fs::write(root.join("session.jsonl"), session).unwrap();
    let config = serde_json::json!({
        "suite": "pbo",
        "function": 1,
        "dim": 12,
        "instances": [1, 2, 3, 4, 5],
        "query_budget": generations,
        "q": 3,
        "seed": 11,
        "eval_budget": 200,
        "timeout_s": 30.0,
        "language_tag": "python-wire",
        "bench_dir": bench,
        "llm": format!("replay-loose:{}", root.join("session.jsonl").display()),
    });
    let path = root.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn json(text: &[u8]) -> Value {
    serde_json::from_slice(text).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(text)))
}

#[test]
fn replay_run_populates_directory_and_stored_fitness_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), 6);
    let out = tmp.path().join("run1");
    let o = bag(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--q",
            "4",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: Value = json(&fs::read(out.join("manifest.json")).unwrap());
    assert_eq!(manifest["status"], "completed");
    assert_eq!(manifest["settings"]["q"], 4, "flags override the config file");
    assert_eq!(manifest["settings"]["problem"]["dim"], 12);
    assert_eq!(
        fs::read_to_string(out.join("session.jsonl")).unwrap().lines().count(),
        6
    );
    for t in 0..=6 {
        assert!(out.join(format!("generations/{t:03}.json")).is_file());
    }
    let result: Value = json(&fs::read(out.join("result.json")).unwrap());
    assert_eq!(result["records"].as_array().unwrap().len(), 6);
    assert!(result["records"][2]["failure"].is_string());
    assert!(!out.join("scratch").exists());

    // eval on the training instances reproduces the stored incumbent fitness exactly
    let o = bag(&["eval", out.to_str().unwrap(), "--instances", "1-5"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&o.stdout);
    assert_eq!(
        report["mean_auc"].as_f64(),
        result["incumbent"]["fitness"]["mean_auc"].as_f64()
    );
    let held_out = bag(&["eval", out.to_str().unwrap(), "--instances", "6-10"], tmp.path());
    assert!(held_out.status.success());
    assert_eq!(json(&held_out.stdout)["per_instance"].as_array().unwrap().len(), 5);

    // auc over one generation's traces matches its stored fitness
    for t in [0u32, 1, 3] {
        let rec: Value = json(&fs::read(out.join(format!("generations/{t:03}.json"))).unwrap());
        let traces: Vec<String> = (1..=5)
            .map(|i| out.join(format!("traces/{t:03}_inst{i}.jsonl")).display().to_string())
            .filter(|p| Path::new(p).exists())
            .collect();
        if traces.is_empty() {
            continue;
        }
        let mut args = vec!["auc"];
        args.extend(traces.iter().map(String::as_str));
        let o = bag(&args, tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(
            json(&o.stdout)["mean_auc"].as_f64(),
            rec["fitness"]["mean_auc"].as_f64(),
            "generation {t}"
        );
    }

    let o = bag(&["report", out.to_str().unwrap(), "--out", "rep"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("rep/table.csv")).unwrap();
    assert!(table.starts_with("problem,bag\npbo_f1_d12,1.000 (1)"), "{table}");
    let conv = fs::read_to_string(tmp.path().join("rep/convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 7);

    let o = bag(&["simmatrix", out.to_str().unwrap(), "--no-frontend"], tmp.path());
    assert!(o.status.success());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout).lines().count(),
        7,
        "header plus six sources with code"
    );

    // a reused directory is refused
    let o = bag(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_two_without_creating_a_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), 2);
    let out = tmp.path().join("never");
    let o = bag(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--frobnicate",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn missing_report_dir_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bag(&["report", "runs/missing"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("runs/missing"));
}

#[test]
fn exhausted_session_marks_run_failed_and_keeps_partial_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), 2);
    let out = tmp.path().join("partial");
    let o = bag(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--query-budget",
            "4",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let manifest: Value = json(&fs::read(out.join("manifest.json")).unwrap());
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["error"].as_str().unwrap().contains("exhausted"));
    assert!(out.join("generations/002.json").is_file());
    assert!(!out.join("result.json").exists());
}

#[test]
fn missing_credentials_fail_before_any_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), 1);
    let mut cfg: Value = json(&fs::read(&config).unwrap());
    cfg["providers"] = serde_json::json!([{
        "name": "hosted",
        "endpoint_url": "http://127.0.0.1:9/v1/chat/completions",
        "model": "m",
        "api_key_env": "BAG_TEST_KEY_THAT_IS_NOT_SET"
    }]);
    fs::write(&config, cfg.to_string()).unwrap();
    let out = tmp.path().join("cred");
    let o = bag(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--llm",
            "provider:hosted",
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("BAG_TEST_KEY_THAT_IS_NOT_SET"));
    assert!(!out.exists());
}

#[test]
fn attn_aggregates_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("r.csv");
    fs::write(&p, "token,component,o0\nYou,role,3\nsolve,task,-1\n").unwrap();
    let o = bag(&["attn", p.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let v = json(&o.stdout);
    assert_eq!(v["tokens"][0][1].as_f64(), Some(1.0));
    assert_eq!(v["components"][1][1].as_f64(), Some(0.25));
}

#[test]
fn bench_list_is_a_json_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bag(&["bench", "list"], tmp.path());
    assert!(o.status.success());
    let v = json(&o.stdout);
    let problems = v["problems"].as_array().unwrap();
    assert!(problems.iter().any(|p| p["suite"] == "bbob" && p["function"] == 20));
    assert_eq!(v["bench_algorithms"].as_array().unwrap().len(), 10);
    assert_eq!(v["bench_algorithms"][0]["entry_name"], "GreedyHillClimber");
}
