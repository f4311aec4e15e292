#![allow(dead_code)]

use bag_core::sandbox::CandidateSource;
use bag_core::search::BenchEntry;

/// Minimal protocol client that scripted candidates build on.
pub const PRELUDE: &str = r#"import json, sys, random
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

/// Hill climber that flips each bit with probability `rate` and re-asks
/// every offspring `waste` extra times.
pub fn climber_body(class: &str, rate: f64, waste: u32) -> String {
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

pub fn wire_source(body: String, class: &str) -> CandidateSource {
    CandidateSource::new("python-wire", body, class).unwrap()
}

pub fn wire_bench_set() -> Vec<BenchEntry> {
    (0..5)
        .map(|i| {
            let class = format!("Bench{i}");
            BenchEntry {
                name: format!("bench_{i}"),
                source: wire_source(climber_body(&class, 0.05 + 0.05 * i as f64, 4 - i), &class),
            }
        })
        .collect()
}

/// A response in the expected reply format.
pub fn response(description: &str, code: &str) -> String {
    format!("# Description: {description}\n# Code:\n```python\n{code}\n```\n")
}

/// 100 scripted replies of varying quality; reply #`garbage` (1-based) has no code.
pub fn scripted_responses(count: usize, garbage: Option<usize>) -> Vec<String> {
    (1..=count)
        .map(|i| {
            if Some(i) == garbage {
                return "I am unable to help with that request.".to_string();
            }
            let class = format!("Gen{i}");
            let rate = 0.02 + 0.01 * ((i * 7) % 9) as f64;
            let waste = ((i * 37) % 11) as u32;
            response(
                &format!("Mutation rate {rate:.2} with {waste} repeats."),
                &climber_body(&class, rate, waste),
            )
        })
        .collect()
}
