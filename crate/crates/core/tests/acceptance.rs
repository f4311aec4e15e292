//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use bag_core::analysis::codebleu::{
    bleu, codebleu, ngram_precision, similarity_matrix, CodeBleuSettings, PythonAstFrontend, TokenSeq,
};
use bag_core::analysis::relevance::{aggregate_relevance, ComponentSpan, RelevanceMatrix};
use bag_core::analysis::report::report_table;
use bag_core::analysis::ApproachResults;
use bag_core::evaluation::{auc, RunStatus, RunTrace, TimeGrid, TracePoint};
use bag_core::llm::ReplaySession;
use bag_core::problems::{catalog, make_instance, target_set, Orientation, ProblemId, Registry, Suite, TargetSet};
use bag_core::promptkit::TemplateSet;
use bag_core::sandbox::{fitness, FailureKind, FitnessSettings, RunLimits, RunOutcome, RunnerRegistry, Sandbox};
use bag_core::search::{run_bag, Action, RunDir, SearchConfig, SearchEnv, SearchResult, Strategy};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<RunTrace>, TargetSet, TimeGrid) {
    let orientation = if rng.random::<bool>() {
        Orientation::Maximize
    } else {
        Orientation::Minimize
    };
    let sign = if orientation == Orientation::Maximize {
        1.0
    } else {
        -1.0
    };
    let m = rng.random_range(1..=10);
    let mut level = rng.random_range(-5.0..5.0);
    let targets: Vec<f64> = (0..m)
        .map(|_| {
            level += sign * rng.random_range(0.01..2.0);
            level
        })
        .collect();
    let targets = TargetSet::new(targets, orientation).unwrap();
    let budget = rng.random_range(1..=200u64);
    let z = rng.random_range(1..=10);
    let grid = TimeGrid::new((0..z).map(|_| rng.random_range(1..=budget)).collect()).unwrap();
    let r = rng.random_range(1..=3);
    let problem = ProblemId::new(Suite::Pbo, 1, 1, 4);
    let traces = (0..r)
        .map(|h| {
            let total = rng.random_range(0..=budget);
            let mut points = Vec::new();
            let mut evals = 0;
            let mut best = rng.random_range(-8.0..8.0) * sign;
            while evals < total {
                evals += rng.random_range(1..=(total / 3).max(1));
                if evals > total {
                    break;
                }
                points.push(TracePoint { evals, best_y: best });
                best += sign * rng.random_range(0.05..3.0);
            }
            RunTrace {
                problem,
                run_seed: h,
                budget,
                orientation,
                points,
                total_evals: total,
                status: RunStatus::BudgetExhausted,
            }
        })
        .collect();
    (traces, targets, grid)
}

/// Literal triple sum over runs, targets and time points.
fn oracle_auc(traces: &[RunTrace], targets: &TargetSet, grid: &TimeGrid) -> f64 {
    let mut hits = 0usize;
    for tr in traces {
        for &phi in &targets.values {
            for &t in grid.points() {
                let mut best: Option<f64> = None;
                for p in &tr.points {
                    if p.evals <= t {
                        best = Some(p.best_y);
                    }
                }
                let reached = match (best, targets.orientation) {
                    (Some(b), Orientation::Maximize) => b >= phi,
                    (Some(b), Orientation::Minimize) => b <= phi,
                    (None, _) => false,
                };
                hits += reached as usize;
            }
        }
    }
    hits as f64 / (traces.len() * targets.len() * grid.len()) as f64
}

fn auc_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let (traces, targets, grid) = random_case(&mut rng);
        let got = auc(&traces, &targets, &grid).map_err(|e| e.to_string())?.auc;
        let want = oracle_auc(&traces, &targets, &grid);
        ensure((got - want).abs() <= 1e-12, || format!("case {case}: {got} vs {want}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))
}

fn hand_auc() -> Check {
    let trace = RunTrace {
        problem: ProblemId::new(Suite::Pbo, 1, 1, 4),
        run_seed: 1,
        budget: 2,
        orientation: Orientation::Maximize,
        points: vec![
            TracePoint { evals: 1, best_y: 1.0 },
            TracePoint { evals: 2, best_y: 3.0 },
        ],
        total_evals: 2,
        status: RunStatus::BudgetExhausted,
    };
    let targets = TargetSet::new(vec![1.0, 2.0, 3.0], Orientation::Maximize).unwrap();
    let v = auc(&[trace], &targets, &TimeGrid::new(vec![1, 2]).unwrap())
        .unwrap()
        .auc;
    ensure(v == 2.0 / 3.0, || format!("got {v}"))
}

fn target_sets() -> Check {
    let pbo = |f| target_set(ProblemId::new(Suite::Pbo, f, 1, 100)).unwrap().values;
    let ints = |r: std::ops::RangeInclusive<i32>| r.map(f64::from).collect::<Vec<_>>();
    ensure(pbo(1) == ints(50..=100), || "F1".into())?;
    ensure(pbo(2) == ints(0..=100), || "F2".into())?;
    let f3: Vec<f64> = (0..=505).map(|i| (2525 + 5 * i) as f64).collect();
    ensure(pbo(3) == f3, || "F3".into())?;
    for f in [1, 3, 8, 14, 20] {
        let t = target_set(ProblemId::new(Suite::Bbob, f, 1, 5)).unwrap().values;
        ensure((t[0] - 1e2).abs() < 1e-12, || {
            format!("bbob F{f} first target {}", t[0])
        })?;
        let last = *t.last().unwrap();
        ensure((last - 1e-8).abs() < 1e-20, || format!("bbob F{f} last target {last}"))?;
    }
    Ok(())
}

fn problem_sanity() -> Check {
    let pbo = |f, bits: &str| {
        let inst = make_instance(ProblemId::new(Suite::Pbo, f, 1, bits.len())).unwrap();
        let x: Vec<f64> = bits.chars().map(|c| if c == '1' { 1.0 } else { 0.0 }).collect();
        inst.evaluate(&x).unwrap()
    };
    ensure(pbo(1, &"1".repeat(37)) == 37.0, || "OneMax".into())?;
    ensure(pbo(2, "1101") == 2.0, || "LeadingOnes".into())?;
    ensure(pbo(3, &"1".repeat(100)) == 5050.0, || "Harmonic".into())?;
    for k in 1..=5 {
        let inst = make_instance(ProblemId::new(Suite::Bbob, 1, k, 5)).unwrap();
        let y = inst.evaluate(&inst.optimum_point().unwrap()).unwrap();
        ensure((y - inst.y_opt()).abs() <= 1e-12, || {
            format!("Sphere instance {k}: {y} vs {}", inst.y_opt())
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for entry in catalog() {
        let dims: &[usize] = match entry.suite {
            Suite::Pbo => &[16, 27, 64],
            Suite::Bbob => &[5],
        };
        let Some(inst) = dims
            .iter()
            .find_map(|&d| make_instance(ProblemId::new(entry.suite, entry.function, 2, d)).ok())
        else {
            return Err(format!("no usable dimension for {}", entry.name));
        };
        let n = inst.domain().dim();
        for _ in 0..1000 {
            let x: Vec<f64> = match entry.suite {
                Suite::Pbo => (0..n).map(|_| rng.random_range(0..2) as f64).collect(),
                Suite::Bbob => (0..n).map(|_| rng.random_range(-5.0..=5.0)).collect(),
            };
            let y = inst.evaluate(&x).unwrap();
            ensure(!inst.orientation().improves(y, inst.y_opt()), || {
                format!("{} beat its optimum: {y} vs {}", entry.name, inst.y_opt())
            })?;
        }
    }
    Ok(())
}

fn replay_config() -> SearchConfig {
    SearchConfig {
        problem: ProblemId::new(Suite::Pbo, 1, 1, 20),
        instances: vec![1, 2, 3, 4, 5],
        bench_set: wire_bench_set(),
        query_budget: 100,
        q: 10,
        rng_seed: 7,
        strategy: Strategy::Bag,
        fitness: FitnessSettings {
            timeout: Duration::from_secs(60),
            ..FitnessSettings::with_budget(2000)
        },
        language_tag: "python-wire".into(),
    }
}

const GARBAGE_AT: u32 = 37;

fn replay_run(scratch: &Path, out: Option<&Path>) -> Result<SearchResult, String> {
    let sandbox = Sandbox::new(RunnerRegistry::default(), scratch);
    let registry = Registry::standard();
    let templates = TemplateSet::default();
    let mut llm = ReplaySession::from_texts(scripted_responses(100, Some(GARBAGE_AT as usize)));
    let run_dir = out.map(RunDir::create).transpose().map_err(|e| e.to_string())?;
    run_bag(
        &replay_config(),
        &mut SearchEnv {
            sandbox: &sandbox,
            registry: &registry,
            llm: &mut llm,
            templates: &templates,
            run_dir: run_dir.as_ref(),
        },
    )
    .map_err(|e| e.to_string())
}

fn algorithm_replay(results: &mut Vec<SearchResult>) -> Check {
    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let a = replay_run(scratch.path(), Some(&scratch.path().join("run_a")))?;
    let one_run = start.elapsed();
    let b = replay_run(scratch.path(), None)?;
    let ja = serde_json::to_string(&a).unwrap();
    let jb = serde_json::to_string(&b).unwrap();
    ensure(ja == jb, || "two replays differ".into())?;
    let on_disk = std::fs::read_to_string(scratch.path().join("run_a/result.json")).map_err(|e| e.to_string())?;
    ensure(on_disk == serde_json::to_string_pretty(&a).unwrap() + "\n", || {
        "persisted result differs".into()
    })?;
    ensure(one_run < Duration::from_secs(120), || {
        format!("one run took {one_run:?}")
    })?;
    ensure(a.records.len() == 100, || format!("{} records", a.records.len()))?;

    let bench_ts: Vec<u32> = a
        .records
        .iter()
        .filter(|r| matches!(r.action, Some(Action::RefineBench { .. })))
        .map(|r| r.t)
        .collect();
    ensure(bench_ts == (1..=10).map(|k| 10 * k).collect::<Vec<_>>(), || {
        format!("RefineBench at {bench_ts:?}")
    })?;
    let mut uses = [0; 5];
    for r in &a.records {
        if let Some(Action::RefineBench { bench_index }) = r.action {
            uses[bench_index] += 1;
        }
    }
    ensure(uses == [2; 5], || format!("bench usage {uses:?}"))?;
    ensure(a.best_so_far_series.windows(2).all(|w| w[0] <= w[1]), || {
        "series decreases".into()
    })?;

    let g = &a.records[GARBAGE_AT as usize - 1];
    ensure(g.failure.is_some() && !g.accepted && g.fitness.mean_auc == 0.0, || {
        format!("garbage record {g:?}")
    })?;
    let (before, after) = (
        a.best_so_far_series[GARBAGE_AT as usize - 2],
        a.best_so_far_series[GARBAGE_AT as usize - 1],
    );
    ensure(before == after, || "incumbent changed on a failed response".into())?;
    ensure(a.records.iter().any(|r| r.accepted), || {
        "nothing was ever accepted".into()
    })?;
    println!(
        "      one replay run: {:.1}s, final incumbent AUC {:.4}",
        one_run.as_secs_f64(),
        a.incumbent.fitness.mean_auc
    );
    results.push(a);
    Ok(())
}

fn sandbox_checks() -> Check {
    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sb = Sandbox::new(RunnerRegistry::default(), scratch.path());
    let inst = make_instance(ProblemId::new(Suite::Pbo, 1, 1, 6)).unwrap();
    let limits = |budget, secs| RunLimits {
        budget,
        timeout: Duration::from_secs_f64(secs),
        cpu_limit: None,
    };

    let count_file = scratch.path().join("tells.txt");
    let greedy = format!(
        "{PRELUDE}\nfor _ in range(INIT['budget'] + 10):\n    _send({{'type': 'ask', 'x': [0] * INIT['dim']}})\n\
         tells = 0\nwhile True:\n    line = sys.stdin.readline()\n    if not line:\n        break\n    \
         tells += json.loads(line)['type'] == 'tell'\nopen({:?}, 'w').write(str(tells))\n",
        count_file.display().to_string()
    );
    let run = sb
        .run_candidate(&wire_source(greedy, "Main"), &inst, 1, limits(9, 20.0))
        .map_err(|e| e.to_string())?;
    let tells = std::fs::read_to_string(&count_file).map_err(|e| e.to_string())?;
    ensure(tells.trim() == "9", || format!("{tells} tells for budget 9"))?;
    ensure(run.outcome.trace().map(|t| t.total_evals) == Some(9), || {
        "trace length".into()
    })?;

    let registry = Registry::standard();
    let settings = FitnessSettings {
        timeout: Duration::from_secs(2),
        ..FitnessSettings::with_budget(50)
    };
    let base = ProblemId::new(Suite::Pbo, 1, 1, 6);
    let crash = fitness(
        &sb,
        &registry,
        &wire_source(format!("{PRELUDE}\nraise RuntimeError('x')"), "Main"),
        base,
        &[1, 2, 3],
        &settings,
    )
    .map_err(|e| e.to_string())?;
    ensure(crash.report.mean_auc == 0.0, || "crash AUC".into())?;

    let pid_file = scratch.path().join("pids");
    let sleeper = format!(
        "{PRELUDE}\nimport os, subprocess, time\np = subprocess.Popen(['sleep', '300'])\n\
         open({:?}, 'w').write('%d %d' % (os.getpid(), p.pid))\ntime.sleep(300)\n",
        pid_file.display().to_string()
    );
    let start = Instant::now();
    let run = sb
        .run_candidate(&wire_source(sleeper.clone(), "Main"), &inst, 1, limits(9, 2.0))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        matches!(&run.outcome, RunOutcome::Failure(f) if f.kind == FailureKind::Timeout),
        || format!("{:?}", run.outcome),
    )?;
    ensure((elapsed - 2.0).abs() <= 1.0, || format!("timeout after {elapsed:.2}s"))?;
    std::thread::sleep(Duration::from_millis(200));
    let pids = std::fs::read_to_string(&pid_file).map_err(|e| e.to_string())?;
    for pid in pids.split_whitespace().chain([run.pid.to_string().as_str()]) {
        let alive = std::fs::read_to_string(format!("/proc/{pid}/stat"))
            .map(|s| !s.rsplit(')').next().unwrap_or("").trim_start().starts_with('Z'))
            .unwrap_or(false);
        ensure(!alive, || format!("process {pid} survived"))?;
    }
    let slow =
        fitness(&sb, &registry, &wire_source(sleeper, "Main"), base, &[1], &settings).map_err(|e| e.to_string())?;
    ensure(slow.report.mean_auc == 0.0, || "timeout AUC".into())
}

fn codebleu_checks() -> Check {
    let f = PythonAstFrontend::default();
    let set = CodeBleuSettings::default();
    let code = include_str!("../assets/bench/pbo/greedy_hill_climber.py");
    let id = codebleu(code, code, &set, Some(&f)).map_err(|e| e.to_string())?;
    ensure(id.warning.is_none(), || format!("frontend warning {:?}", id.warning))?;
    ensure((id.total - 1.0).abs() <= 1e-9, || format!("identity {}", id.total))?;

    let seq = |s: &str| TokenSeq::from_tokens(s.split_whitespace());
    let b = bleu(&seq("a b"), &seq("a b c d"), 4, None);
    ensure((b - (-1.0f64).exp()).abs() <= 1e-9, || format!("BP fixture {b}"))?;
    let w = seq("a b").weights(set.keyword_weight);
    let bw = bleu(&seq("a b"), &seq("a b c d"), 4, Some(&w));
    ensure((bw - (-1.0f64).exp()).abs() <= 1e-9, || {
        format!("weighted BP fixture {bw}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet = ["a", "b", "c", "d", "if", "for"];
    let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.random_range(0..25);
        (0..len)
            .map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string())
            .collect()
    };
    for case in 0..500 {
        let (c, r, n) = (draw(&mut rng), draw(&mut rng), rng.random_range(1..=4));
        let got = ngram_precision(
            &TokenSeq::from_tokens(c.clone()),
            &TokenSeq::from_tokens(r.clone()),
            n,
            None,
        );
        let mut want = 0.0;
        if c.len() >= n {
            let grams = |s: &[String]| s.windows(n).map(|w| w.join(" ")).collect::<Vec<_>>();
            let (cg, mut rg) = (grams(&c), grams(&r));
            let mut clipped = 0;
            for g in &cg {
                if let Some(pos) = rg.iter().position(|x| x == g) {
                    rg.remove(pos);
                    clipped += 1;
                }
            }
            want = clipped as f64 / cg.len() as f64;
        }
        ensure(got == want, || format!("case {case}: {got} vs {want}"))?;
    }

    let short = "x = a + b\n";
    let long = "x = a + b\ny = x * 2\nz = y - x\n";
    let ab = codebleu(short, long, &set, Some(&f)).map_err(|e| e.to_string())?.total;
    let ba = codebleu(long, short, &set, Some(&f)).map_err(|e| e.to_string())?.total;
    ensure(ab != ba, || "asymmetry fixture is symmetric".into())?;

    for n in 2..=6 {
        let codes: Vec<String> = (0..n).map(|i| format!("x = {i}\ny = x + {i}\n")).collect();
        let refs: Vec<&str> = codes.iter().map(String::as_str).collect();
        let m = similarity_matrix(&refs, &set, Some(&f)).map_err(|e| e.to_string())?;
        ensure(m.cells.len() == n * (n - 1) / 2, || {
            format!("n={n}: {} cells", m.cells.len())
        })?;
        ensure(m.cells.iter().all(|&(i, j, _)| j > i), || "cell below diagonal".into())?;
    }
    Ok(())
}

fn relevance_checks() -> Check {
    let m = |values: Vec<Vec<f64>>| RelevanceMatrix {
        input_tokens: (0..values.len()).map(|i| i.to_string()).collect(),
        output_tokens: (0..values[0].len()).map(|j| j.to_string()).collect(),
        components: vec![ComponentSpan {
            name: "all".into(),
            start: 0,
            end: values.len(),
        }],
        values,
    };
    let r = aggregate_relevance(&m(vec![vec![3.0], vec![-1.0]])).map_err(|e| e.to_string())?;
    ensure(r == vec![1.0, 1.0 / 3.0], || format!("{r:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..7).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect();
    let reference = aggregate_relevance(&m(base.clone())).map_err(|e| e.to_string())?;
    for c in [1e-6, 1.0, 1e6] {
        let scaled = base.iter().map(|row| row.iter().map(|v| v * c).collect()).collect();
        let got = aggregate_relevance(&m(scaled)).map_err(|e| e.to_string())?;
        for (x, y) in got.iter().zip(&reference) {
            ensure((x - y).abs() <= 1e-12, || format!("scale {c}: {x} vs {y}"))?;
        }
    }
    for j in 0..7 {
        let col: f64 = base.iter().map(|r| r[j].abs()).sum();
        let s: f64 = base.iter().map(|r| r[j].abs() / col).sum();
        ensure((s - 1.0).abs() <= 1e-12, || format!("column {j} sums to {s}"))?;
    }
    let sums = m(base).column_normalized_sums().map_err(|e| e.to_string())?;
    let total: f64 = sums.iter().sum();
    ensure((total - 7.0).abs() <= 1e-12, || format!("conservation {total}"))
}

fn rank_table() -> Check {
    let row = [0.991, 0.991, 0.765, 1.000, 0.991, 0.856];
    let results: Vec<ApproachResults> = row
        .iter()
        .enumerate()
        .map(|(i, &v)| ApproachResults {
            approach: format!("m{i}"),
            per_problem: vec![("F21".into(), v)],
        })
        .collect();
    let t = report_table(&results).map_err(|e| e.to_string())?;
    let ranks: Vec<usize> = t.cells[0].iter().map(|c| c.rank).collect();
    ensure(ranks == vec![2, 2, 6, 1, 2, 5], || format!("{ranks:?}"))
}

fn elitism(results: &[SearchResult]) -> Check {
    ensure(!results.is_empty(), || "no runs to check".into())?;
    for r in results {
        ensure(r.incumbent.fitness.mean_auc >= r.seed.fitness.mean_auc, || {
            format!(
                "incumbent {} below seed {}",
                r.incumbent.fitness.mean_auc, r.seed.fitness.mean_auc
            )
        })?;
        ensure(
            r.best_so_far_series.iter().all(|&v| v >= r.seed.fitness.mean_auc),
            || "series dips below seed".into(),
        )?;
    }
    Ok(())
}

fn main() {
    let mut runs = Vec::new();
    let mut outcomes: Vec<(&str, Check)> = vec![
        ("AUC oracle equivalence (1000 cases, 1e-12, < 10 s)", auc_oracle()),
        ("Hand AUC fixture = 2/3", hand_auc()),
        ("Target sets", target_sets()),
        ("Problem sanity", problem_sanity()),
    ];
    outcomes.push((
        "Benchmark-assisted search replay reproduction",
        algorithm_replay(&mut runs),
    ));
    outcomes.push(("Sandbox budget, failure scoring, timeout, orphans", sandbox_checks()));
    outcomes.push((
        "CodeBLEU identity, BP, n-gram oracle, asymmetry, triangle",
        codebleu_checks(),
    ));
    outcomes.push(("Relevance aggregation", relevance_checks()));
    outcomes.push(("Rank table F21 row", rank_table()));
    outcomes.push(("End-to-end elitism", elitism(&runs)));

    let mut failed = 0;
    for (name, outcome) in &outcomes {
        match outcome {
            Ok(()) => println!("[PASS] {name}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
