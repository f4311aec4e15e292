use std::collections::HashMap;

use bag_core::analysis::codebleu::{
    codebleu, ngram_precision, similarity_matrix, tokenize, CodeBleuSettings, Frontend, PythonAstFrontend, TokenSeq,
};
use bag_core::analysis::relevance::{aggregate_relevance, ComponentSpan, RelevanceMatrix};
use bag_core::analysis::report::competition_ranks;
use proptest::prelude::*;

const A: &str = r#"
import numpy as np
class Climber:
    def __init__(self, budget, dim):
        self.budget = budget
        self.dim = dim

    def __call__(self, func):
        x = np.zeros(self.dim)
        best = func(x)
        for i in range(self.budget - 1):
            y = x.copy()
            y[i % self.dim] = 1 - y[i % self.dim]
            fy = func(y)
            if fy > best:
                x, best = y, fy
        return best, x
"#;

fn frontend() -> PythonAstFrontend {
    PythonAstFrontend::default()
}

#[test]
fn identity_scores_one_with_frontend() {
    let s = codebleu(A, A, &CodeBleuSettings::default(), Some(&frontend())).unwrap();
    assert!(s.warning.is_none(), "{:?}", s.warning);
    assert!((s.total - 1.0).abs() < 1e-9);
    assert_eq!((s.ast, s.dataflow, s.brevity_penalty), (Some(1.0), Some(1.0), 1.0));
}

#[test]
fn syntax_and_dataflow_ignore_identifier_spelling() {
    let renamed = A
        .replace("best", "top")
        .replace("fy", "value")
        .replace("Climber", "Walker");
    let s = codebleu(&renamed, A, &CodeBleuSettings::default(), Some(&frontend())).unwrap();
    assert_eq!(s.ast, Some(1.0));
    assert_eq!(s.dataflow, Some(1.0));
    assert!(s.bleu < 1.0);
}

#[test]
fn unparsable_source_drops_structural_components() {
    let broken = "def f(:\n    return";
    let s = codebleu(broken, A, &CodeBleuSettings::default(), Some(&frontend())).unwrap();
    assert!(s.ast.is_none() && s.dataflow.is_none());
    assert!(s.warning.is_some());
    assert_eq!(s.lambdas, [0.5, 0.5, 0.0, 0.0]);

    let missing = PythonAstFrontend {
        interpreter: "/nonexistent/python".into(),
    };
    let s = codebleu(A, A, &CodeBleuSettings::default(), Some(&missing)).unwrap();
    assert!((s.total - 1.0).abs() < 1e-9);
    assert!(s.warning.unwrap().contains("unavailable"));
}

#[test]
fn score_is_asymmetric() {
    let short = "x = a + b\n";
    let long = "x = a + b\ny = x * 2\nz = y - x\n";
    let set = CodeBleuSettings::default();
    let f = frontend();
    let ab = codebleu(short, long, &set, Some(&f)).unwrap().total;
    let ba = codebleu(long, short, &set, Some(&f)).unwrap().total;
    assert!((ab - ba).abs() > 1e-3, "{ab} vs {ba}");
}

#[test]
fn matrix_is_upper_triangular_and_tracks_lineage() {
    let f = frontend();
    let set = CodeBleuSettings::default();
    let same = similarity_matrix(&[A, A, A], &set, Some(&f)).unwrap();
    assert_eq!(same.cells.len(), 3);
    assert!(same.cells.iter().all(|c| (c.2 - 1.0).abs() < 1e-9));

    // a lineage of small edits, a fresh unrelated algorithm, then edits of it
    let a1 = A.replace("1 - y", "1 ^ y");
    let fresh = r#"
import random
def search(f, n, evaluations):
    pop = [[random.random() for _ in range(n)] for _ in range(20)]
    scores = [f(p) for p in pop]
    while evaluations > 0:
        evaluations -= 1
        k = random.randrange(20)
        child = [v + random.gauss(0, 0.1) for v in pop[k]]
        s = f(child)
        worst = min(range(20), key=lambda j: scores[j])
        if s > scores[worst]:
            pop[worst], scores[worst] = child, s
    return max(scores)
"#;
    let f1 = fresh.replace("0.1", "0.2");
    let f2 = f1.replace("range(20)", "range(30)");
    let codes = [A, a1.as_str(), fresh, f1.as_str(), f2.as_str()];
    let m = similarity_matrix(&codes, &set, Some(&f)).unwrap();
    assert_eq!(m.cells.len(), 10);
    let col2_max = (0..2).map(|i| m.get(i, 2).unwrap()).fold(0.0, f64::max);
    assert!(col2_max < 0.5, "fresh injection {col2_max}");
    assert!(m.get(0, 1).unwrap() > 0.8);
    assert!(m.get(2, 3).unwrap() > 0.8 && m.get(2, 4).unwrap() > 0.8);
    assert!(m.get(2, 4).unwrap() > m.get(0, 4).unwrap());
    assert!(m.to_csv().lines().count() == 6);
}

#[test]
fn frontend_batch_reports_per_source_failures() {
    let out = frontend().parse_many(&["x = 1", "def (", ""]).unwrap();
    assert!(out[0].is_some() && out[1].is_none());
    assert_eq!(out[2].as_ref().unwrap().subtrees.len(), 0);
}

fn brute_force_precision(c: &[String], r: &[String], n: usize) -> f64 {
    if c.len() < n {
        return 0.0;
    }
    let mut rc: HashMap<Vec<String>, usize> = HashMap::new();
    for w in r.windows(n) {
        *rc.entry(w.to_vec()).or_default() += 1;
    }
    let mut cc: HashMap<Vec<String>, usize> = HashMap::new();
    for w in c.windows(n) {
        *cc.entry(w.to_vec()).or_default() += 1;
    }
    let clipped: usize = cc.iter().map(|(g, k)| (*k).min(*rc.get(g).unwrap_or(&0))).sum();
    clipped as f64 / (c.len() - n + 1) as f64
}

fn token_vec() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "if", "x"]), 0..30)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn ngram_precision_matches_dictionary_oracle(c in token_vec(), r in token_vec(), n in 1usize..5) {
        let got = ngram_precision(&TokenSeq::from_tokens(c.clone()), &TokenSeq::from_tokens(r.clone()), n, None);
        prop_assert_eq!(got, brute_force_precision(&c, &r, n));
    }

    #[test]
    fn codebleu_components_bounded(c in token_vec(), r in token_vec()) {
        let (c, r) = (c.join(" "), r.join(" "));
        let s = codebleu(&c, &r, &CodeBleuSettings::default(), None).unwrap();
        for v in [s.total, s.bleu, s.weighted_bleu, s.brevity_penalty] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        let id = codebleu(&c, &c, &CodeBleuSettings::default(), None).unwrap();
        prop_assert!((id.total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tokenizer_never_panics(s in "\\PC{0,80}") {
        let t = tokenize(&s);
        prop_assert_eq!(t.tokens.len(), t.keyword_flags.len());
    }

    #[test]
    fn relevance_is_scale_invariant(
        values in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..6),
        c in 0.001f64..1000.0,
    ) {
        let m = RelevanceMatrix {
            input_tokens: (0..values.len()).map(|i| i.to_string()).collect(),
            output_tokens: vec!["o0".into(), "o1".into(), "o2".into()],
            components: vec![ComponentSpan { name: "all".into(), start: 0, end: values.len() }],
            values: values.clone(),
        };
        let scaled = RelevanceMatrix { values: values.iter().map(|r| r.iter().map(|v| v * c).collect()).collect(), ..m.clone() };
        match (aggregate_relevance(&m), aggregate_relevance(&scaled)) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                prop_assert!(a.contains(&1.0));
                // conservation: each nonzero column distributes exactly 1
                let sums = m.column_normalized_sums().unwrap();
                let nonzero = (0..3).filter(|&j| values.iter().any(|r| r[j] != 0.0)).count();
                prop_assert!((sums.iter().sum::<f64>() - nonzero as f64).abs() < 1e-12);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "scaling changed degeneracy"),
        }
    }

    #[test]
    fn ranks_are_scale_invariant_permutations_with_ties(
        values in prop::collection::vec(0.0f64..1.0, 1..10),
        c in 0.01f64..100.0,
    ) {
        let ranks = competition_ranks(&values);
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        // scaling by a positive constant keeps the order of distinct floats only when exact; compare on orderings
        let order_preserved = values.iter().zip(&scaled).all(|(a, sa)| {
            values.iter().zip(&scaled).all(|(b, sb)| (a > b) == (sa > sb))
        });
        if order_preserved {
            prop_assert_eq!(competition_ranks(&scaled), ranks.clone());
        }
        prop_assert!(ranks.iter().all(|&r| r >= 1 && r <= values.len()));
        prop_assert!(ranks.contains(&1));
        let mut sorted = ranks.clone();
        sorted.sort();
        for (i, r) in sorted.iter().enumerate() {
            // competition ranking: the k-th smallest rank is at most k
            prop_assert!(*r <= i + 1);
        }
    }
}
