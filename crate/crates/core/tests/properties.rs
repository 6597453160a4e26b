mod support;

use std::collections::BTreeMap;

use orderprobe::analysis::{conditional_entropy, task_divergence, Weighting};
use orderprobe::enumerate::{enumerate_to_coverage, sentence_probability, DEFAULT_MAX_LENGTH};
use orderprobe::grammar::Grammar;
use orderprobe::oracle::records::{
    read_ordered_table, read_unordered_table, write_ordered_table, write_unordered_table,
};
use orderprobe::oracle::{build_ordered, erase_order};
use orderprobe::{toy, SentenceTable};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::brute;

fn table(g: &Grammar) -> SentenceTable {
    enumerate_to_coverage(g, 0.75, DEFAULT_MAX_LENGTH).unwrap()
}

fn as_strings(t: &SentenceTable) -> Vec<(brute::Sentence, f64)> {
    t.sentences()
        .iter()
        .map(|s| {
            (
                s.tokens
                    .iter()
                    .map(|x| t.vocabulary().token(*x).to_string())
                    .collect(),
                s.probability,
            )
        })
        .collect()
}

fn shuffled(g: &Grammar, seed: u64) -> Grammar {
    let mut rules: Vec<(f64, &str, Vec<&str>)> = g
        .rules()
        .iter()
        .map(|r| {
            (
                r.probability,
                g.name(r.lhs),
                r.rhs.iter().map(|s| g.name(*s)).collect(),
            )
        })
        .collect();
    rules.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Grammar::from_rules(Some(g.name(g.start())), &rules)
        .unwrap()
        .validated()
        .unwrap()
}

#[test]
fn brute_force_agrees_on_bundled_finite_grammars() {
    for text in [toy::G1, toy::G3] {
        let g = Grammar::load(text).unwrap();
        let t = table(&g);
        let all = brute::expand_finite(text);
        assert_eq!(all.len(), t.len());
        for k in 1..=t.max_length() {
            let b = brute::metrics(&all, k);
            let o = build_ordered(&t, k).unwrap();
            let u = erase_order(&o);
            assert_eq!(o.len(), b.instances);
            assert!((conditional_entropy(&o) - b.entropy_ordered).abs() < 1e-12);
            assert!((conditional_entropy(&u) - b.entropy_unordered).abs() < 1e-12);
            let d = task_divergence(&o, &u, Weighting::Weighted).unwrap();
            assert!(
                (d - b.divergence).abs() < 1e-12,
                "k={k}: {d} vs {}",
                b.divergence
            );
        }
    }
}

#[test]
fn brute_force_agrees_on_random_grammars() {
    for seed in 0..30 {
        let g = toy::random_grammar(seed, 8);
        let t = table(&g);
        let strings = as_strings(&t);
        for k in 1..=t.max_length().min(6) {
            let b = brute::metrics(&strings, k);
            let o = build_ordered(&t, k).unwrap();
            let u = erase_order(&o);
            let d = task_divergence(&o, &u, Weighting::Weighted).unwrap();
            assert!((d - b.divergence).abs() < 1e-10, "seed {seed} k={k}");
            assert!((conditional_entropy(&u) - b.entropy_unordered).abs() < 1e-10);
        }
    }
}

#[test]
fn full_masking_depends_only_on_length_and_position() {
    for seed in 0..20 {
        let t = table(&toy::random_grammar(seed, 8));
        let o = build_ordered(&t, t.max_length()).unwrap();
        assert!(o.iter().all(|(k, _)| k.context.iter().all(Option::is_none)));
        let positions: Vec<usize> = o.iter().map(|(k, _)| k.target).collect();
        assert_eq!(positions, (0..t.max_length()).collect::<Vec<_>>());
    }
}

#[test]
fn aggregation_identity_survives_serialization() {
    for seed in 0..20 {
        let t = table(&toy::random_grammar(seed, 8));
        for k in 1..=t.max_length().min(5) {
            let o = build_ordered(&t, k).unwrap();
            let u = erase_order(&o);
            let vocab = o.vocabulary().clone();
            let o = read_ordered_table(&write_ordered_table(&o), vocab.clone()).unwrap();
            let u = read_unordered_table(&write_unordered_table(&u), vocab).unwrap();
            let mut sums: BTreeMap<_, BTreeMap<_, f64>> = BTreeMap::new();
            for (key, c) in o.iter() {
                let e = sums.entry(key.class()).or_default();
                for (y, p) in c.distribution.iter() {
                    *e.entry(y).or_insert(0.0) += c.weight * p;
                }
            }
            assert_eq!(sums.len(), u.len());
            for (class, c) in u.iter() {
                for (y, p) in c.distribution.iter() {
                    assert!((c.weight * p - sums[class][&y]).abs() < 1e-9);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn enumeration_ignores_rule_order(seed in 0u64..500, perm in 0u64..1000) {
        let g = toy::random_grammar(seed, 8);
        let a = table(&g);
        let b = table(&shuffled(&g, perm));
        prop_assert_eq!(a.sentences(), b.sentences());
        prop_assert_eq!(a.covered_mass(), b.covered_mass());
    }

    #[test]
    fn table_matches_inside_probabilities(seed in 0u64..500) {
        let g = toy::random_grammar(seed, 8);
        let t = table(&g);
        prop_assert!(t.covered_mass() > 0.75 && t.covered_mass() <= 1.0 + 1e-9);
        for s in t.sentences() {
            prop_assert!(s.probability > 0.0);
            let exact = sentence_probability(&g, &s.tokens);
            prop_assert!((s.probability - exact).abs() < 1e-12, "{} vs {}", s.probability, exact);
        }
    }

    #[test]
    fn raising_the_threshold_keeps_sentences(seed in 0u64..500, lo in 0.05f64..0.9, step in 0.0f64..0.09) {
        let g = toy::random_grammar(seed, 8);
        let small = enumerate_to_coverage(&g, lo, DEFAULT_MAX_LENGTH).unwrap();
        let large = enumerate_to_coverage(&g, lo + step, DEFAULT_MAX_LENGTH).unwrap();
        for s in small.sentences() {
            prop_assert!(large.probability(&s.tokens).is_some());
        }
    }

    #[test]
    fn reference_invariants(seed in 0u64..500) {
        let t = table(&toy::random_grammar(seed, 8));
        for k in 1..=t.max_length().min(6) {
            let o = build_ordered(&t, k).unwrap();
            let u = erase_order(&o);
            prop_assert!((o.total_weight() - 1.0).abs() < 1e-9);
            prop_assert!((u.total_weight() - 1.0).abs() < 1e-9);
            for c in o.iter().map(|(_, c)| c).chain(u.iter().map(|(_, c)| c)) {
                prop_assert!(c.weight >= 0.0);
                prop_assert!((c.distribution.total() - 1.0).abs() < 1e-9);
            }
            let h_o = conditional_entropy(&o);
            let h_u = conditional_entropy(&u);
            prop_assert!(h_u >= h_o - 1e-9);
            let d = task_divergence(&o, &u, Weighting::Weighted).unwrap();
            prop_assert!((d - (h_u - h_o)).abs() < 1e-9);
        }
    }
}
