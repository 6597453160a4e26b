//! Bundled reference grammars and a seeded generator of small random grammars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grammar::Grammar;

pub const G1: &str = include_str!("../../../grammars/g1.pcfg");
pub const G3: &str = include_str!("../../../grammars/g3.pcfg");
pub const GINF: &str = include_str!("../../../grammars/ginf.pcfg");

pub fn g1() -> Grammar {
    Grammar::load(G1).expect("bundled grammar")
}

pub fn g3() -> Grammar {
    Grammar::load(G3).expect("bundled grammar")
}

pub fn ginf() -> Grammar {
    Grammar::load(GINF).expect("bundled grammar")
}

const NONTERMINALS: [&str; 3] = ["S", "A", "B"];
const TERMINALS: [&str; 5] = ["a", "b", "c", "d", "e"];

/// A random valid grammar with at most `max_rules` rules and at most three
/// nonterminals. Nonterminals only reference later ones, except for at most
/// one self-recursive rule per nonterminal with probability at most 0.5,
/// which keeps the expected sentence length finite.
pub fn random_grammar(seed: u64, max_rules: usize) -> Grammar {
    assert!(max_rules >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nt = rng.gen_range(1..=NONTERMINALS.len().min(max_rules.div_ceil(2)).max(1));
    let mut budget = max_rules - n_nt;
    let mut rules: Vec<(f64, &str, Vec<&str>)> = Vec::new();

    for i in 0..n_nt {
        let lhs = NONTERMINALS[i];
        // Keep one rule in reserve for every later nonterminal.
        let floor = usize::from(i == 0 && budget > 0);
        let extra = rng.gen_range(floor..=budget.min(2).max(floor));
        budget -= extra;
        let mut rhs_list: Vec<(Vec<&str>, bool)> = Vec::new();

        // First rule always terminates without recursion.
        let len = rng.gen_range(1..=3);
        let base: Vec<&str> = (0..len)
            .map(|_| {
                if i + 1 < n_nt && rng.gen_bool(0.45) {
                    NONTERMINALS[rng.gen_range(i + 1..n_nt)]
                } else {
                    TERMINALS[rng.gen_range(0..TERMINALS.len())]
                }
            })
            .collect();
        rhs_list.push((base, false));

        let mut has_recursive = false;
        for _ in 0..extra {
            let len = rng.gen_range(1..=3);
            let mut recursive = false;
            let rhs: Vec<&str> = (0..len)
                .map(|_| {
                    let roll: f64 = rng.gen();
                    if roll < 0.2 && !has_recursive && !recursive && len > 1 {
                        recursive = true;
                        lhs
                    } else if roll < 0.5 && i + 1 < n_nt {
                        NONTERMINALS[rng.gen_range(i + 1..n_nt)]
                    } else {
                        TERMINALS[rng.gen_range(0..TERMINALS.len())]
                    }
                })
                .collect();
            has_recursive |= recursive;
            if rhs_list.iter().all(|(r, _)| *r != rhs) {
                rhs_list.push((rhs, recursive));
            }
        }

        let weights: Vec<f64> = rhs_list
            .iter()
            .map(|_| rng.gen_range(1..=9) as f64)
            .collect();
        let total: f64 = weights.iter().sum();
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        if let Some(r) = rhs_list.iter().position(|(_, rec)| *rec) {
            if probs[r] > 0.5 {
                let rest = 1.0 - probs[r];
                for (j, p) in probs.iter_mut().enumerate() {
                    *p = if j == r { 0.5 } else { *p / rest * 0.5 };
                }
            }
        }
        for ((rhs, _), p) in rhs_list.into_iter().zip(probs) {
            rules.push((p, lhs, rhs));
        }
    }

    Grammar::from_rules(Some("S"), &rules)
        .and_then(Grammar::validated)
        .expect("generated grammar is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_grammars_load() {
        assert_eq!(g1().rules().len(), 4);
        assert_eq!(g3().rules().len(), 4);
        assert_eq!(ginf().rules().len(), 2);
    }

    #[test]
    fn random_grammars_respect_size() {
        for seed in 0..200 {
            let g = random_grammar(seed, 8);
            assert!(g.rules().len() <= 8, "seed {seed}");
            assert_eq!(g, random_grammar(seed, 8));
        }
    }
}
