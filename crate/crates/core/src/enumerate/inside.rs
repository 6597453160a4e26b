//! Inside probabilities over token spans, used as an oracle independent of
//! the frontier.

use crate::grammar::{Grammar, SymbolId, TokenId};

/// Total probability of all derivations of `tokens` from the start symbol.
///
/// Rules of any length are handled by a left-to-right pass over the right
/// hand side. Chains of unit rules `A -> B` are closed in one step by
/// solving `(I - U) x = b` per span.
pub fn sentence_probability(grammar: &Grammar, tokens: &[TokenId]) -> f64 {
    let n = tokens.len();
    if n == 0 {
        return 0.0;
    }
    let symbols: Vec<SymbolId> = tokens.iter().map(|t| grammar.terminal_symbol(*t)).collect();

    let nts: Vec<SymbolId> = grammar.nonterminals().collect();
    let mut dense = vec![usize::MAX; grammar.symbols().len()];
    for (i, nt) in nts.iter().enumerate() {
        dense[nt.index()] = i;
    }
    let m = nts.len();

    let mut unit = vec![0.0; m * m];
    let mut has_unit = false;
    for r in grammar.rules() {
        if r.rhs.len() == 1 && !grammar.is_terminal(r.rhs[0]) {
            unit[dense[r.lhs.index()] * m + dense[r.rhs[0].index()]] += r.probability;
            has_unit = true;
        }
    }
    let closure = has_unit.then(|| unit_closure(&unit, m));

    // chart[(i, j)] holds inside values for span tokens[i..j].
    let span = |i: usize, j: usize| i * (n + 1) + j;
    let mut chart = vec![Vec::new(); (n + 1) * (n + 1)];

    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let mut base = vec![0.0; m];
            for r in grammar.rules() {
                if r.rhs.len() == 1 && !grammar.is_terminal(r.rhs[0]) {
                    continue;
                }
                if r.rhs.len() > len {
                    continue;
                }
                // reach[p]: probability that the symbols consumed so far span tokens[i..p].
                let mut reach = vec![0.0; n + 1];
                reach[i] = 1.0;
                for (pos, &sym) in r.rhs.iter().enumerate() {
                    let remaining = r.rhs.len() - pos - 1;
                    let mut next = vec![0.0; n + 1];
                    for p in i..j {
                        if reach[p] == 0.0 {
                            continue;
                        }
                        if grammar.is_terminal(sym) {
                            if symbols[p] == sym && p + 1 + remaining <= j {
                                next[p + 1] += reach[p];
                            }
                        } else {
                            for q in p + 1..=j - remaining {
                                // Subspans of a rule with two or more symbols are strictly shorter.
                                if q - p == len {
                                    continue;
                                }
                                let v = chart[span(p, q)]
                                    .get(dense[sym.index()])
                                    .copied()
                                    .unwrap_or(0.0);
                                if v != 0.0 {
                                    next[q] += reach[p] * v;
                                }
                            }
                        }
                    }
                    reach = next;
                }
                if reach[j] != 0.0 {
                    base[dense[r.lhs.index()]] += r.probability * reach[j];
                }
            }
            let values = match &closure {
                Some(c) => (0..m)
                    .map(|a| (0..m).map(|b| c[a * m + b] * base[b]).sum())
                    .collect(),
                None => base,
            };
            chart[span(i, j)] = values;
        }
    }
    chart[span(0, n)][dense[grammar.start().index()]]
}

/// `(I - U)^-1` by Gauss-Jordan elimination with partial pivoting.
fn unit_closure(unit: &[f64], m: usize) -> Vec<f64> {
    let mut a: Vec<f64> = (0..m * m)
        .map(|idx| {
            let (r, c) = (idx / m, idx % m);
            f64::from(u8::from(r == c)) - unit[idx]
        })
        .collect();
    let mut inv: Vec<f64> = (0..m * m)
        .map(|idx| f64::from(u8::from(idx / m == idx % m)))
        .collect();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
            .unwrap();
        if pivot != col {
            for c in 0..m {
                a.swap(pivot * m + c, col * m + c);
                inv.swap(pivot * m + c, col * m + c);
            }
        }
        let d = a[col * m + col];
        for c in 0..m {
            a[col * m + c] /= d;
            inv[col * m + c] /= d;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..m {
                a[r * m + c] -= f * a[col * m + c];
                inv[r * m + c] -= f * inv[col * m + c];
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Grammar;
    use crate::toy;

    fn ids(g: &Grammar, s: &str) -> Vec<TokenId> {
        s.split_whitespace()
            .map(|t| g.vocabulary().id(t).unwrap())
            .collect()
    }

    #[test]
    fn examples() {
        let g1 = toy::g1();
        assert_eq!(sentence_probability(&g1, &ids(&g1, "a b")), 0.5);
        let g3 = toy::g3();
        assert_eq!(sentence_probability(&g3, &ids(&g3, "a b d")), 0.0);
        assert_eq!(sentence_probability(&g3, &ids(&g3, "b a d")), 0.5);
        let gi = toy::ginf();
        assert_eq!(sentence_probability(&gi, &ids(&gi, "a a a")), 0.125);
        assert_eq!(sentence_probability(&gi, &[]), 0.0);
    }

    #[test]
    fn unit_chains() {
        // S -> A (0.5) | a (0.5); A -> S (0.5) | b (0.5).
        // P(a) = 0.5 / (1 - 0.25) = 2/3, P(b) = 0.25 / 0.75 = 1/3.
        let g = Grammar::load("0.5 S -> A\n0.5 S -> a\n0.5 A -> S\n0.5 A -> b\n").unwrap();
        let pa = sentence_probability(&g, &ids(&g, "a"));
        let pb = sentence_probability(&g, &ids(&g, "b"));
        assert!((pa - 2.0 / 3.0).abs() < 1e-15);
        assert!((pb - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ambiguous_sum() {
        // Catalan-style ambiguity: S -> S S (0.3) | a (0.7); "a a a" has two trees.
        let g = Grammar::load("0.3 S -> S S\n0.7 S -> a\n").unwrap();
        let p = sentence_probability(&g, &ids(&g, "a a a"));
        let expected = 2.0 * 0.3 * 0.3 * 0.7f64.powi(3);
        assert!((p - expected).abs() < 1e-15);
    }
}
