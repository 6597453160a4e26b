//! Adapter for weighted grammar files in the `<weight> <LHS> <rhs...>` style
//! used by the published artificial-language releases.
//!
//! Weights are relative, so each left-hand side is normalized on read.
//! Zero-weight rules are dropped. The start symbol is `ROOT` when such a
//! left-hand side exists, otherwise the first rule's left-hand side, unless a
//! `start: <sym>` header is given.

use std::collections::HashMap;

use super::parse::{strip_comment, words};
use super::{sorted_sum, Grammar, GrammarError, RawRule};

pub fn parse_release_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let mut start = None;
    let mut raw: Vec<RawRule> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let w = words(strip_comment(line));
        if w.is_empty() {
            continue;
        }
        if w[0].1 == "start:" && w.len() == 2 {
            start = Some(w[1].1.to_string());
            continue;
        }
        let (col, wtext) = w[0];
        let weight: f64 = wtext.parse().map_err(|_| GrammarError::Syntax {
            line: line_no,
            column: col,
            message: format!("expected a weight, found `{wtext}`"),
        })?;
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(GrammarError::Syntax {
                line: line_no,
                column: col,
                message: format!("weight {weight} must be finite and non-negative"),
            });
        }
        if w.len() < 3 {
            return Err(GrammarError::Syntax {
                line: line_no,
                column: w.last().map_or(col, |(c, _)| *c),
                message: "expected `<weight> <LHS> <symbol> ...`".into(),
            });
        }
        if weight == 0.0 {
            continue;
        }
        raw.push(RawRule {
            line: line_no,
            column: col,
            probability: weight,
            lhs: w[1].1.to_string(),
            rhs: w[2..].iter().map(|(_, t)| t.to_string()).collect(),
        });
    }

    let mut totals: HashMap<String, Vec<f64>> = HashMap::new();
    for r in &raw {
        totals.entry(r.lhs.clone()).or_default().push(r.probability);
    }
    let totals: HashMap<String, f64> = totals
        .into_iter()
        .map(|(k, v)| (k, sorted_sum(v.into_iter())))
        .collect();
    for r in &mut raw {
        r.probability /= totals[&r.lhs];
    }
    if start.is_none() && raw.iter().any(|r| r.lhs == "ROOT") {
        start = Some("ROOT".to_string());
    }
    Grammar::from_raw(start, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::validate;

    #[test]
    fn weights_are_normalized_per_lhs() {
        let text =
            "# release style\n1\tROOT\tS .\n3\tS\tNP VP\n1\tS\tVP\n2\tNP\tdogs\n1\tVP\tbark\n";
        let g = parse_release_grammar(text).unwrap();
        assert_eq!(g.name(g.start()), "ROOT");
        assert!(validate(&g).is_empty());
        let s_probs: Vec<f64> = g
            .rules()
            .iter()
            .filter(|r| g.name(r.lhs) == "S")
            .map(|r| r.probability)
            .collect();
        assert_eq!(s_probs, vec![0.75, 0.25]);
        assert_eq!(g.vocabulary().tokens(), [".", "bark", "dogs"]);
    }

    #[test]
    fn zero_weights_are_dropped() {
        let g = parse_release_grammar("1 S a\n0 S b\n").unwrap();
        assert_eq!(g.rules().len(), 1);
        assert_eq!(g.vocabulary().tokens(), ["a"]);
    }

    #[test]
    fn release_files_load_through_detection() {
        let g = Grammar::load("2 S a S\n2 S a\n").unwrap();
        assert_eq!(g.rules()[0].probability, 0.5);
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_release_grammar("1 S\n"),
            Err(GrammarError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_release_grammar("w S a\n"),
            Err(GrammarError::Syntax {
                line: 1,
                column: 1,
                ..
            })
        ));
    }
}
