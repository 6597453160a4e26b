//! Probabilistic context-free grammars.
//!
//! A [`Grammar`] is immutable once built. Symbols are interned in code-point
//! order of their names, so comparing two symbol sequences by [`SymbolId`]
//! is the same as comparing them by name. Terminals keep that order in the
//! [`Vocabulary`], which fixes the layout of every distribution downstream.

mod parse;
mod release;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use parse::parse_grammar;
pub use release::parse_release_grammar;

/// Spelling of the mask sentinel in every text format.
pub const MASK_TOKEN: &str = "[MASK]";
/// Padding entry reserved in the vocabulary file.
pub const PAD_TOKEN: &str = "[PAD]";

/// Tolerance on the per-nonterminal probability sum.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolId(pub(crate) u32);

impl SymbolId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Index of a terminal in the [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Nonterminal,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub lhs: SymbolId,
    pub rhs: Vec<SymbolId>,
    pub probability: f64,
}

/// Grammar terminals in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from arbitrary tokens; they are sorted and deduplicated.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = tokens.into_iter().map(Into::into).collect();
        let tokens: Vec<String> = set.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), TokenId(i as u32)))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> {
        (0..self.tokens.len() as u32).map(TokenId)
    }

    /// Renders a token sequence space-separated.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(*t));
        }
        out
    }

    /// Vocabulary file content: reserved entries followed by the terminals.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("{PAD_TOKEN}\n{MASK_TOKEN}\n");
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// Reads a vocabulary file; the reserved entries are skipped.
    pub fn from_file_str(text: &str) -> Self {
        Vocabulary::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && *l != PAD_TOKEN && *l != MASK_TOKEN),
        )
    }
}

/// A failed grammar invariant. Violations are reported, not raised.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ProbabilitySum { nonterminal: String, sum: f64 },
    Unproductive { nonterminal: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProbabilitySum { nonterminal, sum } => {
                write!(f, "{nonterminal}: rule probabilities sum to {sum}")
            }
            Violation::Unproductive { nonterminal } => {
                write!(
                    f,
                    "{nonterminal}: unproductive (derives no terminal string)"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("syntax error: no rules")]
    NoRules,
    #[error("unknown start symbol `{0}`")]
    UnknownStart(String),
    #[error("line {line}: duplicate rule `{rule}`")]
    DuplicateRule { line: usize, rule: String },
    #[error("grammar is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Rule as read from text, before symbols are interned.
#[derive(Debug, Clone)]
pub(crate) struct RawRule {
    pub line: usize,
    pub column: usize,
    pub probability: f64,
    pub lhs: String,
    pub rhs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    symbols: Vec<Symbol>,
    rules: Vec<Rule>,
    start: SymbolId,
    by_lhs: Vec<Vec<usize>>,
    token_of: Vec<Option<TokenId>>,
    terminals: Vec<SymbolId>,
    vocabulary: Arc<Vocabulary>,
}

impl Grammar {
    /// Builds a grammar from `(probability, lhs, rhs)` triples. Symbols that
    /// appear as a left-hand side are nonterminals; all others are terminals.
    pub fn from_rules<S: AsRef<str>>(
        start: Option<&str>,
        rules: &[(f64, &str, Vec<S>)],
    ) -> Result<Self, GrammarError> {
        let raw = rules
            .iter()
            .enumerate()
            .map(|(i, (p, lhs, rhs))| RawRule {
                line: i + 1,
                column: 1,
                probability: *p,
                lhs: lhs.to_string(),
                rhs: rhs.iter().map(|s| s.as_ref().to_string()).collect(),
            })
            .collect();
        Self::from_raw(start.map(str::to_string), raw)
    }

    pub(crate) fn from_raw(start: Option<String>, raw: Vec<RawRule>) -> Result<Self, GrammarError> {
        if raw.is_empty() {
            return Err(GrammarError::NoRules);
        }
        for r in &raw {
            if !(r.probability > 0.0 && r.probability <= 1.0) {
                return Err(GrammarError::Syntax {
                    line: r.line,
                    column: r.column,
                    message: format!("probability {} outside (0, 1]", r.probability),
                });
            }
            if r.rhs.is_empty() {
                return Err(GrammarError::Syntax {
                    line: r.line,
                    column: r.column,
                    message: "empty right-hand side (epsilon rules are not supported)".into(),
                });
            }
            for name in std::iter::once(&r.lhs).chain(&r.rhs) {
                if name.is_empty() || name.chars().any(char::is_whitespace) {
                    return Err(GrammarError::Syntax {
                        line: r.line,
                        column: r.column,
                        message: format!("invalid symbol name `{name}`"),
                    });
                }
                if name == MASK_TOKEN || name == PAD_TOKEN {
                    return Err(GrammarError::Syntax {
                        line: r.line,
                        column: r.column,
                        message: format!("`{name}` is a reserved token"),
                    });
                }
            }
        }

        let start_name = start.unwrap_or_else(|| raw[0].lhs.clone());
        let lhs_names: HashSet<&str> = raw.iter().map(|r| r.lhs.as_str()).collect();
        if !lhs_names.contains(start_name.as_str()) {
            return Err(GrammarError::UnknownStart(start_name));
        }

        let names: BTreeSet<&str> = raw
            .iter()
            .flat_map(|r| std::iter::once(r.lhs.as_str()).chain(r.rhs.iter().map(String::as_str)))
            .collect();
        let symbols: Vec<Symbol> = names
            .iter()
            .map(|n| Symbol {
                name: n.to_string(),
                kind: if lhs_names.contains(n) {
                    SymbolKind::Nonterminal
                } else {
                    SymbolKind::Terminal
                },
            })
            .collect();
        let id_of: HashMap<&str, SymbolId> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (*n, SymbolId(i as u32)))
            .collect();

        let mut seen = HashSet::new();
        let mut rules = Vec::with_capacity(raw.len());
        for r in &raw {
            let lhs = id_of[r.lhs.as_str()];
            let rhs: Vec<SymbolId> = r.rhs.iter().map(|s| id_of[s.as_str()]).collect();
            if !seen.insert((lhs, rhs.clone())) {
                return Err(GrammarError::DuplicateRule {
                    line: r.line,
                    rule: format!("{} -> {}", r.lhs, r.rhs.join(" ")),
                });
            }
            rules.push(Rule {
                lhs,
                rhs,
                probability: r.probability,
            });
        }

        Ok(Self::assemble(symbols, rules, id_of[start_name.as_str()]))
    }

    fn assemble(symbols: Vec<Symbol>, rules: Vec<Rule>, start: SymbolId) -> Self {
        let mut by_lhs = vec![Vec::new(); symbols.len()];
        for (i, r) in rules.iter().enumerate() {
            by_lhs[r.lhs.index()].push(i);
        }
        let mut token_of = vec![None; symbols.len()];
        let mut terminals = Vec::new();
        for (i, s) in symbols.iter().enumerate() {
            if s.kind == SymbolKind::Terminal {
                token_of[i] = Some(TokenId(terminals.len() as u32));
                terminals.push(SymbolId(i as u32));
            }
        }
        let vocabulary = Arc::new(Vocabulary::new(
            terminals.iter().map(|t| symbols[t.index()].name.clone()),
        ));
        Grammar {
            symbols,
            rules,
            start,
            by_lhs,
            token_of,
            terminals,
            vocabulary,
        }
    }

    /// Parses either text format, validates, and renormalizes.
    pub fn load(text: &str) -> Result<Self, GrammarError> {
        let grammar = match GrammarFormat::detect(text) {
            GrammarFormat::Native => parse_grammar(text)?,
            GrammarFormat::Release => parse_release_grammar(text)?,
        };
        grammar.validated()
    }

    /// Checks every invariant and renormalizes rule probabilities to an exact sum of one.
    pub fn validated(self) -> Result<Self, GrammarError> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self.normalized())
        } else {
            Err(GrammarError::Invalid(violations))
        }
    }

    /// Divides each rule probability by its nonterminal's total.
    pub fn normalized(mut self) -> Self {
        for nt in 0..self.symbols.len() {
            let total = sorted_sum(self.by_lhs[nt].iter().map(|&r| self.rules[r].probability));
            if total > 0.0 {
                for &r in &self.by_lhs[nt] {
                    self.rules[r].probability /= total;
                }
            }
        }
        self
    }

    pub fn start(&self) -> SymbolId {
        self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn symbol(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id.index()]
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.symbols[id.index()].name
    }

    pub fn is_terminal(&self, id: SymbolId) -> bool {
        self.symbols[id.index()].kind == SymbolKind::Terminal
    }

    /// Indices into [`Grammar::rules`] for the given left-hand side.
    pub fn rules_for(&self, lhs: SymbolId) -> &[usize] {
        &self.by_lhs[lhs.index()]
    }

    pub fn token_of(&self, id: SymbolId) -> Option<TokenId> {
        self.token_of[id.index()]
    }

    pub fn terminal_symbol(&self, token: TokenId) -> SymbolId {
        self.terminals[token.index()]
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SymbolKind::Nonterminal)
            .map(|(i, _)| SymbolId(i as u32))
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocabulary
    }

    /// Native text form; parsing it back yields an equal grammar.
    pub fn to_native_string(&self) -> String {
        let mut out = format!("start: {}\n", self.name(self.start));
        for r in &self.rules {
            out.push_str(&format!("{} {} ->", r.probability, self.name(r.lhs)));
            for s in &r.rhs {
                out.push(' ');
                out.push_str(self.name(*s));
            }
            out.push('\n');
        }
        out
    }
}

/// Grammar text formats accepted by [`Grammar::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrammarFormat {
    /// `<probability> <LHS> -> <sym> ...`
    Native,
    /// Whitespace-separated `<weight> <LHS> <sym> ...` with unnormalized weights.
    Release,
}

impl GrammarFormat {
    /// A file is native if any rule line contains an `->` token.
    pub fn detect(text: &str) -> Self {
        let native = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .any(|l| l.split_whitespace().any(|t| t == "->"));
        if native {
            GrammarFormat::Native
        } else {
            GrammarFormat::Release
        }
    }
}

/// Returns every violated grammar invariant; empty means valid.
pub fn validate(grammar: &Grammar) -> Vec<Violation> {
    let mut out = Vec::new();
    for nt in grammar.nonterminals() {
        let sum = sorted_sum(
            grammar
                .rules_for(nt)
                .iter()
                .map(|&r| grammar.rules[r].probability),
        );
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            out.push(Violation::ProbabilitySum {
                nonterminal: grammar.name(nt).to_string(),
                sum,
            });
        }
    }

    let mut productive: Vec<bool> = grammar
        .symbols
        .iter()
        .map(|s| s.kind == SymbolKind::Terminal)
        .collect();
    loop {
        let mut changed = false;
        for r in &grammar.rules {
            if !productive[r.lhs.index()] && r.rhs.iter().all(|s| productive[s.index()]) {
                productive[r.lhs.index()] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for nt in grammar.nonterminals() {
        if !productive[nt.index()] {
            out.push(Violation::Unproductive {
                nonterminal: grammar.name(nt).to_string(),
            });
        }
    }
    out
}

/// Terminals in canonical order.
pub fn vocabulary(grammar: &Grammar) -> &Vocabulary {
    &grammar.vocabulary
}

/// Sums in ascending order so the result does not depend on input order.
pub(crate) fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    #[test]
    fn g1_structure() {
        let g = parse_grammar(toy::G1).unwrap();
        assert_eq!(g.rules().len(), 4);
        assert_eq!(g.vocabulary().tokens(), ["a", "b", "c"]);
        assert_eq!(g.name(g.start()), "S");
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn g3_vocabulary() {
        let g = toy::g3();
        assert_eq!(g.vocabulary().tokens(), ["a", "b", "c", "d"]);
    }

    #[test]
    fn missing_rule_reports_sum() {
        let text = "1.0 S -> A B\n0.5 A -> c\n1.0 B -> b\n";
        let v = validate(&parse_grammar(text).unwrap());
        assert_eq!(
            v,
            vec![Violation::ProbabilitySum {
                nonterminal: "A".into(),
                sum: 0.5
            }]
        );
    }

    #[test]
    fn self_loop_is_unproductive() {
        let v = validate(&parse_grammar("1.0 S -> S").unwrap());
        assert_eq!(
            v,
            vec![Violation::Unproductive {
                nonterminal: "S".into()
            }]
        );
        assert!(matches!(
            Grammar::load("1.0 S -> S"),
            Err(GrammarError::Invalid(_))
        ));
    }

    #[test]
    fn renormalization_is_exact() {
        let g = parse_grammar("0.3333333333 S -> a\n0.6666666667 S -> b\n")
            .unwrap()
            .validated()
            .unwrap();
        let total: f64 = g.rules().iter().map(|r| r.probability).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vocabulary_ignores_rule_order() {
        let a = parse_grammar("1.0 S -> z y\n").unwrap();
        let b = Grammar::from_rules(Some("S"), &[(1.0, "S", vec!["z", "y"])]).unwrap();
        assert_eq!(a.vocabulary().tokens(), ["y", "z"]);
        assert_eq!(a, b);
    }

    #[test]
    fn vocabulary_file_layout() {
        let g = toy::g1();
        assert_eq!(g.vocabulary().to_file_string(), "[PAD]\n[MASK]\na\nb\nc\n");
        let back = Vocabulary::from_file_str(&g.vocabulary().to_file_string());
        assert_eq!(&back, g.vocabulary().as_ref());
    }

    #[test]
    fn format_detection() {
        assert_eq!(GrammarFormat::detect(toy::G3), GrammarFormat::Native);
        assert_eq!(GrammarFormat::detect("1\tS\ta b\n"), GrammarFormat::Release);
    }
}
