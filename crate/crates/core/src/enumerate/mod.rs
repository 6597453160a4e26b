//! Best-first enumeration of a grammar's sentences with exact probabilities.
//!
//! Leftmost derivations are expanded from a max-probability frontier. Ties
//! are broken by the lexicographically smaller sentential form, which makes
//! the pop order a function of the grammar alone. Once the stopping condition
//! holds, the remaining frontier is drained of every partial derivation that
//! can still yield an already discovered sentence, so ambiguous sentences
//! carry the sum over all of their derivations.

mod inside;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::{Grammar, SymbolId, TokenId, Vocabulary};

pub use inside::sentence_probability;

pub const DEFAULT_MAX_LENGTH: usize = 64;

/// Partial derivations below this probability are dropped while draining
/// the frontier; only unit-rule cycles can produce them indefinitely.
const DRAIN_CUTOFF: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnumerateError {
    #[error(
        "coverage unreachable: achieved mass {achieved} does not exceed threshold {threshold}"
    )]
    CoverageUnreachable { achieved: f64, threshold: f64 },
    #[error("threshold {0} must lie in (0, 1)")]
    BadThreshold(f64),
    #[error("max_length must be positive")]
    BadMaxLength,
}

/// A sentential form reached by a sequence of leftmost rule applications.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDerivation {
    pub form: Vec<SymbolId>,
    pub probability: f64,
    /// Position of the leftmost nonterminal; `None` once the form is all terminals.
    pub leftmost: Option<usize>,
}

impl Eq for PartialDerivation {}

impl Ord for PartialDerivation {
    fn cmp(&self, other: &Self) -> Ordering {
        self.probability
            .total_cmp(&other.probability)
            .then_with(|| other.form.cmp(&self.form))
    }
}

impl PartialOrd for PartialDerivation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSentence {
    pub tokens: Vec<TokenId>,
    pub probability: f64,
}

/// Enumerated sentences, sorted by descending probability then tokens.
#[derive(Debug, Clone)]
pub struct SentenceTable {
    sentences: Vec<WeightedSentence>,
    index: HashMap<Vec<TokenId>, usize>,
    covered_mass: f64,
    threshold: f64,
    vocabulary: Arc<Vocabulary>,
}

impl SentenceTable {
    pub fn new(
        mut sentences: Vec<WeightedSentence>,
        threshold: f64,
        vocabulary: Arc<Vocabulary>,
    ) -> Self {
        sentences.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        let covered_mass = sentences.iter().map(|s| s.probability).sum();
        let index = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.tokens.clone(), i))
            .collect();
        SentenceTable {
            sentences,
            index,
            covered_mass,
            threshold,
            vocabulary,
        }
    }

    pub fn sentences(&self) -> &[WeightedSentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn covered_mass(&self) -> f64 {
        self.covered_mass
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocabulary
    }

    pub fn probability(&self, tokens: &[TokenId]) -> Option<f64> {
        self.index
            .get(tokens)
            .map(|&i| self.sentences[i].probability)
    }

    pub fn max_length(&self) -> usize {
        self.sentences
            .iter()
            .map(|s| s.tokens.len())
            .max()
            .unwrap_or(0)
    }

    /// Number of sentences per token count.
    pub fn length_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for s in &self.sentences {
            *h.entry(s.tokens.len()).or_insert(0) += 1;
        }
        h
    }

    /// One `tokens<TAB>probability` line per sentence, in table order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&self.vocabulary.render(&s.tokens));
            out.push('\t');
            out.push_str(&format!("{:.16e}\n", s.probability));
        }
        out
    }

    /// Reads the format written by [`SentenceTable::to_tsv`].
    pub fn from_tsv(text: &str, vocabulary: Arc<Vocabulary>) -> Result<Self, String> {
        let mut sentences = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (toks, prob) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: missing tab", n + 1))?;
            let probability: f64 = prob
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad probability `{prob}`", n + 1))?;
            let tokens = toks
                .split_whitespace()
                .map(|t| {
                    vocabulary
                        .id(t)
                        .ok_or_else(|| format!("line {}: unknown token `{t}`", n + 1))
                })
                .collect::<Result<Vec<_>, _>>()?;
            sentences.push(WeightedSentence {
                tokens,
                probability,
            });
        }
        Ok(SentenceTable::new(sentences, f64::NAN, vocabulary))
    }
}

/// The max-probability frontier of leftmost derivations.
struct Frontier<'g> {
    grammar: &'g Grammar,
    heap: BinaryHeap<PartialDerivation>,
    max_length: usize,
}

impl<'g> Frontier<'g> {
    fn new(grammar: &'g Grammar, max_length: usize) -> Self {
        let mut heap = BinaryHeap::new();
        heap.push(PartialDerivation {
            form: vec![grammar.start()],
            probability: 1.0,
            leftmost: Some(0),
        });
        Frontier {
            grammar,
            heap,
            max_length,
        }
    }

    fn expand(&mut self, d: &PartialDerivation, keep: impl Fn(&PartialDerivation) -> bool) {
        let at = d.leftmost.expect("expanding a complete derivation");
        let nt = d.form[at];
        for &ri in self.grammar.rules_for(nt) {
            let rule = &self.grammar.rules()[ri];
            let len = d.form.len() - 1 + rule.rhs.len();
            // Every symbol yields at least one token, so this bounds the final length.
            if len > self.max_length {
                continue;
            }
            let mut form = Vec::with_capacity(len);
            form.extend_from_slice(&d.form[..at]);
            form.extend_from_slice(&rule.rhs);
            form.extend_from_slice(&d.form[at + 1..]);
            let leftmost = form[at..]
                .iter()
                .position(|s| !self.grammar.is_terminal(*s))
                .map(|p| p + at);
            let next = PartialDerivation {
                form,
                probability: d.probability * rule.probability,
                leftmost,
            };
            if keep(&next) {
                self.heap.push(next);
            }
        }
    }

    /// Pops until the next complete derivation.
    fn next_complete(&mut self) -> Option<(Vec<SymbolId>, f64)> {
        while let Some(d) = self.heap.pop() {
            if d.leftmost.is_none() {
                return Some((d.form, d.probability));
            }
            self.expand(&d, |_| true);
        }
        None
    }

    /// Adds to `found` the mass of every remaining derivation that yields one of its keys.
    fn drain_into(mut self, found: &mut HashMap<Vec<SymbolId>, f64>) {
        // Longest discovered sentence for every discovered prefix.
        let mut prefixes: HashMap<&[SymbolId], usize> = HashMap::new();
        for s in found.keys() {
            for cut in 0..=s.len() {
                let e = prefixes.entry(&s[..cut]).or_insert(0);
                *e = (*e).max(s.len());
            }
        }
        let compatible = |d: &PartialDerivation| {
            let fixed = d.leftmost.unwrap_or(d.form.len());
            d.probability >= DRAIN_CUTOFF
                && prefixes
                    .get(&d.form[..fixed])
                    .is_some_and(|&max| d.form.len() <= max)
        };
        let mut pending: Vec<PartialDerivation> = std::mem::take(&mut self.heap)
            .into_iter()
            .filter(compatible)
            .collect();
        let mut extra: Vec<(Vec<SymbolId>, f64)> = Vec::new();
        while let Some(d) = pending.pop() {
            if d.leftmost.is_none() {
                extra.push((d.form, d.probability));
                continue;
            }
            self.expand(&d, compatible);
            pending.extend(self.heap.drain());
        }
        drop(prefixes);
        extra.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (form, p) in extra {
            if let Some(acc) = found.get_mut(&form) {
                *acc += p;
            }
        }
    }
}

fn to_tokens(grammar: &Grammar, form: &[SymbolId]) -> Vec<TokenId> {
    form.iter()
        .map(|s| {
            grammar
                .token_of(*s)
                .expect("complete form holds only terminals")
        })
        .collect()
}

fn into_sentences(grammar: &Grammar, found: HashMap<Vec<SymbolId>, f64>) -> Vec<WeightedSentence> {
    found
        .into_iter()
        .map(|(form, probability)| WeightedSentence {
            tokens: to_tokens(grammar, &form),
            probability,
        })
        .collect()
}

/// Enumerates sentences until their total probability strictly exceeds `threshold`.
pub fn enumerate_to_coverage(
    grammar: &Grammar,
    threshold: f64,
    max_length: usize,
) -> Result<SentenceTable, EnumerateError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(EnumerateError::BadThreshold(threshold));
    }
    if max_length == 0 {
        return Err(EnumerateError::BadMaxLength);
    }
    let mut frontier = Frontier::new(grammar, max_length);
    let mut found: HashMap<Vec<SymbolId>, f64> = HashMap::new();
    let mut mass = 0.0;
    while mass <= threshold {
        let Some((form, p)) = frontier.next_complete() else {
            return Err(EnumerateError::CoverageUnreachable {
                achieved: mass,
                threshold,
            });
        };
        *found.entry(form).or_insert(0.0) += p;
        mass += p;
    }
    frontier.drain_into(&mut found);
    Ok(SentenceTable::new(
        into_sentences(grammar, found),
        threshold,
        grammar.vocabulary().clone(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KBest {
    pub sentences: Vec<WeightedSentence>,
    /// Set when the language holds fewer than the requested number of sentences.
    pub exhausted: bool,
}

/// The `k` most probable sentences, in descending probability.
///
/// Sentences are discovered in frontier order; for ambiguous grammars a
/// sentence whose derivations are individually improbable can be missed.
pub fn kbest(grammar: &Grammar, k: usize, max_length: usize) -> KBest {
    assert!(k >= 1, "k must be positive");
    let mut frontier = Frontier::new(grammar, max_length);
    let mut found: HashMap<Vec<SymbolId>, f64> = HashMap::new();
    let mut exhausted = false;
    while found.len() < k {
        match frontier.next_complete() {
            Some((form, p)) => *found.entry(form).or_insert(0.0) += p,
            None => {
                exhausted = true;
                break;
            }
        }
    }
    frontier.drain_into(&mut found);
    let table = SentenceTable::new(
        into_sentences(grammar, found),
        f64::NAN,
        grammar.vocabulary().clone(),
    );
    KBest {
        sentences: table.sentences,
        exhausted,
    }
}
