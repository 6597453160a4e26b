//! Corpus sampling, vocabulary files, and a goodness-of-fit check of the
//! sampler against exact sentence probabilities.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::enumerate::SentenceTable;
use crate::grammar::{Grammar, SymbolId, TokenId, Vocabulary};

/// Draws needed before the rejection rate is judged.
const REJECTION_WINDOW: usize = 1000;
const MAX_REJECTION_RATE: f64 = 0.99;
pub const MIN_CHI2_OBSERVATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("{rejected} of {attempts} draws exceeded the length cap")]
    RejectionRate { rejected: usize, attempts: usize },
    #[error("need at least {MIN_CHI2_OBSERVATIONS} observations, got {0}")]
    InsufficientSample(usize),
    #[error("line {line}: unknown token `{token}`")]
    UnknownToken { line: usize, token: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSpec {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
    pub max_length: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            train: 100_000,
            validation: 10_000,
            test: 10_000,
            seed: 0,
            max_length: crate::enumerate::DEFAULT_MAX_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub vocabulary_size: usize,
    pub observed_vocabulary_size: usize,
    pub mean_sentence_length: f64,
    pub rejected_draws: usize,
    pub seed: u64,
}

impl CorpusStats {
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "train_size: {}", self.train_size);
        let _ = writeln!(out, "validation_size: {}", self.validation_size);
        let _ = writeln!(out, "test_size: {}", self.test_size);
        let _ = writeln!(out, "vocabulary_size: {}", self.vocabulary_size);
        let _ = writeln!(
            out,
            "observed_vocabulary_size: {}",
            self.observed_vocabulary_size
        );
        let _ = writeln!(
            out,
            "mean_sentence_length: {:.4}",
            self.mean_sentence_length
        );
        let _ = writeln!(out, "rejected_draws: {}", self.rejected_draws);
        let _ = writeln!(out, "seed: {}", self.seed);
        out
    }
}

pub type Sentence = Vec<TokenId>;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Sentence>,
    pub validation: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub stats: CorpusStats,
}

/// Ancestral sampler expanding the leftmost nonterminal first.
pub struct Sampler<'g> {
    grammar: &'g Grammar,
    choices: Vec<Option<WeightedIndex<f64>>>,
}

impl<'g> Sampler<'g> {
    pub fn new(grammar: &'g Grammar) -> Self {
        let choices = grammar
            .symbols()
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let rules = grammar.rules_for(SymbolId(i as u32));
                if rules.is_empty() {
                    None
                } else {
                    let w = rules.iter().map(|&r| grammar.rules()[r].probability);
                    Some(WeightedIndex::new(w).expect("positive rule probabilities"))
                }
            })
            .collect();
        Sampler { grammar, choices }
    }

    /// One draw; `None` if the sentence would exceed `max_length` tokens.
    pub fn sample<R: Rng>(&self, rng: &mut R, max_length: usize) -> Option<Sentence> {
        let mut out = Vec::new();
        let mut stack = vec![self.grammar.start()];
        while let Some(sym) = stack.pop() {
            match self.grammar.token_of(sym) {
                Some(t) => out.push(t),
                None => {
                    let pick = self.choices[sym.index()].as_ref().unwrap().sample(rng);
                    let rule = &self.grammar.rules()[self.grammar.rules_for(sym)[pick]];
                    stack.extend(rule.rhs.iter().rev());
                }
            }
            if out.len() + stack.len() > max_length {
                return None;
            }
        }
        Some(out)
    }
}

/// Samples the three splits in order from one seeded generator.
pub fn sample_corpus(grammar: &Grammar, spec: &CorpusSpec) -> Result<Corpus, DatagenError> {
    let sampler = Sampler::new(grammar);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut attempts = 0usize;
    let mut rejected = 0usize;
    let too_many =
        |rejected: usize, attempts: usize| rejected as f64 > MAX_REJECTION_RATE * attempts as f64;
    let mut draw = |n: usize| -> Result<Vec<Sentence>, DatagenError> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            attempts += 1;
            match sampler.sample(&mut rng, spec.max_length) {
                Some(s) => out.push(s),
                None => {
                    rejected += 1;
                    if attempts >= REJECTION_WINDOW && too_many(rejected, attempts) {
                        return Err(DatagenError::RejectionRate { rejected, attempts });
                    }
                }
            }
        }
        Ok(out)
    };
    let train = draw(spec.train)?;
    let validation = draw(spec.validation)?;
    let test = draw(spec.test)?;
    if attempts > 0 && too_many(rejected, attempts) {
        return Err(DatagenError::RejectionRate { rejected, attempts });
    }

    let all = || train.iter().chain(&validation).chain(&test);
    let count = all().count();
    let tokens: usize = all().map(Vec::len).sum();
    let observed: BTreeSet<TokenId> = all().flatten().copied().collect();
    let stats = CorpusStats {
        train_size: train.len(),
        validation_size: validation.len(),
        test_size: test.len(),
        vocabulary_size: grammar.vocabulary().len(),
        observed_vocabulary_size: observed.len(),
        mean_sentence_length: if count == 0 {
            0.0
        } else {
            tokens as f64 / count as f64
        },
        rejected_draws: rejected,
        seed: spec.seed,
    };
    Ok(Corpus {
        train,
        validation,
        test,
        stats,
    })
}

/// Vocabulary file: `[PAD]`, `[MASK]`, then the terminals in canonical order.
pub fn emit_vocab(grammar: &Grammar) -> String {
    grammar.vocabulary().to_file_string()
}

pub fn corpus_to_string(sentences: &[Sentence], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&vocab.render(s));
        out.push('\n');
    }
    out
}

pub fn read_corpus(text: &str, vocab: &Vocabulary) -> Result<Vec<Sentence>, DatagenError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split_whitespace()
                .map(|t| {
                    vocab.id(t).ok_or_else(|| DatagenError::UnknownToken {
                        line: n + 1,
                        token: t.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Report {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub observations: usize,
}

/// Pearson's statistic of corpus frequencies against exact probabilities.
///
/// Each table sentence is one bin; sentences outside the table share a
/// residual bin with the uncovered mass, dropped when that mass is zero.
pub fn chi2_fitness(
    corpus: &[Sentence],
    table: &SentenceTable,
) -> Result<Chi2Report, DatagenError> {
    let n = corpus.len();
    if n < MIN_CHI2_OBSERVATIONS {
        return Err(DatagenError::InsufficientSample(n));
    }
    let mut counts: HashMap<&[TokenId], usize> = HashMap::new();
    for s in corpus {
        *counts.entry(s.as_slice()).or_insert(0) += 1;
    }
    let nf = n as f64;
    let mut statistic = 0.0;
    let mut bins = 0usize;
    let mut inside = 0usize;
    for s in table.sentences() {
        let observed = counts.get(s.tokens.as_slice()).copied().unwrap_or(0);
        inside += observed;
        let expected = nf * s.probability;
        statistic += (observed as f64 - expected).powi(2) / expected;
        bins += 1;
    }
    let residual_observed = (n - inside) as f64;
    let residual_expected = nf * (1.0 - table.covered_mass()).max(0.0);
    if residual_expected > 1e-9 {
        statistic += (residual_observed - residual_expected).powi(2) / residual_expected;
        bins += 1;
    } else if residual_observed > 0.0 {
        statistic = f64::INFINITY;
    }
    let degrees_of_freedom = bins.saturating_sub(1).max(1);
    let p_value = if statistic.is_finite() {
        let dist = ChiSquared::new(degrees_of_freedom as f64).expect("positive dof");
        1.0 - dist.cdf(statistic)
    } else {
        0.0
    };
    Ok(Chi2Report {
        statistic,
        degrees_of_freedom,
        p_value,
        observations: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{enumerate_to_coverage, sentence_probability};
    use crate::toy;
    use statrs::distribution::ContinuousCDF;

    fn spec(train: usize, seed: u64) -> CorpusSpec {
        CorpusSpec {
            train,
            validation: 0,
            test: 0,
            seed,
            max_length: 64,
        }
    }

    #[test]
    fn g1_sentences() {
        let g = toy::g1();
        let c = sample_corpus(&g, &spec(4, 7)).unwrap();
        assert_eq!(c.train.len(), 4);
        let text = corpus_to_string(&c.train, g.vocabulary());
        assert!(text.lines().all(|l| l == "a b" || l == "c b"));
        assert_eq!(c.stats.mean_sentence_length, 2.0);

        let big = sample_corpus(&g, &spec(20_000, 1)).unwrap();
        let ab = big.train.iter().filter(|s| s[0] == TokenId(0)).count() as f64 / 20_000.0;
        assert!((ab - 0.5).abs() < 0.02, "{ab}");
    }

    #[test]
    fn determinism_and_validity() {
        let g = toy::ginf();
        let s = CorpusSpec {
            train: 50,
            validation: 10,
            test: 10,
            seed: 99,
            max_length: 64,
        };
        let a = sample_corpus(&g, &s).unwrap();
        let b = sample_corpus(&g, &s).unwrap();
        assert_eq!(a, b);
        for sent in a.train.iter().chain(&a.validation).chain(&a.test) {
            assert!(sentence_probability(&g, sent) > 0.0);
        }
        assert_eq!(a.stats.validation_size, 10);
    }

    #[test]
    fn length_cap_rejection() {
        let g = toy::ginf();
        let c = sample_corpus(
            &g,
            &CorpusSpec {
                max_length: 3,
                ..spec(200, 3)
            },
        )
        .unwrap();
        assert!(c.train.iter().all(|s| s.len() <= 3));
        assert!(c.stats.rejected_draws > 0);

        // P(length <= 1) = 0.5 for G-infinity, but this grammar needs >= 10 tokens.
        let g = Grammar::load("1.0 S -> A A A A A A A A A A\n0.5 A -> a A\n0.5 A -> a\n").unwrap();
        assert!(matches!(
            sample_corpus(
                &g,
                &CorpusSpec {
                    max_length: 9,
                    ..spec(10, 0)
                }
            ),
            Err(DatagenError::RejectionRate { .. })
        ));
    }

    #[test]
    fn vocab_files() {
        assert_eq!(emit_vocab(&toy::g1()), "[PAD]\n[MASK]\na\nb\nc\n");
        assert_eq!(emit_vocab(&toy::g3()).lines().count(), 6);
    }

    #[test]
    fn corpus_round_trip() {
        let g = toy::g3();
        let c = sample_corpus(&g, &spec(20, 5)).unwrap();
        let text = corpus_to_string(&c.train, g.vocabulary());
        assert_eq!(read_corpus(&text, g.vocabulary()).unwrap(), c.train);
        assert!(read_corpus("a q\n", g.vocabulary()).is_err());
    }

    #[test]
    fn chi2_calibration() {
        let g = toy::g1();
        let table = enumerate_to_coverage(&g, 0.75, 64).unwrap();
        let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.999);
        let seeds = 200;
        let passing = (0..seeds)
            .filter(|&seed| {
                let c = sample_corpus(&g, &spec(10_000, seed)).unwrap();
                let r = chi2_fitness(&c.train, &table).unwrap();
                assert_eq!(r.degrees_of_freedom, 1);
                r.statistic < critical
            })
            .count();
        assert!(passing as f64 >= 0.99 * seeds as f64, "{passing}/{seeds}");
    }

    #[test]
    fn chi2_degenerate_corpus_diverges() {
        let g = toy::g1();
        let table = enumerate_to_coverage(&g, 0.75, 64).unwrap();
        let ab = vec![TokenId(0), TokenId(1)];
        let small = chi2_fitness(&vec![ab.clone(); 100], &table)
            .unwrap()
            .statistic;
        let large = chi2_fitness(&vec![ab; 10_000], &table).unwrap().statistic;
        assert!(large > 50.0 * small);
        assert_eq!(
            chi2_fitness(&[], &table),
            Err(DatagenError::InsufficientSample(0))
        );
    }

    #[test]
    fn chi2_with_residual_bin() {
        let g = toy::ginf();
        let table = enumerate_to_coverage(&g, 0.75, 64).unwrap();
        let c = sample_corpus(&g, &spec(5000, 11)).unwrap();
        let r = chi2_fitness(&c.train, &table).unwrap();
        assert_eq!(r.degrees_of_freedom, 3);
        assert!(r.p_value > 1e-4);
    }
}
