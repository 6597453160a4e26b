//! Exact reference distributions for the masked-token prediction task over
//! a probabilistic context-free grammar, with and without word order.
//!
//! The pipeline is: parse and validate a [`Grammar`], enumerate its most
//! probable sentences until a coverage threshold is passed, build the
//! ordered and order-erased completion tables for a mask count, and score
//! entropies, divergences and model predictions against them.

pub mod analysis;
pub mod datagen;
pub mod enumerate;
pub mod grammar;
pub mod oracle;
pub mod toy;

pub use analysis::{
    conditional_entropy, model_divergence, perplexity, sweep, task_divergence, AnalysisError,
    Divergence, MetricsReport, ModelMetrics, Reference, SweepConfig, Weighting, DEFAULT_FLOOR,
};
pub use datagen::{chi2_fitness, emit_vocab, sample_corpus, CorpusSpec, DatagenError};
pub use enumerate::{
    enumerate_to_coverage, kbest, sentence_probability, EnumerateError, SentenceTable,
    WeightedSentence, DEFAULT_MAX_LENGTH,
};
pub use grammar::{
    parse_grammar, validate, Grammar, GrammarError, Rule, Symbol, SymbolId, TokenId, Violation,
    Vocabulary,
};
pub use oracle::{
    build_ordered, class_predictions, erase_order, lookup_reference, ClassKey, ConditionalTable,
    Distribution, InstanceKey, OracleError, OrderedTable, UnorderedTable, Which,
};
