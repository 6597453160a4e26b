//! Entropies, cross-entropies, KL divergences and perplexities, in bits.
//!
//! Every sum over instances runs in table key order, so results are
//! bit-reproducible for a given table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::enumerate::{enumerate_to_coverage, EnumerateError, SentenceTable};
use crate::grammar::{Grammar, Vocabulary};
use crate::oracle::{
    build_ordered, erase_order, gold_occurrences, ConditionalTable, Distribution, GoldOccurrence,
    OracleError, OrderedTable, UnorderedTable,
};

/// Model probabilities are clamped to this value before taking logs.
pub const DEFAULT_FLOOR: f64 = 1e-12;
/// Allowed deviation of a model distribution's total from one.
pub const MODEL_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("mask counts differ: {0} vs {1}")]
    MismatchedK(usize, usize),
    #[error("tables were built over different vocabularies")]
    VocabularyMismatch,
    #[error("{} instance(s) missing from the model table: {}", .0.len(), .0.iter().take(10).cloned().collect::<Vec<_>>().join(", "))]
    MissingInstances(Vec<String>),
    #[error("model distribution for instance {id} is invalid (total {total})")]
    InvalidModelDistribution { id: String, total: f64 },
    #[error("gold token index {0} is outside the vocabulary")]
    UnknownGoldToken(u32),
    #[error("no gold occurrences to score")]
    NoOccurrences,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// How instances are combined in the ordered-vs-unordered divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Each instance contributes in proportion to its weight.
    #[default]
    Weighted,
    /// Plain sum over instances.
    Unweighted,
}

fn same_vocab(a: &Arc<Vocabulary>, b: &Arc<Vocabulary>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

fn check_pair<A: Ord, B: Ord>(a: &ConditionalTable<A>, b: &ConditionalTable<B>) -> Result<()> {
    if a.k() != b.k() {
        return Err(AnalysisError::MismatchedK(a.k(), b.k()));
    }
    if !same_vocab(a.vocabulary(), b.vocabulary()) {
        return Err(AnalysisError::VocabularyMismatch);
    }
    Ok(())
}

/// Information gained from order: `sum_x w(x) sum_y p_o log2(p_o / p_u)`.
pub fn task_divergence(
    ordered: &OrderedTable,
    unordered: &UnorderedTable,
    weighting: Weighting,
) -> Result<f64> {
    check_pair(ordered, unordered)?;
    let mut total = 0.0;
    for (key, c) in ordered.iter() {
        let pu = &unordered
            .get(&key.class())
            .ok_or_else(|| OracleError::UnknownInstance(key.id(ordered.vocabulary())))?
            .distribution;
        let inner: f64 = c
            .distribution
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(t, p)| p * (p / pu.prob(t)).log2())
            .sum();
        total += match weighting {
            Weighting::Weighted => c.weight * inner,
            Weighting::Unweighted => inner,
        };
    }
    Ok(total)
}

/// `H(Y|X) = sum_x w(x) h(x)`.
pub fn conditional_entropy<K: Ord>(table: &ConditionalTable<K>) -> f64 {
    table
        .iter()
        .map(|(_, c)| c.weight * c.distribution.entropy())
        .sum()
}

/// The reference a model is compared against. Unordered references are
/// evaluated at ordered instances through their class.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Ordered(&'a OrderedTable),
    Unordered {
        ordered: &'a OrderedTable,
        unordered: &'a UnorderedTable,
    },
}

impl<'a> Reference<'a> {
    fn instances(&self) -> &'a OrderedTable {
        match self {
            Reference::Ordered(o) => o,
            Reference::Unordered { ordered, .. } => ordered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub cross_entropy: f64,
    pub entropy: f64,
    pub kl: f64,
}

fn cross_entropy_terms(p: &Distribution, q: &Distribution, floor: f64) -> f64 {
    -p.iter()
        .filter(|(_, pv)| *pv > 0.0)
        .map(|(t, pv)| pv * q.prob(t).max(floor).log2())
        .sum::<f64>()
}

/// Ensures `model` holds a valid distribution for every instance of `instances`.
pub fn check_model_coverage(instances: &OrderedTable, model: &OrderedTable) -> Result<()> {
    check_pair(instances, model)?;
    let vocab = instances.vocabulary();
    let missing: Vec<String> = instances
        .iter()
        .filter(|(k, _)| model.get(k).is_none())
        .map(|(k, _)| k.id(vocab))
        .collect();
    if !missing.is_empty() {
        return Err(AnalysisError::MissingInstances(missing));
    }
    for (key, c) in model.iter() {
        let total = c.distribution.total();
        let negative = c
            .distribution
            .iter()
            .any(|(_, p)| p < 0.0 || !p.is_finite());
        if negative || (total - 1.0).abs() > MODEL_SUM_TOLERANCE {
            return Err(AnalysisError::InvalidModelDistribution {
                id: key.id(vocab),
                total,
            });
        }
    }
    Ok(())
}

/// `H(p, q)`, `H(p)` and `D_KL(p, q) = H(p, q) - H(p)` over the reference's instances.
pub fn model_divergence(
    reference: Reference<'_>,
    model: &OrderedTable,
    floor: f64,
) -> Result<Divergence> {
    let instances = reference.instances();
    check_model_coverage(instances, model)?;
    if let Reference::Unordered { ordered, unordered } = reference {
        check_pair(ordered, unordered)?;
    }
    let mut cross_entropy = 0.0;
    let mut entropy = 0.0;
    for (key, c) in instances.iter() {
        let p = match reference {
            Reference::Ordered(_) => &c.distribution,
            Reference::Unordered { unordered, .. } => {
                &unordered
                    .get(&key.class())
                    .ok_or_else(|| OracleError::UnknownInstance(key.id(instances.vocabulary())))?
                    .distribution
            }
        };
        let q = &model.get(key).expect("coverage checked").distribution;
        cross_entropy += c.weight * cross_entropy_terms(p, q, floor);
        entropy += c.weight * p.entropy();
    }
    Ok(Divergence {
        cross_entropy,
        entropy,
        kl: cross_entropy - entropy,
    })
}

/// Single-gold-token perplexity, each occurrence counted once.
pub fn perplexity(model: &OrderedTable, gold: &[GoldOccurrence], floor: f64) -> Result<f64> {
    if gold.is_empty() {
        return Err(AnalysisError::NoOccurrences);
    }
    let vocab = model.vocabulary();
    let mut missing = Vec::new();
    let mut total = 0.0;
    for g in gold {
        if g.gold.index() >= vocab.len() {
            return Err(AnalysisError::UnknownGoldToken(g.gold.0));
        }
        match model.get(&g.key) {
            Some(c) => total += c.distribution.prob(g.gold).max(floor).log2(),
            None => missing.push(g.key.id(vocab)),
        }
    }
    if !missing.is_empty() {
        missing.dedup();
        return Err(AnalysisError::MissingInstances(missing));
    }
    Ok((-total / gold.len() as f64).exp2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetrics {
    pub name: String,
    pub ce_ordered: f64,
    pub ce_unordered: f64,
    pub kl_ordered: f64,
    pub kl_unordered: f64,
    pub perplexity: Option<f64>,
}

impl ModelMetrics {
    /// `true` when the model is closer to the ordered reference.
    pub fn fits_ordered(&self) -> bool {
        self.kl_ordered < self.kl_unordered
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    pub entropy_ordered: f64,
    pub entropy_unordered: f64,
    pub task_divergence: f64,
    pub models: Vec<ModelMetrics>,
}

/// A model's predictions for several mask counts.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub name: &'a str,
    pub tables: &'a BTreeMap<usize, OrderedTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub threshold: f64,
    pub max_length: usize,
    pub ks: Vec<usize>,
    pub weighting: Weighting,
    pub floor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            threshold: 0.75,
            max_length: crate::enumerate::DEFAULT_MAX_LENGTH,
            ks: (1..=6).collect(),
            weighting: Weighting::Weighted,
            floor: DEFAULT_FLOOR,
        }
    }
}

/// Scores one model against both references of a single mask count.
pub fn score_model(
    name: &str,
    ordered: &OrderedTable,
    unordered: &UnorderedTable,
    model: &OrderedTable,
    gold: Option<&[GoldOccurrence]>,
    floor: f64,
) -> Result<ModelMetrics> {
    let o = model_divergence(Reference::Ordered(ordered), model, floor)?;
    let u = model_divergence(Reference::Unordered { ordered, unordered }, model, floor)?;
    let perplexity = gold.map(|g| perplexity(model, g, floor)).transpose()?;
    Ok(ModelMetrics {
        name: name.to_string(),
        ce_ordered: o.cross_entropy,
        ce_unordered: u.cross_entropy,
        kl_ordered: o.kl,
        kl_unordered: u.kl,
        perplexity,
    })
}

/// One report per requested mask count, from an existing sentence table.
pub fn sweep_table(
    table: &SentenceTable,
    config: &SweepConfig,
    models: &[ModelInput<'_>],
) -> Result<Vec<MetricsReport>> {
    config
        .ks
        .iter()
        .map(|&k| {
            let ordered = build_ordered(table, k)?;
            let unordered = erase_order(&ordered);
            let gold = gold_occurrences(table.sentences().iter().map(|s| s.tokens.as_slice()), k);
            let models = models
                .iter()
                .filter_map(|m| m.tables.get(&k).map(|t| (m.name, t)))
                .map(|(name, t)| {
                    score_model(name, &ordered, &unordered, t, Some(&gold), config.floor)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MetricsReport {
                k,
                entropy_ordered: conditional_entropy(&ordered),
                entropy_unordered: conditional_entropy(&unordered),
                task_divergence: task_divergence(&ordered, &unordered, config.weighting)?,
                models,
            })
        })
        .collect()
}

/// Enumerates the grammar once, then reports every mask count.
pub fn sweep(
    grammar: &Grammar,
    config: &SweepConfig,
    models: &[ModelInput<'_>],
) -> Result<(SentenceTable, Vec<MetricsReport>)> {
    let table = enumerate_to_coverage(grammar, config.threshold, config.max_length)?;
    let reports = sweep_table(&table, config, models)?;
    Ok((table, reports))
}

/// CSV with columns `k,H_o,H_u,D_task` then five columns per model.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        for m in &r.models {
            if !names.contains(&m.name.as_str()) {
                names.push(&m.name);
            }
        }
    }
    let mut out = String::from("k,H_o,H_u,D_task");
    for n in &names {
        for col in [
            "ce_ordered",
            "ce_unordered",
            "kl_ordered",
            "kl_unordered",
            "perplexity",
        ] {
            let _ = write!(out, ",{n}_{col}");
        }
    }
    out.push('\n');
    for r in reports {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.k, r.entropy_ordered, r.entropy_unordered, r.task_divergence
        );
        for n in &names {
            match r.models.iter().find(|m| m.name == *n) {
                Some(m) => {
                    let ppl = m.perplexity.map(|p| p.to_string()).unwrap_or_default();
                    let _ = write!(
                        out,
                        ",{},{},{},{},{}",
                        m.ce_ordered, m.ce_unordered, m.kl_ordered, m.kl_unordered, ppl
                    );
                }
                None => out.push_str(",,,,,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Fixed-width text rendering of the reports.
pub fn summary_table(reports: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:>3}  {:>10}  {:>10}  {:>10}\n",
        "k", "H_o", "H_u", "D_task"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:>3}  {:>10.4}  {:>10.4}  {:>10.4}",
            r.k, r.entropy_ordered, r.entropy_unordered, r.task_divergence
        );
        for m in &r.models {
            let _ = writeln!(
                out,
                "     {}: kl_o {:.4}  kl_u {:.4}  ce_o {:.4}  ce_u {:.4}{}",
                m.name,
                m.kl_ordered,
                m.kl_unordered,
                m.ce_ordered,
                m.ce_unordered,
                m.perplexity
                    .map(|p| format!("  ppl {p:.3}"))
                    .unwrap_or_default()
            );
        }
    }
    out
}
