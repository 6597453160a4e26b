//! True completion distributions for the masked-token task.
//!
//! For a mask count `k`, every sentence of length `L >= k` contributes each
//! of its `C(L, k)` mask sets with equal share of the sentence's probability.
//! Identical masked contexts are merged across sentences. Each masked slot
//! in a context is its own prediction instance, carrying `1/k` of the
//! context's mass; instance weights for one `k` sum to one over the covered
//! sentences.
//!
//! Erasing order maps an instance to the multiset of its unmasked tokens
//! plus the mask count. The unordered distribution of a class is the
//! weight-average of its member instances' ordered distributions.

pub mod records;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::enumerate::SentenceTable;
use crate::grammar::{TokenId, Vocabulary, MASK_TOKEN};

/// A context position: `None` is the mask sentinel.
pub type Slot = Option<TokenId>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("mask count must be at least 1")]
    ZeroMasks,
    #[error("no sentence has at least {0} tokens")]
    EmptyResult(usize),
    #[error("unknown instance {0}")]
    UnknownInstance(String),
}

/// Sparse distribution over vocabulary tokens, sorted by token.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Distribution {
    entries: Vec<(TokenId, f64)>,
}

impl Distribution {
    /// Sorts entries and merges repeated tokens.
    pub fn from_entries(mut entries: Vec<(TokenId, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(TokenId, f64)> = Vec::with_capacity(entries.len());
        for (t, p) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == t => last.1 += p,
                _ => merged.push((t, p)),
            }
        }
        Distribution { entries: merged }
    }

    /// From a dense vector in vocabulary order; zero entries are omitted.
    pub fn from_dense(probs: &[f64]) -> Self {
        Distribution {
            entries: probs
                .iter()
                .enumerate()
                .filter(|(_, p)| **p != 0.0)
                .map(|(i, p)| (TokenId(i as u32), *p))
                .collect(),
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        for (t, p) in &self.entries {
            v[t.index()] = *p;
        }
        v
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.entries
            .binary_search_by_key(&token, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Shannon entropy in bits; zero-probability entries contribute nothing.
    pub fn entropy(&self) -> f64 {
        0.0 - self
            .entries
            .iter()
            .filter(|e| e.1 > 0.0)
            .map(|e| e.1 * e.1.log2())
            .sum::<f64>()
    }
}

/// A masked context and the masked slot being predicted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceKey {
    pub context: Arc<[Slot]>,
    pub target: usize,
}

impl InstanceKey {
    pub fn masked_positions(&self) -> Vec<usize> {
        self.context
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn mask_count(&self) -> usize {
        self.context.iter().filter(|s| s.is_none()).count()
    }

    /// The order-erasure class of this instance.
    pub fn class(&self) -> ClassKey {
        let mut unmasked: Vec<TokenId> = self.context.iter().flatten().copied().collect();
        unmasked.sort();
        ClassKey {
            unmasked,
            masks: self.mask_count(),
        }
    }

    pub fn render_context(&self, vocab: &Vocabulary) -> String {
        self.context
            .iter()
            .map(|s| s.map_or(MASK_TOKEN, |t| vocab.token(t)))
            .join(" ")
    }

    /// Stable content hash of the rendered context and target position.
    pub fn id(&self, vocab: &Vocabulary) -> String {
        content_id(&format!("{}\t{}", self.render_context(vocab), self.target))
    }
}

/// Unmasked tokens in canonical order plus the number of masks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassKey {
    pub unmasked: Vec<TokenId>,
    pub masks: usize,
}

impl ClassKey {
    pub fn id(&self, vocab: &Vocabulary) -> String {
        content_id(&format!(
            "{}\t#{}",
            vocab.render(&self.unmasked),
            self.masks
        ))
    }
}

fn content_id(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Ordered,
    Unordered,
    Model,
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableKind::Ordered => "ordered",
            TableKind::Unordered => "unordered",
            TableKind::Model => "model",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub weight: f64,
    pub distribution: Distribution,
}

/// Completion distributions keyed by instance or class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable<K: Ord> {
    kind: TableKind,
    k: usize,
    vocabulary: Arc<Vocabulary>,
    entries: BTreeMap<K, Conditional>,
}

pub type OrderedTable = ConditionalTable<InstanceKey>;
pub type UnorderedTable = ConditionalTable<ClassKey>;

impl<K: Ord> ConditionalTable<K> {
    pub fn new(
        kind: TableKind,
        k: usize,
        vocabulary: Arc<Vocabulary>,
        entries: BTreeMap<K, Conditional>,
    ) -> Self {
        ConditionalTable {
            kind,
            k,
            vocabulary,
            entries,
        }
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &K) -> Option<&Conditional> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &Conditional)> {
        self.entries.iter()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.values().map(|c| c.weight).sum()
    }
}

impl OrderedTable {
    /// Number of distinct masked contexts.
    pub fn context_count(&self) -> usize {
        self.entries.keys().map(|k| &k.context).dedup().count()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c as f64
}

struct ContextAcc {
    mass: f64,
    targets: Vec<(usize, Vec<(TokenId, f64)>)>,
}

fn add_mass(dist: &mut Vec<(TokenId, f64)>, token: TokenId, mass: f64) {
    match dist.iter_mut().find(|e| e.0 == token) {
        Some(e) => e.1 += mass,
        None => dist.push((token, mass)),
    }
}

/// Builds `p_o` for mask count `k` from the enumerated sentences.
pub fn build_ordered(table: &SentenceTable, k: usize) -> Result<OrderedTable, OracleError> {
    if k == 0 {
        return Err(OracleError::ZeroMasks);
    }
    let mut index: HashMap<Vec<Slot>, usize> = HashMap::new();
    let mut accs: Vec<(Vec<Slot>, ContextAcc)> = Vec::new();

    for s in table.sentences().iter().filter(|s| s.tokens.len() >= k) {
        let len = s.tokens.len();
        let share = s.probability / binomial(len, k);
        for mask in (0..len).combinations(k) {
            let mut ctx: Vec<Slot> = s.tokens.iter().copied().map(Some).collect();
            for &p in &mask {
                ctx[p] = None;
            }
            let slot = *index.entry(ctx.clone()).or_insert_with(|| {
                accs.push((
                    ctx,
                    ContextAcc {
                        mass: 0.0,
                        targets: mask.iter().map(|&p| (p, Vec::new())).collect(),
                    },
                ));
                accs.len() - 1
            });
            let acc = &mut accs[slot].1;
            acc.mass += share;
            for (target, dist) in acc.targets.iter_mut() {
                add_mass(dist, s.tokens[*target], share);
            }
        }
    }
    if accs.is_empty() {
        return Err(OracleError::EmptyResult(k));
    }

    accs.sort_by(|a, b| a.0.cmp(&b.0));
    let total: f64 = accs.iter().map(|(_, a)| a.mass).sum();
    let mut entries = BTreeMap::new();
    for (ctx, acc) in accs {
        let context: Arc<[Slot]> = ctx.into();
        let weight = acc.mass / (k as f64 * total);
        for (target, dist) in acc.targets {
            let distribution = Distribution::from_entries(
                dist.into_iter().map(|(t, m)| (t, m / acc.mass)).collect(),
            );
            entries.insert(
                InstanceKey {
                    context: context.clone(),
                    target,
                },
                Conditional {
                    weight,
                    distribution,
                },
            );
        }
    }
    Ok(ConditionalTable::new(
        TableKind::Ordered,
        k,
        table.vocabulary().clone(),
        entries,
    ))
}

/// Builds `p_u` by merging ordered instances that share an order-erasure class.
pub fn erase_order(ordered: &OrderedTable) -> UnorderedTable {
    let mut acc: BTreeMap<ClassKey, (f64, Vec<(TokenId, f64)>)> = BTreeMap::new();
    for (key, cond) in ordered.iter() {
        let e = acc.entry(key.class()).or_default();
        e.0 += cond.weight;
        for (t, p) in cond.distribution.iter() {
            add_mass(&mut e.1, t, cond.weight * p);
        }
    }
    let entries = acc
        .into_iter()
        .map(|(class, (weight, mass))| {
            let distribution = Distribution::from_entries(
                mass.into_iter().map(|(t, m)| (t, m / weight)).collect(),
            );
            (
                class,
                Conditional {
                    weight,
                    distribution,
                },
            )
        })
        .collect();
    ConditionalTable::new(
        TableKind::Unordered,
        ordered.k(),
        ordered.vocabulary().clone(),
        entries,
    )
}

/// `p_u(.|class(x))` spread back over the ordered instances, as a model
/// table: the predictions of an ideal order-blind model.
pub fn class_predictions(ordered: &OrderedTable, unordered: &UnorderedTable) -> OrderedTable {
    let entries = ordered
        .iter()
        .filter_map(|(key, cond)| {
            unordered.get(&key.class()).map(|u| {
                (
                    key.clone(),
                    Conditional {
                        weight: cond.weight,
                        distribution: u.distribution.clone(),
                    },
                )
            })
        })
        .collect();
    ConditionalTable::new(
        TableKind::Model,
        ordered.k(),
        ordered.vocabulary().clone(),
        entries,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Ordered,
    Unordered,
}

/// `p_o(.|x)` or `p_u(.|class(x))` for an ordered instance `x`.
pub fn lookup_reference<'t>(
    key: &InstanceKey,
    which: Which,
    ordered: &'t OrderedTable,
    unordered: &'t UnorderedTable,
) -> Result<&'t Distribution, OracleError> {
    let unknown = || OracleError::UnknownInstance(key.id(ordered.vocabulary()));
    let own = ordered.get(key).ok_or_else(unknown)?;
    match which {
        Which::Ordered => Ok(&own.distribution),
        Which::Unordered => unordered
            .get(&key.class())
            .map(|c| &c.distribution)
            .ok_or_else(unknown),
    }
}

/// One scored occurrence: an instance and the token the source sentence has there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldOccurrence {
    pub key: InstanceKey,
    pub gold: TokenId,
}

/// Every (sentence, mask set, target) occurrence for mask count `k`, each sentence once.
pub fn gold_occurrences<'a, I>(sentences: I, k: usize) -> Vec<GoldOccurrence>
where
    I: IntoIterator<Item = &'a [TokenId]>,
{
    let mut out = Vec::new();
    for s in sentences.into_iter().filter(|s| s.len() >= k && k > 0) {
        for mask in (0..s.len()).combinations(k) {
            let mut ctx: Vec<Slot> = s.iter().copied().map(Some).collect();
            for &p in &mask {
                ctx[p] = None;
            }
            let context: Arc<[Slot]> = ctx.into();
            for &target in &mask {
                out.push(GoldOccurrence {
                    key: InstanceKey {
                        context: context.clone(),
                        target,
                    },
                    gold: s[target],
                });
            }
        }
    }
    out
}
