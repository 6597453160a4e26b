//! Line-delimited text forms of reference tables, evaluation manifests,
//! gold occurrences, and model predictions.
//!
//! Fields are tab-separated. A leading `# <kind> k=<k>` line carries the
//! table kind and mask count. Reference probabilities and weights are
//! written with 17 significant digits, predictions with 9.
//!
//! ```text
//! # ordered k=1
//! <id>  <context>  <masked,positions>  <target>  <weight>  <tok> <p> <tok> <p> ...
//! # unordered k=1
//! <id>  <sorted unmasked tokens>  <k>  <weight>  <tok> <p> ...
//! # manifest k=1
//! <id>  <context>  <masked,positions>  <target>  <weight>
//! # gold k=1
//! <id>  <token>
//! <id>  <p_0> <p_1> ... <p_|V|-1>          (predictions, vocabulary order)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use super::{
    ClassKey, Conditional, ConditionalTable, Distribution, GoldOccurrence, InstanceKey,
    OrderedTable, Slot, TableKind, UnorderedTable,
};
use crate::grammar::{TokenId, Vocabulary, MASK_TOKEN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing `# {expected} k=<k>` header")]
    MissingHeader { expected: &'static str },
}

fn parse_err(line: usize, message: impl Into<String>) -> RecordError {
    RecordError::Parse {
        line,
        message: message.into(),
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_pairs(out: &mut String, vocab: &Vocabulary, d: &Distribution) {
    for (i, (t, p)) in d.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{} {}", vocab.token(t), fmt17(p));
    }
}

fn write_instance_fields(out: &mut String, vocab: &Vocabulary, key: &InstanceKey, weight: f64) {
    let masked = key
        .masked_positions()
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let _ = write!(
        out,
        "{}\t{}\t{}\t{}\t{}",
        key.id(vocab),
        key.render_context(vocab),
        masked,
        key.target,
        fmt17(weight)
    );
}

pub fn write_ordered_table(table: &OrderedTable) -> String {
    let vocab = table.vocabulary();
    let mut out = format!("# {} k={}\n", table.kind(), table.k());
    for (key, c) in table.iter() {
        write_instance_fields(&mut out, vocab, key, c.weight);
        out.push('\t');
        write_pairs(&mut out, vocab, &c.distribution);
        out.push('\n');
    }
    out
}

pub fn write_unordered_table(table: &UnorderedTable) -> String {
    let vocab = table.vocabulary();
    let mut out = format!("# unordered k={}\n", table.k());
    for (class, c) in table.iter() {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t",
            class.id(vocab),
            vocab.render(&class.unmasked),
            class.masks,
            fmt17(c.weight)
        );
        write_pairs(&mut out, vocab, &c.distribution);
        out.push('\n');
    }
    out
}

/// The evaluation manifest: every ordered instance without its distribution.
pub fn write_manifest(table: &OrderedTable) -> String {
    let vocab = table.vocabulary();
    let mut out = format!("# manifest k={}\n", table.k());
    for (key, c) in table.iter() {
        write_instance_fields(&mut out, vocab, key, c.weight);
        out.push('\n');
    }
    out
}

pub fn write_gold(k: usize, vocab: &Vocabulary, gold: &[GoldOccurrence]) -> String {
    let mut out = format!("# gold k={k}\n");
    for g in gold {
        let _ = writeln!(out, "{}\t{}", g.key.id(vocab), vocab.token(g.gold));
    }
    out
}

/// Dense predictions in vocabulary order, one record per instance.
pub fn write_predictions(table: &OrderedTable) -> String {
    let vocab = table.vocabulary();
    let mut out = String::new();
    for (key, c) in table.iter() {
        out.push_str(&key.id(vocab));
        for p in c.distribution.to_dense(vocab.len()) {
            let _ = write!(out, "\t{p:.8e}");
        }
        out.push('\n');
    }
    out
}

/// Splits off the header and yields numbered data lines.
fn body<'a>(
    text: &'a str,
    expected: &'static str,
) -> Result<(usize, impl Iterator<Item = (usize, &'a str)>), RecordError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let k = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((n, l)) => {
                let rest = l
                    .strip_prefix('#')
                    .map(str::trim)
                    .and_then(|r| r.strip_prefix(expected))
                    .map(str::trim)
                    .and_then(|r| r.strip_prefix("k="))
                    .ok_or(RecordError::MissingHeader { expected })?;
                break rest
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(n, format!("bad mask count `{rest}`")))?;
            }
            None => return Err(RecordError::MissingHeader { expected }),
        }
    };
    Ok((
        k,
        lines.filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#')),
    ))
}

fn token(vocab: &Vocabulary, line: usize, t: &str) -> Result<TokenId, RecordError> {
    vocab
        .id(t)
        .ok_or_else(|| parse_err(line, format!("token `{t}` is not in the vocabulary")))
}

fn number<T: std::str::FromStr>(line: usize, what: &str, t: &str) -> Result<T, RecordError> {
    t.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} `{t}`")))
}

fn parse_context(vocab: &Vocabulary, line: usize, text: &str) -> Result<Arc<[Slot]>, RecordError> {
    text.split_whitespace()
        .map(|t| {
            if t == MASK_TOKEN {
                Ok(None)
            } else {
                token(vocab, line, t).map(Some)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Into::into)
}

fn parse_pairs(vocab: &Vocabulary, line: usize, text: &str) -> Result<Distribution, RecordError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if !words.len().is_multiple_of(2) {
        return Err(parse_err(
            line,
            "odd number of fields in (token, probability) pairs",
        ));
    }
    let entries = words
        .chunks(2)
        .map(|c| {
            Ok((
                token(vocab, line, c[0])?,
                number(line, "probability", c[1])?,
            ))
        })
        .collect::<Result<Vec<_>, RecordError>>()?;
    Ok(Distribution::from_entries(entries))
}

/// A manifest record: the instance, its id as written, and its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub key: InstanceKey,
    pub weight: f64,
}

fn parse_instance(
    vocab: &Vocabulary,
    line: usize,
    fields: &[&str],
) -> Result<ManifestRecord, RecordError> {
    let context = parse_context(vocab, line, fields[1])?;
    let target: usize = number(line, "target position", fields[3])?;
    let key = InstanceKey { context, target };
    let masked: Vec<usize> = if fields[2].trim().is_empty() {
        Vec::new()
    } else {
        fields[2]
            .split(',')
            .map(|p| number(line, "masked position", p))
            .collect::<Result<_, _>>()?
    };
    if masked != key.masked_positions() || !masked.contains(&target) {
        return Err(parse_err(
            line,
            "masked positions disagree with the context",
        ));
    }
    let id = fields[0].to_string();
    if id != key.id(vocab) {
        return Err(parse_err(
            line,
            format!("instance id {id} does not match its content"),
        ));
    }
    Ok(ManifestRecord {
        id,
        key,
        weight: number(line, "weight", fields[4])?,
    })
}

pub fn read_ordered_table(text: &str, vocab: Arc<Vocabulary>) -> Result<OrderedTable, RecordError> {
    let (k, lines) = body(text, "ordered")?;
    let mut entries = BTreeMap::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(parse_err(
                n,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let rec = parse_instance(&vocab, n, &fields)?;
        let distribution = parse_pairs(&vocab, n, fields[5])?;
        entries.insert(
            rec.key,
            Conditional {
                weight: rec.weight,
                distribution,
            },
        );
    }
    Ok(ConditionalTable::new(TableKind::Ordered, k, vocab, entries))
}

pub fn read_unordered_table(
    text: &str,
    vocab: Arc<Vocabulary>,
) -> Result<UnorderedTable, RecordError> {
    let (k, lines) = body(text, "unordered")?;
    let mut entries = BTreeMap::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                n,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let unmasked = fields[1]
            .split_whitespace()
            .map(|t| token(&vocab, n, t))
            .collect::<Result<Vec<_>, _>>()?;
        let class = ClassKey {
            unmasked,
            masks: number(n, "mask count", fields[2])?,
        };
        entries.insert(
            class,
            Conditional {
                weight: number(n, "weight", fields[3])?,
                distribution: parse_pairs(&vocab, n, fields[4])?,
            },
        );
    }
    Ok(ConditionalTable::new(
        TableKind::Unordered,
        k,
        vocab,
        entries,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub k: usize,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn by_id(&self) -> HashMap<&str, &ManifestRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }
}

pub fn read_manifest(text: &str, vocab: &Vocabulary) -> Result<Manifest, RecordError> {
    let (k, lines) = body(text, "manifest")?;
    let mut records = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                n,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        records.push(parse_instance(vocab, n, &fields)?);
    }
    Ok(Manifest { k, records })
}

/// Gold occurrences; ids are resolved through the manifest.
pub fn read_gold(
    text: &str,
    vocab: &Vocabulary,
    manifest: &Manifest,
) -> Result<Vec<GoldOccurrence>, RecordError> {
    let (_, lines) = body(text, "gold")?;
    let by_id = manifest.by_id();
    let mut out = Vec::new();
    for (n, line) in lines {
        let (id, tok) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(n, "expected `<id>\\t<token>`"))?;
        let rec = by_id
            .get(id)
            .ok_or_else(|| parse_err(n, format!("instance {id} is not in the manifest")))?;
        out.push(GoldOccurrence {
            key: rec.key.clone(),
            gold: token(vocab, n, tok.trim())?,
        });
    }
    Ok(out)
}

/// Reads predictions for the instances of `manifest`; records for other
/// instances are ignored. A record may carry either one probability per
/// terminal or two extra leading entries for the reserved tokens, whose mass
/// is dropped and the rest renormalized.
pub fn read_predictions(
    text: &str,
    vocab: Arc<Vocabulary>,
    manifest: &Manifest,
) -> Result<OrderedTable, RecordError> {
    let by_id = manifest.by_id();
    let v = vocab.len();
    // An unterminated final line that fails to parse is a cut-off write;
    // its instance counts as missing rather than malformed.
    let cut_off = if text.ends_with('\n') {
        0
    } else {
        text.lines().count()
    };
    let mut entries = BTreeMap::new();
    for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(['\t', ' ']).filter(|f| !f.is_empty());
        let id = fields.next().unwrap_or_default();
        let Some(rec) = by_id.get(id) else {
            continue;
        };
        let probs = fields
            .map(|f| number::<f64>(n, "probability", f))
            .collect::<Result<Vec<_>, _>>();
        let mut probs = match probs {
            Ok(p) if n == cut_off && p.len() != v && p.len() != v + 2 => continue,
            Ok(p) => p,
            Err(_) if n == cut_off => continue,
            Err(e) => return Err(e),
        };
        if probs.len() == v + 2 {
            probs.drain(..2);
            let total: f64 = probs.iter().sum();
            if total > 0.0 {
                probs.iter_mut().for_each(|p| *p /= total);
            }
        } else if probs.len() != v {
            return Err(parse_err(
                n,
                format!("expected {v} probabilities, found {}", probs.len()),
            ));
        }
        entries.insert(
            rec.key.clone(),
            Conditional {
                weight: rec.weight,
                distribution: Distribution::from_dense(&probs),
            },
        );
    }
    Ok(ConditionalTable::new(
        TableKind::Model,
        manifest.k,
        vocab,
        entries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::enumerate_to_coverage;
    use crate::oracle::{build_ordered, erase_order, gold_occurrences};
    use crate::toy;

    fn g3_tables(k: usize) -> (OrderedTable, UnorderedTable) {
        let g = toy::g3();
        let t = enumerate_to_coverage(&g, 0.75, 64).unwrap();
        let o = build_ordered(&t, k).unwrap();
        let u = erase_order(&o);
        (o, u)
    }

    #[test]
    fn ordered_round_trip() {
        let (o, u) = g3_tables(2);
        let back = read_ordered_table(&write_ordered_table(&o), o.vocabulary().clone()).unwrap();
        assert_eq!(back, o);
        let back =
            read_unordered_table(&write_unordered_table(&u), u.vocabulary().clone()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn manifest_records() {
        let (o, _) = g3_tables(1);
        let text = write_manifest(&o);
        assert_eq!(text.lines().count(), 1 + 6);
        let first = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = first.split('\t').collect();
        assert_eq!(fields.len(), 5);
        assert!(fields[1].contains(MASK_TOKEN));
        let m = read_manifest(&text, o.vocabulary()).unwrap();
        assert_eq!(m.k, 1);
        assert_eq!(m.records.len(), 6);
        for r in &m.records {
            assert_eq!(o.get(&r.key).unwrap().weight, r.weight);
        }
    }

    #[test]
    fn all_masked_context_rendering() {
        let (o, _) = g3_tables(3);
        let text = write_manifest(&o);
        assert_eq!(text.lines().count(), 1 + 3);
        assert!(text
            .lines()
            .skip(1)
            .all(|l| l.split('\t').nth(1) == Some("[MASK] [MASK] [MASK]")));
    }

    #[test]
    fn predictions_and_gold() {
        let (o, _) = g3_tables(1);
        let vocab = o.vocabulary().clone();
        let m = read_manifest(&write_manifest(&o), &vocab).unwrap();
        let preds = read_predictions(&write_predictions(&o), vocab.clone(), &m).unwrap();
        assert_eq!(preds.kind(), TableKind::Model);
        assert_eq!(preds.len(), 6);
        for (key, c) in o.iter() {
            assert_eq!(preds.get(key).unwrap().distribution, c.distribution);
        }

        let g = toy::g3();
        let t = enumerate_to_coverage(&g, 0.75, 64).unwrap();
        let gold = gold_occurrences(t.sentences().iter().map(|s| s.tokens.as_slice()), 1);
        let back = read_gold(&write_gold(1, &vocab, &gold), &vocab, &m).unwrap();
        assert_eq!(back, gold);
    }

    #[test]
    fn reserved_columns_are_dropped() {
        let (o, _) = g3_tables(1);
        let vocab = o.vocabulary().clone();
        let m = read_manifest(&write_manifest(&o), &vocab).unwrap();
        let id = &m.records[0].id;
        let text = format!("{id}\t0.5\t0\t0.125\t0.125\t0.125\t0.125\n");
        let p = read_predictions(&text, vocab, &m).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.iter().next().unwrap().1.distribution.total(), 1.0);
    }

    #[test]
    fn malformed_input() {
        let (o, _) = g3_tables(1);
        let vocab = o.vocabulary().clone();
        assert_eq!(
            read_ordered_table("x\ty\n", vocab.clone()),
            Err(RecordError::MissingHeader {
                expected: "ordered"
            })
        );
        let text = write_ordered_table(&o).replace("\ta b [MASK]\t", "\ta b [MASK] c\t");
        assert!(read_ordered_table(&text, vocab.clone()).is_err());
        let m = read_manifest(&write_manifest(&o), &vocab).unwrap();
        let bad = format!("{}\t0.5\t0.5\n", m.records[0].id);
        assert!(matches!(
            read_predictions(&bad, vocab, &m),
            Err(RecordError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn cut_off_last_line_is_missing() {
        let (o, _) = g3_tables(1);
        let vocab = o.vocabulary().clone();
        let m = read_manifest(&write_manifest(&o), &vocab).unwrap();
        let full = write_predictions(&o);
        let cut = &full[..full.rfind('\t').unwrap()];
        let p = read_predictions(cut, vocab.clone(), &m).unwrap();
        assert_eq!(p.len(), o.len() - 1);
        let broken = format!("{}\n", cut);
        assert!(read_predictions(&broken, vocab, &m).is_err());
    }
}
