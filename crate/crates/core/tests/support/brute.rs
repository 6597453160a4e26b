//! Brute-force reference for the masked-token task, written against plain
//! strings and joint probabilities so it shares no code path with the
//! library's tables.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

pub type Sentence = Vec<String>;

/// Every sentence of a finite native-format grammar with its total probability.
pub fn expand_finite(text: &str) -> Vec<(Sentence, f64)> {
    let mut rules: HashMap<String, Vec<(f64, Vec<String>)>> = HashMap::new();
    let mut start = None;
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(words[2], "->");
        start.get_or_insert_with(|| words[1].to_string());
        rules.entry(words[1].to_string()).or_default().push((
            words[0].parse().unwrap(),
            words[3..].iter().map(|s| s.to_string()).collect(),
        ));
    }
    fn expand(sym: &str, rules: &HashMap<String, Vec<(f64, Vec<String>)>>) -> Vec<(Sentence, f64)> {
        let Some(options) = rules.get(sym) else {
            return vec![(vec![sym.to_string()], 1.0)];
        };
        let mut out = Vec::new();
        for (p, rhs) in options {
            let mut partial: Vec<(Sentence, f64)> = vec![(Vec::new(), *p)];
            for s in rhs {
                let sub = expand(s, rules);
                partial = partial
                    .iter()
                    .flat_map(|(prefix, pp)| {
                        sub.iter().map(move |(tail, tp)| {
                            let mut v = prefix.clone();
                            v.extend(tail.iter().cloned());
                            (v, pp * tp)
                        })
                    })
                    .collect();
            }
            out.extend(partial);
        }
        out
    }
    let mut merged: BTreeMap<Sentence, f64> = BTreeMap::new();
    for (s, p) in expand(start.as_deref().unwrap(), &rules) {
        *merged.entry(s).or_insert(0.0) += p;
    }
    merged.into_iter().collect()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u64..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteMetrics {
    pub entropy_ordered: f64,
    pub entropy_unordered: f64,
    pub divergence: f64,
    pub instances: usize,
}

/// Joint-probability computation of `H(p_o)`, `H(p_u)` and `D_KL(p_o || p_u)`.
pub fn metrics(sentences: &[(Sentence, f64)], k: usize) -> BruteMetrics {
    type Ctx = (Vec<String>, usize);
    let mut joint: BTreeMap<Ctx, BTreeMap<String, f64>> = BTreeMap::new();
    let mass: f64 = sentences
        .iter()
        .filter(|(s, _)| s.len() >= k)
        .map(|(_, p)| p)
        .sum();
    for (s, p) in sentences.iter().filter(|(s, _)| s.len() >= k) {
        let sets = subsets(s.len(), k);
        let share = p / mass / sets.len() as f64 / k as f64;
        for set in sets {
            let ctx: Vec<String> = s
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if set.contains(&i) {
                        "<M>".to_string()
                    } else {
                        t.clone()
                    }
                })
                .collect();
            for &t in &set {
                *joint
                    .entry((ctx.clone(), t))
                    .or_default()
                    .entry(s[t].clone())
                    .or_insert(0.0) += share;
            }
        }
    }
    let class_of = |ctx: &[String]| {
        let mut v: Vec<String> = ctx.iter().filter(|t| *t != "<M>").cloned().collect();
        v.sort();
        (v, ctx.len() - ctx.iter().filter(|t| *t != "<M>").count())
    };
    let mut class_joint: BTreeMap<(Vec<String>, usize), BTreeMap<String, f64>> = BTreeMap::new();
    for ((ctx, _), ys) in &joint {
        let c = class_joint.entry(class_of(ctx)).or_default();
        for (y, p) in ys {
            *c.entry(y.clone()).or_insert(0.0) += p;
        }
    }
    let mut h_o = 0.0;
    let mut d = 0.0;
    for ((ctx, _), ys) in &joint {
        let px: f64 = ys.values().sum();
        let cj = &class_joint[&class_of(ctx)];
        let pc: f64 = cj.values().sum();
        for (y, p) in ys {
            let po = p / px;
            let pu = cj[y] / pc;
            h_o -= p * po.log2();
            d += p * (po / pu).log2();
        }
    }
    let mut h_u = 0.0;
    for ys in class_joint.values() {
        let pc: f64 = ys.values().sum();
        for p in ys.values() {
            h_u -= p * (p / pc).log2();
        }
    }
    BruteMetrics {
        entropy_ordered: h_o,
        entropy_unordered: h_u,
        divergence: d,
        instances: joint.len(),
    }
}
