//! Benchmark fixtures shared by the criterion targets.

use orderprobe::{toy, Grammar};

/// A right-recursive grammar whose enumeration needs many pops.
pub fn deep_grammar() -> Grammar {
    Grammar::load(
        "0.55 S -> NP VP\n0.45 S -> VP\n\
         0.6 NP -> d N\n0.4 NP -> d A N\n\
         0.5 N -> n\n0.3 N -> m\n0.2 N -> N p NP\n\
         0.7 A -> a\n0.3 A -> a A\n\
         0.6 VP -> v NP\n0.4 VP -> v\n",
    )
    .expect("fixture grammar is valid")
}

pub fn fixtures() -> Vec<(&'static str, Grammar)> {
    vec![
        ("g3", toy::g3()),
        ("ginf", toy::ginf()),
        ("deep", deep_grammar()),
    ]
}
