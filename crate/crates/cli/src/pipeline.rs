//! Full pipeline runs and scoring against their artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use orderprobe::analysis::{
    check_model_coverage, reports_to_csv, score_model, summary_table, ModelMetrics,
};
use orderprobe::datagen::{corpus_to_string, sample_corpus, CorpusSpec};
use orderprobe::oracle::records::{
    read_gold, read_manifest, read_ordered_table, read_predictions, read_unordered_table,
    write_gold, write_manifest, write_ordered_table, write_predictions, write_unordered_table,
};
use orderprobe::oracle::{gold_occurrences, OrderedTable, UnorderedTable};
use orderprobe::{
    build_ordered, class_predictions, conditional_entropy, enumerate_to_coverage, erase_order,
    task_divergence, Grammar, MetricsReport, SentenceTable, Vocabulary, Weighting,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, EXIT_IO};

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grammar: PathBuf,
    pub threshold: f64,
    pub ks: Vec<usize>,
    pub max_length: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub weighting: Weighting,
    pub floor: f64,
    pub corpus: Option<(usize, usize, usize)>,
    pub reference_predictions: bool,
}

impl RunConfig {
    pub fn new(grammar: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            grammar: grammar.into(),
            threshold: 0.75,
            ks: (1..=6).collect(),
            max_length: orderprobe::DEFAULT_MAX_LENGTH,
            out_dir: out_dir.into(),
            seed: 0,
            weighting: Weighting::Weighted,
            floor: orderprobe::DEFAULT_FLOOR,
            corpus: None,
            reference_predictions: false,
        }
    }

    pub fn check(&self) -> Result<(), CliError> {
        check_threshold(self.threshold)?;
        check_ks(&self.ks)?;
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(CliError::invalid(format!(
                "floor {} outside (0, 1)",
                self.floor
            )));
        }
        Ok(())
    }
}

pub fn check_threshold(threshold: f64) -> Result<(), CliError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(CliError::invalid(format!(
            "threshold {threshold} outside (0, 1)"
        )))
    }
}

pub fn check_ks(ks: &[usize]) -> Result<(), CliError> {
    if ks.is_empty() {
        return Err(CliError::invalid("mask count list is empty"));
    }
    if ks[0] == 0 {
        return Err(CliError::invalid("mask counts must be positive"));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::invalid("mask counts must be strictly ascending"));
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_grammar(path: &Path) -> Result<(Grammar, String), CliError> {
    let text = read_text(path)?;
    let grammar =
        Grammar::load(&text).map_err(|e| CliError::from(e).with_context(path.display()))?;
    Ok((grammar, text))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files written under one output directory, with their content hashes.
pub struct Artifacts {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Artifacts {
            root: root.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, relative: &str, content: &str) -> Result<(), CliError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, content).map_err(|e| CliError::io(&path, e))?;
        self.hashes
            .insert(relative.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }
}

pub fn k_dir(k: usize) -> String {
    format!("k{k}")
}

pub struct References {
    pub k: usize,
    pub ordered: OrderedTable,
    pub unordered: UnorderedTable,
}

pub fn build_references(table: &SentenceTable, ks: &[usize]) -> Result<Vec<References>, CliError> {
    ks.iter()
        .map(|&k| {
            let ordered = build_ordered(table, k)?;
            let unordered = erase_order(&ordered);
            Ok(References {
                k,
                ordered,
                unordered,
            })
        })
        .collect()
}

pub fn write_reference_tables(out: &mut Artifacts, refs: &References) -> Result<(), CliError> {
    let dir = k_dir(refs.k);
    out.write(
        &format!("{dir}/ordered.tsv"),
        &write_ordered_table(&refs.ordered),
    )?;
    out.write(
        &format!("{dir}/unordered.tsv"),
        &write_unordered_table(&refs.unordered),
    )
}

pub fn write_eval_files(
    out: &mut Artifacts,
    table: &SentenceTable,
    refs: &References,
) -> Result<(), CliError> {
    let dir = k_dir(refs.k);
    let gold = gold_occurrences(
        table.sentences().iter().map(|s| s.tokens.as_slice()),
        refs.k,
    );
    out.write(
        &format!("{dir}/manifest.tsv"),
        &write_manifest(&refs.ordered),
    )?;
    out.write(
        &format!("{dir}/gold.tsv"),
        &write_gold(refs.k, table.vocabulary(), &gold),
    )
}

/// Predictions files for an ideal ordered model and an ideal order-blind one.
pub fn reference_predictions(refs: &[References]) -> (String, String) {
    let ordered = refs.iter().map(|r| write_predictions(&r.ordered)).collect();
    let unordered = refs
        .iter()
        .map(|r| write_predictions(&class_predictions(&r.ordered, &r.unordered)))
        .collect();
    (ordered, unordered)
}

pub fn write_reference_predictions(
    out: &mut Artifacts,
    refs: &[References],
) -> Result<(), CliError> {
    let (ordered, unordered) = reference_predictions(refs);
    out.write("predictions_ordered.tsv", &ordered)?;
    out.write("predictions_unordered.tsv", &unordered)
}

pub fn report(refs: &References, weighting: Weighting) -> Result<MetricsReport, CliError> {
    Ok(MetricsReport {
        k: refs.k,
        entropy_ordered: conditional_entropy(&refs.ordered),
        entropy_unordered: conditional_entropy(&refs.unordered),
        task_divergence: task_divergence(&refs.ordered, &refs.unordered, weighting)?,
        models: Vec::new(),
    })
}

#[derive(Serialize)]
struct ManifestConfig<'a> {
    grammar: &'a str,
    threshold: f64,
    ks: &'a [usize],
    max_length: usize,
    seed: u64,
    weighting: &'static str,
    floor: f64,
    corpus: Option<CorpusSizes>,
    reference_predictions: bool,
}

#[derive(Serialize)]
struct CorpusSizes {
    train: usize,
    validation: usize,
    test: usize,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: ManifestConfig<'a>,
    grammar_sha256: String,
    sentences: usize,
    covered_mass: f64,
    artifacts: &'a BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub sentences: usize,
    pub covered_mass: f64,
    pub reports: Vec<MetricsReport>,
}

/// Runs every stage and writes all artifacts plus `run_manifest.json`.
pub fn cmd_pipeline(config: &RunConfig) -> Result<RunSummary, CliError> {
    config.check()?;
    let (grammar, source) = load_grammar(&config.grammar)?;
    let table = enumerate_to_coverage(&grammar, config.threshold, config.max_length)?;
    let refs = build_references(&table, &config.ks)?;

    let mut out = Artifacts::create(&config.out_dir)?;
    out.write("grammar.pcfg", &grammar.to_native_string())?;
    out.write("vocab.txt", &grammar.vocabulary().to_file_string())?;
    out.write("sentences.tsv", &table.to_tsv())?;
    for r in &refs {
        write_reference_tables(&mut out, r)?;
        write_eval_files(&mut out, &table, r)?;
    }
    if config.reference_predictions {
        write_reference_predictions(&mut out, &refs)?;
    }
    let reports = refs
        .iter()
        .map(|r| report(r, config.weighting))
        .collect::<Result<Vec<_>, _>>()?;
    out.write("sweep.csv", &reports_to_csv(&reports))?;
    let mut summary = format!(
        "sentences: {}\ncovered_mass: {:.16e}\n\n",
        table.len(),
        table.covered_mass()
    );
    summary.push_str(&summary_table(&reports));
    out.write("summary.txt", &summary)?;

    if let Some((train, validation, test)) = config.corpus {
        let spec = CorpusSpec {
            train,
            validation,
            test,
            seed: config.seed,
            max_length: config.max_length,
        };
        let corpus = sample_corpus(&grammar, &spec)?;
        let vocab = grammar.vocabulary();
        out.write("corpus/train.txt", &corpus_to_string(&corpus.train, vocab))?;
        out.write(
            "corpus/validation.txt",
            &corpus_to_string(&corpus.validation, vocab),
        )?;
        out.write("corpus/test.txt", &corpus_to_string(&corpus.test, vocab))?;
        out.write("corpus/stats.txt", &corpus.stats.to_file_string())?;
    }

    let grammar_path = config.grammar.to_string_lossy();
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: ManifestConfig {
            grammar: &grammar_path,
            threshold: config.threshold,
            ks: &config.ks,
            max_length: config.max_length,
            seed: config.seed,
            weighting: match config.weighting {
                Weighting::Weighted => "weighted",
                Weighting::Unweighted => "unweighted",
            },
            floor: config.floor,
            corpus: config.corpus.map(|(train, validation, test)| CorpusSizes {
                train,
                validation,
                test,
            }),
            reference_predictions: config.reference_predictions,
        },
        grammar_sha256: sha256_hex(source.as_bytes()),
        sentences: table.len(),
        covered_mass: table.covered_mass(),
        artifacts: out.hashes(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::new(EXIT_IO, format!("run manifest: {e}")))?;
    json.push('\n');
    let path = config.out_dir.join(RUN_MANIFEST);
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;

    Ok(RunSummary {
        sentences: table.len(),
        covered_mass: table.covered_mass(),
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct ScoreRow {
    pub k: usize,
    pub metrics: ModelMetrics,
}

#[derive(Debug, Clone)]
pub struct ScoreConfig {
    pub run_dir: PathBuf,
    pub predictions: PathBuf,
    pub model_name: String,
    pub ks: Option<Vec<usize>>,
    pub floor: f64,
}

fn run_ks(run_dir: &Path) -> Result<Vec<usize>, CliError> {
    let entries = fs::read_dir(run_dir).map_err(|e| CliError::io(run_dir, e))?;
    let mut ks = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(run_dir, e))?;
        let name = entry.file_name();
        let Some(k) = name
            .to_str()
            .and_then(|n| n.strip_prefix('k'))
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        if entry.path().join("manifest.tsv").is_file() {
            ks.push(k);
        }
    }
    ks.sort_unstable();
    if ks.is_empty() {
        return Err(CliError::new(
            EXIT_IO,
            format!("{}: no k<N>/manifest.tsv found", run_dir.display()),
        ));
    }
    Ok(ks)
}

/// Scores a predictions file against the references of a pipeline run.
/// Reference artifacts are only read.
pub fn cmd_score(config: &ScoreConfig) -> Result<Vec<ScoreRow>, CliError> {
    let run = &config.run_dir;
    let ks = match &config.ks {
        Some(ks) => {
            check_ks(ks)?;
            ks.clone()
        }
        None => run_ks(run)?,
    };
    let vocab = Arc::new(Vocabulary::from_file_str(&read_text(
        &run.join("vocab.txt"),
    )?));
    let predictions = read_text(&config.predictions)?;
    let ctx = |p: &Path| p.display().to_string();

    let mut rows = Vec::new();
    for k in ks {
        let dir = run.join(k_dir(k));
        let file = |name: &str| dir.join(name);
        let ordered = read_ordered_table(&read_text(&file("ordered.tsv"))?, vocab.clone())
            .map_err(|e| CliError::from(e).with_context(ctx(&file("ordered.tsv"))))?;
        let unordered = read_unordered_table(&read_text(&file("unordered.tsv"))?, vocab.clone())
            .map_err(|e| CliError::from(e).with_context(ctx(&file("unordered.tsv"))))?;
        let manifest = read_manifest(&read_text(&file("manifest.tsv"))?, &vocab)
            .map_err(|e| CliError::from(e).with_context(ctx(&file("manifest.tsv"))))?;
        let gold = read_gold(&read_text(&file("gold.tsv"))?, &vocab, &manifest)
            .map_err(|e| CliError::from(e).with_context(ctx(&file("gold.tsv"))))?;
        let model = read_predictions(&predictions, vocab.clone(), &manifest)
            .map_err(|e| CliError::from(e).with_context(ctx(&config.predictions)))?;
        check_model_coverage(&ordered, &model)
            .map_err(|e| CliError::from(e).with_context(format!("k={k}")))?;
        let metrics = score_model(
            &config.model_name,
            &ordered,
            &unordered,
            &model,
            Some(&gold),
            config.floor,
        )?;
        rows.push(ScoreRow { k, metrics });
    }
    Ok(rows)
}

pub fn score_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from(
        "k,model,ce_ordered,ce_unordered,kl_ordered,kl_unordered,perplexity,better_fit\n",
    );
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            m.name,
            m.ce_ordered,
            m.ce_unordered,
            m.kl_ordered,
            m.kl_unordered,
            m.perplexity.map(|p| p.to_string()).unwrap_or_default(),
            better_fit(m)
        );
    }
    out
}

pub fn better_fit(m: &ModelMetrics) -> &'static str {
    if (m.kl_ordered - m.kl_unordered).abs() <= 1e-12 {
        "tie"
    } else if m.fits_ordered() {
        "ordered"
    } else {
        "unordered"
    }
}
