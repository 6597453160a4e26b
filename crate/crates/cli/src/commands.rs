use std::fs;
use std::path::Path;

use orderprobe::analysis::{reports_to_csv, summary_table};
use orderprobe::datagen::{chi2_fitness, corpus_to_string, sample_corpus, CorpusSpec};
use orderprobe::{enumerate_to_coverage, kbest, validate, Grammar, GrammarError, Weighting};

use crate::args::{
    Command, CoverageArgs, EnumerateArgs, ExportArgs, OracleArgs, PipelineArgs, SampleArgs,
    ScoreArgs, ScoringArgs, SweepArgs, ValidateArgs,
};
use crate::error::CliError;
use crate::pipeline::{
    better_fit, build_references, check_ks, check_threshold, cmd_pipeline, cmd_score, load_grammar,
    read_text, report, score_csv, write_eval_files, write_reference_predictions,
    write_reference_tables, Artifacts, RunConfig, ScoreConfig,
};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(a) => validate_cmd(a),
        Command::Enumerate(a) => enumerate_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::ExportEval(a) => export_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    }
}

fn emit(output: Option<&Path>, content: &str) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, content).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn weighting(s: &ScoringArgs) -> Weighting {
    if s.unweighted {
        Weighting::Unweighted
    } else {
        Weighting::Weighted
    }
}

fn validate_cmd(a: ValidateArgs) -> Result<(), CliError> {
    let text = read_text(&a.grammar)?;
    // Parse without renormalizing so violations are reported as written.
    let parsed = match orderprobe::grammar::GrammarFormat::detect(&text) {
        orderprobe::grammar::GrammarFormat::Native => orderprobe::parse_grammar(&text),
        orderprobe::grammar::GrammarFormat::Release => {
            orderprobe::grammar::parse_release_grammar(&text)
        }
    };
    let grammar = parsed.map_err(|e| CliError::from(e).with_context(a.grammar.display()))?;
    let violations = validate(&grammar);
    if !violations.is_empty() {
        return Err(
            CliError::from(GrammarError::Invalid(violations)).with_context(a.grammar.display())
        );
    }
    println!(
        "ok: {} rules, {} nonterminals, {} terminals",
        grammar.rules().len(),
        grammar.nonterminals().count(),
        grammar.vocabulary().len()
    );
    Ok(())
}

fn enumerate_cmd(a: EnumerateArgs) -> Result<(), CliError> {
    let (grammar, _) = load_grammar(&a.grammar)?;
    let table = match a.kbest {
        Some(n) => {
            let best = kbest(&grammar, n, a.coverage.max_length);
            let mass = best.sentences.iter().map(|s| s.probability).sum::<f64>();
            orderprobe::SentenceTable::new(best.sentences, mass, grammar.vocabulary().clone())
        }
        None => {
            check_threshold(a.coverage.threshold)?;
            enumerate_to_coverage(&grammar, a.coverage.threshold, a.coverage.max_length)?
        }
    };
    eprintln!(
        "{} sentences, covered mass {:.6}",
        table.len(),
        table.covered_mass()
    );
    emit(a.output.as_deref(), &table.to_tsv())
}

fn sample_cmd(a: SampleArgs) -> Result<(), CliError> {
    let (grammar, _) = load_grammar(&a.grammar)?;
    let spec = CorpusSpec {
        train: a.corpus.train,
        validation: a.corpus.validation,
        test: a.corpus.test,
        seed: a.seed,
        max_length: a.max_length,
    };
    let corpus = sample_corpus(&grammar, &spec)?;
    let vocab = grammar.vocabulary();
    let mut out = Artifacts::create(&a.out_dir)?;
    out.write("train.txt", &corpus_to_string(&corpus.train, vocab))?;
    out.write(
        "validation.txt",
        &corpus_to_string(&corpus.validation, vocab),
    )?;
    out.write("test.txt", &corpus_to_string(&corpus.test, vocab))?;
    out.write("vocab.txt", &vocab.to_file_string())?;
    out.write("stats.txt", &corpus.stats.to_file_string())?;
    print!("{}", corpus.stats.to_file_string());
    if let Some(threshold) = a.chi2 {
        check_threshold(threshold)?;
        let table = enumerate_to_coverage(&grammar, threshold, a.max_length)?;
        let r = chi2_fitness(&corpus.train, &table)?;
        println!(
            "chi2: statistic {:.4}, dof {}, p {:.4}, n {}",
            r.statistic, r.degrees_of_freedom, r.p_value, r.observations
        );
    }
    Ok(())
}

fn enumerate_checked(
    grammar: &Grammar,
    c: &CoverageArgs,
    ks: &[usize],
) -> Result<orderprobe::SentenceTable, CliError> {
    check_threshold(c.threshold)?;
    check_ks(ks)?;
    Ok(enumerate_to_coverage(grammar, c.threshold, c.max_length)?)
}

fn oracle_cmd(a: OracleArgs) -> Result<(), CliError> {
    let (grammar, _) = load_grammar(&a.grammar)?;
    let table = enumerate_checked(&grammar, &a.coverage, &a.masks.ks)?;
    let refs = build_references(&table, &a.masks.ks)?;
    let mut out = Artifacts::create(&a.out_dir)?;
    out.write("vocab.txt", &grammar.vocabulary().to_file_string())?;
    out.write("sentences.tsv", &table.to_tsv())?;
    for r in &refs {
        write_reference_tables(&mut out, r)?;
        println!(
            "k={}: {} ordered instances, {} classes",
            r.k,
            r.ordered.len(),
            r.unordered.len()
        );
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), CliError> {
    let (grammar, _) = load_grammar(&a.grammar)?;
    let table = enumerate_checked(&grammar, &a.coverage, &a.masks.ks)?;
    let refs = build_references(&table, &a.masks.ks)?;
    let w = weighting(&a.scoring);
    let reports = refs
        .iter()
        .map(|r| report(r, w))
        .collect::<Result<Vec<_>, _>>()?;
    eprint!("{}", summary_table(&reports));
    emit(a.output.as_deref(), &reports_to_csv(&reports))
}

fn export_cmd(a: ExportArgs) -> Result<(), CliError> {
    let (grammar, _) = load_grammar(&a.grammar)?;
    let table = enumerate_checked(&grammar, &a.coverage, &a.masks.ks)?;
    let refs = build_references(&table, &a.masks.ks)?;
    let mut out = Artifacts::create(&a.out_dir)?;
    out.write("vocab.txt", &grammar.vocabulary().to_file_string())?;
    for r in &refs {
        write_eval_files(&mut out, &table, r)?;
    }
    if a.reference_predictions {
        write_reference_predictions(&mut out, &refs)?;
    }
    for (path, hash) in out.hashes() {
        println!("{hash}  {path}");
    }
    Ok(())
}

fn score_cmd(a: ScoreArgs) -> Result<(), CliError> {
    let rows = cmd_score(&ScoreConfig {
        run_dir: a.run_dir,
        predictions: a.predictions,
        model_name: a.model_name,
        ks: a.ks,
        floor: a.floor,
    })?;
    let to_stdout = a.output.is_none();
    for r in &rows {
        let m = &r.metrics;
        let verdict = match better_fit(m) {
            "tie" => "fits both references equally".to_string(),
            which => format!("fits the {which} reference better"),
        };
        let line = format!(
            "k={}: {} {verdict} (kl_ordered {:.6}, kl_unordered {:.6})",
            r.k, m.name, m.kl_ordered, m.kl_unordered
        );
        if to_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
    emit(a.output.as_deref(), &score_csv(&rows))
}

fn pipeline_cmd(a: PipelineArgs) -> Result<(), CliError> {
    let corpus = (a.train + a.validation + a.test > 0).then_some((a.train, a.validation, a.test));
    let config = RunConfig {
        grammar: a.grammar,
        threshold: a.coverage.threshold,
        ks: a.masks.ks,
        max_length: a.coverage.max_length,
        out_dir: a.out_dir,
        seed: a.seed,
        weighting: weighting(&a.scoring),
        floor: a.scoring.floor,
        corpus,
        reference_predictions: a.reference_predictions,
    };
    let summary = cmd_pipeline(&config)?;
    println!(
        "{} sentences, covered mass {:.6}",
        summary.sentences, summary.covered_mass
    );
    print!("{}", summary_table(&summary.reports));
    println!("artifacts written to {}", config.out_dir.display());
    Ok(())
}
