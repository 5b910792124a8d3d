//! `convextopics`: stage-by-stage and end-to-end topic modeling runs.
//!
//! Exit codes: 0 on success, 1 on usage or out-of-range settings, 2 on
//! runtime failures. Each completed stage prints one JSON line on stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use convex_topics::corpus::CorpusFormat;
use convex_topics::pipeline::{self, RunConfig, StageRecord};
use convex_topics::reduce;
use convex_topics::scoring::{from_records, to_records, ScoresRecord};
use convex_topics::solver::{fit, ModelFile};
use convex_topics::vocabulary::VocabularyExport;
use convex_topics::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "convextopics", version, about = "Exemplar-based convex topic modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and tokenize the corpus; writes corpus.json.
    Ingest(Settings),
    /// Select the vocabulary; writes vocabulary.json.
    Vocab(Settings),
    /// Build the Dice similarity matrix from vocabulary.json; writes similarity.bin.
    Similarity(Settings),
    /// Fit the exemplar prior; writes model.json.
    Fit(Settings),
    /// Rank documents per topic from model.json; writes scores.json.
    Score(Settings),
    /// Compute MaxMAP from model.json or external rankings; writes eval.json.
    Eval(EvalArgs),
    /// Run every stage and write all artifacts plus a manifest.
    Run(Settings),
    /// Render report.html from model.json, scores.json and eval.json.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    settings: Settings,
    /// Model file [default: <output>/model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// External rankings in the scores format; replaces model-based ranking.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    settings: Settings,
    /// Destination [default: <output>/report.html].
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Flags mirror the configuration file keys; flags override the file.
#[derive(Args, Debug, Default)]
struct Settings {
    /// Configuration file (TOML key = value layout).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Corpus path: a JSONL file or a directory of group folders.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Corpus format: jsonl or twenty_news_dir [default: jsonl].
    #[arg(long)]
    format: Option<CorpusFormat>,
    /// Background term counts (`#universe<TAB>M` header, then `term<TAB>count`).
    #[arg(long)]
    background: Option<PathBuf>,
    /// Background label counts for label qualification.
    #[arg(long)]
    label_background: Option<PathBuf>,
    /// Stopword file, one word per line [default: bundled English list].
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Longest candidate phrase in tokens [default: 3].
    #[arg(long)]
    max_phrase_len: Option<usize>,
    /// False discovery rate for term and label filtering [default: 0.01].
    #[arg(long)]
    fdr: Option<f64>,
    /// Minimum document frequency without a background [default: 5].
    #[arg(long)]
    min_df: Option<usize>,
    /// Maximum document-frequency ratio without a background [default: 0.5].
    #[arg(long)]
    max_df_ratio: Option<f64>,
    /// Dice similarity cutoff in [0, 1) [default: 0.05].
    #[arg(long)]
    cutoff: Option<f64>,
    /// Relative likelihood improvement counted as stalled [default: 1e-9].
    #[arg(long)]
    tol: Option<f64>,
    /// Stalled iterations before stopping [default: 3].
    #[arg(long)]
    patience: Option<usize>,
    /// Iteration cap [default: 10000].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative prune threshold in (0, 1) [default: 1e-6].
    #[arg(long)]
    prune_eps: Option<f64>,
    /// Optimality certificate tolerance [default: 1e-6].
    #[arg(long)]
    kkt_tol: Option<f64>,
    /// Extrapolated updates, true or false [default: true].
    #[arg(long)]
    accelerate: Option<bool>,
    /// Local weight saturation k > 0 [default: 1.0].
    #[arg(long)]
    k: Option<f64>,
    /// Length-normalize local weights, true or false [default: true].
    #[arg(long)]
    length_normalize: Option<bool>,
    /// Labels averaged in MaxMAP [default: min(1000, topic count)].
    #[arg(long)]
    top_n: Option<usize>,
    /// Minimum positives for a label without a label background [default: 5].
    #[arg(long)]
    min_positives: Option<usize>,
    /// Topics evaluated, highest prior first [default: 1000].
    #[arg(long)]
    max_topics: Option<usize>,
    /// Documents kept per topic in scores.json [default: 100].
    #[arg(long)]
    top_k: Option<usize>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory [default: out].
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Settings {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! merge {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        merge!(
            corpus, format, max_phrase_len, fdr, min_df, max_df_ratio, cutoff, tol, patience,
            max_iter, prune_eps, kkt_tol, accelerate, k, length_normalize, min_positives,
            max_topics, output
        );
        macro_rules! merge_opt {
            ($($field:ident),*) => {
                $(if self.$field.is_some() { cfg.$field = self.$field.clone(); })*
            };
        }
        merge_opt!(background, label_background, stopwords, top_n, top_k, threads);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(rec: &StageRecord) {
    println!("{}", serde_json::to_string(rec).expect("stage record serializes"));
}

fn done(stage: &str, start: Instant, detail: serde_json::Value) {
    emit(&StageRecord {
        stage: stage.to_string(),
        status: "ok".to_string(),
        millis: start.elapsed().as_millis() as u64,
        detail,
    });
}

fn ensure_output(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::Io {
        path: cfg.output.clone(),
        source: e,
    })
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "required input is missing"),
        })
    }
}

fn ingest(cfg: &RunConfig) -> Result<()> {
    ensure_output(cfg)?;
    let t = Instant::now();
    let corpus = pipeline::load_stage(cfg)?;
    let stats = pipeline::corpus_stats(&corpus);
    pipeline::write_json(&cfg.artifact(pipeline::CORPUS_STATS_FILE), &stats)?;
    done("load", t, serde_json::json!({ "documents": stats.n_docs, "candidates": stats.n_candidates }));
    Ok(())
}

fn vocab(cfg: &RunConfig) -> Result<()> {
    ensure_output(cfg)?;
    let t = Instant::now();
    let corpus = pipeline::load_stage(cfg)?;
    done("load", t, serde_json::json!({ "documents": corpus.n_docs() }));
    let t = Instant::now();
    let v = pipeline::vocabulary_stage(cfg, &corpus)?;
    pipeline::write_json(&cfg.artifact(pipeline::VOCABULARY_FILE), &v.to_export())?;
    done("vocabulary", t, serde_json::json!({ "terms": v.len() }));
    Ok(())
}

fn load_with_vocab(cfg: &RunConfig) -> Result<(convex_topics::corpus::Corpus, convex_topics::vocabulary::Vocabulary)> {
    let vocab_path = cfg.artifact(pipeline::VOCABULARY_FILE);
    require(&vocab_path)?;
    let t = Instant::now();
    let corpus = pipeline::load_stage(cfg)?;
    let v = pipeline::read_vocabulary(&vocab_path, &corpus)?;
    done("load", t, serde_json::json!({ "documents": corpus.n_docs(), "terms": v.len() }));
    Ok((corpus, v))
}

fn similarity(cfg: &RunConfig) -> Result<()> {
    let (_, v) = load_with_vocab(cfg)?;
    let t = Instant::now();
    let (s, cached) = pipeline::similarity_stage(cfg, &v)?;
    emit(&StageRecord {
        stage: "similarity".into(),
        status: if cached { "cached" } else { "ok" }.into(),
        millis: t.elapsed().as_millis() as u64,
        detail: serde_json::json!({ "n": s.n(), "nnz": s.nnz() }),
    });
    Ok(())
}

fn fit_cmd(cfg: &RunConfig) -> Result<()> {
    let (_, v) = load_with_vocab(cfg)?;
    let t = Instant::now();
    let (s, _) = pipeline::similarity_stage(cfg, &v)?;
    done("similarity", t, serde_json::json!({ "n": s.n(), "nnz": s.nnz() }));
    let t = Instant::now();
    let model = fit(&s, &cfg.solver_config())?;
    pipeline::write_json(&cfg.artifact(pipeline::MODEL_FILE), &ModelFile::new(&model, &v))?;
    done(
        "fit",
        t,
        serde_json::json!({
            "topics": model.n_topics(),
            "iterations": model.iterations,
            "converged": model.converged,
            "loglik": model.loglik_final,
        }),
    );
    Ok(())
}

fn read_model(path: &Path) -> Result<convex_topics::solver::TopicModel> {
    require(path)?;
    pipeline::read_json::<ModelFile>(path)?.into_model()
}

fn score(cfg: &RunConfig) -> Result<()> {
    let model_path = cfg.artifact(pipeline::MODEL_FILE);
    require(&model_path)?;
    let (corpus, v) = load_with_vocab(cfg)?;
    let model = read_model(&model_path)?;
    let t = Instant::now();
    let rankings = pipeline::rank_stage(cfg, &corpus, &v, &model)?;
    let records = to_records(&rankings, &corpus, cfg.top_k);
    pipeline::write_json(&cfg.artifact(pipeline::SCORES_FILE), &records)?;
    done("rank", t, serde_json::json!({ "topics": records.len() }));
    Ok(())
}

fn eval(cfg: &RunConfig, model_path: Option<&Path>, scores: Option<&Path>) -> Result<()> {
    let model_path = model_path.map(Path::to_path_buf).unwrap_or_else(|| cfg.artifact(pipeline::MODEL_FILE));
    let model = match (scores, model_path.exists()) {
        (Some(_), false) => None,
        _ => Some(read_model(&model_path)?),
    };
    ensure_output(cfg)?;
    let t = Instant::now();
    let corpus = pipeline::load_stage(cfg)?;
    done("load", t, serde_json::json!({ "documents": corpus.n_docs() }));
    let rankings = match scores {
        Some(p) => {
            require(p)?;
            let records: Vec<ScoresRecord> = pipeline::read_json(p)?;
            from_records(&records, &corpus)?
        }
        None => {
            let vocab_path = cfg.artifact(pipeline::VOCABULARY_FILE);
            require(&vocab_path)?;
            let v = pipeline::read_vocabulary(&vocab_path, &corpus)?;
            let t = Instant::now();
            let model = model.as_ref().expect("model is loaded without external scores");
            let r = pipeline::rank_stage(cfg, &corpus, &v, model)?;
            done("rank", t, serde_json::json!({ "topics": r.len() }));
            r
        }
    };
    let t = Instant::now();
    let report = pipeline::evaluate_stage(cfg, &corpus, model.as_ref(), &rankings)?;
    pipeline::write_json(&cfg.artifact(pipeline::EVAL_FILE), &report)?;
    done("evaluate", t, serde_json::json!({ "maxmap": report.maxmap, "n_used": report.n_used }));
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<()> {
    pipeline::run_pipeline(cfg, &mut |rec| emit(rec))?;
    Ok(())
}

fn report(cfg: &RunConfig, dest: Option<&Path>) -> Result<()> {
    let t = Instant::now();
    let model_path = cfg.artifact(pipeline::MODEL_FILE);
    let vocab_path = cfg.artifact(pipeline::VOCABULARY_FILE);
    let scores_path = cfg.artifact(pipeline::SCORES_FILE);
    for p in [&model_path, &vocab_path, &scores_path] {
        require(p)?;
    }
    let model: ModelFile = pipeline::read_json(&model_path)?;
    let vocab: VocabularyExport = pipeline::read_json(&vocab_path)?;
    let terms: Vec<String> = vocab.terms.into_iter().map(|t| t.term).collect();
    let scores: Vec<ScoresRecord> = pipeline::read_json(&scores_path)?;
    let eval_path = cfg.artifact(pipeline::EVAL_FILE);
    let eval = if eval_path.exists() {
        Some(pipeline::read_json(&eval_path)?)
    } else {
        None
    };
    let dest = dest.map(Path::to_path_buf).unwrap_or_else(|| cfg.artifact(pipeline::REPORT_FILE));
    pipeline::write_report(&dest, &model, &terms, &scores, eval.as_ref())?;
    done("report", t, serde_json::json!({ "path": dest, "topics": model.topics.len() }));
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    let settings = match command {
        Command::Ingest(s)
        | Command::Vocab(s)
        | Command::Similarity(s)
        | Command::Fit(s)
        | Command::Score(s)
        | Command::Run(s) => s,
        Command::Eval(a) => &a.settings,
        Command::Report(a) => &a.settings,
    };
    let cfg = match command {
        // the report reads artifacts only; the corpus path is not checked
        Command::Report(_) => {
            let mut s = RunConfig::default();
            if let Some(p) = &settings.config {
                s = RunConfig::from_file(p)?;
            }
            if let Some(o) = &settings.output {
                s.output = o.clone();
            }
            s.validate_values()?;
            s
        }
        _ => settings.resolve()?,
    };
    reduce::with_threads(cfg.threads, || match command {
        Command::Ingest(_) => ingest(&cfg),
        Command::Vocab(_) => vocab(&cfg),
        Command::Similarity(_) => similarity(&cfg),
        Command::Fit(_) => fit_cmd(&cfg),
        Command::Score(_) => score(&cfg),
        Command::Eval(a) => eval(&cfg, a.model.as_deref(), a.scores.as_deref()),
        Command::Run(_) => run(&cfg),
        Command::Report(a) => report(&cfg, a.report.as_deref()),
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
