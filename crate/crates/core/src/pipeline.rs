//! End-to-end run from a single flat configuration.
//!
//! Stages run in order (load, vocabulary, similarity, fit, rank, evaluate)
//! and every artifact lands in the output directory together with a
//! manifest recording the configuration, input digests and stage timings.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, BackgroundStats, Corpus, CorpusFormat, LoadOptions, Stopwords};
use crate::error::{Error, Result};
use crate::evaluation::{maxmap, EvalConfig, EvalReport, DEFAULT_MAX_TOPICS, DEFAULT_MIN_POSITIVES};
use crate::reduce;
use crate::report::render_report;
use crate::scoring::{rank_documents, to_records, DocumentScore, LocalWeightConfig, ScoresRecord};
use crate::similarity::{build_similarity, SparseSimilarity, DEFAULT_CUTOFF};
use crate::solver::{fit, ModelFile, SolverConfig, TopicModel};
use crate::vocabulary::{
    build_vocabulary, VocabParams, Vocabulary, VocabularyExport, DEFAULT_FDR, DEFAULT_MAX_DF_RATIO, DEFAULT_MIN_DF,
};

pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const SIMILARITY_FILE: &str = "similarity.bin";
pub const SIMILARITY_KEY_FILE: &str = "similarity.key";
pub const MODEL_FILE: &str = "model.json";
pub const SCORES_FILE: &str = "scores.json";
pub const EVAL_FILE: &str = "eval.json";
pub const REPORT_FILE: &str = "report.html";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CORPUS_STATS_FILE: &str = "corpus.json";

pub const STAGES: [&str; 6] = ["load", "vocabulary", "similarity", "fit", "rank", "evaluate"];

/// Every tunable of a run. Relative paths in a config file are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub format: CorpusFormat,
    /// Background term counts; without it the vocabulary uses a df band.
    pub background: Option<PathBuf>,
    /// Background label counts for label qualification.
    pub label_background: Option<PathBuf>,
    /// One stopword per line; the bundled English list otherwise.
    pub stopwords: Option<PathBuf>,
    pub max_phrase_len: usize,
    pub fdr: f64,
    pub min_df: usize,
    pub max_df_ratio: f64,
    pub cutoff: f64,
    pub tol: f64,
    pub patience: usize,
    pub max_iter: usize,
    pub prune_eps: f64,
    pub kkt_tol: f64,
    pub accelerate: bool,
    pub k: f64,
    pub length_normalize: bool,
    pub top_n: Option<usize>,
    pub min_positives: usize,
    pub max_topics: usize,
    /// Entries kept per topic in the scores file.
    pub top_k: Option<usize>,
    pub threads: Option<usize>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        RunConfig {
            corpus: PathBuf::new(),
            format: CorpusFormat::Jsonl,
            background: None,
            label_background: None,
            stopwords: None,
            max_phrase_len: 3,
            fdr: DEFAULT_FDR,
            min_df: DEFAULT_MIN_DF,
            max_df_ratio: DEFAULT_MAX_DF_RATIO,
            cutoff: DEFAULT_CUTOFF,
            tol: solver.tol,
            patience: solver.patience,
            max_iter: solver.max_iter,
            prune_eps: solver.prune_eps,
            kkt_tol: solver.kkt_tol,
            accelerate: solver.accelerate,
            k: 1.0,
            length_normalize: true,
            top_n: None,
            min_positives: DEFAULT_MIN_POSITIVES,
            max_topics: DEFAULT_MAX_TOPICS,
            top_k: Some(100),
            threads: None,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::param(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output);
        for p in [&mut self.background, &mut self.label_background, &mut self.stopwords]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn vocab_params(&self) -> VocabParams {
        VocabParams {
            fdr: self.fdr,
            min_df: self.min_df,
            max_df_ratio: self.max_df_ratio,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            patience: self.patience,
            max_iter: self.max_iter,
            prune_eps: self.prune_eps,
            kkt_tol: self.kkt_tol,
            accelerate: self.accelerate,
            threads: None,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            top_n: self.top_n,
            min_positives: self.min_positives,
            fdr: self.fdr,
            max_topics: self.max_topics,
        }
    }

    /// Checks numeric ranges only.
    pub fn validate_values(&self) -> Result<()> {
        if self.max_phrase_len == 0 {
            return Err(Error::param("max_phrase_len must be at least 1"));
        }
        self.vocab_params().validate()?;
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(Error::param(format!("cutoff must be in [0, 1), got {}", self.cutoff)));
        }
        self.solver_config().validate()?;
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::param(format!("k must be > 0, got {}", self.k)));
        }
        self.eval_config().validate()?;
        if self.top_k == Some(0) {
            return Err(Error::param("top_k must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads must be at least 1"));
        }
        Ok(())
    }

    /// Checks numeric ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        if self.corpus.as_os_str().is_empty() {
            return Err(Error::param("corpus path is required"));
        }
        for (name, path) in [
            ("corpus", Some(&self.corpus)),
            ("background", self.background.as_ref()),
            ("label_background", self.label_background.as_ref()),
            ("stopwords", self.stopwords.as_ref()),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::param(format!("{name} path does not exist: {}", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// `ok`, `cached` or `skipped`.
    pub status: String,
    pub millis: u64,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<String>,
}

pub struct PipelineOutput {
    pub corpus: Corpus,
    pub vocabulary: Vocabulary,
    pub similarity: SparseSimilarity,
    pub model: TopicModel,
    pub rankings: Vec<DocumentScore>,
    pub eval: Option<EvalReport>,
    pub manifest: Manifest,
}

fn stage_err(stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage,
        source: Box::new(e),
    }
}

/// SHA-256 of a file, or of a directory's sorted relative paths and file
/// contents.
pub fn digest_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in files {
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
            hasher.update(hash_file(&path.join(&rel))?.as_bytes());
        }
    } else {
        return hash_file(path);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn hash_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub avg_len: f64,
    pub n_candidates: usize,
    pub labels: std::collections::BTreeMap<String, usize>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    CorpusStats {
        n_docs: corpus.n_docs(),
        avg_len: corpus.avg_len(),
        n_candidates: corpus.df.len(),
        labels: corpus.label_df(),
    }
}

pub fn load_stage(cfg: &RunConfig) -> Result<Corpus> {
    let stopwords = match &cfg.stopwords {
        Some(p) => Stopwords::from_file(p)?,
        None => Stopwords::english(),
    };
    let opts = LoadOptions {
        stopwords,
        max_phrase_len: cfg.max_phrase_len,
    };
    load_corpus(&cfg.corpus, cfg.format, &opts)
}

pub fn vocabulary_stage(cfg: &RunConfig, corpus: &Corpus) -> Result<Vocabulary> {
    let background = cfg.background.as_deref().map(BackgroundStats::load).transpose()?;
    if let Some(bg) = &background {
        let bad = bg.inconsistent_terms(&corpus.df);
        if !bad.is_empty() {
            log::warn!("{} terms are more frequent in the corpus than in the background", bad.len());
        }
    }
    build_vocabulary(corpus, background.as_ref(), &cfg.vocab_params())
}

/// Key of the cached similarity matrix: the vocabulary export and the cutoff.
pub fn similarity_key(vocab: &Vocabulary, cutoff: f64) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(b"similarity-v1\0");
    hasher.update(serde_json::to_vec(&vocab.to_export())?);
    hasher.update(cutoff.to_le_bytes());
    Ok(hex::encode(hasher.finalize()))
}

/// Builds the similarity matrix, reusing the cached one in the output
/// directory when its key matches. Returns whether the cache was used.
pub fn similarity_stage(cfg: &RunConfig, vocab: &Vocabulary) -> Result<(SparseSimilarity, bool)> {
    let key = similarity_key(vocab, cfg.cutoff)?;
    let bin = cfg.artifact(SIMILARITY_FILE);
    let key_path = cfg.artifact(SIMILARITY_KEY_FILE);
    if fs::read_to_string(&key_path).map(|k| k.trim() == key).unwrap_or(false) {
        match SparseSimilarity::read(&bin) {
            Ok(s) if s.n() == vocab.len() => return Ok((s, true)),
            Ok(_) => log::warn!("cached similarity has the wrong size; rebuilding"),
            Err(e) => log::warn!("cached similarity unreadable ({e}); rebuilding"),
        }
    }
    let s = build_similarity(vocab, cfg.cutoff)?;
    s.write(&bin)?;
    fs::write(&key_path, format!("{key}\n")).map_err(|e| Error::io(&key_path, e))?;
    Ok((s, false))
}

pub fn rank_stage(cfg: &RunConfig, corpus: &Corpus, vocab: &Vocabulary, model: &TopicModel) -> Result<Vec<DocumentScore>> {
    let lw = LocalWeightConfig::for_corpus(corpus, cfg.k, cfg.length_normalize)?;
    rank_documents(corpus, vocab, model, &lw, None)
}

pub fn evaluate_stage(
    cfg: &RunConfig,
    corpus: &Corpus,
    model: Option<&TopicModel>,
    rankings: &[DocumentScore],
) -> Result<EvalReport> {
    let label_bg = cfg.label_background.as_deref().map(BackgroundStats::load).transpose()?;
    maxmap(corpus, model, rankings, &cfg.eval_config(), label_bg.as_ref())
}

pub fn write_report(
    path: &Path,
    model: &ModelFile,
    terms: &[String],
    scores: &[ScoresRecord],
    eval: Option<&EvalReport>,
) -> Result<()> {
    let html = render_report(model, terms, scores, eval);
    fs::write(path, html).map_err(|e| Error::io(path, e))
}

struct Timer<'a> {
    stages: Vec<StageRecord>,
    on_stage: &'a mut (dyn FnMut(&StageRecord) + Send),
}

impl Timer<'_> {
    fn record(&mut self, stage: &str, status: &str, start: Instant, detail: serde_json::Value) {
        let rec = StageRecord {
            stage: stage.to_string(),
            status: status.to_string(),
            millis: start.elapsed().as_millis() as u64,
            detail,
        };
        (self.on_stage)(&rec);
        self.stages.push(rec);
    }
}

/// Runs every stage, writing artifacts into `config.output`. `on_stage` is
/// called after each stage completes.
pub fn run_pipeline(config: &RunConfig, on_stage: &mut (dyn FnMut(&StageRecord) + Send)) -> Result<PipelineOutput> {
    config.validate()?;
    reduce::with_threads(config.threads, || run_stages(config, on_stage))?
}

fn run_stages(cfg: &RunConfig, on_stage: &mut (dyn FnMut(&StageRecord) + Send)) -> Result<PipelineOutput> {
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let mut inputs = Vec::new();
    for (role, path) in [
        ("corpus", Some(&cfg.corpus)),
        ("background", cfg.background.as_ref()),
        ("label_background", cfg.label_background.as_ref()),
        ("stopwords", cfg.stopwords.as_ref()),
    ] {
        if let Some(p) = path {
            inputs.push(InputDigest {
                role: role.to_string(),
                path: p.clone(),
                sha256: digest_path(p)?,
            });
        }
    }
    let mut timer = Timer {
        stages: Vec::new(),
        on_stage,
    };
    let mut artifacts = Vec::new();

    let t = Instant::now();
    let corpus = load_stage(cfg).map_err(stage_err("load"))?;
    write_json(&cfg.artifact(CORPUS_STATS_FILE), &corpus_stats(&corpus)).map_err(stage_err("load"))?;
    artifacts.push(CORPUS_STATS_FILE);
    timer.record(
        "load",
        "ok",
        t,
        serde_json::json!({ "documents": corpus.n_docs(), "candidates": corpus.df.len() }),
    );

    let t = Instant::now();
    let vocabulary = vocabulary_stage(cfg, &corpus).map_err(stage_err("vocabulary"))?;
    write_json(&cfg.artifact(VOCABULARY_FILE), &vocabulary.to_export()).map_err(stage_err("vocabulary"))?;
    artifacts.push(VOCABULARY_FILE);
    timer.record(
        "vocabulary",
        "ok",
        t,
        serde_json::json!({ "terms": vocabulary.len(), "mode": if cfg.background.is_some() { "enrichment" } else { "df_band" } }),
    );

    let t = Instant::now();
    let (similarity, cached) = similarity_stage(cfg, &vocabulary).map_err(stage_err("similarity"))?;
    artifacts.push(SIMILARITY_FILE);
    artifacts.push(SIMILARITY_KEY_FILE);
    timer.record(
        "similarity",
        if cached { "cached" } else { "ok" },
        t,
        serde_json::json!({ "n": similarity.n(), "nnz": similarity.nnz(), "density": similarity.density() }),
    );

    let t = Instant::now();
    let model = fit(&similarity, &cfg.solver_config()).map_err(stage_err("fit"))?;
    let model_file = ModelFile::new(&model, &vocabulary);
    write_json(&cfg.artifact(MODEL_FILE), &model_file).map_err(stage_err("fit"))?;
    artifacts.push(MODEL_FILE);
    timer.record(
        "fit",
        "ok",
        t,
        serde_json::json!({
            "topics": model.n_topics(),
            "iterations": model.iterations,
            "converged": model.converged,
            "loglik": model.loglik_final,
        }),
    );

    let t = Instant::now();
    let rankings = rank_stage(cfg, &corpus, &vocabulary, &model).map_err(stage_err("rank"))?;
    let records = to_records(&rankings, &corpus, cfg.top_k);
    write_json(&cfg.artifact(SCORES_FILE), &records).map_err(stage_err("rank"))?;
    artifacts.push(SCORES_FILE);
    timer.record("rank", "ok", t, serde_json::json!({ "topics": rankings.len() }));

    let t = Instant::now();
    let eval = if corpus.has_labels() {
        let report = evaluate_stage(cfg, &corpus, Some(&model), &rankings).map_err(stage_err("evaluate"))?;
        write_json(&cfg.artifact(EVAL_FILE), &report).map_err(stage_err("evaluate"))?;
        artifacts.push(EVAL_FILE);
        timer.record(
            "evaluate",
            "ok",
            t,
            serde_json::json!({ "maxmap": report.maxmap, "n_used": report.n_used }),
        );
        Some(report)
    } else {
        let _ = fs::remove_file(cfg.artifact(EVAL_FILE));
        timer.record("evaluate", "skipped", t, serde_json::json!({ "reason": "corpus has no labels" }));
        None
    };

    write_report(
        &cfg.artifact(REPORT_FILE),
        &model_file,
        &vocabulary.terms,
        &records,
        eval.as_ref(),
    )?;
    artifacts.push(REPORT_FILE);
    artifacts.push(MANIFEST_FILE);

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        inputs,
        stages: timer.stages,
        artifacts: artifacts.into_iter().map(String::from).collect(),
    };
    write_json(&cfg.artifact(MANIFEST_FILE), &manifest)?;

    Ok(PipelineOutput {
        corpus,
        vocabulary,
        similarity,
        model,
        rankings,
        eval,
        manifest,
    })
}

/// Reads a vocabulary export and rebuilds postings against `corpus`.
pub fn read_vocabulary(path: &Path, corpus: &Corpus) -> Result<Vocabulary> {
    let export: VocabularyExport = read_json(path)?;
    Vocabulary::from_export(&export, corpus)
}
