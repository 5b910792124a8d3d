//! Corpus ingestion: tokenization, candidate phrase extraction, and loaders
//! for JSONL collections, 20-Newsgroups style directory trees, and
//! background document-frequency tables.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Default longest n-gram emitted as a candidate phrase.
pub const DEFAULT_MAX_PHRASE_LEN: usize = 3;

#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::from_words(ENGLISH_STOPWORDS.lines())
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_words(
            text.lines().filter(|l| !l.trim_start().starts_with('#')),
        ))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Punctuation that ends a phrase. Hyphens, apostrophes, slashes and the
/// like only split tokens.
fn is_phrase_break(c: char) -> bool {
    matches!(
        c,
        '.' | ','
            | ';'
            | ':'
            | '!'
            | '?'
            | '('
            | ')'
            | '['
            | ']'
            | '{'
            | '}'
            | '"'
            | '<'
            | '>'
            | '|'
            | '\u{2026}'
            | '\u{201C}'
            | '\u{201D}'
    )
}

fn keep_token(token: &str, stopwords: &Stopwords) -> bool {
    token.chars().nth(1).is_some()
        && !token.chars().all(char::is_numeric)
        && !stopwords.contains(token)
}

/// Splits `text` into runs of kept tokens. A run ends at phrase punctuation,
/// at a stopword, or at a dropped token (single character, numeric).
pub fn segment(text: &str, stopwords: &Stopwords) -> Vec<Vec<String>> {
    let mut segments = Vec::new();
    let mut run: Vec<String> = Vec::new();
    let mut current = String::new();

    let finish_token = |current: &mut String, run: &mut Vec<String>, segments: &mut Vec<_>| {
        if current.is_empty() {
            return;
        }
        let token = std::mem::take(current);
        if keep_token(&token, stopwords) {
            run.push(token);
        } else if !run.is_empty() {
            segments.push(std::mem::take(run));
        }
    };

    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            continue;
        }
        finish_token(&mut current, &mut run, &mut segments);
        if is_phrase_break(c) && !run.is_empty() {
            segments.push(std::mem::take(&mut run));
        }
    }
    finish_token(&mut current, &mut run, &mut segments);
    if !run.is_empty() {
        segments.push(run);
    }
    segments
}

/// Lowercased single-term stream with stopwords, one-character tokens and
/// purely numeric tokens removed.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    segment(text, stopwords).into_iter().flatten().collect()
}

/// Counts every candidate occurrence: each token plus each contiguous
/// n-gram (2..=max_phrase_len) inside a segment.
fn candidate_counts(segments: &[Vec<String>], max_phrase_len: usize) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for seg in segments {
        for start in 0..seg.len() {
            let longest = max_phrase_len.min(seg.len() - start);
            for n in 1..=longest {
                let term = seg[start..start + n].join(" ");
                *counts.entry(term).or_insert(0) += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    pub labels: BTreeSet<String>,
    /// Kept single tokens in text order.
    pub tokens: Vec<String>,
    /// Start offsets into `tokens` of each phrase segment.
    segment_starts: Vec<usize>,
    /// Occurrence counts of every candidate term (single tokens and phrases).
    pub term_freq: BTreeMap<String, u32>,
    /// Number of single tokens.
    pub length: usize,
}

impl Document {
    /// Title and body are concatenated before tokenization.
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
        labels: impl IntoIterator<Item = String>,
        stopwords: &Stopwords,
        max_phrase_len: usize,
    ) -> Self {
        let title = title.into();
        let body = body.into();
        let text = if title.is_empty() {
            body.clone()
        } else {
            // title and body joined across a phrase break
            format!("{title}.\n{body}")
        };
        let segments = segment(&text, stopwords);
        let term_freq = candidate_counts(&segments, max_phrase_len.max(1));
        let mut segment_starts = Vec::with_capacity(segments.len());
        let mut tokens = Vec::new();
        for seg in segments {
            segment_starts.push(tokens.len());
            tokens.extend(seg);
        }
        let length = tokens.len();
        Document {
            id: id.into(),
            title,
            body,
            labels: labels.into_iter().collect(),
            tokens,
            segment_starts,
            term_freq,
            length,
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = &[String]> + '_ {
        let ends = self
            .segment_starts
            .iter()
            .skip(1)
            .copied()
            .chain(std::iter::once(self.tokens.len()));
        self.segment_starts
            .iter()
            .zip(ends)
            .map(move |(&s, e)| &self.tokens[s..e])
    }

    pub fn tf(&self, term: &str) -> u32 {
        self.term_freq.get(term).copied().unwrap_or(0)
    }
}

/// Single non-stopword tokens plus stopword/punctuation-bounded n-grams of
/// length `2..=max_phrase_len`, space joined.
pub fn extract_candidates(document: &Document, max_phrase_len: usize) -> BTreeSet<String> {
    let segments: Vec<Vec<String>> = document.segments().map(<[String]>::to_vec).collect();
    candidate_counts(&segments, max_phrase_len.max(1))
        .into_keys()
        .collect()
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Document frequency of every candidate term.
    pub df: BTreeMap<String, usize>,
    pub max_phrase_len: usize,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, max_phrase_len: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        let mut df = BTreeMap::new();
        for doc in &documents {
            for term in doc.term_freq.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
        }
        Ok(Corpus {
            documents,
            df,
            max_phrase_len,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn avg_len(&self) -> f64 {
        if self.documents.is_empty() {
            return 0.0;
        }
        let total: usize = self.documents.iter().map(|d| d.length).sum();
        total as f64 / self.documents.len() as f64
    }

    /// Document frequency of each label.
    pub fn label_df(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for doc in &self.documents {
            for label in &doc.labels {
                *out.entry(label.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn has_labels(&self) -> bool {
        self.documents.iter().any(|d| !d.labels.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    TwentyNewsDir,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "twenty_news_dir" | "20news" => Ok(CorpusFormat::TwentyNewsDir),
            other => Err(Error::param(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub stopwords: Stopwords,
    pub max_phrase_len: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            stopwords: Stopwords::english(),
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
        }
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    labels: Vec<String>,
}

pub fn load_corpus(path: &Path, format: CorpusFormat, options: &LoadOptions) -> Result<Corpus> {
    if options.max_phrase_len == 0 {
        return Err(Error::param("max_phrase_len must be at least 1"));
    }
    let documents = match format {
        CorpusFormat::Jsonl => load_jsonl(path, options)?,
        CorpusFormat::TwentyNewsDir => load_twenty_news(path, options)?,
    };
    Corpus::new(documents, options.max_phrase_len)
}

fn load_jsonl(path: &Path, options: &LoadOptions) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    lines
        .par_iter()
        .map(|&(lineno, line)| {
            let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
                record: format!("{}:{}", path.display(), lineno + 1),
                reason: e.to_string(),
            })?;
            Ok(Document::new(
                rec.id,
                rec.title,
                rec.text,
                rec.labels,
                &options.stopwords,
                options.max_phrase_len,
            ))
        })
        .collect()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

/// Splits a Usenet post into (subject, body). Headers end at the first blank
/// line; only the Subject header is kept.
fn split_post(raw: &str) -> (String, String) {
    let looks_like_headers = raw
        .lines()
        .next()
        .is_some_and(|l| l.split_once(':').is_some_and(|(k, _)| !k.contains(' ') && !k.is_empty()));
    if !looks_like_headers {
        return (String::new(), raw.to_string());
    }
    let mut subject = String::new();
    let mut lines = raw.lines();
    for line in lines.by_ref() {
        if line.trim().is_empty() {
            break;
        }
        if let Some((key, value)) = line.split_once(':') {
            if key.eq_ignore_ascii_case("subject") {
                subject = value.trim().to_string();
            }
        }
    }
    let body: Vec<&str> = lines.collect();
    (subject, body.join("\n"))
}

fn load_twenty_news(root: &Path, options: &LoadOptions) -> Result<Vec<Document>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    // either root/group/post or root/split/group/post (train/test layouts)
    let mut files = Vec::new();
    for top in sorted_entries(root)? {
        if !top.is_dir() {
            continue;
        }
        let top_name = dir_name(&top);
        let nested: Vec<PathBuf> = sorted_entries(&top)?.into_iter().filter(|p| p.is_dir()).collect();
        let groups = if nested.is_empty() {
            vec![(String::new(), top)]
        } else {
            nested.into_iter().map(|g| (format!("{top_name}/"), g)).collect()
        };
        for (prefix, group_dir) in groups {
            let group = dir_name(&group_dir);
            for file in sorted_entries(&group_dir)? {
                if file.is_file() {
                    files.push((group.clone(), format!("{prefix}{group}"), file));
                }
            }
        }
    }
    files
        .par_iter()
        .map(|(group, id_prefix, file)| {
            let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
            let raw = String::from_utf8_lossy(&bytes);
            let (title, body) = split_post(&raw);
            let name = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Document::new(
                format!("{id_prefix}/{name}"),
                title,
                body,
                [group.clone()],
                &options.stopwords,
                options.max_phrase_len,
            ))
        })
        .collect()
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Document counts of terms in a reference collection.
#[derive(Debug, Clone, Default)]
pub struct BackgroundStats {
    pub universe_size: u64,
    pub term_counts: HashMap<String, u64>,
}

impl BackgroundStats {
    /// Header `#universe<TAB>M`, then `term<TAB>count` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let malformed = |lineno: usize, reason: &str| Error::Malformed {
            record: format!("{origin}:{}", lineno + 1),
            reason: reason.to_string(),
        };
        let (hno, header) = lines.next().ok_or_else(|| malformed(0, "empty background file"))?;
        let universe_size = header
            .strip_prefix("#universe\t")
            .and_then(|m| m.trim().parse::<u64>().ok())
            .ok_or_else(|| malformed(hno, "expected `#universe<TAB>M` header"))?;
        let mut term_counts = HashMap::new();
        for (lineno, line) in lines {
            let (term, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| malformed(lineno, "expected `term<TAB>count`"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| malformed(lineno, "count is not a non-negative integer"))?;
            if count > universe_size {
                return Err(malformed(lineno, "count exceeds universe size"));
            }
            term_counts.insert(term.to_string(), count);
        }
        Ok(BackgroundStats {
            universe_size,
            term_counts,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn count(&self, term: &str) -> u64 {
        self.term_counts.get(term).copied().unwrap_or(0)
    }

    /// Terms whose focus document frequency exceeds their background count.
    /// These are tolerated (the count is clamped at use) but worth reporting.
    pub fn inconsistent_terms<'a>(
        &self,
        focus_df: impl IntoIterator<Item = (&'a String, &'a usize)>,
    ) -> Vec<String> {
        focus_df
            .into_iter()
            .filter(|(t, &df)| self.term_counts.get(*t).is_some_and(|&k| (df as u64) > k))
            .map(|(t, _)| t.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sw(words: &[&str]) -> Stopwords {
        Stopwords::from_words(words)
    }

    #[test]
    fn tokenize_splits_hyphens_and_drops_symbols() {
        let toks = tokenize("Anti-aging, NAD+ boosters!", &sw(&[]));
        assert_eq!(toks, ["anti", "aging", "nad", "boosters"]);
    }

    #[test]
    fn tokenize_all_stopwords_is_empty() {
        assert!(tokenize("the of and", &Stopwords::english()).is_empty());
        assert!(tokenize("", &Stopwords::english()).is_empty());
    }

    #[test]
    fn tokenize_drops_numbers_and_single_chars() {
        assert_eq!(tokenize("p53 2024 x", &sw(&[])), ["p53"]);
    }

    #[test]
    fn tokenize_is_idempotent_on_joined_output() {
        let s = Stopwords::english();
        let once = tokenize("The NAD+-boosting 'miracle' of 2024: anti–aging, über-Mäuse!", &s);
        let twice = tokenize(&once.join(" "), &s);
        assert_eq!(once, twice);
    }

    fn doc(text: &str, stop: &Stopwords) -> Document {
        Document::new("d", "", text, Vec::new(), stop, 3)
    }

    #[test]
    fn stopword_blocks_phrases() {
        let d = doc("gut microbiota of mice", &sw(&["of"]));
        let got = extract_candidates(&d, 3);
        let want: BTreeSet<String> = ["gut", "microbiota", "mice", "gut microbiota"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn single_token_has_no_phrases() {
        let d = doc("aging", &sw(&[]));
        assert_eq!(extract_candidates(&d, 3).len(), 1);
    }

    #[test]
    fn full_ngram_enumeration() {
        let d = doc("calorie restriction mimetic", &sw(&[]));
        let got: Vec<String> = extract_candidates(&d, 3).into_iter().collect();
        let mut want = vec![
            "calorie",
            "restriction",
            "mimetic",
            "calorie restriction",
            "restriction mimetic",
            "calorie restriction mimetic",
        ];
        want.sort();
        assert_eq!(got, want);
        assert_eq!(extract_candidates(&d, 1).len(), 3);
    }

    #[test]
    fn punctuation_blocks_phrases_but_hyphen_does_not() {
        let d = doc("anti-aging, boosters", &sw(&[]));
        let c = extract_candidates(&d, 3);
        assert!(c.contains("anti aging"));
        assert!(!c.contains("aging boosters"));
    }

    #[test]
    fn length_matches_single_token_counts() {
        let d = doc("gut microbiota gut flora. gut", &sw(&[]));
        let singles: u32 = d
            .term_freq
            .iter()
            .filter(|(t, _)| !t.contains(' '))
            .map(|(_, c)| *c)
            .sum();
        assert_eq!(d.length, 5);
        assert_eq!(singles as usize, d.length);
        assert_eq!(d.tf("gut"), 3);
        assert_eq!(d.tf("gut microbiota"), 1);
        assert!(d.term_freq.values().all(|&c| c > 0));
    }

    #[test]
    fn title_and_body_do_not_form_phrases_across() {
        let d = Document::new("a", "Sarcopenia", "muscle loss", Vec::new(), &sw(&[]), 3);
        let c = extract_candidates(&d, 3);
        assert!(c.contains("sarcopenia"));
        assert!(c.contains("muscle loss"));
        assert!(!c.contains("sarcopenia muscle"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = sw(&[]);
        let docs = vec![doc("one two", &s), doc("three four", &s)];
        let err = Corpus::new(docs, 3).unwrap_err();
        assert!(err.to_string().contains("duplicate document id"));
    }

    #[test]
    fn background_parse_and_validation() {
        let bg = BackgroundStats::parse("#universe\t100\naging\t10\ngut microbiota\t3\n", "bg").unwrap();
        assert_eq!(bg.universe_size, 100);
        assert_eq!(bg.count("gut microbiota"), 3);
        assert_eq!(bg.count("missing"), 0);

        assert!(BackgroundStats::parse("aging\t10\n", "bg").is_err());
        let err = BackgroundStats::parse("#universe\t5\naging\t10\n", "bg").unwrap_err();
        assert!(err.to_string().contains("bg:2"));
    }

    #[test]
    fn split_post_drops_headers() {
        let raw = "From: x@y.z\nNewsgroups: sci.space\nSubject: Re: orbital mechanics\n\nBody text here.\n";
        let (title, body) = split_post(raw);
        assert_eq!(title, "Re: orbital mechanics");
        assert!(!body.contains("sci.space"));
        assert!(body.contains("Body text"));
    }
}
