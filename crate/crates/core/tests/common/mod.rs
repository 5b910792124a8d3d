//! Shared generators and exact-arithmetic helpers for integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use convex_topics::corpus::{Corpus, Document, Stopwords};
use convex_topics::similarity::SparseSimilarity;
use convex_topics::vocabulary::{build_vocabulary, VocabParams, Vocabulary};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric sparse similarity with unit diagonal, off-diagonal values in
/// `[0.05, 1)` and the given density of off-diagonal pairs.
pub fn random_similarity(rng: &mut ChaCha8Rng, n: usize, density: f64) -> SparseSimilarity {
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < density {
                let v = rng.gen_range(0.05..1.0);
                rows[i].push((j, v));
                rows[j].push((i, v));
            }
        }
    }
    SparseSimilarity::from_rows(rows, 0.05).expect("valid random similarity")
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = q.iter().sum();
    q.into_iter().map(|v| v / total).collect()
}

pub fn no_stopwords() -> Stopwords {
    Stopwords::from_words(Vec::<String>::new())
}

/// Documents built from explicit token lists (single-token terms only).
pub fn corpus_from_tokens(docs: &[Vec<String>]) -> Corpus {
    let stop = no_stopwords();
    let documents = docs
        .iter()
        .enumerate()
        .map(|(d, toks)| Document::new(format!("doc{d:04}"), "", toks.join(" "), Vec::new(), &stop, 1))
        .collect();
    Corpus::new(documents, 1).expect("unique ids")
}

/// Vocabulary keeping every term.
pub fn full_vocabulary(corpus: &Corpus) -> Vocabulary {
    let params = VocabParams {
        min_df: 1,
        max_df_ratio: 1.0,
        ..Default::default()
    };
    build_vocabulary(corpus, None, &params).expect("non-empty vocabulary")
}

/// Random small corpus over a vocabulary of `terms` two-letter words.
pub fn random_token_docs(rng: &mut ChaCha8Rng, n_docs: usize, terms: usize, max_len: usize) -> Vec<Vec<String>> {
    (0..n_docs)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| word(rng.gen_range(0..terms))).collect()
        })
        .collect()
}

pub fn word(i: usize) -> String {
    let a = (b'a' + (i / 26) as u8) as char;
    let b = (b'a' + (i % 26) as u8) as char;
    format!("q{a}{b}")
}

pub fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact value of an f64 as a rational.
pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

pub fn binom(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Exact `P(X ≥ k)` for `X ~ Hypergeometric(total, successes, draws)`.
pub fn hypergeom_sf_exact(total: u64, successes: u64, draws: u64, k: u64) -> BigRational {
    let denom = binom(total, draws);
    let hi = successes.min(draws);
    let mut num = BigInt::zero();
    for x in k..=hi {
        if draws - x > total - successes {
            continue;
        }
        num += binom(successes, x) * binom(total - successes, draws - x);
    }
    BigRational::new(num, denom)
}

/// Average precision in exact arithmetic.
pub fn ap_exact(ranking: &[usize], positives: &BTreeSet<usize>) -> BigRational {
    let mut hits = 0u64;
    let mut acc = BigRational::zero();
    for (rank, d) in ranking.iter().enumerate() {
        if positives.contains(d) {
            hits += 1;
            acc += ratio(hits, rank as u64 + 1);
        }
    }
    acc / BigRational::from_integer(BigInt::from(positives.len()))
}

/// A labeled synthetic corpus: each of `n_topics` themes owns `words_per_topic`
/// words drawn with Zipf-like weights; a fraction `noise` of each document's
/// tokens comes from the whole vocabulary. Tokens are comma separated so
/// every term is a single word. The label is the document's theme.
pub struct Synthetic {
    pub n_docs: usize,
    pub n_topics: usize,
    pub words_per_topic: usize,
    pub doc_len: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Synthetic {
    pub fn theme_word(t: usize, w: usize) -> String {
        format!("t{t}w{w}")
    }

    pub fn documents(&self) -> Vec<(String, String, String)> {
        let mut rng = rng(self.seed);
        let weights: Vec<f64> = (0..self.words_per_topic).map(|w| 1.0 / (w as f64 + 2.0)).collect();
        let total: f64 = weights.iter().sum();
        let pick = |rng: &mut ChaCha8Rng| {
            let mut u = rng.gen::<f64>() * total;
            for (w, &p) in weights.iter().enumerate() {
                if u < p {
                    return w;
                }
                u -= p;
            }
            weights.len() - 1
        };
        (0..self.n_docs)
            .map(|d| {
                let theme = d % self.n_topics;
                let words: Vec<String> = (0..self.doc_len)
                    .map(|_| {
                        if rng.gen::<f64>() < self.noise {
                            Self::theme_word(rng.gen_range(0..self.n_topics), rng.gen_range(0..self.words_per_topic))
                        } else {
                            Self::theme_word(theme, pick(&mut rng))
                        }
                    })
                    .collect();
                (format!("d{d:05}"), format!("theme{theme:02}"), words.join(", "))
            })
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).expect("create corpus"));
        for (id, label, text) in self.documents() {
            let rec = serde_json::json!({ "id": id, "title": "", "text": text, "labels": [label] });
            writeln!(out, "{rec}").expect("write corpus");
        }
    }
}
