//! Working vocabulary: hypergeometric over-representation against a
//! background collection with Benjamini–Hochberg control, or a plain
//! document-frequency band when no background is available.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BackgroundStats, Corpus};
use crate::error::{Error, Result};

pub const DEFAULT_FDR: f64 = 0.01;
pub const DEFAULT_MIN_DF: usize = 5;
pub const DEFAULT_MAX_DF_RATIO: f64 = 0.5;

/// `ln n! − ln(√(2πn) (n/e)^n)` for integer `n ≥ 1`.
fn stirling_error(n: u64) -> f64 {
    const TABLE: [f64; 15] = [
        0.081_061_466_795_327_258,
        0.041_340_695_955_409_294,
        0.027_677_925_684_998_339,
        0.020_790_672_103_765_093,
        0.016_644_691_189_821_192,
        0.013_876_128_823_070_748,
        0.011_896_709_945_891_770,
        0.010_411_265_261_972_096,
        0.009_255_462_182_712_733,
        0.008_330_563_433_362_871,
        0.007_573_675_487_951_841,
        0.006_942_840_107_209_530,
        0.006_408_994_188_004_207,
        0.005_951_370_112_758_848,
        0.005_554_733_551_962_801,
    ];
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        return TABLE[(n as usize).saturating_sub(1)];
    }
    let x = n as f64;
    let xx = x * x;
    if n > 500 {
        (S0 - S1 / xx) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / xx) / xx) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x
    }
}

/// Deviance term `x ln(x/np) + np − x`, evaluated by series when `x ≈ np`.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return next;
            }
            s = next;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `ln P(Binomial(n, p) = x)` by the saddle-point expansion, accurate to a
/// few ulps in relative terms even for very large `n`.
fn ln_binom_pmf(x: u64, n: u64, p: f64, q: f64) -> f64 {
    if x == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 {
            -deviance(n as f64, n as f64 * q) - n as f64 * p
        } else {
            n as f64 * q.ln()
        };
    }
    if x == n {
        return if q < 0.1 {
            -deviance(n as f64, n as f64 * p) - n as f64 * q
        } else {
            n as f64 * p.ln()
        };
    }
    let (xf, nf) = (x as f64, n as f64);
    let lc = stirling_error(n)
        - stirling_error(x)
        - stirling_error(n - x)
        - deviance(xf, nf * p)
        - deviance(nf - xf, nf * q);
    let lf = std::f64::consts::TAU.ln() + xf.ln() + (-xf / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln P(X = k)` for `X ~ Hypergeometric(total, successes, draws)`, written
/// as a ratio of three binomial probabilities with `p = draws / total`.
fn ln_pmf(total: u64, successes: u64, draws: u64, k: u64) -> f64 {
    let p = draws as f64 / total as f64;
    let q = (total - draws) as f64 / total as f64;
    ln_binom_pmf(k, successes, p, q) + ln_binom_pmf(draws - k, total - successes, p, q)
        - ln_binom_pmf(draws, total, p, q)
}

/// `P(X >= k)` for `X ~ Hypergeometric(total, successes, draws)`.
///
/// The tail farther from the mode is summed with the term recurrence, seeded
/// by a log-space pmf; when `k` sits at or below the mode the lower tail is
/// summed instead and complemented.
pub fn hypergeom_sf(total: u64, successes: u64, draws: u64, k: u64) -> Result<f64> {
    if draws > total || successes > total || k > draws || k > successes {
        return Err(Error::param(format!(
            "hypergeometric parameters out of order: M={total} K={successes} m={draws} k={k}"
        )));
    }
    let failures = total - successes;
    let lo = draws.saturating_sub(failures);
    let hi = successes.min(draws);
    if k <= lo {
        return Ok(1.0);
    }
    if k > hi {
        return Ok(0.0);
    }
    let mode = ((draws as u128 + 1) * (successes as u128 + 1) / (total as u128 + 2)) as u64;

    if k > mode {
        // pmf(x+1)/pmf(x) = (K-x)(m-x) / ((x+1)(M-K-m+x+1))
        let mut term = 1.0_f64;
        let mut acc = 1.0_f64;
        for x in k..hi {
            let num = (successes - x) as f64 * (draws - x) as f64;
            let den = (x + 1) as f64 * (failures + x + 1 - draws) as f64;
            term *= num / den;
            acc += term;
            if term < acc * 1e-18 {
                break;
            }
        }
        Ok((ln_pmf(total, successes, draws, k).exp() * acc).min(1.0))
    } else {
        // pmf(x-1)/pmf(x) = x(M-K-m+x) / ((K-x+1)(m-x+1))
        let start = k - 1;
        let mut term = 1.0_f64;
        let mut acc = 1.0_f64;
        let mut x = start;
        while x > lo {
            let num = x as f64 * (failures + x - draws) as f64;
            let den = (successes - x + 1) as f64 * (draws - x + 1) as f64;
            term *= num / den;
            acc += term;
            if term < acc * 1e-18 {
                break;
            }
            x -= 1;
        }
        let lower = ln_pmf(total, successes, draws, start).exp() * acc;
        Ok((1.0 - lower).clamp(0.0, 1.0))
    }
}

/// Exact `a·b ≤ c·d` for finite non-negative inputs: the rounded products
/// are compared first, then their rounding errors.
fn product_le(a: f64, b: f64, c: f64, d: f64) -> bool {
    let (x, y) = (a * b, c * d);
    if x != y {
        return x < y;
    }
    a.mul_add(b, -x) <= c.mul_add(d, -y)
}

/// Benjamini–Hochberg step-up: indices (ascending) of accepted p-values.
/// Tied p-values are accepted or rejected together.
pub fn bh_filter(p_values: &[f64], fdr: f64) -> Vec<usize> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cut = (1..=m)
        .rev()
        .find(|&k| product_le(p_values[order[k - 1]], m as f64, k as f64, fdr))
        .map(|k| p_values[order[k - 1]]);
    match cut {
        Some(threshold) => (0..m).filter(|&i| p_values[i] <= threshold).collect(),
        None => Vec::new(),
    }
}

/// Over-representation filter shared by terms and labels: returns the
/// accepted item indices with their p-values. Background counts are clamped
/// up to the focus count.
pub fn enrichment_filter(
    focus_df: &[usize],
    background_counts: &[u64],
    universe: u64,
    n_docs: usize,
    fdr: f64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if (n_docs as u64) > universe {
        return Err(Error::param(format!(
            "focus corpus ({n_docs} documents) is larger than the background universe ({universe})"
        )));
    }
    let p: Vec<f64> = focus_df
        .par_iter()
        .zip(background_counts.par_iter())
        .map(|(&df, &bg)| {
            let k = df as u64;
            hypergeom_sf(universe, bg.max(k).min(universe), n_docs as u64, k)
        })
        .collect::<Result<_>>()?;
    let accepted = bh_filter(&p, fdr);
    Ok((p, accepted))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabParams {
    pub fdr: f64,
    pub min_df: usize,
    pub max_df_ratio: f64,
}

impl Default for VocabParams {
    fn default() -> Self {
        VocabParams {
            fdr: DEFAULT_FDR,
            min_df: DEFAULT_MIN_DF,
            max_df_ratio: DEFAULT_MAX_DF_RATIO,
        }
    }
}

impl VocabParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fdr > 0.0 && self.fdr < 1.0) {
            return Err(Error::param(format!("fdr must be in (0, 1), got {}", self.fdr)));
        }
        if !(self.max_df_ratio > 0.0 && self.max_df_ratio <= 1.0) {
            return Err(Error::param(format!(
                "max_df_ratio must be in (0, 1], got {}",
                self.max_df_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    /// Sorted term strings; position is the term id.
    pub terms: Vec<String>,
    pub index: HashMap<String, usize>,
    pub df: Vec<usize>,
    /// `None` when the vocabulary came from the df band.
    pub p_value: Vec<Option<f64>>,
    /// Sorted corpus document indices containing each term.
    pub postings: Vec<Vec<u32>>,
    pub n_docs: usize,
    pub fdr: Option<f64>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    fn assemble(
        corpus: &Corpus,
        kept: Vec<(String, usize, Option<f64>)>,
        fdr: Option<f64>,
    ) -> Result<Self> {
        let mut terms = Vec::with_capacity(kept.len());
        let mut df = Vec::with_capacity(kept.len());
        let mut p_value = Vec::with_capacity(kept.len());
        for (t, d, p) in kept {
            terms.push(t);
            df.push(d);
            p_value.push(p);
        }
        debug_assert!(terms.windows(2).all(|w| w[0] < w[1]));
        let index: HashMap<String, usize> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut postings = vec![Vec::new(); terms.len()];
        for (d, doc) in corpus.documents.iter().enumerate() {
            for term in doc.term_freq.keys() {
                if let Some(&i) = index.get(term) {
                    postings[i].push(d as u32);
                }
            }
        }
        for (i, p) in postings.iter().enumerate() {
            if p.len() != df[i] {
                return Err(Error::Malformed {
                    record: terms[i].clone(),
                    reason: format!(
                        "vocabulary df {} does not match corpus ({} documents)",
                        df[i],
                        p.len()
                    ),
                });
            }
        }
        Ok(Vocabulary {
            terms,
            index,
            df,
            p_value,
            postings,
            n_docs: corpus.n_docs(),
            fdr,
        })
    }

    pub fn to_export(&self) -> VocabularyExport {
        VocabularyExport {
            n_docs: self.n_docs,
            fdr: self.fdr,
            terms: self
                .terms
                .iter()
                .zip(&self.df)
                .zip(&self.p_value)
                .map(|((t, &df), &p)| TermRecord {
                    term: t.clone(),
                    df,
                    p_value: p,
                })
                .collect(),
        }
    }

    /// Rebuilds postings for an exported vocabulary over the corpus it was
    /// built from.
    pub fn from_export(export: &VocabularyExport, corpus: &Corpus) -> Result<Self> {
        if export.n_docs != corpus.n_docs() {
            return Err(Error::DimensionMismatch {
                expected: export.n_docs,
                got: corpus.n_docs(),
            });
        }
        let mut kept: Vec<_> = export
            .terms
            .iter()
            .map(|r| (r.term.clone(), r.df, r.p_value))
            .collect();
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        Self::assemble(corpus, kept, export.fdr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub term: String,
    pub df: usize,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyExport {
    pub n_docs: usize,
    pub fdr: Option<f64>,
    pub terms: Vec<TermRecord>,
}

pub fn build_vocabulary(
    corpus: &Corpus,
    background: Option<&BackgroundStats>,
    params: &VocabParams,
) -> Result<Vocabulary> {
    params.validate()?;
    let n_docs = corpus.n_docs();
    if n_docs == 0 {
        return Err(Error::param("corpus is empty"));
    }
    let candidates: Vec<(&String, usize)> = corpus.df.iter().map(|(t, &d)| (t, d)).collect();

    let (kept, fdr) = match background {
        Some(bg) => {
            let df: Vec<usize> = candidates.iter().map(|c| c.1).collect();
            let counts: Vec<u64> = candidates.iter().map(|c| bg.count(c.0)).collect();
            let (p, accepted) = enrichment_filter(&df, &counts, bg.universe_size, n_docs, params.fdr)?;
            let kept: Vec<_> = accepted
                .into_iter()
                .map(|i| (candidates[i].0.clone(), candidates[i].1, Some(p[i])))
                .collect();
            (kept, Some(params.fdr))
        }
        None => {
            let kept: Vec<_> = candidates
                .iter()
                .filter(|(_, df)| *df >= params.min_df && (*df as f64 / n_docs as f64) <= params.max_df_ratio)
                .map(|(t, df)| ((*t).clone(), *df, None))
                .collect();
            (kept, None)
        }
    };
    if kept.is_empty() {
        let why = match fdr {
            Some(f) => format!("no term passed Benjamini-Hochberg at fdr {f}"),
            None => format!(
                "no term has df >= {} and df/n_docs <= {}",
                params.min_df, params.max_df_ratio
            ),
        };
        return Err(Error::EmptyVocabulary(why));
    }
    Vocabulary::assemble(corpus, kept, fdr)
}
