//! Document scoring: each topic ranks documents by
//! `score(d) = Σ_i r_ij · w_i(d)` where `w_i(d)` is a local weight of term
//! `i` in document `d`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::solver::{Responsibilities, TopicModel};
use crate::vocabulary::Vocabulary;

/// Local weight of a term occurrence count within one document.
pub trait LocalWeight: Sync {
    fn weight(&self, tf: u32, len: usize) -> f64;
}

/// Saturating tf weight `tf / (tf + k · len / avg_len)`, or `tf / (tf + k)`
/// without length normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalWeightConfig {
    pub k: f64,
    pub length_normalize: bool,
    pub avg_len: f64,
}

impl LocalWeightConfig {
    pub fn new(k: f64, length_normalize: bool, avg_len: f64) -> Result<Self> {
        let c = LocalWeightConfig {
            k,
            length_normalize,
            avg_len,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn for_corpus(corpus: &Corpus, k: f64, length_normalize: bool) -> Result<Self> {
        let avg = corpus.avg_len();
        Self::new(k, length_normalize, if avg > 0.0 { avg } else { 1.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::param(format!("local weight k must be > 0, got {}", self.k)));
        }
        if !(self.avg_len > 0.0) {
            return Err(Error::param(format!("avg_len must be > 0, got {}", self.avg_len)));
        }
        Ok(())
    }
}

pub fn local_weight(tf: u32, len: usize, config: &LocalWeightConfig) -> f64 {
    if tf == 0 {
        return 0.0;
    }
    let tf = tf as f64;
    let damp = if config.length_normalize {
        config.k * (len as f64 / config.avg_len)
    } else {
        config.k
    };
    tf / (tf + damp)
}

impl LocalWeight for LocalWeightConfig {
    fn weight(&self, tf: u32, len: usize) -> f64 {
        local_weight(tf, len, self)
    }
}

/// Score of one document for topic (exemplar) `topic`. Terms are visited in
/// ascending id order.
pub fn score_document<W: LocalWeight + ?Sized>(
    doc: &Document,
    topic: usize,
    r: &Responsibilities,
    vocab: &Vocabulary,
    lw: &W,
) -> f64 {
    // term_freq iterates in string order, which is term id order
    let mut score = 0.0;
    for (term, &tf) in &doc.term_freq {
        let Some(i) = vocab.id(term) else { continue };
        let rij = r.get(i, topic);
        if rij > 0.0 {
            score += rij * lw.weight(tf, doc.length);
        }
    }
    score
}

/// Ranking of corpus documents (by index) for one topic, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentScore {
    pub topic_id: usize,
    pub ranking: Vec<(u32, f64)>,
}

impl DocumentScore {
    pub fn order(&self) -> impl Iterator<Item = u32> + '_ {
        self.ranking.iter().map(|e| e.0)
    }
}

fn sort_ranking(ranking: &mut [(u32, f64)], corpus: &Corpus) {
    ranking.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| corpus.documents[a.0 as usize].id.cmp(&corpus.documents[b.0 as usize].id))
    });
}

/// Scores every document for every topic. Topics follow the model's topic
/// order (descending prior, then id); each ranking is sorted by descending
/// score then ascending document id and optionally cut to `top_k`.
pub fn rank_documents<W: LocalWeight + ?Sized>(
    corpus: &Corpus,
    vocab: &Vocabulary,
    model: &TopicModel,
    lw: &W,
    top_k: Option<usize>,
) -> Result<Vec<DocumentScore>> {
    if model.n() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            got: model.n(),
        });
    }
    // local weight of each posting, aligned with vocab.postings
    let weights: Vec<Vec<f64>> = vocab
        .postings
        .par_iter()
        .enumerate()
        .map(|(i, posting)| {
            posting
                .iter()
                .map(|&d| {
                    let doc = &corpus.documents[d as usize];
                    lw.weight(doc.tf(&vocab.terms[i]), doc.length)
                })
                .collect()
        })
        .collect();
    let columns = model.responsibilities.columns();
    let mut topics = model.exemplars.clone();
    topics.sort_by(|&a, &b| model.q[b].total_cmp(&model.q[a]).then(a.cmp(&b)));

    Ok(topics
        .par_iter()
        .map(|&j| {
            let mut scores = vec![0.0f64; corpus.n_docs()];
            for &(i, rij) in &columns[j] {
                if rij <= 0.0 {
                    continue;
                }
                let i = i as usize;
                for (&d, &w) in vocab.postings[i].iter().zip(&weights[i]) {
                    scores[d as usize] += rij * w;
                }
            }
            let mut ranking: Vec<(u32, f64)> = scores
                .into_iter()
                .enumerate()
                .map(|(d, s)| (d as u32, s))
                .collect();
            sort_ranking(&mut ranking, corpus);
            if let Some(k) = top_k {
                ranking.truncate(k);
            }
            DocumentScore {
                topic_id: j,
                ranking,
            }
        })
        .collect())
}

/// One entry of the scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresRecord {
    pub topic_id: usize,
    pub ranking: Vec<(String, f64)>,
}

pub fn to_records(scores: &[DocumentScore], corpus: &Corpus, top_k: Option<usize>) -> Vec<ScoresRecord> {
    scores
        .iter()
        .map(|s| ScoresRecord {
            topic_id: s.topic_id,
            ranking: s
                .ranking
                .iter()
                .take(top_k.unwrap_or(usize::MAX))
                .map(|&(d, v)| (corpus.documents[d as usize].id.clone(), v))
                .collect(),
        })
        .collect()
}

/// Maps externally produced rankings onto corpus document indices.
pub fn from_records(records: &[ScoresRecord], corpus: &Corpus) -> Result<Vec<DocumentScore>> {
    let index: std::collections::HashMap<&str, u32> = corpus
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i as u32))
        .collect();
    records
        .iter()
        .map(|rec| {
            let ranking = rec
                .ranking
                .iter()
                .map(|(id, s)| {
                    index.get(id.as_str()).map(|&d| (d, *s)).ok_or_else(|| Error::Malformed {
                        record: format!("topic {}", rec.topic_id),
                        reason: format!("unknown document id {id:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DocumentScore {
                topic_id: rec.topic_id,
                ranking,
            })
        })
        .collect()
}
