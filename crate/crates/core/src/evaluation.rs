//! Label alignment of topic rankings (MaxMAP).
//!
//! Every qualified label is matched with the topic whose document ranking
//! gives it the highest average precision; the mean of the best `N` of those
//! per-label scores is the summary.

use std::collections::HashSet;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BackgroundStats, Corpus};
use crate::error::{Error, Result};
use crate::scoring::DocumentScore;
use crate::solver::TopicModel;
use crate::vocabulary::{enrichment_filter, DEFAULT_FDR};

pub const DEFAULT_MIN_POSITIVES: usize = 5;
pub const DEFAULT_MAX_TOPICS: usize = 1000;
pub const DEFAULT_TOP_N_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Labels averaged; `None` means `min(1000, topic count)`.
    pub top_n: Option<usize>,
    pub min_positives: usize,
    /// FDR for label qualification against a label background.
    pub fdr: f64,
    /// Topics beyond this count are dropped, lowest prior first.
    pub max_topics: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            top_n: None,
            min_positives: DEFAULT_MIN_POSITIVES,
            fdr: DEFAULT_FDR,
            max_topics: DEFAULT_MAX_TOPICS,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_n == Some(0) {
            return Err(Error::param("top_n must be at least 1"));
        }
        if self.max_topics == 0 {
            return Err(Error::param("max_topics must be at least 1"));
        }
        if !(self.fdr > 0.0 && self.fdr < 1.0) {
            return Err(Error::param(format!("fdr must be in (0, 1), got {}", self.fdr)));
        }
        Ok(())
    }
}

/// Non-interpolated average precision over the full ranking. Positives that
/// never appear in the ranking contribute zero precision.
pub fn average_precision<T: Eq + Hash>(ranking: &[T], positives: &HashSet<T>) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::NoPositives(String::new()));
    }
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (rank, item) in ranking.iter().enumerate() {
        if positives.contains(item) {
            hits += 1;
            acc += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(acc / positives.len() as f64)
}

/// Same as [`average_precision`] with positives given as a document mask.
fn ap_masked(order: impl Iterator<Item = u32>, positive: &[bool], n_positive: usize) -> f64 {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (rank, d) in order.enumerate() {
        if positive[d as usize] {
            hits += 1;
            acc += hits as f64 / (rank + 1) as f64;
            if hits == n_positive {
                break;
            }
        }
    }
    acc / n_positive as f64
}

/// Labels eligible for evaluation, sorted.
pub fn qualified_labels(
    corpus: &Corpus,
    background: Option<&BackgroundStats>,
    config: &EvalConfig,
) -> Result<Vec<String>> {
    let label_df = corpus.label_df();
    let labels: Vec<(&String, usize)> = label_df.iter().map(|(l, &d)| (l, d)).collect();
    let kept: Vec<String> = match background {
        Some(bg) => {
            let df: Vec<usize> = labels.iter().map(|l| l.1).collect();
            let counts: Vec<u64> = labels.iter().map(|l| bg.count(l.0)).collect();
            let (_, accepted) = enrichment_filter(&df, &counts, bg.universe_size, corpus.n_docs(), config.fdr)?;
            accepted.into_iter().map(|i| labels[i].0.clone()).collect()
        }
        None => labels
            .iter()
            .filter(|l| l.1 >= config.min_positives)
            .map(|l| l.0.clone())
            .collect(),
    };
    if kept.is_empty() {
        return Err(Error::NoQualifiedLabels);
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label: String,
    pub best_topic: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub maxmap: f64,
    pub n_used: usize,
    pub n_labels_qualified: usize,
    pub n_topics_evaluated: usize,
    /// Sorted by descending AP, then label.
    pub labels: Vec<LabelRecord>,
}

/// Keeps at most `max_topics` rankings: the highest-prior topics when a
/// model is given, otherwise the first ones in input order.
fn select_topics<'a>(
    model: Option<&TopicModel>,
    rankings: &'a [DocumentScore],
    max_topics: usize,
) -> Vec<&'a DocumentScore> {
    let mut chosen: Vec<&DocumentScore> = rankings.iter().collect();
    if chosen.len() <= max_topics {
        return chosen;
    }
    if let Some(m) = model {
        let prior = |r: &DocumentScore| m.q.get(r.topic_id).copied().unwrap_or(0.0);
        chosen.sort_by(|a, b| prior(b).total_cmp(&prior(a)).then(a.topic_id.cmp(&b.topic_id)));
    }
    chosen.truncate(max_topics);
    chosen
}

/// Best-topic AP for each given label.
pub fn best_topics(
    corpus: &Corpus,
    rankings: &[&DocumentScore],
    labels: &[String],
) -> Result<Vec<LabelRecord>> {
    labels
        .par_iter()
        .map(|label| {
            let positive: Vec<bool> = corpus
                .documents
                .iter()
                .map(|d| d.labels.contains(label))
                .collect();
            let n_positive = positive.iter().filter(|&&p| p).count();
            if n_positive == 0 {
                return Err(Error::NoPositives(label.clone()));
            }
            let mut best: Option<(usize, f64)> = None;
            for r in rankings {
                let ap = ap_masked(r.order(), &positive, n_positive);
                best = match best {
                    Some((t, b)) if b > ap || (b == ap && t < r.topic_id) => Some((t, b)),
                    _ => Some((r.topic_id, ap)),
                };
            }
            let (best_topic, ap) = best.ok_or_else(|| Error::param("no topic rankings to evaluate"))?;
            Ok(LabelRecord {
                label: label.clone(),
                best_topic,
                ap,
            })
        })
        .collect()
}

/// Mean of the `n` largest values after sorting the records.
fn summarize(mut records: Vec<LabelRecord>, top_n: usize) -> (f64, usize, Vec<LabelRecord>) {
    records.sort_by(|a, b| b.ap.total_cmp(&a.ap).then_with(|| a.label.cmp(&b.label)));
    let n_used = top_n.min(records.len());
    let total: f64 = records[..n_used].iter().map(|r| r.ap).sum();
    let maxmap = if n_used == 0 { 0.0 } else { total / n_used as f64 };
    (maxmap, n_used, records)
}

pub fn maxmap(
    corpus: &Corpus,
    model: Option<&TopicModel>,
    rankings: &[DocumentScore],
    config: &EvalConfig,
    label_background: Option<&BackgroundStats>,
) -> Result<EvalReport> {
    config.validate()?;
    let labels = qualified_labels(corpus, label_background, config)?;
    maxmap_for_labels(corpus, model, rankings, config, &labels)
}

/// [`maxmap`] over an already qualified label list.
pub fn maxmap_for_labels(
    corpus: &Corpus,
    model: Option<&TopicModel>,
    rankings: &[DocumentScore],
    config: &EvalConfig,
    labels: &[String],
) -> Result<EvalReport> {
    let topics = select_topics(model, rankings, config.max_topics);
    if topics.is_empty() {
        return Err(Error::param("no topic rankings to evaluate"));
    }
    let records = best_topics(corpus, &topics, labels)?;
    let top_n = config
        .top_n
        .unwrap_or_else(|| DEFAULT_TOP_N_CAP.min(topics.len()));
    let n_labels_qualified = records.len();
    let (maxmap, n_used, labels) = summarize(records, top_n);
    Ok(EvalReport {
        maxmap,
        n_used,
        n_labels_qualified,
        n_topics_evaluated: topics.len(),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Stopwords};

    #[test]
    fn ap_hand_computed() {
        let ranking = ["a", "b", "c", "d", "e"];
        let pos: HashSet<&str> = ["a", "c"].into_iter().collect();
        let ap = average_precision(&ranking, &pos).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ap_perfect_and_single() {
        let ranking = [1, 2, 3, 4, 5, 6];
        let top: HashSet<i32> = [1, 2, 3].into_iter().collect();
        assert_eq!(average_precision(&ranking, &top).unwrap(), 1.0);
        for k in 1..=6 {
            let one: HashSet<i32> = [k].into_iter().collect();
            assert!((average_precision(&ranking, &one).unwrap() - 1.0 / k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn ap_requires_positives() {
        let err = average_precision(&[1, 2], &HashSet::new()).unwrap_err();
        assert!(err.to_string().contains("no positive documents"));
    }

    fn labeled_corpus(labels: &[&[&str]]) -> Corpus {
        let stop = Stopwords::default();
        let docs = labels
            .iter()
            .enumerate()
            .map(|(i, ls)| {
                Document::new(
                    format!("d{i}"),
                    "",
                    "text",
                    ls.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    &stop,
                    1,
                )
            })
            .collect();
        Corpus::new(docs, 1).unwrap()
    }

    #[test]
    fn rare_label_excluded_without_background() {
        let mut ls: Vec<&[&str]> = vec![&["rare", "common"]];
        for _ in 0..9 {
            ls.push(&["common"]);
        }
        let c = labeled_corpus(&ls);
        let q = qualified_labels(&c, None, &EvalConfig::default()).unwrap();
        assert_eq!(q, vec!["common".to_string()]);
    }

    #[test]
    fn ubiquitous_label_fails_enrichment() {
        let ls: Vec<&[&str]> = vec![&["everywhere"]; 20];
        let c = labeled_corpus(&ls);
        let bg = BackgroundStats::parse("#universe\t1000\neverywhere\t1000\n", "bg").unwrap();
        let err = qualified_labels(&c, Some(&bg), &EvalConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoQualifiedLabels));
    }

    #[test]
    fn two_labels_average() {
        // label x: AP 1 on topic 0; label y: AP 0.5 on topic 0 (rank 2 of 2)
        let ls: Vec<&[&str]> = vec![&["x"], &["y"]];
        let c = labeled_corpus(&ls);
        let rankings = vec![DocumentScore {
            topic_id: 0,
            ranking: vec![(0, 1.0), (1, 0.5)],
        }];
        let cfg = EvalConfig {
            min_positives: 1,
            top_n: Some(2),
            ..Default::default()
        };
        let rep = maxmap(&c, None, &rankings, &cfg, None).unwrap();
        assert!((rep.maxmap - 0.75).abs() < 1e-15);
        assert_eq!(rep.n_used, 2);
        assert_eq!(rep.labels[0].label, "x");

        let one = maxmap(&c, None, &rankings, &EvalConfig { top_n: Some(1), ..cfg }, None).unwrap();
        assert_eq!(one.maxmap, 1.0);
    }

    #[test]
    fn tie_goes_to_lowest_topic() {
        let ls: Vec<&[&str]> = vec![&["x"], &[]];
        let c = labeled_corpus(&ls);
        let same = vec![(0, 1.0), (1, 0.0)];
        let rankings = vec![
            DocumentScore { topic_id: 7, ranking: same.clone() },
            DocumentScore { topic_id: 3, ranking: same },
        ];
        let cfg = EvalConfig { min_positives: 1, ..Default::default() };
        let rep = maxmap(&c, None, &rankings, &cfg, None).unwrap();
        assert_eq!(rep.labels[0].best_topic, 3);
    }
}
