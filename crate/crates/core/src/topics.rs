//! Topic representations from cluster labels.
//!
//! The documents of each cluster are treated as one merged document. Term
//! weights are class-based TF-IDF:
//!
//! ```text
//! TF(t, c)      = occurrences of t in class c
//! ICF(t)        = ln(N / (1 + DF(t)))      N = non-outlier classes, DF = classes containing t
//! ctfidf(t, c)  = TF(t, c) * ICF(t)
//! ```
//!
//! Outlier documents (label -1) count towards nothing.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use chrono::NaiveDate;

use crate::clusterer::ClusterLabels;
use crate::error::{Error, Result};
use crate::ingest::AlignedCorpus;

const BUNDLED_STOP_WORDS: &str = include_str!("../data/stopwords.txt");

pub const OUTLIER_TOPIC: i64 = -1;

/// Bundled English stop words plus the given tickers, lowercased.
pub fn default_stop_words<'a>(tickers: impl IntoIterator<Item = &'a str>) -> HashSet<String> {
    let mut set: HashSet<String> = BUNDLED_STOP_WORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    set.extend(tickers.into_iter().map(str::to_lowercase));
    set
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    /// Sorted, unique.
    pub tokens: Vec<String>,
    /// Sparse `(term index, count)` per document, sorted by term.
    pub doc_term_counts: Vec<Vec<(usize, u32)>>,
    pub stop_words: HashSet<String>,
    pub min_df: usize,
}

impl Vocabulary {
    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    pub fn n_docs(&self) -> usize {
        self.doc_term_counts.len()
    }
}

fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
}

pub fn build_vocabulary(
    corpus: &[String],
    stop_words: &HashSet<String>,
    min_df: usize,
) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("corpus is empty".into()));
    }
    let docs: Vec<BTreeMap<String, u32>> = corpus
        .iter()
        .map(|text| {
            let mut counts = BTreeMap::new();
            for t in terms(text).filter(|t| !stop_words.contains(t)) {
                *counts.entry(t).or_insert(0) += 1;
            }
            counts
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        for t in d.keys() {
            *df.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let tokens: Vec<String> = df
        .iter()
        .filter(|(_, &c)| c >= min_df)
        .map(|(t, _)| t.to_string())
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let index: HashMap<&str, usize> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let doc_term_counts = docs
        .iter()
        .map(|d| {
            d.iter()
                .filter_map(|(t, &c)| index.get(t.as_str()).map(|&i| (i, c)))
                .collect()
        })
        .collect();
    Ok(Vocabulary {
        tokens,
        doc_term_counts,
        stop_words: stop_words.clone(),
        min_df,
    })
}

fn check_labels(vocab: &Vocabulary, labels: &ClusterLabels) -> Result<()> {
    if labels.labels.len() != vocab.n_docs() {
        return Err(Error::LengthMismatch {
            left: labels.labels.len(),
            right: vocab.n_docs(),
        });
    }
    Ok(())
}

/// Occurrences of `term` over all documents labelled `class`.
pub fn class_tf(vocab: &Vocabulary, labels: &ClusterLabels, term: &str, class: i64) -> Result<u64> {
    check_labels(vocab, labels)?;
    let t = vocab.term_index(term).ok_or_else(|| Error::Unknown {
        kind: "term",
        name: term.to_string(),
    })?;
    if class < 0 || class as usize >= labels.n_clusters {
        return Err(Error::Unknown {
            kind: "class",
            name: class.to_string(),
        });
    }
    Ok(vocab
        .doc_term_counts
        .iter()
        .zip(&labels.labels)
        .filter(|(_, &l)| l == class)
        .flat_map(|(d, _)| d.iter())
        .filter(|(i, _)| *i == t)
        .map(|(_, c)| *c as u64)
        .sum())
}

/// `ln(n_classes / (1 + df))`.
pub fn icf_value(n_classes: usize, df: usize) -> f64 {
    (n_classes as f64 / (1.0 + df as f64)).ln()
}

/// Class-level TF for every (class, term) as a dense `n_clusters x n_terms` matrix.
fn class_tf_matrix(vocab: &Vocabulary, labels: &ClusterLabels) -> Vec<Vec<u64>> {
    let mut tf = vec![vec![0u64; vocab.tokens.len()]; labels.n_clusters];
    for (doc, &l) in vocab.doc_term_counts.iter().zip(&labels.labels) {
        if l < 0 {
            continue;
        }
        for &(t, c) in doc {
            tf[l as usize][t] += c as u64;
        }
    }
    tf
}

pub fn icf(vocab: &Vocabulary, labels: &ClusterLabels, term: &str) -> Result<f64> {
    check_labels(vocab, labels)?;
    let t = vocab.term_index(term).ok_or_else(|| Error::Unknown {
        kind: "term",
        name: term.to_string(),
    })?;
    if labels.n_clusters == 0 {
        return Err(Error::InvalidInput("no non-outlier classes".into()));
    }
    let tf = class_tf_matrix(vocab, labels);
    let df = tf.iter().filter(|row| row[t] > 0).count();
    Ok(icf_value(labels.n_clusters, df))
}

/// Topic x term c-TF-IDF matrix; row `c` belongs to topic `c`.
pub fn ctfidf(vocab: &Vocabulary, labels: &ClusterLabels) -> Result<Vec<Vec<f64>>> {
    check_labels(vocab, labels)?;
    if labels.n_clusters == 0 {
        return Err(Error::InvalidInput("no non-outlier classes".into()));
    }
    let tf = class_tf_matrix(vocab, labels);
    let icf: Vec<f64> = (0..vocab.tokens.len())
        .map(|t| {
            icf_value(
                labels.n_clusters,
                tf.iter().filter(|row| row[t] > 0).count(),
            )
        })
        .collect();
    Ok(tf
        .iter()
        .map(|row| row.iter().zip(&icf).map(|(&c, &w)| c as f64 * w).collect())
        .collect())
}

/// The `n` highest-weighted terms of one row, ties broken alphabetically.
fn rank_terms(row: &[f64], tokens: &[String], n: usize) -> Vec<(String, f64)> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| {
        row[b]
            .total_cmp(&row[a])
            .then_with(|| tokens[a].cmp(&tokens[b]))
    });
    idx.into_iter()
        .take(n)
        .map(|i| (tokens[i].clone(), row[i]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub doc_ids: Vec<String>,
    pub labels: ClusterLabels,
    pub vocab: Vocabulary,
    pub ctfidf: Vec<Vec<f64>>,
    pub top_words: Vec<Vec<(String, f64)>>,
    pub topic_sentiment: Vec<f64>,
}

impl TopicModel {
    pub fn n_topics(&self) -> usize {
        self.labels.n_clusters
    }

    pub fn topic_of(&self, doc: usize) -> i64 {
        self.labels.labels[doc]
    }

    pub fn size(&self, topic: usize) -> usize {
        self.labels
            .labels
            .iter()
            .filter(|&&l| l == topic as i64)
            .count()
    }

    pub fn write_report<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["topic_id", "size", "sentiment", "top_words"])?;
        for t in 0..self.n_topics() {
            let words: Vec<&str> = self.top_words[t].iter().map(|(w, _)| w.as_str()).collect();
            wtr.write_record([
                t.to_string(),
                self.size(t).to_string(),
                format!("{:.6}", self.topic_sentiment[t]),
                words.join(" "),
            ])?;
        }
        wtr.write_record([
            OUTLIER_TOPIC.to_string(),
            self.labels.n_outliers().to_string(),
            String::new(),
            String::new(),
        ])?;
        wtr.flush().map_err(|e| Error::io("<topic writer>", e))?;
        Ok(())
    }

    pub fn write_assignments<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["doc_id", "topic"])?;
        for (id, l) in self.doc_ids.iter().zip(&self.labels.labels) {
            wtr.write_record([id.clone(), l.to_string()])?;
        }
        wtr.flush()
            .map_err(|e| Error::io("<assignment writer>", e))?;
        Ok(())
    }
}

pub fn top_words(model: &TopicModel, topic: i64, n: usize) -> Result<Vec<(String, f64)>> {
    if topic < 0 || topic as usize >= model.n_topics() {
        return Err(Error::Unknown {
            kind: "topic",
            name: topic.to_string(),
        });
    }
    Ok(rank_terms(
        &model.ctfidf[topic as usize],
        &model.vocab.tokens,
        n,
    ))
}

/// Mean compound of each topic's member documents.
pub fn topic_sentiment(labels: &ClusterLabels, compounds: &[f64]) -> Result<Vec<f64>> {
    if labels.labels.len() != compounds.len() {
        return Err(Error::LengthMismatch {
            left: labels.labels.len(),
            right: compounds.len(),
        });
    }
    let mut sum = vec![0.0; labels.n_clusters];
    let mut count = vec![0usize; labels.n_clusters];
    for (&l, &c) in labels.labels.iter().zip(compounds) {
        if l >= 0 {
            sum[l as usize] += c;
            count[l as usize] += 1;
        }
    }
    assert!(count.iter().all(|&c| c > 0), "every topic has members");
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

pub fn build_topic_model(
    corpus: &[String],
    doc_ids: &[String],
    labels: ClusterLabels,
    compounds: &[f64],
    stop_words: &HashSet<String>,
    min_df: usize,
    n_top: usize,
) -> Result<TopicModel> {
    let vocab = build_vocabulary(corpus, stop_words, min_df)?;
    let matrix = if labels.n_clusters > 0 {
        ctfidf(&vocab, &labels)?
    } else {
        Vec::new()
    };
    let top_words = matrix
        .iter()
        .map(|row| rank_terms(row, &vocab.tokens, n_top))
        .collect();
    let topic_sentiment = topic_sentiment(&labels, compounds)?;
    Ok(TopicModel {
        doc_ids: doc_ids.to_vec(),
        labels,
        vocab,
        ctfidf: matrix,
        top_words,
        topic_sentiment,
    })
}

/// Per bar date: mean over that day's comments of the comment's topic
/// sentiment, or its own compound when it is an outlier. Days without
/// comments get 0.
pub fn daily_topic_score(
    aligned: &AlignedCorpus,
    model: &TopicModel,
    compounds: &HashMap<String, f64>,
) -> Result<Vec<(NaiveDate, f64)>> {
    let doc_index: HashMap<&str, usize> = model
        .doc_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut per_day: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for (date, c) in aligned.comments_with_day() {
        let doc = *doc_index
            .get(c.id.as_str())
            .ok_or_else(|| Error::MissingId(c.id.clone()))?;
        let topic = model.topic_of(doc);
        let value = if topic >= 0 {
            model.topic_sentiment[topic as usize]
        } else {
            *compounds
                .get(&c.id)
                .ok_or_else(|| Error::MissingId(c.id.clone()))?
        };
        per_day.entry(date).or_default().push(value);
    }
    Ok(aligned
        .bars
        .dates()
        .into_iter()
        .map(|d| {
            let v = per_day
                .get(&d)
                .map(|xs| xs.iter().sum::<f64>() / xs.len() as f64)
                .unwrap_or(0.0);
            (d, v)
        })
        .collect())
}

/// Distinct terms per class, for inspection.
pub fn class_terms(vocab: &Vocabulary, labels: &ClusterLabels) -> Vec<BTreeSet<String>> {
    let tf = class_tf_matrix(vocab, labels);
    tf.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(t, _)| vocab.tokens[t].clone())
                .collect()
        })
        .collect()
}
