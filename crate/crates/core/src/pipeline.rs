//! Stage glue: scores, topics and the daily feature frame for one ticker.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;

use crate::clusterer::{hdbscan, CondensedTree, HdbscanParams};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::frame::DailyFeatureFrame;
use crate::indicators::FeatureTable;
use crate::ingest::AlignedCorpus;
use crate::reducer::{fuzzy_weights, knn_graph, optimize_layout, Layout, LayoutParams};
use crate::sentiment::{daily_score, SentimentProvider, SentimentScore};
use crate::topics::{build_topic_model, daily_topic_score, default_stop_words, TopicModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicParams {
    pub k: usize,
    pub out_dim: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub min_pts: usize,
    pub min_cluster_size: usize,
    pub min_df: usize,
    pub n_top: usize,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for TopicParams {
    fn default() -> Self {
        TopicParams {
            k: 15,
            out_dim: 5,
            min_dist: 0.1,
            epochs: 200,
            min_pts: 10,
            min_cluster_size: 10,
            min_df: 1,
            n_top: 10,
            embed_dim: 64,
            seed: 42,
        }
    }
}

/// Per-comment scores in corpus order plus the daily `score` column.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSentiment {
    pub ids: Vec<String>,
    pub scores: Vec<SentimentScore>,
    pub daily: Vec<(NaiveDate, f64)>,
}

impl CorpusSentiment {
    pub fn compounds(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.compound).collect()
    }

    pub fn compound_map(&self) -> HashMap<String, f64> {
        self.ids
            .iter()
            .cloned()
            .zip(self.scores.iter().map(|s| s.compound))
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["comment_id", "pos", "neu", "neg", "compound"])?;
        for (id, s) in self.ids.iter().zip(&self.scores) {
            wtr.write_record([
                id.clone(),
                format!("{:?}", s.pos),
                format!("{:?}", s.neu),
                format!("{:?}", s.neg),
                format!("{:?}", s.compound),
            ])?;
        }
        wtr.flush()
            .map_err(|e| Error::io("<sentiment writer>", e))?;
        Ok(())
    }
}

/// Reads the per-comment file written by [`CorpusSentiment::write_csv`].
pub fn read_comment_scores<R: std::io::Read>(
    reader: R,
) -> Result<(Vec<String>, Vec<SentimentScore>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        let value = |j: usize| -> Result<f64> {
            record
                .get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Row {
                    line,
                    message: format!("bad score in field {}", j + 1),
                })
        };
        scores.push(SentimentScore {
            pos: value(1)?,
            neu: value(2)?,
            neg: value(3)?,
            compound: value(4)?,
        });
        ids.push(record.get(0).unwrap_or_default().to_string());
    }
    Ok((ids, scores))
}

/// Scores every aligned comment and averages compounds per bar date
/// (0 on days without comments).
pub fn score_corpus(
    aligned: &AlignedCorpus,
    provider: &SentimentProvider,
) -> Result<CorpusSentiment> {
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    let mut per_day: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for (date, c) in aligned.comments_with_day() {
        let s = provider.score(&c.id, &c.text)?;
        per_day.entry(date).or_default().push(s.compound);
        ids.push(c.id.clone());
        scores.push(s);
    }
    let daily = aligned
        .bars
        .dates()
        .into_iter()
        .map(|d| {
            let values = per_day.get(&d).map(Vec::as_slice).unwrap_or(&[]);
            (d, daily_score(values).score)
        })
        .collect();
    Ok(CorpusSentiment { ids, scores, daily })
}

#[derive(Debug, Clone)]
pub struct TopicRun {
    pub model: TopicModel,
    pub layout: Layout,
    pub tree: CondensedTree,
}

/// Reduction, clustering and topic representation over an aligned corpus.
/// `embeddings` rows must follow the corpus order of `sentiment.ids`.
pub fn fit_topics(
    aligned: &AlignedCorpus,
    embeddings: &EmbeddingMatrix,
    sentiment: &CorpusSentiment,
    params: &TopicParams,
) -> Result<TopicRun> {
    let records: Vec<_> = aligned.comments_with_day().map(|(_, c)| c).collect();
    if embeddings.n_docs != records.len() {
        return Err(Error::LengthMismatch {
            left: embeddings.n_docs,
            right: records.len(),
        });
    }
    let points = embeddings.to_f64_rows();
    let knn = knn_graph(&points, params.k.min(points.len().saturating_sub(1)).max(1))?;
    let graph = fuzzy_weights(&knn)?;
    let layout = optimize_layout(
        &graph,
        &LayoutParams::new(params.out_dim, params.epochs, params.seed, params.min_dist)?,
    )?;
    let clustering = hdbscan(
        &layout.y,
        &HdbscanParams {
            min_pts: params.min_pts,
            min_cluster_size: params.min_cluster_size,
        },
    )?;
    let texts: Vec<String> = records.iter().map(|c| c.text.clone()).collect();
    let stop = default_stop_words([aligned.ticker.as_str()]);
    let model = build_topic_model(
        &texts,
        &sentiment.ids,
        clustering.labels,
        &sentiment.compounds(),
        &stop,
        params.min_df,
        params.n_top,
    )?;
    Ok(TopicRun {
        model,
        layout,
        tree: clustering.tree,
    })
}

pub fn topic_score_column(
    aligned: &AlignedCorpus,
    topics: &TopicModel,
    sentiment: &CorpusSentiment,
) -> Result<Vec<(NaiveDate, f64)>> {
    daily_topic_score(aligned, topics, &sentiment.compound_map())
}

pub fn build_frame(
    features: &FeatureTable,
    sentiment: &CorpusSentiment,
    score_topic: Option<&[(NaiveDate, f64)]>,
) -> DailyFeatureFrame {
    DailyFeatureFrame::new(features, &sentiment.daily, score_topic)
}
