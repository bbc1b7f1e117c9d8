//! The per-trading-day model input table: indicator columns joined with the
//! daily `score` and `score_topic` sentiment columns.

use std::collections::HashMap;
use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::indicators::FeatureTable;

pub const SCORE: &str = "score";
pub const SCORE_TOPIC: &str = "score_topic";
pub const TARGET: &str = "adj_close";

#[derive(Debug, Clone, PartialEq)]
pub struct DailyFeatureFrame {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<(String, Vec<f64>)>,
}

/// Looks up a per-date value; dates without an entry get 0.
fn join(dates: &[NaiveDate], values: &[(NaiveDate, f64)]) -> Vec<f64> {
    let map: HashMap<NaiveDate, f64> = values.iter().copied().collect();
    dates
        .iter()
        .map(|d| map.get(d).copied().unwrap_or(0.0))
        .collect()
}

impl DailyFeatureFrame {
    pub fn new(
        features: &FeatureTable,
        score: &[(NaiveDate, f64)],
        score_topic: Option<&[(NaiveDate, f64)]>,
    ) -> DailyFeatureFrame {
        let mut columns = features.columns.clone();
        columns.push((SCORE.to_string(), join(&features.dates, score)));
        if let Some(topic) = score_topic {
            columns.push((SCORE_TOPIC.to_string(), join(&features.dates, topic)));
        }
        DailyFeatureFrame {
            dates: features.dates.clone(),
            columns,
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Unknown {
                kind: "column",
                name: name.to_string(),
            })
    }

    /// Indicator columns, optionally followed by `score` and/or `score_topic`.
    pub fn feature_names(&self, with_score: bool, with_topic_score: bool) -> Vec<String> {
        let mut names: Vec<String> = self
            .columns
            .iter()
            .map(|(n, _)| n.clone())
            .filter(|n| n != SCORE && n != SCORE_TOPIC)
            .collect();
        if with_score {
            names.push(SCORE.to_string());
        }
        if with_topic_score {
            names.push(SCORE_TOPIC.to_string());
        }
        names
    }

    /// Row-major matrix of the named columns.
    pub fn rows(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let table = FeatureTable {
            dates: self.dates.clone(),
            columns: self.columns.clone(),
            warmup_dropped: 0,
        };
        table.write_csv(writer)
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<DailyFeatureFrame> {
        let table = FeatureTable::read_csv(reader)?;
        Ok(DailyFeatureFrame {
            dates: table.dates,
            columns: table.columns,
        })
    }
}
