//! Comment and price-bar ingestion.
//!
//! Comments are read from a CSV with the columns `Date`, `Tweet`,
//! `Stock Name` and `Company Name` (an unnamed or `Index` column in front is
//! accepted and used as the comment id). Bars are read from a CSV with
//! `Date, Open, High, Low, Close, Adj Close, Volume, Stock Name`.
//!
//! Comments posted on a non-trading day roll forward to the next trading day
//! present in the bar series. Comments after the last bar are dropped and
//! counted.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%:z";

#[derive(Debug, Clone, PartialEq)]
pub struct CommentRecord {
    /// Index column value when present, otherwise the 0-based data row.
    pub id: String,
    pub date: DateTime<Utc>,
    pub text: String,
    pub stock_name: String,
    pub company_name: String,
}

/// A row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct CommentParse {
    pub records: Vec<CommentRecord>,
    pub errors: Vec<RowError>,
    /// Rows whose text was empty after cleaning.
    pub dropped_empty: usize,
}

impl CommentParse {
    /// Writes the error report as CSV `line,message`.
    pub fn write_error_report(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        for e in &self.errors {
            wtr.serialize(e)?;
        }
        if self.errors.is_empty() {
            wtr.write_record(["line", "message"])?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: u64,
    pub stock_name: String,
}

/// Daily bars, sorted by `(stock_name, date)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BarSeries {
    pub bars: Vec<Bar>,
}

impl BarSeries {
    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn tickers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for b in &self.bars {
            if out.last() != Some(&b.stock_name) {
                out.push(b.stock_name.clone());
            }
        }
        out
    }

    pub fn for_ticker(&self, ticker: &str) -> BarSeries {
        BarSeries {
            bars: self
                .bars
                .iter()
                .filter(|b| b.stock_name == ticker)
                .cloned()
                .collect(),
        }
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn column(&self, f: impl Fn(&Bar) -> f64) -> Vec<f64> {
        self.bars.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayBucket {
    pub date: NaiveDate,
    pub comments: Vec<CommentRecord>,
}

impl DayBucket {
    pub fn texts(&self) -> Vec<&str> {
        self.comments.iter().map(|c| c.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCorpus {
    pub ticker: String,
    /// Trading days that received at least one comment, ascending.
    pub days: Vec<DayBucket>,
    pub bars: BarSeries,
    pub dropped_after_last_bar: usize,
}

impl AlignedCorpus {
    pub fn flatten(&self) -> Vec<CommentRecord> {
        self.days
            .iter()
            .flat_map(|d| d.comments.iter().cloned())
            .collect()
    }

    pub fn n_comments(&self) -> usize {
        self.days.iter().map(|d| d.comments.len()).sum()
    }

    /// Comments in day order, each paired with the trading day it was assigned to.
    pub fn comments_with_day(&self) -> impl Iterator<Item = (NaiveDate, &CommentRecord)> {
        self.days
            .iter()
            .flat_map(|d| d.comments.iter().map(move |c| (d.date, c)))
    }
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|\B)@\w+").unwrap())
}

fn cashtag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$([A-Za-z][A-Za-z0-9.]*)").unwrap())
}

/// Strips URLs and @mentions, turns cashtags into bare symbols and collapses
/// whitespace. Casing and punctuation are kept.
pub fn clean_text(raw: &str) -> String {
    let s = url_re().replace_all(raw, " ");
    let s = mention_re().replace_all(&s, " ");
    let s = cashtag_re().replace_all(&s, "$1");
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map(|d| d.with_timezone(&Utc))
        .map_err(|e| format!("unparseable timestamp `{s}`: {e}"))
}

fn valid_ticker(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_digit() || c.is_ascii_uppercase())
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

pub fn parse_comments(path: &Path) -> Result<CommentParse> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_comments_from(file, path)
}

/// `path` is only used in error messages.
pub fn parse_comments_from<R: Read>(reader: R, path: &Path) -> Result<CommentParse> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_i = column_index(&headers, "Date", path)?;
    let text_i = column_index(&headers, "Tweet", path)?;
    let stock_i = column_index(&headers, "Stock Name", path)?;
    let company_i = column_index(&headers, "Company Name", path)?;
    let index_i = headers
        .iter()
        .position(|h| h.trim().is_empty() || h.trim() == "Index");

    let mut out = CommentParse::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            out.errors.push(RowError {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
            continue;
        }
        let date = match parse_timestamp(&rec[date_i]) {
            Ok(d) => d,
            Err(message) => {
                out.errors.push(RowError { line, message });
                continue;
            }
        };
        let stock_name = rec[stock_i].trim().to_string();
        if !valid_ticker(&stock_name) {
            out.errors.push(RowError {
                line,
                message: format!("invalid ticker `{stock_name}`"),
            });
            continue;
        }
        let text = clean_text(&rec[text_i]);
        if text.is_empty() {
            out.dropped_empty += 1;
            continue;
        }
        let id = match index_i {
            Some(i) if !rec[i].trim().is_empty() => rec[i].trim().to_string(),
            _ => row.to_string(),
        };
        out.records.push(CommentRecord {
            id,
            date,
            text,
            stock_name,
            company_name: rec[company_i].to_string(),
        });
    }
    Ok(out)
}

/// Writes records in the same layout `parse_comments` reads, with the id as
/// the index column.
pub fn write_comments<W: Write>(records: &[CommentRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["", "Date", "Tweet", "Stock Name", "Company Name"])?;
    for r in records {
        let date = r.date.format(TIMESTAMP_FORMAT).to_string();
        wtr.write_record([
            r.id.as_str(),
            date.as_str(),
            r.text.as_str(),
            r.stock_name.as_str(),
            r.company_name.as_str(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<comments writer>", e))?;
    Ok(())
}

pub fn parse_bars(path: &Path) -> Result<BarSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_bars_from(file, path)
}

fn parse_price(field: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Row {
        line,
        message: format!("non-numeric {name} `{field}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Row {
            line,
            message: format!("non-finite {name} `{field}`"),
        });
    }
    Ok(v)
}

fn parse_volume(field: &str, line: u64) -> Result<u64> {
    let t = field.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    match t.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(Error::Row {
            line,
            message: format!("invalid volume `{field}`"),
        }),
    }
}

pub fn parse_bars_from<R: Read>(reader: R, path: &Path) -> Result<BarSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = |name: &str| column_index(&headers, name, path);
    let (date_i, open_i, high_i, low_i, close_i, adj_i, vol_i, stock_i) = (
        idx("Date")?,
        idx("Open")?,
        idx("High")?,
        idx("Low")?,
        idx("Close")?,
        idx("Adj Close")?,
        idx("Volume")?,
        idx("Stock Name")?,
    );

    let mut bars = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let date =
            NaiveDate::parse_from_str(rec[date_i].trim(), "%Y-%m-%d").map_err(|e| Error::Row {
                line,
                message: format!("unparseable date `{}`: {e}", &rec[date_i]),
            })?;
        let bar = Bar {
            date,
            open: parse_price(&rec[open_i], "Open", line)?,
            high: parse_price(&rec[high_i], "High", line)?,
            low: parse_price(&rec[low_i], "Low", line)?,
            close: parse_price(&rec[close_i], "Close", line)?,
            adj_close: parse_price(&rec[adj_i], "Adj Close", line)?,
            volume: parse_volume(&rec[vol_i], line)?,
            stock_name: rec[stock_i].trim().to_string(),
        };
        if !valid_ticker(&bar.stock_name) {
            return Err(Error::Row {
                line,
                message: format!("invalid ticker `{}`", bar.stock_name),
            });
        }
        if bar.high < bar.low
            || bar.low > bar.open.min(bar.close)
            || bar.high < bar.open.max(bar.close)
        {
            return Err(Error::Row {
                line,
                message: format!(
                    "price range violated: low {} high {} open {} close {}",
                    bar.low, bar.high, bar.open, bar.close
                ),
            });
        }
        if !seen.insert((bar.stock_name.clone(), bar.date)) {
            return Err(Error::Row {
                line,
                message: format!("duplicate bar for {} on {}", bar.stock_name, bar.date),
            });
        }
        bars.push(bar);
    }
    bars.sort_by(|a, b| {
        a.stock_name
            .cmp(&b.stock_name)
            .then_with(|| a.date.cmp(&b.date))
    });
    Ok(BarSeries { bars })
}

pub fn write_bars<W: Write>(bars: &BarSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "Date",
        "Open",
        "High",
        "Low",
        "Close",
        "Adj Close",
        "Volume",
        "Stock Name",
    ])?;
    for b in &bars.bars {
        wtr.write_record([
            b.date.to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.adj_close.to_string(),
            b.volume.to_string(),
            b.stock_name.clone(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<bars writer>", e))?;
    Ok(())
}

/// Buckets the ticker's comments by trading day.
pub fn align(comments: &[CommentRecord], bars: &BarSeries, ticker: &str) -> Result<AlignedCorpus> {
    let bars = bars.for_ticker(ticker);
    if bars.is_empty() {
        return Err(Error::UnknownTicker(ticker.to_string()));
    }
    let mine: Vec<&CommentRecord> = comments.iter().filter(|c| c.stock_name == ticker).collect();
    if mine.is_empty() && !comments.is_empty() {
        return Err(Error::UnknownTicker(ticker.to_string()));
    }

    let dates = bars.dates();
    let mut buckets: BTreeMap<NaiveDate, Vec<CommentRecord>> = BTreeMap::new();
    let mut dropped = 0;
    for c in mine {
        let day = c.date.date_naive();
        // first trading date >= day
        let pos = dates.partition_point(|d| *d < day);
        match dates.get(pos) {
            Some(d) => buckets.entry(*d).or_default().push(c.clone()),
            None => dropped += 1,
        }
    }
    let days = buckets
        .into_iter()
        .map(|(date, comments)| DayBucket { date, comments })
        .collect();
    Ok(AlignedCorpus {
        ticker: ticker.to_string(),
        days,
        bars,
        dropped_after_last_bar: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("<test>")
    }

    const TABLE2: &str = "Date,Open,High,Low,Close,Adj Close,Volume,Stock Name
2021-09-30,165.80,166.39,163.70,164.25,164.25,56848000,AMZN
2021-10-01,164.45,165.46,162.80,164.16,164.16,56712000,AMZN
2021-10-04,163.97,164.00,158.81,159.49,159.49,90462000,AMZN
2021-10-05,160.23,163.04,160.12,161.05,161.05,65384000,AMZN
2021-10-06,160.68,163.22,159.93,163.10,163.10,50660000,AMZN
2021-10-07,164.58,166.29,164.15,165.12,165.12,48182000,AMZN
2021-10-08,165.85,166.07,164.41,164.43,164.43,39964000,AMZN
2021-10-11,163.75,164.63,161.90,162.32,162.32,40684000,AMZN
2021-10-12,162.85,163.38,161.81,162.37,162.37,36392000,AMZN
";

    fn comment(id: &str, ts: &str, text: &str) -> CommentRecord {
        CommentRecord {
            id: id.into(),
            date: parse_timestamp(ts).unwrap(),
            text: text.into(),
            stock_name: "AMZN".into(),
            company_name: "Amazon.com, Inc.".into(),
        }
    }

    #[test]
    fn table_one_row() {
        let csv = ",Date,Tweet,Stock Name,Company Name
48351,2022-09-29 22:40:47+00:00,A group of lawmakers led by Sen. Elizabeth War...,AMZN,\"Amazon.com, Inc.\"
";
        let parsed = parse_comments_from(csv.as_bytes(), &p()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let r = &parsed.records[0];
        assert_eq!(r.id, "48351");
        assert_eq!(r.stock_name, "AMZN");
        assert_eq!(r.company_name, "Amazon.com, Inc.");
        assert_eq!(r.date.to_rfc3339(), "2022-09-29T22:40:47+00:00");
    }

    #[test]
    fn empty_file_with_header() {
        let parsed =
            parse_comments_from("Date,Tweet,Stock Name,Company Name\n".as_bytes(), &p()).unwrap();
        assert!(parsed.records.is_empty());
        assert!(parsed.errors.is_empty());
    }

    #[test]
    fn corrupt_timestamp_is_reported() {
        let csv = "Date,Tweet,Stock Name,Company Name
2022-09-29 22:40:47+00:00,fine,AMZN,Amazon
2022-13-45 99:40:47+00:00,broken,AMZN,Amazon
";
        let parsed = parse_comments_from(csv.as_bytes(), &p()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.errors.len(), 1);
        assert_eq!(parsed.errors[0].line, 3);
    }

    #[test]
    fn missing_column() {
        let err = parse_comments_from("Date,Tweet,Company Name\n".as_bytes(), &p()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "Stock Name"));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            parse_comments(Path::new("/nonexistent/comments.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn quoted_fields_with_commas_and_newlines() {
        let csv = "Date,Tweet,Stock Name,Company Name
2022-09-29 15:57:59+00:00,\"Druckenmiller owned $CVNA this year
Munger b, ok\",AMZN,\"Amazon.com, Inc.\"
";
        let parsed = parse_comments_from(csv.as_bytes(), &p()).unwrap();
        assert_eq!(
            parsed.records[0].text,
            "Druckenmiller owned CVNA this year Munger b, ok"
        );
    }

    #[test]
    fn empty_text_is_dropped_and_counted() {
        let csv = "Date,Tweet,Stock Name,Company Name
2022-09-29 15:57:59+00:00,https://t.co/abc @someone,AMZN,Amazon
";
        let parsed = parse_comments_from(csv.as_bytes(), &p()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.dropped_empty, 1);
    }

    #[test]
    fn table_two_first_row() {
        let bars = parse_bars_from(TABLE2.as_bytes(), &p()).unwrap();
        assert_eq!(bars.len(), 9);
        let b = &bars.bars[0];
        assert_eq!(b.date, NaiveDate::from_ymd_opt(2021, 9, 30).unwrap());
        assert_eq!(b.adj_close, 164.25);
        assert_eq!(b.volume, 56848000);
    }

    #[test]
    fn single_row_bars() {
        let csv = TABLE2.lines().take(2).collect::<Vec<_>>().join("\n");
        assert_eq!(parse_bars_from(csv.as_bytes(), &p()).unwrap().len(), 1);
    }

    #[test]
    fn shuffled_bars_come_out_sorted() {
        let lines: Vec<&str> = TABLE2.lines().collect();
        let shuffled = [lines[0], lines[4], lines[2], lines[5], lines[1], lines[3]].join("\n");
        let bars = parse_bars_from(shuffled.as_bytes(), &p()).unwrap();
        let got: Vec<String> = bars.bars.iter().map(|b| b.date.to_string()).collect();
        assert_eq!(
            got,
            [
                "2021-09-30",
                "2021-10-01",
                "2021-10-04",
                "2021-10-05",
                "2021-10-06"
            ]
        );
    }

    #[test]
    fn bar_errors() {
        let bad_price = "Date,Open,High,Low,Close,Adj Close,Volume,Stock Name
2021-09-30,abc,166.39,163.70,164.25,164.25,56848000,AMZN
";
        assert!(matches!(
            parse_bars_from(bad_price.as_bytes(), &p()),
            Err(Error::Row { line: 2, .. })
        ));
        let inverted = "Date,Open,High,Low,Close,Adj Close,Volume,Stock Name
2021-09-30,165,160,170,165,165,1,AMZN
";
        assert!(matches!(
            parse_bars_from(inverted.as_bytes(), &p()),
            Err(Error::Row { line: 2, .. })
        ));
        let dup = "Date,Open,High,Low,Close,Adj Close,Volume,Stock Name
2021-09-30,165,166,163,165,165,1,AMZN
2021-09-30,165,166,163,165,165,1,AMZN
";
        assert!(matches!(
            parse_bars_from(dup.as_bytes(), &p()),
            Err(Error::Row { line: 3, .. })
        ));
    }

    #[test]
    fn clean_text_rules() {
        assert_eq!(clean_text("check https://x.co $NIO now"), "check NIO now");
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("GOOD    stock"), "GOOD stock");
        assert_eq!(
            clean_text("@trader thinks $AMZN is great!"),
            "thinks AMZN is great!"
        );
        assert_eq!(clean_text("mail me a@b.com"), "mail me a@b.com");
    }

    #[test]
    fn weekend_rolls_forward() {
        let bars = parse_bars_from(TABLE2.as_bytes(), &p()).unwrap();
        let comments = vec![
            comment("0", "2021-10-02 12:00:00+00:00", "saturday"),
            comment("1", "2021-09-30 01:00:00+00:00", "same day"),
            comment("2", "2021-10-20 01:00:00+00:00", "too late"),
        ];
        let aligned = align(&comments, &bars, "AMZN").unwrap();
        assert_eq!(aligned.days.len(), 2);
        assert_eq!(aligned.days[0].date.to_string(), "2021-09-30");
        assert_eq!(aligned.days[0].texts(), ["same day"]);
        assert_eq!(aligned.days[1].date.to_string(), "2021-10-04");
        assert_eq!(aligned.days[1].texts(), ["saturday"]);
        assert_eq!(aligned.dropped_after_last_bar, 1);
    }

    #[test]
    fn zero_comments() {
        let bars = parse_bars_from(TABLE2.as_bytes(), &p()).unwrap();
        let aligned = align(&[], &bars, "AMZN").unwrap();
        assert!(aligned.days.is_empty());
        assert_eq!(aligned.bars.len(), 9);
    }

    #[test]
    fn unknown_ticker() {
        let bars = parse_bars_from(TABLE2.as_bytes(), &p()).unwrap();
        assert!(matches!(
            align(&[], &bars, "TSLA"),
            Err(Error::UnknownTicker(_))
        ));
    }
}
