//! A seeded synthetic ticker whose next-day price reacts to the topic mix of
//! the previous day's comments.
//!
//! Every comment belongs to one of four themes with disjoint vocabularies, two
//! upbeat and two downbeat. The day's signal is the mean polarity (+1 or -1)
//! of its comments' themes, and the close follows
//!
//! ```text
//! close[d+1] = level + reversion * (close[d] - level) + effect * signal[d] + noise
//! ```

use std::io::Write;

use chrono::{Datelike, Days, NaiveDate, TimeZone, Utc, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::ingest::{clean_text, write_bars, write_comments, Bar, BarSeries, CommentRecord};

pub struct Theme {
    pub name: &'static str,
    pub polarity: f64,
    pub words: &'static [&'static str],
}

pub const THEMES: [Theme; 4] = [
    Theme {
        name: "earnings",
        polarity: 1.0,
        words: &[
            "earnings",
            "beat",
            "revenue",
            "growth",
            "profit",
            "record",
            "guidance",
            "raised",
            "strong",
            "great",
            "excellent",
            "outstanding",
            "quarter",
            "margin",
            "win",
        ],
    },
    Theme {
        name: "product",
        polarity: 1.0,
        words: &[
            "launch",
            "product",
            "customers",
            "love",
            "amazing",
            "innovation",
            "preorders",
            "orders",
            "best",
            "awesome",
            "exciting",
            "fantastic",
            "popular",
            "success",
            "brilliant",
        ],
    },
    Theme {
        name: "legal",
        polarity: -1.0,
        words: &[
            "lawsuit",
            "court",
            "fraud",
            "investigation",
            "scandal",
            "regulators",
            "penalty",
            "bad",
            "terrible",
            "guilty",
            "accused",
            "crisis",
            "worst",
            "awful",
            "ugly",
        ],
    },
    Theme {
        name: "macro",
        polarity: -1.0,
        words: &[
            "recession",
            "inflation",
            "rates",
            "selloff",
            "crash",
            "panic",
            "fear",
            "weak",
            "loss",
            "losses",
            "decline",
            "worried",
            "gloomy",
            "miserable",
            "disaster",
        ],
    },
];

const FILLER: &[&str] = &[
    "today", "stock", "shares", "market", "news", "again", "just", "really",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub ticker: String,
    pub company: String,
    pub days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    pub min_comments: usize,
    pub max_comments: usize,
    pub level: f64,
    pub reversion: f64,
    pub effect: f64,
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            ticker: "SYN".into(),
            company: "Synthetic Corp".into(),
            days: 250,
            start: NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
            seed: 2022,
            min_comments: 1,
            max_comments: 3,
            level: 100.0,
            reversion: 0.9,
            effect: 3.0,
            noise: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub comments: Vec<CommentRecord>,
    pub bars: BarSeries,
    /// Theme index of every comment.
    pub themes: Vec<usize>,
    /// Mean theme polarity per trading day.
    pub signal: Vec<f64>,
}

impl SyntheticCorpus {
    pub fn write(&self, comments: impl Write, bars: impl Write) -> Result<()> {
        write_comments(&self.comments, comments)?;
        write_bars(&self.bars, bars)
    }
}

fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut days = Vec::with_capacity(n);
    let mut d = start;
    while days.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            days.push(d);
        }
        d = d + Days::new(1);
    }
    days
}

fn comment_text(theme: &Theme, ticker: &str, rng: &mut ChaCha8Rng) -> String {
    let n_words = rng.gen_range(5..=8);
    let mut words: Vec<String> = (0..n_words)
        .map(|_| theme.words.choose(rng).unwrap().to_string())
        .collect();
    words.push(FILLER.choose(rng).unwrap().to_string());
    words.shuffle(rng);
    if rng.gen_bool(0.5) {
        words.insert(0, format!("${ticker}"));
    }
    words.join(" ")
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise).unwrap();
    let wick = Normal::new(0.0, config.noise * 0.5).unwrap();
    let days = trading_days(config.start, config.days);

    let mut comments = Vec::new();
    let mut themes = Vec::new();
    let mut signal = Vec::with_capacity(days.len());
    for &day in &days {
        let n = rng.gen_range(config.min_comments..=config.max_comments);
        let mut polarity = 0.0;
        for _ in 0..n {
            let t = rng.gen_range(0..THEMES.len());
            polarity += THEMES[t].polarity;
            let time = Utc.from_utc_datetime(
                &day.and_hms_opt(rng.gen_range(9..16), rng.gen_range(0..60), 0)
                    .unwrap(),
            );
            comments.push(CommentRecord {
                id: comments.len().to_string(),
                date: time,
                text: clean_text(&comment_text(&THEMES[t], &config.ticker, &mut rng)),
                stock_name: config.ticker.clone(),
                company_name: config.company.clone(),
            });
            themes.push(t);
        }
        signal.push(polarity / n as f64);
    }

    let mut bars = Vec::with_capacity(days.len());
    let mut close = config.level;
    for (i, &day) in days.iter().enumerate() {
        if i > 0 {
            close = config.level
                + config.reversion * (close - config.level)
                + config.effect * signal[i - 1]
                + noise.sample(&mut rng);
        }
        let open = if i == 0 {
            close
        } else {
            bars.last().map(|b: &Bar| b.close).unwrap()
        };
        let high = open.max(close) + wick.sample(&mut rng).abs();
        let low = open.min(close) - wick.sample(&mut rng).abs();
        bars.push(Bar {
            date: day,
            open,
            high,
            low,
            close,
            adj_close: close,
            volume: rng.gen_range(800_000..1_200_000),
            stock_name: config.ticker.clone(),
        });
    }
    SyntheticCorpus {
        comments,
        bars: BarSeries { bars },
        themes,
        signal,
    }
}
