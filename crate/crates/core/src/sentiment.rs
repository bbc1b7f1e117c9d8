//! Lexicon-and-rules sentiment scoring, label thresholds, daily aggregation
//! and a provider for externally computed scores.
//!
//! The rule engine follows the VADER conventions: valences in `[-4, 4]`,
//! negation damping, ALL-CAPS emphasis, degree boosters, exclamation
//! emphasis and the `S / sqrt(S^2 + alpha)` compound normalization.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

const BUNDLED_LEXICON: &str = include_str!("../data/vader_lexicon.tsv");
const BUNDLED_BOOSTERS: &str = include_str!("../data/boosters.tsv");
const BUNDLED_NEGATORS: &str = include_str!("../data/negators.txt");

/// Every tunable constant of the rule engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleConstants {
    pub alpha: f64,
    pub negation_scalar: f64,
    pub caps_increment: f64,
    pub exclamation_increment: f64,
    pub max_exclamations: usize,
    pub negation_window: usize,
    pub booster_window: usize,
    /// Damping applied to a booster 1, 2, ... tokens away.
    pub booster_damping: [f64; 3],
    pub label_threshold: f64,
}

impl Default for RuleConstants {
    fn default() -> Self {
        RuleConstants {
            alpha: 15.0,
            negation_scalar: -0.74,
            caps_increment: 0.733,
            exclamation_increment: 0.292,
            max_exclamations: 4,
            negation_window: 3,
            booster_window: 2,
            booster_damping: [1.0, 0.95, 0.9],
            label_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub entries: HashMap<String, f64>,
    pub boosters: HashMap<String, f64>,
    pub negators: HashSet<String>,
}

fn parse_valence_table(text: &str, what: &str) -> Result<(HashMap<String, f64>, Vec<String>)> {
    let mut map = HashMap::new();
    let mut warnings = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let token = parts.next().unwrap_or_default();
        let value = parts.next().ok_or_else(|| {
            Error::Lexicon(format!("{what} line {}: expected token<TAB>value", n + 1))
        })?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Lexicon(format!("{what} line {}: bad value `{value}`", n + 1)))?;
        if token.is_empty() {
            return Err(Error::Lexicon(format!(
                "{what} line {}: empty token",
                n + 1
            )));
        }
        if map.insert(token.to_string(), value).is_some() {
            warnings.push(format!(
                "{what} line {}: duplicate token `{token}`, last value wins",
                n + 1
            ));
        }
    }
    Ok((map, warnings))
}

impl Lexicon {
    /// Parses `token<TAB>valence` lines. Extra tab-separated columns are
    /// ignored. Returns the lexicon and any duplicate-token warnings.
    pub fn parse(text: &str) -> Result<(Lexicon, Vec<String>)> {
        let (entries, warnings) = parse_valence_table(text, "lexicon")?;
        if entries.is_empty() {
            return Err(Error::Lexicon("lexicon is empty".into()));
        }
        if let Some((t, v)) = entries.iter().find(|(_, v)| !(-4.0..=4.0).contains(*v)) {
            return Err(Error::Lexicon(format!(
                "valence {v} of `{t}` outside [-4, 4]"
            )));
        }
        let (boosters, _) = parse_valence_table(BUNDLED_BOOSTERS, "boosters")?;
        let negators = BUNDLED_NEGATORS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Ok((
            Lexicon {
                entries,
                boosters,
                negators,
            },
            warnings,
        ))
    }

    pub fn load(path: &Path) -> Result<(Lexicon, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Lexicon {
        Self::parse(BUNDLED_LEXICON)
            .expect("bundled lexicon is valid")
            .0
    }

    /// Same rules, every valence sign-flipped.
    pub fn negated(&self) -> Lexicon {
        Lexicon {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), -v)).collect(),
            ..self.clone()
        }
    }

    fn is_negator(&self, lower: &str) -> bool {
        self.negators.contains(lower) || lower.contains("n't")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentScore {
    pub pos: f64,
    pub neu: f64,
    pub neg: f64,
    pub compound: f64,
}

impl SentimentScore {
    pub const NEUTRAL: SentimentScore = SentimentScore {
        pos: 0.0,
        neu: 1.0,
        neg: 0.0,
        compound: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Neutral,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "Positive",
            Label::Neutral => "Neutral",
            Label::Negative => "Negative",
        }
    }
}

fn strip_punctuation(token: &str) -> &str {
    let stripped = token.trim_matches(|c: char| !c.is_alphanumeric());
    // short residues keep emoticons like ":)" intact
    if stripped.chars().count() <= 2 {
        token
    } else {
        stripped
    }
}

fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(strip_punctuation)
        .filter(|t| t.chars().count() > 1)
        .collect()
}

fn is_all_caps(token: &str) -> bool {
    token.chars().any(char::is_alphabetic)
        && !token
            .chars()
            .any(|c| c.is_alphabetic() && !c.is_uppercase())
}

/// `S / sqrt(S^2 + alpha)`, clamped to `[-1, 1]`.
pub fn normalize(sum: f64, alpha: f64) -> f64 {
    (sum / (sum * sum + alpha).sqrt()).clamp(-1.0, 1.0)
}

pub fn score_comment(text: &str, lexicon: &Lexicon) -> SentimentScore {
    score_with(text, lexicon, &RuleConstants::default())
}

pub fn score_with(text: &str, lexicon: &Lexicon, k: &RuleConstants) -> SentimentScore {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return SentimentScore::NEUTRAL;
    }
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let n_caps = tokens.iter().filter(|t| is_all_caps(t)).count();
    let caps_differential = n_caps > 0 && n_caps < tokens.len();

    let mut contributions = Vec::with_capacity(tokens.len());
    for (i, token) in tokens.iter().enumerate() {
        if lexicon.boosters.contains_key(&lower[i]) {
            contributions.push(0.0);
            continue;
        }
        let Some(&base) = lexicon.entries.get(&lower[i]) else {
            contributions.push(0.0);
            continue;
        };
        let mut v = base;
        if v != 0.0 && caps_differential && is_all_caps(token) {
            v += k.caps_increment * v.signum();
        }
        for d in 1..=k.booster_window.min(i) {
            let j = i - d;
            if lexicon.entries.contains_key(&lower[j]) {
                continue;
            }
            if let Some(&inc) = lexicon.boosters.get(&lower[j]) {
                let mut s = if v < 0.0 { -inc } else { inc };
                if caps_differential && is_all_caps(tokens[j]) {
                    s += k.caps_increment * s.signum();
                }
                v += s * k.booster_damping.get(d - 1).copied().unwrap_or(0.9);
            }
        }
        let window_start = i.saturating_sub(k.negation_window);
        if lower[window_start..i].iter().any(|w| lexicon.is_negator(w)) {
            v *= k.negation_scalar;
        }
        contributions.push(v);
    }

    let mut sum: f64 = contributions.iter().sum();
    let bangs = text.matches('!').count().min(k.max_exclamations);
    let emphasis = bangs as f64 * k.exclamation_increment;
    if sum > 0.0 {
        sum += emphasis;
    } else if sum < 0.0 {
        sum -= emphasis;
    }
    let compound = normalize(sum, k.alpha);

    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let mut neu_count = 0.0;
    for &c in &contributions {
        if c > 0.0 {
            pos_sum += c + 1.0;
        } else if c < 0.0 {
            neg_sum += c - 1.0;
        } else {
            neu_count += 1.0;
        }
    }
    if pos_sum > neg_sum.abs() {
        pos_sum += emphasis;
    } else if pos_sum < neg_sum.abs() {
        neg_sum -= emphasis;
    }
    let total = pos_sum + neg_sum.abs() + neu_count;
    SentimentScore {
        pos: pos_sum / total,
        neu: neu_count / total,
        neg: neg_sum.abs() / total,
        compound,
    }
}

pub fn classify(compound: f64) -> Label {
    classify_with(compound, RuleConstants::default().label_threshold)
}

pub fn classify_with(compound: f64, threshold: f64) -> Label {
    if compound >= threshold {
        Label::Positive
    } else if compound <= -threshold {
        Label::Negative
    } else {
        Label::Neutral
    }
}

/// Mean compound of one day's comments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyScore {
    pub score: f64,
    /// No comments that day; `score` is the neutral default.
    pub empty: bool,
}

pub fn daily_score(compounds: &[f64]) -> DailyScore {
    if compounds.is_empty() {
        return DailyScore {
            score: 0.0,
            empty: true,
        };
    }
    DailyScore {
        score: compounds.iter().sum::<f64>() / compounds.len() as f64,
        empty: false,
    }
}

/// Weighted mean of `(compound, weight)` pairs; zero total weight is neutral.
pub fn daily_score_weighted(items: &[(f64, f64)]) -> DailyScore {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    if items.is_empty() || total <= 0.0 {
        return DailyScore {
            score: 0.0,
            empty: items.is_empty(),
        };
    }
    DailyScore {
        score: items.iter().map(|(c, w)| c * w).sum::<f64>() / total,
        empty: false,
    }
}

/// Per-comment compound scores computed outside this crate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    scores: HashMap<String, f64>,
}

impl ExternalScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<f64> {
        self.scores
            .get(id)
            .copied()
            .ok_or_else(|| Error::MissingId(id.to_string()))
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<ExternalScores> {
        #[derive(serde::Deserialize)]
        struct Row {
            comment_id: String,
            compound: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut scores = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let row: Row = rec.deserialize(None).map_err(|e| Error::Row {
                line,
                message: e.to_string(),
            })?;
            if !(-1.0..=1.0).contains(&row.compound) {
                return Err(Error::Row {
                    line,
                    message: format!("compound {} outside [-1, 1]", row.compound),
                });
            }
            if scores
                .insert(row.comment_id.clone(), row.compound)
                .is_some()
            {
                return Err(Error::Row {
                    line,
                    message: format!("duplicate comment id `{}`", row.comment_id),
                });
            }
        }
        Ok(ExternalScores { scores })
    }
}

pub fn load_external_scores(path: &Path) -> Result<SentimentProvider> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(SentimentProvider::External(ExternalScores::from_reader(
        file,
    )?))
}

#[derive(Debug, Clone)]
pub enum SentimentProvider {
    Lexicon(Arc<Lexicon>),
    External(ExternalScores),
}

impl SentimentProvider {
    pub fn kind(&self) -> &'static str {
        match self {
            SentimentProvider::Lexicon(_) => "lexicon",
            SentimentProvider::External(_) => "external",
        }
    }

    /// Scores a comment. The external provider answers by id and reports
    /// only a compound, so its proportions are left at neutral.
    pub fn score(&self, id: &str, text: &str) -> Result<SentimentScore> {
        match self {
            SentimentProvider::Lexicon(lex) => Ok(score_comment(text, lex)),
            SentimentProvider::External(ext) => {
                let compound = ext.get(id)?;
                Ok(SentimentScore {
                    compound,
                    ..SentimentScore::NEUTRAL
                })
            }
        }
    }
}
