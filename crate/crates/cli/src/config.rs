//! Run configuration: a TOML file validated field by field.

use std::path::{Path, PathBuf};

use toml::{Table, Value};
use topicforge::eval::{ReportFormat, Variant};
use topicforge::nn::Architecture;
use topicforge::pipeline::TopicParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub comments: PathBuf,
    pub bars: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub external_scores: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Lexicon,
    External,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Lexicon => "lexicon",
            Engine::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastParams {
    pub lookback: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    pub seeds: Vec<u64>,
    pub models: Vec<Architecture>,
    pub variants: Vec<Variant>,
    pub engine: Engine,
    pub topic_keeps_score: bool,
    pub non_saturating_gan: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ticker: String,
    pub paths: Paths,
    pub momentum_lag: usize,
    pub topics: TopicParams,
    pub forecast: ForecastParams,
    pub report_format: ReportFormat,
    /// Verbatim file contents, embedded in reports.
    pub source: String,
}

#[derive(Debug, Default)]
pub struct Validation {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

/// Command-line values that replace config fields after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ticker: Option<String>,
    pub variant: Option<Variant>,
}

const SECTIONS: [(&str, &[&str]); 5] = [
    (
        "paths",
        &[
            "comments",
            "bars",
            "lexicon",
            "embeddings",
            "external_scores",
            "output",
        ],
    ),
    ("features", &["momentum_lag"]),
    (
        "topics",
        &[
            "k",
            "out_dim",
            "min_dist",
            "epochs_umap",
            "min_pts",
            "min_cluster_size",
            "min_df",
            "n_top_words",
            "embed_dim",
            "seed",
        ],
    ),
    (
        "forecast",
        &[
            "lookback",
            "epochs",
            "learning_rate",
            "batch_size",
            "seeds",
            "models",
            "variants",
            "sentiment_engine",
            "topic_keeps_score",
            "non_saturating_gan",
        ],
    ),
    ("report", &["format"]),
];

struct Reader<'a> {
    root: &'a Table,
    base: &'a Path,
    out: Validation,
}

impl<'a> Reader<'a> {
    fn value(&self, section: &str, key: &str) -> Option<&'a Value> {
        self.root.get(section)?.as_table()?.get(key)
    }

    fn error(&mut self, section: &str, key: &str, msg: impl std::fmt::Display) {
        self.out.errors.push(format!("{section}.{key}: {msg}"));
    }

    fn integer(&mut self, section: &str, key: &str, default: usize, min: usize) -> usize {
        match self.value(section, key) {
            None => default,
            Some(Value::Integer(v)) if *v >= min as i64 => *v as usize,
            Some(Value::Integer(v)) => {
                self.error(section, key, format!("must be at least {min}, got {v}"));
                default
            }
            Some(other) => {
                self.error(
                    section,
                    key,
                    format!("expected an integer, got {}", other.type_str()),
                );
                default
            }
        }
    }

    fn float(
        &mut self,
        section: &str,
        key: &str,
        default: f64,
        valid: impl Fn(f64) -> bool,
        rule: &str,
    ) -> f64 {
        let v = match self.value(section, key) {
            None => return default,
            Some(Value::Float(v)) => *v,
            Some(Value::Integer(v)) => *v as f64,
            Some(other) => {
                self.error(
                    section,
                    key,
                    format!("expected a number, got {}", other.type_str()),
                );
                return default;
            }
        };
        if !valid(v) {
            self.error(section, key, format!("{rule}, got {v}"));
            return default;
        }
        v
    }

    fn boolean(&mut self, section: &str, key: &str) -> bool {
        match self.value(section, key) {
            None => false,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                self.error(
                    section,
                    key,
                    format!("expected true or false, got {}", other.type_str()),
                );
                false
            }
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Option<&'a str> {
        match self.value(section, key)? {
            Value::String(s) => Some(s),
            other => {
                self.error(
                    section,
                    key,
                    format!("expected a string, got {}", other.type_str()),
                );
                None
            }
        }
    }

    fn path(&mut self, key: &str, required: bool, must_exist: bool) -> Option<PathBuf> {
        let Some(raw) = self.string("paths", key) else {
            if required && self.value("paths", key).is_none() {
                self.error("paths", key, "is required");
            }
            return None;
        };
        let path = self.base.join(raw);
        if must_exist && !path.is_file() {
            self.error(
                "paths",
                key,
                format!("file `{}` does not exist", path.display()),
            );
        }
        Some(path)
    }

    fn list<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: Vec<T>) -> Vec<T> {
        let Some(value) = self.value(section, key) else {
            return default;
        };
        let Some(items) = value.as_array() else {
            self.error(
                section,
                key,
                format!("expected a list, got {}", value.type_str()),
            );
            return default;
        };
        if items.is_empty() {
            self.error(section, key, "must not be empty");
            return default;
        }
        let mut out = Vec::new();
        let mut bad = Vec::new();
        for item in items {
            let text = match item {
                Value::String(s) => s.clone(),
                Value::Integer(i) => i.to_string(),
                other => other.to_string(),
            };
            match text.parse() {
                Ok(v) => out.push(v),
                Err(_) => bad.push(text),
            }
        }
        if !bad.is_empty() {
            self.error(section, key, format!("unrecognized entries {bad:?}"));
            return default;
        }
        out
    }

    fn unknown_keys(&mut self) {
        for (key, value) in self.root {
            if key == "ticker" {
                continue;
            }
            match SECTIONS.iter().find(|(name, _)| name == key) {
                None => self
                    .out
                    .warnings
                    .push(format!("unknown key `{key}` ignored")),
                Some((name, known)) => match value.as_table() {
                    None => self.out.errors.push(format!("{name}: expected a section")),
                    Some(table) => {
                        for inner in table.keys().filter(|k| !known.contains(&k.as_str())) {
                            self.out
                                .warnings
                                .push(format!("unknown key `{name}.{inner}` ignored"));
                        }
                    }
                },
            }
        }
    }
}

/// Parses and checks a config file. Relative paths resolve against the
/// file's directory. Every violated rule is reported; unknown keys only warn.
pub fn validate_config(
    path: &Path,
    overrides: &Overrides,
) -> Result<(RunConfig, Vec<String>), Validation> {
    let source = std::fs::read_to_string(path).map_err(|e| Validation {
        errors: vec![format!("cannot read config `{}`: {e}", path.display())],
        warnings: Vec::new(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    validate_str(&source, base, overrides)
}

pub fn validate_str(
    source: &str,
    base: &Path,
    overrides: &Overrides,
) -> Result<(RunConfig, Vec<String>), Validation> {
    let root: Table = toml::from_str(source).map_err(|e| Validation {
        errors: vec![format!("config is not valid TOML: {}", e.message())],
        warnings: Vec::new(),
    })?;
    let mut r = Reader {
        root: &root,
        base,
        out: Validation::default(),
    };
    r.unknown_keys();

    let ticker = match (&overrides.ticker, root.get("ticker")) {
        (Some(t), _) => t.clone(),
        (None, Some(Value::String(t))) => t.clone(),
        (None, Some(other)) => {
            r.out.errors.push(format!(
                "ticker: expected a string, got {}",
                other.type_str()
            ));
            String::new()
        }
        (None, None) => {
            r.out.errors.push("ticker: is required".into());
            String::new()
        }
    };
    if ticker.trim().is_empty() && !r.out.errors.iter().any(|e| e.starts_with("ticker")) {
        r.out.errors.push("ticker: must not be empty".into());
    }

    let engine = match r.string("forecast", "sentiment_engine") {
        None | Some("lexicon") => Engine::Lexicon,
        Some("external") => Engine::External,
        Some(other) => {
            r.error(
                "forecast",
                "sentiment_engine",
                format!("expected `lexicon` or `external`, got `{other}`"),
            );
            Engine::Lexicon
        }
    };

    let comments = r.path("comments", true, true);
    let bars = r.path("bars", true, true);
    let lexicon = r.path("lexicon", false, true);
    let embeddings = r.path("embeddings", false, true);
    let external_scores = r.path("external_scores", false, true);
    if engine == Engine::External
        && external_scores.is_none()
        && r.value("paths", "external_scores").is_none()
    {
        r.error(
            "paths",
            "external_scores",
            "is required when sentiment_engine = \"external\"",
        );
    }
    let output = r
        .path("output", false, false)
        .unwrap_or_else(|| base.join("out"));

    let defaults = TopicParams::default();
    let mut topics = TopicParams {
        k: r.integer("topics", "k", defaults.k, 1),
        out_dim: r.integer("topics", "out_dim", defaults.out_dim, 1),
        min_dist: r.float(
            "topics",
            "min_dist",
            defaults.min_dist,
            |v| v >= 0.0,
            "must be non-negative",
        ),
        epochs: r.integer("topics", "epochs_umap", defaults.epochs, 1),
        min_pts: r.integer("topics", "min_pts", defaults.min_pts, 1),
        min_cluster_size: r.integer("topics", "min_cluster_size", defaults.min_cluster_size, 2),
        min_df: r.integer("topics", "min_df", defaults.min_df, 1),
        n_top: r.integer("topics", "n_top_words", defaults.n_top, 1),
        embed_dim: r.integer("topics", "embed_dim", defaults.embed_dim, 1),
        seed: r.integer("topics", "seed", defaults.seed as usize, 0) as u64,
    };
    let momentum_lag = r.integer("features", "momentum_lag", 1, 1);

    let batch = r.integer("forecast", "batch_size", 0, 0);
    let mut forecast = ForecastParams {
        lookback: r.integer("forecast", "lookback", 5, 1),
        epochs: r.integer("forecast", "epochs", 200, 1),
        learning_rate: r.float(
            "forecast",
            "learning_rate",
            1e-3,
            |v| v > 0.0 && v.is_finite(),
            "must be positive",
        ),
        batch_size: (batch > 0).then_some(batch),
        seeds: r.list("forecast", "seeds", (0..10).collect()),
        models: r.list("forecast", "models", Architecture::ALL.to_vec()),
        variants: r.list("forecast", "variants", Variant::ALL.to_vec()),
        engine,
        topic_keeps_score: r.boolean("forecast", "topic_keeps_score"),
        non_saturating_gan: r.boolean("forecast", "non_saturating_gan"),
    };

    let report_format = match r.string("report", "format") {
        None => ReportFormat::Markdown,
        Some(f) => f.parse().unwrap_or_else(|_| {
            r.error(
                "report",
                "format",
                format!("expected `markdown` or `csv`, got `{f}`"),
            );
            ReportFormat::Markdown
        }),
    };

    if let Some(seed) = overrides.seed {
        forecast.seeds = vec![seed];
        topics.seed = seed;
    }
    if let Some(v) = overrides.variant {
        forecast.variants = vec![v];
    }

    let out = r.out;
    if !out.errors.is_empty() {
        return Err(out);
    }
    let config = RunConfig {
        ticker,
        paths: Paths {
            comments: comments.expect("validated"),
            bars: bars.expect("validated"),
            lexicon,
            embeddings,
            external_scores,
            output,
        },
        momentum_lag,
        topics,
        forecast,
        report_format,
        source: source.to_string(),
    };
    Ok((config, out.warnings))
}
