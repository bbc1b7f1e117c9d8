//! The seven pipeline stages and the runner that caches them by content hash.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use log::warn;
use topicforge::embeddings::{fallback_embed, load_embeddings};
use topicforge::eval::{
    aggregate, emit_report, read_predictions, read_report_csv, read_seed_metrics, run_experiment,
    write_seed_metrics, ExperimentConfig, Prediction, ReportFormat, Split, Variant,
};
use topicforge::frame::{DailyFeatureFrame, SCORE, SCORE_TOPIC};
use topicforge::indicators::{build_features, FeatureTable};
use topicforge::ingest::{
    align, parse_bars, parse_comments, write_bars, write_comments, AlignedCorpus,
};
use topicforge::nn::{checkpoint, read_loss_csv, GanOptions, TrainConfig};
use topicforge::pipeline::{
    fit_topics, read_comment_scores, score_corpus, topic_score_column, CorpusSentiment,
};
use topicforge::plot::{emit_plot, Series};
use topicforge::sentiment::{load_external_scores, Lexicon, SentimentProvider};

use crate::config::{Engine, RunConfig};
use crate::manifest::{
    hash_file, hash_parts, outputs_intact, record_hash, stage_key, FileHash, Manifest, StageRecord,
    Upstream,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Features,
    Sentiment,
    Topics,
    Train,
    Evaluate,
    Report,
}

pub const STAGE_ORDER: [&str; 7] = [
    "ingest",
    "features",
    "sentiment",
    "topics",
    "train",
    "evaluate",
    "report",
];

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Features,
        Stage::Sentiment,
        Stage::Topics,
        Stage::Train,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        STAGE_ORDER[self as usize]
    }

    fn upstream(self, cfg: &RunConfig) -> Vec<Stage> {
        match self {
            Stage::Ingest => vec![],
            Stage::Features | Stage::Sentiment => vec![Stage::Ingest],
            Stage::Topics => vec![Stage::Ingest, Stage::Sentiment],
            Stage::Train => {
                let mut up = vec![Stage::Features, Stage::Sentiment];
                if cfg.forecast.variants.contains(&Variant::TopicSentiment) {
                    up.push(Stage::Topics);
                }
                up
            }
            Stage::Evaluate => vec![Stage::Train],
            Stage::Report => vec![Stage::Train, Stage::Evaluate],
        }
    }

    fn inputs(self, cfg: &RunConfig) -> Vec<(&'static str, PathBuf)> {
        let p = &cfg.paths;
        let mut out = Vec::new();
        match self {
            Stage::Ingest => {
                out.push(("comments", p.comments.clone()));
                out.push(("bars", p.bars.clone()));
            }
            Stage::Sentiment => match cfg.forecast.engine {
                Engine::Lexicon => out.extend(p.lexicon.clone().map(|l| ("lexicon", l))),
                Engine::External => {
                    out.extend(p.external_scores.clone().map(|e| ("external_scores", e)))
                }
            },
            Stage::Topics => out.extend(p.embeddings.clone().map(|e| ("embeddings", e))),
            _ => {}
        }
        out
    }

    /// The config fields the stage's outputs depend on.
    fn fingerprint(self, cfg: &RunConfig) -> String {
        match self {
            Stage::Ingest => cfg.ticker.clone(),
            Stage::Features => cfg.momentum_lag.to_string(),
            Stage::Sentiment => cfg.forecast.engine.as_str().to_string(),
            Stage::Topics => format!("{:?}", cfg.topics),
            Stage::Train => format!("{:?}", cfg.forecast),
            Stage::Evaluate => format!("{} {:?}", cfg.forecast.engine.as_str(), cfg.report_format),
            Stage::Report => cfg.source.clone(),
        }
    }
}

pub struct Runner<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    manifest: Manifest,
}

/// What a stage invocation did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    UpToDate,
    Ran { outputs: usize },
}

struct Plan {
    config_hash: String,
    inputs: Vec<FileHash>,
    upstream: Vec<Upstream>,
    key: String,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Runner<'a>> {
        let dir = cfg.paths.output.clone();
        let manifest = Manifest::load(&dir)?;
        Ok(Runner { cfg, dir, manifest })
    }

    fn plan(&self, stage: Stage) -> Result<Plan> {
        let mut upstream = Vec::new();
        for up in stage.upstream(self.cfg) {
            let Some(record) = self.manifest.get(up.name()) else {
                bail!(
                    "stage `{}` needs the outputs of `{}`; run `topicforge {}` first",
                    stage.name(),
                    up.name(),
                    up.name()
                );
            };
            if !self.is_fresh(up)? {
                bail!(
                    "stage `{}` needs `{}`, whose artifacts are out of date or were modified; run `topicforge {}` again",
                    stage.name(),
                    up.name(),
                    up.name()
                );
            }
            upstream.push(Upstream {
                stage: up.name().to_string(),
                hash: record.hash.clone(),
            });
        }
        let mut inputs = Vec::new();
        for (label, path) in stage.inputs(self.cfg) {
            inputs.push(FileHash {
                path: label.to_string(),
                sha256: hash_file(&path)?,
            });
        }
        let config_hash = hash_parts([stage.fingerprint(self.cfg).as_str()]);
        let key = stage_key(stage.name(), &config_hash, &inputs, &upstream);
        Ok(Plan {
            config_hash,
            inputs,
            upstream,
            key,
        })
    }

    fn is_fresh(&self, stage: Stage) -> Result<bool> {
        let Some(record) = self.manifest.get(stage.name()) else {
            return Ok(false);
        };
        let plan = match self.plan(stage) {
            Ok(p) => p,
            Err(_) => return Ok(false),
        };
        Ok(plan.key == record.key && outputs_intact(&self.dir, record)?)
    }

    pub fn run(&mut self, stage: Stage) -> Result<Outcome> {
        let plan = self.plan(stage)?;
        if let Some(record) = self.manifest.get(stage.name()) {
            if record.key == plan.key && outputs_intact(&self.dir, record)? {
                println!("{}: up to date", stage.name());
                return Ok(Outcome::UpToDate);
            }
        }
        fs::create_dir_all(&self.dir)?;
        let produced = self
            .execute(stage)
            .with_context(|| format!("stage `{}` failed", stage.name()))?;
        let mut outputs = Vec::new();
        for rel in produced {
            outputs.push(FileHash {
                sha256: hash_file(&self.dir.join(&rel))?,
                path: rel,
            });
        }
        let hash = record_hash(&plan.key, &outputs);
        let n = outputs.len();
        self.manifest.put(
            StageRecord {
                stage: stage.name().to_string(),
                config_hash: plan.config_hash,
                inputs: plan.inputs,
                upstream: plan.upstream,
                key: plan.key,
                outputs,
                hash,
                completed_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            },
            &STAGE_ORDER,
        );
        self.manifest.save(&self.dir)?;
        println!("{}: done, {n} files", stage.name());
        Ok(Outcome::Ran { outputs: n })
    }

    fn execute(&self, stage: Stage) -> Result<Vec<String>> {
        let mut out = Artifacts {
            dir: &self.dir,
            written: Vec::new(),
        };
        match stage {
            Stage::Ingest => ingest(self.cfg, &mut out)?,
            Stage::Features => features(self.cfg, &mut out)?,
            Stage::Sentiment => sentiment(self.cfg, &mut out)?,
            Stage::Topics => topics(self.cfg, &mut out)?,
            Stage::Train => train(self.cfg, &mut out)?,
            Stage::Evaluate => evaluate(self.cfg, &mut out)?,
            Stage::Report => report(self.cfg, &mut out)?,
        }
        Ok(out.written)
    }
}

/// Collects the relative paths a stage writes under the output directory.
struct Artifacts<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Artifacts<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn write<E>(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> std::result::Result<(), E>,
    ) -> Result<()>
    where
        E: std::error::Error + Send + Sync + 'static,
    {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file =
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
        w.flush()?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        self.write(rel, |w| w.write_all(text.as_bytes()))
    }

    fn reset_dir(&self, rel: &str) -> Result<()> {
        let path = self.path(rel);
        if path.exists() {
            fs::remove_dir_all(&path)
                .with_context(|| format!("cannot clear {}", path.display()))?;
        }
        Ok(())
    }
}

fn open(dir: &Path, rel: &str) -> Result<File> {
    let path = dir.join(rel);
    File::open(&path).with_context(|| format!("cannot open {}", path.display()))
}

fn load_aligned(cfg: &RunConfig) -> Result<AlignedCorpus> {
    let dir = &cfg.paths.output;
    let comments = parse_comments(&dir.join("ingest/comments.csv"))?;
    let bars = parse_bars(&dir.join("ingest/bars.csv"))?;
    Ok(align(&comments.records, &bars, &cfg.ticker)?)
}

fn daily_column(name: &str, values: &[(NaiveDate, f64)]) -> FeatureTable {
    FeatureTable {
        dates: values.iter().map(|v| v.0).collect(),
        columns: vec![(name.to_string(), values.iter().map(|v| v.1).collect())],
        warmup_dropped: 0,
    }
}

fn read_daily_column(dir: &Path, rel: &str, name: &str) -> Result<Vec<(NaiveDate, f64)>> {
    let table = FeatureTable::read_csv(open(dir, rel)?)?;
    let values = table
        .column(name)
        .with_context(|| format!("{rel} has no `{name}` column"))?;
    Ok(table
        .dates
        .iter()
        .copied()
        .zip(values.iter().copied())
        .collect())
}

fn read_sentiment(dir: &Path) -> Result<CorpusSentiment> {
    let (ids, scores) = read_comment_scores(open(dir, "sentiment/comments.csv")?)?;
    let daily = read_daily_column(dir, "sentiment/daily.csv", SCORE)?;
    Ok(CorpusSentiment { ids, scores, daily })
}

fn ingest(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let parsed = parse_comments(&cfg.paths.comments)?;
    let bars = parse_bars(&cfg.paths.bars)?;
    let aligned = align(&parsed.records, &bars, &cfg.ticker)?;
    if aligned.dropped_after_last_bar > 0 {
        warn!(
            "{} comments fall after the last trading day and were dropped",
            aligned.dropped_after_last_bar
        );
    }
    out.write("ingest/comments.csv", |w| {
        write_comments(&aligned.flatten(), w)
    })?;
    out.write("ingest/bars.csv", |w| write_bars(&aligned.bars, w))?;
    let errors = out.path("ingest/errors.csv");
    fs::create_dir_all(errors.parent().expect("has parent"))?;
    parsed.write_error_report(&errors)?;
    out.written.push("ingest/errors.csv".into());
    println!(
        "ingest: {} comments over {} trading days; {} malformed rows listed in {}",
        aligned.n_comments(),
        aligned.bars.len(),
        parsed.errors.len(),
        errors.display()
    );
    Ok(())
}

fn features(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let bars = parse_bars(&cfg.paths.output.join("ingest/bars.csv"))?;
    let table = build_features(&bars.for_ticker(&cfg.ticker), cfg.momentum_lag)?;
    out.write("features/features.csv", |w| table.write_csv(w))
}

fn sentiment(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let provider = match cfg.forecast.engine {
        Engine::Lexicon => match &cfg.paths.lexicon {
            None => SentimentProvider::Lexicon(Arc::new(Lexicon::bundled())),
            Some(path) => {
                let (lexicon, warnings) = Lexicon::load(path)?;
                for w in warnings {
                    warn!("{}: {w}", path.display());
                }
                SentimentProvider::Lexicon(Arc::new(lexicon))
            }
        },
        Engine::External => {
            let path = cfg.paths.external_scores.as_ref().expect("validated");
            load_external_scores(path)?
        }
    };
    let aligned = load_aligned(cfg)?;
    let scored = score_corpus(&aligned, &provider)?;
    out.write("sentiment/comments.csv", |w| scored.write_csv(w))?;
    out.write("sentiment/daily.csv", |w| {
        daily_column(SCORE, &scored.daily).write_csv(w)
    })
}

fn topics(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let aligned = load_aligned(cfg)?;
    let sentiment = read_sentiment(&cfg.paths.output)?;
    let embeddings = match &cfg.paths.embeddings {
        Some(path) => load_embeddings(path)?.aligned_to(&sentiment.ids)?,
        None => {
            let texts: Vec<String> = aligned
                .comments_with_day()
                .map(|(_, c)| c.text.clone())
                .collect();
            let emb = fallback_embed(
                &texts,
                &sentiment.ids,
                cfg.topics.embed_dim,
                cfg.topics.seed,
            )?;
            out.write("topics/embeddings.emb", |w| w.write_all(&emb.to_bytes()))?;
            emb
        }
    };
    let run = fit_topics(&aligned, &embeddings, &sentiment, &cfg.topics)?;
    let daily = topic_score_column(&aligned, &run.model, &sentiment)?;
    out.write("topics/layout.csv", |w| {
        run.layout.write_csv(&sentiment.ids, w)
    })?;
    out.write("topics/condensed_tree.csv", |w| run.tree.write_csv(w))?;
    out.write("topics/topics.csv", |w| run.model.write_report(w))?;
    out.write("topics/assignments.csv", |w| run.model.write_assignments(w))?;
    out.write("topics/daily.csv", |w| {
        daily_column(SCORE_TOPIC, &daily).write_csv(w)
    })?;
    println!(
        "topics: {} topics, {} outliers",
        run.model.n_topics(),
        run.model.labels.n_outliers()
    );
    Ok(())
}

fn experiment_config(cfg: &RunConfig) -> ExperimentConfig {
    let f = &cfg.forecast;
    let mut exp = ExperimentConfig::new(f.models.clone(), f.variants.clone(), f.seeds.clone());
    exp.lookback = f.lookback;
    exp.train = TrainConfig {
        epochs: f.epochs,
        learning_rate: f.learning_rate,
        batch_size: f.batch_size,
        seed: 0,
        gan: GanOptions {
            non_saturating: f.non_saturating_gan,
        },
    };
    exp.topic_keeps_score = f.topic_keeps_score;
    exp.engine = f.engine.as_str().to_string();
    exp
}

fn train(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let dir = &cfg.paths.output;
    let table = FeatureTable::read_csv(open(dir, "features/features.csv")?)?;
    let score = read_daily_column(dir, "sentiment/daily.csv", SCORE)?;
    let topic = if cfg.forecast.variants.contains(&Variant::TopicSentiment) {
        Some(read_daily_column(dir, "topics/daily.csv", SCORE_TOPIC)?)
    } else {
        None
    };
    let frame = DailyFeatureFrame::new(&table, &score, topic.as_deref());
    out.write("train/frame.csv", |w| frame.write_csv(w))?;

    let report = run_experiment(&frame, &experiment_config(cfg))?;
    for sub in ["predictions", "models", "losses"] {
        out.reset_dir(sub)?;
    }
    for cell in &report.cells {
        let name = cell.name();
        out.write(&format!("predictions/{name}.csv"), |w| {
            cell.write_predictions(w)
        })?;
        out.write(&format!("losses/{name}.csv"), |w| {
            cell.forecaster.write_loss_csv(w)
        })?;
        let bytes = checkpoint::to_bytes(&cell.forecaster.model, &cell.forecaster.scalers);
        out.write(&format!("models/{name}.tfc"), |w| w.write_all(&bytes))?;
    }
    let per_seed: Vec<_> = report.cells.iter().flat_map(|c| c.seed_metrics()).collect();
    out.write("train/metrics.csv", |w| write_seed_metrics(&per_seed, w))?;
    println!("train: {} cells trained", report.cells.len());
    Ok(())
}

fn evaluate(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let records = read_seed_metrics(open(&cfg.paths.output, "train/metrics.csv")?)?;
    let rows = aggregate(&records, cfg.forecast.engine.as_str());
    let csv = emit_report(&rows, ReportFormat::Csv)?;
    out.write_text("report.csv", &csv)?;
    print!("{}", emit_report(&rows, cfg.report_format)?);
    Ok(())
}

fn plot_predictions(rows: &[Prediction], split: Split, title: &str) -> Result<String> {
    let points = |f: fn(&Prediction) -> f64| -> Vec<(String, f64)> {
        rows.iter()
            .filter(|p| p.split == split)
            .map(|p| (p.date.to_string(), f(p)))
            .collect()
    };
    Ok(emit_plot(
        &[
            Series::new("actual", points(|p| p.actual)),
            Series::new("predicted", points(|p| p.predicted)),
        ],
        title,
        "date",
        "adj close",
    )?)
}

fn report(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let dir = &cfg.paths.output;
    let rows = read_report_csv(open(dir, "report.csv")?)?;
    let records = read_seed_metrics(open(dir, "train/metrics.csv")?)?;
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let seed_list: Vec<String> = seeds.iter().map(u64::to_string).collect();

    let mut md = format!("# {} forecast report\n\n", cfg.ticker);
    md.push_str(&format!(
        "Median over seeds {}. Sentiment engine: {}.\n\n",
        seed_list.join(", "),
        cfg.forecast.engine.as_str()
    ));
    md.push_str(&emit_report(&rows, ReportFormat::Markdown)?);
    md.push_str("## Configuration\n\n```toml\n");
    md.push_str(cfg.source.trim_end());
    md.push_str("\n```\n");
    out.write_text("report.md", &md)?;

    out.reset_dir("plots")?;
    let mut cells: Vec<_> = rows.iter().map(|r| (r.model, r.variant)).collect();
    cells.dedup();
    for (model, variant) in cells {
        // plots follow the lowest seed of the cell
        let Some(seed) = records
            .iter()
            .filter(|r| r.model == model && r.variant == variant)
            .map(|r| r.seed)
            .min()
        else {
            continue;
        };
        let stem = format!("{model}_{variant}");
        let cell = format!("{stem}_seed{seed}");
        let predictions = read_predictions(open(dir, &format!("predictions/{cell}.csv"))?)?;
        for split in [Split::Train, Split::Test] {
            let title = format!(
                "{} {} ({} set, seed {seed})",
                model.title(),
                variant,
                split.as_str()
            );
            let svg = plot_predictions(&predictions, split, &title)?;
            out.write_text(&format!("plots/{stem}_{}.svg", split.as_str()), &svg)?;
        }
        let losses = read_loss_csv(open(dir, &format!("losses/{cell}.csv"))?)?;
        let points: Vec<(String, f64)> = losses
            .iter()
            .enumerate()
            .map(|(e, &l)| ((e + 1).to_string(), l))
            .collect();
        let svg = emit_plot(
            &[Series::new("loss", points)],
            &format!("{} {} training loss (seed {seed})", model.title(), variant),
            "epoch",
            "loss",
        )?;
        out.write_text(&format!("plots/{stem}_loss.svg"), &svg)?;
    }
    println!("report: {}", dir.join("report.md").display());
    Ok(())
}
