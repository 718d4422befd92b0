//! Pipeline stages behind the `split`, `train`, `personas` and `evaluate`
//! commands. Stages exchange CSV artifacts inside one output directory:
//!
//! | stage    | reads                              | writes                          |
//! |----------|------------------------------------|---------------------------------|
//! | split    | ratings file                       | `train.csv`, `test.csv`         |
//! | train    | corpus, stopwords                  | `theta.csv`, `phi.csv`, `topics.txt` |
//! | personas | `theta.csv`, `train.csv`           | `personas.csv`                  |
//! | evaluate | `train.csv`, `test.csv`, `personas.csv` | `report.csv`               |
//!
//! Every stage also writes the effective configuration to `config.txt`.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::evaluate::{self, EvalOptions, EvalReport};
use crate::ingest::{self, DatasetSummary, RatingFormat};
use crate::lda::{self, ItemProfiles, LdaConfig, Stopwords};
use crate::persona::{self, PersonaTable};
use crate::recommend::{self, Algorithm, RecommendationList, DEFAULT_LIKE_THRESHOLD, DEFAULT_NEIGHBORS};
use crate::similarity;
use crate::{Error, Result};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const THETA_FILE: &str = "theta.csv";
pub const PHI_FILE: &str = "phi.csv";
pub const TOPICS_FILE: &str = "topics.txt";
pub const PERSONAS_FILE: &str = "personas.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const SIMILARITIES_FILE: &str = "similarities.csv";

pub const TOPIC_WORDS_PER_LINE: usize = 20;
pub const LOG_LIKELIHOOD_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ratings: Option<PathBuf>,
    pub format: RatingFormat,
    pub corpus: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub out: PathBuf,
    pub topics: usize,
    pub alpha_sum: f64,
    pub beta: f64,
    pub iterations: usize,
    pub lda_seed: u64,
    pub min_df: usize,
    pub fraction: f64,
    pub split_seed: u64,
    pub neighbors: usize,
    pub like_threshold: f64,
    pub max_k: usize,
    pub ks: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub relevance_threshold: Option<f64>,
    pub per_user: bool,
    pub write_recommendations: bool,
    pub dump_similarities: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lda = LdaConfig::default();
        RunConfig {
            ratings: None,
            format: RatingFormat::MovielensDat,
            corpus: None,
            stopwords: None,
            out: PathBuf::from("out"),
            topics: lda.num_topics,
            alpha_sum: lda.alpha_sum,
            beta: lda.beta,
            iterations: lda.iterations,
            lda_seed: lda.seed,
            min_df: 1,
            fraction: 0.8,
            split_seed: 0,
            neighbors: DEFAULT_NEIGHBORS,
            like_threshold: DEFAULT_LIKE_THRESHOLD,
            max_k: evaluate::DEFAULT_MAX_K,
            ks: evaluate::default_ks(),
            algorithms: Algorithm::ALL.to_vec(),
            relevance_threshold: None,
            per_user: false,
            write_recommendations: false,
            dump_similarities: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value `{value}` for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("invalid value `{value}` for {key}"))),
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Comma-separated list of K values.
pub fn parse_ks(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num("ks", s))
        .collect()
}

/// Comma-separated algorithm labels.
pub fn parse_algorithms(value: &str) -> Result<Vec<Algorithm>> {
    let mut algorithms = Vec::new();
    for label in value.split(',').filter(|s| !s.trim().is_empty()) {
        let a: Algorithm = label.parse()?;
        if !algorithms.contains(&a) {
            algorithms.push(a);
        }
    }
    Ok(algorithms)
}

impl RunConfig {
    /// Sets one `key=value` entry. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "ratings" => self.ratings = parse_path(value),
            "format" => self.format = value.trim().parse()?,
            "corpus" => self.corpus = parse_path(value),
            "stopwords" => self.stopwords = parse_path(value),
            "out" => self.out = PathBuf::from(value.trim()),
            "topics" => self.topics = parse_num(&key, value)?,
            "alpha_sum" => self.alpha_sum = parse_num(&key, value)?,
            "beta" => self.beta = parse_num(&key, value)?,
            "iterations" => self.iterations = parse_num(&key, value)?,
            "lda_seed" => self.lda_seed = parse_num(&key, value)?,
            "min_df" => self.min_df = parse_num(&key, value)?,
            "fraction" => self.fraction = parse_num(&key, value)?,
            "split_seed" => self.split_seed = parse_num(&key, value)?,
            "neighbors" => self.neighbors = parse_num(&key, value)?,
            "like_threshold" => self.like_threshold = parse_num(&key, value)?,
            "max_k" => self.max_k = parse_num(&key, value)?,
            "ks" => self.ks = parse_ks(value)?,
            "algorithms" => self.algorithms = parse_algorithms(value)?,
            "relevance_threshold" => {
                self.relevance_threshold = match value.trim() {
                    "" | "none" => None,
                    v => Some(parse_num(&key, v)?),
                }
            }
            "per_user" => self.per_user = parse_bool(&key, value)?,
            "write_recommendations" => self.write_recommendations = parse_bool(&key, value)?,
            "dump_similarities" => self.dump_similarities = parse_bool(&key, value)?,
            other => return Err(Error::config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`; `#` starts a comment line.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, "expected key=value"))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_kv(text)?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::config(format!(
                "fraction must lie in (0, 1), got {}",
                self.fraction
            )));
        }
        if self.topics == 0 || self.iterations == 0 {
            return Err(Error::config("topics and iterations must be at least 1"));
        }
        if !(self.alpha_sum > 0.0 && self.beta > 0.0) {
            return Err(Error::config("alpha_sum and beta must be positive"));
        }
        if self.neighbors == 0 || self.max_k == 0 {
            return Err(Error::config("neighbors and max_k must be at least 1"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::config("ks must be a non-empty list of positive values"));
        }
        if self.ks.iter().any(|&k| k > self.max_k) {
            return Err(Error::config("max_k must be at least every value in ks"));
        }
        if !(ingest::MIN_RATING..=ingest::MAX_RATING).contains(&self.like_threshold) {
            return Err(Error::config("like_threshold must lie on the 1-5 rating scale"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("no algorithm selected"));
        }
        Ok(())
    }

    pub fn lda(&self) -> LdaConfig {
        LdaConfig {
            num_topics: self.topics,
            alpha_sum: self.alpha_sum,
            beta: self.beta,
            iterations: self.iterations,
            seed: self.lda_seed,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            ks: self.ks.clone(),
            max_k: self.max_k,
            relevance_threshold: self.relevance_threshold,
        }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_effective(&self) -> Result<()> {
        write_file(&self.artifact(CONFIG_FILE), self.to_string().as_bytes())
    }
}

impl fmt::Display for RunConfig {
    /// `key=value` lines that [`RunConfig::from_kv`] reads back to an equal config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let join = |v: Vec<String>| v.join(",");
        writeln!(f, "ratings={}", path(&self.ratings))?;
        writeln!(f, "format={}", self.format)?;
        writeln!(f, "corpus={}", path(&self.corpus))?;
        writeln!(f, "stopwords={}", path(&self.stopwords))?;
        writeln!(f, "out={}", self.out.display())?;
        writeln!(f, "topics={}", self.topics)?;
        writeln!(f, "alpha_sum={}", self.alpha_sum)?;
        writeln!(f, "beta={}", self.beta)?;
        writeln!(f, "iterations={}", self.iterations)?;
        writeln!(f, "lda_seed={}", self.lda_seed)?;
        writeln!(f, "min_df={}", self.min_df)?;
        writeln!(f, "fraction={}", self.fraction)?;
        writeln!(f, "split_seed={}", self.split_seed)?;
        writeln!(f, "neighbors={}", self.neighbors)?;
        writeln!(f, "like_threshold={}", self.like_threshold)?;
        writeln!(f, "max_k={}", self.max_k)?;
        writeln!(f, "ks={}", join(self.ks.iter().map(|k| k.to_string()).collect()))?;
        writeln!(
            f,
            "algorithms={}",
            join(self.algorithms.iter().map(|a| a.label().to_string()).collect())
        )?;
        writeln!(
            f,
            "relevance_threshold={}",
            self.relevance_threshold.map(|t| t.to_string()).unwrap_or_else(|| "none".into())
        )?;
        writeln!(f, "per_user={}", self.per_user)?;
        writeln!(f, "write_recommendations={}", self.write_recommendations)?;
        writeln!(f, "dump_similarities={}", self.dump_similarities)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn ensure_out_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::config(format!("missing input {}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub all: DatasetSummary,
    pub train: DatasetSummary,
    pub test: DatasetSummary,
    pub duplicates: usize,
}

impl SplitOutcome {
    /// Users, items, max and average ratings per user for each split.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:>8} {:>8} {:>10} {:>16} {:>16}",
            "split", "users", "items", "ratings", "max ratings/user", "avg ratings/user"
        );
        for (name, d) in [("all", &self.all), ("train", &self.train), ("test", &self.test)] {
            let _ = writeln!(
                s,
                "{:<8} {:>8} {:>8} {:>10} {:>16} {:>16.2}",
                name, d.users, d.items, d.ratings, d.max_ratings_per_user, d.avg_ratings_per_user
            );
        }
        s
    }
}

pub fn cmd_split(config: &RunConfig) -> Result<SplitOutcome> {
    config.validate()?;
    let ratings = config
        .ratings
        .as_ref()
        .ok_or_else(|| Error::config("--ratings is required"))?;
    let dataset = ingest::parse_ratings_file(ratings, config.format)?;
    let pair = ingest::split_train_test(&dataset, config.fraction, config.split_seed)?;
    ensure_out_dir(config)?;
    pair.train.write_csv_file(&config.artifact(TRAIN_FILE))?;
    pair.test.write_csv_file(&config.artifact(TEST_FILE))?;
    config.write_effective()?;
    Ok(SplitOutcome {
        all: DatasetSummary::of(&dataset),
        train: DatasetSummary::of(&pair.train),
        test: DatasetSummary::of(&pair.test),
        duplicates: dataset.duplicates(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub documents: usize,
    pub empty_documents: usize,
    pub vocabulary: usize,
    pub tokens: usize,
    pub log_likelihood: Vec<(usize, f64)>,
}

/// Trains the topic model. `on_log` receives the corpus log-likelihood
/// every [`LOG_LIKELIHOOD_EVERY`] sweeps.
pub fn cmd_train(config: &RunConfig, mut on_log: impl FnMut(usize, f64)) -> Result<TrainOutcome> {
    config.validate()?;
    let corpus_path = config
        .corpus
        .as_ref()
        .ok_or_else(|| Error::config("--corpus is required"))?;
    let corpus = ingest::load_corpus(corpus_path)?;
    if corpus.is_empty() {
        return Err(Error::config(format!(
            "corpus {} has no documents",
            corpus_path.display()
        )));
    }
    let stopwords = match &config.stopwords {
        Some(path) => Stopwords::from_file(path)?,
        None => Stopwords::english(),
    };
    let (vocab, encoded) = lda::build_vocabulary(&corpus, &stopwords, config.min_df)?;
    let mut trace = Vec::new();
    let model = lda::train_lda_logged(&encoded, &vocab, config.lda(), LOG_LIKELIHOOD_EVERY, |it, ll| {
        trace.push((it, ll));
        on_log(it, ll);
    })?;

    ensure_out_dir(config)?;
    model.write_theta(create(&config.artifact(THETA_FILE))?)?;
    model.write_phi(create(&config.artifact(PHI_FILE))?)?;
    model.write_topics(create(&config.artifact(TOPICS_FILE))?, TOPIC_WORDS_PER_LINE)?;
    config.write_effective()?;
    Ok(TrainOutcome {
        documents: encoded.num_docs(),
        empty_documents: encoded.docs.iter().filter(|d| d.is_empty()).count(),
        vocabulary: vocab.len(),
        tokens: encoded.num_tokens(),
        log_likelihood: trace,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PersonaOutcome {
    pub users: usize,
    pub undefined: usize,
}

pub fn cmd_personas(config: &RunConfig) -> Result<PersonaOutcome> {
    let theta_path = config.artifact(THETA_FILE);
    let train_path = config.artifact(TRAIN_FILE);
    require(&theta_path)?;
    require(&train_path)?;
    let profiles = ItemProfiles::read_csv_file(&theta_path)?;
    let train = ingest::parse_ratings_file(&train_path, RatingFormat::Csv)?;
    let table = persona::build_all_personas(&train, &profiles);
    table.write_csv(create(&config.artifact(PERSONAS_FILE))?)?;
    config.write_effective()?;
    Ok(PersonaOutcome {
        users: table.len(),
        undefined: table.undefined_count(),
    })
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<EvalReport>> {
    config.validate()?;
    let train_path = config.artifact(TRAIN_FILE);
    let test_path = config.artifact(TEST_FILE);
    require(&train_path)?;
    require(&test_path)?;
    let train = ingest::parse_ratings_file(&train_path, RatingFormat::Csv)?;
    let test = ingest::parse_ratings_file(&test_path, RatingFormat::Csv)?;

    let personas = if config.algorithms.iter().any(|a| a.needs_personas()) || config.dump_similarities {
        let path = config.artifact(PERSONAS_FILE);
        require(&path)?;
        Some(PersonaTable::read_csv_file(&path)?)
    } else {
        None
    };

    let options = config.eval_options();
    let mut reports = Vec::with_capacity(config.algorithms.len());
    for &algorithm in &config.algorithms {
        let recommender =
            algorithm.build(&train, personas.as_ref(), config.neighbors, config.like_threshold)?;
        let details = evaluate::evaluate_users(recommender.as_ref(), &test, &options);
        if config.per_user {
            let path = config.artifact(&format!("users_{}.csv", algorithm.label()));
            evaluate::emit_user_details(&details, create(&path)?)?;
        }
        if config.write_recommendations {
            let lists: Vec<RecommendationList> = test
                .users()
                .par_iter()
                .map(|&u| recommender.recommend(u, config.max_k))
                .collect();
            let path = config.artifact(&format!("recs_{}.csv", algorithm.label()));
            recommend::write_recommendations(&lists, create(&path)?)?;
        }
        reports.push(evaluate::summarize(algorithm.label(), &details, &options));
    }

    if let (true, Some(personas)) = (config.dump_similarities, personas.as_ref()) {
        similarity::write_similarity_dump(&train, personas, create(&config.artifact(SIMILARITIES_FILE))?)?;
    }
    evaluate::emit_reports(&reports, create(&config.artifact(REPORT_FILE))?)?;
    config.write_effective()?;
    Ok(reports)
}
