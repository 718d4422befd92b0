use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use topiccf_core::evaluate;
use topiccf_core::pipeline::{self, RunConfig};

/// Topic-persona collaborative filtering: split ratings, train item topics,
/// build user personas and evaluate recommenders.
#[derive(Parser, Debug)]
#[command(name = "topiccf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Split ratings into train.csv and test.csv and print a summary table.
    Split,
    /// Train the LDA model on the item corpus (theta.csv, phi.csv, topics.txt).
    Train,
    /// Build user personas from theta.csv and train.csv (personas.csv).
    Personas,
    /// Run the selected recommenders and write report.csv.
    Evaluate,
}

/// Every flag overrides the same key from `--config`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    ratings: Option<String>,
    /// movielens_dat or csv.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Directory of <item_id>.txt files or an item_id<TAB>text file.
    #[arg(long, global = true)]
    corpus: Option<String>,
    #[arg(long, global = true)]
    stopwords: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    topics: Option<String>,
    #[arg(long, global = true)]
    alpha_sum: Option<String>,
    #[arg(long, global = true)]
    beta: Option<String>,
    #[arg(long, global = true)]
    iterations: Option<String>,
    #[arg(long, global = true)]
    lda_seed: Option<String>,
    #[arg(long, global = true)]
    min_df: Option<String>,
    #[arg(long, global = true)]
    fraction: Option<String>,
    #[arg(long, global = true)]
    split_seed: Option<String>,
    #[arg(long, global = true)]
    neighbors: Option<String>,
    #[arg(long, global = true)]
    like_threshold: Option<String>,
    #[arg(long, global = true)]
    max_k: Option<String>,
    /// Comma-separated cutoffs, e.g. 5,10,20.
    #[arg(long, global = true)]
    ks: Option<String>,
    /// Comma-separated subset of hybrid,topic_only,ubcf_pearson,ubcf_llr,ibcf_llr.
    #[arg(long, global = true)]
    algorithms: Option<String>,
    /// Minimum test rating counted as relevant ("none" counts all).
    #[arg(long, global = true)]
    relevance_threshold: Option<String>,
    /// Also write users_<algorithm>.csv with per-user metrics.
    #[arg(long, global = true)]
    per_user: bool,
    /// Also write recs_<algorithm>.csv with the top max-k lists.
    #[arg(long, global = true)]
    write_recommendations: bool,
    /// Also write similarities.csv with every user pair's scores.
    #[arg(long, global = true)]
    dump_similarities: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        let values = [
            ("ratings", &self.ratings),
            ("format", &self.format),
            ("corpus", &self.corpus),
            ("stopwords", &self.stopwords),
            ("out", &self.out),
            ("topics", &self.topics),
            ("alpha_sum", &self.alpha_sum),
            ("beta", &self.beta),
            ("iterations", &self.iterations),
            ("lda_seed", &self.lda_seed),
            ("min_df", &self.min_df),
            ("fraction", &self.fraction),
            ("split_seed", &self.split_seed),
            ("neighbors", &self.neighbors),
            ("like_threshold", &self.like_threshold),
            ("max_k", &self.max_k),
            ("ks", &self.ks),
            ("algorithms", &self.algorithms),
            ("relevance_threshold", &self.relevance_threshold),
        ];
        for (key, value) in values {
            if let Some(value) = value {
                config.set(key, value)?;
            }
        }
        let switches = [
            ("per_user", self.per_user),
            ("write_recommendations", self.write_recommendations),
            ("dump_similarities", self.dump_similarities),
        ];
        for (key, on) in switches {
            if on {
                config.set(key, "true")?;
            }
        }
        Ok(config)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("TOPICCF_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .with_context(|| format!("TOPICCF_THREADS must be a positive integer, got `{value}`"))?;
    anyhow::ensure!(threads > 0, "TOPICCF_THREADS must be at least 1");
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let config = cli.overrides.resolve()?;
    match cli.command {
        Command::Split => {
            let outcome = pipeline::cmd_split(&config)?;
            if outcome.duplicates > 0 {
                log::warn!("{} duplicate ratings replaced by their last occurrence", outcome.duplicates);
            }
            print!("{}", outcome.table());
        }
        Command::Train => {
            let outcome = pipeline::cmd_train(&config, |it, ll| {
                println!("iteration {it:>6}  log-likelihood {ll:.4}");
            })?;
            info!(
                "{} documents ({} empty), {} word types, {} tokens",
                outcome.documents, outcome.empty_documents, outcome.vocabulary, outcome.tokens
            );
            println!(
                "wrote {}, {}, {}",
                config.artifact(pipeline::THETA_FILE).display(),
                config.artifact(pipeline::PHI_FILE).display(),
                config.artifact(pipeline::TOPICS_FILE).display()
            );
        }
        Command::Personas => {
            let outcome = pipeline::cmd_personas(&config)?;
            println!(
                "{} personas ({} undefined) written to {}",
                outcome.users,
                outcome.undefined,
                config.artifact(pipeline::PERSONAS_FILE).display()
            );
        }
        Command::Evaluate => {
            let reports = pipeline::cmd_evaluate(&config)?;
            evaluate::emit_reports(&reports, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
