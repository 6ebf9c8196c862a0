use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mdilm::eval::OovPolicy;
use mdilm::mdi::GisOptions;
use serde::Deserialize;

use crate::UsageError;

#[derive(Parser, Debug)]
#[command(name = "mdilm", version, about = "Backoff n-gram language model adaptation under marginal constraints")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand. Values left unset fall back to the
/// config file, then to built-in defaults.
#[derive(Args, Debug, Default)]
pub struct Shared {
    /// TOML file with `key = value` defaults for the shared flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// N-gram order.
    #[arg(long, global = true)]
    pub order: Option<usize>,

    /// Per-order count thresholds for constraint selection, e.g. 5,3,2.
    #[arg(long, global = true, value_delimiter = ',')]
    pub thresholds: Option<Vec<u64>>,

    /// GIS step size.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,

    /// Stop once the largest |ln(target / marginal)| is below this.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    #[arg(long = "max-iters", global = true)]
    pub max_iters: Option<usize>,

    #[arg(long, global = true, value_enum)]
    pub oov: Option<Oov>,

    /// Iteration log, one TSV line per GIS iteration.
    #[arg(long, global = true, value_name = "PATH")]
    pub log: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Oov {
    Skip,
    Unk,
    Fail,
}

impl From<Oov> for OovPolicy {
    fn from(o: Oov) -> Self {
        match o {
            Oov::Skip => OovPolicy::Skip,
            Oov::Unk => OovPolicy::Unk,
            Oov::Fail => OovPolicy::Fail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HistorySource {
    Corpus,
    LmCounts,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Count n-grams of a corpus into `order<TAB>ngram<TAB>count` lines.
    Count {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select constraints from an in-domain corpus by count thresholds.
    Constraints {
        #[arg(long)]
        corpus: PathBuf,
        /// Model whose vocabulary the constraints are expressed in. Without
        /// it the vocabulary comes from the corpus.
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapt an out-of-domain model to in-domain marginals.
    Adapt {
        #[arg(long)]
        lm: PathBuf,
        /// In-domain corpus; supplies the history distribution and, unless
        /// --constraints is given, the constraints.
        #[arg(long = "in-corpus")]
        in_corpus: PathBuf,
        /// Precomputed constraint file; excludes --thresholds.
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long = "history-from", value_enum, default_value = "corpus")]
        history_from: HistorySource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapt a small in-domain model to the marginals of a reference model,
    /// keeping its entry set.
    FirstPassAdapt {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long = "in-corpus")]
        in_corpus: PathBuf,
        #[arg(long = "history-from", value_enum, default_value = "corpus")]
        history_from: HistorySource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mix two models: weight · lm + (1 - weight) · other.
    Interpolate {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        other: PathBuf,
        #[arg(long)]
        weight: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perplexity of a model on a test corpus.
    Ppl {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Check that every stored history of a model normalizes.
    Validate {
        #[arg(long)]
        lm: PathBuf,
    },
    /// Time one GIS iteration on synthetic models.
    Bench {
        /// Model sizes in entries.
        #[arg(long, value_delimiter = ',', default_value = "100000,200000")]
        sizes: Vec<usize>,
        /// Constraint counts.
        #[arg(long, value_delimiter = ',', default_value = "1000")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long = "vocab-size", default_value_t = 20_000)]
        vocab_size: usize,
        /// Append accumulator-update and graph-node counts as extra columns.
        #[arg(long)]
        ops: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    order: Option<usize>,
    thresholds: Option<Vec<u64>>,
    gamma: Option<f64>,
    tol: Option<f64>,
    #[serde(alias = "max-iters")]
    max_iters: Option<usize>,
    oov: Option<Oov>,
    log: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
}

/// Shared settings after merging flags over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub order: usize,
    pub thresholds: Option<Vec<u64>>,
    pub gis: GisOptions,
    pub oov: Option<OovPolicy>,
    pub log: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: u64,
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

impl Shared {
    pub fn resolve(self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        let defaults = GisOptions::default();
        let gis = GisOptions {
            gamma: self.gamma.or(file.gamma).unwrap_or(defaults.gamma),
            tol: self.tol.or(file.tol).unwrap_or(defaults.tol),
            max_iters: self.max_iters.or(file.max_iters).unwrap_or(defaults.max_iters),
        };
        gis.validate().map_err(|e| UsageError(e.to_string()))?;
        let order = self.order.or(file.order).unwrap_or(3);
        if order == 0 {
            return Err(UsageError("--order must be at least 1".into()).into());
        }
        let thresholds = self.thresholds.or(file.thresholds);
        if let Some(t) = &thresholds {
            if t.is_empty() || t.contains(&0) {
                return Err(UsageError("--thresholds values must be at least 1".into()).into());
            }
        }
        let threads = self.threads.or(file.threads);
        if threads == Some(0) {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        Ok(Settings {
            order,
            thresholds,
            gis,
            oov: self.oov.or(file.oov).map(OovPolicy::from),
            log: self.log.or(file.log),
            threads,
            seed: self.seed.or(file.seed).unwrap_or(1),
        })
    }
}
