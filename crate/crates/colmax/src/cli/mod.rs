//! Command-line wiring: argument parsing, config-file and environment
//! resolution, and dispatch to the subcommand bodies.
//!
//! Every optional knob resolves as CLI flag, then config-file key (flat
//! `key=value` lines), then built-in default; the master seed additionally
//! falls back to the COLMAX_SEED environment variable. The fully-resolved
//! configuration is logged to stderr as `config: key=value` lines, so the
//! same invocation can be replayed exactly.

mod commands;
mod io;

pub use io::{is_cmx, read_candidate_scores, read_multivectors, CandidateScores};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_BENCH_SEED;
use crate::model::{Precision, SimilarityKind};

pub const SEED_ENV: &str = "COLMAX_SEED";

impl clap::ValueEnum for Precision {
    fn value_variants<'a>() -> &'a [Self] {
        &Precision::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
            Precision::Int8 => "int8",
            Precision::Binary => "binary",
        }))
    }
}

impl clap::ValueEnum for SimilarityKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[SimilarityKind::Dot, SimilarityKind::Cosine]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            SimilarityKind::Dot => "dot",
            SimilarityKind::Cosine => "cosine",
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Text => "text",
            OutputFormat::Json => "json",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidInput(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SearchMode {
    /// Exhaustive MaxSim over every document.
    Maxsim,
    /// Dot product of pooled embeddings only.
    Pooled,
    /// Pooled first stage, MaxSim re-scoring of the top candidates.
    Rerank,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Maxsim => "maxsim",
            SearchMode::Pooled => "pooled",
            SearchMode::Rerank => "rerank",
        })
    }
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxsim" => Ok(SearchMode::Maxsim),
            "pooled" => Ok(SearchMode::Pooled),
            "rerank" => Ok(SearchMode::Rerank),
            other => Err(Error::InvalidInput(format!(
                "unknown search mode `{other}`"
            ))),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "colmax",
    version,
    about = "Late-interaction retrieval engine and data-curation toolkit"
)]
pub struct Cli {
    /// Flat key=value config file; CLI flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed (fallback: config file, then COLMAX_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel scans; 0 uses available parallelism.
    /// Results are identical for any worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Result output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build a CMX index from a JSONL corpus ({"id", "tokens"} records).
    BuildIndex(BuildIndexArgs),
    /// Rank indexed documents for each query, writing a TREC run file.
    Search(SearchArgs),
    /// Score a TREC run against TREC qrels with NDCG@k.
    Evaluate(EvaluateArgs),
    /// Corpus footprint arithmetic for a deployment scenario.
    EstimateStorage(EstimateStorageArgs),
    /// Select hard negative training examples from teacher scores.
    MineNegatives(MineNegativesArgs),
    /// Cluster pooled document embeddings and draw a stratified sample.
    SampleClusters(SampleClustersArgs),
    /// Re-encode an index at a different payload precision.
    Quantize(QuantizeArgs),
    /// Reduce index dimensionality with a fitted linear projection.
    Project(ProjectArgs),
    /// Weighted-average parameter sets into one.
    Merge(MergeArgs),
    /// Generate a synthetic retrieval benchmark with planted positives.
    GenBench(GenBenchArgs),
    /// Sweep dimensions and precisions, reporting storage and NDCG.
    Ablate(AblateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildIndex(_) => "build-index",
            Command::Search(_) => "search",
            Command::Evaluate(_) => "evaluate",
            Command::EstimateStorage(_) => "estimate-storage",
            Command::MineNegatives(_) => "mine-negatives",
            Command::SampleClusters(_) => "sample-clusters",
            Command::Quantize(_) => "quantize",
            Command::Project(_) => "project",
            Command::Merge(_) => "merge",
            Command::GenBench(_) => "gen-bench",
            Command::Ablate(_) => "ablate",
        }
    }
}

#[derive(Args)]
pub struct BuildIndexArgs {
    /// Corpus file: JSONL or an existing CMX index.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Payload precision (default fp32).
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// L2-normalize tokens before quantization.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args)]
pub struct SearchArgs {
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    /// Query file: JSONL or a CMX index.
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,
    /// TREC run output path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Hits per query (default 10).
    #[arg(long)]
    pub k: Option<usize>,
    /// Ranking mode (default maxsim). Pooled mode always uses dot product.
    #[arg(long, value_enum)]
    pub mode: Option<SearchMode>,
    /// Candidates the pooled first stage hands to rerank (default 50).
    #[arg(long)]
    pub first_stage_k: Option<usize>,
    /// Token similarity for MaxSim (default dot).
    #[arg(long, value_enum)]
    pub sim: Option<SimilarityKind>,
    /// Run tag written to the TREC file (default colmax).
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// TREC run file.
    #[arg(long, value_name = "FILE")]
    pub run: PathBuf,
    /// TREC qrels file.
    #[arg(long, value_name = "FILE")]
    pub qrels: PathBuf,
    /// Cutoff (default 10).
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args)]
pub struct EstimateStorageArgs {
    /// Corpus size in documents.
    #[arg(long)]
    pub docs: u64,
    /// Mean token count per document.
    #[arg(long)]
    pub avg_tokens: f64,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: u32,
    /// Payload precision (default fp32).
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Args)]
pub struct MineNegativesArgs {
    /// JSONL with {"query_id", "positive_id", "candidates"} records.
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    /// Triplet JSONL output path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Negatives per query (default 8).
    #[arg(long)]
    pub k: Option<usize>,
    /// Fraction of the positive score negatives must stay below
    /// (default 0.95).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct SampleClustersArgs {
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    /// Assignment CSV output path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Docs sampled per cluster (default 5).
    #[arg(long)]
    pub per_cluster: Option<usize>,
    /// Largest cluster count considered (default 8).
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Reference draws for the dispersion comparison (default 10).
    #[arg(long)]
    pub refs: Option<usize>,
    /// Pooled embeddings above this dimension are projected down to it
    /// before clustering (default 50).
    #[arg(long)]
    pub target_dim: Option<usize>,
    /// Sampled doc ids, one per line.
    #[arg(long, value_name = "FILE")]
    pub sample_out: Option<PathBuf>,
    /// Per-k dispersion curve CSV.
    #[arg(long, value_name = "FILE")]
    pub curve_out: Option<PathBuf>,
    /// Refinement iteration cap (default 100).
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Args)]
pub struct QuantizeArgs {
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    #[arg(long, value_enum)]
    pub precision: Precision,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ProjectArgs {
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    #[arg(long)]
    pub target_dim: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Keep projected token lengths instead of renormalizing to unit norm.
    #[arg(long)]
    pub no_renormalize: bool,
    /// Cap on the token sample used to fit the projection (default 20000).
    #[arg(long)]
    pub sample_cap: Option<usize>,
}

#[derive(Args)]
pub struct MergeArgs {
    /// Parameter-set files to average.
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Comma-separated non-negative weights, one per input
    /// (default uniform).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Args)]
pub struct GenBenchArgs {
    /// Directory receiving corpus.cmx, queries.cmx, and qrels.txt.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub cluster_vocab: Option<usize>,
    #[arg(long)]
    pub shared_vocab: Option<usize>,
    #[arg(long)]
    pub unique_tokens: Option<usize>,
    #[arg(long)]
    pub doc_tokens_min: Option<usize>,
    #[arg(long)]
    pub doc_tokens_max: Option<usize>,
    #[arg(long)]
    pub query_tokens: Option<usize>,
    /// Query token perturbation magnitude.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Perturbation applied when instantiating vocabulary tokens in docs.
    #[arg(long)]
    pub doc_jitter: Option<f64>,
    /// Relevance grade of planted positives.
    #[arg(long)]
    pub grade: Option<u32>,
    /// Corpus index precision (queries always stay fp32).
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Args)]
pub struct AblateArgs {
    /// Corpus file: JSONL or a CMX index.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Query file: JSONL or a CMX index.
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub qrels: PathBuf,
    /// Embedding dimensions, comma separated; the first is the baseline.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub dims: Vec<u32>,
    /// Precisions, comma separated; the first is the baseline.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, value_enum)]
    pub precisions: Vec<Precision>,
    /// NDCG cutoff (default 10).
    #[arg(long)]
    pub k: Option<usize>,
    /// Ablation CSV output path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Optional markdown table output path.
    #[arg(long, value_name = "FILE")]
    pub markdown_out: Option<PathBuf>,
}

/// Flat key=value file. `#` starts a comment, blank lines are skipped,
/// duplicate keys are rejected.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::format(
                    path,
                    format!("line {}: expected key=value, got {raw:?}", lineno + 1),
                ));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::format(
                    path,
                    format!("line {}: empty key", lineno + 1),
                ));
            }
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::format(
                    path,
                    format!("line {}: duplicate key {key:?}", lineno + 1),
                ));
            }
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Resolves each knob as CLI > config file > default and records the
/// outcome for the `config:` log.
pub struct Resolver {
    file: FileConfig,
    log: Vec<(String, String)>,
}

impl Resolver {
    pub fn new(file: FileConfig) -> Self {
        Resolver {
            file,
            log: Vec::new(),
        }
    }

    /// Records a value that has no fallback chain (paths, required args).
    pub fn note(&mut self, key: &str, value: impl fmt::Display) {
        self.log.push((key.to_string(), value.to_string()));
    }

    pub fn resolve<T>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + fmt::Display,
        <T as FromStr>::Err: fmt::Display,
    {
        let value = if let Some(v) = cli {
            v
        } else if let Some(raw) = self.file.get(key) {
            raw.parse()
                .map_err(|e| Error::InvalidInput(format!("config key {key}={raw}: {e}")))?
        } else {
            default
        };
        self.note(key, &value);
        Ok(value)
    }

    /// Boolean flags: flag presence wins, then the config file, else false.
    pub fn resolve_flag(&mut self, key: &str, cli_set: bool) -> Result<bool> {
        let value = if cli_set {
            true
        } else if let Some(raw) = self.file.get(key) {
            raw.parse::<bool>()
                .map_err(|e| Error::InvalidInput(format!("config key {key}={raw}: {e}")))?
        } else {
            false
        };
        self.note(key, value);
        Ok(value)
    }

    /// Seed order: CLI flag, config file, COLMAX_SEED, per-command default.
    pub fn resolve_seed(&mut self, cli: Option<u64>, default: u64) -> Result<u64> {
        let value = if let Some(v) = cli {
            v
        } else if let Some(raw) = self.file.get("seed") {
            raw.parse()
                .map_err(|e| Error::InvalidInput(format!("config key seed={raw}: {e}")))?
        } else if let Ok(raw) = std::env::var(SEED_ENV) {
            raw.parse()
                .map_err(|e| Error::InvalidInput(format!("{SEED_ENV}={raw}: {e}")))?
        } else {
            default
        };
        self.note("seed", value);
        Ok(value)
    }

    /// Prints the resolved configuration to the diagnostic stream.
    pub fn flush(&mut self, command: &str) {
        eprintln!("config: command={command}");
        for (key, value) in self.log.drain(..) {
            eprintln!("config: {key}={value}");
        }
    }
}

/// Shared resolved globals handed to every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub format: OutputFormat,
}

fn init_workers(workers: usize) {
    if workers > 0 {
        // A pool may exist already when driven as a library; keep it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let mut resolver = Resolver::new(file);
    if let Some(path) = &cli.config {
        resolver.note("config-file", path.display());
    }
    let default_seed = match cli.command {
        Command::GenBench(_) => DEFAULT_BENCH_SEED,
        _ => 0,
    };
    let seed = resolver.resolve_seed(cli.seed, default_seed)?;
    let workers = resolver.resolve("workers", cli.workers, 0usize)?;
    let format = resolver.resolve("format", cli.format, OutputFormat::Text)?;
    init_workers(workers);
    let ctx = Ctx { seed, format };
    let name = cli.command.name();
    match cli.command {
        Command::BuildIndex(args) => commands::build_index(args, &mut resolver, &ctx, name),
        Command::Search(args) => commands::search_cmd(args, &mut resolver, &ctx, name),
        Command::Evaluate(args) => commands::evaluate(args, &mut resolver, &ctx, name),
        Command::EstimateStorage(args) => {
            commands::estimate_storage_cmd(args, &mut resolver, &ctx, name)
        }
        Command::MineNegatives(args) => commands::mine_negatives(args, &mut resolver, &ctx, name),
        Command::SampleClusters(args) => commands::sample_clusters(args, &mut resolver, &ctx, name),
        Command::Quantize(args) => commands::quantize(args, &mut resolver, &ctx, name),
        Command::Project(args) => commands::project(args, &mut resolver, &ctx, name),
        Command::Merge(args) => commands::merge(args, &mut resolver, &ctx, name),
        Command::GenBench(args) => commands::gen_bench(args, &mut resolver, &ctx, name),
        Command::Ablate(args) => commands::ablate(args, &mut resolver, &ctx, name),
    }
}

/// Parses argv and runs the selected subcommand. Returns the process exit
/// code: 0 success, 1 data error, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout and exit 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            1
        }
    }
}
