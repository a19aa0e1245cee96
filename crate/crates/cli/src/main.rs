//! `valb`: command-line front end for variable-aware log abstraction.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad flags, missing inputs, invalid configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "valb", version, about = "Variable-aware log abstraction")]
struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an annotation file into train/val/test files.
    Split(SplitArgs),
    /// Train a tagger and save the best checkpoint.
    Train(TrainArgs),
    /// Continue training a saved model on new data.
    Finetune(FinetuneArgs),
    /// Tag raw log lines.
    Tag(TagArgs),
    /// Turn raw log lines into templates and extracted variables.
    Parse(ParseArgs),
    /// Compare predicted annotations against gold annotations.
    Eval(EvalArgs),
    /// Build binary annotations from a structured benchmark file.
    DeriveAnnotations(DeriveArgs),
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
    /// Print the metadata of a model file as JSON.
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct SplitArgs {
    /// Annotation file to split.
    #[arg(long)]
    pub input: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.2,0.2,0.6")]
    pub ratios: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Directory receiving train.txt, val.txt and test.txt.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Fail on ill-formed annotation blocks instead of skipping them.
    #[arg(long)]
    pub strict: bool,
}

/// Training settings; each flag overrides the config file.
#[derive(Args, Default)]
pub struct TrainFlags {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub gradient_clip_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub freeze_word_embeddings: Option<bool>,
    /// variable_aware_accuracy, general_accuracy or auto.
    #[arg(long)]
    pub selection_metric: Option<String>,
    /// Fail on ill-formed annotation blocks instead of skipping them.
    #[arg(long)]
    pub strict: bool,
    /// Write per-epoch training records (JSON lines) here.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

impl TrainFlags {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("learning_rate", self.learning_rate.map(|v| v.to_string())),
            ("gradient_clip_norm", self.gradient_clip_norm.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("freeze_word_embeddings", self.freeze_word_embeddings.map(|v| v.to_string())),
            ("selection_metric", self.selection_metric.clone()),
        ]
    }
}

/// Architecture settings; each flag overrides the config file.
#[derive(Args, Default)]
pub struct ModelFlags {
    /// multiclass (ten categories) or binary (static vs. variable).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub char_emb_dim: Option<usize>,
    #[arg(long)]
    pub char_filters: Option<usize>,
    #[arg(long)]
    pub char_kernel: Option<usize>,
    #[arg(long)]
    pub lstm_hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f32>,
    #[arg(long)]
    pub max_word_len: Option<usize>,
    /// false trains the word-only baseline without character features.
    #[arg(long)]
    pub use_chars: Option<bool>,
    /// Minimum training frequency for a word to enter the vocabulary.
    #[arg(long)]
    pub min_freq: Option<usize>,
    /// Pretrained word vectors (text format, one word and its values per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

impl ModelFlags {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        let n = |v: Option<usize>| v.map(|v| v.to_string());
        vec![
            ("mode", self.mode.clone()),
            ("word_dim", n(self.word_dim)),
            ("char_emb_dim", n(self.char_emb_dim)),
            ("char_filters", n(self.char_filters)),
            ("char_kernel", n(self.char_kernel)),
            ("lstm_hidden", n(self.lstm_hidden)),
            ("dropout", self.dropout.map(|v| v.to_string())),
            ("max_word_len", n(self.max_word_len)),
            ("use_chars", self.use_chars.map(|v| v.to_string())),
            ("min_freq", n(self.min_freq)),
            ("embeddings", self.embeddings.as_ref().map(|p| p.display().to_string())),
        ]
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args)]
pub struct FinetuneArgs {
    /// Pretrained model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args)]
pub struct TagArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Raw log messages, one per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Annotation file to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct ParseArgs {
    /// Model file; tags the lines of --input.
    #[arg(long, required_unless_present = "annotations", requires = "input")]
    pub model: Option<PathBuf>,
    /// Raw log messages, one per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Parse an annotation file with its own tags instead of tagging raw lines.
    #[arg(long, conflicts_with_all = ["model", "input"])]
    pub annotations: Option<PathBuf>,
    /// Comma-separated categories kept verbatim in rendered templates.
    #[arg(long, default_value = "")]
    pub preserve: String,
    #[arg(long, default_value = valb::parse::WILDCARD)]
    pub wildcard: String,
    /// Per-line results (JSON lines).
    #[arg(long)]
    pub output: PathBuf,
    /// Template summary (JSON lines, first-seen order).
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// JSON report to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Score categories per token instead of per exact span.
    #[arg(long)]
    pub token_level: bool,
    /// Collapse both files to static vs. variable tags before scoring.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args)]
pub struct DeriveArgs {
    /// Comma-separated structured file with content and template columns.
    #[arg(long)]
    pub structured: PathBuf,
    #[arg(long, default_value = "Content")]
    pub content_col: String,
    #[arg(long, default_value = "EventTemplate")]
    pub template_col: String,
    /// Annotation file to write; unalignable rows go to `<out>.errors.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub templates: usize,
    #[arg(long, default_value_t = 2000)]
    pub logs: usize,
    /// full, familya or familyb.
    #[arg(long, default_value = "full")]
    pub lexicon: String,
    /// Probability that an id-like slot accepts a second category.
    #[arg(long)]
    pub polymorphic_rate: Option<f64>,
    /// Annotation file to write; also writes `<out>.spec.json` and
    /// `<out>.coverage.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("VALB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("VALB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(e.to_string()))
}

fn diagnostic(err: &anyhow::Error) -> (serde_json::Value, u8) {
    let (kind, code) = if err.downcast_ref::<UsageError>().is_some() {
        ("UsageError", 2)
    } else if let Some(e) = err.downcast_ref::<valb::Error>() {
        (e.kind(), 1)
    } else {
        ("Error", 1)
    };
    // sources are often already spelled out in their parent's message
    let mut parts: Vec<String> = Vec::new();
    for c in err.chain() {
        let m = c.to_string();
        if !parts.last().is_some_and(|p| p.contains(&m)) {
            parts.push(m);
        }
    }
    let message = parts.join(": ");
    (serde_json::json!({ "error": kind, "message": message }), code)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Split(a) => commands::split(&a),
        Command::Train(a) => commands::train(&a),
        Command::Finetune(a) => commands::finetune(&a),
        Command::Tag(a) => commands::tag(&a),
        Command::Parse(a) => commands::parse(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::DeriveAnnotations(a) => commands::derive_annotations(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Inspect(a) => commands::inspect(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({ "error": "UsageError", "message": first }));
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (json, code) = diagnostic(&e);
            eprintln!("{json}");
            ExitCode::from(code)
        }
    }
}
