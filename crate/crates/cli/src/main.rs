//! `advtext`: train, inspect and attack text CNNs from the shell.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "advtext",
    version,
    about = "Adversarial text workbench for CNN text classifiers"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// INI settings file; explicit flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Write the bundled topic and sentiment corpora plus lexicons into DIR and exit.
    #[arg(long, value_name = "DIR")]
    pub make_toy_data: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a char or word CNN on a labeled CSV and save a checkpoint.
    Train(TrainArgs),
    /// Accuracy and confusion matrix of a checkpoint on a labeled CSV.
    Eval(EvalArgs),
    /// Mine per-class hot training phrases.
    HtpMine(MineArgs),
    /// Gradient token scores and hot phrases for one text.
    Saliency(TextArgs),
    /// Occlusion deviations and hot phrases for one text.
    Occlude(TextArgs),
    /// Greedy source/target attack on one text.
    Attack(AttackArgs),
    /// Attacks over every source/target class pair of a dataset.
    Campaign(CampaignArgs),
    /// Per-class overlap of two HTP tables.
    Overlap(OverlapArgs),
    /// FGSM on the one-hot grid of a char model, before and after.
    FgsmDemo(FgsmArgs),
    /// Serve the HTTP JSON API.
    Serve(ServeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindArg {
    Char,
    Word,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    White,
    Black,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeskArg {
    TopicChar,
    TopicWord,
    SentimentChar,
    SentimentWord,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled CSV with a `label,text` header.
    #[arg(long, required_unless_present = "desk", conflicts_with = "desk")]
    pub data: Option<PathBuf>,
    /// Train a bundled recipe on its bundled corpus instead.
    #[arg(long, value_enum)]
    pub desk: Option<DeskArg>,
    #[arg(long, value_enum, default_value = "char")]
    pub kind: KindArg,
    /// Class names in output order (default: from settings or first appearance).
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Input length in characters (char) or tokens (word).
    #[arg(long)]
    pub len: Option<usize>,
    /// Pretrained word vectors, one `word v1 v2 ...` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model id stored in the checkpoint (default: file stem of --out).
    #[arg(long)]
    pub id: Option<String>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MineArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// HTP table as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-document phrase dump as JSON lines.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TextSource {
    /// The text itself.
    #[arg(long, conflicts_with = "text_file")]
    pub text: Option<String>,
    /// A file holding the text.
    #[arg(long)]
    pub text_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TextArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: TextSource,
    /// Hot words (white, word models) or hot tokens (black) kept.
    #[arg(long)]
    pub k: Option<usize>,
    /// Scores and spans as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttackOpts {
    #[arg(long, value_enum, default_value = "white")]
    pub mode: ModeArg,
    /// HTP table for insertions; without it only modify and remove are tried.
    #[arg(long)]
    pub htp: Option<PathBuf>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Candidate cap per strategy and step.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Comma-separated subset of insert,modify,remove.
    #[arg(long)]
    pub strategies: Option<String>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: TextSource,
    #[arg(long)]
    pub target: String,
    #[command(flatten)]
    pub opts: AttackOpts,
    /// Trace as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CampaignArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Documents attacked per source/target pair.
    #[arg(long, default_value_t = 20)]
    pub per_pair: usize,
    #[command(flatten)]
    pub opts: AttackOpts,
    /// Per-attack rows as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// All traces as one JSON array.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OverlapArgs {
    #[arg(long)]
    pub white: PathBuf,
    #[arg(long)]
    pub black: PathBuf,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Counts as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FgsmArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: TextSource,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Perturbed text.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Checkpoint to serve; repeatable. The id comes from the checkpoint.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// `ID=FILE` HTP table for a served model; repeatable.
    #[arg(long = "htp")]
    pub htps: Vec<String>,
    /// `ID=URL` external oracle speaking the probability-line protocol; repeatable.
    #[arg(long = "external")]
    pub externals: Vec<String>,
    /// Class names of the external oracles, in reply order.
    #[arg(long, value_delimiter = ',')]
    pub external_classes: Vec<String>,
    /// Directory for session snapshots.
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
