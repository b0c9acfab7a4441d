use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctxmix::ablation::Condition;
use ctxmix::commands::{self, parse_layers, ScoreSelection};
use ctxmix::mixing::{Granularity, Method, Scope};
use ctxmix::probing::{DEFAULT_FOLDS, DEFAULT_LAMBDA, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "ctxmix", version, about = "Context-mixing analysis for speech transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the encoder-only and encoder-decoder toy models with their datasets.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        utterances: usize,
    },
    /// Context-mixing score maps for every correctly transcribed utterance.
    Scores {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        /// Score decoder tokens individually instead of pooling them per word.
        #[arg(long)]
        tokens: bool,
    },
    /// Per-layer cue contribution, trained model against random-init baselines.
    CueContribution {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        /// First random-init seed; three consecutive seeds are used.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-validated probe for the target word's number at every layer.
    Probe {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long = "k-folds", default_value_t = DEFAULT_FOLDS)]
        k_folds: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Target confidence drops under silencing and blanking conditions.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of SC, BC, SBC, ST, SD.
        #[arg(long, value_delimiter = ',')]
        conditions: Option<Vec<String>>,
    },
    /// SVG heatmap of a scores.jsonl map, or line plot of a profile CSV.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Which map of a scores file to draw.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Model directory.
    #[arg(long)]
    model: PathBuf,
    /// Manifest file (JSON lines).
    #[arg(long)]
    manifests: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Comma-separated: attn, an, vz.
    #[arg(long, alias = "method", value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated: within-encoder, within-decoder, cross.
    #[arg(long, alias = "scope", value_delimiter = ',')]
    scopes: Option<Vec<String>>,
    /// Layers such as `2` or `1-3,6`.
    #[arg(long)]
    layers: Option<String>,
}

fn parse_all<T: std::str::FromStr<Err = ctxmix::Error>>(v: &Option<Vec<String>>) -> ctxmix::Result<Option<Vec<T>>> {
    v.as_ref()
        .map(|items| items.iter().map(|s| s.trim().parse()).collect())
        .transpose()
}

impl SelectArgs {
    fn resolve(&self) -> ctxmix::Result<ScoreSelection> {
        Ok(ScoreSelection {
            methods: parse_all::<Method>(&self.methods)?,
            scopes: parse_all::<Scope>(&self.scopes)?,
            layers: self.layers.as_deref().map(parse_layers).transpose()?,
        })
    }
}

fn run(cli: Cli) -> ctxmix::Result<serde_json::Value> {
    match cli.command {
        Command::Synth { out, seed, utterances } => commands::synth(&commands::SynthArgs { out, seed, utterances }),
        Command::Scores { data, select, tokens } => commands::scores(&commands::ScoresArgs {
            model: data.model,
            manifests: data.manifests,
            out: data.out,
            select: select.resolve()?,
            granularity: if tokens { Granularity::Token } else { Granularity::Word },
        }),
        Command::CueContribution { data, select, seed } => commands::cue_contribution(&commands::CueArgs {
            model: data.model,
            manifests: data.manifests,
            out: data.out,
            select: select.resolve()?,
            seed,
        }),
        Command::Probe {
            data,
            lambda,
            k_folds,
            seed,
        } => commands::probe(&commands::ProbeArgs {
            model: data.model,
            manifests: data.manifests,
            out: data.out,
            lambda,
            k_folds,
            seed,
        }),
        Command::Ablate { data, conditions } => commands::ablate(&commands::AblateArgs {
            model: data.model,
            manifests: data.manifests,
            out: data.out,
            conditions: parse_all::<Condition>(&conditions)?,
        }),
        Command::Render { input, out, index } => commands::render(&commands::RenderArgs { input, out, index }),
    }
}

fn configure_threads() {
    let Ok(v) = std::env::var("CTXMIX_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring CTXMIX_THREADS={v}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
