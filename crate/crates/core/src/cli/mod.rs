//! Command-line front end. Every subcommand computes its own stage and pulls
//! any missing or stale upstream artifact from the output directory,
//! recomputing it when its config hash no longer matches.

pub mod config;
mod stages;
pub mod store;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{InputPaths, ModelKind, PartitionKind, RunConfig, Space};
use stages::Ctx;
pub use store::{strip_comments, Manifest, ManifestEntry, Store, MANIFEST};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Parser)]
#[command(name = "lmcortex", version, about = "LM-to-cortex encoding and hierarchy analysis")]
pub struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker cap. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true)]
    pub layer_src: Option<usize>,
    #[arg(long, global = true)]
    pub layer_tgt: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub partition: Option<PartitionKind>,
    /// With `fit`: permute stimulus rows and write null statistics instead.
    #[arg(long, global = true)]
    pub shuffle: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate planted-hierarchy data: activations, tokens, timeline, BOLD, ROIs.
    Synth,
    /// Average token features into TR bins.
    Align,
    /// Reduce aligned features (identity in raw space).
    Pca,
    /// Fit full, high and low encoding models.
    Fit,
    /// Perturbation runs and the thresholded causal graph.
    Causal,
    /// Split encoding-space features into high and low groups.
    Partition,
    /// Voxel and LM-feature time constants.
    Timeconst,
    /// ROI integration index against time constants.
    Rank,
    /// Shuffled null for the high-minus-low difference.
    Null,
    /// Toy LM activations.
    Toylm,
    /// Bundle maps, partition and hierarchy into one JSON.
    Report,
}

impl Cli {
    /// Config file merged with flag overrides.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                RunConfig::from_json(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.layer_src {
            cfg.layer_src = l;
        }
        if let Some(l) = self.layer_tgt {
            cfg.layer_tgt = l;
        }
        if let Some(p) = self.partition {
            cfg.partition = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    let store = Store::open(&cli.out_dir, cfg.hash()?, cfg.seed)?;
    let ctx = Ctx::new(cfg, store);
    par::with_threads(cli.threads, || match cli.command {
        Command::Synth => ctx.synth(),
        Command::Align => ctx.align(),
        Command::Pca => ctx.pca(),
        Command::Fit => ctx.fit(cli.shuffle),
        Command::Causal => ctx.causal(),
        Command::Partition => ctx.partition(),
        Command::Timeconst => ctx.timeconst(),
        Command::Rank => ctx.rank(),
        Command::Null => ctx.null(),
        Command::Toylm => ctx.toylm(),
        Command::Report => ctx.report(),
    })
}

/// One-line JSON error record.
pub fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message.replace('\n', " ") }).to_string()
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            exit_code(&e)
        }
    }
}
