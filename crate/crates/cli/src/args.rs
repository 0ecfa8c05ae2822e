//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use topicflow::ingest::BuildParams;
use topicflow::layout::Viewport;
use topicflow::postprocess::PostParams;
use topicflow::treecut::CutParams;

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(name = "topicflow", version, about = "Focus-driven streaming topic trees")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Per-node prior penalty of a cut.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Symmetric Dirichlet concentration.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Focus similarity at which a cut node stays ungrouped.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Widest mean-shift window.
    #[arg(long = "w-max", global = true)]
    pub w_max: Option<f64>,
    /// Width of a time slice in days.
    #[arg(long = "window-days", global = true, default_value_t = 7.0)]
    pub window_days: f64,
    /// Scene size as WIDTHxHEIGHT.
    #[arg(long, global = true, default_value = "1600x900")]
    pub viewport: Viewport,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

impl Common {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn window_secs(&self) -> i64 {
        (self.window_days * 86_400.0).round() as i64
    }

    pub fn cut_params(&self) -> CutParams {
        let d = CutParams::default();
        CutParams { lambda: self.lambda.unwrap_or(d.lambda), rng_seed: self.seed, ..d }
    }

    pub fn post_params(&self) -> PostParams {
        let d = PostParams::default();
        PostParams { gamma: self.gamma.unwrap_or(d.gamma), w_max: self.w_max.unwrap_or(d.w_max), ..d }
    }

    pub fn build_params(&self) -> BuildParams {
        BuildParams { seed: self.seed, ..BuildParams::default() }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one topic tree per time slice of a JSONL corpus and link them.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Select a cut for every tree.
    Cut {
        #[arg(long)]
        trees: PathBuf,
        /// `auto`, or comma-separated `TIME/NODE` references.
        #[arg(long, default_value = "auto")]
        focus: String,
    },
    /// Per-step fitness and smoothness report as CSV.
    Metrics {
        #[arg(long)]
        trees: PathBuf,
        #[arg(long)]
        cuts: PathBuf,
        /// Also report the degree-of-interest baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Runtime scaling over replicated trees.
    Bench {
        /// Replication factors; I_num is 118 times each.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5, 7, 9, 11, 13, 15])]
        sizes: Vec<usize>,
        /// Focus counts.
        #[arg(long = "m", value_delimiter = ',', default_values_t = [1usize, 3, 5])]
        ms: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Scene JSON and SVG for a cut sequence.
    Layout {
        #[arg(long)]
        trees: PathBuf,
        #[arg(long)]
        cuts: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Preload one session with the synthetic demo corpus.
        #[arg(long)]
        demo: bool,
    },
    /// Synthetic corpus through every stage, written under --out.
    Demo,
}
