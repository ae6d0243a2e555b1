//! Command-line surface of the `stvg` binary.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::error;
use stvg_core::evalkit::{load_results, metrics_csv, DEFAULT_THRESHOLDS};

use crate::config::{BackendSpec, DecomposerSpec, RunConfig};
use crate::pipeline::{resolve_cache_dir, run_pipeline, ConfigError};
use crate::study::{run_study, StudyKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MAJORITY_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stvg", version, about = "Zero-shot spatio-temporal video grounding from MLLM attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ground every manifest entry and write results, metrics and heatmaps.
    Run(RunArgs),
    /// Recompute metrics from a results file.
    Eval {
        #[arg(long)]
        results: PathBuf,
    },
    /// Special-token and consistency analyses over a manifest.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "study")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// toy:SEED, scripted:DIR or external:ID
    #[arg(long, default_value = "toy:0")]
    pub backend: String,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 10)]
    pub lra_steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lra_lr: f64,
    /// Skip the decomposition and prompt tuning on the spatial branch.
    #[arg(long)]
    pub no_spatial_prompt: bool,
    /// Attention cache location (default: $STVG_CACHE_DIR, else OUT/cache).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
    /// JSON file mapping query_id to {attribute, action}.
    #[arg(long, conflicts_with = "decompose_cmd")]
    pub decompose_fixture: Option<PathBuf>,
    /// Command speaking the line-delimited decomposition protocol.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    pub decompose_cmd: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Turn off both decomposed prompts.
    #[arg(long)]
    pub no_dsth: bool,
    #[arg(long)]
    pub no_temporal_prompt: bool,
    #[arg(long)]
    pub no_tas: bool,
    /// Average all special tokens instead of picking one.
    #[arg(long)]
    pub no_gti: bool,
    #[arg(long, default_value_t = 7)]
    pub k: usize,
    #[arg(long)]
    pub heatmaps: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn base_config(c: &CommonArgs, out: PathBuf) -> anyhow::Result<RunConfig> {
    let backend: BackendSpec = c.backend.parse()?;
    let mut cfg = RunConfig::new(&c.manifest, backend, out);
    cfg.pipeline.n_frames_sampled = c.frames;
    cfg.pipeline.lra.n_ep = c.lra_steps;
    cfg.pipeline.lra.step_size = c.lra_lr;
    cfg.flags.spatial_prompt = !c.no_spatial_prompt;
    cfg.cache_dir = (!c.no_cache).then(|| resolve_cache_dir(c.cache_dir.clone(), &cfg.out_dir));
    cfg.decomposer = match (&c.decompose_fixture, &c.decompose_cmd) {
        (Some(p), _) => Some(DecomposerSpec::Fixture(p.clone())),
        (None, Some(argv)) => Some(DecomposerSpec::Command(argv.clone())),
        (None, None) => None,
    };
    Ok(cfg)
}

pub fn run_config(a: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = base_config(&a.common, a.out.clone())?;
    cfg.pipeline.top_k_frames = a.k;
    cfg.flags.spatial_prompt &= !a.no_dsth;
    cfg.flags.temporal_prompt = !(a.no_dsth || a.no_temporal_prompt);
    cfg.flags.tas = !a.no_tas;
    cfg.flags.gti = !a.no_gti;
    cfg.heatmaps = a.heatmaps;
    cfg.jobs = a.jobs;
    Ok(cfg)
}

fn report(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<ConfigError>().is_some() {
        error!("configuration error: {e:#}");
        EXIT_CONFIG
    } else {
        error!("{e:#}");
        EXIT_RUNTIME
    }
}

/// Runs `cli` and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(a) => {
            let cfg = match run_config(&a) {
                Ok(c) => c,
                Err(e) => return report(&anyhow::Error::new(ConfigError(e))),
            };
            match run_pipeline(&cfg) {
                Ok(outcome) => {
                    if let Some(s) = &outcome.results.summary {
                        print!("{}", metrics_csv(s));
                    }
                    if outcome.majority_failed() {
                        error!(
                            "{} of {} samples failed",
                            outcome.failures(),
                            outcome.results.samples.len()
                        );
                        EXIT_MAJORITY_FAILURE
                    } else {
                        EXIT_OK
                    }
                }
                Err(e) => report(&e),
            }
        }
        Command::Eval { results } => {
            let r = load_results(&results)
                .with_context(|| format!("loading {}", results.display()))
                .and_then(|r| Ok(r.recompute(&DEFAULT_THRESHOLDS)?));
            match r {
                Ok(s) => {
                    print!("{}", metrics_csv(&s));
                    EXIT_OK
                }
                Err(e) => report(&anyhow::Error::new(ConfigError(e))),
            }
        }
        Command::Study { kind, common, out } => {
            let cfg = match base_config(&common, out) {
                Ok(mut c) => {
                    // studies never select a span
                    c.pipeline.top_k_frames = c.pipeline.top_k_frames.min(c.pipeline.n_frames_sampled);
                    c
                }
                Err(e) => return report(&anyhow::Error::new(ConfigError(e))),
            };
            match run_study(kind, &cfg) {
                Ok(o) => {
                    for f in &o.files {
                        println!("{}", f.display());
                    }
                    EXIT_OK
                }
                Err(e) => report(&e),
            }
        }
    }
}
