//! The `shroomgen` command: scene generation, rendering, annotation, crops,
//! tiles, generation jobs and metrics, each as a subcommand.

pub mod config;
pub mod error;
pub mod layout;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use shroomgen_genclient::{MockConfig, ENDPOINT_ENV};

pub use config::ProjectConfig;
pub use error::CliError;
pub use layout::Layout;
pub use stages::Context;

#[derive(Debug, Parser)]
#[command(name = "shroomgen", version, about = "Synthetic mushroom-bed instance segmentation datasets")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by all subcommands. Each overrides its config key.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Project config (JSON). Defaults apply without one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scene count for gen-scenes; depth-map count for jobs and submit.
    #[arg(long, global = true)]
    pub count: Option<u64>,
    /// Worker threads; 0 or unset uses all cores. Outputs do not depend on it.
    #[arg(long, short = 'j', global = true)]
    pub jobs: Option<usize>,
    /// Redo work whose outputs are up to date; replace a differing manifest.
    #[arg(long, global = true)]
    pub force: bool,
    /// For jobs and submit: write the manifest without posting anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Generation service base URL.
    #[arg(long, global = true, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    /// Output root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write scene descriptors derived from the master seed.
    GenScenes,
    /// Render depth, instance-id and control images for every scene.
    Render,
    /// Build the COCO annotation set from the renders.
    Annotate,
    /// Cut fixed crops from renders and annotations.
    Crop,
    /// Cut overlapping tiles from renders and annotations.
    Tile,
    /// gen-scenes, render, annotate, crop and tile in sequence.
    Pipeline,
    /// Write the generation job manifest.
    Jobs,
    /// Post pending and failed jobs and pair the results with annotations.
    Submit,
    /// Instance segmentation metrics.
    Eval {
        /// Ground truth COCO file; defaults to the project annotations.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// COCO results JSON.
        #[arg(long)]
        pred: PathBuf,
    },
    /// FID and KID between two feature files.
    Distance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Dataset statistics of a COCO file.
    Stats {
        /// Defaults to the project annotations.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the bundled mock generation service.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8188")]
        addr: String,
        /// Stop after serving this many jobs.
        #[arg(long)]
        shutdown_after: Option<usize>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

/// Resolves the config: defaults, then the config file, then flags.
pub fn context(args: &GlobalArgs) -> Result<Context, CliError> {
    let mut config = match &args.config {
        Some(p) => ProjectConfig::load(p)?,
        None => ProjectConfig::default(),
    };
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(o) = &args.out {
        config.output = o.clone();
    }
    config.validate()?;
    Ok(Context {
        layout: Layout::new(config.output.clone()),
        config,
        force: args.force,
        dry_run: args.dry_run,
        endpoint: args.endpoint.clone(),
    })
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let threads = cli.global.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
    pool.install(|| run_command(cli))
}

fn run_command(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(&cli.global)?;
    let depth_count = cli.global.count.map(|c| c as usize);
    match &cli.command {
        Command::GenScenes => {
            stages::gen_scenes(&ctx, cli.global.count.unwrap_or(ctx.config.scene_count))?;
        }
        Command::Render => {
            stages::render(&ctx)?;
        }
        Command::Annotate => {
            stages::annotate(&ctx)?;
        }
        Command::Crop => {
            stages::crop(&ctx)?;
        }
        Command::Tile => {
            stages::tile(&ctx)?;
        }
        Command::Pipeline => {
            stages::gen_scenes(&ctx, cli.global.count.unwrap_or(ctx.config.scene_count))?;
            stages::render(&ctx)?;
            stages::annotate(&ctx)?;
            stages::crop(&ctx)?;
            stages::tile(&ctx)?;
        }
        Command::Jobs => {
            stages::build_manifest(&ctx, depth_count)?;
        }
        Command::Submit => {
            stages::submit(&ctx, depth_count)?;
        }
        Command::Eval { gt, pred } => {
            let gt = gt.clone().unwrap_or_else(|| ctx.layout.annotations());
            let report = stages::eval(&ctx, &gt, pred)?;
            print!("{}", report.to_table());
        }
        Command::Distance { a, b } => print_json(&stages::distance(&ctx, a, b)?)?,
        Command::Stats { input } => {
            let p = input.clone().unwrap_or_else(|| ctx.layout.annotations());
            print_json(&stages::stats(&p)?)?;
        }
        Command::ServeMock { addr, shutdown_after } => stages::serve_mock(
            addr,
            MockConfig {
                shutdown_after: *shutdown_after,
                fail_first: 0,
            },
        )?,
        Command::ShowConfig => println!("{}", ctx.config.to_json()),
    }
    Ok(())
}
