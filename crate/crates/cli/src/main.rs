//! The `loopsplat` binary: argument parsing, worker-pool setup, and
//! exit-code policy (0 success, 1 validation error, 2 runtime error).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use loopsplat::core::Camera;
use loopsplat::{Error, Result};
use loopsplat_cli::commands::{
    cmd_depth, cmd_eval, cmd_init, cmd_loop, cmd_pseudo, cmd_render, DepthFilters,
};
use loopsplat_cli::config::load_config;
use nalgebra::Vector3;

#[derive(Parser)]
#[command(
    name = "loopsplat",
    version,
    about = "Sparse-input Gaussian splatting with progressive loop initialization"
)]
struct Cli {
    /// Worker threads; the LOOPSPLAT_THREADS environment variable wins.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed override for every seeded component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Deterministic view-ordering override.
    #[arg(long, global = true)]
    deterministic: Option<bool>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the initial reconstruction and cloud; write a checkpoint.
    Init(ConfigArg),
    /// One training run without refinement loops.
    Train(ConfigArg),
    /// The full progressive pipeline.
    Loop {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the configured loop count; 0 matches `train`.
        #[arg(long)]
        loops: Option<usize>,
    },
    /// Render a checkpoint from one camera into PPM color and PFM depth.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Configuration supplying the camera rig and background.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training-view index into the rig.
        #[arg(long, default_value_t = 0)]
        view: usize,
        /// A serialized camera, overriding the rig lookup.
        #[arg(long)]
        camera_json: Option<PathBuf>,
        /// Output stem; `.ppm` and `.pfm` are appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Project filtered sparse depth maps from a COLMAP text model.
    Depth {
        #[arg(long)]
        colmap_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Keep points regardless of reprojection error.
        #[arg(long)]
        no_filter1: bool,
        /// Keep points observed only by pseudo views.
        #[arg(long)]
        no_filter2: bool,
        /// Project points into every view, not just observing ones.
        #[arg(long)]
        no_filter3: bool,
        /// Image-name prefix marking pseudo views.
        #[arg(long, default_value = "pseudo_")]
        pseudo_prefix: String,
    },
    /// Emit the pseudo cameras of one loop index as JSON.
    Pseudo {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 1)]
        loop_index: usize,
    },
    /// PSNR/SSIM of a checkpoint over the training views.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Validation failures exit 1, runtime failures 2. Loop wrappers defer to
/// the failure they carry.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoCameras
        | Error::InvalidIntrinsics(_)
        | Error::InvalidPose(_)
        | Error::DimensionMismatch(_)
        | Error::MonoDepthRequired(_)
        | Error::SparseDepthRequired(_)
        | Error::EmptyInput(_)
        | Error::IndexOutOfRange(_)
        | Error::Parse { .. }
        | Error::UnknownCameraModel { .. }
        | Error::InvalidModel(_)
        | Error::InvalidConfig(_) => 1,
        Error::LoopFailed { source, .. } => exit_code(source),
        Error::NonFiniteParameter { .. }
        | Error::NonFiniteLoss { .. }
        | Error::Provider(_)
        | Error::Io { .. } => 2,
    }
}

fn thread_count(cli_threads: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("LOOPSPLAT_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("LOOPSPLAT_THREADS must be an integer, got '{v}'"))),
        Err(_) => Ok(cli_threads),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = thread_count(cli.threads)? {
        // A later global-pool build fails harmlessly if one already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let load = |path: &PathBuf| load_config(path, cli.seed, cli.deterministic);
    match &cli.command {
        Command::Init(c) => cmd_init(&load(&c.config)?),
        Command::Train(c) => cmd_loop(&load(&c.config)?, Some(0)),
        Command::Loop { config, loops } => cmd_loop(&load(&config.config)?, *loops),
        Command::Render { checkpoint, config, view, camera_json, out } => {
            let cfg = config.as_ref().map(|p| load(p)).transpose()?;
            let background = cfg
                .as_ref()
                .map(|c| Vector3::from(c.train.background))
                .unwrap_or_else(Vector3::zeros);
            let camera: Camera = if let Some(path) = camera_json {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    context: format!("reading {}", path.display()),
                    source: e,
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
            } else {
                let cfg = cfg.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("render needs --config or --camera-json".into())
                })?;
                let inputs = loopsplat_cli::dataset::model_inputs(cfg)?;
                inputs
                    .views
                    .get(*view)
                    .map(|v| v.camera)
                    .ok_or(Error::IndexOutOfRange(*view))?
            };
            cmd_render(checkpoint, &camera, background, out)
        }
        Command::Depth { colmap_dir, out_dir, no_filter1, no_filter2, no_filter3, pseudo_prefix } => {
            cmd_depth(
                colmap_dir,
                out_dir,
                DepthFilters {
                    filter1: !no_filter1,
                    filter2: !no_filter2,
                    filter3: !no_filter3,
                },
                pseudo_prefix,
            )
        }
        Command::Pseudo { config, loop_index } => cmd_pseudo(&load(&config.config)?, *loop_index),
        Command::Eval { config, checkpoint } => cmd_eval(&load(&config.config)?, checkpoint),
    }
}

fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            exit_code(&e)
        }
    }
}

fn main() {
    std::process::exit(run());
}
