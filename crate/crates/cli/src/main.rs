use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::Overrides;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_GATE_REJECTED: u8 = 3;
pub const EXIT_REGISTRATION_FAILED: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<lumen::Error> for CliError {
    fn from(e: lumen::Error) -> Self {
        use lumen::Error as E;
        let code = match e {
            E::Io { .. } | E::Decode { .. } | E::BasisFormat(_) => EXIT_IO,
            E::InvalidArgument(_) | E::Attitude(_) | E::InvalidCameraIndex(_) => EXIT_USAGE,
            _ => EXIT_REGISTRATION_FAILED,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lumen", version, about = "Register and stitch low-texture image sequences")]
struct Cli {
    /// Worker threads (defaults to LUMEN_THREADS, then the core count).
    #[arg(long, global = true, env = "LUMEN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register one frame pair and write its transform and an overlay.
    Register {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Attitude CSV; rows are matched to frames by file stem.
        #[arg(long)]
        attitude: Option<PathBuf>,
        /// Also write the joint histogram at the final transform as a CSV grid.
        #[arg(long, value_name = "FILE")]
        dump_hist: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Stitch a directory (or a text file listing one image per line) into map segments.
    Stitch {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        attitude: Option<PathBuf>,
        /// Leave per-frame timings out of the manifest.
        #[arg(long)]
        no_timings: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the synthetic-pair benchmark and write a CSV of per-method rows.
    Eval {
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        /// Comma-separated: feature-only, nmi-identity, hybrid.
        #[arg(long, default_value = "feature-only,nmi-identity,hybrid")]
        methods: String,
        /// Skip the descriptor/outlier-filter correct-rate rows.
        #[arg(long)]
        no_correct_rates: bool,
        /// Side of the generated pair frames.
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Keypoint utilities.
    Features {
        #[command(subcommand)]
        command: FeaturesCommand,
    },
    /// PCA-SIFT basis utilities.
    Pca {
        #[command(subcommand)]
        command: PcaCommand,
    },
}

#[derive(Debug, Subcommand)]
enum FeaturesCommand {
    /// Write detected keypoints as CSV (x, y, scale, orientation, response).
    Dump {
        image: PathBuf,
        /// Append descriptor columns: sift or pca-sift.
        #[arg(long)]
        descriptor: Option<String>,
        #[arg(long)]
        pca_basis: Option<PathBuf>,
        /// Skip contrast enhancement.
        #[arg(long)]
        no_enhance: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum PcaCommand {
    /// Train a basis from keypoint patches harvested from the given images.
    Train {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip contrast enhancement.
        #[arg(long)]
        no_enhance: bool,
        #[arg(long, default_value_t = lumen::features::DEFAULT_PCA_DIM)]
        dim: usize,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Register {
            a,
            b,
            out,
            attitude,
            dump_hist,
            overrides,
        } => commands::register(&a, &b, &out, attitude.as_deref(), dump_hist.as_deref(), &overrides),
        Command::Stitch {
            input,
            out,
            attitude,
            no_timings,
            overrides,
        } => commands::stitch(&input, &out, attitude.as_deref(), !no_timings, &overrides),
        Command::Eval {
            pairs,
            methods,
            no_correct_rates,
            size,
            out,
            overrides,
        } => commands::eval(pairs, &methods, !no_correct_rates, size, &out, &overrides),
        Command::Features {
            command:
                FeaturesCommand::Dump {
                    image,
                    descriptor,
                    pca_basis,
                    no_enhance,
                    out,
                },
        } => commands::features_dump(&image, no_enhance, descriptor.as_deref(), pca_basis.as_deref(), out.as_deref()),
        Command::Pca {
            command:
                PcaCommand::Train {
                    images,
                    out,
                    no_enhance,
                    dim,
                },
        } => commands::pca_train(&images, no_enhance, &out, dim),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("lumen: {e}");
            ExitCode::from(e.code)
        }
    }
}
