use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use facekit::commands::{
    cmd_evaluate, cmd_generate, cmd_preprocess, cmd_train, cmd_verify, load_config, parse_illumination, with_threads,
    EXIT_DIFF, EXIT_VERIFY_ERROR, THREADS_ENV,
};
use facekit::evaluation::{SyntheticConfig, MANIFEST_NAME};

#[derive(Parser)]
#[command(name = "facekit", version, about = "Illumination-robust face verification toolkit")]
struct Cli {
    /// Worker threads for preprocessing and pair scoring.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Pipeline config (flat `key = value` file).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct DatasetArgs {
    /// Dataset root with one directory per identity.
    #[arg(long)]
    dataset: PathBuf,
    /// Split manifest; defaults to `<dataset>/manifest.txt`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl DatasetArgs {
    fn manifest(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.dataset.join(MANIFEST_NAME))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Normalize every PGM under the input tree into a mirrored output tree.
    Preprocess {
        /// Input directory.
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write INGI intermediate stages under `<out>/_debug/`.
        #[arg(long)]
        debug_dumps: bool,
    },
    /// Fit extractors and fusion on the train split and save the model.
    Train {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Model file to write.
        #[arg(long)]
        model: PathBuf,
    },
    /// Compare two images; exit 0 for SAME, 1 for DIFF, 2 on error.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        threshold: f64,
        image_a: PathBuf,
        image_b: PathBuf,
    },
    /// Run the gallery x probe protocol and write the JSON report and score CSV.
    Evaluate {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Use a trained model instead of training in-process.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report path; scores go to `<stem>.scores.csv` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic dataset with its manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        identities: usize,
        #[arg(long, default_value_t = 6)]
        images: usize,
        /// `none`, `ramp:<strength>` or `spot:<strength>`.
        #[arg(long, default_value = "none")]
        illumination: String,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

fn run(cli: Cli) -> i32 {
    let error_code = match &cli.command {
        Command::Verify { .. } => EXIT_VERIFY_ERROR,
        _ => EXIT_DIFF,
    };
    let result = with_threads(cli.threads, || -> facekit::Result<i32> {
        let (out, err): (&mut dyn Write, &mut dyn Write) = (&mut io::stdout(), &mut io::stderr());
        Ok(match cli.command {
            Command::Preprocess { dataset, out: dest, config, debug_dumps } => {
                let cfg = load_config(config.config.as_deref(), config.seed)?;
                cmd_preprocess(&dataset, &dest, &cfg, debug_dumps, out, err)
            }
            Command::Train { data, config, model } => {
                let cfg = load_config(config.config.as_deref(), config.seed)?;
                cmd_train(&data.dataset, &data.manifest(), &cfg, &model, out, err)
            }
            Command::Verify { model, threshold, image_a, image_b } => {
                cmd_verify(&model, &image_a, &image_b, threshold, out, err)
            }
            Command::Evaluate { data, config, model, out: report } => {
                let cfg = load_config(config.config.as_deref(), config.seed)?;
                cmd_evaluate(&data.dataset, &data.manifest(), &cfg, model.as_deref(), &report, out, err)
            }
            Command::Generate { out: dir, seed, identities, images, illumination, noise } => {
                let illum = parse_illumination(&illumination)?;
                cmd_generate(&dir, &SyntheticConfig::new(seed, identities, images, illum, noise), out, err)
            }
        })
    });
    match result.and_then(|r| r) {
        Ok(code) => code,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            error_code
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()) as u8)
}
