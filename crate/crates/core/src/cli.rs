//! The `marepo` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::eval::evaluate_samples;
use crate::harness::{
    ablate, finetune_dataset, init_thread_pool, noise_experiment, oracle_report, train_dataset, write_ablation_csv,
    write_noise_csv, TrainSettings, MAPPING_SPLIT, NOISE_FRACTIONS, NOISE_MAGNITUDES, QUERY_SPLIT,
};
use crate::io::{pose_to_text, read_intrinsics, read_scm, read_split, write_metrics_log, write_report};
use crate::oracle::{ransac_pnp, scm_correspondences, RansacConfig};
use crate::regressor::{forward, load_checkpoint, save_checkpoint};
use crate::simulator::{make_dataset, SceneSpec};
use crate::training::{AugmentConfig, OptimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "marepo", version, about = "Map-relative camera pose regression on scene coordinate maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset from a scene spec file.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a regressor on the mapping split of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics CSV; defaults to `<out>.metrics.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Continue training a checkpoint on a dataset's mapping split.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Optimizer and augmentation keys; regressor keys are ignored.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the camera-to-scene pose of one map, 16 decimals per entry.
    Localize {
        #[command(flatten)]
        source: PoseSource,
        #[arg(long)]
        scm: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
    },
    /// Evaluate a checkpoint on the query split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate RANSAC-PnP on the query split.
    Oracle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Accuracy under injected scene-coordinate noise.
    NoiseExp {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = NOISE_MAGNITUDES)]
        magnitudes: Vec<f64>,
        #[arg(long, default_value_t = 0.10)]
        trans_threshold: f64,
        #[arg(long, default_value_t = 5.0)]
        rot_threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise draws averaged per cell; draw r uses seed + r.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Train and evaluate with dynamic PE and re-attention toggled.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct PoseSource {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Solve with RANSAC-PnP instead of a network.
    #[arg(long)]
    oracle: bool,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

/// Parses `argv` (program name first), runs the command, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn metrics_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".metrics.csv");
    PathBuf::from(s)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { spec, out } => {
            let mut kv = KeyValues::read(&spec)?;
            let spec = SceneSpec::from_kv(&mut kv)?;
            kv.finish()?;
            make_dataset(&spec, &out)?;
            eprintln!("wrote {} mapping and {} query frames to {}", spec.n_map, spec.n_query, out.display());
        }
        Command::Train { data, config, out, log } => {
            let settings = TrainSettings::read(&config)?;
            let run = train_dataset(&data, &settings)?;
            let log_path = log.unwrap_or_else(|| metrics_path(&out));
            write_metrics_log(&log_path, &run.log)?;
            save_checkpoint(&out, &run.params)?;
            if let Some(e) = run.aborted {
                eprintln!("training stopped early; saved last finite parameters");
                return Err(e);
            }
        }
        Command::Finetune { ckpt, data, epochs, out, config } => {
            let params = load_checkpoint(&ckpt)?;
            let (optim, augment) = match config {
                Some(path) => {
                    let mut kv = KeyValues::read(&path)?;
                    let optim = OptimConfig::from_kv(&mut kv)?;
                    let augment = AugmentConfig::from_kv(&mut kv)?;
                    (optim, augment)
                }
                None => (OptimConfig::default(), AugmentConfig::default()),
            };
            let run = finetune_dataset(&params, &data, epochs, &optim, &augment)?;
            save_checkpoint(&out, &run.params)?;
            if let Some(e) = run.aborted {
                return Err(e);
            }
        }
        Command::Localize { source, scm, intrinsics } => {
            let scm = read_scm(&scm)?;
            let k = read_intrinsics(&intrinsics)?;
            let pose = match source.ckpt {
                Some(ckpt) => forward(&scm, &k, &load_checkpoint(&ckpt)?, false)?.pose,
                None => ransac_pnp(&scm_correspondences(&scm), &k, &RansacConfig::default())?.pose,
            };
            print!("{}", pose_to_text(&pose));
        }
        Command::Evaluate { ckpt, data, out } => {
            let params = load_checkpoint(&ckpt)?;
            let query = read_split(&data, QUERY_SPLIT)?;
            let report = evaluate_samples(&params, &query.samples)?;
            write_report(&out, &query.names, &report)?;
            print_summary(&report);
        }
        Command::Oracle { data, out, seed } => {
            let query = read_split(&data, QUERY_SPLIT)?;
            let cfg = RansacConfig { seed, ..Default::default() };
            let report = oracle_report(&query.samples, &cfg);
            write_report(&out, &query.names, &report)?;
            print_summary(&report);
        }
        Command::NoiseExp { ckpt, data, out, magnitudes, trans_threshold, rot_threshold, seed, repeats } => {
            let params = load_checkpoint(&ckpt)?;
            let query = read_split(&data, QUERY_SPLIT)?;
            let grid = noise_experiment(&params, &query.samples, &magnitudes, &NOISE_FRACTIONS, seed, repeats)?;
            write_noise_csv(&out, &grid, trans_threshold, rot_threshold)?;
        }
        Command::Ablate { data, config, out } => {
            let settings = TrainSettings::read(&config)?;
            let (train, val) = read_split(&data, MAPPING_SPLIT)?.train_val();
            let query = read_split(&data, QUERY_SPLIT)?;
            let results = ablate(&train, &val, &query.samples, &settings)?;
            write_ablation_csv(&out, &results)?;
            for (v, r) in &results {
                eprintln!("{:<16} median {:.4} m {:.3} deg", v.name, r.median_trans, r.median_rot);
            }
        }
    }
    Ok(())
}

fn print_summary(report: &crate::eval::EvalReport) {
    println!(
        "frames {} median {:.6} m {:.4} deg",
        report.errors.len(),
        report.median_trans,
        report.median_rot
    );
    for a in &report.accuracies {
        println!("acc@{}m/{}deg {:.4}", a.trans_m, a.rot_deg, a.fraction);
    }
}
