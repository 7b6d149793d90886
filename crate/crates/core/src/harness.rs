//! Dataset-level workflows shared by the command line and the examples:
//! training from a directory, oracle baselines, noise sweeps and ablations.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::eval::{evaluate_samples, EvalReport};
use crate::geometry::{pose_error, Pose, PoseError};
use crate::io::{format_float, read_split, write_csv};
use crate::oracle::{ransac_pnp, scm_correspondences, RansacConfig};
use crate::regressor::{ModelParams, RegressorConfig};
use crate::simulator::{inject_noise, NoiseSpec};
use crate::training::{finetune_samples, train_samples, AugmentConfig, OptimConfig, TrainRun, TrainSample};

pub const THREADS_ENV: &str = "MAREPO_THREADS";
pub const MAPPING_SPLIT: &str = "mapping";
pub const QUERY_SPLIT: &str = "query";

/// Sizes the global worker pool from `MAREPO_THREADS` (default: all cores).
/// Returns the pool size; a pool that already exists is left alone.
pub fn init_thread_pool() -> Result<usize> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(rayon::current_num_threads())
}

/// Everything a training config file can set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSettings {
    pub regressor: RegressorConfig,
    pub optim: OptimConfig,
    pub augment: AugmentConfig,
}

impl TrainSettings {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let s = TrainSettings {
            regressor: RegressorConfig::from_kv(&mut kv)?,
            optim: OptimConfig::from_kv(&mut kv)?,
            augment: AugmentConfig::from_kv(&mut kv)?,
        };
        kv.finish()?;
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(KeyValues::read(path)?)
    }
}

/// Trains on `data/mapping`, holding out the hash-selected validation frames.
pub fn train_dataset(data: &Path, settings: &TrainSettings) -> Result<TrainRun> {
    let split = read_split(data, MAPPING_SPLIT)?;
    let (train, val) = split.train_val();
    train_samples(
        &train,
        &val,
        &settings.regressor,
        &settings.optim,
        &settings.augment,
        settings.optim.seed,
    )
}

/// Fine-tunes on every frame of `data/mapping`.
pub fn finetune_dataset(
    params: &ModelParams,
    data: &Path,
    epochs: usize,
    optim: &OptimConfig,
    augment: &AugmentConfig,
) -> Result<TrainRun> {
    let split = read_split(data, MAPPING_SPLIT)?;
    finetune_samples(params, &split.samples, epochs, optim, augment, optim.seed)
}

/// RANSAC-PnP on the frame's own valid cells.
pub fn oracle_pose(sample: &TrainSample, cfg: &RansacConfig) -> Result<Pose> {
    let corr = scm_correspondences(&sample.scm);
    Ok(ransac_pnp(&corr, &sample.k, cfg)?.pose)
}

/// Oracle errors per frame; a frame the solver cannot handle counts as an
/// infinite error rather than aborting the report.
pub fn oracle_report(samples: &[TrainSample], cfg: &RansacConfig) -> EvalReport {
    let errors: Vec<PoseError> = samples
        .par_iter()
        .map(|s| match oracle_pose(s, cfg) {
            Ok(p) => pose_error(&p, &s.gt),
            Err(_) => PoseError {
                trans_err: f64::INFINITY,
                rot_err: f64::INFINITY,
            },
        })
        .collect();
    EvalReport::from_errors(errors)
}

/// Median errors of always answering the identity pose.
pub fn identity_report(samples: &[TrainSample]) -> EvalReport {
    let truths: Vec<Pose> = samples.iter().map(|s| s.gt).collect();
    EvalReport::from_poses(&vec![Pose::identity(); truths.len()], &truths)
}

pub const NOISE_FRACTIONS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const NOISE_MAGNITUDES: [f64; 2] = [0.10, 0.50];

/// Reports for every `(magnitude, fraction)` cell of a noise sweep, one per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    pub magnitudes: Vec<f64>,
    pub fractions: Vec<f64>,
    /// `reports[m][f][r]` for noise draw `r`.
    pub reports: Vec<Vec<Vec<EvalReport>>>,
}

impl NoiseGrid {
    /// Accuracy at the given thresholds along the row of magnitude index `m`,
    /// averaged over draws.
    pub fn accuracy_row(&self, m: usize, trans_m: f64, rot_deg: f64) -> Vec<f64> {
        self.reports[m]
            .iter()
            .map(|draws| draws.iter().map(|r| r.accuracy_at(trans_m, rot_deg)).sum::<f64>() / draws.len() as f64)
            .collect()
    }
}

/// The noise rng of frame `index`; shared by every cell of the sweep so that
/// corrupted sets are nested across fractions.
pub fn noise_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Corrupts every frame at each `(magnitude, fraction)` and evaluates.
/// Draw `r` of `repeats` uses noise seed `seed + r`.
pub fn noise_experiment(
    params: &ModelParams,
    samples: &[TrainSample],
    magnitudes: &[f64],
    fractions: &[f64],
    seed: u64,
    repeats: usize,
) -> Result<NoiseGrid> {
    if repeats == 0 {
        return Err(Error::Config("noise experiment needs at least one repeat".into()));
    }
    let mut reports = Vec::with_capacity(magnitudes.len());
    for &magnitude in magnitudes {
        let mut row = Vec::with_capacity(fractions.len());
        for &fraction in fractions {
            let spec = NoiseSpec { fraction, magnitude };
            let mut draws = Vec::with_capacity(repeats);
            for r in 0..repeats as u64 {
                let noisy = samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        Ok(TrainSample {
                            scm: inject_noise(&s.scm, &spec, &mut noise_rng(seed.wrapping_add(r), i))?,
                            ..s.clone()
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                draws.push(evaluate_samples(params, &noisy)?);
            }
            row.push(draws);
        }
        reports.push(row);
    }
    Ok(NoiseGrid {
        magnitudes: magnitudes.to_vec(),
        fractions: fractions.to_vec(),
        reports,
    })
}

/// One row per magnitude: accuracy at `(trans_m, rot_deg)` for each fraction.
pub fn write_noise_csv(path: &Path, grid: &NoiseGrid, trans_m: f64, rot_deg: f64) -> Result<()> {
    let mut header = vec!["magnitude_m".to_string(), "trans_threshold_m".into(), "rot_threshold_deg".into()];
    header.extend(grid.fractions.iter().map(|f| format!("acc_frac_{f}")));
    let rows: Vec<Vec<String>> = (0..grid.magnitudes.len())
        .map(|m| {
            let mut row = vec![format_float(grid.magnitudes[m]), format_float(trans_m), format_float(rot_deg)];
            row.extend(grid.accuracy_row(m, trans_m, rot_deg).into_iter().map(format_float));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &rows)
}

/// A configuration compared by [`ablate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationVariant {
    pub name: &'static str,
    pub dynamic_pe: bool,
    pub reattention: bool,
}

pub const ABLATION_VARIANTS: [AblationVariant; 4] = [
    AblationVariant { name: "full", dynamic_pe: true, reattention: true },
    AblationVariant { name: "no_reattention", dynamic_pe: true, reattention: false },
    AblationVariant { name: "no_dynamic_pe", dynamic_pe: false, reattention: true },
    AblationVariant { name: "neither", dynamic_pe: false, reattention: false },
];

impl AblationVariant {
    pub fn apply(&self, base: &RegressorConfig) -> RegressorConfig {
        RegressorConfig {
            enable_dynamic_pe: self.dynamic_pe,
            enable_reattention: self.reattention,
            ..base.clone()
        }
    }
}

/// Trains and evaluates every ablation variant with identical data and seed.
pub fn ablate(
    train: &[TrainSample],
    val: &[TrainSample],
    query: &[TrainSample],
    settings: &TrainSettings,
) -> Result<Vec<(AblationVariant, EvalReport)>> {
    ABLATION_VARIANTS
        .iter()
        .map(|v| {
            let cfg = v.apply(&settings.regressor);
            let run = train_samples(train, val, &cfg, &settings.optim, &settings.augment, settings.optim.seed)?;
            if let Some(e) = run.aborted {
                return Err(e);
            }
            Ok((*v, evaluate_samples(&run.params, query)?))
        })
        .collect()
}

pub fn write_ablation_csv(path: &Path, results: &[(AblationVariant, EvalReport)]) -> Result<()> {
    let mut header = vec!["variant", "dynamic_pe", "reattention"];
    header.extend(crate::io::SUMMARY_HEADER);
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(v, r)| {
            let mut row = vec![v.name.to_string(), v.dynamic_pe.to_string(), v.reattention.to_string()];
            row.extend(crate::io::summary_row(r));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_reject_unknown_keys() {
        let kv = KeyValues::parse("d_model=16\nn_heads=2\nepochs=3\njitter_rot=10\n").unwrap();
        let s = TrainSettings::from_kv(kv).unwrap();
        assert_eq!(s.regressor.d_model, 16);
        assert_eq!(s.optim.epochs, 3);
        assert_eq!(s.augment.jitter_rot, 10.0);
        assert!(TrainSettings::from_kv(KeyValues::parse("bogus=1").unwrap()).is_err());
    }

    #[test]
    fn ablation_variants_cover_flag_grid() {
        let mut seen: Vec<(bool, bool)> = ABLATION_VARIANTS.iter().map(|v| (v.dynamic_pe, v.reattention)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }
}
