//! Trains a small regressor on a simulated scene, evaluates it on held-out
//! queries against the identity and PnP baselines, and saves a checkpoint.
//!
//! `cargo run --release --example train_regressor -- [epochs] [checkpoint]`

use std::path::PathBuf;

use marepo::eval::evaluate_samples;
use marepo::harness::{identity_report, oracle_report};
use marepo::io::is_validation_frame;
use marepo::oracle::RansacConfig;
use marepo::regressor::{save_checkpoint, RegressorConfig};
use marepo::simulator::{render_dataset, SceneSpec};
use marepo::training::{train_samples, AugmentConfig, OptimConfig, TrainSample};

fn main() -> marepo::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(Ok(30), |a| a.parse()).expect("epochs must be an integer");
    let ckpt = PathBuf::from(args.next().unwrap_or_else(|| "regressor.ckpt".into()));

    let spec = SceneSpec { seed: 1, n_map: 150, n_query: 50, ..Default::default() };
    let (_, map, query) = render_dataset(&spec)?;
    let (mut train, mut val): (Vec<TrainSample>, Vec<TrainSample>) = (vec![], vec![]);
    for (name, s) in map.names.iter().zip(map.samples) {
        if is_validation_frame(name) { val.push(s) } else { train.push(s) }
    }

    let cfg = RegressorConfig { token_stride: 8, ..Default::default() };
    let optim = OptimConfig { epochs, ..Default::default() };
    let augment = AugmentConfig { jitter_trans: 0.5, jitter_rot: 30.0 };
    let run = train_samples(&train, &val, &cfg, &optim, &augment, 0)?;
    for l in run.log.iter().filter(|l| l.split == "val") {
        println!("epoch {:>3} val loss {:.3} median {:.3} m {:.2} deg", l.epoch, l.loss, l.median_trans_m, l.median_rot_deg);
    }
    if let Some(e) = run.aborted {
        return Err(e);
    }

    let model = evaluate_samples(&run.params, &query.samples)?;
    let identity = identity_report(&query.samples);
    let oracle = oracle_report(&query.samples, &RansacConfig::default());
    for (name, r) in [("regressor", &model), ("identity", &identity), ("pnp oracle", &oracle)] {
        println!("{name:>10}: median {:.4} m {:.3} deg", r.median_trans, r.median_rot);
    }
    save_checkpoint(&ckpt, &run.params)?;
    println!("saved {}", ckpt.display());
    Ok(())
}
