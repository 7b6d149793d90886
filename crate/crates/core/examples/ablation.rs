//! Trains the four dynamic-PE / re-attention variants on one scene.
//!
//! `cargo run --release --example ablation -- [epochs]`

use marepo::harness::{ablate, TrainSettings};
use marepo::io::is_validation_frame;
use marepo::regressor::RegressorConfig;
use marepo::simulator::{render_dataset, SceneSpec};
use marepo::training::{AugmentConfig, OptimConfig};

fn main() -> marepo::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(Ok(20), |a| a.parse()).expect("epochs must be an integer");
    let spec = SceneSpec { seed: 2, n_map: 120, n_query: 40, ..Default::default() };
    let (_, map, query) = render_dataset(&spec)?;
    let (val, train): (Vec<_>, Vec<_>) = map.names.iter().zip(map.samples).partition(|(n, _)| is_validation_frame(n));
    let strip = |v: Vec<(&String, _)>| v.into_iter().map(|(_, s)| s).collect::<Vec<_>>();
    let settings = TrainSettings {
        regressor: RegressorConfig { token_stride: 8, ..Default::default() },
        optim: OptimConfig { epochs, ..Default::default() },
        augment: AugmentConfig { jitter_trans: 0.5, jitter_rot: 30.0 },
    };
    for (v, r) in ablate(&strip(train), &strip(val), &query.samples, &settings)? {
        println!(
            "{:<15} dynamic_pe={:<5} reattention={:<5} median {:.4} m {:.3} deg",
            v.name, v.dynamic_pe, v.reattention, r.median_trans, r.median_rot
        );
    }
    Ok(())
}
