//! Accuracy of a trained checkpoint as scene coordinates are corrupted.
//!
//! `cargo run --release --example noise_sweep -- regressor.ckpt`
//! (train one first with the `train_regressor` example)

use marepo::harness::{noise_experiment, NOISE_FRACTIONS};
use marepo::regressor::load_checkpoint;
use marepo::simulator::{render_dataset, SceneSpec};

fn main() -> marepo::Result<()> {
    let ckpt = std::env::args().nth(1).unwrap_or_else(|| "regressor.ckpt".into());
    let params = load_checkpoint(ckpt.as_ref())?;
    let spec = SceneSpec { seed: 1, n_map: 150, n_query: 50, ..Default::default() };
    let (_, _, query) = render_dataset(&spec)?;
    let quarter = spec.diameter() / 4.0;
    let magnitudes = [0.1 * quarter, 0.5 * quarter];
    let grid = noise_experiment(&params, &query.samples, &magnitudes, &NOISE_FRACTIONS, 0, 4)?;
    let threshold = grid.reports[0][0][0].median_trans;
    println!("mean accuracy over 4 draws at {threshold:.3} m / 180 deg, by corrupted fraction {NOISE_FRACTIONS:?}");
    for (m, mag) in magnitudes.iter().enumerate() {
        let row: Vec<String> = grid.accuracy_row(m, threshold, 180.0).iter().map(|a| format!("{a:.2}")).collect();
        println!("magnitude {mag:.3} m: {}", row.join("  "));
    }
    Ok(())
}
