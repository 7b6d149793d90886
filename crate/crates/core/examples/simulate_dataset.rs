//! Renders a synthetic scene to disk and checks every frame's closure.
//!
//! `cargo run --release --example simulate_dataset -- [out_dir] [box-room|heightfield]`

use std::path::PathBuf;

use marepo::io::read_split;
use marepo::simulator::{make_dataset, max_closure_error, SceneSpec, SurfaceKind};

fn main() -> marepo::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sim_out".into()));
    let surface: SurfaceKind = args.next().unwrap_or_else(|| "heightfield".into()).parse()?;
    let spec = SceneSpec { seed: 7, surface, n_map: 40, n_query: 10, map_variants: 1, ..Default::default() };
    make_dataset(&spec, &out)?;
    for split in ["mapping", "query"] {
        let data = read_split(&out, split)?;
        let worst = data
            .samples
            .iter()
            .map(|s| max_closure_error(&s.scm, &s.gt, &s.k))
            .fold(0.0, f64::max);
        let valid: usize = data.samples.iter().map(|s| s.scm.n_valid()).sum();
        println!(
            "{split}: {} frames, {:.1}% valid cells, worst closure {worst:.2e} cells",
            data.len(),
            100.0 * valid as f64 / (data.len() * spec.h * spec.w) as f64
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
