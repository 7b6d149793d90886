//! RANSAC-PnP on rendered frames, clean and with corrupted scene coordinates.
//!
//! `cargo run --release --example pnp_oracle`

use marepo::geometry::pose_error;
use marepo::oracle::{ransac_pnp, scm_correspondences, RansacConfig};
use marepo::simulator::{generate_scene, inject_noise, render_frame, NoiseSpec, SceneSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> marepo::Result<()> {
    let scene = generate_scene(&SceneSpec { seed: 11, ..Default::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..5 {
        let frame = render_frame(&scene, i)?;
        for fraction in [0.0, 0.4] {
            let scm = inject_noise(&frame.scm, &NoiseSpec { fraction, magnitude: 1.0 }, &mut rng)?;
            let corr = scm_correspondences(&scm);
            let res = ransac_pnp(&corr, &frame.k, &RansacConfig::default())?;
            let e = pose_error(&res.pose, &frame.gt);
            println!(
                "frame {i} corrupted {:>3.0}%: {:>5}/{:<5} inliers after {:>3} iterations, error {:.2e} m {:.2e} deg",
                100.0 * fraction,
                res.n_inliers(),
                corr.len(),
                res.iterations,
                e.trans_err,
                e.rot_err
            );
        }
    }
    Ok(())
}
