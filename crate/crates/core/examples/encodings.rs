//! Camera-aware ray embedding and the sinusoidal scene coordinate embedding.
//!
//! `cargo run --example encodings`

use marepo::encoding::{pe2d, pe3d_raw, raw3d_dim, EncodingConfig, SceneCoordinateMap};
use marepo::geometry::{ray_xy, Intrinsics};
use nalgebra::Vector3;

fn main() -> marepo::Result<()> {
    let cfg = EncodingConfig { d_model: 8, bands: 2 };

    // Two cameras that see the same ray through different cells.
    let k1 = Intrinsics::new(100.0, 100.0, 10.0, 8.0)?;
    let k2 = Intrinsics::new(200.0, 200.0, 20.5, 16.5)?;
    let (a, b) = (pe2d(&k1, 12, 16, &cfg)?, pe2d(&k2, 24, 32, &cfg)?);
    let (t1, t2) = (a.token(5 * 16 + 7), b.token(10 * 32 + 14));
    println!("ray of k1 at (7, 5):  {:?}", ray_xy(&k1, 7.0, 5.0));
    println!("ray of k2 at (14, 10): {:?}", ray_xy(&k2, 14.0, 10.0));
    println!("tokens equal: {}", t1 == t2);
    println!("token: {t1:.5?}");

    let mut scm = SceneCoordinateMap::new(1, 2);
    scm.set(0, 0, Some(Vector3::new(0.25, -1.0, 0.5)));
    let raw = pe3d_raw(&scm, cfg.bands)?;
    println!("3D embedding ({} channels): {:.4?}", raw3d_dim(cfg.bands), raw.token(0));
    println!("invalid cell is masked: {}", !raw.mask[1]);
    Ok(())
}
