//! RANSAC-PnP on simulator frames and synthetic correspondence sets.

use marepo::geometry::{pose_error, Intrinsics, Pose};
use marepo::harness::oracle_report;
use marepo::oracle::{dlt_pnp, ransac_pnp, refine_pnp, scm_correspondences, RansacConfig};
use marepo::simulator::{generate_scene, render_frame, SceneSpec, SurfaceKind};
use marepo::training::random_unit_vector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn clean_frames_are_recovered_exactly() {
    for surface in [SurfaceKind::Heightfield, SurfaceKind::BoxRoom] {
        let scene = generate_scene(&SceneSpec { seed: 2, surface, ..Default::default() }).unwrap();
        let frames: Vec<_> = (0..6).map(|i| render_frame(&scene, i).unwrap()).collect();
        let report = oracle_report(&frames, &RansacConfig::default());
        assert!(report.median_trans < 1e-5 && report.median_rot < 1e-4, "{surface}: {report:?}");
    }
}

#[test]
fn ransac_equals_dlt_plus_refine_without_outliers() {
    let scene = generate_scene(&SceneSpec { seed: 5, ..Default::default() }).unwrap();
    let f = render_frame(&scene, 0).unwrap();
    let corr = scm_correspondences(&f.scm);
    let direct = refine_pnp(&corr, &f.k, &dlt_pnp(&corr, &f.k).unwrap()).unwrap();
    let ransac = ransac_pnp(&corr, &f.k, &RansacConfig::default()).unwrap();
    let e = pose_error(&direct, &ransac.pose);
    assert!(e.trans_err < 1e-8 && e.rot_err < 1e-6, "{e:?}");
    assert_eq!(ransac.n_inliers(), corr.len());
}

#[test]
fn forty_percent_corruption_is_rejected() {
    let scene = generate_scene(&SceneSpec { seed: 6, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..4 {
        let f = render_frame(&scene, i).unwrap();
        let mut corr = scm_correspondences(&f.scm);
        let mut idx: Vec<usize> = (0..corr.len()).collect();
        idx.shuffle(&mut rng);
        let bad = &idx[..corr.len() * 2 / 5];
        for &j in bad {
            corr[j].point += random_unit_vector(&mut rng);
        }
        let res = ransac_pnp(&corr, &f.k, &RansacConfig::default()).unwrap();
        let e = pose_error(&res.pose, &f.gt);
        assert!(e.trans_err < 1e-3 && e.rot_err < 1e-2, "{e:?}");
        let flagged = bad.iter().filter(|&&j| !res.inliers[j]).count();
        assert!(flagged as f64 >= 0.95 * bad.len() as f64);
    }
}

#[test]
fn twenty_spread_points_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = Intrinsics::new(70.0, 70.0, 40.0, 30.0).unwrap();
    for _ in 0..20 {
        let axis = random_unit_vector(&mut rng);
        let gt = Pose::new(marepo::geometry::axis_angle(&axis, 2.0), random_unit_vector(&mut rng) * 2.0);
        let corr: Vec<_> = (0..20)
            .map(|i| {
                let (u, v) = ((i % 5) as f64 * 18.0 + 4.0, (i / 5) as f64 * 15.0 + 5.0);
                let depth = 1.0 + (i * 7 % 11) as f64 * 0.3;
                let cam = nalgebra::Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0) * depth;
                marepo::oracle::Correspondence { uv: (u, v), point: gt.transform_point(&cam) }
            })
            .collect();
        let res = ransac_pnp(&corr, &k, &RansacConfig::default()).unwrap();
        let e = pose_error(&res.pose, &gt);
        assert!(e.trans_err < 1e-5 && e.rot_err < 1e-4, "{e:?}");
    }
}
