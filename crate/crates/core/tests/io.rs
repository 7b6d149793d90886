//! File formats: checkpoints, scene coordinate maps, poses and CSV reports.

mod common;

use marepo::encoding::SceneCoordinateMap;
use marepo::error::Error;
use marepo::io::{
    format_float, pose_from_text, pose_to_text, read_csv, read_pose, scm_from_bytes, scm_to_bytes, write_csv,
    write_pose,
};
use marepo::regressor::{checkpoint_from_bytes, checkpoint_to_bytes, forward, load_checkpoint, save_checkpoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scm(rng: &mut ChaCha8Rng) -> SceneCoordinateMap {
    let (h, w) = (rng.gen_range(1..12), rng.gen_range(1..12));
    let mut scm = SceneCoordinateMap::new(h, w);
    for i in 0..h * w {
        if rng.gen_bool(0.7) {
            scm.mask[i] = true;
            for c in 0..3 {
                scm.coords[3 * i + c] = rng.gen_range(-50.0f32..50.0) as f64;
            }
        }
    }
    scm
}

#[test]
fn checkpoint_round_trip_reproduces_outputs_bitwise() {
    let cfg = common::tiny_config();
    let mut params = common::random_params(&cfg, 4);
    params.round_to_f32();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &params).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.config, params.config);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let s = common::random_sample(6, 8, &mut rng);
        let a = forward(&s.scm, &s.k, &params, false).unwrap();
        let b = forward(&s.scm, &s.k, &loaded, false).unwrap();
        assert_eq!(a.pose.to_matrix4(), b.pose.to_matrix4());
    }
    assert_eq!(checkpoint_to_bytes(&loaded), std::fs::read(&path).unwrap());
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let bytes = checkpoint_to_bytes(&common::random_params(&common::tiny_config(), 1));
    assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(checkpoint_from_bytes(&bad).is_err());
}

#[test]
fn random_scms_round_trip_byte_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let scm = random_scm(&mut rng);
        let bytes = scm_to_bytes(&scm);
        let back = scm_from_bytes(&bytes, "t").unwrap();
        assert_eq!(back.mask, scm.mask);
        assert_eq!(back.coords, scm.coords);
        assert_eq!(scm_to_bytes(&back), bytes);
    }
}

#[test]
fn truncated_scm_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bytes = scm_to_bytes(&random_scm(&mut rng));
    for cut in [0, 5, 11, bytes.len() - 1] {
        assert!(matches!(scm_from_bytes(&bytes[..cut], "t"), Err(Error::TruncatedFile(_))), "cut {cut}");
    }
}

#[test]
fn pose_files_round_trip_and_reject_scaled_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.pose");
    for _ in 0..20 {
        let p = common::random_pose(&mut rng);
        write_pose(&path, &p).unwrap();
        let q = read_pose(&path).unwrap();
        assert_eq!(q.to_matrix4(), p.to_matrix4());
    }
    let p = common::random_pose(&mut rng);
    let scaled = marepo::geometry::Pose::new(p.rotation * 1.01, p.translation);
    assert!(matches!(pose_from_text(&pose_to_text(&scaled), "t"), Err(Error::NotARotation)));
}

#[test]
fn csv_values_keep_nine_significant_digits() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let values: Vec<f64> = (0..200)
        .map(|_| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-8..8)))
        .chain([0.0, 0.5, 1.0, 1e-300, 123456789.0])
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.csv");
    let rows: Vec<Vec<String>> = values.iter().map(|v| vec![format_float(*v)]).collect();
    write_csv(&path, &["value"], &rows).unwrap();
    let (header, back) = read_csv(&path).unwrap();
    assert_eq!(header, ["value"]);
    for (v, r) in values.iter().zip(&back) {
        let mantissa = r[0].split('e').next().unwrap();
        assert!(mantissa.chars().filter(char::is_ascii_digit).count() >= 9, "{}", r[0]);
        let parsed: f64 = r[0].parse().unwrap();
        assert!((parsed - v).abs() <= 5e-9 * v.abs(), "{v} vs {}", r[0]);
    }
}
