//! Poses, rotation parameterizations, projection and pose errors.
//!
//! `cargo run --example geometry`

use marepo::geometry::{
    axis_angle, cell_ray, homog_to_translation, pose_error, project, rot6d_to_matrix, rot9d_to_matrix, Intrinsics,
    Pose, Rotation6D, Rotation9D,
};
use nalgebra::{Matrix3, Vector3, Vector4};

fn main() -> marepo::Result<()> {
    let k = Intrinsics::new(70.0, 70.0, 40.0, 30.0)?;
    let pose = Pose::new(axis_angle(&Vector3::new(0.2, 1.0, 0.1).normalize(), 0.6), Vector3::new(0.5, -0.2, 1.5));

    // A scene point seen through cell (12, 7) at depth 2.5.
    let p_cam = cell_ray(&k, 12.0, 7.0) * 2.5;
    let p_scene = pose.transform_point(&p_cam);
    let (u, v) = project(&k, &pose.inverse().transform_point(&p_scene))?;
    println!("cell (12, 7) at depth 2.5 -> scene ({:.4}, {:.4}, {:.4}) -> reprojects to ({u:.6}, {v:.6})", p_scene.x, p_scene.y, p_scene.z);

    let r6 = rot6d_to_matrix(&Rotation6D::new(Vector3::new(2.0, 0.1, 0.0), Vector3::new(0.3, 1.0, 0.2)))?;
    println!("6D -> rotation, det {:.12}", r6.determinant());

    let noisy = Matrix3::new(1.02, 0.05, 0.0, -0.04, 0.97, 0.01, 0.0, 0.02, 1.1);
    let r9 = rot9d_to_matrix(&Rotation9D { m: noisy })?;
    println!("9D projection, |RᵀR − I| = {:.2e}", (r9.transpose() * r9 - Matrix3::identity()).abs().max());

    let t = homog_to_translation(&Vector4::new(1.0, 2.0, 3.0, 0.5));
    println!("homogeneous (1, 2, 3, 0.5) -> t = ({:.4}, {:.4}, {:.4})", t.x, t.y, t.z);

    let nudged = Pose::new(axis_angle(&Vector3::z(), 0.02) * pose.rotation, pose.translation + Vector3::new(0.03, 0.0, 0.04));
    let e = pose_error(&nudged, &pose);
    println!("nudged pose error: {:.4} m, {:.4} deg", e.trans_err, e.rot_err);
    Ok(())
}
