//! Pinhole camera and SE(3) primitives, continuous rotation representations,
//! and pose error metrics.
//!
//! Grid coordinates are integer cell indices; the center of cell `(u, v)` sits
//! at `(u + 0.5, v + 0.5)` in continuous image coordinates. Intrinsics are
//! expressed in those grid units.
//!
//! Poses are camera-to-scene: `x_scene = R * x_cam + t`, so `t` is the camera
//! center in the scene frame.

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};

/// Scale applied to ray components so encodings see a useful magnitude.
pub const RAY_SCALE: f64 = 400.0;
/// Offset from a cell index to its center.
pub const CELL_CENTER: f64 = 0.5;

/// Pinhole intrinsics in grid units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Intrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.cx.is_finite() && self.cy.is_finite())
        {
            return Err(Error::NonFiniteValue("intrinsics".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }
}

/// `(X_ray, Y_ray)` for grid cell `(u, v)`: the scaled x/y components of the
/// viewing ray through the cell center.
#[inline]
pub fn ray_xy(k: &Intrinsics, u: f64, v: f64) -> (f64, f64) {
    (
        RAY_SCALE * (u - k.cx - CELL_CENTER) / k.fx,
        RAY_SCALE * (v - k.cy - CELL_CENTER) / k.fy,
    )
}

/// Unit-depth camera-frame direction through the center of cell `(u, v)`.
#[inline]
pub fn cell_ray(k: &Intrinsics, u: f64, v: f64) -> Vector3<f64> {
    Vector3::new(
        (u + CELL_CENTER - k.cx) / k.fx,
        (v + CELL_CENTER - k.cy) / k.fy,
        1.0,
    )
}

/// Continuous grid coordinates of a camera-frame point.
pub fn project(k: &Intrinsics, p_cam: &Vector3<f64>) -> Result<(f64, f64)> {
    if p_cam.z <= 1e-6 {
        return Err(Error::BehindCamera(p_cam.z));
    }
    Ok((
        k.fx * p_cam.x / p_cam.z + k.cx,
        k.fy * p_cam.y / p_cam.z + k.cy,
    ))
}

/// Rigid camera-to-scene transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose::new(Matrix3::identity(), t)
    }

    /// Max deviation of `RᵀR` from identity and of `det R` from one.
    pub fn rotation_defect(&self) -> f64 {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ortho.max((r.determinant() - 1.0).abs())
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.rotation.iter().all(|x| x.is_finite())
            && self.translation.iter().all(|x| x.is_finite())
            && self.rotation_defect() <= tol
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_matrix4(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }
}

pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn pose_inverse(p: &Pose) -> Pose {
    p.inverse()
}

pub fn transform_point(p: &Pose, x: &Vector3<f64>) -> Vector3<f64> {
    p.transform_point(x)
}

/// Rotation about the unit `axis` by `angle` radians.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    axis_angle(&Vector3::z(), angle)
}

/// Two (unnormalized) columns of a rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6D {
    pub a1: Vector3<f64>,
    pub a2: Vector3<f64>,
}

impl Rotation6D {
    pub fn new(a1: Vector3<f64>, a2: Vector3<f64>) -> Self {
        Rotation6D { a1, a2 }
    }

    pub fn from_slice(r: &[f64]) -> Self {
        Rotation6D::new(
            Vector3::new(r[0], r[1], r[2]),
            Vector3::new(r[3], r[4], r[5]),
        )
    }
}

const DEGENERATE_NORM: f64 = 1e-9;

fn normalize_checked(v: &Vector3<f64>) -> Result<(Vector3<f64>, f64)> {
    let n = v.norm();
    if !(n >= DEGENERATE_NORM) {
        return Err(Error::DegenerateAxes);
    }
    Ok((v / n, n))
}

/// Gram–Schmidt: `b1 = â1`, `b2 = normalize(a2 − (b1·a2) b1)`, `b3 = b1 × b2`.
pub fn rot6d_to_matrix(r: &Rotation6D) -> Result<Matrix3<f64>> {
    let (b1, _) = normalize_checked(&r.a1)?;
    let (b2, _) = normalize_checked(&(r.a2 - b1 * b1.dot(&r.a2)))?;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Gradient of a scalar through [`rot6d_to_matrix`]: given `dL/dR`, returns
/// `(dL/da1, dL/da2)`.
pub fn rot6d_backward(r: &Rotation6D, grad_r: &Matrix3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (b1, n1) = normalize_checked(&r.a1)?;
    let d = b1.dot(&r.a2);
    let u = r.a2 - b1 * d;
    let (b2, n2) = normalize_checked(&u)?;

    let g_b3: Vector3<f64> = grad_r.column(2).into();
    let mut g_b1: Vector3<f64> = grad_r.column(0).into();
    let mut g_b2: Vector3<f64> = grad_r.column(1).into();
    // b3 = b1 × b2
    g_b1 += b2.cross(&g_b3);
    g_b2 += g_b3.cross(&b1);
    // b2 = u / |u|
    let g_u = (g_b2 - b2 * b2.dot(&g_b2)) / n2;
    // u = a2 − (b1·a2) b1
    let g_a2 = g_u - b1 * b1.dot(&g_u);
    g_b1 -= g_u * d + r.a2 * b1.dot(&g_u);
    // b1 = a1 / |a1|
    let g_a1 = (g_b1 - b1 * b1.dot(&g_b1)) / n1;
    Ok((g_a1, g_a2))
}

/// Arbitrary 3×3 matrix projected onto SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation9D {
    pub m: Matrix3<f64>,
}

impl Rotation9D {
    /// Row-major slice of nine values.
    pub fn from_slice(r: &[f64]) -> Self {
        Rotation9D {
            m: Matrix3::from_row_slice(&r[..9]),
        }
    }
}

const DEGENERATE_SIGMA: f64 = 1e-9;

/// Signed SVD `M = U S Vᵀ` with `det(U Vᵀ) = +1`; the smallest singular value
/// may carry a negative sign.
fn signed_svd(m: &Matrix3<f64>) -> Result<(Matrix3<f64>, Vector3<f64>, Matrix3<f64>)> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateMatrix);
    }
    let svd = nalgebra::linalg::SVD::new(*m, true, true);
    let mut u = svd.u.ok_or(Error::DegenerateMatrix)?;
    let v_t = svd.v_t.ok_or(Error::DegenerateMatrix)?;
    let mut s = svd.singular_values;
    // nalgebra sorts descending, but not guaranteed for every path: sort explicitly
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let u_sorted = Matrix3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    let v = v_t.transpose();
    let v_sorted = Matrix3::from_columns(&[v.column(order[0]), v.column(order[1]), v.column(order[2])]);
    s = Vector3::new(s[order[0]], s[order[1]], s[order[2]]);
    u = u_sorted;
    if s[2] < DEGENERATE_SIGMA {
        return Err(Error::DegenerateMatrix);
    }
    if (u * v_sorted.transpose()).determinant() < 0.0 {
        let mut c = u.column_mut(2);
        c.neg_mut();
        s[2] = -s[2];
    }
    Ok((u, s, v_sorted))
}

/// Nearest rotation in Frobenius norm: `R = U diag(1, 1, det(U Vᵀ)) Vᵀ`.
pub fn rot9d_to_matrix(r: &Rotation9D) -> Result<Matrix3<f64>> {
    let (u, _, v) = signed_svd(&r.m)?;
    Ok(u * v.transpose())
}

/// Gradient of a scalar through [`rot9d_to_matrix`].
pub fn rot9d_backward(r: &Rotation9D, grad_r: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let (u, s, v) = signed_svd(&r.m)?;
    let y = u.transpose() * grad_r * v;
    let mut g_x = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let denom = s[i] + s[j];
                if denom.abs() < DEGENERATE_SIGMA {
                    return Err(Error::DegenerateMatrix);
                }
                g_x[(i, j)] = (y[(i, j)] - y[(j, i)]) / denom;
            }
        }
    }
    Ok(u * g_x * v.transpose())
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Homogeneous 4-vector to metric translation, `t = q[0..3] / softplus(q[3])`.
pub fn homog_to_translation(q: &Vector4<f64>) -> Vector3<f64> {
    Vector3::new(q[0], q[1], q[2]) / softplus(q[3])
}

/// Gradient of a scalar through [`homog_to_translation`].
pub fn homog_backward(q: &Vector4<f64>, grad_t: &Vector3<f64>) -> Vector4<f64> {
    let w = softplus(q[3]);
    let num = Vector3::new(q[0], q[1], q[2]);
    let g_num = grad_t / w;
    let g_w = -grad_t.dot(&num) / (w * w);
    Vector4::new(g_num.x, g_num.y, g_num.z, g_w * sigmoid(q[3]))
}

/// Translation error in meters and rotation error in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub trans_err: f64,
    pub rot_err: f64,
}

impl PoseError {
    pub fn within(&self, trans_thresh: f64, rot_thresh_deg: f64) -> bool {
        self.trans_err <= trans_thresh && self.rot_err <= rot_thresh_deg
    }
}

/// Geodesic rotation angle between two rotations, in degrees.
pub fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn pose_error(estimate: &Pose, truth: &Pose) -> PoseError {
    PoseError {
        trans_err: (estimate.translation - truth.translation).norm(),
        rot_err: rotation_angle_deg(&estimate.rotation, &truth.rotation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        axis_angle(&axis, rng.gen_range(0.0..std::f64::consts::PI))
    }

    #[test]
    fn ray_xy_examples() {
        let k = Intrinsics::new(400.0, 400.0, 32.0, 32.0).unwrap();
        assert_eq!(ray_xy(&k, 32.0, 32.0), (-0.5, -0.5));
        let k = Intrinsics::new(400.0, 400.0, 31.5, 31.5).unwrap();
        assert_eq!(ray_xy(&k, 32.0, 32.0).0, 0.0);
        let k = Intrinsics::new(800.0, 400.0, 32.0, 32.0).unwrap();
        assert_eq!(ray_xy(&k, 72.5, 32.5), (20.0, 0.0));
    }

    #[test]
    fn rot6d_examples() {
        let id = rot6d_to_matrix(&Rotation6D::new(Vector3::x(), Vector3::y())).unwrap();
        assert_eq!(id, Matrix3::identity());
        let id2 = rot6d_to_matrix(&Rotation6D::new(Vector3::x() * 2.0, Vector3::y() * 3.0)).unwrap();
        assert_eq!(id2, Matrix3::identity());
        let r = rot6d_to_matrix(&Rotation6D::new(Vector3::new(1.0, 1.0, 0.0), Vector3::y())).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = Matrix3::new(h, -h, 0.0, h, h, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expected).abs().max() < 1e-15);
        assert!((r - rot_z(std::f64::consts::FRAC_PI_4)).abs().max() < 1e-15);
    }

    #[test]
    fn rot6d_degenerate() {
        assert!(matches!(
            rot6d_to_matrix(&Rotation6D::new(Vector3::zeros(), Vector3::y())),
            Err(Error::DegenerateAxes)
        ));
        assert!(matches!(
            rot6d_to_matrix(&Rotation6D::new(Vector3::x(), Vector3::x() * 5.0)),
            Err(Error::DegenerateAxes)
        ));
    }

    #[test]
    fn rot9d_examples() {
        let id = Matrix3::identity();
        let r = rot9d_to_matrix(&Rotation9D { m: id }).unwrap();
        assert!((r - id).abs().max() < 1e-12);
        let r = rot9d_to_matrix(&Rotation9D { m: id * 2.0 }).unwrap();
        assert!((r - id).abs().max() < 1e-12);
        assert!(matches!(
            rot9d_to_matrix(&Rotation9D { m: Matrix3::zeros() }),
            Err(Error::DegenerateMatrix)
        ));
    }

    #[test]
    fn rot9d_matches_brute_force_nearest_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r0 = random_rotation(&mut rng);
        let mut m = r0;
        m[(0, 1)] += 0.01;
        let r = rot9d_to_matrix(&Rotation9D { m }).unwrap();
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
        assert!((r - r0).norm() < 0.02);
        // brute force: sample rotations around r0 and keep the closest to m
        let mut best = (r0 - m).norm();
        let mut best_r = r0;
        for _ in 0..20000 {
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let cand = axis_angle(&axis, rng.gen_range(0.0..0.02)) * r0;
            let d = (cand - m).norm();
            if d < best {
                best = d;
                best_r = cand;
            }
        }
        assert!((r - m).norm() <= best + 1e-12);
        assert!((r - best_r).norm() < 2e-3);
    }

    #[test]
    fn homog_examples() {
        assert_eq!(homog_to_translation(&Vector4::zeros()), Vector3::zeros());
        let t = homog_to_translation(&Vector4::new(1.0, 2.0, 3.0, 0.0));
        assert!(close(t.x, 1.4426950408889634, 1e-12));
        assert!(close(t.y, 2.8853900817779268, 1e-12));
        assert!(close(t.z, 4.3280851226668900, 1e-12));
        let a = (std::f64::consts::E - 1.0).ln();
        let t = homog_to_translation(&Vector4::new(a, 0.0, 0.0, a));
        assert!(close(t.x, a, 1e-12));
    }

    #[test]
    fn pose_algebra_examples() {
        let p = Pose::new(rot_z(0.3), Vector3::new(1.0, -2.0, 0.5));
        let id = p.compose(&p.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-15);
        assert!(id.translation.norm() < 1e-15);
        let x = Vector3::new(0.2, 0.3, 0.4);
        assert_eq!(Pose::identity().transform_point(&x), x);
        let p = Pose::new(rot_z(std::f64::consts::FRAC_PI_2), Vector3::x());
        let y = p.transform_point(&Vector3::x());
        assert!((y - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn project_examples() {
        let k = Intrinsics::new(400.0, 400.0, 32.0, 32.0).unwrap();
        assert_eq!(project(&k, &Vector3::z()).unwrap(), (32.0, 32.0));
        let (u, v) = project(&k, &Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert!(close(u, 72.0, 1e-12) && v == 32.0);
        assert!(matches!(project(&k, &Vector3::new(0.0, 0.0, 0.0)), Err(Error::BehindCamera(_))));
        for (u, v, z) in [(0.0, 0.0, 0.5), (13.0, 40.0, 7.0), (63.0, 1.0, 100.0)] {
            let (pu, pv) = project(&k, &(cell_ray(&k, u, v) * z)).unwrap();
            assert!(close(pu, u + 0.5, 1e-9) && close(pv, v + 0.5, 1e-9));
        }
    }

    #[test]
    fn pose_error_examples() {
        let p = Pose::new(rot_z(0.4), Vector3::new(1.0, 2.0, 3.0));
        let e = pose_error(&p, &p);
        assert_eq!(e.trans_err, 0.0);
        assert!(e.rot_err < 1e-5);
        let e = pose_error(&Pose::new(rot_z(std::f64::consts::FRAC_PI_2), Vector3::zeros()), &Pose::identity());
        assert!(close(e.rot_err, 90.0, 1e-12));
        let e = pose_error(&Pose::from_translation(Vector3::new(3.0, 4.0, 0.0)), &Pose::identity());
        assert_eq!(e.trans_err, 5.0);
    }

    fn finite_diff_check(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!(
                (fd - analytic[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "component {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn rot6d_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f = |x: &[f64]| rot6d_to_matrix(&Rotation6D::from_slice(x)).unwrap().component_mul(&w).sum();
        let (g1, g2) = rot6d_backward(&Rotation6D::from_slice(&x), &w).unwrap();
        let g: Vec<f64> = g1.iter().chain(g2.iter()).copied().collect();
        finite_diff_check(f, &x, &g);
    }

    #[test]
    fn rot9d_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        // include a reflection so the sign-corrected branch is exercised
        for flip in [1.0, -1.0] {
            let mut x: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
            x[0] += 3.0 * flip;
            let f = |x: &[f64]| rot9d_to_matrix(&Rotation9D::from_slice(x)).unwrap().component_mul(&w).sum();
            let g = rot9d_backward(&Rotation9D::from_slice(&x), &w).unwrap();
            // row-major to match from_slice
            let g: Vec<f64> = (0..9).map(|i| g[(i / 3, i % 3)]).collect();
            finite_diff_check(f, &x, &g);
        }
    }

    #[test]
    fn homog_backward_matches_finite_differences() {
        let gt = Vector3::new(0.3, -1.2, 0.7);
        for q3 in [-3.0, 0.1, 2.5, 40.0] {
            let x = [0.4, -0.9, 1.3, q3];
            let f = |x: &[f64]| homog_to_translation(&Vector4::from_column_slice(x)).dot(&gt);
            let g = homog_backward(&Vector4::from_column_slice(&x), &gt);
            finite_diff_check(f, &x, g.as_slice());
        }
    }
}
