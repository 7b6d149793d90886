//! Classical pose recovery from 2D–3D correspondences: normalized DLT,
//! Gauss-Newton reprojection refinement, and a RANSAC wrapper.

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector2, Vector3, Vector6};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::SceneCoordinateMap;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle, Intrinsics, Pose, CELL_CENTER};

/// A 2D position in grid units (cell centers at `+0.5`) and its scene point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub uv: (f64, f64),
    pub point: Vector3<f64>,
}

/// Minimum correspondences for the linear solver.
pub const MIN_POINTS: usize = 6;
/// Ratio of the second-smallest to the largest singular value below which
/// the DLT system is rejected as degenerate.
pub const DLT_DEGENERACY_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Inlier reprojection threshold in grid units.
    pub threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            threshold: 2.0,
            max_iterations: 1000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

/// Every valid cell as a correspondence at its cell center.
pub fn scm_correspondences(scm: &SceneCoordinateMap) -> Vec<Correspondence> {
    scm.valid_cells()
        .map(|(u, v, p)| Correspondence {
            uv: (u as f64 + CELL_CENTER, v as f64 + CELL_CENTER),
            point: p,
        })
        .collect()
}

/// Scene-to-camera transform of a camera-to-scene pose.
fn world_to_camera(pose: &Pose) -> (Matrix3<f64>, Vector3<f64>) {
    let inv = pose.inverse();
    (inv.rotation, inv.translation)
}

fn camera_to_world(r: Matrix3<f64>, t: Vector3<f64>) -> Pose {
    Pose::new(r, t).inverse()
}

/// Reprojection residual in grid units, or `None` behind the camera.
fn residual(k: &Intrinsics, r: &Matrix3<f64>, t: &Vector3<f64>, c: &Correspondence) -> Option<Vector2<f64>> {
    let p = r * c.point + t;
    if p.z <= 1e-9 {
        return None;
    }
    Some(Vector2::new(k.fx * p.x / p.z + k.cx - c.uv.0, k.fy * p.y / p.z + k.cy - c.uv.1))
}

/// Reprojection error of one correspondence under a camera-to-scene pose.
pub fn reprojection_error(k: &Intrinsics, pose: &Pose, c: &Correspondence) -> f64 {
    let (r, t) = world_to_camera(pose);
    residual(k, &r, &t, c).map_or(f64::INFINITY, |e| e.norm())
}

/// Sum of squared reprojection errors; infinite if any point is behind the camera.
pub fn reprojection_cost(k: &Intrinsics, pose: &Pose, corr: &[Correspondence]) -> f64 {
    let (r, t) = world_to_camera(pose);
    cost(k, &r, &t, corr)
}

fn cost(k: &Intrinsics, r: &Matrix3<f64>, t: &Vector3<f64>, corr: &[Correspondence]) -> f64 {
    corr.iter()
        .map(|c| residual(k, r, t, c).map_or(f64::INFINITY, |e| e.norm_squared()))
        .sum()
}

/// Direct linear transform on normalized coordinates.
pub fn dlt_pnp(corr: &[Correspondence], k: &Intrinsics) -> Result<Pose> {
    if corr.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_POINTS,
            got: corr.len(),
        });
    }
    k.validate()?;
    let n = corr.len() as f64;
    let centroid = corr.iter().fold(Vector3::zeros(), |a, c| a + c.point) / n;
    let spread = corr.iter().map(|c| (c.point - centroid).norm()).sum::<f64>() / n;
    if !(spread > 1e-12) {
        return Err(Error::DegenerateConfiguration);
    }
    let scale = 3f64.sqrt() / spread;
    let mut a = DMatrix::<f64>::zeros(2 * corr.len(), 12);
    for (i, c) in corr.iter().enumerate() {
        let x = (c.point - centroid) * scale;
        let xh = [x.x, x.y, x.z, 1.0];
        let xn = (c.uv.0 - k.cx) / k.fx;
        let yn = (c.uv.1 - k.cy) / k.fy;
        for j in 0..4 {
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 8 + j)] = -xn * xh[j];
            a[(2 * i + 1, 4 + j)] = xh[j];
            a[(2 * i + 1, 8 + j)] = -yn * xh[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    if sv.len() < 12 || !(sv[order[10]] / sv[order[0]] > DLT_DEGENERACY_RATIO) {
        return Err(Error::DegenerateConfiguration);
    }
    let h = v_t.row(order[11]);
    let m = Matrix3::new(h[0], h[1], h[2], h[4], h[5], h[6], h[8], h[9], h[10]);
    let p4 = Vector3::new(h[3], h[7], h[11]);
    // undo the point normalization: x_n = s (x − c)
    let m_w = m * scale;
    let p4_w = p4 - m_w * centroid;
    let sign = if m_w.determinant() < 0.0 { -1.0 } else { 1.0 };
    let (m_w, p4_w) = (m_w * sign, p4_w * sign);
    let svd3 = m_w.svd(true, true);
    let (u, v_t) = (svd3.u.ok_or(Error::DegenerateConfiguration)?, svd3.v_t.ok_or(Error::DegenerateConfiguration)?);
    let lambda = svd3.singular_values.mean();
    if !(lambda > 0.0) {
        return Err(Error::DegenerateConfiguration);
    }
    let r = u * v_t;
    if r.determinant() < 0.0 {
        return Err(Error::DegenerateConfiguration);
    }
    let t = p4_w / lambda;
    Ok(camera_to_world(r, t))
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    d[(2, 2)] = (u * v_t).determinant().signum();
    u * d * v_t
}

/// Threshold factors tried after the main refinement.
const LO_SHRINK: [f64; 3] = [0.25, 0.05, 0.01];
/// Fraction of the consensus a tightened support must retain.
const LO_KEEP: f64 = 0.9;

const GN_MAX_ITERS: usize = 50;
const GN_MAX_HALVINGS: usize = 30;

/// Gauss-Newton on summed squared reprojection error with left-multiplied
/// rotation updates; a step is halved until the cost does not increase.
pub fn refine_pnp(corr: &[Correspondence], k: &Intrinsics, init: &Pose) -> Result<Pose> {
    if corr.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_POINTS,
            got: corr.len(),
        });
    }
    let (mut r, mut t) = world_to_camera(init);
    let mut current = cost(k, &r, &t, corr);
    if !current.is_finite() {
        return Err(Error::DegenerateConfiguration);
    }
    for _ in 0..GN_MAX_ITERS {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for c in corr {
            let p = r * c.point + t;
            let res = Vector2::new(k.fx * p.x / p.z + k.cx - c.uv.0, k.fy * p.y / p.z + k.cy - c.uv.1);
            let iz = 1.0 / p.z;
            // d(proj)/d(p_cam)
            let dp = nalgebra::Matrix2x3::new(
                k.fx * iz,
                0.0,
                -k.fx * p.x * iz * iz,
                0.0,
                k.fy * iz,
                -k.fy * p.y * iz * iz,
            );
            // p_cam' = exp(ω) p_cam + δ  →  d p_cam = −[p]× ω + δ
            let mut dpc = nalgebra::Matrix3x6::<f64>::zeros();
            dpc.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-p.cross_matrix()));
            dpc.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            let j = dp * dpc;
            jtj += j.transpose() * j;
            jtr += j.transpose() * res;
        }
        let chol = jtj.cholesky().ok_or(Error::SingularNormalEquations)?;
        let step = -chol.solve(&jtr);
        if !step.iter().all(|x| x.is_finite()) {
            return Err(Error::SingularNormalEquations);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..GN_MAX_HALVINGS {
            let s = step * alpha;
            let w = Vector3::new(s[0], s[1], s[2]);
            let rot = match w.try_normalize(0.0) {
                Some(axis) => axis_angle(&axis, w.norm()),
                None => Matrix3::identity(),
            };
            let r_new = rot * r;
            let t_new = rot * t + Vector3::new(s[3], s[4], s[5]);
            let c_new = cost(k, &r_new, &t_new, corr);
            if c_new <= current {
                let improvement = current - c_new;
                r = nearest_rotation(&r_new);
                t = t_new;
                current = c_new;
                accepted = improvement > 1e-15 * (1.0 + current);
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || step.norm() < 1e-14 {
            break;
        }
    }
    Ok(camera_to_world(r, t))
}

/// Pose, per-correspondence inlier flags and the iterations spent.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub pose: Pose,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

impl RansacResult {
    pub fn n_inliers(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn inlier_mask(k: &Intrinsics, pose: &Pose, corr: &[Correspondence], threshold: f64) -> Vec<bool> {
    let (r, t) = world_to_camera(pose);
    corr.iter()
        .map(|c| residual(k, &r, &t, c).is_some_and(|e| e.norm() < threshold))
        .collect()
}

fn required_iterations(inlier_ratio: f64, confidence: f64) -> usize {
    let w = inlier_ratio.powi(MIN_POINTS as i32);
    if w >= 1.0 {
        return 1;
    }
    if w <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (-w).ln_1p();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// Six-point DLT hypotheses scored by inlier count, stopping once the
/// confidence bound is met; the winner is refined on its inliers.
pub fn ransac_pnp(corr: &[Correspondence], k: &Intrinsics, cfg: &RansacConfig) -> Result<RansacResult> {
    if corr.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_POINTS,
            got: corr.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Pose)> = None;
    let mut needed = cfg.max_iterations;
    let mut iterations = 0;
    let mut subset = Vec::with_capacity(MIN_POINTS);
    while iterations < needed.min(cfg.max_iterations) {
        iterations += 1;
        subset.clear();
        subset.extend(sample(&mut rng, corr.len(), MIN_POINTS).into_iter().map(|i| corr[i]));
        let Ok(pose) = dlt_pnp(&subset, k) else { continue };
        let count = inlier_mask(k, &pose, corr, cfg.threshold).iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, pose));
            needed = required_iterations(count as f64 / corr.len() as f64, cfg.confidence);
        }
    }
    let (count, mut pose) = best.ok_or(Error::NoConsensus(0))?;
    if count < MIN_POINTS {
        return Err(Error::NoConsensus(count));
    }
    let mut inliers = inlier_mask(k, &pose, corr, cfg.threshold);
    // refine, then let the refined pose re-select its support once
    for _ in 0..2 {
        let support: Vec<Correspondence> = corr.iter().zip(&inliers).filter(|(_, &b)| b).map(|(c, _)| *c).collect();
        if support.len() < MIN_POINTS {
            return Err(Error::NoConsensus(support.len()));
        }
        pose = refine_pnp(&support, k, &pose)?;
        inliers = inlier_mask(k, &pose, corr, cfg.threshold);
    }
    // local optimization: drop chance inliers near the threshold as long as
    // the tighter support keeps almost all of the consensus
    let base = inliers.iter().filter(|&&b| b).count();
    for shrink in LO_SHRINK {
        let tight = inlier_mask(k, &pose, corr, cfg.threshold * shrink);
        let support: Vec<Correspondence> = corr.iter().zip(&tight).filter(|(_, &b)| b).map(|(c, _)| *c).collect();
        if (support.len() as f64) < LO_KEEP * base as f64 || support.len() < MIN_POINTS {
            break;
        }
        pose = refine_pnp(&support, k, &pose)?;
    }
    let inliers = inlier_mask(k, &pose, corr, cfg.threshold);
    Ok(RansacResult {
        pose,
        inliers,
        iterations,
    })
}
