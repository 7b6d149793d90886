//! Procedural scenes rendered into ground-truth scene coordinate maps.
//!
//! Two analytic surfaces are supported: a heightfield terrain viewed from
//! above and a closed box room with an interior pillar viewed from inside.
//! Rays are cast through cell centers, so every valid cell reprojects onto
//! its own center up to floating-point error.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::KeyValues;
use crate::encoding::SceneCoordinateMap;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle, cell_ray, project, Intrinsics, Pose};
use crate::training::TrainSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Heightfield,
    BoxRoom,
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurfaceKind::Heightfield => "random-heightfield",
            SurfaceKind::BoxRoom => "textured-box-room",
        })
    }
}

impl FromStr for SurfaceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-heightfield" | "heightfield" => Ok(SurfaceKind::Heightfield),
            "textured-box-room" | "box-room" => Ok(SurfaceKind::BoxRoom),
            _ => Err(Error::Parse(format!("unknown surface {s:?}"))),
        }
    }
}

/// Everything needed to regenerate a synthetic dataset bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    /// Edge length of the cubic scene bounds, meters; the scene spans `±extent/2`.
    pub extent: f64,
    pub surface: SurfaceKind,
    pub n_map: usize,
    pub n_query: usize,
    pub h: usize,
    pub w: usize,
    /// Draw `fx = fy` per frame uniformly in `[400, 800]·(w/640)`; otherwise `600·(w/640)`.
    pub randomize_k: bool,
    /// Extra map-level augmented copies written per mapping frame.
    pub map_variants: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            extent: 4.0,
            surface: SurfaceKind::Heightfield,
            n_map: 300,
            n_query: 100,
            h: 60,
            w: 80,
            randomize_k: true,
            map_variants: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || self.h < 8 || self.w < 8 || self.n_map == 0 || self.n_query == 0 {
            return Err(Error::Config(format!("invalid scene spec {self:?}")));
        }
        Ok(())
    }

    /// Length of the scene bounds' diagonal.
    pub fn diameter(&self) -> f64 {
        self.extent * 3f64.sqrt()
    }

    pub fn from_kv(kv: &mut KeyValues) -> Result<Self> {
        let d = SceneSpec::default();
        let spec = SceneSpec {
            seed: kv.take("seed", d.seed)?,
            extent: kv.take("extent", d.extent)?,
            surface: kv.take("surface", d.surface)?,
            n_map: kv.take("n_map", d.n_map)?,
            n_query: kv.take("n_query", d.n_query)?,
            h: kv.take("height", d.h)?,
            w: kv.take("width", d.w)?,
            randomize_k: kv.take_bool("randomize_k", d.randomize_k)?,
            map_variants: kv.take("map_variants", d.map_variants)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "seed={}\nextent={}\nsurface={}\nn_map={}\nn_query={}\nheight={}\nwidth={}\nrandomize_k={}\nmap_variants={}\n",
            self.seed,
            self.extent,
            self.surface,
            self.n_map,
            self.n_query,
            self.h,
            self.w,
            self.randomize_k,
            self.map_variants
        )
    }
}

/// Fraction of valid cells to corrupt and the per-component offset bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub magnitude: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) || !(self.magnitude >= 0.0) {
            return Err(Error::Config(format!("invalid noise spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Bump {
    cx: f64,
    cy: f64,
    height: f64,
    inv_two_sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Surface {
    Heightfield { bumps: Vec<Bump>, waves: Vec<Wave>, z_min: f64, z_max: f64 },
    BoxRoom { pillar_min: Vector3<f64>, pillar_max: Vector3<f64> },
}

/// A generated scene: an analytic surface inside `±half_extent`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub half_extent: f64,
    surface: Surface,
}

const MARCH_STEP: f64 = 0.01;
const MARCH_SAFETY: f64 = 0.25;
const BISECTION_ITERS: usize = 60;
/// Minimum fraction of valid cells for an accepted pose.
pub const MIN_VALID_FRACTION: f64 = 0.3;
pub const MAX_POSE_ATTEMPTS: usize = 100;

impl Scene {
    fn height(&self, x: f64, y: f64) -> f64 {
        match &self.surface {
            Surface::Heightfield { bumps, waves, .. } => {
                let mut z = 0.0;
                for b in bumps {
                    let (dx, dy) = (x - b.cx, y - b.cy);
                    z += b.height * (-(dx * dx + dy * dy) * b.inv_two_sigma2).exp();
                }
                for w in waves {
                    z += w.amp * (w.kx * x + w.ky * y + w.phase).sin();
                }
                z
            }
            Surface::BoxRoom { .. } => unreachable!("box room has no height function"),
        }
    }

    /// Surface height at `(x, y)` for heightfield scenes.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        match self.surface {
            Surface::Heightfield { .. } => {
                let e = self.half_extent;
                (x.abs() <= e && y.abs() <= e).then(|| self.height(x, y))
            }
            Surface::BoxRoom { .. } => None,
        }
    }

    /// Distance along `dir` to the first surface hit from `origin`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match &self.surface {
            Surface::Heightfield { z_min, z_max, .. } => self.cast_heightfield(origin, dir, *z_min, *z_max),
            Surface::BoxRoom { pillar_min, pillar_max } => {
                let e = self.half_extent;
                let room = exit_distance(origin, dir, &Vector3::repeat(-e), &Vector3::repeat(e))?;
                match entry_distance(origin, dir, pillar_min, pillar_max) {
                    Some(s) if s < room => Some(s),
                    _ => Some(room),
                }
            }
        }
    }

    fn cast_heightfield(&self, o: &Vector3<f64>, d: &Vector3<f64>, z_min: f64, z_max: f64) -> Option<f64> {
        let e = self.half_extent;
        // restrict the march to the part of the ray inside the surface's bounding box
        let (mut s0, mut s1) = slab_interval(o, d, &Vector3::new(-e, -e, z_min), &Vector3::new(e, e, z_max))?;
        s0 = s0.max(1e-6);
        s1 = s1.max(s0);
        let above = |s: f64| {
            let p = o + d * s;
            p.z - self.height(p.x, p.y)
        };
        let inv_norm = 1.0 / d.norm();
        let mut prev_s = s0;
        let mut prev = above(s0);
        if prev <= 0.0 {
            return None;
        }
        let mut s = s0;
        while s < s1 {
            // vertical clearance bounds the safe advance while slopes stay moderate
            s = (s + MARCH_STEP.max(MARCH_SAFETY * prev) * inv_norm).min(s1);
            let cur = above(s);
            if cur <= 0.0 {
                let (mut lo, mut hi) = (prev_s, s);
                for _ in 0..BISECTION_ITERS {
                    let mid = 0.5 * (lo + hi);
                    if above(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(hi);
            }
            prev_s = s;
            prev = cur;
        }
        None
    }

    /// Is `p` a legal camera position (above the terrain or inside the room)?
    fn camera_allowed(&self, c: &Vector3<f64>) -> bool {
        match &self.surface {
            Surface::Heightfield { .. } => match self.height_at(c.x, c.y) {
                Some(z) => c.z > z + 0.2,
                None => true,
            },
            Surface::BoxRoom { pillar_min, pillar_max } => {
                let inside_room = c.iter().all(|x| x.abs() < self.half_extent - 0.2);
                let in_pillar = (0..3).all(|i| c[i] > pillar_min[i] - 0.2 && c[i] < pillar_max[i] + 0.2);
                inside_room && !in_pillar
            }
        }
    }

    /// Hash of the surface sampled on a fixed lattice.
    pub fn surface_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        let n = 32;
        for i in 0..n {
            for j in 0..n {
                let x = -self.half_extent + 2.0 * self.half_extent * (i as f64 + 0.5) / n as f64;
                let y = -self.half_extent + 2.0 * self.half_extent * (j as f64 + 0.5) / n as f64;
                let dir = Vector3::new(0.01 * (i as f64 - 16.0), 0.01 * (j as f64 - 16.0), -1.0);
                let s = match self.surface {
                    Surface::Heightfield { .. } => self.height(x, y),
                    Surface::BoxRoom { .. } => self.cast(&Vector3::new(0.3, -0.2, 0.1), &dir).unwrap_or(-1.0),
                };
                hasher.update(s.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn slab_interval(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i] < lo[i] || o[i] > hi[i] {
                return None;
            }
            continue;
        }
        let a = (lo[i] - o[i]) / d[i];
        let b = (hi[i] - o[i]) / d[i];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t1 >= t0.max(0.0)).then_some((t0.max(0.0), t1))
}

fn entry_distance(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<f64> {
    let (t0, _) = slab_interval(o, d, lo, hi)?;
    (t0 > 1e-9).then_some(t0)
}

fn exit_distance(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<f64> {
    slab_interval(o, d, lo, hi).map(|(_, t1)| t1).filter(|&t| t > 1e-9)
}

/// Builds the scene surface deterministically from `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let e = spec.extent / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let surface = match spec.surface {
        SurfaceKind::Heightfield => {
            let bumps: Vec<Bump> = (0..6)
                .map(|_| {
                    let sigma = rng.gen_range(0.15..0.35) * e;
                    Bump {
                        cx: rng.gen_range(-0.8..0.8) * e,
                        cy: rng.gen_range(-0.8..0.8) * e,
                        height: rng.gen_range(-0.15..0.3) * e,
                        inv_two_sigma2: 1.0 / (2.0 * sigma * sigma),
                    }
                })
                .collect();
            let waves: Vec<Wave> = (0..4)
                .map(|_| {
                    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let freq = rng.gen_range(1.0..3.0) / e;
                    Wave {
                        kx: freq * angle.cos(),
                        ky: freq * angle.sin(),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                        amp: rng.gen_range(0.01..0.04) * e,
                    }
                })
                .collect();
            let bound: f64 = bumps.iter().map(|b| b.height.abs()).sum::<f64>() + waves.iter().map(|w| w.amp).sum::<f64>();
            let bound = bound.min(0.95 * e);
            Surface::Heightfield {
                bumps,
                waves,
                z_min: -bound,
                z_max: bound,
            }
        }
        SurfaceKind::BoxRoom => {
            let c = Vector3::new(rng.gen_range(-0.4..0.4) * e, rng.gen_range(-0.4..0.4) * e, 0.0);
            let half = Vector3::new(rng.gen_range(0.1..0.2) * e, rng.gen_range(0.1..0.2) * e, 0.0);
            Surface::BoxRoom {
                pillar_min: Vector3::new(c.x - half.x, c.y - half.y, -e),
                pillar_max: Vector3::new(c.x + half.x, c.y + half.y, rng.gen_range(-0.2..0.5) * e),
            }
        }
    };
    let scene = Scene {
        spec: spec.clone(),
        half_extent: e,
        surface,
    };
    // clamp the heightfield into the scene bounds
    if let Surface::Heightfield { .. } = scene.surface {
        debug_assert!(scene.height(0.0, 0.0).abs() <= e);
    }
    Ok(scene)
}

/// Camera-to-scene rotation looking from `eye` toward `target` with image
/// rows pointing down, rolled by `roll` radians about the optical axis.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>, roll: f64) -> Option<Matrix3<f64>> {
    let forward = (target - eye).try_normalize(1e-12)?;
    let up = if forward.z.abs() > 0.999 { Vector3::y() } else { Vector3::z() };
    let right = forward.cross(&up).try_normalize(1e-12)?;
    let down = forward.cross(&right);
    let r = Matrix3::from_columns(&[right, down, forward]);
    Some(axis_angle(&forward, roll) * r)
}

/// Intrinsics for one frame.
pub fn sample_intrinsics<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Intrinsics {
    let scale = spec.w as f64 / 640.0;
    let f = if spec.randomize_k {
        rng.gen_range(400.0..=800.0) * scale
    } else {
        600.0 * scale
    };
    Intrinsics {
        fx: f,
        fy: f,
        cx: spec.w as f64 / 2.0,
        cy: spec.h as f64 / 2.0,
    }
}

fn valid_fraction(scene: &Scene, pose: &Pose, k: &Intrinsics, h: usize, w: usize) -> f64 {
    // a coarse lattice is enough to accept or reject a pose
    let mut hits = 0;
    let mut total = 0;
    for v in (0..h).step_by(4) {
        for u in (0..w).step_by(4) {
            total += 1;
            let dir = pose.rotation * cell_ray(k, u as f64, v as f64);
            if scene.cast(&pose.translation, &dir).is_some() {
                hits += 1;
            }
        }
    }
    hits as f64 / total as f64
}

/// Samples a camera that looks at a random surface point from a shell around
/// it, with at most 20° of roll, and sees the surface in at least 30% of cells.
pub fn sample_pose<R: Rng + ?Sized>(scene: &Scene, k: &Intrinsics, rng: &mut R) -> Result<Pose> {
    let e = scene.half_extent;
    let spec = &scene.spec;
    for _ in 0..MAX_POSE_ATTEMPTS {
        let roll = rng.gen_range(-20.0f64..=20.0).to_radians();
        let (eye, target) = match scene.surface {
            Surface::Heightfield { .. } => {
                let tx = rng.gen_range(-0.5..0.5) * e;
                let ty = rng.gen_range(-0.5..0.5) * e;
                let target = Vector3::new(tx, ty, scene.height(tx, ty));
                let elevation = rng.gen_range(35.0f64..75.0).to_radians();
                let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
                let dist = rng.gen_range(0.8..1.5) * e;
                let dir = Vector3::new(
                    elevation.cos() * azimuth.cos(),
                    elevation.cos() * azimuth.sin(),
                    elevation.sin(),
                );
                (target + dir * dist, target)
            }
            Surface::BoxRoom { .. } => {
                let eye = Vector3::new(
                    rng.gen_range(-0.6..0.6) * e,
                    rng.gen_range(-0.6..0.6) * e,
                    rng.gen_range(-0.3..0.5) * e,
                );
                let dir = crate::training::random_unit_vector(rng);
                let Some(s) = scene.cast(&eye, &dir) else { continue };
                (eye, eye + dir * s)
            }
        };
        if !scene.camera_allowed(&eye) {
            continue;
        }
        let Some(rotation) = look_at(&eye, &target, roll) else { continue };
        let pose = Pose::new(rotation, eye);
        if valid_fraction(scene, &pose, k, spec.h, spec.w) >= MIN_VALID_FRACTION {
            return Ok(pose);
        }
    }
    Err(Error::UnviewableScene(MAX_POSE_ATTEMPTS))
}

/// Casts the ray through every cell center; hits store the scene point.
pub fn render_scm(scene: &Scene, pose: &Pose, k: &Intrinsics, h: usize, w: usize) -> SceneCoordinateMap {
    let mut scm = SceneCoordinateMap::new(h, w);
    for v in 0..h {
        for u in 0..w {
            let dir = pose.rotation * cell_ray(k, u as f64, v as f64);
            if let Some(s) = scene.cast(&pose.translation, &dir) {
                scm.set(u, v, Some(pose.translation + dir * s));
            }
        }
    }
    scm
}

/// Largest distance, in grid units, between a valid cell's center and the
/// projection of its scene coordinate.
pub fn max_closure_error(scm: &SceneCoordinateMap, pose: &Pose, k: &Intrinsics) -> f64 {
    let inv = pose.inverse();
    scm.valid_cells()
        .map(|(u, v, p)| match project(k, &inv.transform_point(&p)) {
            Ok((pu, pv)) => (pu - u as f64 - 0.5).abs().max((pv - v as f64 - 0.5).abs()),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Replaces a uniformly chosen `⌊fraction·n_valid⌋` subset of valid cells by
/// the cell plus a uniform offset in `[−magnitude, magnitude]³`.
///
/// The permutation does not depend on `fraction`, so for the same rng state
/// the corrupted sets are nested and share offsets across fractions.
pub fn inject_noise<R: Rng + ?Sized>(scm: &SceneCoordinateMap, spec: &NoiseSpec, rng: &mut R) -> Result<SceneCoordinateMap> {
    spec.validate()?;
    let mut valid: Vec<usize> = (0..scm.h * scm.w).filter(|&i| scm.mask[i]).collect();
    valid.shuffle(rng);
    let count = (spec.fraction * valid.len() as f64).floor() as usize;
    let mut out = scm.clone();
    if spec.magnitude == 0.0 {
        return Ok(out);
    }
    for &i in &valid[..count] {
        for c in 0..3 {
            out.coords[3 * i + c] += rng.gen_range(-spec.magnitude..=spec.magnitude);
        }
    }
    Ok(out)
}

/// Map-level analog of image augmentation: the same camera center with an
/// in-plane rotation of up to 15°, a focal rescale in `[0.67, 1.5]` and a
/// random crop offset, re-rendered; cells whose ray falls outside the source
/// frame are masked out.
pub fn augment_frame<R: Rng + ?Sized>(scene: &Scene, sample: &TrainSample, rng: &mut R) -> TrainSample {
    let (h, w) = (sample.scm.h, sample.scm.w);
    let roll = rng.gen_range(-15.0f64..=15.0).to_radians();
    let scale: f64 = rng.gen_range(0.67..=1.5);
    let forward: Vector3<f64> = sample.gt.rotation.column(2).into();
    let rotation = axis_angle(&forward, roll) * sample.gt.rotation;
    let pose = Pose::new(rotation, sample.gt.translation);
    let slack_x = (scale - 1.0).max(0.0) * w as f64 / 2.0;
    let slack_y = (scale - 1.0).max(0.0) * h as f64 / 2.0;
    let k = Intrinsics {
        fx: sample.k.fx * scale,
        fy: sample.k.fy * scale,
        cx: sample.k.cx * scale - (scale - 1.0) * w as f64 / 2.0 + rng.gen_range(-slack_x..=slack_x),
        cy: sample.k.cy * scale - (scale - 1.0) * h as f64 / 2.0 + rng.gen_range(-slack_y..=slack_y),
    };
    let mut scm = render_scm(scene, &pose, &k, h, w);
    let src_inv = sample.gt.inverse();
    for v in 0..h {
        for u in 0..w {
            if let Some(p) = scm.get(u, v) {
                let inside = project(&sample.k, &src_inv.transform_point(&p))
                    .map(|(pu, pv)| pu >= 0.0 && pu <= w as f64 && pv >= 0.0 && pv <= h as f64)
                    .unwrap_or(false);
                if !inside {
                    scm.set(u, v, None);
                }
            }
        }
    }
    TrainSample { scm, k, gt: pose }
}

fn frame_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Seed of the generator that draws a frame's map variants, in order.
fn variant_seed(seed: u64) -> u64 {
    seed ^ 0xa5a5_a5a5
}

/// Renders frame `index` of the scene; frames are independent of each other.
pub fn render_frame(scene: &Scene, index: u64) -> Result<TrainSample> {
    let mut rng = frame_rng(scene.spec.seed, index);
    let k = sample_intrinsics(&scene.spec, &mut rng);
    let gt = sample_pose(scene, &k, &mut rng)?;
    let scm = render_scm(scene, &gt, &k, scene.spec.h, scene.spec.w);
    Ok(TrainSample { scm, k, gt })
}

/// Named frames of one split.
pub struct RenderedSplit {
    pub names: Vec<String>,
    pub samples: Vec<TrainSample>,
    /// ChaCha8 seed and stream each frame was drawn from.
    pub streams: Vec<(u64, u64)>,
}

/// Renders the mapping and query splits in memory.
pub fn render_dataset(spec: &SceneSpec) -> Result<(Scene, RenderedSplit, RenderedSplit)> {
    let scene = generate_scene(spec)?;
    let n_map = spec.n_map as u64;
    type Named = (String, TrainSample, (u64, u64));
    let map: Vec<Vec<Named>> = (0..n_map)
        .into_par_iter()
        .map(|i| {
            let base = render_frame(&scene, i)?;
            let mut out = Vec::with_capacity(1 + spec.map_variants);
            let vseed = variant_seed(spec.seed);
            let mut rng = frame_rng(vseed, i);
            for v in 0..spec.map_variants {
                let frame = augment_frame(&scene, &base, &mut rng);
                out.push((format!("frame_{i:05}_v{v:02}"), frame, (vseed, i + 1)));
            }
            out.insert(0, (format!("frame_{i:05}"), base, (spec.seed, i + 1)));
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let query: Vec<Named> = (n_map..n_map + spec.n_query as u64)
        .into_par_iter()
        .map(|i| Ok((format!("frame_{i:05}"), render_frame(&scene, i)?, (spec.seed, i + 1))))
        .collect::<Result<_>>()?;
    let split = |v: Vec<Named>| {
        let mut out = RenderedSplit { names: vec![], samples: vec![], streams: vec![] };
        for (n, s, r) in v {
            out.names.push(n);
            out.samples.push(s);
            out.streams.push(r);
        }
        out
    };
    Ok((scene, split(map.into_iter().flatten().collect()), split(query)))
}

/// Writes `mapping/` and `query/` splits plus `manifest.txt` under `out_dir`.
/// Each `sample=` line names the ChaCha8 seed and stream behind the frame;
/// map variants of one frame share a stream and are drawn in order.
pub fn make_dataset(spec: &SceneSpec, out_dir: &Path) -> Result<()> {
    let (scene, map, query) = render_dataset(spec)?;
    let mut manifest = spec.to_kv_string();
    manifest.push_str(&format!("surface_hash={}\n", scene.surface_hash()));
    for (split, data) in [("mapping", &map), ("query", &query)] {
        let dir = out_dir.join(split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for ((name, sample), (seed, stream)) in data.names.iter().zip(&data.samples).zip(&data.streams) {
            crate::io::write_sample(&dir, name, sample)?;
            manifest.push_str(&format!("sample={split} {name} seed={seed} stream={stream}\n"));
        }
    }
    let path = out_dir.join(crate::io::MANIFEST_NAME);
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}
