//! Dynamic positional encoding: a camera-aware sinusoidal embedding of the
//! viewing ray through each cell, a multi-frequency embedding of the cell's
//! scene coordinate lifted by a 1×1 convolution, and their sum.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{ray_xy, Intrinsics, RAY_SCALE};
use crate::tensor::Linear;

/// Channel width and 3D frequency band count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub d_model: usize,
    pub bands: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            d_model: 32,
            bands: 5,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % 4 != 0 {
            return Err(Error::Config(format!(
                "d_model must be a positive multiple of 4, got {}",
                self.d_model
            )));
        }
        if self.bands == 0 {
            return Err(Error::Config("need at least one frequency band".into()));
        }
        Ok(())
    }

    /// Width of the raw 3D embedding, `3(2m + 1)`.
    pub fn raw3d_dim(&self) -> usize {
        raw3d_dim(self.bands)
    }
}

pub fn raw3d_dim(bands: usize) -> usize {
    3 * (2 * bands + 1)
}

/// Dense `h × w` grid of scene-frame points with a validity mask.
///
/// Cell `(u, v)` is column `u`, row `v`; storage is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCoordinateMap {
    pub h: usize,
    pub w: usize,
    /// `h·w·3` values, xyz-interleaved.
    pub coords: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SceneCoordinateMap {
    pub fn new(h: usize, w: usize) -> Self {
        SceneCoordinateMap {
            h,
            w,
            coords: vec![0.0; h * w * 3],
            mask: vec![false; h * w],
        }
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.w + u
    }

    #[inline]
    pub fn point_at(&self, idx: usize) -> Vector3<f64> {
        Vector3::new(self.coords[3 * idx], self.coords[3 * idx + 1], self.coords[3 * idx + 2])
    }

    pub fn get(&self, u: usize, v: usize) -> Option<Vector3<f64>> {
        let i = self.index(u, v);
        self.mask[i].then(|| self.point_at(i))
    }

    pub fn set(&mut self, u: usize, v: usize, p: Option<Vector3<f64>>) {
        let i = self.index(u, v);
        match p {
            Some(p) => {
                self.coords[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
                self.mask[i] = true;
            }
            None => {
                self.coords[3 * i..3 * i + 3].fill(0.0);
                self.mask[i] = false;
            }
        }
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(u, v, point)` for every valid cell in row-major order.
    pub fn valid_cells(&self) -> impl Iterator<Item = (usize, usize, Vector3<f64>)> + '_ {
        (0..self.h * self.w)
            .filter(|&i| self.mask[i])
            .map(|i| (i % self.w, i / self.w, self.point_at(i)))
    }

    /// Keeps cells `(stride·i + offset, stride·j + offset)`.
    pub fn subsample(&self, stride: usize, offset: usize) -> SceneCoordinateMap {
        if stride == 1 && offset == 0 {
            return self.clone();
        }
        let h = (self.h.saturating_sub(offset)).div_ceil(stride);
        let w = (self.w.saturating_sub(offset)).div_ceil(stride);
        let mut out = SceneCoordinateMap::new(h, w);
        for v in 0..h {
            for u in 0..w {
                out.set(u, v, self.get(stride * u + offset, stride * v + offset));
            }
        }
        out
    }
}

/// `h × w` grid of `d`-channel tokens with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub data: Vec<f64>,
    pub mask: Vec<bool>,
}

impl TokenGrid {
    pub fn zeros(h: usize, w: usize, d: usize) -> Self {
        TokenGrid {
            h,
            w,
            d,
            data: vec![0.0; h * w * d],
            mask: vec![true; h * w],
        }
    }

    #[inline]
    pub fn token(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.d..(idx + 1) * self.d]
    }

    #[inline]
    pub fn token_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.data[idx * self.d..(idx + 1) * self.d]
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Frequency of band `k` for a `d`-channel 2D embedding.
#[inline]
pub fn band_frequency(k: usize, d_model: usize) -> f64 {
    10000f64.powf(-2.0 * k as f64 / d_model as f64)
}

/// Writes the interleaved `sin/cos` ray embedding for one cell into `out`.
pub fn pe2d_channels(x_ray: f64, y_ray: f64, out: &mut [f64]) {
    let d = out.len();
    for k in 0..d / 4 {
        let omega = band_frequency(k, d);
        let (sx, cx) = (omega * x_ray).sin_cos();
        let (sy, cy) = (omega * y_ray).sin_cos();
        out[4 * k] = sx;
        out[4 * k + 1] = cx;
        out[4 * k + 2] = sy;
        out[4 * k + 3] = cy;
    }
}

/// Camera-aware 2D embedding: each cell encodes its viewing ray, so cells with
/// equal rays under different intrinsics receive identical channels.
pub fn pe2d(k: &Intrinsics, h: usize, w: usize, cfg: &EncodingConfig) -> Result<TokenGrid> {
    cfg.validate()?;
    let mut grid = TokenGrid::zeros(h, w, cfg.d_model);
    for v in 0..h {
        for u in 0..w {
            let (x, y) = ray_xy(k, u as f64, v as f64);
            pe2d_channels(x, y, grid.token_mut(v * w + u));
        }
    }
    Ok(grid)
}

/// Intrinsics-free rays used when dynamic encoding is disabled.
#[inline]
pub fn static_ray_xy(u: f64, v: f64, h: usize, w: usize) -> (f64, f64) {
    (
        RAY_SCALE * (u - w as f64 / 2.0) / w as f64,
        RAY_SCALE * (v - h as f64 / 2.0) / h as f64,
    )
}

/// 2D embedding of normalized grid position, ignoring the camera.
pub fn pe2d_static(h: usize, w: usize, cfg: &EncodingConfig) -> Result<TokenGrid> {
    cfg.validate()?;
    let mut grid = TokenGrid::zeros(h, w, cfg.d_model);
    for v in 0..h {
        for u in 0..w {
            let (x, y) = static_ray_xy(u as f64, v as f64, h, w);
            pe2d_channels(x, y, grid.token_mut(v * w + u));
        }
    }
    Ok(grid)
}

/// `[p, sin(2⁰πp), cos(2⁰πp), …, sin(2^{m−1}πp), cos(2^{m−1}πp)]` for one point.
pub fn pe3d_raw_channels(p: &Vector3<f64>, out: &mut [f64]) {
    out[..3].copy_from_slice(p.as_slice());
    let bands = (out.len() / 3 - 1) / 2;
    let mut freq = PI;
    for b in 0..bands {
        let base = 3 + 6 * b;
        for c in 0..3 {
            let (s, co) = (freq * p[c]).sin_cos();
            out[base + c] = s;
            out[base + 3 + c] = co;
        }
        freq *= 2.0;
    }
}

/// Multi-frequency embedding of every valid scene coordinate; invalid cells
/// stay zero and masked.
pub fn pe3d_raw(scm: &SceneCoordinateMap, bands: usize) -> Result<TokenGrid> {
    if bands == 0 {
        return Err(Error::Config("need at least one frequency band".into()));
    }
    let d = raw3d_dim(bands);
    let mut grid = TokenGrid::zeros(scm.h, scm.w, d);
    grid.mask.copy_from_slice(&scm.mask);
    for i in 0..scm.h * scm.w {
        if scm.mask[i] {
            pe3d_raw_channels(&scm.point_at(i), grid.token_mut(i));
        }
    }
    Ok(grid)
}

/// Raw 3D embedding followed by a per-cell affine lift to `d_model` channels.
pub fn pe3d(scm: &SceneCoordinateMap, cfg: &EncodingConfig, conv: &Linear<'_>) -> Result<TokenGrid> {
    cfg.validate()?;
    if conv.d_in != cfg.raw3d_dim() || conv.d_out != cfg.d_model || conv.b.is_none() {
        return Err(Error::ShapeMismatch(format!(
            "pe3d conv must map {} -> {} with bias, got {} -> {}",
            cfg.raw3d_dim(),
            cfg.d_model,
            conv.d_in,
            conv.d_out
        )));
    }
    let raw = pe3d_raw(scm, cfg.bands)?;
    let mut grid = TokenGrid::zeros(scm.h, scm.w, cfg.d_model);
    grid.mask.copy_from_slice(&scm.mask);
    for i in 0..scm.h * scm.w {
        if scm.mask[i] {
            conv.apply_into(raw.token(i), grid.token_mut(i));
        }
    }
    Ok(grid)
}

/// Elementwise sum of two encodings with identical shape and mask.
pub fn fuse(a: &TokenGrid, b: &TokenGrid) -> Result<TokenGrid> {
    if (a.h, a.w, a.d) != (b.h, b.w, b.d) || a.mask != b.mask {
        return Err(Error::ShapeMismatch(format!(
            "cannot fuse {}x{}x{} with {}x{}x{} (or masks differ)",
            a.h, a.w, a.d, b.h, b.w, b.d
        )));
    }
    let mut out = a.clone();
    for (o, x) in out.data.iter_mut().zip(&b.data) {
        *o += x;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(d: usize, m: usize) -> EncodingConfig {
        EncodingConfig { d_model: d, bands: m }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(8, 5).validate().is_ok());
        assert!(cfg(6, 5).validate().is_err());
        assert!(cfg(8, 0).validate().is_err());
    }

    #[test]
    fn pe2d_on_principal_ray_alternates() {
        // u − cx − 0.5 = 0 at cell 1
        let k = Intrinsics::new(100.0, 100.0, 0.5, 0.5).unwrap();
        let g = pe2d(&k, 3, 3, &cfg(16, 5)).unwrap();
        let t = g.token(4);
        for (i, &c) in t.iter().enumerate() {
            assert_eq!(c, if i % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn pe2d_hand_evaluated_vector() {
        let mut out = [0.0; 8];
        pe2d_channels(std::f64::consts::FRAC_PI_2, 0.0, &mut out);
        let expected = [1.0, 6.123e-17, 0.0, 1.0, 0.15643, 0.98769, 0.0, 1.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{out:?}");
        }
    }

    #[test]
    fn pe3d_raw_examples() {
        let mut out = vec![0.0; raw3d_dim(5)];
        assert_eq!(out.len(), 33);
        pe3d_raw_channels(&Vector3::zeros(), &mut out);
        for b in 0..5 {
            assert_eq!(&out[3 + 6 * b..6 + 6 * b], &[0.0; 3]);
            assert_eq!(&out[6 + 6 * b..9 + 6 * b], &[1.0; 3]);
        }
        let mut out = vec![0.0; raw3d_dim(2)];
        pe3d_raw_channels(&Vector3::new(0.5, 0.0, 0.0), &mut out);
        let x: Vec<f64> = [0, 3, 6, 9, 12].iter().map(|&i| out[i]).collect();
        let expected = [0.5, 1.0, 0.0, 0.0, -1.0];
        for (a, b) in x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pe3d_raw_masks_invalid_cells() {
        let mut scm = SceneCoordinateMap::new(2, 2);
        scm.set(1, 0, Some(Vector3::new(0.3, 0.2, 0.1)));
        let g = pe3d_raw(&scm, 3).unwrap();
        assert_eq!(g.mask, vec![false, true, false, false]);
        assert!(g.token(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pe3d_conv_examples() {
        let c = cfg(8, 2);
        let mut scm = SceneCoordinateMap::new(1, 2);
        scm.set(0, 0, Some(Vector3::new(0.3, -1.2, 2.5)));
        scm.set(1, 0, Some(Vector3::new(-0.7, 0.4, 0.9)));
        let din = c.raw3d_dim();
        let zw = vec![0.0; din * 8];
        let zb = vec![0.0; 8];
        let g = pe3d(&scm, &c, &Linear::new(&zw, Some(&zb), din, 8).unwrap()).unwrap();
        assert!(g.data.iter().all(|&x| x == 0.0));

        let mut sel = vec![0.0; din * 8];
        for i in 0..3 {
            sel[i * 8 + i] = 1.0;
        }
        let g = pe3d(&scm, &c, &Linear::new(&sel, Some(&zb), din, 8).unwrap()).unwrap();
        assert_eq!(&g.token(0)[..3], &[0.3, -1.2, 2.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..din * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = pe3d(&scm, &c, &Linear::new(&w, Some(&b), din, 8).unwrap()).unwrap();
        let raw = pe3d_raw(&scm, 2).unwrap();
        for o in 0..8 {
            let mut acc = b[o];
            for i in 0..din {
                acc += raw.token(1)[i] * w[i * 8 + o];
            }
            assert!((g.token(1)[o] - acc).abs() < 1e-12);
        }

        let bad = vec![0.0; 3 * 8];
        assert!(matches!(
            pe3d(&scm, &c, &Linear::new(&bad, Some(&zb), 3, 8).unwrap()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn fuse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = TokenGrid::zeros(2, 3, 4);
        let mut b = TokenGrid::zeros(2, 3, 4);
        a.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        b.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        assert_eq!(fuse(&a, &TokenGrid::zeros(2, 3, 4)).unwrap(), a);
        let mut neg = a.clone();
        neg.data.iter_mut().for_each(|x| *x = -*x);
        assert!(fuse(&a, &neg).unwrap().data.iter().all(|&x| x == 0.0));
        let s = fuse(&a, &b).unwrap();
        for i in 0..a.data.len() {
            assert_eq!(s.data[i], a.data[i] + b.data[i]);
        }
        assert_eq!(fuse(&a, &b).unwrap(), fuse(&b, &a).unwrap());
        assert!(fuse(&a, &TokenGrid::zeros(3, 2, 4)).is_err());
    }

    #[test]
    fn subsample_picks_strided_cells() {
        let mut scm = SceneCoordinateMap::new(8, 8);
        for v in 0..8 {
            for u in 0..8 {
                if (u + v) % 3 != 0 {
                    scm.set(u, v, Some(Vector3::new(u as f64, v as f64, 0.0)));
                }
            }
        }
        let s = scm.subsample(4, 2);
        assert_eq!((s.h, s.w), (2, 2));
        assert_eq!(s.get(1, 1), scm.get(6, 6));
        assert_eq!(s.get(0, 1), scm.get(2, 6));
    }
}
