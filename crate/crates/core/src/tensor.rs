//! Dense row-major matrices and the handful of layer primitives the regressor
//! needs, each with an explicit backward pass.

use crate::error::{Error, Result};

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Mean of all rows.
    pub fn mean_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        let inv = 1.0 / self.rows as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }
}

/// Borrowed affine map `y = x W + b` with `W` stored `d_in × d_out` row-major.
#[derive(Debug, Clone, Copy)]
pub struct Linear<'a> {
    pub w: &'a [f64],
    pub b: Option<&'a [f64]>,
    pub d_in: usize,
    pub d_out: usize,
}

/// Gradient buffers matching a [`Linear`].
pub struct LinearGrad<'a> {
    pub w: &'a mut [f64],
    pub b: Option<&'a mut [f64]>,
}

impl<'a> Linear<'a> {
    pub fn new(w: &'a [f64], b: Option<&'a [f64]>, d_in: usize, d_out: usize) -> Result<Self> {
        if w.len() != d_in * d_out || b.is_some_and(|b| b.len() != d_out) {
            return Err(Error::ShapeMismatch(format!(
                "linear map {d_in}->{d_out} given {} weights and {:?} biases",
                w.len(),
                b.map(|b| b.len())
            )));
        }
        Ok(Linear { w, b, d_in, d_out })
    }

    /// Single-vector forward, written into `y`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self.b {
            Some(b) => y.copy_from_slice(b),
            None => y.fill(0.0),
        }
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let wk = &self.w[k * self.d_out..(k + 1) * self.d_out];
            for (yj, wj) in y.iter_mut().zip(wk) {
                *yj += xk * wj;
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.d_out];
        self.apply_into(x, &mut y);
        y
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        debug_assert_eq!(x.cols, self.d_in);
        let mut y = Mat::zeros(x.rows, self.d_out);
        for i in 0..x.rows {
            let (xi, yi) = (x.row(i), &mut y.data[i * self.d_out..(i + 1) * self.d_out]);
            self.apply_into(xi, yi);
        }
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut LinearGrad<'_>) -> Mat {
        let mut dx = Mat::zeros(x.rows, self.d_in);
        for i in 0..x.rows {
            let xi = x.row(i);
            let dyi = dy.row(i);
            if let Some(gb) = grad.b.as_deref_mut() {
                for (g, d) in gb.iter_mut().zip(dyi) {
                    *g += d;
                }
            }
            let dxi = &mut dx.data[i * self.d_in..(i + 1) * self.d_in];
            for k in 0..self.d_in {
                let wk = &self.w[k * self.d_out..(k + 1) * self.d_out];
                let gwk = &mut grad.w[k * self.d_out..(k + 1) * self.d_out];
                let xk = xi[k];
                let mut acc = 0.0;
                for j in 0..self.d_out {
                    gwk[j] += xk * dyi[j];
                    acc += dyi[j] * wk[j];
                }
                dxi[k] = acc;
            }
        }
        dx
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row normalization cache for the backward pass.
pub struct LayerNormCache {
    pub x_hat: Mat,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> (Mat, LayerNormCache) {
    let d = x.cols;
    let mut y = Mat::zeros(x.rows, d);
    let mut x_hat = Mat::zeros(x.rows, d);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let xi = x.row(i);
        let mean = xi.iter().sum::<f64>() / d as f64;
        let var = xi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(is);
        let xh = x_hat.row_mut(i);
        for j in 0..d {
            xh[j] = (xi[j] - mean) * is;
        }
        let yi = &mut y.data[i * d..(i + 1) * d];
        for j in 0..d {
            yi[j] = x_hat.data[i * d + j] * gain[j] + bias[j];
        }
    }
    (y, LayerNormCache { x_hat, inv_std })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    dy: &Mat,
    g_gain: &mut [f64],
    g_bias: &mut [f64],
) -> Mat {
    let d = dy.cols;
    let mut dx = Mat::zeros(dy.rows, d);
    let mut g_xhat = vec![0.0; d];
    for i in 0..dy.rows {
        let dyi = dy.row(i);
        let xh = cache.x_hat.row(i);
        for j in 0..d {
            g_gain[j] += dyi[j] * xh[j];
            g_bias[j] += dyi[j];
            g_xhat[j] = dyi[j] * gain[j];
        }
        let mean_g = g_xhat.iter().sum::<f64>() / d as f64;
        let mean_gx = g_xhat.iter().zip(xh).map(|(g, x)| g * x).sum::<f64>() / d as f64;
        let is = cache.inv_std[i];
        let dxi = dx.row_mut(i);
        for j in 0..d {
            dxi[j] = is * (g_xhat[j] - mean_g - xh[j] * mean_gx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Linear-attention feature map `elu(x) + 1`.
#[inline]
pub fn elu_plus_one(x: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn elu_plus_one_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}
