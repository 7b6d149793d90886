//! Forward and backward passes of the pose regressor.
//!
//! Internally only valid tokens are materialized, stacked as the rows of an
//! `n × d_model` matrix in row-major cell order; invalid cells never enter a
//! sum, so their contents cannot influence any output.

use nalgebra::{Matrix3, Vector3, Vector4};

use super::config::{ReattentionMode, RegressorConfig, RotationRepr};
use super::params::{BlockSlots, HeadSlots, ModelParams, NormSlot};
use crate::encoding::{
    pe2d_channels, pe3d_raw_channels, raw3d_dim, static_ray_xy, SceneCoordinateMap, TokenGrid,
};
use crate::error::{Error, Result};
use crate::geometry::{
    homog_backward, homog_to_translation, ray_xy, rot6d_backward, rot6d_to_matrix, rot9d_backward,
    rot9d_to_matrix, Intrinsics, Pose, Rotation6D, Rotation9D,
};
use crate::tensor::{
    elu_plus_one, elu_plus_one_grad, gelu, gelu_grad, layer_norm, layer_norm_backward, relu,
    relu_grad, LayerNormCache, Mat,
};

/// Encoder inputs for the valid tokens of one frame.
#[derive(Debug, Clone)]
pub struct TokenInput {
    /// Source grid cell `(u, v)` of each token.
    pub cells: Vec<(usize, usize)>,
    /// Fixed 2D ray embedding, `n × d_model`.
    pub pe2d: Mat,
    /// Raw multi-frequency coordinate embedding, `n × 3(2m+1)`.
    pub raw3d: Mat,
}

impl TokenInput {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Builds encoder inputs from the cells kept by `cfg.token_stride`.
pub fn prepare_input(scm: &SceneCoordinateMap, k: &Intrinsics, cfg: &RegressorConfig) -> Result<TokenInput> {
    cfg.validate()?;
    let stride = cfg.token_stride;
    let offset = stride / 2;
    let d = cfg.d_model;
    let rd = raw3d_dim(cfg.bands);
    let mut cells = Vec::new();
    let mut pe2d = Vec::new();
    let mut raw3d = Vec::new();
    let mut buf2 = vec![0.0; d];
    let mut buf3 = vec![0.0; rd];
    for v in (offset..scm.h).step_by(stride) {
        for u in (offset..scm.w).step_by(stride) {
            let Some(p) = scm.get(u, v) else { continue };
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::NonFiniteValue(format!("scene coordinate at ({u}, {v})")));
            }
            let (x, y) = if cfg.enable_dynamic_pe {
                ray_xy(k, u as f64, v as f64)
            } else {
                static_ray_xy(u as f64, v as f64, scm.h, scm.w)
            };
            pe2d_channels(x, y, &mut buf2);
            pe3d_raw_channels(&p, &mut buf3);
            cells.push((u, v));
            pe2d.extend_from_slice(&buf2);
            raw3d.extend_from_slice(&buf3);
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = cells.len();
    Ok(TokenInput {
        cells,
        pe2d: Mat::from_vec(n, d, pe2d)?,
        raw3d: Mat::from_vec(n, rd, raw3d)?,
    })
}

// ---------------------------------------------------------------------------
// linear attention

/// Per-head sums and feature maps kept for the backward pass.
pub struct AttentionCache {
    phi_q: Mat,
    phi_k: Mat,
    /// `n_heads` blocks of `dh × dh`.
    kv: Vec<f64>,
    /// `n_heads` blocks of `dh`.
    ksum: Vec<f64>,
    /// `n × n_heads` normalizers.
    den: Vec<f64>,
    out: Mat,
}

/// Multi-head linear attention over all rows; heads split the columns.
pub fn multihead_linear_attention(q: &Mat, k: &Mat, v: &Mat, n_heads: usize) -> (Mat, AttentionCache) {
    let (n, d) = (q.rows, q.cols);
    let dh = d / n_heads;
    let phi_q = q.map(elu_plus_one);
    let phi_k = k.map(elu_plus_one);
    let mut kv = vec![0.0; n_heads * dh * dh];
    let mut ksum = vec![0.0; n_heads * dh];
    let mut den = vec![0.0; n * n_heads];
    let mut out = Mat::zeros(n, d);
    for h in 0..n_heads {
        let c0 = h * dh;
        let kvh = &mut kv[h * dh * dh..(h + 1) * dh * dh];
        let ks = &mut ksum[h * dh..(h + 1) * dh];
        for j in 0..n {
            let pk = &phi_k.row(j)[c0..c0 + dh];
            let vj = &v.row(j)[c0..c0 + dh];
            for a in 0..dh {
                ks[a] += pk[a];
                let row = &mut kvh[a * dh..(a + 1) * dh];
                for b in 0..dh {
                    row[b] += pk[a] * vj[b];
                }
            }
        }
        for i in 0..n {
            let pq = &phi_q.row(i)[c0..c0 + dh];
            let dn: f64 = pq.iter().zip(ks.iter()).map(|(a, b)| a * b).sum();
            den[i * n_heads + h] = dn;
            let oi = &mut out.row_mut(i)[c0..c0 + dh];
            for a in 0..dh {
                let row = &kvh[a * dh..(a + 1) * dh];
                for b in 0..dh {
                    oi[b] += pq[a] * row[b];
                }
            }
            for o in oi.iter_mut() {
                *o /= dn;
            }
        }
    }
    let cache = AttentionCache {
        phi_q,
        phi_k,
        kv,
        ksum,
        den,
        out: out.clone(),
    };
    (out, cache)
}

/// Returns `(dq, dk, dv)`.
pub fn multihead_linear_attention_backward(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    cache: &AttentionCache,
    d_out: &Mat,
    n_heads: usize,
) -> (Mat, Mat, Mat) {
    let (n, d) = (q.rows, q.cols);
    let dh = d / n_heads;
    let mut dq = Mat::zeros(n, d);
    let mut dk = Mat::zeros(n, d);
    let mut dv = Mat::zeros(n, d);
    let mut g_num = vec![0.0; dh];
    for h in 0..n_heads {
        let c0 = h * dh;
        let kvh = &cache.kv[h * dh * dh..(h + 1) * dh * dh];
        let ks = &cache.ksum[h * dh..(h + 1) * dh];
        let mut g_kv = vec![0.0; dh * dh];
        let mut g_ks = vec![0.0; dh];
        for i in 0..n {
            let go = &d_out.row(i)[c0..c0 + dh];
            let oi = &cache.out.row(i)[c0..c0 + dh];
            let dn = cache.den[i * n_heads + h];
            let g_den = -go.iter().zip(oi).map(|(a, b)| a * b).sum::<f64>() / dn;
            for b in 0..dh {
                g_num[b] = go[b] / dn;
            }
            let pq = &cache.phi_q.row(i)[c0..c0 + dh];
            let qi = &q.row(i)[c0..c0 + dh];
            let dqi = &mut dq.row_mut(i)[c0..c0 + dh];
            for a in 0..dh {
                let row = &kvh[a * dh..(a + 1) * dh];
                let g_pq: f64 = row.iter().zip(&g_num).map(|(x, y)| x * y).sum::<f64>() + g_den * ks[a];
                dqi[a] = g_pq * elu_plus_one_grad(qi[a]);
                let grow = &mut g_kv[a * dh..(a + 1) * dh];
                for b in 0..dh {
                    grow[b] += pq[a] * g_num[b];
                }
                g_ks[a] += g_den * pq[a];
            }
        }
        for j in 0..n {
            let pk = &cache.phi_k.row(j)[c0..c0 + dh];
            let kj = &k.row(j)[c0..c0 + dh];
            let vj = &v.row(j)[c0..c0 + dh];
            let dkj = &mut dk.row_mut(j)[c0..c0 + dh];
            for a in 0..dh {
                let grow = &g_kv[a * dh..(a + 1) * dh];
                let g_pk: f64 = grow.iter().zip(vj).map(|(x, y)| x * y).sum::<f64>() + g_ks[a];
                dkj[a] = g_pk * elu_plus_one_grad(kj[a]);
            }
            let dvj = &mut dv.row_mut(j)[c0..c0 + dh];
            for a in 0..dh {
                let grow = &g_kv[a * dh..(a + 1) * dh];
                for b in 0..dh {
                    dvj[b] += grow[b] * pk[a];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Single-head linear attention with feature map `elu(x) + 1`:
/// `out_i = φ(q_i)ᵀ Σ_j φ(k_j) v_jᵀ / φ(q_i)ᵀ Σ_j φ(k_j)` over valid `j`.
/// Masked rows are excluded from the sums and produce zero outputs.
pub fn linear_attention(q: &Mat, k: &Mat, v: &Mat, mask: &[bool]) -> Result<Mat> {
    let n = q.rows;
    if k.rows != n || v.rows != n || mask.len() != n || k.cols != q.cols || v.cols != q.cols {
        return Err(Error::ShapeMismatch("attention inputs disagree".into()));
    }
    let valid: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if valid.is_empty() {
        return Err(Error::EmptySequence);
    }
    let gather = |m: &Mat| {
        let mut out = Mat::zeros(valid.len(), m.cols);
        for (r, &i) in valid.iter().enumerate() {
            out.row_mut(r).copy_from_slice(m.row(i));
        }
        out
    };
    let (out_c, _) = multihead_linear_attention(&gather(q), &gather(k), &gather(v), 1);
    let mut out = Mat::zeros(n, q.cols);
    for (r, &i) in valid.iter().enumerate() {
        out.row_mut(i).copy_from_slice(out_c.row(r));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// transformer block

fn norm_params<'a>(data: &'a [f64], s: &NormSlot) -> (&'a [f64], &'a [f64]) {
    (&data[s.gain..s.gain + s.d], &data[s.bias..s.bias + s.d])
}

fn norm_grads<'a>(grads: &'a mut [f64], s: &NormSlot) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(s.bias, s.gain + s.d);
    let (g, b) = grads[s.gain..s.gain + 2 * s.d].split_at_mut(s.d);
    (g, b)
}

pub struct BlockCache {
    x: Mat,
    ln1: LayerNormCache,
    a: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    attn: AttentionCache,
    att: Mat,
    ln2: LayerNormCache,
    b: Mat,
    hpre: Mat,
    hact: Mat,
}

/// Pre-norm block: `x + Attn(LN(x))`, then `+ FFN(LN(·))` with a GELU hidden layer.
pub fn block_forward(data: &[f64], s: &BlockSlots, x: Mat, n_heads: usize) -> (Mat, BlockCache) {
    let (g1, b1) = norm_params(data, &s.ln1);
    let (a, ln1) = layer_norm(&x, g1, b1);
    let q = s.wq.view(data).forward(&a);
    let k = s.wk.view(data).forward(&a);
    let v = s.wv.view(data).forward(&a);
    let (att, attn) = multihead_linear_attention(&q, &k, &v, n_heads);
    let mut x1 = s.wo.view(data).forward(&att);
    x1.add_assign(&x);
    let (g2, b2) = norm_params(data, &s.ln2);
    let (b, ln2) = layer_norm(&x1, g2, b2);
    let hpre = s.ffn1.view(data).forward(&b);
    let hact = hpre.map(gelu);
    let mut y = s.ffn2.view(data).forward(&hact);
    y.add_assign(&x1);
    let cache = BlockCache {
        x,
        ln1,
        a,
        q,
        k,
        v,
        attn,
        att,
        ln2,
        b,
        hpre,
        hact,
    };
    (y, cache)
}

pub fn block_backward(
    data: &[f64],
    s: &BlockSlots,
    c: &BlockCache,
    dy: &Mat,
    grads: &mut [f64],
    n_heads: usize,
) -> Mat {
    let mut dx1 = dy.clone();
    let d_hact = s.ffn2.view(data).backward(&c.hact, dy, &mut s.ffn2.grad(grads));
    let mut d_hpre = d_hact;
    for (g, &h) in d_hpre.data.iter_mut().zip(&c.hpre.data) {
        *g *= gelu_grad(h);
    }
    let d_b = s.ffn1.view(data).backward(&c.b, &d_hpre, &mut s.ffn1.grad(grads));
    {
        let (g2, _) = norm_params(data, &s.ln2);
        let g2 = g2.to_vec();
        let (gg, gb) = norm_grads(grads, &s.ln2);
        dx1.add_assign(&layer_norm_backward(&c.ln2, &g2, &d_b, gg, gb));
    }
    let d_att = s.wo.view(data).backward(&c.att, &dx1, &mut s.wo.grad(grads));
    let (dq, dk, dv) = multihead_linear_attention_backward(&c.q, &c.k, &c.v, &c.attn, &d_att, n_heads);
    let mut da = s.wq.view(data).backward(&c.a, &dq, &mut s.wq.grad(grads));
    da.add_assign(&s.wk.view(data).backward(&c.a, &dk, &mut s.wk.grad(grads)));
    da.add_assign(&s.wv.view(data).backward(&c.a, &dv, &mut s.wv.grad(grads)));
    let (g1, _) = norm_params(data, &s.ln1);
    let g1 = g1.to_vec();
    let (gg, gb) = norm_grads(grads, &s.ln1);
    let mut dx = layer_norm_backward(&c.ln1, &g1, &da, gg, gb);
    dx.add_assign(&dx1);
    debug_assert_eq!(dx.rows, c.x.rows);
    dx
}

// ---------------------------------------------------------------------------
// pose head

pub struct HeadCache {
    g: Mat,
    c1pre: Mat,
    c1: Mat,
    c2pre: Mat,
    c2: Mat,
    spre: Mat,
    s: Mat,
    pooled: Mat,
    m1pre: Mat,
    m1: Mat,
    m2pre: Mat,
    m2: Mat,
}

/// Residual 1×1 block, masked mean pooling, 3-layer MLP.
pub fn head_forward(data: &[f64], h: &HeadSlots, g: Mat) -> (Vec<f64>, HeadCache) {
    let c1pre = h.conv[0].view(data).forward(&g);
    let c1 = c1pre.map(relu);
    let c2pre = h.conv[1].view(data).forward(&c1);
    let c2 = c2pre.map(relu);
    let mut spre = h.conv[2].view(data).forward(&c2);
    spre.add_assign(&g);
    let s = spre.map(relu);
    let pooled = Mat {
        rows: 1,
        cols: s.cols,
        data: s.mean_rows(),
    };
    let m1pre = h.mlp[0].view(data).forward(&pooled);
    let m1 = m1pre.map(relu);
    let m2pre = h.mlp[1].view(data).forward(&m1);
    let m2 = m2pre.map(relu);
    let out = h.mlp[2].view(data).forward(&m2).data;
    let cache = HeadCache {
        g,
        c1pre,
        c1,
        c2pre,
        c2,
        spre,
        s,
        pooled,
        m1pre,
        m1,
        m2pre,
        m2,
    };
    (out, cache)
}

fn relu_mask(d: &mut Mat, pre: &Mat) {
    for (g, &x) in d.data.iter_mut().zip(&pre.data) {
        *g *= relu_grad(x);
    }
}

pub fn head_backward(data: &[f64], h: &HeadSlots, c: &HeadCache, d_out: &[f64], grads: &mut [f64]) -> Mat {
    let d_out = Mat {
        rows: 1,
        cols: d_out.len(),
        data: d_out.to_vec(),
    };
    let mut d = h.mlp[2].view(data).backward(&c.m2, &d_out, &mut h.mlp[2].grad(grads));
    relu_mask(&mut d, &c.m2pre);
    let mut d = h.mlp[1].view(data).backward(&c.m1, &d, &mut h.mlp[1].grad(grads));
    relu_mask(&mut d, &c.m1pre);
    let d_pooled = h.mlp[0].view(data).backward(&c.pooled, &d, &mut h.mlp[0].grad(grads));
    let n = c.s.rows;
    let inv = 1.0 / n as f64;
    let mut d_spre = Mat::zeros(n, c.s.cols);
    for i in 0..n {
        for (j, g) in d_spre.row_mut(i).iter_mut().enumerate() {
            *g = d_pooled.data[j] * inv;
        }
    }
    relu_mask(&mut d_spre, &c.spre);
    let mut d = h.conv[2].view(data).backward(&c.c2, &d_spre, &mut h.conv[2].grad(grads));
    relu_mask(&mut d, &c.c2pre);
    let mut d = h.conv[1].view(data).backward(&c.c1, &d, &mut h.conv[1].grad(grads));
    relu_mask(&mut d, &c.c1pre);
    let mut dg = h.conv[0].view(data).backward(&c.g, &d, &mut h.conv[0].grad(grads));
    dg.add_assign(&d_spre);
    dg
}

// ---------------------------------------------------------------------------
// pose decoding

/// Raw head output: 4 homogeneous translation values then the rotation block.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseVector {
    pub values: Vec<f64>,
}

impl PoseVector {
    pub fn homogeneous(&self) -> Vector4<f64> {
        Vector4::from_column_slice(&self.values[..4])
    }

    pub fn to_pose(&self, repr: RotationRepr) -> Result<Pose> {
        decode_pose(&self.values, repr)
    }
}

pub fn decode_pose(values: &[f64], repr: RotationRepr) -> Result<Pose> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue("pose vector".into()));
    }
    let t = homog_to_translation(&Vector4::from_column_slice(&values[..4]));
    let r = match repr {
        RotationRepr::SixD => rot6d_to_matrix(&Rotation6D::from_slice(&values[4..10]))?,
        RotationRepr::NineD => rot9d_to_matrix(&Rotation9D::from_slice(&values[4..13]))?,
    };
    Ok(Pose::new(r, t))
}

/// Gradient of a scalar with respect to the raw pose vector, given its
/// gradients with respect to the decoded `R` and `t`.
pub fn decode_pose_backward(
    values: &[f64],
    repr: RotationRepr,
    grad_r: &Matrix3<f64>,
    grad_t: &Vector3<f64>,
) -> Result<Vec<f64>> {
    let mut out = homog_backward(&Vector4::from_column_slice(&values[..4]), grad_t)
        .as_slice()
        .to_vec();
    match repr {
        RotationRepr::SixD => {
            let (g1, g2) = rot6d_backward(&Rotation6D::from_slice(&values[4..10]), grad_r)?;
            out.extend(g1.iter().chain(g2.iter()));
        }
        RotationRepr::NineD => {
            let g = rot9d_backward(&Rotation9D::from_slice(&values[4..13]), grad_r)?;
            out.extend((0..9).map(|i| g[(i / 3, i % 3)]));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// full network

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache {
    raw3d: Mat,
    blocks: Vec<BlockCache>,
    heads: Vec<Option<HeadCache>>,
}

/// Head outputs of one forward pass. `outputs[i]` is `None` for heads that
/// were not evaluated (inference skips the auxiliary ones).
pub struct RawOutputs {
    pub outputs: Vec<Option<Vec<f64>>>,
}

fn encode(params: &ModelParams, input: &TokenInput) -> Mat {
    let mut x0 = params.layout.pe3d.view(&params.data).forward(&input.raw3d);
    x0.add_assign(&input.pe2d);
    x0
}

/// Runs the network on prepared tokens. With `all_heads`, every group's head
/// is evaluated; otherwise only the last. With `keep_cache`, intermediate
/// activations are retained for [`backward`].
pub fn forward_tokens(
    params: &ModelParams,
    input: &TokenInput,
    all_heads: bool,
    keep_cache: bool,
) -> (RawOutputs, Option<ForwardCache>) {
    let cfg = &params.config;
    let data = &params.data;
    let layout = &params.layout;
    let x0 = encode(params, input);
    let n_groups = cfg.n_groups();
    let mut y = x0.clone();
    let mut block_caches = Vec::new();
    let mut outputs = vec![None; n_groups];
    let mut head_caches: Vec<Option<HeadCache>> = (0..n_groups).map(|_| None).collect();
    for grp in 0..n_groups {
        let group_in = (cfg.enable_reattention && cfg.reattention_mode == ReattentionMode::GroupInput)
            .then(|| y.clone());
        for b in grp * cfg.group_size..(grp + 1) * cfg.group_size {
            let (out, cache) = block_forward(data, &layout.blocks[b], y, cfg.n_heads);
            y = out;
            if keep_cache {
                block_caches.push(cache);
            }
        }
        if cfg.enable_reattention {
            match &group_in {
                Some(gi) => y.add_assign(gi),
                None => y.add_assign(&x0),
            }
        }
        if all_heads || grp + 1 == n_groups {
            let (out, cache) = head_forward(data, &layout.heads[grp], y.clone());
            outputs[grp] = Some(out);
            if keep_cache {
                head_caches[grp] = Some(cache);
            }
        }
    }
    let cache = keep_cache.then(|| ForwardCache {
        raw3d: input.raw3d.clone(),
        blocks: block_caches,
        heads: head_caches,
    });
    (RawOutputs { outputs }, cache)
}

/// Accumulates `dL/dθ` into `grads` given `dL/d(head output)` per group
/// (`None` for heads that do not contribute).
pub fn backward(params: &ModelParams, cache: &ForwardCache, d_outputs: &[Option<Vec<f64>>], grads: &mut [f64]) {
    let cfg = &params.config;
    let data = &params.data;
    let layout = &params.layout;
    let n = cache.raw3d.rows;
    let d = cfg.d_model;
    let mut dx0 = Mat::zeros(n, d);
    let mut carry = Mat::zeros(n, d);
    for grp in (0..cfg.n_groups()).rev() {
        let mut dy = carry;
        if let (Some(dout), Some(hc)) = (&d_outputs[grp], &cache.heads[grp]) {
            dy.add_assign(&head_backward(data, &layout.heads[grp], hc, dout, grads));
        }
        let mut group_extra = None;
        if cfg.enable_reattention {
            match cfg.reattention_mode {
                ReattentionMode::EncodedInput => dx0.add_assign(&dy),
                ReattentionMode::GroupInput => group_extra = Some(dy.clone()),
            }
        }
        for b in (grp * cfg.group_size..(grp + 1) * cfg.group_size).rev() {
            dy = block_backward(data, &layout.blocks[b], &cache.blocks[b], &dy, grads, cfg.n_heads);
        }
        if let Some(extra) = group_extra {
            dy.add_assign(&extra);
        }
        carry = dy;
    }
    dx0.add_assign(&carry);
    let pe = layout.pe3d;
    pe.view(data).backward(&cache.raw3d, &dx0, &mut pe.grad(grads));
}

/// Predicted pose plus, in training mode, the intermediate heads' poses.
#[derive(Debug, Clone)]
pub struct RegressorOutput {
    pub pose: Pose,
    /// Poses of the earlier groups' heads, in group order; empty at inference.
    pub aux: Vec<Pose>,
}

/// Regresses a camera-to-scene pose from a scene coordinate map.
pub fn forward(
    scm: &SceneCoordinateMap,
    k: &Intrinsics,
    params: &ModelParams,
    training: bool,
) -> Result<RegressorOutput> {
    let input = prepare_input(scm, k, &params.config)?;
    let (raw, _) = forward_tokens(params, &input, training, false);
    let repr = params.config.rotation_repr;
    let mut poses = raw
        .outputs
        .iter()
        .flatten()
        .map(|v| decode_pose(v, repr))
        .collect::<Result<Vec<_>>>()?;
    let pose = poses.pop().expect("last head always runs");
    Ok(RegressorOutput { pose, aux: poses })
}

// ---------------------------------------------------------------------------
// grid-level entry points

fn gather_valid(tokens: &TokenGrid) -> (Vec<usize>, Mat) {
    let idx: Vec<usize> = (0..tokens.h * tokens.w).filter(|&i| tokens.mask[i]).collect();
    let mut m = Mat::zeros(idx.len(), tokens.d);
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from_slice(tokens.token(i));
    }
    (idx, m)
}

fn scatter_valid(template: &TokenGrid, idx: &[usize], m: &Mat) -> TokenGrid {
    let mut out = template.clone();
    for (r, &i) in idx.iter().enumerate() {
        out.token_mut(i).copy_from_slice(m.row(r));
    }
    out
}

fn check_width(tokens: &TokenGrid, params: &ModelParams) -> Result<()> {
    if tokens.d != params.config.d_model {
        return Err(Error::ShapeMismatch(format!(
            "tokens have {} channels, model expects {}",
            tokens.d, params.config.d_model
        )));
    }
    Ok(())
}

/// Applies block `index` to the valid tokens; masked tokens pass through unchanged.
pub fn transformer_block(tokens: &TokenGrid, params: &ModelParams, index: usize) -> Result<TokenGrid> {
    check_width(tokens, params)?;
    let slots = params
        .layout
        .blocks
        .get(index)
        .ok_or_else(|| Error::ShapeMismatch(format!("no block {index}")))?;
    let (idx, m) = gather_valid(tokens);
    if idx.is_empty() {
        return Ok(tokens.clone());
    }
    let (y, _) = block_forward(&params.data, slots, m, params.config.n_heads);
    Ok(scatter_valid(tokens, &idx, &y))
}

/// Runs all blocks with group residuals. Returns the final tokens and each
/// group's output.
pub fn reattention_stack(tokens: &TokenGrid, params: &ModelParams) -> Result<(TokenGrid, Vec<TokenGrid>)> {
    check_width(tokens, params)?;
    let cfg = &params.config;
    let (idx, x0) = gather_valid(tokens);
    if idx.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut y = x0.clone();
    let mut groups = Vec::new();
    for grp in 0..cfg.n_groups() {
        let group_in = y.clone();
        for b in grp * cfg.group_size..(grp + 1) * cfg.group_size {
            y = block_forward(&params.data, &params.layout.blocks[b], y, cfg.n_heads).0;
        }
        if cfg.enable_reattention {
            match cfg.reattention_mode {
                ReattentionMode::EncodedInput => y.add_assign(&x0),
                ReattentionMode::GroupInput => y.add_assign(&group_in),
            }
        }
        groups.push(scatter_valid(tokens, &idx, &y));
    }
    Ok((groups.last().cloned().expect("at least one group"), groups))
}

/// Pose head `index` over the valid tokens of `tokens`.
pub fn pose_head(tokens: &TokenGrid, params: &ModelParams, index: usize) -> Result<PoseVector> {
    check_width(tokens, params)?;
    let slots = params
        .layout
        .heads
        .get(index)
        .ok_or_else(|| Error::ShapeMismatch(format!("no pose head {index}")))?;
    let (idx, m) = gather_valid(tokens);
    if idx.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(PoseVector {
        values: head_forward(&params.data, slots, m).0,
    })
}
