//! The frequency-attention network forward model and its reverse-mode
//! gradients.
//!
//! Pipeline per snapshot: token embedding, single-head scaled dot-product
//! attention across the P frequency tokens, a ReLU feed-forward block, a
//! two-unit (real/imaginary) head per token, and linear synthesis of the
//! N-element snapshot through the grid manifold.
//!
//! Everything operates on batches internally — the whole batch shares one
//! GEMM per linear layer, while attention runs block-wise per example — and
//! the single-example public API is the batch-of-one case of the same code,
//! so gradient checks exercise the training path.
//!
//! Residual connections around the attention and feed-forward blocks and a
//! parameter-free layer norm are architecture options on [`NetConfig`];
//! defaults are residuals on, layer norm off.

use ndarray::{s, Array1, Array2, Axis};
use num_complex::Complex64;
use rand::Rng;

use crate::array::Snapshot;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tokens::{FrequencyGrid, TokenBatch};

const LN_EPSILON: f64 = 1e-5;

/// Tensor shapes of the network: token width F, embedding width, attention
/// (query/key/value) width, and feed-forward hidden width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub token_dim: usize,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub hidden_dim: usize,
}

impl NetDims {
    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0 || self.embed_dim == 0 || self.attn_dim == 0 || self.hidden_dim == 0
        {
            return Err(Error::invalid_argument(format!(
                "all network dims must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Architecture hyperparameters; widths plus the structural toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub hidden_dim: usize,
    pub residual: bool,
    pub layer_norm: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            embed_dim: 128,
            attn_dim: 64,
            hidden_dim: 256,
            residual: true,
            layer_norm: false,
        }
    }
}

impl NetConfig {
    pub fn dims(&self, token_dim: usize) -> NetDims {
        NetDims {
            token_dim,
            embed_dim: self.embed_dim,
            attn_dim: self.attn_dim,
            hidden_dim: self.hidden_dim,
        }
    }
}

/// Total number of trainable scalars for the given shapes.
pub fn param_count(dims: NetDims) -> usize {
    let NetDims {
        token_dim: f,
        embed_dim: dm,
        attn_dim: da,
        hidden_dim: h,
    } = dims;
    (f * dm + dm) + 3 * (dm * da + da) + (da * h + h) + (h * da + da) + (da * 2 + 2)
}

/// All trainable tensors. Also reused as the container for gradients and
/// Adam moment accumulators, which share these shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    dims: NetDims,
    seed: u64,
    pub w_embed: Array2<f64>,
    pub b_embed: Array1<f64>,
    pub w_query: Array2<f64>,
    pub b_query: Array1<f64>,
    pub w_key: Array2<f64>,
    pub b_key: Array1<f64>,
    pub w_value: Array2<f64>,
    pub b_value: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl NetParams {
    pub fn zeros(dims: NetDims) -> Result<Self> {
        dims.validate()?;
        let NetDims {
            token_dim: f,
            embed_dim: dm,
            attn_dim: da,
            hidden_dim: h,
        } = dims;
        Ok(NetParams {
            dims,
            seed: 0,
            w_embed: Array2::zeros((f, dm)),
            b_embed: Array1::zeros(dm),
            w_query: Array2::zeros((dm, da)),
            b_query: Array1::zeros(da),
            w_key: Array2::zeros((dm, da)),
            b_key: Array1::zeros(da),
            w_value: Array2::zeros((dm, da)),
            b_value: Array1::zeros(da),
            w_ff1: Array2::zeros((da, h)),
            b_ff1: Array1::zeros(h),
            w_ff2: Array2::zeros((h, da)),
            b_ff2: Array1::zeros(da),
            w_out: Array2::zeros((da, 2)),
            b_out: Array1::zeros(2),
        })
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    /// Seed the weights were initialized from; carried into checkpoints.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        param_count(self.dims)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tensors in the fixed container order, as flat row-major slices.
    pub fn tensor_slices(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_embed", self.w_embed.as_slice().expect("standard layout")),
            ("b_embed", self.b_embed.as_slice().expect("standard layout")),
            ("w_query", self.w_query.as_slice().expect("standard layout")),
            ("b_query", self.b_query.as_slice().expect("standard layout")),
            ("w_key", self.w_key.as_slice().expect("standard layout")),
            ("b_key", self.b_key.as_slice().expect("standard layout")),
            ("w_value", self.w_value.as_slice().expect("standard layout")),
            ("b_value", self.b_value.as_slice().expect("standard layout")),
            ("w_ff1", self.w_ff1.as_slice().expect("standard layout")),
            ("b_ff1", self.b_ff1.as_slice().expect("standard layout")),
            ("w_ff2", self.w_ff2.as_slice().expect("standard layout")),
            ("b_ff2", self.b_ff2.as_slice().expect("standard layout")),
            ("w_out", self.w_out.as_slice().expect("standard layout")),
            ("b_out", self.b_out.as_slice().expect("standard layout")),
        ]
    }

    /// Mutable view of the tensors, same order as [`NetParams::tensor_slices`].
    pub fn tensor_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_embed", self.w_embed.as_slice_mut().expect("standard layout")),
            ("b_embed", self.b_embed.as_slice_mut().expect("standard layout")),
            ("w_query", self.w_query.as_slice_mut().expect("standard layout")),
            ("b_query", self.b_query.as_slice_mut().expect("standard layout")),
            ("w_key", self.w_key.as_slice_mut().expect("standard layout")),
            ("b_key", self.b_key.as_slice_mut().expect("standard layout")),
            ("w_value", self.w_value.as_slice_mut().expect("standard layout")),
            ("b_value", self.b_value.as_slice_mut().expect("standard layout")),
            ("w_ff1", self.w_ff1.as_slice_mut().expect("standard layout")),
            ("b_ff1", self.b_ff1.as_slice_mut().expect("standard layout")),
            ("w_ff2", self.w_ff2.as_slice_mut().expect("standard layout")),
            ("b_ff2", self.b_ff2.as_slice_mut().expect("standard layout")),
            ("w_out", self.w_out.as_slice_mut().expect("standard layout")),
            ("b_out", self.b_out.as_slice_mut().expect("standard layout")),
        ]
    }

    /// Keeps every parameter exactly representable in 32-bit floats, the
    /// checkpoint payload precision, so save/load round-trips are
    /// bit-identical. Applied after init and after every optimizer step.
    pub(crate) fn quantize_to_f32(&mut self) {
        for (_, t) in self.tensor_slices_mut() {
            for v in t {
                *v = f64::from(*v as f32);
            }
        }
    }
}

/// Trunk weights uniform on `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, biases
/// zero, deterministic in the seed. Weight draws happen in container tensor
/// order, row-major within each tensor.
///
/// The output head starts at zero so the reconstruction starts at zero
/// instead of manifold-amplified noise; the head leaves zero on the first
/// optimizer step. This measurably shortens the early scale-correction
/// phase at the training scales this crate targets.
pub fn init_params(seed: u64, dims: NetDims) -> Result<NetParams> {
    dims.validate()?;
    let mut params = NetParams::zeros(dims)?;
    params.seed = seed;
    let mut rng = stream_rng(seed, &[crate::rng::stream::INIT]);
    let fill = |w: &mut Array2<f64>, rng: &mut rand_chacha::ChaCha8Rng| {
        let bound = 1.0 / (w.nrows() as f64).sqrt();
        for v in w.iter_mut() {
            *v = rng.random_range(-bound..=bound);
        }
    };
    fill(&mut params.w_embed, &mut rng);
    fill(&mut params.w_query, &mut rng);
    fill(&mut params.w_key, &mut rng);
    fill(&mut params.w_value, &mut rng);
    fill(&mut params.w_ff1, &mut rng);
    fill(&mut params.w_ff2, &mut rng);
    params.quantize_to_f32();
    Ok(params)
}

/// Per-bin complex spectrum estimate over the P grid angles.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub coeffs: Vec<Complex64>,
}

/// Reconstructed full snapshot, `grid_manifold * coeffs` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub snapshot: Snapshot,
}

fn softmax_rows_inplace(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Scaled dot-product attention over one token set. Returns the weighted
/// values and the score matrix; every score row sums to 1.
pub fn attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if q.dim() != k.dim() || q.dim() != v.dim() {
        return Err(Error::invalid_argument(format!(
            "attention shape mismatch: q {:?}, k {:?}, v {:?}",
            q.dim(),
            k.dim(),
            v.dim()
        )));
    }
    if q.ncols() == 0 || q.nrows() == 0 {
        return Err(Error::invalid_argument("attention inputs must be non-empty"));
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut scores = q.dot(&k.t());
    scores.mapv_inplace(|x| x * scale);
    softmax_rows_inplace(&mut scores);
    let out = scores.dot(v);
    Ok((out, scores))
}

/// Row-wise parameter-free layer norm. Returns normalized rows and the
/// per-row inverse standard deviation needed by the backward pass.
fn layer_norm_rows(x: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let cols = x.ncols() as f64;
    let mut y = x.clone();
    let mut inv_stds = Vec::with_capacity(x.nrows());
    for mut row in y.rows_mut() {
        let mean = row.sum() / cols;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols;
        let inv_std = 1.0 / (var + LN_EPSILON).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv_std;
        }
        inv_stds.push(inv_std);
    }
    (y, inv_stds)
}

fn layer_norm_backward(dy: &Array2<f64>, y: &Array2<f64>, inv_stds: &[f64]) -> Array2<f64> {
    let cols = y.ncols() as f64;
    let mut dx = dy.clone();
    for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
        let yr = y.row(r);
        let mean_dy = row.sum() / cols;
        let mean_dy_y = row.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / cols;
        for (v, yv) in row.iter_mut().zip(yr.iter()) {
            *v = inv_stds[r] * (*v - mean_dy - yv * mean_dy_y);
        }
    }
    dx
}

/// Intermediates of one (batched) forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    pub(crate) cfg: NetConfig,
    pub(crate) dims: NetDims,
    pub(crate) batch: usize,
    pub(crate) p_bins: usize,
    pub(crate) n_elements: usize,
    pub(crate) grid: FrequencyGrid,
    pub(crate) x: Array2<f64>,
    pub(crate) embed: Array2<f64>,
    pub(crate) q: Array2<f64>,
    pub(crate) k: Array2<f64>,
    pub(crate) v: Array2<f64>,
    pub(crate) scores: Array2<f64>,
    pub(crate) ff1_input: Array2<f64>,
    pub(crate) ln1_inv_std: Option<Vec<f64>>,
    pub(crate) hidden_relu: Array2<f64>,
    pub(crate) head_input: Array2<f64>,
    pub(crate) ln2_inv_std: Option<Vec<f64>>,
}

/// Forward pass over `batch` examples whose token rows are stacked into one
/// `(batch * P) x F` matrix. Returns per-token complex coefficients
/// (`batch * P`), reconstructed snapshots (`batch * N`), and the cache.
pub(crate) fn forward_batched(
    x: Array2<f64>,
    batch: usize,
    params: &NetParams,
    grid: &FrequencyGrid,
    cfg: &NetConfig,
) -> Result<(Vec<Complex64>, Vec<Complex64>, Cache)> {
    let dims = params.dims();
    if cfg.embed_dim != dims.embed_dim
        || cfg.attn_dim != dims.attn_dim
        || cfg.hidden_dim != dims.hidden_dim
    {
        return Err(Error::invalid_argument(format!(
            "config widths {cfg:?} disagree with parameter dims {dims:?}"
        )));
    }
    if x.ncols() != dims.token_dim {
        return Err(Error::invalid_argument(format!(
            "token width {} does not match network token_dim {}",
            x.ncols(),
            dims.token_dim
        )));
    }
    let p_bins = grid.p_bins();
    if batch == 0 || x.nrows() != batch * p_bins {
        return Err(Error::invalid_argument(format!(
            "expected {batch} x {p_bins} token rows, got {}",
            x.nrows()
        )));
    }
    let n = grid.n_elements();

    let embed = x.dot(&params.w_embed) + &params.b_embed;
    let q = embed.dot(&params.w_query) + &params.b_query;
    let k = embed.dot(&params.w_key) + &params.b_key;
    let v = embed.dot(&params.w_value) + &params.b_value;

    let scale = 1.0 / (dims.attn_dim as f64).sqrt();
    let mut scores = Array2::<f64>::zeros((batch * p_bins, p_bins));
    let mut attn_out = Array2::<f64>::zeros((batch * p_bins, dims.attn_dim));
    for i in 0..batch {
        let rows = i * p_bins..(i + 1) * p_bins;
        let qb = q.slice(s![rows.clone(), ..]);
        let kb = k.slice(s![rows.clone(), ..]);
        let vb = v.slice(s![rows.clone(), ..]);
        let mut sb = qb.dot(&kb.t());
        sb.mapv_inplace(|x| x * scale);
        softmax_rows_inplace(&mut sb);
        attn_out.slice_mut(s![rows.clone(), ..]).assign(&sb.dot(&vb));
        scores.slice_mut(s![rows, ..]).assign(&sb);
    }

    let z1 = if cfg.residual { attn_out + &v } else { attn_out };
    let (ff1_input, ln1_inv_std) = if cfg.layer_norm {
        let (y, stds) = layer_norm_rows(&z1);
        (y, Some(stds))
    } else {
        (z1.clone(), None)
    };

    let mut hidden = ff1_input.dot(&params.w_ff1) + &params.b_ff1;
    hidden.mapv_inplace(|x| x.max(0.0));
    let ff_out = hidden.dot(&params.w_ff2) + &params.b_ff2;
    let z2 = if cfg.residual { ff_out + &z1 } else { ff_out };
    let (head_input, ln2_inv_std) = if cfg.layer_norm {
        let (y, stds) = layer_norm_rows(&z2);
        (y, Some(stds))
    } else {
        (z2, None)
    };

    let out = head_input.dot(&params.w_out) + &params.b_out;
    let mut s_hat = Vec::with_capacity(batch * p_bins);
    for r in 0..batch * p_bins {
        s_hat.push(Complex64::new(out[[r, 0]], out[[r, 1]]));
    }

    let mut y_hat = vec![Complex64::new(0.0, 0.0); batch * n];
    for i in 0..batch {
        for p in 0..p_bins {
            let coeff = s_hat[i * p_bins + p];
            let steer = grid.steering(p);
            for (e, a) in steer.iter().enumerate() {
                y_hat[i * n + e] += a * coeff;
            }
        }
    }

    let cache = Cache {
        cfg: *cfg,
        dims,
        batch,
        p_bins,
        n_elements: n,
        grid: grid.clone(),
        x,
        embed,
        q,
        k,
        v,
        scores,
        ff1_input,
        ln1_inv_std,
        hidden_relu: hidden,
        head_input,
        ln2_inv_std,
    };
    Ok((s_hat, y_hat, cache))
}

/// Full forward pass for a single token batch: spectrum coefficients,
/// reconstructed snapshot, and the cache for [`backward`].
pub fn forward(
    tokens: &TokenBatch,
    params: &NetParams,
    grid: &FrequencyGrid,
    cfg: &NetConfig,
) -> Result<(SpectrumEstimate, Reconstruction, Cache)> {
    if tokens.p_bins() != grid.p_bins() {
        return Err(Error::invalid_argument(format!(
            "token batch has {} rows but grid has {} bins",
            tokens.p_bins(),
            grid.p_bins()
        )));
    }
    let (s_hat, y_hat, cache) = forward_batched(tokens.features.clone(), 1, params, grid, cfg)?;
    Ok((
        SpectrumEstimate { coeffs: s_hat },
        Reconstruction {
            snapshot: Snapshot::new(y_hat),
        },
        cache,
    ))
}

/// Reverse-mode gradients of every tensor in [`NetParams`] for a batch,
/// given the gradient of the loss with respect to each reconstructed
/// snapshot entry (length `batch * N`, real and imaginary partials packed
/// as a complex number). Gradients are summed over the batch.
pub(crate) fn backward_batched(
    cache: &Cache,
    params: &NetParams,
    grad_recon: &[Complex64],
) -> Result<NetParams> {
    if params.dims() != cache.dims {
        return Err(Error::invalid_state(format!(
            "cache was built for dims {:?}, params have {:?}",
            cache.dims,
            params.dims()
        )));
    }
    if grad_recon.len() != cache.batch * cache.n_elements {
        return Err(Error::invalid_state(format!(
            "gradient length {} does not match cached batch {} x {} elements",
            grad_recon.len(),
            cache.batch,
            cache.n_elements
        )));
    }
    let cfg = &cache.cfg;
    let (batch, p_bins, n) = (cache.batch, cache.p_bins, cache.n_elements);
    let mut grads = NetParams::zeros(cache.dims)?;

    // adjoint of the manifold synthesis: d s_p = sum_n conj(a_p[n]) g_n
    let mut d_out = Array2::<f64>::zeros((batch * p_bins, 2));
    for i in 0..batch {
        let g = &grad_recon[i * n..(i + 1) * n];
        for p in 0..p_bins {
            let steer = cache.grid.steering(p);
            let mut ds = Complex64::new(0.0, 0.0);
            for (e, a) in steer.iter().enumerate() {
                ds += a.conj() * g[e];
            }
            d_out[[i * p_bins + p, 0]] = ds.re;
            d_out[[i * p_bins + p, 1]] = ds.im;
        }
    }

    grads.w_out = cache.head_input.t().dot(&d_out);
    grads.b_out = d_out.sum_axis(Axis(0));
    let d_head_input = d_out.dot(&params.w_out.t());
    let d_z2 = match (&cache.ln2_inv_std, cfg.layer_norm) {
        (Some(stds), true) => layer_norm_backward(&d_head_input, &cache.head_input, stds),
        _ => d_head_input,
    };

    grads.w_ff2 = cache.hidden_relu.t().dot(&d_z2);
    grads.b_ff2 = d_z2.sum_axis(Axis(0));
    let mut d_hidden = d_z2.dot(&params.w_ff2.t());
    ndarray::Zip::from(&mut d_hidden)
        .and(&cache.hidden_relu)
        .for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });

    grads.w_ff1 = cache.ff1_input.t().dot(&d_hidden);
    grads.b_ff1 = d_hidden.sum_axis(Axis(0));
    let d_ff1_input = d_hidden.dot(&params.w_ff1.t());
    let mut d_z1 = match (&cache.ln1_inv_std, cfg.layer_norm) {
        (Some(stds), true) => layer_norm_backward(&d_ff1_input, &cache.ff1_input, stds),
        _ => d_ff1_input,
    };
    if cfg.residual {
        d_z1 += &d_z2;
    }

    let scale = 1.0 / (cache.dims.attn_dim as f64).sqrt();
    let mut d_q = Array2::<f64>::zeros(cache.q.dim());
    let mut d_k = Array2::<f64>::zeros(cache.k.dim());
    let mut d_v = Array2::<f64>::zeros(cache.v.dim());
    for i in 0..batch {
        let rows = i * p_bins..(i + 1) * p_bins;
        let d_attn = d_z1.slice(s![rows.clone(), ..]);
        let sb = cache.scores.slice(s![rows.clone(), ..]);
        let vb = cache.v.slice(s![rows.clone(), ..]);
        let qb = cache.q.slice(s![rows.clone(), ..]);
        let kb = cache.k.slice(s![rows.clone(), ..]);

        let mut d_vb = sb.t().dot(&d_attn);
        if cfg.residual {
            d_vb += &d_attn;
        }
        let d_scores = d_attn.dot(&vb.t());
        // softmax Jacobian, row by row
        let mut d_pre = d_scores;
        for (r, mut row) in d_pre.rows_mut().into_iter().enumerate() {
            let srow = sb.row(r);
            let inner: f64 = row.iter().zip(srow.iter()).map(|(a, b)| a * b).sum();
            for (dv, &sv) in row.iter_mut().zip(srow.iter()) {
                *dv = sv * (*dv - inner);
            }
        }
        d_pre.mapv_inplace(|x| x * scale);
        d_q.slice_mut(s![rows.clone(), ..]).assign(&d_pre.dot(&kb));
        d_k.slice_mut(s![rows.clone(), ..]).assign(&d_pre.t().dot(&qb));
        d_v.slice_mut(s![rows, ..]).assign(&d_vb);
    }

    grads.w_query = cache.embed.t().dot(&d_q);
    grads.b_query = d_q.sum_axis(Axis(0));
    grads.w_key = cache.embed.t().dot(&d_k);
    grads.b_key = d_k.sum_axis(Axis(0));
    grads.w_value = cache.embed.t().dot(&d_v);
    grads.b_value = d_v.sum_axis(Axis(0));

    let mut d_embed = d_q.dot(&params.w_query.t());
    d_embed += &d_k.dot(&params.w_key.t());
    d_embed += &d_v.dot(&params.w_value.t());

    grads.w_embed = cache.x.t().dot(&d_embed);
    grads.b_embed = d_embed.sum_axis(Axis(0));
    Ok(grads)
}

/// Single-example gradients; `grad_recon` is the loss gradient with respect
/// to the reconstructed snapshot.
pub fn backward(
    cache: &Cache,
    params: &NetParams,
    grad_recon: &[Complex64],
) -> Result<NetParams> {
    backward_batched(cache, params, grad_recon)
}

// --- weight container ----------------------------------------------------
//
// Layout (little-endian): magic "FANW", version u32, token_dim u32,
// embed_dim u32, attn_dim u32, hidden_dim u32, init seed u64, then every
// tensor in the order of `tensor_slices` as row-major f32 values.

const WEIGHT_MAGIC: &[u8; 4] = b"FANW";
const WEIGHT_VERSION: u32 = 1;

/// Serializes parameters into the versioned weight container.
pub fn serialize_params(params: &NetParams) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(32 + 4 * params.len());
    bytes.extend_from_slice(WEIGHT_MAGIC);
    bytes.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    for dim in [
        params.dims.token_dim,
        params.dims.embed_dim,
        params.dims.attn_dim,
        params.dims.hidden_dim,
    ] {
        bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    bytes.extend_from_slice(&params.seed.to_le_bytes());
    for (_, tensor) in params.tensor_slices() {
        for &v in tensor {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    bytes
}

fn take<'a>(bytes: &'a [u8], offset: &mut usize, len: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < *offset + len {
        return Err(Error::format(format!(
            "truncated container while reading {what}"
        )));
    }
    let slice = &bytes[*offset..*offset + len];
    *offset += len;
    Ok(slice)
}

/// Parses a weight container; the inverse of [`serialize_params`].
pub fn deserialize_params(bytes: &[u8]) -> Result<NetParams> {
    let mut offset = 0usize;
    let magic = take(bytes, &mut offset, 4, "magic")?;
    if magic != WEIGHT_MAGIC {
        return Err(Error::format(format!(
            "bad magic {magic:?}, expected {WEIGHT_MAGIC:?}"
        )));
    }
    let version = u32::from_le_bytes(take(bytes, &mut offset, 4, "version")?.try_into().unwrap());
    if version != WEIGHT_VERSION {
        return Err(Error::format(format!(
            "unsupported container version {version}"
        )));
    }
    let dim = |what: &str, offset: &mut usize| -> Result<usize> {
        let v = u32::from_le_bytes(take(bytes, offset, 4, what)?.try_into().unwrap());
        if v == 0 {
            return Err(Error::format(format!("header dim {what} is zero")));
        }
        Ok(v as usize)
    };
    let dims = NetDims {
        token_dim: dim("token_dim", &mut offset)?,
        embed_dim: dim("embed_dim", &mut offset)?,
        attn_dim: dim("attn_dim", &mut offset)?,
        hidden_dim: dim("hidden_dim", &mut offset)?,
    };
    let seed = u64::from_le_bytes(take(bytes, &mut offset, 8, "seed")?.try_into().unwrap());

    let mut params = NetParams::zeros(dims)?;
    params.seed = seed;
    for (name, tensor) in params.tensor_slices_mut() {
        let raw = take(bytes, &mut offset, 4 * tensor.len(), name)?;
        for (v, chunk) in tensor.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f64::from(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    if offset != bytes.len() {
        return Err(Error::format(format!(
            "payload size disagrees with header dims: {} trailing bytes",
            bytes.len() - offset
        )));
    }
    Ok(params)
}

/// Writes a checkpoint file.
pub fn save_params(params: &NetParams, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, serialize_params(params))?;
    Ok(())
}

/// Reads a checkpoint file.
pub fn load_params(path: &std::path::Path) -> Result<NetParams> {
    let bytes = std::fs::read(path)?;
    deserialize_params(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{ArrayGeometry, Span};
    use crate::sparse::SparseMask;
    use crate::tokens::{build_grid, token_width, tokenize, TokenConfig};
    use ndarray::array;

    fn small_dims() -> NetDims {
        NetDims {
            token_dim: 17,
            embed_dim: 8,
            attn_dim: 4,
            hidden_dim: 8,
        }
    }

    fn randomized_head(mut params: NetParams, seed: u64) -> NetParams {
        let mut rng = stream_rng(seed, &[51]);
        for (name, t) in params.tensor_slices_mut() {
            if name == "w_out" || name == "b_out" {
                for v in t {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        params.quantize_to_f32();
        params
    }

    fn small_setup() -> (FrequencyGrid, TokenBatch, NetConfig) {
        let g = ArrayGeometry::ula(4).unwrap();
        let grid = build_grid(Span { lo: -30.0, hi: 30.0 }, 5, &g).unwrap();
        let mut rng = stream_rng(12, &[0]);
        let targets = crate::array::sample_targets(
            &mut rng,
            Span { lo: -30.0, hi: 30.0 },
            2,
            Span { lo: 0.5, hi: 1.0 },
        )
        .unwrap();
        let clean = crate::array::synthesize_clean(&g, &targets);
        let mask = crate::sparse::random_mask(&mut rng, 4, 1).unwrap();
        let noisy = crate::sparse::add_noise(&clean, 20.0, &mut rng).unwrap();
        let sparse = crate::sparse::apply_mask(&noisy, &mask).unwrap();
        let tokens = tokenize(&sparse, &mask, &grid, &TokenConfig::default()).unwrap();
        let cfg = NetConfig {
            embed_dim: 8,
            attn_dim: 4,
            hidden_dim: 8,
            residual: true,
            layer_norm: false,
        };
        (grid, tokens, cfg)
    }

    #[test]
    fn param_count_matches_shape_arithmetic() {
        let dims = NetDims {
            token_dim: 81,
            embed_dim: 128,
            attn_dim: 64,
            hidden_dim: 256,
        };
        let expected = 81 * 128 + 128
            + 3 * (128 * 64 + 64)
            + 64 * 256 + 256
            + 256 * 64 + 64
            + 64 * 2 + 2;
        assert_eq!(param_count(dims), expected);
        let p = init_params(1, dims).unwrap();
        let stored: usize = p.tensor_slices().iter().map(|(_, t)| t.len()).sum();
        assert_eq!(stored, expected);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let dims = small_dims();
        let a = init_params(99, dims).unwrap();
        let b = init_params(99, dims).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(100, dims).unwrap());
        let bound = 1.0 / (dims.token_dim as f64).sqrt();
        for v in a.w_embed.iter() {
            assert!(v.abs() <= bound + 1e-7);
        }
        for v in a.b_embed.iter() {
            assert_eq!(*v, 0.0);
        }
        // the head starts at zero
        assert!(a.w_out.iter().all(|&v| v == 0.0));
        assert!(a.b_out.iter().all(|&v| v == 0.0));
        assert!(init_params(1, NetDims { token_dim: 0, ..dims }).is_err());
    }

    #[test]
    fn attention_with_identical_rows_averages_values() {
        let q = Array2::from_shape_fn((4, 3), |(_, j)| 0.3 * j as f64 + 0.1);
        let k = q.clone();
        let v = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let (out, scores) = attention(&q, &k, &v).unwrap();
        for row in scores.rows() {
            for s in row {
                assert!((s - 0.25).abs() < 1e-15);
            }
        }
        for r in 0..4 {
            for c in 0..3 {
                let mean = (0..4).map(|i| v[[i, c]]).sum::<f64>() / 4.0;
                assert!((out[[r, c]] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_matches_hand_computed_softmax() {
        // 3 tokens, d = 2; compare row 0 against straight-line arithmetic
        let q = array![[2.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let k = array![[3.0, 0.0], [0.0, 3.0], [-3.0, 0.0]];
        let v = array![[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]];
        let (out, scores) = attention(&q, &k, &v).unwrap();

        let scale = 1.0 / 2f64.sqrt();
        let pre = [6.0 * scale, 0.0, -6.0 * scale];
        let m = pre[0];
        let exps = [(pre[0] - m).exp(), (pre[1] - m).exp(), (pre[2] - m).exp()];
        let sum = exps[0] + exps[1] + exps[2];
        for j in 0..3 {
            assert!((scores[[0, j]] - exps[j] / sum).abs() < 1e-15);
        }
        let want0 = [
            (exps[0] * 1.0 + exps[1] * 0.0 + exps[2] * 5.0) / sum,
            (exps[0] * 0.0 + exps[1] * 1.0 + exps[2] * 5.0) / sum,
        ];
        assert!((out[[0, 0]] - want0[0]).abs() < 1e-15);
        assert!((out[[0, 1]] - want0[1]).abs() < 1e-15);
    }

    #[test]
    fn attention_saturates_toward_aligned_key() {
        let q = array![[40.0, 0.0]];
        let k = array![[40.0, 0.0]];
        let v = array![[7.0, -3.0]];
        let big_k = ndarray::concatenate![
            Axis(0),
            k,
            array![[0.0, 40.0], [-40.0, 0.0]]
        ];
        let big_v = ndarray::concatenate![Axis(0), v, array![[0.0, 0.0], [100.0, 100.0]]];
        let big_q = ndarray::concatenate![Axis(0), q, array![[0.0, 40.0], [-40.0, 0.0]]];
        let (out, _) = attention(&big_q, &big_k, &big_v).unwrap();
        assert!((out[[0, 0]] - 7.0).abs() < 1e-6);
        assert!((out[[0, 1]] + 3.0).abs() < 1e-6);
    }

    #[test]
    fn attention_is_linear_in_values() {
        let q = Array2::from_shape_fn((5, 4), |(i, j)| ((i + j) as f64).sin());
        let k = Array2::from_shape_fn((5, 4), |(i, j)| ((2 * i + j) as f64).cos());
        let v = Array2::zeros((5, 4));
        let (out, _) = attention(&q, &k, &v).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn attention_rejects_shape_mismatch() {
        let q = Array2::<f64>::zeros((3, 2));
        let k = Array2::<f64>::zeros((4, 2));
        assert!(attention(&q, &k, &q).is_err());
    }

    #[test]
    fn zero_params_give_bias_driven_constant_output() {
        let (grid, tokens, cfg) = small_setup();
        let mut params = NetParams::zeros(cfg.dims(tokens.width())).unwrap();
        params.b_out = array![0.3, -0.2];
        let (spec, recon, _) = forward(&tokens, &params, &grid, &cfg).unwrap();
        for c in &spec.coeffs {
            assert_eq!(*c, Complex64::new(0.3, -0.2));
        }
        // reconstruction equals manifold times the constant spectrum
        for e in 0..grid.n_elements() {
            let mut want = Complex64::new(0.0, 0.0);
            for p in 0..grid.p_bins() {
                want += grid.steering(p)[e] * Complex64::new(0.3, -0.2);
            }
            assert!((recon.snapshot.samples[e] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let (grid, tokens, cfg) = small_setup();
        let params = randomized_head(init_params(5, cfg.dims(tokens.width())).unwrap(), 5);
        let (s1, r1, _) = forward(&tokens, &params, &grid, &cfg).unwrap();
        let (s2, r2, _) = forward(&tokens, &params, &grid, &cfg).unwrap();
        assert_eq!(s1.coeffs.len(), grid.p_bins());
        assert_eq!(r1.snapshot.len(), grid.n_elements());
        assert_eq!(s1.coeffs, s2.coeffs);
        assert_eq!(r1.snapshot, r2.snapshot);
    }

    #[test]
    fn forward_reconstruction_is_manifold_times_spectrum() {
        let (grid, tokens, cfg) = small_setup();
        let params = randomized_head(init_params(5, cfg.dims(tokens.width())).unwrap(), 5);
        let (spec, recon, _) = forward(&tokens, &params, &grid, &cfg).unwrap();
        for e in 0..grid.n_elements() {
            let mut want = Complex64::new(0.0, 0.0);
            for (p, c) in spec.coeffs.iter().enumerate() {
                want += grid.steering(p)[e] * c;
            }
            assert!((recon.snapshot.samples[e] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn spectrum_is_permutation_equivariant_over_tokens() {
        let (grid, tokens, cfg) = small_setup();
        let params = randomized_head(init_params(21, cfg.dims(tokens.width())).unwrap(), 21);
        let (spec, _, _) = forward(&tokens, &params, &grid, &cfg).unwrap();

        let p = grid.p_bins();
        let perm: Vec<usize> = (0..p).map(|i| (i + 2) % p).collect();
        let mut permuted = tokens.clone();
        for (dst, &src) in perm.iter().enumerate() {
            permuted
                .features
                .row_mut(dst)
                .assign(&tokens.features.row(src));
        }
        let (spec_p, _, _) = forward(&permuted, &params, &grid, &cfg).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            let diff = (spec_p.coeffs[dst] - spec.coeffs[src]).norm();
            assert!(diff < 1e-12, "token {src} -> {dst}: diff {diff}");
        }
    }

    #[test]
    fn forward_runs_with_layer_norm_and_without_residual() {
        let (grid, tokens, _) = small_setup();
        for (residual, layer_norm) in [(false, false), (false, true), (true, true)] {
            let cfg = NetConfig {
                embed_dim: 8,
                attn_dim: 4,
                hidden_dim: 8,
                residual,
                layer_norm,
            };
            let params = randomized_head(init_params(33, cfg.dims(tokens.width())).unwrap(), 33);
            let (spec, recon, _) = forward(&tokens, &params, &grid, &cfg).unwrap();
            assert!(spec.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()));
            assert!(recon.snapshot.samples.iter().all(|c| c.norm().is_finite()));
        }
    }

    #[test]
    fn forward_rejects_mismatched_widths() {
        let (grid, tokens, cfg) = small_setup();
        let params = init_params(
            5,
            NetDims {
                token_dim: tokens.width() + 1,
                embed_dim: 8,
                attn_dim: 4,
                hidden_dim: 8,
            },
        )
        .unwrap();
        assert!(forward(&tokens, &params, &grid, &cfg).is_err());
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let (grid, tokens, cfg) = small_setup();
        let params = init_params(5, cfg.dims(tokens.width())).unwrap();
        let (_, _, cache) = forward(&tokens, &params, &grid, &cfg).unwrap();
        let other = init_params(
            5,
            NetDims {
                token_dim: tokens.width(),
                embed_dim: 16,
                attn_dim: 4,
                hidden_dim: 8,
            },
        )
        .unwrap();
        let g = vec![Complex64::new(0.0, 0.0); grid.n_elements()];
        assert!(matches!(
            backward(&cache, &other, &g),
            Err(Error::InvalidState(_))
        ));
        let short = vec![Complex64::new(0.0, 0.0); 2];
        assert!(backward(&cache, &params, &short).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let (grid, tokens, cfg) = small_setup();
        let params = init_params(5, cfg.dims(tokens.width())).unwrap();
        let (_, _, cache) = forward(&tokens, &params, &grid, &cfg).unwrap();
        let g = vec![Complex64::new(0.0, 0.0); grid.n_elements()];
        let grads = backward(&cache, &params, &g).unwrap();
        for (_, t) in grads.tensor_slices() {
            assert!(t.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn container_round_trips_bit_exactly() {
        let dims = small_dims();
        let params = init_params(1234, dims).unwrap();
        let bytes = serialize_params(&params);
        let restored = deserialize_params(&bytes).unwrap();
        assert_eq!(params, restored);
        assert_eq!(restored.seed(), 1234);
        assert_eq!(serialize_params(&restored), bytes);
    }

    #[test]
    fn container_rejects_corruption() {
        let params = init_params(7, small_dims()).unwrap();
        let bytes = serialize_params(&params);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            deserialize_params(&bad_magic),
            Err(Error::Format(_))
        ));

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(deserialize_params(&bad_version).is_err());

        // truncation inside the first feed-forward tensor names it
        let header = 32;
        let before_ff1 = header
            + 4 * (17 * 8 + 8 + 3 * (8 * 4 + 4));
        let truncated = &bytes[..before_ff1 + 10];
        match deserialize_params(truncated) {
            Err(Error::Format(msg)) => assert!(msg.contains("w_ff1"), "message: {msg}"),
            other => panic!("expected format error, got {other:?}"),
        }

        let mut trailing = bytes.clone();
        trailing.extend_from_slice(&[0, 0, 0, 0]);
        match deserialize_params(&trailing) {
            Err(Error::Format(msg)) => assert!(msg.contains("trailing"), "message: {msg}"),
            other => panic!("expected format error, got {other:?}"),
        }

        let mut zero_dim = bytes;
        zero_dim[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(deserialize_params(&zero_dim).is_err());
    }

    #[test]
    fn width_of_default_network_matches_token_layout() {
        let cfg = NetConfig::default();
        let dims = cfg.dims(token_width(20, &TokenConfig::default()));
        assert_eq!(dims.token_dim, 81);
        let mask = SparseMask::all_observed(20).unwrap();
        assert_eq!(mask.len(), 20);
    }
}
