//! Reusable neural components on top of the tape engine: Fourier positional
//! encoding, local self-attention, cross-attention, adaptive feature
//! modulation, and MLP heads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::numerics::{BoundParams, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use crate::Result;

/// Shared block hyperparameters.
#[derive(Clone, Debug)]
pub struct BlockConfig {
    /// Token width d.
    pub token_dim: usize,
    pub num_heads: usize,
    /// k-nearest neighborhood size for local attention (including self).
    pub neighborhood: usize,
    /// Fourier band count B.
    pub fourier_bands: usize,
    /// Hidden width of feed-forward sublayers.
    pub hidden: usize,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.token_dim % self.num_heads != 0 {
            return Err(Error::Argument(format!(
                "token_dim {} not divisible by {} heads",
                self.token_dim, self.num_heads
            )));
        }
        if self.fourier_bands == 0 {
            return Err(Error::Argument("fourier_bands must be >= 1".into()));
        }
        Ok(())
    }
}

/// `[sin(2^j pi x), cos(2^j pi x)]` for `j = 0..B-1` per axis: all sine
/// terms first (axis-major, then band), then all cosine terms.
pub fn fourier_encode<T: Scalar>(coords: &[T], bands: usize) -> Vec<T> {
    let pi: T = Scalar::from_f64(std::f64::consts::PI);
    let mut out = Vec::with_capacity(2 * bands * coords.len());
    for &x in coords {
        for j in 0..bands {
            let f: T = Scalar::from_f64((1u64 << j) as f64);
            out.push((f * pi * x).sin());
        }
    }
    for &x in coords {
        for j in 0..bands {
            let f: T = Scalar::from_f64((1u64 << j) as f64);
            out.push((f * pi * x).cos());
        }
    }
    out
}

/// Fourier-encode every row of a coordinate matrix.
pub fn fourier_encode_rows<T: Scalar>(coords: &Tensor<T>, bands: usize) -> Result<Tensor<T>> {
    let width = fourier_width(coords.cols(), bands);
    let mut data = Vec::with_capacity(coords.rows() * width);
    for r in 0..coords.rows() {
        data.extend(fourier_encode(coords.row(r), bands));
    }
    Tensor::new(coords.rows(), width, data)
}

/// Output width per point for `dim` axes and `bands` bands.
pub fn fourier_width(dim: usize, bands: usize) -> usize {
    2 * bands * dim
}

/// k-nearest-neighbor index lists (self included), squared Euclidean
/// distance, ties broken by lowest index.
pub fn knn_indices<T: Scalar>(centroids: &Tensor<T>, k: usize) -> Result<Vec<Vec<usize>>> {
    let m = centroids.rows();
    if k == 0 || k > m {
        return Err(Error::Argument(format!("k={} of {} centroids", k, m)));
    }
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let pi = centroids.row(i);
        let mut dists: Vec<(T, usize)> = (0..m)
            .map(|j| {
                let d = pi
                    .iter()
                    .zip(centroids.row(j))
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .fold(T::zero(), |acc, v| acc + v);
                (d, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out.push(dists.into_iter().take(k).map(|(_, j)| j).collect());
    }
    Ok(out)
}

/// How the local-attention neighborhood restriction is executed. Both paths
/// compute the same function; the dual implementation is kept as an oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborhoodImpl {
    /// Dense attention with additive `-1e30` mask outside the neighborhood.
    Masked,
    /// Per-token gather of neighbor keys/values.
    Gather,
}

/// Seeded uniform Xavier-style initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform<T: Scalar>(&mut self, rows: usize, cols: usize, limit: f64) -> Tensor<T> {
        let data = (0..rows * cols)
            .map(|_| Scalar::from_f64((self.rng.gen::<f64>() * 2.0 - 1.0) * limit))
            .collect();
        Tensor::new(rows, cols, data).expect("sized data")
    }

    pub fn xavier<T: Scalar>(&mut self, rows: usize, cols: usize) -> Tensor<T> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(rows, cols, limit)
    }
}

/// Dense layer `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = store.add(&format!("{name}.w"), init.xavier(in_dim, out_dim));
        let b = store.add(&format!("{name}.b"), Tensor::zeros(1, out_dim));
        Self { w, b }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        x: Var,
    ) -> Result<Var> {
        let h = tape.matmul(x, params.var(self.w))?;
        tape.add_row(h, params.var(self.b))
    }
}

/// Two-layer GELU MLP.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
    ) -> Self {
        Self {
            l1: Linear::init(store, init, &format!("{name}.l1"), in_dim, hidden),
            l2: Linear::init(store, init, &format!("{name}.l2"), hidden, out_dim),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        x: Var,
    ) -> Result<Var> {
        let h = self.l1.forward(tape, params, x)?;
        let h = tape.gelu(h)?;
        self.l2.forward(tape, params, h)
    }
}

/// Layer normalization with learned per-dimension scale and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(&format!("{name}.gamma"), Tensor::full(1, dim, T::one())),
            beta: store.add(&format!("{name}.beta"), Tensor::zeros(1, dim)),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        x: Var,
    ) -> Result<Var> {
        let n = tape.layer_norm(x)?;
        let s = tape.mul_row(n, params.var(self.gamma))?;
        tape.add_row(s, params.var(self.beta))
    }
}

/// Multi-head scaled dot-product attention with an output projection.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        Self::init_kv(store, init, name, dim, dim, heads)
    }

    /// Attention whose key/value stream has its own input width `kv_dim`,
    /// projected into the query stream's `dim`.
    pub fn init_kv<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        kv_dim: usize,
        heads: usize,
    ) -> Self {
        Self {
            wq: Linear::init(store, init, &format!("{name}.wq"), dim, dim),
            wk: Linear::init(store, init, &format!("{name}.wk"), kv_dim, dim),
            wv: Linear::init(store, init, &format!("{name}.wv"), kv_dim, dim),
            wo: Linear::init(store, init, &format!("{name}.wo"), dim, dim),
            heads,
        }
    }

    /// Attention of `q_in` rows over `kv_in` rows. `mask` (if given) is
    /// added to every head's score matrix before the softmax.
    pub fn attend<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        q_in: Var,
        kv_in: Var,
        mask: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let d = tape.value(q_in).cols();
        let kv_dim = tape.value(params.var(self.wk.w)).rows();
        if tape.value(kv_in).cols() != kv_dim {
            return Err(Error::Shape(format!(
                "attention dim mismatch: {} vs {}",
                kv_dim,
                tape.value(kv_in).cols()
            )));
        }
        let dh = d / self.heads;
        let scale: T = Scalar::from_f64(1.0 / (dh as f64).sqrt());
        let q = self.wq.forward(tape, params, q_in)?;
        let k = self.wk.forward(tape, params, kv_in)?;
        let v = self.wv.forward(tape, params, kv_in)?;
        let mask_var = match mask {
            Some(m) => Some(tape.constant(m.clone())),
            None => None,
        };
        let mut head_outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (s, e) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, s, e)?;
            let kh = tape.slice_cols(k, s, e)?;
            let vh = tape.slice_cols(v, s, e)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let scores = match mask_var {
                Some(m) => tape.add(scores, m)?,
                None => scores,
            };
            let att = tape.softmax_rows(scores)?;
            head_outs.push(tape.matmul(att, vh)?);
        }
        let merged = head_outs
            .into_iter()
            .try_fold(None::<Var>, |acc, h| -> Result<Option<Var>> {
                Ok(Some(match acc {
                    None => h,
                    Some(a) => tape.concat_cols(a, h)?,
                }))
            })?
            .expect("at least one head");
        self.wo.forward(tape, params, merged)
    }

    /// Gather-based neighborhood attention: token `i` attends only over
    /// `neighbors[i]`.
    pub fn attend_gather<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        x: Var,
        neighbors: &[Vec<usize>],
    ) -> Result<Var> {
        let d = tape.value(x).cols();
        let dh = d / self.heads;
        let scale: T = Scalar::from_f64(1.0 / (dh as f64).sqrt());
        let q = self.wq.forward(tape, params, x)?;
        let k = self.wk.forward(tape, params, x)?;
        let v = self.wv.forward(tape, params, x)?;
        let m = tape.value(x).rows();
        let mut head_outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (s, e) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, s, e)?;
            let kh = tape.slice_cols(k, s, e)?;
            let vh = tape.slice_cols(v, s, e)?;
            let mut rows = Vec::with_capacity(m);
            for (i, nbrs) in neighbors.iter().enumerate().take(m) {
                let qi = tape.gather_rows(qh, &[i])?;
                let kn = tape.gather_rows(kh, nbrs)?;
                let vn = tape.gather_rows(vh, nbrs)?;
                let kt = tape.transpose(kn)?;
                let scores = tape.matmul(qi, kt)?;
                let scores = tape.scale(scores, scale)?;
                let att = tape.softmax_rows(scores)?;
                rows.push(tape.matmul(att, vn)?);
            }
            head_outs.push(tape.concat_rows(&rows)?);
        }
        let merged = head_outs
            .into_iter()
            .try_fold(None::<Var>, |acc, h| -> Result<Option<Var>> {
                Ok(Some(match acc {
                    None => h,
                    Some(a) => tape.concat_cols(a, h)?,
                }))
            })?
            .expect("at least one head");
        self.wo.forward(tape, params, merged)
    }
}

/// Additive mask restricting row `i` to `neighbors[i]` (0 inside the
/// neighborhood, -1e30 outside).
pub fn neighborhood_mask<T: Scalar>(m: usize, neighbors: &[Vec<usize>]) -> Tensor<T> {
    let blocked: T = Scalar::from_f64(-1e30);
    let mut mask = Tensor::full(m, m, blocked);
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            *mask.at_mut(i, j) = T::zero();
        }
    }
    mask
}

/// Local self-attention over a k-nearest-centroid neighborhood, with a
/// residual connection and pre-normalization.
#[derive(Clone, Debug)]
pub struct LocalSelfAttention {
    pub mha: MultiHeadAttention,
    pub norm: LayerNorm,
}

impl LocalSelfAttention {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        Self {
            mha: MultiHeadAttention::init(store, init, &format!("{name}.mha"), dim, heads),
            norm: LayerNorm::init(store, &format!("{name}.ln"), dim),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        tokens: Var,
        centroids: &Tensor<T>,
        neighborhood: usize,
        mode: NeighborhoodImpl,
    ) -> Result<Var> {
        let m = tape.value(tokens).rows();
        if centroids.rows() != m {
            return Err(Error::Shape(format!(
                "{} centroids for {} tokens",
                centroids.rows(),
                m
            )));
        }
        let k = neighborhood.min(m);
        let neighbors = knn_indices(centroids, k)?;
        let n = self.norm.forward(tape, params, tokens)?;
        let att = match mode {
            NeighborhoodImpl::Masked => {
                let mask = neighborhood_mask::<T>(m, &neighbors);
                self.mha.attend(tape, params, n, n, Some(&mask))?
            }
            NeighborhoodImpl::Gather => self.mha.attend_gather(tape, params, n, &neighbors)?,
        };
        tape.add(tokens, att)
    }
}

/// Standard scaled dot-product cross-attention with residual +
/// pre-normalization of the query stream.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub mha: MultiHeadAttention,
    pub norm: LayerNorm,
}

impl CrossAttention {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        Self::init_kv(store, init, name, dim, dim, heads)
    }

    /// Cross-attention reading a key/value stream of width `kv_dim`.
    pub fn init_kv<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        kv_dim: usize,
        heads: usize,
    ) -> Self {
        Self {
            mha: MultiHeadAttention::init_kv(store, init, &format!("{name}.mha"), dim, kv_dim, heads),
            norm: LayerNorm::init(store, &format!("{name}.ln"), dim),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        queries: Var,
        context: Var,
    ) -> Result<Var> {
        let n = self.norm.forward(tape, params, queries)?;
        let att = self.mha.attend(tape, params, n, context, None)?;
        tape.add(queries, att)
    }
}

/// Feed-forward sublayer with residual + pre-normalization.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub mlp: Mlp,
    pub norm: LayerNorm,
}

impl FeedForward {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            mlp: Mlp::init(store, init, &format!("{name}.mlp"), dim, hidden, dim),
            norm: LayerNorm::init(store, &format!("{name}.ln"), dim),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        x: Var,
    ) -> Result<Var> {
        let n = self.norm.forward(tape, params, x)?;
        let h = self.mlp.forward(tape, params, n)?;
        tape.add(x, h)
    }
}

/// Adaptive feature modulation: a condition embedding produces per-layer
/// (scale, shift, gate) vectors and the tokens are transformed as
/// `x + gate * (scale * normalized(x) + shift)`. The gate columns are
/// zero-initialized so the block is exactly the identity at init.
#[derive(Clone, Debug)]
pub struct AdaModulate {
    pub proj: Linear,
    pub dim: usize,
}

impl AdaModulate {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        cond_dim: usize,
        dim: usize,
    ) -> Self {
        let mut w: Tensor<T> = init.xavier(cond_dim, 3 * dim);
        for r in 0..cond_dim {
            for c in 2 * dim..3 * dim {
                *w.at_mut(r, c) = T::zero();
            }
        }
        let w = store.add(&format!("{name}.w"), w);
        let b = store.add(&format!("{name}.b"), Tensor::zeros(1, 3 * dim));
        Self {
            proj: Linear { w, b },
            dim,
        }
    }

    /// `cond` is a `(1, cond_dim)` embedding.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        tokens: Var,
        cond: Var,
    ) -> Result<Var> {
        let d = self.dim;
        let msv = self.proj.forward(tape, params, cond)?;
        let scale = tape.slice_cols(msv, 0, d)?;
        let shift = tape.slice_cols(msv, d, 2 * d)?;
        let gate = tape.slice_cols(msv, 2 * d, 3 * d)?;
        let n = tape.layer_norm(tokens)?;
        let s = tape.mul_row(n, scale)?;
        let s = tape.add_row(s, shift)?;
        let g = tape.mul_row(s, gate)?;
        tape.add(tokens, g)
    }
}
