//! The surrogate architecture: centroid tokenizer, context and target
//! encoders, condition-modulated latent predictor, and the implicit
//! coordinate decoder, assembled over the tape engine.

use crate::error::Error;
use crate::geometry::{fps, PointCloud};
use crate::nn::{
    fourier_encode_rows, fourier_width, AdaModulate, CrossAttention, FeedForward, Initializer,
    Linear, LocalSelfAttention, Mlp, NeighborhoodImpl,
};
use crate::numerics::{BoundParams, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use crate::Result;

/// Fixed-size latent interface between encoders, predictor, and decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSet<T> {
    /// M x d token matrix.
    pub tokens: Tensor<T>,
    /// M x D centroid coordinates.
    pub centroids: Tensor<T>,
}

/// Token set still attached to a tape (tokens differentiable, centroids not).
#[derive(Clone, Debug)]
pub struct TokenVar<T> {
    pub tokens: Var,
    pub centroids: Tensor<T>,
}

impl<T: Scalar> TokenVar<T> {
    pub fn detach(&self, tape: &Tape<T>) -> TokenSet<T> {
        TokenSet {
            tokens: tape.value(self.tokens).clone(),
            centroids: self.centroids.clone(),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Number of latent tokens M.
    pub num_tokens: usize,
    /// Token width d.
    pub token_dim: usize,
    pub encoder_depth: usize,
    pub predictor_depth: usize,
    pub decoder_depth: usize,
    pub num_heads: usize,
    /// k-nearest neighborhood for local attention.
    pub neighborhood: usize,
    /// Fourier band count for positional encodings.
    pub fourier_bands: usize,
    /// Neighbors aggregated per centroid during tokenization.
    pub tokenizer_k: usize,
    pub tokenizer_hidden: usize,
    pub decoder_hidden: usize,
    /// Width of the condition embedding.
    pub cond_dim: usize,
    /// Spatial dimensionality D of the point clouds.
    pub spatial_dim: usize,
    /// Number of flow-field channels decoded at each query.
    pub field_channels: usize,
    /// Feed the signed distance as an extra input channel.
    pub use_sdf: bool,
}

impl ModelConfig {
    /// Desk-scale preset: small enough for CPU training in minutes.
    pub fn desk() -> Self {
        Self {
            num_tokens: 32,
            token_dim: 16,
            encoder_depth: 3,
            predictor_depth: 3,
            decoder_depth: 2,
            num_heads: 2,
            neighborhood: 8,
            fourier_bands: 4,
            tokenizer_k: 16,
            tokenizer_hidden: 32,
            decoder_hidden: 32,
            cond_dim: 16,
            spatial_dim: 2,
            field_channels: 1,
            use_sdf: false,
        }
    }

    /// Miniature preset for finite-difference gradient checks.
    pub fn mini() -> Self {
        Self {
            num_tokens: 4,
            token_dim: 8,
            encoder_depth: 1,
            predictor_depth: 1,
            decoder_depth: 1,
            num_heads: 2,
            neighborhood: 2,
            fourier_bands: 2,
            tokenizer_k: 4,
            tokenizer_hidden: 8,
            decoder_hidden: 8,
            cond_dim: 4,
            spatial_dim: 2,
            field_channels: 1,
            use_sdf: false,
        }
    }

    /// Full-scale configuration from the original large benchmark setup.
    pub fn paper_hilift() -> Self {
        Self {
            num_tokens: 3072,
            token_dim: 64,
            encoder_depth: 6,
            predictor_depth: 6,
            decoder_depth: 2,
            num_heads: 8,
            neighborhood: 16,
            fourier_bands: 8,
            tokenizer_k: 32,
            tokenizer_hidden: 128,
            decoder_hidden: 128,
            cond_dim: 64,
            spatial_dim: 3,
            field_channels: 4,
            use_sdf: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tokens == 0
            || self.token_dim == 0
            || self.encoder_depth == 0
            || self.predictor_depth == 0
            || self.decoder_depth == 0
        {
            return Err(Error::Argument("model dimensions must be >= 1".into()));
        }
        if self.token_dim % self.num_heads != 0 {
            return Err(Error::Argument(format!(
                "token_dim {} not divisible by {} heads",
                self.token_dim, self.num_heads
            )));
        }
        if self.decoder_hidden % self.num_heads != 0 {
            return Err(Error::Argument(format!(
                "decoder_hidden {} not divisible by {} heads",
                self.decoder_hidden, self.num_heads
            )));
        }
        Ok(())
    }

    fn context_in_channels(&self) -> usize {
        // [relative position, absolute coords (+ sdf)]
        2 * self.spatial_dim + usize::from(self.use_sdf)
    }

    fn target_in_channels(&self) -> usize {
        2 * self.spatial_dim + self.field_channels
    }

    fn query_in_width(&self) -> usize {
        fourier_width(self.spatial_dim, self.fourier_bands) + usize::from(self.use_sdf)
    }
}

#[derive(Clone, Debug)]
struct Tokenizer {
    msg: Mlp,
    pos: Linear,
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    attn: LocalSelfAttention,
    ffn: FeedForward,
}

#[derive(Clone, Debug)]
struct PredictorBlock {
    ada: AdaModulate,
    attn: LocalSelfAttention,
    cross: CrossAttention,
    ffn: FeedForward,
}

#[derive(Clone, Debug)]
struct DecoderBlock {
    cross: CrossAttention,
    ffn: FeedForward,
}

/// Context encoder, target encoder, predictor, and decoder sharing one
/// parameter store.
#[derive(Clone, Debug)]
pub struct AeroJepaModel<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    context_tokenizer: Tokenizer,
    context_blocks: Vec<EncoderBlock>,
    target_tokenizer: Tokenizer,
    target_blocks: Vec<EncoderBlock>,
    cond_mlp: Mlp,
    query_embed: ParamId,
    query_pos: Linear,
    predictor_blocks: Vec<PredictorBlock>,
    decoder_query: Linear,
    decoder_blocks: Vec<DecoderBlock>,
    head: Mlp,
    /// Execution path for the neighborhood restriction.
    pub attention_impl: NeighborhoodImpl,
}

impl<T: Scalar> AeroJepaModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        let d = config.token_dim;
        let fw = fourier_width(config.spatial_dim, config.fourier_bands);

        let build_tokenizer = |store: &mut ParamStore<T>,
                                   init: &mut Initializer,
                                   name: &str,
                                   in_ch: usize| Tokenizer {
            msg: Mlp::init(
                store,
                init,
                &format!("{name}.msg"),
                in_ch,
                config.tokenizer_hidden,
                d,
            ),
            pos: Linear::init(store, init, &format!("{name}.pos"), fw, d),
        };
        let context_tokenizer =
            build_tokenizer(&mut store, &mut init, "enc_c.tok", config.context_in_channels());
        let target_tokenizer =
            build_tokenizer(&mut store, &mut init, "enc_t.tok", config.target_in_channels());

        let build_blocks = |store: &mut ParamStore<T>, init: &mut Initializer, name: &str| {
            (0..config.encoder_depth)
                .map(|i| EncoderBlock {
                    attn: LocalSelfAttention::init(
                        store,
                        init,
                        &format!("{name}.{i}.attn"),
                        d,
                        config.num_heads,
                    ),
                    ffn: FeedForward::init(
                        store,
                        init,
                        &format!("{name}.{i}.ffn"),
                        d,
                        config.decoder_hidden,
                    ),
                })
                .collect::<Vec<_>>()
        };
        let context_blocks = build_blocks(&mut store, &mut init, "enc_c");
        let target_blocks = build_blocks(&mut store, &mut init, "enc_t");

        let cond_mlp = Mlp::init(
            &mut store,
            &mut init,
            "pred.cond",
            2,
            config.cond_dim,
            config.cond_dim,
        );
        let query_embed = store.add(
            "pred.query_embed",
            init.uniform(config.num_tokens, d, 0.02),
        );
        let query_pos = Linear::init(&mut store, &mut init, "pred.query_pos", fw, d);
        let predictor_blocks = (0..config.predictor_depth)
            .map(|i| PredictorBlock {
                ada: AdaModulate::init(
                    &mut store,
                    &mut init,
                    &format!("pred.{i}.ada"),
                    config.cond_dim,
                    d,
                ),
                attn: LocalSelfAttention::init(
                    &mut store,
                    &mut init,
                    &format!("pred.{i}.attn"),
                    d,
                    config.num_heads,
                ),
                cross: CrossAttention::init(
                    &mut store,
                    &mut init,
                    &format!("pred.{i}.cross"),
                    d,
                    config.num_heads,
                ),
                ffn: FeedForward::init(
                    &mut store,
                    &mut init,
                    &format!("pred.{i}.ffn"),
                    d,
                    config.decoder_hidden,
                ),
            })
            .collect();

        // The decoder works at its own width: queries are lifted to
        // `decoder_hidden` and the d-dimensional latent tokens enter through
        // the key/value projections of each cross-attention block.
        let dw = config.decoder_hidden;
        let decoder_query = Linear::init(
            &mut store,
            &mut init,
            "dec.query",
            config.query_in_width(),
            dw,
        );
        let decoder_blocks = (0..config.decoder_depth)
            .map(|i| DecoderBlock {
                cross: CrossAttention::init_kv(
                    &mut store,
                    &mut init,
                    &format!("dec.{i}.cross"),
                    dw,
                    d,
                    config.num_heads,
                ),
                ffn: FeedForward::init(
                    &mut store,
                    &mut init,
                    &format!("dec.{i}.ffn"),
                    dw,
                    config.decoder_hidden,
                ),
            })
            .collect();
        let head = Mlp::init(
            &mut store,
            &mut init,
            "dec.head",
            dw,
            config.decoder_hidden,
            config.field_channels,
        );

        Ok(Self {
            config,
            params: store,
            context_tokenizer,
            context_blocks,
            target_tokenizer,
            target_blocks,
            cond_mlp,
            query_embed,
            query_pos,
            predictor_blocks,
            decoder_query,
            decoder_blocks,
            head,
            attention_impl: NeighborhoodImpl::Masked,
        })
    }

    /// Per-centroid message-passing inputs: for each selected centroid, a
    /// `(k, in_ch)` matrix of `[relative position, point features]` rows.
    /// Exposed so tests can inspect the translation-invariant part.
    pub fn tokenizer_message_inputs(
        &self,
        cloud: &PointCloud<T>,
        with_field: bool,
    ) -> Result<(Vec<usize>, Vec<Tensor<T>>)> {
        let m = self.config.num_tokens;
        if cloud.len() < m {
            return Err(Error::Argument(format!(
                "cloud of {} points cannot carry {} tokens",
                cloud.len(),
                m
            )));
        }
        let centroid_idx = fps(cloud, m, 0)?;
        let k = self.config.tokenizer_k.min(cloud.len());
        let d_sp = self.config.spatial_dim;
        let in_ch = if with_field {
            self.config.target_in_channels()
        } else {
            self.config.context_in_channels()
        };
        let mut inputs = Vec::with_capacity(m);
        for &ci in &centroid_idx {
            let cp = cloud.point(ci);
            // k nearest points to the centroid, ties by lowest index
            let mut dist: Vec<(T, usize)> = (0..cloud.len())
                .map(|j| {
                    let d = cp
                        .iter()
                        .zip(cloud.point(j))
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .fold(T::zero(), |acc, v| acc + v);
                    (d, j)
                })
                .collect();
            dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut data = Vec::with_capacity(k * in_ch);
            for &(_, j) in dist.iter().take(k) {
                let pj = cloud.point(j);
                for a in 0..d_sp {
                    data.push(pj[a] - cp[a]);
                }
                data.extend_from_slice(pj);
                if let Some(f) = cloud.features() {
                    data.extend_from_slice(f.row(j));
                }
            }
            inputs.push(Tensor::new(k, in_ch, data)?);
        }
        Ok((centroid_idx, inputs))
    }

    fn tokenize_with(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        tokenizer: &Tokenizer,
        blocks: &[EncoderBlock],
        cloud: &PointCloud<T>,
        with_field: bool,
    ) -> Result<TokenVar<T>> {
        let (centroid_idx, inputs) = self.tokenizer_message_inputs(cloud, with_field)?;
        let m = self.config.num_tokens;
        let k = inputs[0].rows();
        let in_ch = inputs[0].cols();
        let mut all = Vec::with_capacity(m * k * in_ch);
        for t in &inputs {
            all.extend_from_slice(t.data());
        }
        let big = tape.constant(Tensor::new(m * k, in_ch, all)?);
        let msgs = tokenizer.msg.forward(tape, params, big)?;
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let block: Vec<usize> = (i * k..(i + 1) * k).collect();
            let part = tape.gather_rows(msgs, &block)?;
            rows.push(tape.max_rows(part)?);
        }
        let pooled = tape.concat_rows(&rows)?;

        let mut cdata = Vec::with_capacity(m * self.config.spatial_dim);
        for &ci in &centroid_idx {
            cdata.extend_from_slice(cloud.point(ci));
        }
        let centroids = Tensor::new(m, self.config.spatial_dim, cdata)?;
        let pos_in = tape.constant(fourier_encode_rows(&centroids, self.config.fourier_bands)?);
        let pos = tokenizer.pos.forward(tape, params, pos_in)?;
        let mut x = tape.add(pooled, pos)?;
        for b in blocks {
            x = b.attn.forward(
                tape,
                params,
                x,
                &centroids,
                self.config.neighborhood,
                self.attention_impl,
            )?;
            x = b.ffn.forward(tape, params, x)?;
        }
        Ok(TokenVar {
            tokens: x,
            centroids,
        })
    }

    /// Geometry-only context encoding; never sees field values or
    /// conditions.
    pub fn encode_context(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        geometry: &PointCloud<T>,
    ) -> Result<TokenVar<T>> {
        if geometry.has_field() {
            return Err(Error::Contract(
                "context encoder must not see field channels".into(),
            ));
        }
        if self.config.use_sdf && geometry.features().is_none() {
            return Err(Error::Contract(
                "model configured with use_sdf but geometry carries no SDF channel".into(),
            ));
        }
        self.tokenize_with(
            tape,
            params,
            &self.context_tokenizer,
            &self.context_blocks,
            geometry,
            false,
        )
    }

    /// Flow-field encoding; training-time only.
    pub fn encode_target(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        field: &PointCloud<T>,
    ) -> Result<TokenVar<T>> {
        if !field.has_field() {
            return Err(Error::Contract(
                "target encoder requires field channels".into(),
            ));
        }
        self.tokenize_with(
            tape,
            params,
            &self.target_tokenizer,
            &self.target_blocks,
            field,
            true,
        )
    }

    /// Condition embedding from raw `[alpha, mach]`.
    pub fn embed_conditions(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        cond: &[T],
    ) -> Result<Var> {
        if cond.len() != 2 {
            return Err(Error::Argument(format!(
                "expected 2 condition values, got {}",
                cond.len()
            )));
        }
        let c = tape.constant(Tensor::row_vec(cond.to_vec()));
        let h = self.cond_mlp.forward(tape, params, c)?;
        tape.gelu(h)
    }

    /// Predict target flow tokens from context tokens and conditions.
    pub fn predict(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        context: &TokenVar<T>,
        cond: &[T],
    ) -> Result<TokenVar<T>> {
        let h = self.embed_conditions(tape, params, cond)?;
        self.predict_with_embedding(tape, params, context, h)
    }

    /// Predictor body with a precomputed condition embedding.
    pub fn predict_with_embedding(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        context: &TokenVar<T>,
        cond_embedding: Var,
    ) -> Result<TokenVar<T>> {
        let pos_in = tape.constant(fourier_encode_rows(
            &context.centroids,
            self.config.fourier_bands,
        )?);
        let pos = self.query_pos.forward(tape, params, pos_in)?;
        let mut x = tape.add(params.var(self.query_embed), pos)?;
        for b in &self.predictor_blocks {
            x = b.ada.forward(tape, params, x, cond_embedding)?;
            x = b.attn.forward(
                tape,
                params,
                x,
                &context.centroids,
                self.config.neighborhood,
                self.attention_impl,
            )?;
            x = b.cross.forward(tape, params, x, context.tokens)?;
            x = b.ffn.forward(tape, params, x)?;
        }
        Ok(TokenVar {
            tokens: x,
            centroids: context.centroids.clone(),
        })
    }

    /// Decode field values at arbitrary query coordinates. Each query row is
    /// processed independently of the others.
    pub fn decode(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        predicted: &TokenVar<T>,
        queries: &PointCloud<T>,
    ) -> Result<Var> {
        let fe = fourier_encode_rows(queries.coords(), self.config.fourier_bands)?;
        let enc = if self.config.use_sdf {
            let f = queries.features().ok_or_else(|| {
                Error::Contract("use_sdf decoder queries need an SDF channel".into())
            })?;
            let n = fe.rows();
            let w = fe.cols();
            let mut data = Vec::with_capacity(n * (w + 1));
            for r in 0..n {
                data.extend_from_slice(fe.row(r));
                data.push(f.at(r, f.cols() - 1));
            }
            Tensor::new(n, w + 1, data)?
        } else {
            fe
        };
        let q_in = tape.constant(enc);
        let mut x = self.decoder_query.forward(tape, params, q_in)?;
        for b in &self.decoder_blocks {
            x = b.cross.forward(tape, params, x, predicted.tokens)?;
            x = b.ffn.forward(tape, params, x)?;
        }
        self.head.forward(tape, params, x)
    }

    /// Token-mean pooling: `(M, d) -> (1, d)`.
    pub fn pool_latent(&self, tape: &mut Tape<T>, tokens: Var) -> Result<Var> {
        tape.mean_rows(tokens)
    }

    /// Convenience: context tokens as plain values (no gradient tracking).
    pub fn encode_context_values(&self, geometry: &PointCloud<T>) -> Result<TokenSet<T>> {
        let mut tape = Tape::new();
        let params = tape.bind(&self.params);
        let out = self.encode_context(&mut tape, &params, geometry)?;
        Ok(out.detach(&tape))
    }

    pub fn encode_target_values(&self, field: &PointCloud<T>) -> Result<TokenSet<T>> {
        let mut tape = Tape::new();
        let params = tape.bind(&self.params);
        let out = self.encode_target(&mut tape, &params, field)?;
        Ok(out.detach(&tape))
    }

    /// Convenience: predict from a detached context token set.
    pub fn predict_values(&self, context: &TokenSet<T>, cond: &[T]) -> Result<TokenSet<T>> {
        let mut tape = Tape::new();
        let params = tape.bind(&self.params);
        let ctx = TokenVar {
            tokens: tape.constant(context.tokens.clone()),
            centroids: context.centroids.clone(),
        };
        let out = self.predict(&mut tape, &params, &ctx, cond)?;
        Ok(out.detach(&tape))
    }

    /// Convenience: decode from a detached predicted token set.
    pub fn decode_values(
        &self,
        predicted: &TokenSet<T>,
        queries: &PointCloud<T>,
    ) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let params = tape.bind(&self.params);
        let pred = TokenVar {
            tokens: tape.constant(predicted.tokens.clone()),
            centroids: predicted.centroids.clone(),
        };
        let out = self.decode(&mut tape, &params, &pred, queries)?;
        Ok(tape.value(out).clone())
    }
}

/// Token-mean pooling of a detached token set.
pub fn pool_tokens<T: Scalar>(tokens: &Tensor<T>) -> Tensor<T> {
    let (m, d) = (tokens.rows(), tokens.cols());
    let mf: T = Scalar::from_f64(m as f64);
    let mut out = Tensor::zeros(1, d);
    for r in 0..m {
        for c in 0..d {
            *out.at_mut(0, c) += tokens.at(r, c);
        }
    }
    for c in 0..d {
        *out.at_mut(0, c) = out.at(0, c) / mf;
    }
    out
}
