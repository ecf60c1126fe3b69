//! Training loop for the coupled and decoupled workflows, evaluation
//! metrics, and pooled-latent extraction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geometry::{fps, sample_triple, PointCloud};
use crate::losses::{
    latent_loss, recon_loss, sigreg_loss, total_loss, LossParts, LossWeights, SigregMode, Workflow,
};
use crate::model::{pool_tokens, AeroJepaModel, TokenSet};
use crate::numerics::{OptimizerConfig, OptimizerState, Tape, Tensor, Var};
use crate::synthgen::{Conditions, Dataset, DatasetEntry, DesignParams, Split};
use crate::Result;

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub n_context: usize,
    pub n_target: usize,
    pub n_query: usize,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub sigreg_mode: SigregMode,
    pub n_projections: usize,
    /// Epochs of the frozen-latent decoder stage (decoupled workflow only).
    pub decoder_epochs: usize,
}

impl TrainConfig {
    /// Desk-scale defaults: completes on CPU in minutes.
    pub fn desk() -> Self {
        Self {
            epochs: 60,
            batch_size: 8,
            n_context: 256,
            n_target: 256,
            n_query: 256,
            weights: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
            sigreg_mode: SigregMode::Pooled,
            n_projections: 64,
            decoder_epochs: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument("epochs and batch size must be >= 1".into()));
        }
        if self.n_context == 0 || self.n_target == 0 || self.n_query == 0 {
            return Err(Error::Argument("sample sizes must be >= 1".into()));
        }
        self.weights.validate()
    }
}

/// Mean per-step loss terms of one epoch.
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub lat: f64,
    pub rec: f64,
    pub sig: f64,
}

/// Outcome of a training run.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub history: Vec<EpochStats>,
    /// Decoder-stage history (decoupled workflow only).
    pub decoder_history: Vec<EpochStats>,
    /// True when training aborted on a non-finite loss; the model carries
    /// the last finite end-of-epoch parameters.
    pub diverged: bool,
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut x = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn cond_values(c: &Conditions) -> [f64; 2] {
    [c.alpha, c.mach]
}

struct StepLosses {
    total: f64,
    lat: f64,
    rec: f64,
    sig: f64,
}

/// One optimizer step over a batch of cases; returns per-term loss values.
fn latent_stage_step(
    model: &mut AeroJepaModel<f64>,
    batch: &[&DatasetEntry],
    config: &TrainConfig,
    opt: &mut OptimizerState<f64>,
    epoch: usize,
    step_seed: u64,
    with_decoder: bool,
) -> Result<StepLosses> {
    let mut tape = Tape::new();
    let bound = tape.bind(&model.params);
    let inv_b = 1.0 / batch.len() as f64;
    let mut lat_acc: Option<Var> = None;
    let mut rec_acc: Option<Var> = None;
    let mut latent_rows: Vec<Var> = Vec::new();
    for entry in batch {
        let triple = sample_triple(
            &entry.case.geometry,
            &entry.case.field,
            (config.n_context, config.n_target, config.n_query),
            mix(step_seed, mix(entry.case_id as u64, epoch as u64)),
        )?;
        let ctx = model.encode_context(&mut tape, &bound, &triple.context)?;
        let tgt = model.encode_target(&mut tape, &bound, &triple.target)?;
        let pred = model.predict(&mut tape, &bound, &ctx, &cond_values(&entry.case.conditions))?;
        let lat = latent_loss(&mut tape, pred.tokens, tgt.tokens)?;
        lat_acc = Some(match lat_acc {
            None => lat,
            Some(a) => tape.add(a, lat)?,
        });
        if with_decoder {
            let queries = PointCloud::from_coords(triple.query.coords().clone())?;
            let truth = triple
                .query
                .features()
                .ok_or_else(|| Error::Contract("query subset lacks field values".into()))?
                .clone();
            let decoded = model.decode(&mut tape, &bound, &pred, &queries)?;
            let rec = recon_loss(&mut tape, decoded, &truth)?;
            rec_acc = Some(match rec_acc {
                None => rec,
                Some(a) => tape.add(a, rec)?,
            });
        }
        match config.sigreg_mode {
            SigregMode::Pooled => {
                latent_rows.push(model.pool_latent(&mut tape, pred.tokens)?);
                latent_rows.push(model.pool_latent(&mut tape, tgt.tokens)?);
            }
            SigregMode::TokenLevel => {
                latent_rows.push(pred.tokens);
                latent_rows.push(tgt.tokens);
            }
        }
    }
    let lat = tape.scale(lat_acc.expect("non-empty batch"), inv_b)?;
    let rec = match rec_acc {
        Some(a) => Some(tape.scale(a, inv_b)?),
        None => None,
    };
    let latents = tape.concat_rows(&latent_rows)?;
    let sig = sigreg_loss(&mut tape, latents, config.n_projections, step_seed)?;
    let total = total_loss(&mut tape, LossParts { lat, rec, sig }, &config.weights)?;
    let losses = StepLosses {
        total: tape.value(total).scalar_value()?,
        lat: tape.value(lat).scalar_value()?,
        rec: rec.map(|r| tape.value(r).scalar_value()).transpose()?.unwrap_or(0.0),
        sig: tape.value(sig).scalar_value()?,
    };
    let grads = tape.backward(total)?;
    let param_grads = tape.param_grads(&model.params, &bound, &grads);
    opt.step(&mut model.params, &param_grads)?;
    Ok(losses)
}

/// One decoder-only step against frozen predicted latents.
fn decoder_stage_step(
    model: &mut AeroJepaModel<f64>,
    batch: &[&DatasetEntry],
    config: &TrainConfig,
    opt: &mut OptimizerState<f64>,
    mask: &[bool],
    epoch: usize,
    step_seed: u64,
) -> Result<StepLosses> {
    // predicted latents under frozen weights, computed without gradients
    let mut frozen: Vec<(TokenSet<f64>, PointCloud<f64>, Tensor<f64>)> = Vec::new();
    for entry in batch {
        let triple = sample_triple(
            &entry.case.geometry,
            &entry.case.field,
            (config.n_context, config.n_target, config.n_query),
            mix(step_seed, mix(entry.case_id as u64, epoch as u64)),
        )?;
        let ctx = model.encode_context_values(&triple.context)?;
        let pred = model.predict_values(&ctx, &cond_values(&entry.case.conditions))?;
        let queries = PointCloud::from_coords(triple.query.coords().clone())?;
        let truth = triple
            .query
            .features()
            .ok_or_else(|| Error::Contract("query subset lacks field values".into()))?
            .clone();
        frozen.push((pred, queries, truth));
    }
    let mut tape = Tape::new();
    let bound = tape.bind(&model.params);
    let inv_b = 1.0 / batch.len() as f64;
    let mut rec_acc: Option<Var> = None;
    for (pred, queries, truth) in &frozen {
        let pred_var = crate::model::TokenVar {
            tokens: tape.constant(pred.tokens.clone()),
            centroids: pred.centroids.clone(),
        };
        let decoded = model.decode(&mut tape, &bound, &pred_var, queries)?;
        let rec = recon_loss(&mut tape, decoded, truth)?;
        rec_acc = Some(match rec_acc {
            None => rec,
            Some(a) => tape.add(a, rec)?,
        });
    }
    let rec = tape.scale(rec_acc.expect("non-empty batch"), inv_b)?;
    let value = tape.value(rec).scalar_value()?;
    let grads = tape.backward(rec)?;
    let param_grads = tape.param_grads(&model.params, &bound, &grads);
    opt.step_masked(&mut model.params, &param_grads, Some(mask))?;
    Ok(StepLosses {
        total: value,
        lat: 0.0,
        rec: value,
        sig: 0.0,
    })
}

fn epoch_batches<'a>(
    train: &[&'a DatasetEntry],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<&'a DatasetEntry>> {
    let mut order: Vec<&DatasetEntry> = train.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xE0C4 ^ epoch as u64));
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Train the model in place. The coupled workflow optimizes all modules on
/// the full objective; the decoupled workflow first trains encoders and
/// predictor on the latent terms, then freezes them and trains the decoder
/// alone on reconstruction.
pub fn train(
    model: &mut AeroJepaModel<f64>,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    let train_entries: Vec<&DatasetEntry> = dataset.split_entries(Split::Train).collect();
    if train_entries.is_empty() {
        return Err(Error::Argument("dataset has no train split".into()));
    }
    let steps_per_epoch = train_entries.len().div_ceil(config.batch_size);
    let mut opt_config = config.optimizer.clone();
    opt_config.total_steps = steps_per_epoch * config.epochs;
    let mut opt = OptimizerState::new(&model.params, opt_config);

    let with_decoder = config.weights.workflow == Workflow::Coupled;
    let mut history = Vec::with_capacity(config.epochs);
    let mut snapshot = model.params.clone();
    let mut diverged = false;
    let mut global_step = 0u64;
    'outer: for epoch in 0..config.epochs {
        let mut sums = [0.0f64; 4];
        let batches = epoch_batches(&train_entries, config.batch_size, config.seed, epoch);
        let n_batches = batches.len();
        for batch in batches {
            global_step += 1;
            let step_seed = mix(config.seed, global_step);
            match latent_stage_step(model, &batch, config, &mut opt, epoch, step_seed, with_decoder)
            {
                Ok(l) => {
                    sums[0] += l.total;
                    sums[1] += l.lat;
                    sums[2] += l.rec;
                    sums[3] += l.sig;
                }
                Err(Error::Numeric(_)) => {
                    model.params = snapshot.clone();
                    diverged = true;
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
        }
        let inv = 1.0 / n_batches as f64;
        history.push(EpochStats {
            epoch,
            total: sums[0] * inv,
            lat: sums[1] * inv,
            rec: sums[2] * inv,
            sig: sums[3] * inv,
        });
        snapshot = model.params.clone();
    }

    let mut decoder_history = Vec::new();
    if !diverged && config.weights.workflow == Workflow::Decoupled {
        let mask: Vec<bool> = model
            .params
            .ids()
            .map(|id| model.params.name(id).starts_with("dec."))
            .collect();
        let mut dec_opt_config = config.optimizer.clone();
        dec_opt_config.total_steps = steps_per_epoch * config.decoder_epochs;
        let mut dec_opt = OptimizerState::new(&model.params, dec_opt_config);
        'dec: for epoch in 0..config.decoder_epochs {
            let mut sum = 0.0;
            let batches =
                epoch_batches(&train_entries, config.batch_size, mix(config.seed, 0xDEC), epoch);
            let n_batches = batches.len();
            for batch in batches {
                global_step += 1;
                let step_seed = mix(config.seed, global_step);
                match decoder_stage_step(model, &batch, config, &mut dec_opt, &mask, epoch, step_seed)
                {
                    Ok(l) => sum += l.rec,
                    Err(Error::Numeric(_)) => {
                        model.params = snapshot.clone();
                        diverged = true;
                        break 'dec;
                    }
                    Err(e) => return Err(e),
                }
            }
            let rec = sum / n_batches as f64;
            decoder_history.push(EpochStats {
                epoch,
                total: rec,
                lat: 0.0,
                rec,
                sig: 0.0,
            });
            snapshot = model.params.clone();
        }
    }

    Ok(TrainResult {
        history,
        decoder_history,
        diverged,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// The six per-channel error metrics of one case:
/// `[rel_l2, rel_l1, rmse/gtmax, mae/gtmax, rmse, mae]`.
pub fn case_metrics(pred: &Tensor<f64>, truth: &Tensor<f64>) -> Result<Vec<[f64; 6]>> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "metric shapes {:?} vs {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let (n, ch) = (truth.rows(), truth.cols());
    if n == 0 {
        return Err(Error::Argument("no query points".into()));
    }
    let mut out = Vec::with_capacity(ch);
    for c in 0..ch {
        let mut se = 0.0;
        let mut ae = 0.0;
        let mut st = 0.0;
        let mut at = 0.0;
        let mut gtmax = 0.0f64;
        for r in 0..n {
            let e = pred.at(r, c) - truth.at(r, c);
            let t = truth.at(r, c);
            se += e * e;
            ae += e.abs();
            st += t * t;
            at += t.abs();
            gtmax = gtmax.max(t.abs());
        }
        let rmse = (se / n as f64).sqrt();
        let mae = ae / n as f64;
        let rel_l2 = se.sqrt() / st.sqrt().max(f64::MIN_POSITIVE);
        let rel_l1 = ae / at.max(f64::MIN_POSITIVE);
        let gtmax = gtmax.max(f64::MIN_POSITIVE);
        out.push([rel_l2, rel_l1, rmse / gtmax, mae / gtmax, rmse, mae]);
    }
    Ok(out)
}

/// Mean and population standard deviation per metric and channel.
#[derive(Clone, Debug)]
pub struct MetricReport {
    /// `channels[c][m] = (mean, std)` over cases for metric `m`.
    pub channels: Vec<[(f64, f64); 6]>,
    pub n_cases: usize,
}

pub const METRIC_NAMES: [&str; 6] = [
    "rel_l2",
    "rel_l1",
    "rmse_over_gtmax",
    "mae_over_gtmax",
    "rmse",
    "mae",
];

/// Encode/predict invocation counters, used to assert that decoding at any
/// resolution re-uses a single encoded latent per case.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub encode_calls: usize,
    pub predict_calls: usize,
}

/// Evaluate on a split: encode each geometry once (FPS subset of
/// `n_context` points, seed 0), predict once, then decode the full field —
/// optionally in query chunks of `chunk` rows.
pub fn evaluate(
    model: &AeroJepaModel<f64>,
    dataset: &Dataset,
    split: Split,
    n_context: usize,
    chunk: Option<usize>,
) -> Result<(MetricReport, EvalStats)> {
    let entries: Vec<&DatasetEntry> = dataset.split_entries(split).collect();
    if entries.is_empty() {
        return Err(Error::Argument(format!("dataset has no {} split", split.tag())));
    }
    let mut stats = EvalStats::default();
    let mut per_case: Vec<Vec<[f64; 6]>> = Vec::with_capacity(entries.len());
    for entry in &entries {
        let geom = &entry.case.geometry;
        let n_c = n_context.min(geom.len());
        let ctx_cloud = geom.subset(&fps(geom, n_c, 0)?)?;
        let ctx = model.encode_context_values(&ctx_cloud)?;
        stats.encode_calls += 1;
        let pred = model.predict_values(&ctx, &cond_values(&entry.case.conditions))?;
        stats.predict_calls += 1;
        let coords = entry.case.field.coords();
        let truth = entry
            .case
            .field
            .features()
            .ok_or_else(|| Error::Contract("case field lacks channels".into()))?;
        let n = coords.rows();
        let chunk = chunk.unwrap_or(n).max(1);
        let mut decoded = Tensor::zeros(n, model.config.field_channels);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let sub = PointCloud::from_coords(coords.clone())?.subset(&idx)?;
            let part = model.decode_values(&pred, &sub)?;
            for (r, row) in (start..end).enumerate() {
                for c in 0..part.cols() {
                    *decoded.at_mut(row, c) = part.at(r, c);
                }
            }
            start = end;
        }
        per_case.push(case_metrics(&decoded, truth)?);
    }
    let ch = per_case[0].len();
    let n_cases = per_case.len();
    let mut channels = Vec::with_capacity(ch);
    for c in 0..ch {
        let mut agg = [(0.0, 0.0); 6];
        for (m, slot) in agg.iter_mut().enumerate() {
            let vals: Vec<f64> = per_case.iter().map(|pc| pc[c][m]).collect();
            let mean = vals.iter().sum::<f64>() / n_cases as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_cases as f64;
            *slot = (mean, var.sqrt());
        }
        channels.push(agg);
    }
    Ok((MetricReport { channels, n_cases }, stats))
}

// ---------------------------------------------------------------------------
// Latent extraction
// ---------------------------------------------------------------------------

/// Pooled latents and labels of one case.
#[derive(Clone, Debug)]
pub struct LatentRow {
    pub case_id: usize,
    pub design_id: usize,
    pub split: Split,
    pub design: DesignParams,
    pub conditions: Conditions,
    pub cl: f64,
    pub cd: f64,
    pub z_ctx: Vec<f64>,
    pub z_pred: Vec<f64>,
    pub z_tgt: Vec<f64>,
}

/// Which pooled latent a consumer reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentKind {
    Context,
    Predicted,
    Target,
}

#[derive(Clone, Debug, Default)]
pub struct LatentTable {
    pub rows: Vec<LatentRow>,
    pub dim: usize,
}

impl LatentTable {
    pub fn split_rows(&self, split: Split) -> impl Iterator<Item = &LatentRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn latent<'a>(&self, row: &'a LatentRow, kind: LatentKind) -> &'a [f64] {
        match kind {
            LatentKind::Context => &row.z_ctx,
            LatentKind::Predicted => &row.z_pred,
            LatentKind::Target => &row.z_tgt,
        }
    }

    /// Latent matrix over a subset of rows.
    pub fn matrix(&self, rows: &[&LatentRow], kind: LatentKind) -> Tensor<f64> {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for r in rows {
            data.extend_from_slice(self.latent(r, kind));
        }
        Tensor::new(rows.len(), self.dim, data).expect("aligned latent dims")
    }

    pub fn to_arrays(&self) -> Vec<(String, Tensor<f64>)> {
        let n = self.rows.len();
        let col = |f: &dyn Fn(&LatentRow) -> f64| {
            Tensor::new(n, 1, self.rows.iter().map(|r| f(r)).collect()).expect("sized")
        };
        let pair = |f: &dyn Fn(&LatentRow) -> [f64; 2]| {
            let mut d = Vec::with_capacity(2 * n);
            for r in &self.rows {
                d.extend_from_slice(&f(r));
            }
            Tensor::new(n, 2, d).expect("sized")
        };
        let z = |k: LatentKind| {
            let mut d = Vec::with_capacity(n * self.dim);
            for r in &self.rows {
                d.extend_from_slice(self.latent(r, k));
            }
            Tensor::new(n, self.dim, d).expect("sized")
        };
        vec![
            ("case_id".into(), col(&|r| r.case_id as f64)),
            ("design_id".into(), col(&|r| r.design_id as f64)),
            ("split_code".into(), col(&|r| r.split as usize as f64)),
            ("design".into(), pair(&|r| [r.design.thickness, r.design.camber])),
            ("conditions".into(), pair(&|r| [r.conditions.alpha, r.conditions.mach])),
            ("coeffs".into(), pair(&|r| [r.cl, r.cd])),
            ("z_ctx".into(), z(LatentKind::Context)),
            ("z_pred".into(), z(LatentKind::Predicted)),
            ("z_tgt".into(), z(LatentKind::Target)),
        ]
    }

    pub fn from_arrays(arrays: &[(String, Tensor<f64>)]) -> Result<Self> {
        let get = |name: &str| -> Result<&Tensor<f64>> {
            arrays
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Format(format!("latent table missing array {name}")))
        };
        let case_id = get("case_id")?;
        let design_id = get("design_id")?;
        let split_code = get("split_code")?;
        let design = get("design")?;
        let conditions = get("conditions")?;
        let coeffs = get("coeffs")?;
        let z_ctx = get("z_ctx")?;
        let z_pred = get("z_pred")?;
        let z_tgt = get("z_tgt")?;
        let n = case_id.rows();
        let dim = z_ctx.cols();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let split = match split_code.at(i, 0) as usize {
                0 => Split::Train,
                1 => Split::Val,
                2 => Split::Test,
                c => return Err(Error::Format(format!("bad split code {c}"))),
            };
            rows.push(LatentRow {
                case_id: case_id.at(i, 0) as usize,
                design_id: design_id.at(i, 0) as usize,
                split,
                design: DesignParams {
                    thickness: design.at(i, 0),
                    camber: design.at(i, 1),
                },
                conditions: Conditions {
                    alpha: conditions.at(i, 0),
                    mach: conditions.at(i, 1),
                },
                cl: coeffs.at(i, 0),
                cd: coeffs.at(i, 1),
                z_ctx: z_ctx.row(i).to_vec(),
                z_pred: z_pred.row(i).to_vec(),
                z_tgt: z_tgt.row(i).to_vec(),
            });
        }
        Ok(Self { rows, dim })
    }
}

/// Pooled `z_ctx`, `z_pred`, `z_tgt` per case with labels. Deterministic:
/// context and target subsets are seed-0 FPS draws.
pub fn extract_latents(
    model: &AeroJepaModel<f64>,
    dataset: &Dataset,
    n_context: usize,
    n_target: usize,
) -> Result<LatentTable> {
    let mut rows = Vec::with_capacity(dataset.entries.len());
    for entry in &dataset.entries {
        let geom = &entry.case.geometry;
        let field = &entry.case.field;
        let ctx_cloud = geom.subset(&fps(geom, n_context.min(geom.len()), 0)?)?;
        let tgt_cloud = field.subset(&fps(field, n_target.min(field.len()), 0)?)?;
        let ctx = model.encode_context_values(&ctx_cloud)?;
        let tgt = model.encode_target_values(&tgt_cloud)?;
        let pred = model.predict_values(&ctx, &cond_values(&entry.case.conditions))?;
        rows.push(LatentRow {
            case_id: entry.case_id,
            design_id: entry.design_id,
            split: entry.split,
            design: entry.case.design.clone(),
            conditions: entry.case.conditions.clone(),
            cl: entry.case.coeffs.0,
            cd: entry.case.coeffs.1,
            z_ctx: pool_tokens(&ctx.tokens).data().to_vec(),
            z_pred: pool_tokens(&pred.tokens).data().to_vec(),
            z_tgt: pool_tokens(&tgt.tokens).data().to_vec(),
        });
    }
    Ok(LatentTable {
        rows,
        dim: model.config.token_dim,
    })
}
