//! Training objective: token-space alignment, field reconstruction, and the
//! Gaussianity regularizer on latent batches, plus their weighted
//! combinations for the coupled and decoupled workflows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::Result;

/// Which training workflow the losses serve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Workflow {
    /// Encoders, predictor, and decoder trained jointly on all three terms.
    Coupled,
    /// Latent-only stage (alignment + regularizer); the decoder is trained
    /// afterwards against frozen predicted latents.
    Decoupled,
}

/// Weights of the three loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_lat: f64,
    pub lambda_rec: f64,
    pub lambda_sig: f64,
    pub workflow: Workflow,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_lat: 1.0,
            lambda_rec: 1.0,
            lambda_sig: 0.01,
            workflow: Workflow::Coupled,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_lat < 0.0 || self.lambda_rec < 0.0 || self.lambda_sig < 0.0 {
            return Err(Error::Argument("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Whether the regularizer sees one pooled latent per sample or every token
/// as its own sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigregMode {
    Pooled,
    TokenLevel,
}

/// Mean squared error between predicted and target token matrices, averaged
/// over all M*d entries.
pub fn latent_loss<T: Scalar>(tape: &mut Tape<T>, predicted: Var, target: Var) -> Result<Var> {
    if tape.value(predicted).shape() != tape.value(target).shape() {
        return Err(Error::Shape(format!(
            "latent loss shapes {:?} vs {:?}",
            tape.value(predicted).shape(),
            tape.value(target).shape()
        )));
    }
    let diff = tape.sub(predicted, target)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

/// Mean squared error between decoded field values and the ground truth at
/// the same queries, averaged over queries and channels.
pub fn recon_loss<T: Scalar>(tape: &mut Tape<T>, decoded: Var, truth: &Tensor<T>) -> Result<Var> {
    if tape.value(decoded).shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "reconstruction shapes {:?} vs {:?}",
            tape.value(decoded).shape(),
            truth.shape()
        )));
    }
    let t = tape.constant(truth.clone());
    let diff = tape.sub(decoded, t)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

/// Unit projection directions as a `(dim, n_projections)` matrix with unit
/// columns, drawn from a seeded Gaussian.
pub fn sigreg_directions<T: Scalar>(dim: usize, n_projections: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n_projections);
    for _ in 0..n_projections {
        let mut col = Vec::with_capacity(dim);
        while col.len() < dim {
            // Box-Muller from uniforms in (0, 1]
            let u1 = 1.0 - rng.gen::<f64>();
            let u2 = rng.gen::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            col.push(r * (2.0 * std::f64::consts::PI * u2).cos());
            if col.len() < dim {
                col.push(r * (2.0 * std::f64::consts::PI * u2).sin());
            }
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        for v in &mut col {
            *v /= norm;
        }
        cols.push(col);
    }
    let mut data = Vec::with_capacity(dim * n_projections);
    for r in 0..dim {
        for col in &cols {
            data.push(Scalar::from_f64(col[r]));
        }
    }
    Tensor::new(dim, n_projections, data).expect("sized data")
}

/// Characteristic-function goodness-of-fit statistic of a 1-D sample against
/// the standard normal:
/// `T = (1/n) sum_jk exp(-(x_j - x_k)^2 / 2) - sqrt(2) sum_j exp(-x_j^2 / 4)
///      + n / sqrt(3)`.
/// Near zero for large standard-normal samples, O(n) for a collapsed one.
pub fn epps_pulley_1d<T: Scalar>(x: &[T]) -> T {
    let n = x.len();
    let half = T::from(0.5).unwrap();
    let quarter = T::from(0.25).unwrap();
    let mut pair = T::zero();
    for j in 0..n {
        for k in (j + 1)..n {
            let d = x[j] - x[k];
            pair += (-(d * d) * half).exp();
        }
    }
    let nf: T = Scalar::from_f64(n as f64);
    let pair_total = pair + pair + nf; // symmetry + unit diagonal
    let mut single = T::zero();
    for &v in x {
        single += (-(v * v) * quarter).exp();
    }
    let sqrt2: T = Scalar::from_f64(std::f64::consts::SQRT_2);
    let inv_sqrt3: T = Scalar::from_f64(1.0 / 3f64.sqrt());
    pair_total / nf - sqrt2 * single + nf * inv_sqrt3
}

/// Plain (non-differentiable) regularizer on an `(n, d)` latent batch:
/// mean Epps-Pulley statistic over seeded unit projections plus the
/// first/second-moment penalty. Mirrors [`sigreg_loss`] exactly.
pub fn sigreg_statistic<T: Scalar>(
    latents: &Tensor<T>,
    n_projections: usize,
    seed: u64,
) -> Result<T> {
    let (n, d) = (latents.rows(), latents.cols());
    if n < 2 {
        return Err(Error::Argument(format!(
            "regularizer needs a batch of >= 2 latents, got {n}"
        )));
    }
    if n_projections == 0 {
        return Err(Error::Argument("n_projections must be >= 1".into()));
    }
    let dirs = sigreg_directions::<T>(d, n_projections, seed);
    let proj = latents.matmul(&dirs)?; // (n, P)
    let nf: T = Scalar::from_f64(n as f64);
    let pf: T = Scalar::from_f64(n_projections as f64);
    let mut ep = T::zero();
    let mut moment = T::zero();
    let mut col = vec![T::zero(); n];
    for c in 0..n_projections {
        for (r, slot) in col.iter_mut().enumerate() {
            *slot = proj.at(r, c);
        }
        ep += epps_pulley_1d(&col);
        let mu = col.iter().copied().fold(T::zero(), |a, v| a + v) / nf;
        let var = col
            .iter()
            .map(|&v| (v - mu) * (v - mu))
            .fold(T::zero(), |a, v| a + v)
            / nf;
        moment += mu * mu + (var - T::one()) * (var - T::one());
    }
    Ok(ep / pf + moment / pf)
}

/// Differentiable regularizer on an `(n, d)` latent batch Var; identical in
/// value to [`sigreg_statistic`] with the same seed.
pub fn sigreg_loss<T: Scalar>(
    tape: &mut Tape<T>,
    latents: Var,
    n_projections: usize,
    seed: u64,
) -> Result<Var> {
    let (n, d) = {
        let t = tape.value(latents);
        (t.rows(), t.cols())
    };
    if n < 2 {
        return Err(Error::Argument(format!(
            "regularizer needs a batch of >= 2 latents, got {n}"
        )));
    }
    if n_projections == 0 {
        return Err(Error::Argument("n_projections must be >= 1".into()));
    }
    let dirs = tape.constant(sigreg_directions::<T>(d, n_projections, seed));
    let proj = tape.matmul(latents, dirs)?; // (n, P)
    let neg_half: T = Scalar::from_f64(-0.5);
    let neg_quarter: T = Scalar::from_f64(-0.25);
    // sum over j of exp(-(y - y_j)^2 / 2), accumulated as an (n, P) matrix
    let mut acc: Option<Var> = None;
    for j in 0..n {
        let yj = tape.gather_rows(proj, &[j])?;
        let bj = tape.broadcast_row(yj, n)?;
        let diff = tape.sub(proj, bj)?;
        let sq = tape.mul(diff, diff)?;
        let sc = tape.scale(sq, neg_half)?;
        let e = tape.exp(sc)?;
        acc = Some(match acc {
            None => e,
            Some(a) => tape.add(a, e)?,
        });
    }
    let pair_sum = tape.sum(acc.expect("n >= 2"))?;
    let nf = n as f64;
    let pf = n_projections as f64;
    let term_pair = tape.scale(pair_sum, Scalar::from_f64(1.0 / (nf * pf)))?;
    let ysq = tape.mul(proj, proj)?;
    let ysq_scaled = tape.scale(ysq, neg_quarter)?;
    let e2 = tape.exp(ysq_scaled)?;
    let single_sum = tape.sum(e2)?;
    let term_single = tape.scale(single_sum, Scalar::from_f64(std::f64::consts::SQRT_2 / pf))?;
    let ep = tape.sub(term_pair, term_single)?;
    let offset = tape.scalar_constant(Scalar::from_f64(nf / 3f64.sqrt()));
    let ep = tape.add(ep, offset)?;

    // moment penalty: mean over projections of mean^2 + (var - 1)^2
    let mu = tape.mean_rows(proj)?; // (1, P)
    let mu_sq = tape.mul(mu, mu)?;
    let m1 = tape.mean(mu_sq)?;
    let mu_b = tape.broadcast_row(mu, n)?;
    let centered = tape.sub(proj, mu_b)?;
    let var = {
        let sq = tape.mul(centered, centered)?;
        tape.mean_rows(sq)?
    };
    let var_m1 = tape.add_scalar(var, Scalar::from_f64(-1.0))?;
    let var_pen = tape.mul(var_m1, var_m1)?;
    let m2 = tape.mean(var_pen)?;
    let moment = tape.add(m1, m2)?;
    tape.add(ep, moment)
}

/// Monte-Carlo null calibration: the 95th percentile of the regularizer over
/// `replicates` standard-normal batches of shape `(n, d)`.
pub fn sigreg_null_threshold<T: Scalar>(
    n: usize,
    d: usize,
    n_projections: usize,
    replicates: usize,
    seed: u64,
) -> Result<T> {
    if replicates < 20 {
        return Err(Error::Argument("need >= 20 replicates for a 95th percentile".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<T> = Vec::with_capacity(replicates);
    for rep in 0..replicates {
        let mut data = Vec::with_capacity(n * d);
        while data.len() < n * d {
            let u1 = 1.0 - rng.gen::<f64>();
            let u2 = rng.gen::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            data.push(Scalar::from_f64(r * (2.0 * std::f64::consts::PI * u2).cos()));
            if data.len() < n * d {
                data.push(Scalar::from_f64(r * (2.0 * std::f64::consts::PI * u2).sin()));
            }
        }
        let batch = Tensor::new(n, d, data)?;
        stats.push(sigreg_statistic(&batch, n_projections, seed ^ (rep as u64 + 1))?);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((replicates as f64) * 0.95).ceil() as usize - 1;
    Ok(stats[idx.min(replicates - 1)])
}

/// Loss terms already evaluated on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub lat: Var,
    pub rec: Option<Var>,
    pub sig: Var,
}

/// Weighted sum of the terms for the declared workflow. The decoupled
/// latent-only stage uses alignment + regularizer and ignores any
/// reconstruction term.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    parts: LossParts,
    weights: &LossWeights,
) -> Result<Var> {
    weights.validate()?;
    let lat = tape.scale(parts.lat, Scalar::from_f64(weights.lambda_lat))?;
    let sig = tape.scale(parts.sig, Scalar::from_f64(weights.lambda_sig))?;
    let mut total = tape.add(lat, sig)?;
    if weights.workflow == Workflow::Coupled {
        let rec = parts.rec.ok_or_else(|| {
            Error::Contract("coupled workflow requires a reconstruction term".into())
        })?;
        let rec = tape.scale(rec, Scalar::from_f64(weights.lambda_rec))?;
        total = tape.add(total, rec)?;
    }
    Ok(total)
}
