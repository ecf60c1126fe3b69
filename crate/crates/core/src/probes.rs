//! Ridge linear probes from pooled latents to scalar targets, with
//! train-set standardization and inner cross-validation over the
//! regularization strength.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::numerics::Tensor;
use crate::training::{LatentKind, LatentRow, LatentTable};
use crate::synthgen::Split;
use crate::Result;

/// Nine-point decade grid 1e-4 ..= 1e4.
pub fn default_lambda_grid() -> Vec<f64> {
    (-4..=4).map(|e| 10f64.powi(e)).collect()
}

/// CV reliability threshold for treating a probe as trustworthy.
pub const RELIABILITY_THRESHOLD: f64 = 0.85;

/// Standardized affine readout `y = w^T ((z - mu) / sigma) + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
    pub lambda_selected: f64,
    pub cv_r2: f64,
}

impl ProbeModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!(
                "latent of dim {} for probe of dim {}",
                z.len(),
                self.dim()
            )));
        }
        let mut y = self.b;
        for i in 0..z.len() {
            y += self.w[i] * (z[i] - self.mu[i]) / self.sigma[i];
        }
        Ok(y)
    }

    /// Exact gradient of the readout with respect to the raw latent:
    /// `w / sigma`.
    pub fn gradient(&self) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.sigma)
            .map(|(&w, &s)| w / s)
            .collect()
    }
}

/// Coefficient of determination of predictions against truth.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    1.0 - ss_res / ss_tot.max(f64::MIN_POSITIVE)
}

/// Train-set standardization statistics; zero-variance dimensions get
/// sigma = 1.
pub fn standardize_stats(z: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (z.rows(), z.cols());
    let mut mu = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            mu[c] += z.at(r, c);
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut sigma = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            let e = z.at(r, c) - mu[c];
            sigma[c] += e * e;
        }
    }
    for s in &mut sigma {
        *s = (*s / n as f64).sqrt();
        if *s <= 0.0 || !s.is_finite() {
            *s = 1.0;
        }
    }
    (mu, sigma)
}

fn standardized(z: &Tensor<f64>, mu: &[f64], sigma: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(z.rows(), z.cols(), |r, c| (z.at(r, c) - mu[c]) / sigma[c])
}

/// Closed-form ridge on pre-standardized rows: `(Z^T Z + lambda I) w =
/// Z^T (y - y_mean)`, intercept = mean of y.
fn solve_ridge(zs: &DMatrix<f64>, y: &[f64], rows: &[usize], lambda: f64) -> (DVector<f64>, f64) {
    let d = zs.ncols();
    let b = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for &r in rows {
        let zr = zs.row(r);
        for i in 0..d {
            rhs[i] += zr[i] * (y[r] - b);
            for j in 0..d {
                gram[(i, j)] += zr[i] * zr[j];
            }
        }
    }
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let w = gram
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(d));
    (w, b)
}

/// Seeded fold assignment (round-robin over a shuffled order).
pub fn seeded_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// Fit a ridge probe with 5-fold cross-validation over `lambda_grid`.
/// `fold_of[i]` gives row `i`'s fold (values in `0..5`); pass
/// [`seeded_folds`] when no stratification is needed.
pub fn fit_ridge(
    z: &Tensor<f64>,
    y: &[f64],
    lambda_grid: &[f64],
    fold_of: &[usize],
) -> Result<ProbeModel> {
    let n = z.rows();
    if n != y.len() || n != fold_of.len() {
        return Err(Error::Shape(format!(
            "{} latents vs {} targets vs {} fold labels",
            n,
            y.len(),
            fold_of.len()
        )));
    }
    if n < 10 {
        return Err(Error::Argument(format!("need >= 10 rows to fit a probe, got {n}")));
    }
    if lambda_grid.is_empty() {
        return Err(Error::Argument("empty lambda grid".into()));
    }
    let n_folds = fold_of.iter().max().map_or(0, |m| m + 1);
    if n_folds < 2 || n < n_folds {
        return Err(Error::Argument(format!(
            "need >= 2 non-empty folds over {n} rows"
        )));
    }
    let (mu, sigma) = standardize_stats(z);
    let zero_var: Vec<bool> = (0..z.cols())
        .map(|c| (0..n).all(|r| z.at(r, c) == z.at(0, c)))
        .collect();
    let zs = standardized(z, &mu, &sigma);

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();

    let mut best: Option<(f64, f64)> = None; // (cv_r2, lambda)
    for &lambda in lambda_grid {
        let mut ss_res = 0.0;
        for fold in 0..n_folds {
            let train_rows: Vec<usize> = (0..n).filter(|&r| fold_of[r] != fold).collect();
            let test_rows: Vec<usize> = (0..n).filter(|&r| fold_of[r] == fold).collect();
            if train_rows.is_empty() || test_rows.is_empty() {
                return Err(Error::Argument(format!("fold {fold} is empty")));
            }
            let (w, b) = solve_ridge(&zs, y, &train_rows, lambda);
            for &r in &test_rows {
                let pred = zs.row(r).transpose().dot(&w) + b;
                ss_res += (y[r] - pred) * (y[r] - pred);
            }
        }
        let cv_r2 = 1.0 - ss_res / ss_tot.max(f64::MIN_POSITIVE);
        if best.map_or(true, |(bst, _)| cv_r2 > bst) {
            best = Some((cv_r2, lambda));
        }
    }
    let (cv_r2, lambda_selected) = best.expect("non-empty grid");
    let all_rows: Vec<usize> = (0..n).collect();
    let (w, b) = solve_ridge(&zs, y, &all_rows, lambda_selected);
    let mut w: Vec<f64> = w.iter().copied().collect();
    for (wi, &zv) in w.iter_mut().zip(&zero_var) {
        if zv {
            *wi = 0.0;
        }
    }
    Ok(ProbeModel {
        mu,
        sigma,
        w,
        b,
        lambda_selected,
        cv_r2,
    })
}

/// Which latent feeds a suite and what it reads out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeFamily {
    /// z_ctx -> (thickness, camber)
    ContextDesign,
    /// z_pred -> (C_L, C_D)
    PredictedCoeffs,
    /// z_pred -> alpha
    PredictedAlpha,
    /// z_ctx -> alpha; the negative control
    ContextAlphaControl,
}

impl ProbeFamily {
    pub fn latent_kind(self) -> LatentKind {
        match self {
            ProbeFamily::ContextDesign | ProbeFamily::ContextAlphaControl => LatentKind::Context,
            ProbeFamily::PredictedCoeffs | ProbeFamily::PredictedAlpha => LatentKind::Predicted,
        }
    }

    pub fn targets(self) -> Vec<(&'static str, fn(&LatentRow) -> f64)> {
        match self {
            ProbeFamily::ContextDesign => vec![
                ("thickness", (|r| r.design.thickness) as fn(&LatentRow) -> f64),
                ("camber", |r| r.design.camber),
            ],
            ProbeFamily::PredictedCoeffs => vec![
                ("cl", (|r| r.cl) as fn(&LatentRow) -> f64),
                ("cd", |r| r.cd),
            ],
            ProbeFamily::PredictedAlpha => {
                vec![("alpha", (|r| r.conditions.alpha) as fn(&LatentRow) -> f64)]
            }
            ProbeFamily::ContextAlphaControl => {
                vec![("alpha", (|r| r.conditions.alpha) as fn(&LatentRow) -> f64)]
            }
        }
    }
}

/// One target's fitted probe plus its held-out score.
#[derive(Clone, Debug)]
pub struct ProbeEntry {
    pub target: String,
    pub model: ProbeModel,
    /// R^2 on the test split, never on rows seen during fitting.
    pub held_out_r2: f64,
    /// cv_r2 >= [`RELIABILITY_THRESHOLD`].
    pub reliable: bool,
}

/// Probes of one family, sharing standardization statistics.
#[derive(Clone, Debug)]
pub struct ProbeSuite {
    pub family: ProbeFamily,
    pub probes: Vec<ProbeEntry>,
}

/// All four suites fitted from one latent table.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub context_design: ProbeSuite,
    pub predicted_coeffs: ProbeSuite,
    pub predicted_alpha: ProbeSuite,
    pub context_alpha_control: ProbeSuite,
}

impl SuiteReport {
    pub fn suites(&self) -> [&ProbeSuite; 4] {
        [
            &self.context_design,
            &self.predicted_coeffs,
            &self.predicted_alpha,
            &self.context_alpha_control,
        ]
    }
}

/// Fold assignment stratified by design: all conditions of one design share
/// a fold.
pub fn design_stratified_folds(rows: &[&LatentRow], k: usize, seed: u64) -> Vec<usize> {
    let mut designs: Vec<usize> = rows.iter().map(|r| r.design_id).collect();
    designs.sort_unstable();
    designs.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    designs.shuffle(&mut rng);
    let fold_of_design = |d: usize| {
        designs
            .iter()
            .position(|&x| x == d)
            .expect("design present")
            % k
    };
    rows.iter().map(|r| fold_of_design(r.design_id)).collect()
}

fn fit_suite(table: &LatentTable, family: ProbeFamily, seed: u64) -> Result<ProbeSuite> {
    let train: Vec<&LatentRow> = table.split_rows(Split::Train).collect();
    let test: Vec<&LatentRow> = table.split_rows(Split::Test).collect();
    if train.is_empty() {
        return Err(Error::Argument("latent table has no train rows".into()));
    }
    let kind = family.latent_kind();
    let z_train = table.matrix(&train, kind);
    let folds = design_stratified_folds(&train, 5, seed);
    let grid = default_lambda_grid();
    let mut probes = Vec::new();
    for (name, target) in family.targets() {
        let y: Vec<f64> = train.iter().map(|r| target(r)).collect();
        let model = fit_ridge(&z_train, &y, &grid, &folds)?;
        let held_out_r2 = if test.is_empty() {
            f64::NAN
        } else {
            let truth: Vec<f64> = test.iter().map(|r| target(r)).collect();
            let pred: Vec<f64> = test
                .iter()
                .map(|r| model.predict(table.latent(r, kind)))
                .collect::<Result<_>>()?;
            r_squared(&truth, &pred)
        };
        let reliable = model.cv_r2 >= RELIABILITY_THRESHOLD;
        probes.push(ProbeEntry {
            target: name.to_string(),
            model,
            held_out_r2,
            reliable,
        });
    }
    Ok(ProbeSuite { family, probes })
}

/// Fit the three probe families of the analysis protocol plus the
/// alpha-from-context negative control.
pub fn fit_suites(table: &LatentTable, seed: u64) -> Result<SuiteReport> {
    Ok(SuiteReport {
        context_design: fit_suite(table, ProbeFamily::ContextDesign, seed)?,
        predicted_coeffs: fit_suite(table, ProbeFamily::PredictedCoeffs, seed)?,
        predicted_alpha: fit_suite(table, ProbeFamily::PredictedAlpha, seed)?,
        context_alpha_control: fit_suite(table, ProbeFamily::ContextAlphaControl, seed)?,
    })
}
