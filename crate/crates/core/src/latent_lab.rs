//! Latent-space analysis: PCA projection, interpolation, concept-vector
//! walks, the closed-form disentanglement matrix, and decoding along latent
//! paths.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::geometry::PointCloud;
use crate::model::{pool_tokens, AeroJepaModel, TokenSet};
use crate::numerics::Tensor;
use crate::probes::{ProbeFamily, ProbeSuite};
use crate::synthgen::integrate_forces;
use crate::Result;

/// Unit latent direction derived from a probe's weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptVector {
    pub direction: Vec<f64>,
    pub source: String,
}

impl ConceptVector {
    /// Normalize a probe weight vector; errors on a zero vector.
    pub fn from_weights(w: &[f64], source: &str) -> Result<Self> {
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "cannot normalize probe weights of {source}: norm {norm}"
            )));
        }
        Ok(Self {
            direction: w.iter().map(|v| v / norm).collect(),
            source: source.to_string(),
        })
    }
}

/// PCA of an `(n, d)` latent matrix.
#[derive(Clone, Debug)]
pub struct PcaResult {
    /// `(n, k)` scores.
    pub projections: Tensor<f64>,
    /// `(d, k)` principal directions, one column per component.
    pub components: Tensor<f64>,
    /// Variance captured per component, descending.
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Centered SVD-based PCA; components ordered by variance.
pub fn pca_project(latents: &Tensor<f64>, components: usize) -> Result<PcaResult> {
    let (n, d) = (latents.rows(), latents.cols());
    if n <= 1 {
        return Err(Error::Argument(format!("PCA needs n > 1 rows, got {n}")));
    }
    if components == 0 || components > d {
        return Err(Error::Argument(format!(
            "cannot extract {components} components from {d} dims"
        )));
    }
    if n <= components {
        return Err(Error::Argument(format!(
            "need more rows ({n}) than components ({components})"
        )));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            mean[c] += latents.at(r, c);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |r, c| latents.at(r, c) - mean[c]);
    let svd = centered.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left vectors requested");
    let vt = svd.v_t.as_ref().expect("right vectors requested");
    let k = components.min(svd.singular_values.len());
    let mut proj = Tensor::zeros(n, k);
    let mut comps = Tensor::zeros(d, k);
    let mut ev = Vec::with_capacity(k);
    for j in 0..k {
        let s = svd.singular_values[j];
        ev.push(s * s / n as f64);
        for r in 0..n {
            *proj.at_mut(r, j) = u[(r, j)] * s;
        }
        for c in 0..d {
            *comps.at_mut(c, j) = vt[(j, c)];
        }
    }
    Ok(PcaResult {
        projections: proj,
        components: comps,
        explained_variance: ev,
        mean,
    })
}

/// Linear path `(1 - alpha) z_a + alpha z_b` for each requested alpha.
pub fn latent_interpolate(z_a: &[f64], z_b: &[f64], alphas: &[f64]) -> Result<Vec<Vec<f64>>> {
    if z_a.len() != z_b.len() {
        return Err(Error::Shape(format!(
            "latent dims {} vs {}",
            z_a.len(),
            z_b.len()
        )));
    }
    Ok(alphas
        .iter()
        .map(|&a| {
            z_a.iter()
                .zip(z_b)
                .map(|(&x, &y)| (1.0 - a) * x + a * y)
                .collect()
        })
        .collect())
}

/// Latents `z(gamma) = mu + gamma v` along a concept direction.
pub fn concept_walk(mu: &[f64], v: &ConceptVector, gammas: &[f64]) -> Result<Vec<Vec<f64>>> {
    if mu.len() != v.direction.len() {
        return Err(Error::Shape(format!(
            "mean dim {} vs direction dim {}",
            mu.len(),
            v.direction.len()
        )));
    }
    let norm = v.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Argument(format!(
            "concept direction norm {norm} is not 1"
        )));
    }
    Ok(gammas
        .iter()
        .map(|&g| {
            mu.iter()
                .zip(&v.direction)
                .map(|(&m, &d)| m + g * d)
                .collect()
        })
        .collect())
}

/// Default walk range: gamma in [-3, 3], 13 steps.
pub fn default_gammas() -> Vec<f64> {
    (0..13).map(|i| -3.0 + 0.5 * i as f64).collect()
}

/// Closed-form sensitivities of each probed target along each concept
/// direction, in target standard deviations per unit gamma:
/// `S[k][j] = (w_j . (v_k / sigma_ctx)) / sigma_x[j]`.
#[derive(Clone, Debug)]
pub struct DisentanglementMatrix {
    /// `(K, K)` slopes; row = walked concept, column = probed target.
    pub s: Tensor<f64>,
    pub targets: Vec<String>,
}

impl DisentanglementMatrix {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.s.rows()).map(|i| self.s.at(i, i)).collect()
    }

    /// Mean |diagonal| > mean |off-diagonal|.
    pub fn diagonally_dominant(&self) -> bool {
        let k = self.s.rows();
        if k < 2 {
            return true;
        }
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    diag += self.s.at(i, j).abs();
                } else {
                    off += self.s.at(i, j).abs();
                }
            }
        }
        diag / k as f64 > off / (k * (k - 1)) as f64
    }
}

/// Exact closed-form disentanglement matrix of a context-to-design probe
/// suite. `sigma_x[j]` is the train standard deviation of target `j`.
pub fn disentanglement(suite: &ProbeSuite, sigma_x: &[f64]) -> Result<DisentanglementMatrix> {
    if suite.family != ProbeFamily::ContextDesign {
        return Err(Error::Argument(
            "disentanglement is defined for the context-to-design suite".into(),
        ));
    }
    let k = suite.probes.len();
    if k < 2 {
        return Err(Error::Argument(format!(
            "need >= 2 design probes, got {k}"
        )));
    }
    if sigma_x.len() != k {
        return Err(Error::Shape(format!(
            "{} target sigmas for {} probes",
            sigma_x.len(),
            k
        )));
    }
    let mut s = Tensor::zeros(k, k);
    for (ki, walked) in suite.probes.iter().enumerate() {
        let v = ConceptVector::from_weights(&walked.model.w, &walked.target)?;
        for (j, probed) in suite.probes.iter().enumerate() {
            // d y_j / d gamma along z = mu + gamma v, divided by sigma_x[j]
            let slope: f64 = probed
                .model
                .w
                .iter()
                .zip(&v.direction)
                .zip(&probed.model.sigma)
                .map(|((&w, &vd), &sc)| w * vd / sc)
                .sum();
            *s.at_mut(ki, j) = slope / sigma_x[j];
        }
        if !s.row(ki).iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite disentanglement row for {}",
                walked.target
            )));
        }
    }
    Ok(DisentanglementMatrix {
        s,
        targets: suite.probes.iter().map(|p| p.target.clone()).collect(),
    })
}

/// Token-wise linear interpolation between two token sets (tokens and
/// centroids both interpolated).
pub fn interpolate_token_sets(
    a: &TokenSet<f64>,
    b: &TokenSet<f64>,
    alphas: &[f64],
) -> Result<Vec<TokenSet<f64>>> {
    if a.tokens.shape() != b.tokens.shape() || a.centroids.shape() != b.centroids.shape() {
        return Err(Error::Shape("token set shapes differ".into()));
    }
    Ok(alphas
        .iter()
        .map(|&al| TokenSet {
            tokens: a
                .tokens
                .zip(&b.tokens, |x, y| (1.0 - al) * x + al * y)
                .expect("same shape"),
            centroids: a
                .centroids
                .zip(&b.centroids, |x, y| (1.0 - al) * x + al * y)
                .expect("same shape"),
        })
        .collect())
}

/// Lift a pooled latent back to token shape by shifting an anchor token set
/// so that its pooled mean becomes `z`.
pub fn lift_pooled(anchor: &TokenSet<f64>, z: &[f64]) -> Result<TokenSet<f64>> {
    let d = anchor.tokens.cols();
    if z.len() != d {
        return Err(Error::Shape(format!(
            "pooled latent dim {} vs token dim {}",
            z.len(),
            d
        )));
    }
    let pooled = pool_tokens(&anchor.tokens);
    let mut tokens = anchor.tokens.clone();
    for r in 0..tokens.rows() {
        for c in 0..d {
            *tokens.at_mut(r, c) += z[c] - pooled.at(0, c);
        }
    }
    Ok(TokenSet {
        tokens,
        centroids: anchor.centroids.clone(),
    })
}

/// One decoded step of a latent walk.
#[derive(Clone, Debug)]
pub struct WalkStep {
    pub decoded: Tensor<f64>,
    pub cl: f64,
    pub cd: f64,
}

/// Decode a path of context-shaped token sets: predict under `cond`, decode
/// at `queries`, and integrate forces from the decoded surface field.
pub fn decode_walk(
    model: &AeroJepaModel<f64>,
    path: &[TokenSet<f64>],
    cond: &[f64],
    queries: &PointCloud<f64>,
    alpha: f64,
) -> Result<Vec<WalkStep>> {
    let mut out = Vec::with_capacity(path.len());
    for ctx in path {
        let pred = model.predict_values(ctx, cond)?;
        let decoded = model.decode_values(&pred, queries)?;
        let field = PointCloud::new(queries.coords().clone(), Some(decoded.clone()), true)?;
        let (cl, cd) = integrate_forces(&field, alpha)?;
        out.push(WalkStep { decoded, cl, cd });
    }
    Ok(out)
}
