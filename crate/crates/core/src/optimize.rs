//! Constrained latent-space design optimization: maximize the probed
//! lift-to-drag ratio over the pooled context latent under a Mahalanobis
//! trust region, design-bound, and aerodynamic-envelope constraints, with
//! multi-restart SQP and nearest-neighbor design retrieval.

use std::cell::RefCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::model::{AeroJepaModel, TokenSet, TokenVar};
use crate::numerics::{Tape, Tensor};
use crate::probes::{ProbeModel, SuiteReport};
use crate::synthgen::Split;
use crate::training::{LatentKind, LatentTable};
use crate::Result;

/// 95% chi-square quantile at `d` degrees of freedom (Wilson-Hilferty
/// approximation, accurate to ~0.1% for d >= 2).
pub fn chi2_quantile_95(d: usize) -> f64 {
    let d = d as f64;
    let z95 = 1.6448536269514722;
    let t = 1.0 - 2.0 / (9.0 * d) + z95 * (2.0 / (9.0 * d)).sqrt();
    d * t * t * t
}

/// Ellipsoidal feasible region `(z - mu)^T Sigma^{-1} (z - mu) <= tau` with
/// a regularized train covariance.
#[derive(Clone, Debug)]
pub struct TrustRegion {
    pub mu: Vec<f64>,
    pub cov: Tensor<f64>,
    pub tau: f64,
    chol: Cholesky<f64, Dyn>,
}

impl TrustRegion {
    /// Regularizes the covariance by `+1e-6 I`; `tau` defaults to the 95%
    /// chi-square quantile at `d` degrees of freedom.
    pub fn new(mu: Vec<f64>, cov: Tensor<f64>, tau: Option<f64>) -> Result<Self> {
        let d = mu.len();
        if cov.rows() != d || cov.cols() != d {
            return Err(Error::Shape(format!(
                "covariance {:?} for mean of dim {d}",
                cov.shape()
            )));
        }
        let mut reg = DMatrix::from_fn(d, d, |r, c| cov.at(r, c));
        for i in 0..d {
            reg[(i, i)] += 1e-6;
        }
        let chol = Cholesky::new(reg.clone()).ok_or_else(|| {
            Error::Numeric("regularized covariance is not positive definite".into())
        })?;
        let cov = Tensor::new(d, d, reg.transpose().as_slice().to_vec())?;
        Ok(Self {
            mu,
            cov,
            tau: tau.unwrap_or_else(|| chi2_quantile_95(d)),
            chol,
        })
    }

    /// Mean and covariance of an `(n, d)` latent matrix.
    pub fn from_latents(latents: &Tensor<f64>, tau: Option<f64>) -> Result<Self> {
        let (n, d) = (latents.rows(), latents.cols());
        if n < 2 {
            return Err(Error::Argument("need >= 2 latents for a covariance".into()));
        }
        let mut mu = vec![0.0; d];
        for r in 0..n {
            for c in 0..d {
                mu[c] += latents.at(r, c);
            }
        }
        for m in &mut mu {
            *m /= n as f64;
        }
        let mut cov = Tensor::zeros(d, d);
        for r in 0..n {
            for i in 0..d {
                let ei = latents.at(r, i) - mu[i];
                for j in 0..d {
                    let ej = latents.at(r, j) - mu[j];
                    *cov.at_mut(i, j) += ei * ej / n as f64;
                }
            }
        }
        Self::new(mu, cov, tau)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn solve_cov(&self, r: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(r)
    }

    /// Quadratic form `(z - mu)^T Sigma^{-1} (z - mu)`.
    pub fn mahalanobis(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point of dim {} in region of dim {}",
                z.len(),
                self.dim()
            )));
        }
        let r = DVector::from_fn(z.len(), |i, _| z[i] - self.mu[i]);
        Ok(r.dot(&self.solve_cov(&r)))
    }

    /// Closed-form gradient `2 Sigma^{-1} (z - mu)`.
    pub fn mahalanobis_grad(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::Shape("dim mismatch".into()));
        }
        let r = DVector::from_fn(z.len(), |i, _| z[i] - self.mu[i]);
        Ok((self.solve_cov(&r) * 2.0).iter().copied().collect())
    }

    /// Squared Mahalanobis distance between two points under this metric.
    pub fn mahalanobis_between(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let r = DVector::from_fn(a.len(), |i, _| a[i] - b[i]);
        Ok(r.dot(&self.solve_cov(&r)))
    }

    /// Draw from `N(mu, Sigma)`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        let mut xi = DVector::zeros(d);
        let mut i = 0;
        while i < d {
            let u1 = 1.0 - rng.gen::<f64>();
            let u2 = rng.gen::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            xi[i] = r * (2.0 * std::f64::consts::PI * u2).cos();
            i += 1;
            if i < d {
                xi[i] = r * (2.0 * std::f64::consts::PI * u2).sin();
                i += 1;
            }
        }
        let z = self.chol.l() * xi;
        (0..d).map(|i| self.mu[i] + z[i]).collect()
    }

    /// Scale a point radially toward the mean until it lies strictly inside
    /// the region.
    pub fn project_inside(&self, z: &[f64]) -> Result<Vec<f64>> {
        let m = self.mahalanobis(z)?;
        if m < self.tau {
            return Ok(z.to_vec());
        }
        let s = (self.tau / m).sqrt() * 0.999;
        Ok(z.iter()
            .zip(&self.mu)
            .map(|(&zi, &mi)| mi + s * (zi - mi))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Generic SQP solver
// ---------------------------------------------------------------------------

/// A smooth inequality-constrained problem: minimize `f` subject to
/// `g_i(z) <= 0`, values and gradients supplied together.
pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn objective(&self, z: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// All constraint values and gradients at `z`.
    fn constraints(&self, z: &[f64]) -> Result<Vec<(f64, Vec<f64>)>>;
}

/// Result of one SQP run.
#[derive(Clone, Debug)]
pub struct SqpOutcome {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Infinity norm of the Lagrangian gradient at the solution.
    pub kkt_residual: f64,
    /// Largest constraint value (negative when strictly feasible).
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Working-set solve of the QP `min 1/2 p^T B p + g^T p` subject to
/// `a_i^T p + c_i <= 0`; returns the step and full multiplier vector.
fn solve_qp(
    b: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &[DVector<f64>],
    c: &[f64],
) -> Option<(DVector<f64>, Vec<f64>)> {
    let d = g.len();
    let m = a.len();
    let mut active: Vec<usize> = (0..m).filter(|&i| c[i] > 0.0).collect();
    for _ in 0..100 {
        let k = active.len();
        let mut kkt = DMatrix::<f64>::zeros(d + k, d + k);
        kkt.view_mut((0, 0), (d, d)).copy_from(b);
        for (row, &i) in active.iter().enumerate() {
            for j in 0..d {
                kkt[(d + row, j)] = a[i][j];
                kkt[(j, d + row)] = a[i][j];
            }
        }
        let mut rhs = DVector::<f64>::zeros(d + k);
        for j in 0..d {
            rhs[j] = -g[j];
        }
        for (row, &i) in active.iter().enumerate() {
            rhs[d + row] = -c[i];
        }
        let sol = kkt.lu().solve(&rhs)?;
        let p = sol.rows(0, d).into_owned();
        let lambda_active: Vec<f64> = (0..k).map(|row| sol[d + row]).collect();
        // drop the most negative multiplier, if any
        if let Some((pos, _)) = lambda_active
            .iter()
            .enumerate()
            .filter(|(_, &l)| l < -1e-10)
            .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        {
            active.remove(pos);
            continue;
        }
        // add the most violated inactive constraint, if any
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let v = a[i].dot(&p) + c[i];
            if v > 1e-10 && worst.map_or(true, |(_, wv)| v > wv) {
                worst = Some((i, v));
            }
        }
        match worst {
            Some((i, _)) => active.push(i),
            None => {
                let mut lambda = vec![0.0; m];
                for (row, &i) in active.iter().enumerate() {
                    lambda[i] = lambda_active[row];
                }
                return Some((p, lambda));
            }
        }
    }
    None
}

/// Damped-BFGS sequential quadratic programming with a backtracking line
/// search on an l1 merit function; falls back to a projected-gradient step
/// when the QP subproblem fails.
pub fn sqp_solve(
    problem: &dyn NlpProblem,
    z0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<SqpOutcome> {
    let d = problem.dim();
    if z0.len() != d {
        return Err(Error::Shape(format!(
            "start of dim {} for problem of dim {d}",
            z0.len()
        )));
    }
    let mut z = DVector::from_column_slice(z0);
    let mut bmat = DMatrix::<f64>::identity(d, d);
    let mut rho = 10.0;
    let (mut f, mut grad_f) = eval_obj(problem, &z)?;
    let mut cons = eval_cons(problem, &z)?;
    let mut lambda = vec![0.0; cons.len()];
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..max_iter {
        iterations = it + 1;
        let a: Vec<DVector<f64>> = cons
            .iter()
            .map(|(_, g)| DVector::from_column_slice(g))
            .collect();
        let c: Vec<f64> = cons.iter().map(|(v, _)| *v).collect();

        let kkt = kkt_residual(&grad_f, &a, &c, &lambda);
        let viol = c.iter().cloned().fold(0.0f64, f64::max);
        if kkt <= tol && viol <= tol {
            converged = true;
            break;
        }

        let step = solve_qp(&bmat, &grad_f, &a, &c);
        let (p, lam_new) = match step {
            Some((p, lam)) if p.iter().all(|v| v.is_finite()) => (p, lam),
            _ => {
                // projected-gradient fallback on the merit function
                let mut g_merit = grad_f.clone();
                for (i, (v, gi)) in cons.iter().enumerate() {
                    if *v > 0.0 {
                        g_merit += DVector::from_column_slice(gi) * rho;
                    }
                    let _ = i;
                }
                (-g_merit, lambda.clone())
            }
        };
        if p.norm() <= 1e-14 {
            lambda = lam_new;
            converged = kkt_residual(&grad_f, &a, &c, &lambda) <= tol && viol <= tol;
            break;
        }
        let lam_max = lam_new.iter().cloned().fold(0.0f64, f64::max);
        rho = rho.max(2.0 * lam_max + 1.0);

        let merit = |fv: f64, cv: &[f64]| {
            fv + rho * cv.iter().map(|v| v.max(0.0)).sum::<f64>()
        };
        let phi0 = merit(f, &c);
        let descent = grad_f.dot(&p) - rho * c.iter().map(|v| v.max(0.0)).sum::<f64>();
        let mut t = 1.0;
        let mut accepted = None;
        while t >= 1e-12 {
            let z_try = &z + &p * t;
            let trial: Vec<f64> = z_try.iter().copied().collect();
            match (eval_obj(problem, &z_try), eval_cons_slice(problem, &trial)) {
                (Ok((f_try, g_try)), Ok(cons_try)) => {
                    let c_try: Vec<f64> = cons_try.iter().map(|(v, _)| *v).collect();
                    if merit(f_try, &c_try) <= phi0 + 1e-4 * t * descent.min(0.0) {
                        accepted = Some((z_try, f_try, g_try, cons_try));
                        break;
                    }
                }
                _ => {}
            }
            t *= 0.5;
        }
        let Some((z_new, f_new, grad_new, cons_new)) = accepted else {
            lambda = lam_new;
            break;
        };

        // damped BFGS on the Lagrangian gradient
        let lag_grad = |gf: &DVector<f64>, cs: &[(f64, Vec<f64>)], lam: &[f64]| {
            let mut g = gf.clone();
            for ((_, gi), &l) in cs.iter().zip(lam) {
                if l != 0.0 {
                    g += DVector::from_column_slice(gi) * l;
                }
            }
            g
        };
        let s = &z_new - &z;
        let y = lag_grad(&grad_new, &cons_new, &lam_new) - lag_grad(&grad_f, &cons, &lam_new);
        let bs = &bmat * &s;
        let sbs = s.dot(&bs);
        let sy = s.dot(&y);
        if sbs > 1e-16 {
            let y = if sy < 0.2 * sbs {
                let theta = 0.8 * sbs / (sbs - sy);
                &y * theta + &bs * (1.0 - theta)
            } else {
                y
            };
            let sy = s.dot(&y);
            if sy > 1e-16 {
                bmat = bmat - (&bs * bs.transpose()) / sbs + (&y * y.transpose()) / sy;
            }
        }

        z = z_new;
        f = f_new;
        grad_f = grad_new;
        cons = cons_new;
        lambda = lam_new;
    }
    let a: Vec<DVector<f64>> = cons
        .iter()
        .map(|(_, g)| DVector::from_column_slice(g))
        .collect();
    let c: Vec<f64> = cons.iter().map(|(v, _)| *v).collect();
    Ok(SqpOutcome {
        z: z.iter().copied().collect(),
        objective: f,
        kkt_residual: kkt_residual(&grad_f, &a, &c, &lambda),
        max_violation: c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        iterations,
        converged,
    })
}

fn eval_obj(problem: &dyn NlpProblem, z: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let zv: Vec<f64> = z.iter().copied().collect();
    let (f, g) = problem.objective(&zv)?;
    Ok((f, DVector::from_column_slice(&g)))
}

fn eval_cons(problem: &dyn NlpProblem, z: &DVector<f64>) -> Result<Vec<(f64, Vec<f64>)>> {
    let zv: Vec<f64> = z.iter().copied().collect();
    problem.constraints(&zv)
}

fn eval_cons_slice(problem: &dyn NlpProblem, z: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
    problem.constraints(z)
}

fn kkt_residual(
    grad_f: &DVector<f64>,
    a: &[DVector<f64>],
    c: &[f64],
    lambda: &[f64],
) -> f64 {
    let mut g = grad_f.clone();
    for (i, ai) in a.iter().enumerate() {
        if lambda[i] != 0.0 {
            g += ai * lambda[i];
        }
    }
    let stat = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // complementarity: lambda_i * g_i ~ 0
    let comp = lambda
        .iter()
        .zip(c)
        .map(|(&l, &ci)| (l * ci).abs())
        .fold(0.0f64, f64::max);
    stat.max(comp)
}

// ---------------------------------------------------------------------------
// The latent design problem
// ---------------------------------------------------------------------------

/// Bounds applied to one reliable design probe.
#[derive(Clone, Debug)]
pub struct DesignBound {
    pub target: String,
    pub probe: ProbeModel,
    pub lo: f64,
    pub hi: f64,
}

struct AeroEval {
    cl: f64,
    cd: f64,
    grad_cl: Vec<f64>,
    grad_cd: Vec<f64>,
}

/// Maximize probed `C_L / C_D` over the pooled context latent at fixed
/// cruise conditions, under the trust region, design bounds, drag floor,
/// lift/drag ceilings, and the L/D ceiling — all thresholds from the
/// training split only.
pub struct LatentOptProblem<'a> {
    model: &'a AeroJepaModel<f64>,
    /// Train-mean context token set; the pooled latent is lifted to token
    /// shape by shifting this anchor.
    anchor: TokenSet<f64>,
    cl_probe: ProbeModel,
    cd_probe: ProbeModel,
    pub design_bounds: Vec<DesignBound>,
    /// All design probes (reliable or not), for reading off the recipe.
    pub design_probes: Vec<(String, ProbeModel)>,
    pub region: TrustRegion,
    pub cruise: [f64; 2],
    pub cd_floor: f64,
    pub cl_ceiling: f64,
    pub cd_ceiling: f64,
    pub ld_max: f64,
    cache: RefCell<Option<(Vec<f64>, AeroEval)>>,
}

impl<'a> LatentOptProblem<'a> {
    /// Assemble the problem from a trained model, its probe suites, and the
    /// extracted latent table.
    pub fn new(
        model: &'a AeroJepaModel<f64>,
        anchor: TokenSet<f64>,
        suites: &SuiteReport,
        table: &LatentTable,
        cruise: Option<[f64; 2]>,
        tau: Option<f64>,
    ) -> Result<Self> {
        let train: Vec<&crate::training::LatentRow> = table.split_rows(Split::Train).collect();
        if train.is_empty() {
            return Err(Error::Argument("latent table has no train rows".into()));
        }
        let z_ctx = table.matrix(&train, LatentKind::Context);
        let region = TrustRegion::from_latents(&z_ctx, tau)?;
        let find = |name: &str| -> Result<ProbeModel> {
            suites
                .predicted_coeffs
                .probes
                .iter()
                .find(|p| p.target == name)
                .map(|p| p.model.clone())
                .ok_or_else(|| Error::Argument(format!("missing {name} probe")))
        };
        let cl_probe = find("cl")?;
        let cd_probe = find("cd")?;
        let mut design_bounds = Vec::new();
        let mut design_probes = Vec::new();
        for entry in &suites.context_design.probes {
            design_probes.push((entry.target.clone(), entry.model.clone()));
            if !entry.reliable {
                continue;
            }
            let vals: Vec<f64> = match entry.target.as_str() {
                "thickness" => train.iter().map(|r| r.design.thickness).collect(),
                "camber" => train.iter().map(|r| r.design.camber).collect(),
                other => {
                    return Err(Error::Argument(format!("unknown design target {other}")))
                }
            };
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            design_bounds.push(DesignBound {
                target: entry.target.clone(),
                probe: entry.model.clone(),
                lo,
                hi,
            });
        }
        let cds: Vec<f64> = train.iter().map(|r| r.cd).collect();
        let cls: Vec<f64> = train.iter().map(|r| r.cl).collect();
        let cd_min = cds.iter().cloned().fold(f64::INFINITY, f64::min);
        let cd_max = cds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cl_max = cls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ld_max = train
            .iter()
            .map(|r| r.cl / r.cd)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            model,
            anchor,
            cl_probe,
            cd_probe,
            design_bounds,
            design_probes,
            region,
            cruise: cruise.unwrap_or([
                0.5 * (crate::synthgen::ALPHA_MIN + crate::synthgen::ALPHA_MAX),
                0.0,
            ]),
            cd_floor: 0.9 * cd_min,
            cl_ceiling: 1.05 * cl_max,
            cd_ceiling: 1.05 * cd_max,
            ld_max,
            cache: RefCell::new(None),
        })
    }

    /// Probed lift and drag (and their latent gradients) at a pooled context
    /// latent, by backprop through the frozen predictor.
    fn aero(&self, z: &[f64]) -> Result<AeroEval> {
        if let Some((zc, _)) = self.cache.borrow().as_ref() {
            if zc == z {
                let b = self.cache.borrow();
                let (_, e) = b.as_ref().unwrap();
                return Ok(AeroEval {
                    cl: e.cl,
                    cd: e.cd,
                    grad_cl: e.grad_cl.clone(),
                    grad_cd: e.grad_cd.clone(),
                });
            }
        }
        let d = self.model.config.token_dim;
        if z.len() != d {
            return Err(Error::Shape(format!(
                "latent of dim {} for token dim {d}",
                z.len()
            )));
        }
        let m = self.anchor.tokens.rows();
        let mut tape = Tape::new();
        let bound = tape.bind(&self.model.params);
        let z_leaf = tape.leaf(Tensor::row_vec(z.to_vec()), true);
        // tokens(z) = anchor + broadcast(z - pool(anchor))
        let pooled_anchor = crate::model::pool_tokens(&self.anchor.tokens);
        let offset = tape.constant(pooled_anchor.map(|v| -v));
        let shift = tape.add(z_leaf, offset)?;
        let shift_b = tape.broadcast_row(shift, m)?;
        let anchor = tape.constant(self.anchor.tokens.clone());
        let tokens = tape.add(anchor, shift_b)?;
        let ctx = TokenVar {
            tokens,
            centroids: self.anchor.centroids.clone(),
        };
        let pred = self
            .model
            .predict(&mut tape, &bound, &ctx, &self.cruise)?;
        let z_pred = self.model.pool_latent(&mut tape, pred.tokens)?;
        let probe_var = |tape: &mut Tape<f64>, probe: &ProbeModel| -> Result<crate::numerics::Var> {
            let neg_mu = tape.constant(Tensor::row_vec(
                probe.mu.iter().map(|&v| -v).collect(),
            ));
            let centered = tape.add(z_pred, neg_mu)?;
            let wos = tape.constant(Tensor::row_vec(probe.gradient()));
            let prod = tape.mul(centered, wos)?;
            let s = tape.sum(prod)?;
            tape.add_scalar(s, probe.b)
        };
        let yl = probe_var(&mut tape, &self.cl_probe)?;
        let yd = probe_var(&mut tape, &self.cd_probe)?;
        let gl = tape.backward(yl)?;
        let gd = tape.backward(yd)?;
        let extract = |g: &crate::numerics::Gradients<f64>| -> Vec<f64> {
            g.get(z_leaf)
                .map(|t| t.data().to_vec())
                .unwrap_or_else(|| vec![0.0; d])
        };
        let eval = AeroEval {
            cl: tape.value(yl).scalar_value()?,
            cd: tape.value(yd).scalar_value()?,
            grad_cl: extract(&gl),
            grad_cd: extract(&gd),
        };
        let out = AeroEval {
            cl: eval.cl,
            cd: eval.cd,
            grad_cl: eval.grad_cl.clone(),
            grad_cd: eval.grad_cd.clone(),
        };
        *self.cache.borrow_mut() = Some((z.to_vec(), eval));
        Ok(out)
    }

    /// Probed design vector `x(z)` over all design probes, in suite order
    /// (thickness, camber).
    pub fn decode_design(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.design_probes
            .iter()
            .map(|(_, p)| p.predict(z))
            .collect()
    }

    /// Lift a pooled latent to the context token shape used here.
    pub fn lift(&self, z: &[f64]) -> Result<TokenSet<f64>> {
        crate::latent_lab::lift_pooled(&self.anchor, z)
    }
}

impl NlpProblem for LatentOptProblem<'_> {
    fn dim(&self) -> usize {
        self.region.dim()
    }

    fn objective(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.aero(z)?;
        if e.cd.abs() < 1e-12 {
            return Err(Error::Numeric("probed drag vanished".into()));
        }
        let f = -e.cl / e.cd;
        // d(-cl/cd) = -g_cl/cd + cl g_cd / cd^2
        let grad = e
            .grad_cl
            .iter()
            .zip(&e.grad_cd)
            .map(|(&gl, &gd)| -gl / e.cd + e.cl * gd / (e.cd * e.cd))
            .collect();
        Ok((f, grad))
    }

    fn constraints(&self, z: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        let mut out = Vec::new();
        // 1. trust region
        out.push((
            self.region.mahalanobis(z)? - self.region.tau,
            self.region.mahalanobis_grad(z)?,
        ));
        // 2. affine design bounds on reliable probes
        for b in &self.design_bounds {
            let y = b.probe.predict(z)?;
            let g = b.probe.gradient();
            out.push((y - b.hi, g.clone()));
            out.push((b.lo - y, g.iter().map(|v| -v).collect()));
        }
        // 3.-4. aerodynamic envelope through the frozen predictor
        let e = self.aero(z)?;
        out.push((self.cd_floor - e.cd, e.grad_cd.iter().map(|v| -v).collect()));
        out.push((e.cl - self.cl_ceiling, e.grad_cl.clone()));
        out.push((e.cd - self.cd_ceiling, e.grad_cd.clone()));
        // L/D ceiling as cl - ld_max * cd <= 0
        out.push((
            e.cl - self.ld_max * e.cd,
            e.grad_cl
                .iter()
                .zip(&e.grad_cd)
                .map(|(&gl, &gd)| gl - self.ld_max * gd)
                .collect(),
        ));
        Ok(out)
    }
}

/// One restart's outcome.
#[derive(Clone, Debug)]
pub struct RestartTrace {
    pub z0: Vec<f64>,
    pub z: Vec<f64>,
    pub cl: f64,
    pub cd: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub feasible: bool,
}

/// Best feasible optimum across restarts.
#[derive(Clone, Debug)]
pub struct OptResult {
    pub z_star: Vec<f64>,
    pub cl: f64,
    pub cd: f64,
    pub ld: f64,
    /// Constraint values at the optimum (all <= tolerance).
    pub residuals: Vec<f64>,
    /// Probed design vector at the optimum.
    pub x_star: Vec<f64>,
    pub restarts: Vec<RestartTrace>,
    /// Count of feasible restarts within Mahalanobis distance 0.5 of the
    /// best optimum.
    pub neighborhood_count: usize,
    pub retrieved_case: usize,
    pub retrieved_distance: f64,
}

/// Feasibility tolerance for reported optima.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Multi-restart solve: restarts drawn from the train latent distribution
/// and projected inside the trust region.
pub fn solve(
    problem: &LatentOptProblem,
    table: &LatentTable,
    restarts: usize,
    seed: u64,
) -> Result<OptResult> {
    if restarts == 0 {
        return Err(Error::Argument("need >= 1 restart".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = Vec::with_capacity(restarts);
    for _ in 0..restarts {
        let z0 = problem.region.project_inside(&problem.region.sample(&mut rng))?;
        let out = sqp_solve(problem, &z0, 200, FEASIBILITY_TOL)?;
        let e = problem.aero(&out.z)?;
        traces.push(RestartTrace {
            z0,
            z: out.z,
            cl: e.cl,
            cd: e.cd,
            objective: out.objective,
            kkt_residual: out.kkt_residual,
            max_violation: out.max_violation,
            iterations: out.iterations,
            feasible: out.max_violation <= FEASIBILITY_TOL,
        });
    }
    let best = traces
        .iter()
        .filter(|t| t.feasible)
        .min_by(|a, b| a.objective.partial_cmp(&b.objective).unwrap());
    let Some(best) = best else {
        let report = traces
            .iter()
            .enumerate()
            .map(|(i, t)| format!("restart {i}: max violation {:.3e}", t.max_violation))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Infeasible(format!(
            "no feasible optimum in {restarts} restarts ({report})"
        )));
    };
    let best = best.clone();
    let neighborhood_count = traces
        .iter()
        .filter(|t| {
            t.feasible
                && problem
                    .region
                    .mahalanobis_between(&t.z, &best.z)
                    .map(|m| m.sqrt() <= 0.5)
                    .unwrap_or(false)
        })
        .count();
    let residuals: Vec<f64> = problem
        .constraints(&best.z)?
        .into_iter()
        .map(|(v, _)| v)
        .collect();
    let x_star = problem.decode_design(&best.z)?;
    let (retrieved_case, retrieved_distance) = retrieve_nearest(&x_star, table)?;
    Ok(OptResult {
        z_star: best.z.clone(),
        cl: best.cl,
        cd: best.cd,
        ld: best.cl / best.cd,
        residuals,
        x_star,
        restarts: traces,
        neighborhood_count,
        retrieved_case,
        retrieved_distance,
    })
}

/// Nearest dataset design to `x_star` in standardized Euclidean distance
/// (train-set standardization); ties broken by lowest case id.
pub fn retrieve_nearest(x_star: &[f64], table: &LatentTable) -> Result<(usize, f64)> {
    if x_star.len() != 2 {
        return Err(Error::Shape(format!(
            "design vector of dim {}, expected 2",
            x_star.len()
        )));
    }
    if table.rows.is_empty() {
        return Err(Error::Argument("empty latent table".into()));
    }
    let train: Vec<[f64; 2]> = table
        .split_rows(Split::Train)
        .map(|r| [r.design.thickness, r.design.camber])
        .collect();
    if train.is_empty() {
        return Err(Error::Argument("no train rows for standardization".into()));
    }
    let n = train.len() as f64;
    let mut mu = [0.0f64; 2];
    for x in &train {
        mu[0] += x[0];
        mu[1] += x[1];
    }
    mu[0] /= n;
    mu[1] /= n;
    let mut sd = [0.0f64; 2];
    for x in &train {
        sd[0] += (x[0] - mu[0]) * (x[0] - mu[0]);
        sd[1] += (x[1] - mu[1]) * (x[1] - mu[1]);
    }
    for s in &mut sd {
        *s = (*s / n).sqrt();
        if *s <= 0.0 {
            *s = 1.0;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for r in &table.rows {
        let x = [r.design.thickness, r.design.camber];
        let d0 = (x[0] - x_star[0]) / sd[0];
        let d1 = (x[1] - x_star[1]) / sd[1];
        let dist = (d0 * d0 + d1 * d1).sqrt();
        let better = match best {
            None => true,
            Some((bid, bd)) => {
                dist < bd || (dist == bd && r.case_id < bid)
            }
        };
        if better {
            best = Some((r.case_id, dist));
        }
    }
    Ok(best.expect("non-empty table"))
}

/// Train-mean context token set: the anchor for pooled-latent lifting.
pub fn mean_context_tokens(
    model: &AeroJepaModel<f64>,
    dataset: &crate::synthgen::Dataset,
    n_context: usize,
) -> Result<TokenSet<f64>> {
    let entries: Vec<&crate::synthgen::DatasetEntry> =
        dataset.split_entries(Split::Train).collect();
    if entries.is_empty() {
        return Err(Error::Argument("dataset has no train split".into()));
    }
    let mut tokens: Option<Tensor<f64>> = None;
    let mut centroids: Option<Tensor<f64>> = None;
    let inv = 1.0 / entries.len() as f64;
    for entry in &entries {
        let geom = &entry.case.geometry;
        let sub = geom.subset(&crate::geometry::fps(geom, n_context.min(geom.len()), 0)?)?;
        let ts = model.encode_context_values(&sub)?;
        tokens = Some(match tokens {
            None => ts.tokens.map(|v| v * inv),
            Some(acc) => acc.zip(&ts.tokens, |a, b| a + b * inv)?,
        });
        centroids = Some(match centroids {
            None => ts.centroids.map(|v| v * inv),
            Some(acc) => acc.zip(&ts.centroids, |a, b| a + b * inv)?,
        });
    }
    Ok(TokenSet {
        tokens: tokens.expect("non-empty"),
        centroids: centroids.expect("non-empty"),
    })
}
