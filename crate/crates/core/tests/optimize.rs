//! Constrained-optimization tests: the Mahalanobis trust region against
//! explicit-inverse oracles, the SQP core on problems with known solutions,
//! and nearest-design retrieval.

use aerojepa::numerics::Tensor;
use aerojepa::optimize::{
    chi2_quantile_95, retrieve_nearest, sqp_solve, NlpProblem, TrustRegion, FEASIBILITY_TOL,
};
use aerojepa::synthgen::{Conditions, DesignParams, Split};
use aerojepa::training::{LatentRow, LatentTable};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spd_covariance(d: usize, seed: u64) -> Tensor<f64> {
    // A A^T + I: symmetric positive definite by construction
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let m = &a * a.transpose() + DMatrix::identity(d, d);
    Tensor::new(d, d, m.transpose().as_slice().to_vec()).unwrap()
}

// ------------------------------------------------------------- trust region

#[test]
fn mahalanobis_vanishes_at_the_mean() {
    let region = TrustRegion::new(vec![1.0, -2.0, 0.5], spd_covariance(3, 0), None).unwrap();
    assert_eq!(region.mahalanobis(&[1.0, -2.0, 0.5]).unwrap(), 0.0);
    let g = region.mahalanobis_grad(&[1.0, -2.0, 0.5]).unwrap();
    assert!(g.iter().all(|&v| v.abs() < 1e-12));
}

#[test]
fn identity_covariance_reduces_to_squared_euclidean_distance() {
    let region = TrustRegion::new(vec![0.0; 4], {
        let mut t = Tensor::zeros(4, 4);
        for i in 0..4 {
            *t.at_mut(i, i) = 1.0;
        }
        t
    }, None)
    .unwrap();
    let z = [1.0, -2.0, 0.5, 3.0];
    let want: f64 = z.iter().map(|v| v * v).sum();
    let got = region.mahalanobis(&z).unwrap();
    // the stored covariance is regularized by +1e-6 I
    assert!((got - want).abs() / want < 1e-5, "{got} vs {want}");
}

#[test]
fn quadratic_form_matches_an_explicit_inverse_oracle() {
    let d = 5;
    let mu = vec![0.3, -0.7, 1.1, 0.0, -0.2];
    let region = TrustRegion::new(mu.clone(), spd_covariance(d, 1), None).unwrap();
    // oracle: invert the (regularized) covariance the region actually stores
    let sigma = DMatrix::from_fn(d, d, |r, c| region.cov.at(r, c));
    let inv = sigma.try_inverse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let r = nalgebra::DVector::from_fn(d, |i, _| z[i] - mu[i]);
        let want = r.dot(&(&inv * &r));
        let got = region.mahalanobis(&z).unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        // gradient oracle: 2 Sigma^{-1} (z - mu)
        let gw = &inv * &r * 2.0;
        let g = region.mahalanobis_grad(&z).unwrap();
        for i in 0..d {
            assert!((g[i] - gw[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let d = 4;
    let region =
        TrustRegion::new(vec![0.1, 0.2, -0.3, 0.4], spd_covariance(d, 3), None).unwrap();
    let z = [0.9, -0.5, 0.2, 1.3];
    let g = region.mahalanobis_grad(&z).unwrap();
    let eps = 1e-6;
    for i in 0..d {
        let mut hi = z;
        let mut lo = z;
        hi[i] += eps;
        lo[i] -= eps;
        let fd = (region.mahalanobis(&hi).unwrap() - region.mahalanobis(&lo).unwrap())
            / (2.0 * eps);
        assert!((g[i] - fd).abs() < 1e-8, "dim {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn from_latents_recovers_the_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 50;
    let d = 3;
    let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = Tensor::new(n, d, data).unwrap();
    let region = TrustRegion::from_latents(&z, None).unwrap();
    for c in 0..d {
        let mean: f64 = (0..n).map(|r| z.at(r, c)).sum::<f64>() / n as f64;
        assert!((region.mu[c] - mean).abs() < 1e-12);
    }
    assert!((region.tau - chi2_quantile_95(d)).abs() < 1e-12);
}

#[test]
fn degenerate_region_inputs_are_errors() {
    assert!(TrustRegion::new(vec![0.0; 3], Tensor::zeros(2, 2), None).is_err());
    let one_row = Tensor::new(1, 3, vec![0.0; 3]).unwrap();
    assert!(TrustRegion::from_latents(&one_row, None).is_err());
    let region = TrustRegion::new(vec![0.0; 2], spd_covariance(2, 5), None).unwrap();
    assert!(region.mahalanobis(&[0.0; 3]).is_err());
}

#[test]
fn samples_projected_inside_satisfy_the_region() {
    let region = TrustRegion::new(vec![0.5, -0.5], spd_covariance(2, 6), Some(1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let z = region.sample(&mut rng);
        let p = region.project_inside(&z).unwrap();
        assert!(region.mahalanobis(&p).unwrap() < region.tau);
        // interior points pass through untouched
        if region.mahalanobis(&z).unwrap() < region.tau {
            assert_eq!(p, z);
        }
    }
}

#[test]
fn chi_square_quantiles_match_tabulated_values() {
    // standard 95% quantiles: d=2 -> 5.991, d=5 -> 11.070, d=10 -> 18.307
    for (d, want) in [(2usize, 5.991), (5, 11.070), (10, 18.307)] {
        let got = chi2_quantile_95(d);
        assert!(
            (got - want).abs() / want < 0.015,
            "d={d}: {got} vs {want}"
        );
    }
}

// --------------------------------------------------------------------- SQP

/// Maximize z_0 (minimize -z_0) inside a Euclidean ball of radius sqrt(tau).
struct BallProblem {
    region: TrustRegion,
}

impl NlpProblem for BallProblem {
    fn dim(&self) -> usize {
        self.region.dim()
    }
    fn objective(&self, z: &[f64]) -> aerojepa::Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; z.len()];
        g[0] = -1.0;
        Ok((-z[0], g))
    }
    fn constraints(&self, z: &[f64]) -> aerojepa::Result<Vec<(f64, Vec<f64>)>> {
        Ok(vec![(
            self.region.mahalanobis(z)? - self.region.tau,
            self.region.mahalanobis_grad(z)?,
        )])
    }
}

#[test]
fn linear_objective_on_a_ball_lands_on_the_boundary_point() {
    let d = 3;
    let mu = vec![1.0, -0.5, 2.0];
    let mut eye = Tensor::zeros(d, d);
    for i in 0..d {
        *eye.at_mut(i, i) = 1.0;
    }
    let tau = 2.25;
    let problem = BallProblem {
        region: TrustRegion::new(mu.clone(), eye, Some(tau)).unwrap(),
    };
    let out = sqp_solve(&problem, &mu, 200, 1e-8).unwrap();
    // optimum: mu + sqrt(tau) e_0 (up to the 1e-6 covariance regularization)
    let want0 = mu[0] + tau.sqrt();
    assert!(out.converged, "kkt residual {}", out.kkt_residual);
    assert!((out.z[0] - want0).abs() < 1e-5, "{} vs {want0}", out.z[0]);
    assert!((out.z[1] - mu[1]).abs() < 1e-5);
    assert!((out.z[2] - mu[2]).abs() < 1e-5);
    assert!(out.max_violation <= 1e-6);
}

/// min 1/2 ||z - a||^2 subject to c^T z <= b.
struct HalfspaceProblem {
    a: Vec<f64>,
    c: Vec<f64>,
    b: f64,
}

impl NlpProblem for HalfspaceProblem {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn objective(&self, z: &[f64]) -> aerojepa::Result<(f64, Vec<f64>)> {
        let f = 0.5
            * z.iter()
                .zip(&self.a)
                .map(|(zi, ai)| (zi - ai) * (zi - ai))
                .sum::<f64>();
        let g = z.iter().zip(&self.a).map(|(zi, ai)| zi - ai).collect();
        Ok((f, g))
    }
    fn constraints(&self, z: &[f64]) -> aerojepa::Result<Vec<(f64, Vec<f64>)>> {
        let v = z.iter().zip(&self.c).map(|(zi, ci)| zi * ci).sum::<f64>() - self.b;
        Ok(vec![(v, self.c.clone())])
    }
}

#[test]
fn projection_onto_a_halfspace_matches_the_closed_form() {
    // with the constraint active, z* = a - ((c.a - b)/||c||^2) c and the
    // multiplier is (c.a - b)/||c||^2
    let problem = HalfspaceProblem {
        a: vec![2.0, 1.0, -0.5],
        c: vec![1.0, 2.0, -1.0],
        b: 0.5,
    };
    let ca: f64 = problem.a.iter().zip(&problem.c).map(|(a, c)| a * c).sum();
    let cc: f64 = problem.c.iter().map(|c| c * c).sum();
    let lambda = (ca - problem.b) / cc;
    assert!(lambda > 0.0, "constraint must be active for this fixture");
    let want: Vec<f64> = problem
        .a
        .iter()
        .zip(&problem.c)
        .map(|(a, c)| a - lambda * c)
        .collect();
    let out = sqp_solve(&problem, &[0.0; 3], 200, 1e-8).unwrap();
    assert!(out.converged);
    assert!(out.kkt_residual <= 1e-6, "kkt residual {}", out.kkt_residual);
    for i in 0..3 {
        assert!(
            (out.z[i] - want[i]).abs() < 1e-5,
            "coordinate {i}: {} vs {}",
            out.z[i],
            want[i]
        );
    }
    assert!(out.max_violation <= 1e-8);
}

#[test]
fn unconstrained_quadratic_reaches_its_minimum() {
    struct Unconstrained;
    impl NlpProblem for Unconstrained {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, z: &[f64]) -> aerojepa::Result<(f64, Vec<f64>)> {
            let f = (z[0] - 3.0).powi(2) + 2.0 * (z[1] + 1.0).powi(2);
            Ok((f, vec![2.0 * (z[0] - 3.0), 4.0 * (z[1] + 1.0)]))
        }
        fn constraints(&self, _z: &[f64]) -> aerojepa::Result<Vec<(f64, Vec<f64>)>> {
            Ok(vec![])
        }
    }
    let out = sqp_solve(&Unconstrained, &[0.0, 0.0], 100, 1e-10).unwrap();
    assert!(out.converged);
    assert!((out.z[0] - 3.0).abs() < 1e-6);
    assert!((out.z[1] + 1.0).abs() < 1e-6);
    assert!(out.objective < 1e-10);
}

#[test]
fn mismatched_start_dimension_is_an_error() {
    let problem = HalfspaceProblem {
        a: vec![0.0, 0.0],
        c: vec![1.0, 0.0],
        b: 1.0,
    };
    assert!(sqp_solve(&problem, &[0.0; 3], 10, 1e-6).is_err());
}

#[test]
fn feasibility_tolerance_is_the_declared_constant() {
    assert_eq!(FEASIBILITY_TOL, 1e-6);
}

// ---------------------------------------------------------------- retrieval

fn design_table(designs: &[(f64, f64)]) -> LatentTable {
    let rows = designs
        .iter()
        .enumerate()
        .map(|(i, &(thickness, camber))| LatentRow {
            case_id: i,
            design_id: i,
            split: if i + 1 < designs.len() {
                Split::Train
            } else {
                Split::Test
            },
            design: DesignParams { thickness, camber },
            conditions: Conditions { alpha: 0.1, mach: 0.0 },
            cl: 0.5,
            cd: 0.02,
            z_ctx: vec![0.0; 4],
            z_pred: vec![0.0; 4],
            z_tgt: vec![0.0; 4],
        })
        .collect();
    LatentTable { rows, dim: 4 }
}

#[test]
fn exact_design_match_retrieves_at_zero_distance() {
    let table = design_table(&[(0.10, 0.02), (0.14, 0.04), (0.18, 0.01), (0.12, 0.05)]);
    let (case, dist) = retrieve_nearest(&[0.14, 0.04], &table).unwrap();
    assert_eq!(case, 1);
    assert_eq!(dist, 0.0);
}

#[test]
fn retrieval_matches_a_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let designs: Vec<(f64, f64)> = (0..20)
        .map(|_| (rng.gen_range(0.08..0.22), rng.gen_range(0.0..0.06)))
        .collect();
    let table = design_table(&designs);
    // standardization statistics from the train split, recomputed here
    let train: Vec<(f64, f64)> = designs[..19].to_vec();
    let n = train.len() as f64;
    let mu = (
        train.iter().map(|d| d.0).sum::<f64>() / n,
        train.iter().map(|d| d.1).sum::<f64>() / n,
    );
    let sd = (
        (train.iter().map(|d| (d.0 - mu.0).powi(2)).sum::<f64>() / n).sqrt(),
        (train.iter().map(|d| (d.1 - mu.1).powi(2)).sum::<f64>() / n).sqrt(),
    );
    for _ in 0..20 {
        let q = [rng.gen_range(0.08..0.22), rng.gen_range(0.0..0.06)];
        let (case, dist) = retrieve_nearest(&q, &table).unwrap();
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, d) in designs.iter().enumerate() {
            let d0 = (d.0 - q[0]) / sd.0;
            let d1 = (d.1 - q[1]) / sd.1;
            let dd = (d0 * d0 + d1 * d1).sqrt();
            if dd < best.1 {
                best = (i, dd);
            }
        }
        assert_eq!(case, best.0);
        assert!((dist - best.1).abs() < 1e-12);
    }
}

#[test]
fn retrieval_input_validation() {
    let table = design_table(&[(0.1, 0.02), (0.12, 0.03)]);
    assert!(retrieve_nearest(&[0.1], &table).is_err());
    assert!(retrieve_nearest(&[0.1, 0.02, 0.0], &table).is_err());
    let empty = LatentTable::default();
    assert!(retrieve_nearest(&[0.1, 0.02], &empty).is_err());
}
