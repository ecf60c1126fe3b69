//! Neural-block tests: Fourier encoding, neighborhood attention duality,
//! permutation equivariance, modulation identity at init, and gradient
//! checks through every block.

use aerojepa::nn::{
    fourier_encode, fourier_width, knn_indices, AdaModulate, CrossAttention, Initializer,
    LocalSelfAttention, Mlp, NeighborhoodImpl,
};
use aerojepa::numerics::{finite_diff_gradients, max_rel_err, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
    Tensor::new(rows, cols, data.to_vec()).unwrap()
}

fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

// ------------------------------------------------------------------ fourier

#[test]
fn fourier_at_zero_is_zero_sines_unit_cosines() {
    let enc = fourier_encode(&[0.0f64, 0.0], 4);
    assert_eq!(enc.len(), 16);
    assert!(enc[..8].iter().all(|&v| v == 0.0));
    assert!(enc[8..].iter().all(|&v| v == 1.0));
}

#[test]
fn fourier_width_2d_b4_is_16() {
    assert_eq!(fourier_width(2, 4), 16);
}

#[test]
fn fourier_is_injective_on_unit_interval_at_b8() {
    // scan [0,1) on a 1e-3 grid and look for collisions
    let mut seen: Vec<(u64, Vec<u64>)> = Vec::new();
    for i in 0..1000u64 {
        let x = i as f64 * 1e-3;
        let enc: Vec<u64> = fourier_encode(&[x], 8).iter().map(|v| v.to_bits()).collect();
        for (j, e) in &seen {
            assert_ne!(e, &enc, "collision between {} and {}", j, i);
        }
        seen.push((i, enc));
    }
}

// --------------------------------------------------------------------- knn

#[test]
fn knn_includes_self_and_breaks_ties_by_lowest_index() {
    let cent = t(4, 1, &[0.0, 1.0, 2.0, 3.0]);
    let nbrs = knn_indices(&cent, 2).unwrap();
    assert_eq!(nbrs[0], vec![0, 1]);
    // point 1 is equidistant from 0 and 2; lowest index wins
    assert_eq!(nbrs[1], vec![1, 0]);
    assert_eq!(nbrs[3], vec![3, 2]);
}

// --------------------------------------------------------- local attention

struct AttnFixture {
    params: ParamStore<f64>,
    attn: LocalSelfAttention,
    tokens: Tensor<f64>,
    centroids: Tensor<f64>,
}

fn attn_fixture(m: usize, d: usize, heads: usize, seed: u64) -> AttnFixture {
    let mut params = ParamStore::new();
    let mut init = Initializer::new(seed);
    let attn = LocalSelfAttention::init(&mut params, &mut init, "attn", d, heads);
    AttnFixture {
        params,
        attn,
        tokens: random_tensor(m, d, seed ^ 1),
        centroids: random_tensor(m, 2, seed ^ 2),
    }
}

fn run_local(
    fx: &AttnFixture,
    tokens: &Tensor<f64>,
    centroids: &Tensor<f64>,
    k: usize,
    mode: NeighborhoodImpl,
) -> Tensor<f64> {
    let mut tape = Tape::<f64>::new();
    let bound = tape.bind(&fx.params);
    let x = tape.constant(tokens.clone());
    let y = fx
        .attn
        .forward(&mut tape, &bound, x, centroids, k, mode)
        .unwrap();
    tape.value(y).clone()
}

#[test]
fn full_neighborhood_equals_dense_attention() {
    let fx = attn_fixture(6, 8, 2, 3);
    let local = run_local(&fx, &fx.tokens, &fx.centroids, 6, NeighborhoodImpl::Masked);
    // dense attention: run the same mha with no mask on the normalized
    // stream, then add the residual
    let mut tape = Tape::<f64>::new();
    let bound = tape.bind(&fx.params);
    let x = tape.constant(fx.tokens.clone());
    let n = fx.attn.norm.forward(&mut tape, &bound, x).unwrap();
    let att = fx
        .attn
        .mha
        .attend(&mut tape, &bound, n, n, None)
        .unwrap();
    let y = tape.add(x, att).unwrap();
    let dense = tape.value(y);
    for (a, b) in local.data().iter().zip(dense.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn masked_and_gather_neighborhoods_agree() {
    for seed in 0..5 {
        let fx = attn_fixture(8, 8, 2, seed);
        let a = run_local(&fx, &fx.tokens, &fx.centroids, 3, NeighborhoodImpl::Masked);
        let b = run_local(&fx, &fx.tokens, &fx.centroids, 3, NeighborhoodImpl::Gather);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12, "seed {seed}: {x} vs {y}");
        }
    }
}

#[test]
fn local_attention_is_permutation_equivariant() {
    let fx = attn_fixture(7, 8, 2, 11);
    let base = run_local(&fx, &fx.tokens, &fx.centroids, 3, NeighborhoodImpl::Masked);
    let perm = [3usize, 0, 6, 1, 5, 2, 4];
    let permute = |t: &Tensor<f64>| {
        let mut data = Vec::new();
        for &p in &perm {
            data.extend_from_slice(t.row(p));
        }
        Tensor::new(t.rows(), t.cols(), data).unwrap()
    };
    let permuted = run_local(
        &fx,
        &permute(&fx.tokens),
        &permute(&fx.centroids),
        3,
        NeighborhoodImpl::Masked,
    );
    let expected = permute(&base);
    for (a, b) in permuted.data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

// --------------------------------------------------------- cross attention

#[test]
fn single_context_token_yields_value_transform_for_every_query() {
    // with one context token the softmax is trivially 1, so all queries read
    // the same attended value; outputs differ only through the residual/norm.
    let mut params = ParamStore::new();
    let mut init = Initializer::new(5);
    let ca = CrossAttention::init(&mut params, &mut init, "ca", 8, 2);
    let ctx_tok = random_tensor(1, 8, 6);
    let queries = random_tensor(4, 8, 7);
    let mut tape = Tape::<f64>::new();
    let bound = tape.bind(&params);
    let q = tape.constant(queries.clone());
    let c = tape.constant(ctx_tok.clone());
    let att = ca.mha.attend(&mut tape, &bound, q, c, None).unwrap();
    let out = tape.value(att);
    // attended output before residual: identical row for every query
    for r in 1..4 {
        for col in 0..8 {
            assert!((out.at(r, col) - out.at(0, col)).abs() < 1e-12);
        }
    }
}

#[test]
fn duplicating_context_tokens_leaves_output_unchanged() {
    let mut params = ParamStore::new();
    let mut init = Initializer::new(9);
    let ca = CrossAttention::init(&mut params, &mut init, "ca", 8, 2);
    let ctx = random_tensor(3, 8, 10);
    let queries = random_tensor(4, 8, 11);
    let doubled = {
        let mut data = ctx.data().to_vec();
        data.extend_from_slice(ctx.data());
        Tensor::new(6, 8, data).unwrap()
    };
    let run = |context: &Tensor<f64>| {
        let mut tape = Tape::<f64>::new();
        let bound = tape.bind(&params);
        let q = tape.constant(queries.clone());
        let c = tape.constant(context.clone());
        let y = ca.forward(&mut tape, &bound, q, c).unwrap();
        tape.value(y).clone()
    };
    let a = run(&ctx);
    let b = run(&doubled);
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn cross_attention_dim_mismatch_is_an_error() {
    let mut params = ParamStore::new();
    let mut init = Initializer::new(1);
    let ca = CrossAttention::init(&mut params, &mut init, "ca", 8, 2);
    let mut tape = Tape::<f64>::new();
    let bound = tape.bind(&params);
    let q = tape.constant(random_tensor(2, 8, 1));
    let c = tape.constant(random_tensor(2, 6, 2));
    assert!(ca.mha.attend(&mut tape, &bound, q, c, None).is_err());
}

// ------------------------------------------------------------ ada modulate

#[test]
fn ada_modulate_is_exact_identity_at_init() {
    let mut params = ParamStore::new();
    let mut init = Initializer::new(2);
    let ada = AdaModulate::init(&mut params, &mut init, "ada", 4, 8);
    let tokens = random_tensor(5, 8, 3);
    let cond = random_tensor(1, 4, 4);
    let mut tape = Tape::<f64>::new();
    let bound = tape.bind(&params);
    let x = tape.constant(tokens.clone());
    let c = tape.constant(cond);
    let y = ada.forward(&mut tape, &bound, x, c).unwrap();
    for (a, b) in tape.value(y).data().iter().zip(tokens.data()) {
        assert_eq!(a.to_bits(), b.to_bits(), "identity must be bit-exact");
    }
}

#[test]
fn ada_modulate_responds_to_condition_after_gate_opens() {
    let mut params = ParamStore::new();
    let mut init = Initializer::new(2);
    let ada = AdaModulate::init(&mut params, &mut init, "ada", 4, 8);
    // open the gate manually (simulating a training step)
    let wid = params.id_by_name("ada.w").unwrap();
    for c in 16..24 {
        *params.get_mut(wid).at_mut(0, c) = 0.3;
    }
    let tokens = random_tensor(5, 8, 3);
    let run = |cond: &Tensor<f64>| {
        let mut tape = Tape::<f64>::new();
        let bound = tape.bind(&params);
        let x = tape.constant(tokens.clone());
        let c = tape.constant(cond.clone());
        let y = ada.forward(&mut tape, &bound, x, c).unwrap();
        tape.value(y).clone()
    };
    let a = run(&random_tensor(1, 4, 6));
    let b = run(&random_tensor(1, 4, 7));
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum();
    assert!(diff > 1e-6, "two conditions must give different outputs");
}

// --------------------------------------------------------- gradient checks

fn check_grad<F>(params: &ParamStore<f64>, tol: f64, build: F)
where
    F: Fn(&mut Tape<f64>, &aerojepa::numerics::BoundParams) -> Var,
{
    let mut tape = Tape::<f64>::new();
    let bound = tape.bind(params);
    let loss = build(&mut tape, &bound);
    let grads = tape.backward(loss).unwrap();
    let analytic = tape.param_grads(params, &bound, &grads);
    let numeric = finite_diff_gradients(params, 1e-5, |p| {
        let mut tape = Tape::<f64>::new();
        let bound = tape.bind(p);
        let loss = build(&mut tape, &bound);
        tape.value(loss).scalar_value()
    })
    .unwrap();
    let err = max_rel_err(&analytic, &numeric, 1e-6);
    assert!(err < tol, "max rel err {err} >= {tol}");
}

#[test]
fn gradcheck_local_attention_both_modes() {
    for mode in [NeighborhoodImpl::Masked, NeighborhoodImpl::Gather] {
        let fx = attn_fixture(5, 8, 2, 21);
        check_grad(&fx.params, 1e-4, |tape, bound| {
            let x = tape.constant(fx.tokens.clone());
            let y = fx
                .attn
                .forward(tape, bound, x, &fx.centroids, 3, mode)
                .unwrap();
            let sq = tape.mul(y, y).unwrap();
            tape.mean(sq).unwrap()
        });
    }
}

#[test]
fn gradcheck_cross_attention() {
    let mut params = ParamStore::new();
    let mut init = Initializer::new(22);
    let ca = CrossAttention::init(&mut params, &mut init, "ca", 8, 2);
    let queries = random_tensor(3, 8, 23);
    let ctx = random_tensor(4, 8, 24);
    check_grad(&params, 1e-4, |tape, bound| {
        let q = tape.constant(queries.clone());
        let c = tape.constant(ctx.clone());
        let y = ca.forward(tape, bound, q, c).unwrap();
        let sq = tape.mul(y, y).unwrap();
        tape.mean(sq).unwrap()
    });
}

#[test]
fn gradcheck_ada_modulate_condition_path() {
    let mut params = ParamStore::new();
    let mut init = Initializer::new(25);
    let ada = AdaModulate::init(&mut params, &mut init, "ada", 4, 8);
    let mlp = Mlp::init(&mut params, &mut init, "cond_mlp", 2, 6, 4);
    let tokens = random_tensor(4, 8, 26);
    let raw_cond = t(1, 2, &[0.1, 0.0]);
    check_grad(&params, 1e-4, |tape, bound| {
        let x = tape.constant(tokens.clone());
        let rc = tape.constant(raw_cond.clone());
        let emb = mlp.forward(tape, bound, rc).unwrap();
        let y = ada.forward(tape, bound, x, emb).unwrap();
        let sq = tape.mul(y, y).unwrap();
        tape.mean(sq).unwrap()
    });
    // at init the gate is zero, but the gradient wrt the gate columns is not:
    // verified implicitly by the finite-difference agreement above.
}
