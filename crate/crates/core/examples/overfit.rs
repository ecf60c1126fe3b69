//! Scratch diagnostic: overfit a handful of cases and report train-split
//! reconstruction error, decoding both from predicted and from target tokens.

use aerojepa::model::{AeroJepaModel, ModelConfig};
use aerojepa::synthgen::{make_dataset, Split};
use aerojepa::training::{case_metrics, evaluate, train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(400);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.003);
    let dec_hidden: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(64);

    // 3 designs (1 train after the forced val/test reservation would be too
    // few; use 4 so 2 land in train) x 4 alphas at desk resolution.
    let dataset = make_dataset(4, 4, (0.5, 0.25, 0.25), 512, 0).unwrap();
    let n_train = dataset.split_entries(Split::Train).count();
    println!("train cases: {n_train}");
    let (mut ss, mut n) = (0.0, 0);
    for entry in dataset.split_entries(Split::Train) {
        let f = entry.case.field.features().unwrap();
        for r in 0..f.rows() {
            ss += f.at(r, 0) * f.at(r, 0);
            n += 1;
        }
    }
    println!("mean cp^2 over train fields: {:.4}", ss / n as f64);

    let mut mc = ModelConfig::desk();
    mc.decoder_hidden = dec_hidden;
    mc.fourier_bands = 6;
    let mut model = AeroJepaModel::<f64>::new(mc, 0).unwrap();

    let mut tc = TrainConfig::desk();
    tc.epochs = epochs;
    tc.batch_size = n_train.min(8);
    tc.optimizer.base_lr = lr;
    let result = train(&mut model, &dataset, &tc).unwrap();
    for e in result.history.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:4}  total {:.5}  lat {:.5}  rec {:.5}", e.epoch, e.total, e.lat, e.rec);
    }
    let last = result.history.last().unwrap();
    println!("final rec {:.6}", last.rec);

    let (report, _) = evaluate(&model, &dataset, Split::Train, tc.n_context, None).unwrap();
    println!("train-split rel_l2 from predicted tokens: {:.4}", report.channels[0][0].0);

    // Per-case relative error with the eval protocol.
    for entry in dataset.split_entries(Split::Train) {
        let geom = &entry.case.geometry;
        let idx = aerojepa::geometry::fps(geom, tc.n_context.min(geom.len()), 0).unwrap();
        let ctx = model.encode_context_values(&geom.subset(&idx).unwrap()).unwrap();
        let pred = model
            .predict_values(&ctx, &[entry.case.conditions.alpha, entry.case.conditions.mach])
            .unwrap();
        let queries =
            aerojepa::geometry::PointCloud::from_coords(entry.case.field.coords().clone()).unwrap();
        let decoded = model.decode_values(&pred, &queries).unwrap();
        let truth = entry.case.field.features().unwrap();
        let m = case_metrics(&decoded, truth).unwrap();
        let mut ss = 0.0;
        for r in 0..truth.rows() {
            ss += truth.at(r, 0) * truth.at(r, 0);
        }
        println!(
            "  case {:2} a={:+.3} mean^2 {:7.3}  rel_l2 {:.4}",
            entry.case_id,
            entry.case.conditions.alpha,
            ss / truth.rows() as f64,
            m[0][0]
        );
    }

    // Same eval but with a random context subset (training distribution).
    {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut accum = 0.0;
        for entry in dataset.split_entries(Split::Train) {
            let geom = &entry.case.geometry;
            let mut idx: Vec<usize> = (0..geom.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(tc.n_context);
            let ctx_cloud = geom.subset(&idx).unwrap();
            let ctx = model.encode_context_values(&ctx_cloud).unwrap();
            let pred = model
                .predict_values(&ctx, &[entry.case.conditions.alpha, entry.case.conditions.mach])
                .unwrap();
            let queries = aerojepa::geometry::PointCloud::from_coords(
                entry.case.field.coords().clone(),
            )
            .unwrap();
            let decoded = model.decode_values(&pred, &queries).unwrap();
            let m = case_metrics(&decoded, entry.case.field.features().unwrap()).unwrap();
            accum += m[0][0];
        }
        println!(
            "train-split rel_l2, random ctx subset:    {:.4}",
            accum / n_train as f64
        );
    }

    // Decode straight from target-encoder tokens (decoder ceiling).
    let mut accum = 0.0;
    for entry in dataset.split_entries(Split::Train) {
        let tgt = model.encode_target_values(&entry.case.field).unwrap();
        let queries =
            aerojepa::geometry::PointCloud::from_coords(entry.case.field.coords().clone()).unwrap();
        let decoded = model.decode_values(&tgt, &queries).unwrap();
        let truth = entry.case.field.features().unwrap();
        let m = case_metrics(&decoded, truth).unwrap();
        accum += m[0][0];
    }
    println!(
        "train-split rel_l2 from target tokens:    {:.4}",
        accum / n_train as f64
    );
}
