//! Scratch diagnostic: per-case relative error of a trained checkpoint.

use aerojepa::geometry::{fps, PointCloud};
use aerojepa::io::{load_checkpoint, load_dataset};
use aerojepa::synthgen::Split;
use aerojepa::training::case_metrics;
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = &args[1];
    let data = &args[2];
    let split = match args.get(3).map(String::as_str) {
        Some("train") => Split::Train,
        Some("val") => Split::Val,
        _ => Split::Test,
    };
    let model = load_checkpoint(Path::new(ckpt)).unwrap();
    let dataset = load_dataset(Path::new(data)).unwrap();
    let mut cases: Vec<(f64, f64, f64, f64, usize)> = Vec::new();
    for entry in dataset.split_entries(split) {
        let geom = &entry.case.geometry;
        let idx = fps(geom, 256.min(geom.len()), 0).unwrap();
        let ctx = model.encode_context_values(&geom.subset(&idx).unwrap()).unwrap();
        let pred = model
            .predict_values(&ctx, &[entry.case.conditions.alpha, entry.case.conditions.mach])
            .unwrap();
        let queries = PointCloud::from_coords(entry.case.field.coords().clone()).unwrap();
        let decoded = model.decode_values(&pred, &queries).unwrap();
        let truth = entry.case.field.features().unwrap();
        let m = case_metrics(&decoded, truth).unwrap();
        let mut ss = 0.0;
        for r in 0..truth.rows() {
            ss += truth.at(r, 0) * truth.at(r, 0);
        }
        cases.push((
            m[0][0],
            entry.case.conditions.alpha,
            entry.case.design.thickness,
            ss / truth.rows() as f64,
            entry.case_id,
        ));
    }
    cases.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mean: f64 = cases.iter().map(|c| c.0).sum::<f64>() / cases.len() as f64;
    println!("mean rel_l2: {mean:.4} over {} cases", cases.len());
    for (rel, alpha, t, e, id) in cases {
        println!(
            "  case {id:3}  rel {rel:.4}  alpha {alpha:+.3}  thick {t:.3}  mean^2 {e:7.3}"
        );
    }
}
