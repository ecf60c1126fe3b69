//! Scratch diagnostic: per-case surface-pressure statistics.

use aerojepa::synthgen::make_dataset;

fn main() {
    let dataset = make_dataset(8, 4, (0.5, 0.25, 0.25), 512, 0).unwrap();
    for entry in &dataset.entries {
        let f = entry.case.field.features().unwrap();
        let n = f.rows();
        let (mut mn, mut mx, mut ss) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        let mut arg = 0;
        for r in 0..n {
            let v = f.at(r, 0);
            if v < mn {
                mn = v;
                arg = r;
            }
            mx = mx.max(v);
            ss += v * v;
        }
        let d = &entry.case.design;
        println!(
            "case {:2} design {} a={:+.3} t={:.3} c={:.3}  cp in [{:8.3}, {:6.3}] mean^2 {:8.4} argmin {}",
            entry.case_id,
            entry.design_id,
            entry.case.conditions.alpha,
            d.thickness,
            d.camber,
            mn,
            mx,
            ss / n as f64,
            arg
        );
    }
}
