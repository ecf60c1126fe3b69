//! Scratch diagnostic: seed sensitivity of FPS subset selection on an
//! airfoil contour.

use aerojepa::geometry::fps;
use aerojepa::synthgen::make_dataset;

fn main() {
    let dataset = make_dataset(3, 1, (0.4, 0.3, 0.3), 512, 0).unwrap();
    let geom = &dataset.entries[0].case.geometry;
    let mut sets: Vec<Vec<bool>> = Vec::new();
    for seed in 0..16u64 {
        let idx = fps(geom, 256, seed).unwrap();
        let mut mask = vec![false; 512];
        for i in idx {
            mask[i] = true;
        }
        sets.push(mask);
    }
    let mut union = vec![false; 512];
    for s in &sets {
        for (u, &b) in union.iter_mut().zip(s) {
            *u |= b;
        }
    }
    let covered = union.iter().filter(|&&b| b).count();
    let overlap01 = sets[0]
        .iter()
        .zip(&sets[1])
        .filter(|(&a, &b)| a && b)
        .count();
    println!("union coverage over 16 seeds: {covered}/512");
    println!("overlap between seeds 0 and 1: {overlap01}/256");
    let never = union.iter().filter(|&&b| !b).count();
    println!("points never selected: {never}");
}
