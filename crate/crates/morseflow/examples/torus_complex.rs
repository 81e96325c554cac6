//! Tilted height on the torus of revolution: four critical points, two
//! opposite-sign connecting orbits per index-gap-1 pair, and the Morse
//! complex with torus homology (1, 2, 1).

use morseflow::config::RunConfig;
use morseflow::pipeline::run_pipeline;

fn main() {
    let cfg = RunConfig::from_json(
        r#"{
            "morseflow_schema": 1,
            "manifold": { "catalog": { "torus": { "big_r": 2.0, "small_r": 1.0 } } },
            "function": "x3 + 0.05 * x1",
            "checks": ["classical_complex"]
        }"#,
    )
    .unwrap();
    let out = run_pipeline(&cfg, false).unwrap();
    for p in &out.report.critical_points {
        println!("point {}: index {}, f = {:+.4}", p.id, p.index, p.value);
    }
    for pair in &out.report.pairs {
        println!(
            "pair ({}, {}): gap {}, orbits {:?} signs {:?}",
            pair.upper, pair.lower, pair.index_gap, pair.orbit_count, pair.orbit_signs
        );
    }
    let cx = out.report.integer_complex.as_ref().unwrap();
    let ranks: Vec<usize> = cx.homology.iter().map(|g| g.free_rank).collect();
    println!("homology ranks: {ranks:?}");
    assert_eq!(ranks, vec![1, 2, 1]);
}
