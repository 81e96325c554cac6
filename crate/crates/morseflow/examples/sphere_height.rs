//! Height function on S²: two critical points and sphere homology,
//! driven through the full pipeline.

use morseflow::config::RunConfig;
use morseflow::pipeline::run_pipeline;

fn main() {
    let cfg = RunConfig::from_json(
        r#"{
            "morseflow_schema": 1,
            "manifold": { "catalog": { "sphere": 2 } },
            "function": "x3",
            "checks": ["classical_complex"]
        }"#,
    )
    .unwrap();
    let out = run_pipeline(&cfg, false).unwrap();
    for p in &out.report.critical_points {
        println!(
            "critical point {}: index {}, f = {:+.3}, at {:?}",
            p.id, p.index, p.value, p.location
        );
    }
    let h = &out.report.integer_complex.as_ref().unwrap().homology;
    let ranks: Vec<usize> = h.iter().map(|g| g.free_rank).collect();
    println!("homology ranks: {ranks:?}");
    assert_eq!(ranks, vec![1, 0, 1]);
}
