//! Morse duality: running the pipeline for f and -f flips every index
//! k to n-k and transposes the differentials up to entrywise sign.

use morseflow::config::RunConfig;
use morseflow::pipeline::run_pipeline;

fn main() {
    let cfg = RunConfig::from_json(
        r#"{
            "morseflow_schema": 1,
            "manifold": { "catalog": { "torus": { "big_r": 2.0, "small_r": 1.0 } } },
            "function": "x3 + 0.05 * x1",
            "checks": ["classical_complex", "duality"]
        }"#,
    )
    .unwrap();
    let out = run_pipeline(&cfg, false).unwrap();
    let duality = out.report.duality.as_ref().unwrap();
    println!("duality holds: {}", duality.holds);
    println!("detail: {}", duality.detail);
    assert!(duality.holds);
}
