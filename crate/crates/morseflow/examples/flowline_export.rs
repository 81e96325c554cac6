//! Exporting connecting-orbit polylines as CSV
//! (columns run_id, orbit_id, t_index, x1..xN).

use morseflow::config::RunConfig;
use morseflow::pipeline::{run_pipeline, write_flowlines_csv};

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
    let out = run_pipeline(&cfg, true).unwrap();
    let mut buf = Vec::new();
    write_flowlines_csv("example", &out.flowlines, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    println!("{}", lines[0]);
    for l in lines.iter().skip(1).take(5) {
        println!("{l}");
    }
    println!("... {} rows total", lines.len() - 1);
}
