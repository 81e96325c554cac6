//! S² x S² with f = x3 + x6: one-dimensional connecting moduli between the
//! index-gap-2 pairs, swept-factor labels, and the extended complex over
//! the mod-2 Pontryagin ring of the loop space. Takes a minute or two.

use morseflow::config::RunConfig;
use morseflow::pipeline::run_pipeline;

fn main() {
    let cfg = RunConfig::from_json(
        r#"{
            "morseflow_schema": 1,
            "manifold": { "catalog": { "product": [ { "sphere": 2 }, { "sphere": 2 } ] } },
            "function": "x3 + x6",
            "checks": ["classical_complex", "extended_complex"]
        }"#,
    )
    .unwrap();
    let out = run_pipeline(&cfg, false).unwrap();
    for m in &out.report.moduli {
        println!(
            "moduli ({}, {}): dim {}, {} components, swept {:?}",
            m.upper, m.lower, m.dimension, m.component_count, m.swept_label
        );
    }
    let ext = out.report.extended_complex.as_ref().unwrap();
    println!("ring: {}", ext.ring_tag);
    for e in &ext.entries {
        println!("d'({}) ∋ {:?} · {}", e.upper, e.class, e.lower);
    }
    println!(
        "accepted: {} ({} composites vanish)",
        ext.accepted, ext.composites_checked
    );
    assert!(ext.accepted);
}
