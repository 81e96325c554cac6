//! Stable stems, Im(J) membership, and the smoothability obstruction
//! verdict on attaching-map data.

use morseflow::stems::{render_table, smoothing_verdict, StemElement};

fn main() {
    print!("{}", render_table());

    let zero = StemElement { residues: vec![0] };
    let eta_sq = StemElement { residues: vec![1] };
    println!(
        "k=2, delta=0 vs delta'=eta^2: {:?}",
        smoothing_verdict(2, &zero, &eta_sq).unwrap()
    );
    for mult in [5i64, 13] {
        let d = StemElement { residues: vec![mult] };
        println!(
            "k=3, delta=0 vs delta'={mult}nu: {:?}",
            smoothing_verdict(3, &zero, &d).unwrap()
        );
    }
}
