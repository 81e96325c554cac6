//! End-to-end check on the tilted flat torus: critical points, consecutive
//! pairs, connecting orbits with signs, Morse complex, homology, duality.

use morseflow::complex::{
    build_morse_complex, duality_transpose_check, homology_ranks, Coefficients,
};
use morseflow::critical::{consecutive_pairs, find_critical_points};
use morseflow::expr::parse;
use morseflow::flow::{enumerate_orbits_zero_dim, reachability, OrbitParams};
use morseflow::geometry::{Catalog, ImplicitManifold, RestrictedFunction};

fn torus_setup() -> (RestrictedFunction, Vec<f64>) {
    let catalog = Catalog::Torus {
        big_r: 2.0,
        small_r: 1.0,
    };
    let halfwidths = catalog.bounding_halfwidths();
    let manifold = ImplicitManifold::from_catalog(catalog).unwrap();
    let f = parse("x3 + 0.05 * x1", 3).unwrap();
    (RestrictedFunction::new(f, manifold), halfwidths)
}

#[test]
fn torus_full_chain() {
    let (rf, halfwidths) = torus_setup();
    let points = find_critical_points(&rf, 400, 0, &halfwidths).unwrap();
    assert_eq!(points.len(), 4, "expected 4 critical points");
    let indices: Vec<usize> = points.iter().map(|p| p.index).collect();
    assert_eq!(indices, vec![2, 1, 1, 0], "value-sorted indices");

    let params = OrbitParams::default();
    let reach = reachability(&rf, &points, &params).unwrap();
    let pairs = consecutive_pairs(&points, |a, b| reach[a][b]);
    eprintln!(
        "pairs: {:?}",
        pairs
            .iter()
            .map(|p| (p.upper, p.lower, p.index_gap))
            .collect::<Vec<_>>()
    );
    assert_eq!(pairs.len(), 4, "expected 4 consecutive pairs");

    let mut orbits = Vec::new();
    for pair in &pairs {
        if pair.index_gap != 1 {
            continue;
        }
        let set = enumerate_orbits_zero_dim(&rf, &points, pair, 4096, &params).unwrap();
        eprintln!(
            "pair ({},{}): {} orbits, signs {:?}, warnings {:?}",
            pair.upper,
            pair.lower,
            set.orbits.len(),
            set.orbits.iter().map(|o| o.sign).collect::<Vec<_>>(),
            set.warnings
        );
        assert_eq!(set.orbits.len(), 2, "two orbits per gap-1 pair");
        let signs: Vec<i64> = set.orbits.iter().map(|o| o.sign).collect();
        assert!(
            signs == vec![1, -1] || signs == vec![-1, 1],
            "orbit signs must be opposite units, got {signs:?}"
        );
        orbits.extend(set.orbits);
    }

    let complex = build_morse_complex(&points, &orbits, 2, Coefficients::Integer).unwrap();
    let h = homology_ranks(&complex);
    let ranks: Vec<usize> = h.iter().map(|g| g.free_rank).collect();
    assert_eq!(ranks, vec![1, 2, 1], "torus Betti numbers");
    assert!(h.iter().all(|g| g.torsion.is_empty()));
}

#[test]
fn torus_duality() {
    let (rf, halfwidths) = torus_setup();
    let params = OrbitParams::default();

    let mut complexes = Vec::new();
    let mut point_sets = Vec::new();
    for negate in [false, true] {
        let rfun = if negate { rf.negated() } else { rf.clone() };
        let points = find_critical_points(&rfun, 400, 0, &halfwidths).unwrap();
        let reach = reachability(&rfun, &points, &params).unwrap();
        let pairs = consecutive_pairs(&points, |a, b| reach[a][b]);
        let mut orbits = Vec::new();
        for pair in pairs.iter().filter(|p| p.index_gap == 1) {
            orbits.extend(
                enumerate_orbits_zero_dim(&rfun, &points, pair, 4096, &params)
                    .unwrap()
                    .orbits,
            );
        }
        complexes.push(build_morse_complex(&points, &orbits, 2, Coefficients::Integer).unwrap());
        point_sets.push(points);
    }
    let report = duality_transpose_check(
        &complexes[0],
        &point_sets[0],
        &complexes[1],
        &point_sets[1],
    )
    .unwrap();
    assert!(report.holds);
}
