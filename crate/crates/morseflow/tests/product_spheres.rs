//! End-to-end check on S² x S² in R⁶ with f = x3 + x6: critical points,
//! consecutive pairs, one-dimensional moduli with swept-factor labels,
//! and the extended complex over the product Pontryagin ring.

use std::collections::BTreeMap;

use morseflow::critical::{consecutive_pairs, find_critical_points};
use morseflow::expr::parse;
use morseflow::flow::{reachability, sample_moduli, OrbitParams};
use morseflow::geometry::{Catalog, ImplicitManifold, RestrictedFunction};
use morseflow::loop_homology::{assign_loop_class, build_extended_complex, make_ring};

#[test]
fn product_spheres_extended_complex() {
    let catalog = Catalog::Product(vec![Catalog::Sphere(2), Catalog::Sphere(2)]);
    let halfwidths = catalog.bounding_halfwidths();
    let manifold = ImplicitManifold::from_catalog(catalog).unwrap();
    let f = parse("x3 + x6", 6).unwrap();
    let rf = RestrictedFunction::new(f, manifold);

    let points = find_critical_points(&rf, 400, 0, &halfwidths).unwrap();
    assert_eq!(points.len(), 4);
    let indices: Vec<usize> = points.iter().map(|p| p.index).collect();
    assert_eq!(indices, vec![4, 2, 2, 0]);

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
    assert_eq!(pairs.len(), 4, "max-min pair must be excluded");
    assert!(pairs.iter().all(|p| p.index_gap == 2));

    let ring = make_ring("product(sphere(2),sphere(2))", 12).unwrap();
    let mut entries = BTreeMap::new();
    for pair in &pairs {
        let sample = sample_moduli(&rf, &points, pair, 64, 0, &params).unwrap();
        eprintln!(
            "pair ({},{}): dim {}, components {}, label {:?}, variance {:?}, hits {}",
            pair.upper,
            pair.lower,
            sample.dimension,
            sample.component_count,
            sample.swept_label,
            sample.factor_variance,
            sample.hit_parameters.len()
        );
        assert_eq!(sample.dimension, 1);
        assert_eq!(sample.component_count, 1);
        assert!(sample.swept_label.is_some());
        entries.insert(
            (pair.upper, pair.lower),
            assign_loop_class(&sample, &ring).unwrap(),
        );
    }
    // the two saddles must be hit through opposite factors from above and
    // below: d'(max) = b Q1 + a Q2, d'(Q1) = a R, d'(Q2) = b R (up to the
    // a<->b relabeling fixed by which saddle sorts first)
    let rendered: BTreeMap<(usize, usize), Vec<String>> = entries
        .iter()
        .map(|(&k, v)| (k, ring.render(v)))
        .collect();
    eprintln!("classes: {rendered:?}");
    assert_ne!(rendered[&(0, 1)], rendered[&(0, 2)]);
    assert_ne!(rendered[&(1, 3)], rendered[&(2, 3)]);
    assert_ne!(rendered[&(0, 1)], rendered[&(1, 3)]);

    let ec = build_extended_complex(&points, &entries, &ring).unwrap();
    assert_eq!(ec.levels.len(), 3);
    assert_eq!(ec.composites_checked, 1);
}
