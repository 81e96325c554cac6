//! Mod-2 Pontryagin ring tables for loop spaces of catalog manifolds.

use morseflow::loop_homology::{make_ring, multiply, RingElement};

fn main() {
    for tag in ["sphere(3)", "product(sphere(2),sphere(2))", "cpn(2)"] {
        let ring = make_ring(tag, 12).unwrap();
        let names: Vec<&str> = ring.basis.iter().map(|m| m.name.as_str()).collect();
        println!("{tag}: basis to degree 12: {names:?}");
        println!("  Poincaré counts: {:?}", ring.poincare_counts());
    }

    let ring = make_ring("product(sphere(2),sphere(2))", 12).unwrap();
    let a = RingElement::monomial(ring.generator(1).unwrap());
    let b = RingElement::monomial(ring.generator(2).unwrap());
    let ab = multiply(&ring, &a, &b).unwrap();
    println!("a·b = {:?}", ring.render(&ab));
    let s = a.add(&b);
    let sq = multiply(&ring, &s, &s).unwrap();
    println!("(a+b)² = {:?}  (cross terms vanish in characteristic 2)", ring.render(&sq));

    let cp = make_ring("cpn(2)", 12).unwrap();
    let u = RingElement::monomial(cp.generator(1).unwrap());
    println!("u² in cpn(2) is zero: {}", multiply(&cp, &u, &u).unwrap().is_zero());
}
