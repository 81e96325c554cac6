//! Expression parsing, exact differentiation, and evaluation.

use morseflow::expr::parse;

fn main() {
    let f = parse("sin(x1) * exp(x2) + x1^3 / 2", 2).unwrap();
    println!("f      = {f}");
    let dx1 = f.differentiate(0);
    let dx2 = f.differentiate(1);
    println!("df/dx1 = {dx1}");
    println!("df/dx2 = {dx2}");

    let at = [0.5, -1.0];
    println!("f({at:?})      = {:.6}", f.evaluate(&at).unwrap());
    println!("df/dx1({at:?}) = {:.6}", dx1.evaluate(&at).unwrap());

    // domain failures carry the offending subexpression
    let g = parse("sqrt(x1 - 2)", 1).unwrap();
    println!("sqrt domain error: {}", g.evaluate(&[0.0]).unwrap_err());
}
