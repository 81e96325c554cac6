//! Property tests for the expression layer: exact derivatives against
//! central differences, and print/parse round-trips.

use morseflow::expr::{parse, Expr};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(Expr::Const),
        (0usize..3).prop_map(Expr::Var),
    ]
}

fn expr_strategy() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 32, 4, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), 1i32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
            inner
                .clone()
                .prop_map(|a| Expr::Unary(morseflow::expr::UnaryFn::Sin, Box::new(a))),
            inner.prop_map(|a| Expr::Unary(morseflow::expr::UnaryFn::Cos, Box::new(a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivative_matches_central_difference(
        e in expr_strategy(),
        x in prop::collection::vec(-1.5..1.5f64, 3),
        var in 0usize..3,
    ) {
        let d = e.differentiate(var);
        let Ok(exact) = d.evaluate(&x) else { return Ok(()) };
        let h = 1e-5;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[var] += h;
        xm[var] -= h;
        let (Ok(fp), Ok(fm)) = (e.evaluate(&xp), e.evaluate(&xm)) else {
            return Ok(());
        };
        let numeric = (fp - fm) / (2.0 * h);
        if !exact.is_finite() || !numeric.is_finite() {
            return Ok(());
        }
        // third-derivative truncation error scales with the value size
        let scale = 1.0 + exact.abs().max(fp.abs()).max(fm.abs());
        prop_assert!(
            (exact - numeric).abs() <= 1e-4 * scale,
            "exact {exact} vs numeric {numeric} for {e}"
        );
    }

    #[test]
    fn print_parse_round_trip(e in expr_strategy()) {
        let printed = format!("{e}");
        let reparsed = parse(&printed, 3).unwrap();
        // round-trip compared by evaluation on a fixed grid
        for p in [[0.3, -0.7, 1.1], [0.0, 0.5, -0.2], [-1.0, 1.0, 0.25]] {
            match (e.evaluate(&p), reparsed.evaluate(&p)) {
                (Ok(a), Ok(b)) => {
                    if a.is_finite() && b.is_finite() {
                        prop_assert!(
                            (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                            "{printed}: {a} vs {b}"
                        );
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{printed}: {a:?} vs {b:?}"),
            }
        }
    }
}
