use lindods::delay::DelayRelation;
use lindods::expr::{add, call, mul, num, sub, Expr, Func};
use proptest::prelude::*;

/// Random smooth trees in x: no poles and no branch cuts on the reals.
fn tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::var("x")),
        (-3.0f64..3.0).prop_map(|v| num((v * 8.0).round() / 8.0)),
    ];
    leaf.prop_recursive(5, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| mul(a, b)),
            inner.clone().prop_map(|a| call(Func::Sin, a)),
            inner.clone().prop_map(|a| call(Func::Cos, a)),
            inner.clone().prop_map(|a| call(Func::Atan, a)),
            inner.clone().prop_map(|a| call(Func::Exp, call(Func::Sin, a))),
            inner.prop_map(|a| call(Func::Ln, add(num(1.0), mul(a.clone(), a)))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn derivative_matches_central_difference(e in tree(), x0 in -2.0f64..2.0) {
        let d = e.differentiate("x");
        let h = 1e-5;
        let (fp, fm) = (e.at(x0 + h).unwrap(), e.at(x0 - h).unwrap());
        let fd = (fp - fm) / (2.0 * h);
        let exact = d.at(x0).unwrap();
        prop_assume!(fd.is_finite() && exact.is_finite());
        let scale = 1.0 + exact.abs() + fp.abs();
        prop_assert!((fd - exact).abs() <= 1e-4 * scale, "{e}: {exact} vs {fd}");
    }

    #[test]
    fn printing_is_idempotent(e in tree(), x0 in -2.0f64..2.0) {
        let printed = e.to_string();
        let back = Expr::parse(&printed, &["x"]).unwrap();
        prop_assert_eq!(back.to_string(), printed);
        let (a, b) = (e.at(x0).unwrap(), back.at(x0).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn simplify_preserves_values(e in tree(), x0 in -2.0f64..2.0) {
        let (a, b) = (e.at(x0).unwrap(), e.simplify().at(x0).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn affine_mesh_is_increasing_and_linked(
        q in prop_oneof![0.6f64..0.95, 1.05f64..2.0],
        tau in 0.1f64..2.0,
        offset in 0.2f64..3.0,
        n in 1usize..30,
    ) {
        let rel = DelayRelation::affine(q, tau).unwrap();
        let fixed = tau / (q - 1.0);
        let x0 = if q > 1.0 { fixed - offset } else { fixed + offset };
        let mesh = rel.build_mesh(x0, n).unwrap();
        prop_assert_eq!(mesh.intervals(), n);
        let pts = mesh.points();
        for w in pts.windows(2) {
            prop_assert!(w[0] < w[1]);
            let back = rel.delayed_point(w[1]).unwrap();
            prop_assert!((back - w[0]).abs() <= 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn general_delay_mesh_agrees_with_affine(q in 1.1f64..2.0, tau in 0.1f64..1.0, n in 1usize..12) {
        let g = Expr::parse(&format!("{q}*x - {tau}"), &["x"]).unwrap();
        let general = DelayRelation::general(g).unwrap();
        let affine = DelayRelation::affine(q, tau).unwrap();
        let x0 = tau / (q - 1.0) - 1.0;
        let a = general.build_mesh(x0, n).unwrap();
        let b = affine.build_mesh(x0, n).unwrap();
        for (u, v) in a.points().iter().zip(b.points()) {
            prop_assert!((u - v).abs() <= 1e-10 * v.abs().max(1.0));
        }
    }
}
