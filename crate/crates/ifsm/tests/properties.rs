//! Property tests for the structural invariants.

use proptest::prelude::*;

use ifsm::chaos::{empirical_measure, sample_orbit};
use ifsm::expr::{parse_expression, BinOp, ExpressionAst, Func};
use ifsm::grid::{DiscreteFunction, DiscreteMeasure, Grid, InterpMode};
use ifsm::holonomy::{disintegrate, empirical_holonomic, holonomy_residual, HolonomicMeasure};
use ifsm::model::{
    AffineMap, DensityFamily, DomainBox, MapFamily, ParameterSet, Potential, SystemSpec, Weighting,
};
use ifsm::operator::{assemble_transfer, duality_residual, TransferMatrix};

fn e2_spec() -> SystemSpec {
    SystemSpec::new(
        DomainBox::unit_interval(),
        ParameterSet::uniform(vec!["0".into(), "1".into()]).unwrap(),
        MapFamily::Affine(vec![
            AffineMap::new_1d(0.5, 0.0),
            AffineMap::new_1d(0.5, 0.5),
        ]),
        Weighting::Potential(Potential::Expr(parse_expression("exp(x)").unwrap())),
    )
    .unwrap()
}

fn e2_operator(nodes: usize) -> (SystemSpec, Grid, TransferMatrix) {
    let spec = e2_spec();
    let grid = Grid::uniform(spec.domain().clone(), nodes).unwrap();
    let b = assemble_transfer(&spec, &grid, InterpMode::Multilinear).unwrap();
    (spec, grid, b)
}

fn arb_expr() -> impl Strategy<Value = ExpressionAst> {
    let leaf = prop_oneof![
        (-3.0..3.0f64).prop_map(ExpressionAst::Const),
        Just(ExpressionAst::Var(0)),
        Just(ExpressionAst::Var(1)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExpressionAst::Bin(
                BinOp::Add,
                Box::new(a),
                Box::new(b)
            )),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExpressionAst::Bin(
                BinOp::Sub,
                Box::new(a),
                Box::new(b)
            )),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExpressionAst::Bin(
                BinOp::Mul,
                Box::new(a),
                Box::new(b)
            )),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExpressionAst::Bin(
                BinOp::Div,
                Box::new(a),
                Box::new(b)
            )),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExpressionAst::Bin(
                BinOp::Pow,
                Box::new(a),
                Box::new(b)
            )),
            inner.clone().prop_map(|a| ExpressionAst::Neg(Box::new(a))),
            inner
                .clone()
                .prop_map(|a| ExpressionAst::Call(Func::Sin, Box::new(a))),
            inner
                .clone()
                .prop_map(|a| ExpressionAst::Call(Func::Cos, Box::new(a))),
            inner
                .clone()
                .prop_map(|a| ExpressionAst::Call(Func::Abs, Box::new(a))),
            inner
                .clone()
                .prop_map(|a| ExpressionAst::Call(Func::Exp, Box::new(a))),
            inner.prop_map(|a| ExpressionAst::Call(Func::Ln, Box::new(a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Printing and reparsing an arbitrary tree keeps its value (or its
    /// undefinedness) at every sample point.
    #[test]
    fn display_round_trip_is_equivalent(ast in arb_expr(), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let printed = ast.to_string();
        let reparsed = parse_expression(&printed)
            .unwrap_or_else(|e| panic!("`{printed}` failed to reparse: {e}"));
        match (ast.eval([x, y]), reparsed.eval([x, y])) {
            (Ok(a), Ok(b)) => prop_assert!(
                (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                "`{printed}`: {a} vs {b}"
            ),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "`{printed}` disagrees: {a:?} vs {b:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The Markov operator is the literal transpose: the two pairings agree
    /// to rounding for any function/measure pair.
    #[test]
    fn duality_residual_vanishes(seed in 0u64..1000) {
        let (_, grid, b) = e2_operator(96);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = DiscreteFunction::new(
            grid.clone(),
            (0..grid.len()).map(|_| rng.gen::<f64>()).collect(),
        ).unwrap();
        let m = DiscreteMeasure::new(
            grid.clone(),
            (0..grid.len()).map(|_| rng.gen::<f64>()).collect(),
        ).unwrap().normalized().unwrap();
        prop_assert!(duality_residual(&b, &f, &m).unwrap() < 1e-12);
    }

    /// Positivity and monotonicity of the discretized transfer operator.
    #[test]
    fn transfer_preserves_order(seed in 0u64..1000) {
        let (_, grid, b) = e2_operator(64);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
        let g: Vec<f64> = f.iter().map(|v| v + rng.gen::<f64>()).collect();
        let bf = b.apply(&DiscreteFunction::new(grid.clone(), f).unwrap()).unwrap();
        let bg = b.apply(&DiscreteFunction::new(grid.clone(), g).unwrap()).unwrap();
        for (a, c) in bf.values().iter().zip(bg.values()) {
            prop_assert!(*a >= 0.0 && a <= c);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Empirical holonomic residual obeys the telescoping bound for any
    /// seed, orbit length, and (bounded) test function.
    #[test]
    fn telescoping_bound_holds(
        seed in 0u64..500,
        n in 1usize..3000,
        amp in 0.1..5.0f64,
        freq in 1u32..6,
    ) {
        let spec = e2_spec();
        let grid = Grid::uniform(spec.domain().clone(), 64).unwrap();
        let orbit = sample_orbit(&spec, [0.3, 0.0], n, seed).unwrap();
        let measure = empirical_holonomic(&orbit, &grid, spec.n_params()).unwrap();
        let f = DiscreteFunction::from_fn(grid, |p| {
            amp * (freq as f64 * p[0]).sin()
        }).unwrap();
        let r = holonomy_residual(&measure, &spec, std::slice::from_ref(&f)).unwrap();
        let bound = 2.0 * f.sup_norm() / n as f64;
        prop_assert!(r <= bound * (1.0 + 1e-12) + 1e-15, "{r} > {bound}");
    }

    /// Disintegrating and recombining reproduces the joint weights.
    #[test]
    fn disintegration_round_trip(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::uniform(DomainBox::unit_interval(), 32).unwrap();
        let n_params = 3;
        let weights: Vec<f64> = (0..grid.len() * n_params)
            .map(|_| if rng.gen::<f64>() < 0.2 { 0.0 } else { rng.gen::<f64>() })
            .collect();
        let m = HolonomicMeasure::from_weights(grid, n_params, weights).unwrap();
        let back = disintegrate(&m).recombine().unwrap();
        for (a, b) in back.weights().iter().zip(m.weights()) {
            prop_assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
        }
    }

    /// Histograms are reproducible and normalized for every seed.
    #[test]
    fn histogram_mass_and_determinism(seed in 0u64..200, n in 10usize..5000) {
        let spec = e2_spec();
        let a = sample_orbit(&spec, [0.6, 0.0], n, seed).unwrap();
        let b = sample_orbit(&spec, [0.6, 0.0], n, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let ha = empirical_measure(&a, 3, 0).unwrap();
        let hb = empirical_measure(&b, 3, 0).unwrap();
        prop_assert_eq!(ha.weights(), hb.weights());
        let total: f64 = ha.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

/// The density form `J(x,θ) = ψ(τ_θ(x))` and the potential form of the
/// same system produce identical q-mass everywhere.
#[test]
fn potential_and_density_forms_agree() {
    let by_potential = e2_spec();
    let by_density = by_potential
        .clone()
        .with_weighting(Weighting::Density(DensityFamily::Expr(vec![
            parse_expression("exp(x/2)").unwrap(),
            parse_expression("exp(x/2 + 0.5)").unwrap(),
        ])))
        .unwrap();
    let grid = Grid::uniform(by_potential.domain().clone(), 257).unwrap();
    for i in 0..grid.len() {
        let x = grid.node(i);
        let a = by_potential.q_mass(x).unwrap();
        let b = by_density.q_mass(x).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }
}
