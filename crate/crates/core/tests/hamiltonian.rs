use isaacs_core::hamiltonian::{h_minus, h_plus, nonlocal_hessian_oracle, nonlocal_operator, TestField};
use isaacs_core::model::PROBLEM_PRESETS;
use isaacs_core::{build_problem, build_quadrature, GameProblem, JumpQuadrature, LevyMeasureSpec, PresetRef, ProblemDescription};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn setup(name: &str) -> (GameProblem, JumpQuadrature) {
    let p = build_problem(&ProblemDescription::preset(name)).unwrap();
    let q = build_quadrature(&p.levy, 1e-3, 64).unwrap();
    (p, q)
}

fn power_jump() -> (GameProblem, JumpQuadrature) {
    let mut d = ProblemDescription::preset("null");
    d.jump = Some(PresetRef::new("linear", &[0.7]));
    d.levy = Some(LevyMeasureSpec::Power { intensity: 1.0, alpha: 1.2, radius: 1.5, symmetric: true });
    let p = build_problem(&d).unwrap();
    let q = build_quadrature(&p.levy, 1e-3, 64).unwrap();
    (p, q)
}

const GAME_PRESETS: [&str; 5] = ["tug-of-war-drift", "separable", "separable-2d", "coupled", "suboptimal-drift"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn maximin_below_minimax(
        which in 0usize..GAME_PRESETS.len(),
        x in prop::array::uniform2(-4.0f64..4.0),
        q in prop::array::uniform2(-3.0f64..3.0),
        a in prop::array::uniform2(-2.0f64..2.0),
        freq in 0.2f64..2.0,
    ) {
        let (p, quad) = setup(GAME_PRESETS[which]);
        let d = p.dim;
        let qv = DVector::from_column_slice(&q[..d]);
        let am = DMatrix::from_diagonal(&DVector::from_column_slice(&a[..d]));
        let field = TestField::Sine { freq };
        let lo = h_minus(&p, &quad, 0.5, &x[..d], &qv, &am, &field).value;
        let hi = h_plus(&p, &quad, 0.5, &x[..d], &qv, &am, &field).value;
        prop_assert!(lo <= hi + 1e-12, "{lo} > {hi}");
    }

    #[test]
    fn hamiltonians_are_monotone_in_hessian(
        which in 0usize..GAME_PRESETS.len(),
        x in prop::array::uniform2(-4.0f64..4.0),
        q in prop::array::uniform2(-3.0f64..3.0),
        a in prop::array::uniform2(-2.0f64..2.0),
        bump in prop::array::uniform2(0.0f64..2.0),
    ) {
        let (p, quad) = setup(GAME_PRESETS[which]);
        let d = p.dim;
        let qv = DVector::from_column_slice(&q[..d]);
        let a1 = DMatrix::from_diagonal(&DVector::from_column_slice(&a[..d]));
        let a2 = &a1 + DMatrix::from_diagonal(&DVector::from_column_slice(&bump[..d]));
        let field = TestField::Quadratic(vec![0.5; d]);
        for h in [h_plus, h_minus] {
            let v1 = h(&p, &quad, 0.1, &x[..d], &qv, &a1, &field).value;
            let v2 = h(&p, &quad, 0.1, &x[..d], &qv, &a2, &field).value;
            prop_assert!(v1 <= v2 + 1e-12);
        }
    }

    #[test]
    fn nonlocal_vanishes_on_affine_fields(
        preset in 0..PROBLEM_PRESETS.len(),
        x in prop::array::uniform2(-5.0f64..5.0),
        slope in prop::array::uniform2(-3.0f64..3.0),
        c in -2.0f64..2.0,
    ) {
        let (p, quad) = setup(PROBLEM_PRESETS[preset]);
        let d = p.dim;
        let field = TestField::Affine { a: slope[..d].to_vec(), c };
        for (y, z) in p.control_pairs() {
            let v = nonlocal_operator(&p, &quad, 0.3, &x[..d], &field, y, z);
            prop_assert!(v.abs() <= 1e-10, "{}: {v}", p.name);
        }
    }
}

#[test]
fn nonlocal_matches_hessian_oracle() {
    let cases = [setup("pure-jump"), setup("modulated-jump"), setup("separable-2d"), power_jump()];
    for (p, quad) in &cases {
        let d = p.dim;
        let fields = [
            TestField::Quadratic(vec![0.8; d]),
            TestField::Sine { freq: 1.3 },
            TestField::GaussianBump { center: vec![0.2; d], width: 0.9 },
        ];
        for field in &fields {
            for x in [-1.1, 0.0, 0.45, 2.0] {
                let xs = vec![x; d];
                let direct = nonlocal_operator(p, quad, 0.0, &xs, field, 0.0, 0.0);
                let oracle = nonlocal_hessian_oracle(p, quad, 0.0, &xs, field, 0.0, 0.0);
                assert!((direct - oracle).abs() <= 1e-6, "{} {field:?} x={x}: {direct} vs {oracle}", p.name);
            }
        }
    }
}

#[test]
fn sampled_gap_vanishes_on_separable_and_not_on_coupled() {
    use isaacs_core::hamiltonian::{sampled_isaacs_gap, GapSampling};
    let opts = GapSampling { samples: 1000, seed: 42, state_radius: 5.0, jet_radius: 5.0 };
    for name in ["separable", "separable-2d", "tug-of-war-drift", "sine-diffusion"] {
        let (p, q) = setup(name);
        assert!(sampled_isaacs_gap(&p, &q, &opts).unwrap() <= 1e-12, "{name}");
    }
    let (p, q) = setup("coupled");
    let gap = sampled_isaacs_gap(&p, &q, &opts).unwrap();
    assert!(gap > 1.0);
    assert_eq!(gap, sampled_isaacs_gap(&p, &q, &opts).unwrap());
}
